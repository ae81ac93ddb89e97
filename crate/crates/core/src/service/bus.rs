use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;

use serde_json::Value as Json;

/// Topic-based publish side of a message broker.
pub trait MessageBus: Send + Sync {
    fn publish(&self, topic: &str, message: &Json);
}

/// In-process broker: every subscriber of a topic receives every message
/// published after it subscribed, in publish order.
#[derive(Debug, Default)]
pub struct InProcessBus {
    topics: Mutex<HashMap<String, Vec<Sender<Json>>>>,
}

impl InProcessBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, topic: &str) -> Receiver<Json> {
        let (tx, rx) = channel();
        self.topics
            .lock()
            .expect("bus lock")
            .entry(topic.to_string())
            .or_default()
            .push(tx);
        rx
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        self.topics.lock().expect("bus lock").get(topic).map_or(0, Vec::len)
    }
}

impl MessageBus for InProcessBus {
    fn publish(&self, topic: &str, message: &Json) {
        let mut topics = self.topics.lock().expect("bus lock");
        if let Some(subs) = topics.get_mut(topic) {
            subs.retain(|tx| tx.send(message.clone()).is_ok());
            if subs.is_empty() {
                topics.remove(topic);
            }
        }
    }
}

/// Topic carrying inbound user messages.
pub const REQUESTS_TOPIC: &str = "requests";

/// Topic carrying the response events of one session.
pub fn responses_topic(session_id: &str) -> String {
    format!("responses.{session_id}")
}

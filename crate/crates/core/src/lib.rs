pub mod agent;
pub mod bench;
pub mod demo;
pub mod exec;
pub mod kgraph;
pub mod lm;
pub mod numeric;
pub mod par;
pub mod service;
pub mod tools;
pub mod tuning;

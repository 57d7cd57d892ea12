pub mod ca;
pub mod config;
pub mod corpus;
pub mod lexicon;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod tabulate;
pub mod report;
pub mod synth;

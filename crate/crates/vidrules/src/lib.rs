pub mod cli;
pub mod http;
pub mod ingest;
pub mod project;
pub mod run;
pub mod synth;

pub mod agents;
pub mod cartpole;
pub mod dataset;
pub mod encoder;
pub mod experiment;
pub mod net;
pub mod rng;

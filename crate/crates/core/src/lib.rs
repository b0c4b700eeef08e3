pub mod channel;
pub mod datagen;
pub mod metrics;
pub mod models;
pub mod nn;
mod par;
pub mod rng;
pub mod specfun;

pub mod clock;
pub mod experiment;
pub mod fedavg;
pub mod metrics;
pub mod partition;
pub mod peer;
pub mod registry;
pub mod trainer;
pub mod weights;

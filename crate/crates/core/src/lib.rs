pub mod env;
pub mod policy;
pub mod remote;
pub mod seed;
pub mod testing;
pub mod trajectory;
pub mod reward;
pub mod datagen;
pub mod metrics;
pub mod planners;
pub mod harness;

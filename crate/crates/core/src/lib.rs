pub mod behavior;
pub mod decision;
pub mod dynamics;
pub mod harness;
pub mod planner;
pub mod prediction;
pub mod verifier;
pub mod world;

pub mod behavior;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod newts;
pub mod prompt;
pub mod rng;
pub mod scorers;
pub mod steering;

pub use behavior::{Behavior, BehaviorKind, TopicId};
pub use error::{Error, Result};

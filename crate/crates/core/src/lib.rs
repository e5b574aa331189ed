pub mod corpus;
pub mod detector;
pub mod error;
pub mod evalreport;
pub mod feedback;
pub mod jsonl;
pub mod models;
pub mod nlu_sim;
pub mod numeric;
pub mod seeding;

pub use error::{Error, Result};

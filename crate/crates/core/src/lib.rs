//! Multi-objective deep Q-learning for search traffic allocation.
//!
//! The pipeline has three parts:
//!
//! - [`moq`]: one Q-head per business objective (clicks, orders) on a shared
//!   input trunk, trained jointly on the summed TD loss.
//! - [`dfm`]: a cross-entropy-method search over fusion weights that combine
//!   the heads' Q-values into a single gain, scored by AUC or by rollouts.
//! - [`pda`]: cold-start data built from logs by re-positioning items and
//!   rescaling their predicted CTR, blended with real traffic on a schedule.
//!
//! [`env`] is a position-biased search-session simulator that stands in for
//! live users, and [`harness`] wires everything into reproducible
//! experiments. [`mdp`], [`qnet`] and [`rng`] hold the shared building blocks.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod dfm;
pub mod env;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod moq;
pub mod pda;
pub mod qnet;
pub mod rng;

pub use error::{Error, Result};

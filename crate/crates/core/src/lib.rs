//! Regularized M-estimation with possibly nonconvex losses and penalties,
//! solved by composite gradient descent over a convex side constraint.

pub mod error;
pub mod experiments;
pub mod io;
pub mod loss;
pub mod penalty;
pub mod plot;
pub mod simulate;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use loss::Loss;
pub use penalty::{Penalty, PenaltyKind};

//! Forgetting-mitigation strategies for sequential training.
//!
//! * plain finetuning — no extra machinery, the baseline failure mode;
//! * [`ReservoirBuffer`] — uniform reservoir sampling over every row ever
//!   offered, plus replay mixing into current batches;
//! * [`agem_project`] — projects the current gradient so it cannot point
//!   against the buffer's reference gradient;
//! * [`EwcState`] — quadratic penalty anchoring parameters that mattered
//!   for earlier experiences, with squared-gradient importance estimates.
//!
//! Buffers store *raw* rows. Replayed rows are re-normalized with the
//! normalizer state current at replay time, so replay always matches the
//! representation the model is being trained in.

mod agem;
mod ewc;
mod reservoir;

pub use agem::{agem_project, ProjectionOutcome};
pub use ewc::EwcState;
pub use reservoir::{ReservoirBuffer, ReservoirState};

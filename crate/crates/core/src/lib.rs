//! Sum-of-ranked-range learning objectives.
//!
//! The average of a ranked range (AoRR) discards the `m` largest individual
//! losses and averages the next `k - m`; the top-k multi-label (TKML) loss is
//! the `(k+1)`-th largest label gap of a sample. Both are differences of
//! convex functions and are trained with [`optimizer::dca_minimize`] and
//! [`optimizer::train_tkml`].

pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod ranked_range;
pub mod tkml;

pub use error::{Result, SorrError};
pub use losses::{AggregateSpec, IndividualLoss};
pub use model::{LinearModel, MultiLabelModel};
pub use optimizer::{DcaConfig, DcaState};
pub use ranked_range::{RangeSpec, ValueSet};
pub use tkml::LabelSet;

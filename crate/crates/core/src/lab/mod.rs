//! Simulation experiments: analyst-induced interference on a toy potential-outcome table,
//! selection-driven false positives, and train/test stability of topic models.

pub mod aisv;
pub mod overfit;
pub mod stability;

pub use aisv::{discover_categories, enumerate_aisv, AisvReport, DesignKind, Discovery, PotentialOutcomeTable, Witness};
pub use overfit::{overfit_demo, OverfitConfig, OverfitReport};
pub use stability::{fit_reference, run_stability, StabilityConfig, StabilityReport, StartMode};

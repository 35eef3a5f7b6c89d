//! Statistical protocol for judging scores as crisis detectors.

pub mod crisis;
pub mod effect;
pub mod hypothesis;
pub mod nulls;
pub mod overlay;
pub mod separability;
pub mod walkforward;

pub use crisis::{default_crises, load_crises, Category, CrisisWindow, IndexedWindow};
pub use effect::{block_bootstrap_ci, cliffs_delta, cohens_d};
pub use hypothesis::{friedman_nemenyi, holm, nemenyi_cd, permutation_test, welch};
pub use nulls::{null_models, NullReport};
pub use overlay::{overlay_backtest, OverlayResult};
pub use separability::{crisis_separability, EffectSizeResult, EvalOptions, EvalReport};
pub use walkforward::{walk_forward, HpoGrid, Strategy, WalkForwardConfig, WalkForwardResult};

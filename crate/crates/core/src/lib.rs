//! Sparse estimation of Cox proportional hazards models by minimizing an
//! approximated information criterion (MIC).
//!
//! The l0 penalty of BIC is smoothed with `tanh(a gamma^2)` and coefficients
//! are reparameterized as `beta = gamma tanh(a gamma^2)`, which keeps the
//! objective smooth in `gamma` while producing exact zeros in `beta`. The
//! objective is minimized by simulated annealing followed by BFGS, and Wald
//! inference on `gamma` covers selected and unselected covariates alike.
//!
//! ```no_run
//! use coxmic::{data::load_csv_with_recodes, fit::{fit, MicConfig}};
//!
//! let recodes = vec!["status=2:1,*:0".parse()?, "sex=f:1,*:0".parse()?];
//! let drop = vec!["id".to_string()];
//! let ds = load_csv_with_recodes("data/pbc.csv", "time", "status", &drop, &recodes)?;
//! let result = fit(&ds, &MicConfig::default())?;
//! println!("selected: {:?}, min Q = {:.4}", result.selected_names(), result.min_q);
//! # Ok::<(), coxmic::MicError>(())
//! ```

pub mod data;
pub mod error;
pub mod fit;
pub mod inference;
pub mod mic;
pub mod optim;
pub mod partial;
pub mod path;
pub mod sim;

pub use data::SurvivalDataset;
pub use error::{MicError, Result};
pub use fit::{fit, FitResult, MicConfig, StartPolicy};
pub use mic::{Criterion, MicPenalty};
pub use optim::OptimizerConfig;

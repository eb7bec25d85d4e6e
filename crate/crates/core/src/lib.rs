//! Boolean-weight reservoir readouts trained by coordinate descent.
//!
//! A reservoir is driven by an input signal and its squared states form a
//! nonnegative `T x N` matrix `E`. The readout `y = E w` uses Boolean
//! weights `w`, and training flips one weight per epoch, keeping the flip
//! only when it lowers the training error. The crate also provides the
//! quantities used to analyse that descent on small instances.
//!
//! ```
//! use boolcd::{run_descent, BooleanWeights, DescentConfig, Objective, SelectorPolicy, StateMatrix};
//!
//! let e = StateMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
//! let obj = Objective::new(e, vec![1.0, 0.0])?;
//! let cfg = DescentConfig::new(SelectorPolicy::greedy(1));
//! let trace = run_descent(&obj, &BooleanWeights::zeros(2), &cfg)?;
//! assert_eq!(trace.final_weights.bits(), &[true, false]);
//! assert_eq!(trace.final_error(), 0.0);
//! # Ok::<(), boolcd::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod descent;
pub mod error;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod reservoir;
pub mod tasks;
pub mod theory;

pub use bench::{fit_exponential, fit_power_law, run_sweep, FitParams, FitResult, SweepConfig, SweepReport};
pub use descent::{
    is_local_minimizer, run_descent, run_descent_monitored, run_ensemble, select_coordinate, step,
    DescentConfig, DescentTrace, Ensemble, EnsembleSummary, EpochRecord, PolicyKind, Selector,
    SelectorPolicy, StepOutcome, StopReason,
};
pub use error::{Error, Result};
pub use objective::{
    default_eta, grad_phi, lambda_max, mse, phi_spin, readout, round_to_hypercube, BooleanWeights,
    LambdaMax, Objective, SpinVector, TheoryConstants,
};
pub use reservoir::{drive_reservoir, random_state_matrix, EntryDistribution, Reservoir, ReservoirConfig, StateMatrix};
pub use tasks::{make_task, mackey_glass, mackey_glass_task, MackeyGlass, TargetScaling, TaskData, TaskSpec};
pub use theory::{
    estimate_beta, kappa, local_minimizers, rho, BetaEstimate, Centering, ContractionInputs,
    KappaReport, RhoReport, SimplexMode, SmallInstance,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/descent.md")]
    mod descent {}
    #[doc = include_str!("../../../book/src/reservoir.md")]
    mod reservoir {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

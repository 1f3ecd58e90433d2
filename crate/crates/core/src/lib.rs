//! Conformal prediction with data-driven model selection.
//!
//! A [`select::Session`] holds one calibration set scored by a finite class
//! of pretrained models. From it the crate builds the selection baselines
//! and the selection-aware sets, the latter computed exactly through
//! piecewise-linear algebra on the response line. [`oracle`] re-evaluates
//! the raw set definitions on a grid for testing.

pub mod calib;
pub mod error;
pub mod loss;
pub mod oracle;
pub mod pwl;
pub mod region;
pub mod scores;
pub mod select;

pub use calib::{empirical_quantile, CalibrationScores, LooProfile, LooVariant};
pub use error::{ModselError, Result};
pub use loss::{EvalPoints, LossContext};
pub use pwl::{tol_eq, Intersections, PiecewiseLinearFn};
pub use region::{Interval, PredictionRegion};
pub use scores::{ModelClass, ModelEvaluations, Point, Responses, ScoreFamily, TestProfile};
pub use select::{
    alpha_tilde, CompetingSets, Diagnostics, Method, MethodOptions, MethodOutput, Session, TieBreaker,
    TieRule,
};

//! Offline and online workflows.
//!
//! Offline: per-sensor FPCA and k-means labels, cluster-wise FPCA features,
//! then the penalized mixture regression of standardized `ln TTF`, which
//! yields failure-mode labels and per-mode sensor subsets.
//!
//! Online, at an observation time `t*`: smooth, fit a multivariate basis on
//! the training units still running at `t*`, diagnose the mode by nearest
//! neighbours, then regress `ln TTF` on the mode's scores with a distance
//! weighted lasso and convert the prediction to remaining life.

pub mod cv;
pub mod eval;
pub mod offline;
pub mod online;
pub mod regression;

pub use cv::{cross_validate, CvConfig, CvResult, CvRow};
pub use eval::{relative_error, summarize, ErrorSummary};
pub use offline::{offline_fit, OfflineConfig, OfflineInit, OfflineModel};
pub use online::{
    diagnose, fit_weighted_regression, mode_basis, online_prepare, prepare_diagnosis, DiagnosisContext, OnlineConfig,
    OnlineContext, OnlineModel, TrainSmoothing,
};
pub use regression::{predict_rul, LassoConfig, RegressionModel, RulPrediction};

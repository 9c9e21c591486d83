//! Robust-PCA synthetic control.
//!
//! Estimates the counterfactual trajectory of a treated unit from a panel of
//! donor units in five steps: functional principal component analysis of the
//! pre-intervention curves, K-means selection of a donor pool, a robust PCA
//! decomposition of the donor matrix, non-negative least squares weights on
//! the low-rank component, and counterfactual prediction over the
//! post-intervention horizon. Evaluation protocols (placebos, leave-one-out)
//! and a simulation study are included, plus CSV/JSON export for the CLI.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod export;
pub mod fpca;
pub mod panel;
pub mod rpca;
pub mod sim;
pub mod synth;

pub use cluster::{donor_pool, kmeans, silhouette, tune_k, Clustering, KRow, KTable};
pub use error::{Error, Result};
pub use eval::{
    leave_one_out, placebo_in_space, placebo_in_time, rmspe, EvalReport, LooReport, UnitEval,
};
pub use fpca::{FpcaResult, Kernel, SmoothingConfig};
pub use panel::{from_csv_str, load_panel, validate, Layout, Panel, PanelReport, PanelTable};
pub use rpca::{
    default_hyperparams, rpca_admm, singular_value_threshold, soft_threshold, spectrum_report,
    RpcaConfig, RpcaResult, SpectrumReport,
};
pub use sim::{
    drop_missing, generate_processes, run_simulation_study, SimConfig, StudyRow, StudyTable,
};
pub use synth::{
    fit_weights, kkt_residual, predict_counterfactual, run_pipeline, PipelineResult,
    ResolvedConfig, RpcaOverrides, SynthConfig, SynthFit,
};

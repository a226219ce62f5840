//! Local objectives, hand-written gradients, client updates and metrics.

pub mod logreg;
pub mod metrics;
pub mod mlp;
pub mod objective;

pub use logreg::{loss_and_grad_logreg, LogregObjective, LogregView, SparseLinearModel};
pub use metrics::{evaluate, recall_at_k, top_k, Metric};
pub use mlp::{loss_and_grad_mlp, MlpExample, MlpHead, MlpInput, MlpModel, MlpObjective, MlpView};
pub use objective::{
    client_update_model_delta, grad_check, ClientTrainConfig, ClientUpdate, GradCheckConfig, GradCheckReport, Objective,
};

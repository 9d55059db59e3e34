//! Minimal dense numeric core: forward kernels, a differentiation tape,
//! Adam, L2 regularization and a finite-difference gradient checker.

mod gradcheck;
mod graph;
mod ops;
mod params;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, Probe, REL_FLOOR};
pub use graph::{Fault, Graph, NodeId};
pub use ops::{
    conv1d, dense, dropout, dropout_mask, global_maxpool, maxpool1d, onehot_conv1d, relu, softmax,
    softmax_xent, squared_hinge, Mode,
};
pub use params::{
    adam_step, add_l2, add_l2_grad, decays, AdamHyper, Gradients, ParamEntry, ParamId, ParamKind,
    ParamStore, ParamValues, Tensor,
};

//! Weak part classifiers, sequential coarse-to-fine training, and
//! classification with a single cascade, the implicit ensemble of all
//! cascades, and an explicit enumeration oracle.

mod classify;
mod ensemble;
mod linear;
mod model;
mod pipeline;
mod refine;
pub mod testing;
mod train;

pub use classify::{
    classify_ensemble, classify_oracle, classify_single, instantiation_count, path_enumeration, path_product,
    rank_order, sample_instantiations, OracleMode, RankedClass, VoteResult, ENUMERATION_CAP,
};
pub use ensemble::{
    candidate_regions, train_member, train_node_ensemble, EnsembleConfig, GridShape, NodeEnsemble, WeakClassifier,
};
pub use linear::{svm_objective, train_linear, LinearConfig, LinearFit};
pub use model::{CascadeModel, MODEL_VERSION};
pub use pipeline::{
    collect_windows, hand_window, refiner_examples, sample_labels, train_model, TrainConfig, TrainedModel, WindowSet,
};
pub use refine::{template_scale, PoseRefiner, RefinerConfig, RefinerExample};
pub use train::{audit_filtration, node_seed, train_sequential, NodeReport, TrainingReport, TrainingSet};

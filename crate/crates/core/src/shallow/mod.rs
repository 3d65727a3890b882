//! Kernel SVM, alternating decision trees, random forests and a one-vs-rest
//! wrapper over them.

pub mod adt;
pub mod forest;
pub mod multiclass;
pub mod svm;

pub use adt::{train_adt, train_adt_traced, AdtHyper, AdtModel, AdtSplitter};
pub use forest::{train_rf, tree_seed, RfHyper, RfModel, Tree, TreeNode};
pub use multiclass::{train_multiclass, train_multiclass_with, BinaryModel, OvrModel, ShallowAlgo};
pub use svm::{
    dual_objective, train_svm, train_svm_traced, Kernel, KernelChoice, SmoTrace, SvmHyper,
    SvmModel,
};

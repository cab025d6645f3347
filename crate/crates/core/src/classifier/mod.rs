//! Random Forest classification (bagged CART trees, Gini impurity), Gini
//! variable importance, k-fold cross-validation, parameter tuning and
//! forward/backward variable selection.

mod compiled;
mod cv;
mod dataset;
mod forest;
mod selection;
mod tree;

pub use compiled::CompiledForest;
pub use cv::{fold_assignment, kfold_cv, tune, tune_csv, CvParams, CvResult, TuneRow};
pub use dataset::Dataset;
pub use forest::{default_mtry, mtry_divisor_grid, Forest, TrainParams, FOREST_FORMAT};
pub use selection::{select_variables, TRACE_HEADER, Selection, SelectionAction, SelectionStep, SelectionTrace};
pub use tree::{NodeView, Tree};

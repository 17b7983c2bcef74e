//! En-Co-Training: agreement-based co-training of a decision tree, a Gaussian
//! naive Bayes model and a 3-nearest-neighbour classifier on hand-crafted
//! statistical window features.

mod classifiers;
mod encotrain;
mod features;

pub use classifiers::{Classifier, DecisionTree, GaussianNb, KNearest, TreeConfig};
pub use encotrain::{en_co_train, EnCoConfig, EnCoOutcome, Ensemble};
pub use features::{
    export_features_csv, extract_dataset_features, extract_features, feature_names, FeatureExtractor, FeatureVector,
    FEATURE_COUNT,
};

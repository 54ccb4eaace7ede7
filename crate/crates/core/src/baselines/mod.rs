//! Classical baselines: most-common-class, multinomial Naive Bayes over
//! n-grams, logistic regression over fixed embeddings, and a linear-chain CRF.

mod crf;
mod logistic;
mod most_common;
mod naive_bayes;

pub use crf::{
    crf_decode, crf_features, crf_log_likelihood_and_gradient, crf_train, viterbi, CrfConfig, CrfGradient, CrfModel,
    CrfTrained, EncodedSequence, Lattice, NUM_TAGS,
};
pub use logistic::{lr_train, LogisticRegressionModel, LrConfig, LrTrained};
pub use most_common::MostCommonClass;
pub use naive_bayes::{nb_predict, nb_train, NaiveBayesModel, NbPrediction, DEFAULT_ALPHA};

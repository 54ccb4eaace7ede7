//! Dataset ingestion, labeling, deterministic splits and training-set
//! rebalancing for the three tasks.

mod bundle;
mod ner;
mod rebalance;
mod reviews;
mod tweets;

pub use bundle::{
    make_ner_bundle, make_presence_bundle, make_sentiment_bundle, split_three, DatasetBundle, Example, Task,
    TrainVariant, DEFAULT_DEV_FRACTION, DEFAULT_TEST_FRACTION,
};
pub use ner::{load_ner_corpus, spans_to_bio, NerRecord};
pub use rebalance::{rebalance, rebalance_by, RebalanceMode, RebalanceSpec};
pub use reviews::{load_drug_reviews, map_rating_to_sentiment, RawReview, SentimentExample, REVIEW_HEADER};
pub use tweets::{load_tweet_corpus, HttpResolver, JsonlResolver, SkipReport, TweetCorpus, TweetRecord, TweetTextResolver};

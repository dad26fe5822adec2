//! Numeric model inputs: static feature vectors, labels, hourly funding
//! series and early-funding scalars.

mod encoder;
mod series;
mod text;

pub use encoder::{
    BucketSpec, CategoryVocabularies, Encoder, FeatureLayout, StaticFeature, ENCODER_VERSION,
};
pub use series::{
    compute_label, early_funding, hourly_series, label_from_amount, HourlySeries, SERIES_LEN,
};
pub use text::{normalize_tokens, TextHasher, MIN_TOKEN_COUNT};

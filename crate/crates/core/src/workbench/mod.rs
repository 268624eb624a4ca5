//! Corpus ingestion, synthetic data, macro-F1, 2-D projection and the
//! command-line front end.

pub mod cli;
mod corpus;
mod metrics;
mod project;
mod synth;

pub use corpus::{
    export_tsv, ingest, parse_tsv, write_tsv, CorpusError, Dataset, Example, Ingested, LabeledCorpus,
    MalformedLine, Split,
};
pub use metrics::{macro_f1, MetricsError, MetricsReport};
pub use project::{project_2d, Projection, ProjectionError};
pub use synth::{class_name, synth_corpus, MAX_TOKENS, MIN_TOKENS, SHARED_WORDS, TOPIC_WORDS};

//! Retrieval of the auxiliary guide from a corpus.
//!
//! Candidates are scored by a weighted multi-feature distance between the
//! context around the gap in the observation and the same span of a corpus
//! segment of equal length. The scan runs on the feature-frame grid at a
//! reduced sample rate, then the winning start is refined sample-accurately
//! by matching the waveform at the two gap boundaries, first at the search
//! rate and again at the working rate.

mod config;
mod cost;
mod refine;
mod search;

pub use config::{FeatureKind, FeatureSpec, SearchConfig};
pub use cost::{frame_weights, similarity_cost, WeightedFeature};
pub use refine::{extract_guide, extract_segment, refine_offset, scale_index};
pub use search::{
    build_corpus, coarse_search, search, CandidateMatch, CoarseMatch, Corpus, IndexedSource,
    SearchIndex, SearchQuery,
};

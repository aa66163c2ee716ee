//! Organise redundant recordings of the same events.
//!
//! The pipeline fingerprints every clip with spectral-peak landmarks
//! ([`fingerprint`]), finds clips that share landmarks at a consistent time
//! offset ([`match_db`]), removes false matches ([`filtering`]), groups the
//! surviving matches into events ([`clustering`]) and ranks the clips of
//! each event by how much landmark evidence they share with the others
//! ([`quality`]). [`corpus_gen`] builds synthetic corpora with ground truth,
//! and [`pipeline`] strings the stages together behind file-based reports.

pub mod audio_io;
pub mod clustering;
pub mod config;
pub mod corpus_gen;
pub mod eval;
pub mod filtering;
pub mod fingerprint;
pub mod match_db;
pub mod pipeline;
pub mod quality;
pub mod report;

pub use audio_io::{canonicalise, decode_wav, AudioClip};
pub use clustering::{build_graph, connected_components, propagate_offsets, ClusterSet, MatchGraph};
pub use config::PipelineConfig;
pub use filtering::{dedupe_offsets, filter_matches, FilterParams, MatchCandidate, MatchingList};
pub use fingerprint::{fingerprint_clip, Fingerprint, FingerprintParams, Landmark};
pub use match_db::{MatchDb, OffsetGroup, RawMatchingList};
pub use pipeline::Error;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fingerprinting.md")]
    mod fingerprinting {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/quality.md")]
    mod quality {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

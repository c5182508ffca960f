//! Corpus-level plumbing: configuration, audio intake, encoder-input
//! assembly, tensor persistence, figure reproduction and probes.

pub mod audio;
pub mod builders;
pub mod config;
pub mod corpus;
pub mod manifest;
pub mod plot;
pub mod probes;
pub mod tensor;

pub use builders::{
    derive_seed, stream_rng, EncoderInputs, Frontend, Perturbed, Provenance, StatsStore, Stream,
};
pub use config::{FrontendConfig, ProbeThresholds};
pub use corpus::{run_corpus, CorpusIndex, CorpusSummary, UtteranceMeta};
pub use manifest::{ingest, CorpusManifest, ManifestEntry, SkippedFile};
pub use plot::{plot_figure2, Fig2Metrics, Fig2Report};
pub use probes::{run_probes, ProbeReport, ProbeSource};
pub use tensor::{write_atomic, Tensor};

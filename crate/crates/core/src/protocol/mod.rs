//! Dataset manifests, the three evaluation split protocols, run averaging,
//! and a procedural corpus with stamped defects.

mod average;
mod manifest;
mod split;
mod synth;

pub use average::{five_run_average, Aggregate};
pub use manifest::{manifest_from_listing, DatasetManifest, Label, ManifestRecord, ManifestRow, ScanOutcome, SplitRole};
pub use split::{
    high_shot_split, k_shot_pool, k_shot_split, one_class_split, run_seed, split_counts, ProtocolKind, SplitCounts,
    SplitManifest,
};
pub use synth::{
    difference_mask, gen_synthetic_corpus, render_texture, stamp_defect, DefectKind, SyntheticCorpus, SyntheticCorpusConfig,
    TextureFamily,
};

//! File formats and synthetic data.

mod records;
mod split_meta;
mod synth;

pub use records::{
    load_records, parse_records, parse_records_bytes, write_predictions, write_records, Delimiter,
    IndexBase, RecordFormat,
};
pub use split_meta::{SplitCounts, SplitMetadata};
pub use synth::{synthesize, SynthSpec, Synthetic, TRUTH_HIGH, TRUTH_LOW};

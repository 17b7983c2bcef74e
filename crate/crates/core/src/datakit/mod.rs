//! Dataset model, ingestion and preparation.
//!
//! Raw recordings are z-normalized with training-partition statistics and cut
//! into overlapping windows; test users never contribute to training data.

mod csvio;
mod normalize;
mod prepare;
mod segment;
mod split;
mod subset;
mod synth;
mod types;

pub use csvio::{export_csv, ingest_csv};
pub use normalize::{znormalize, ChannelStats, STD_FLOOR};
pub use prepare::{prepare_datasets, PreparedData};
pub use segment::{segment, window_count, WINDOW_OVERLAP};
pub use split::{split_by_users, split_user_ids, DataSplit, SplitSpec};
pub use subset::{intensity_proxy, subsample_labeled, subset_by_intensity, IntensityMode};
pub use synth::{synthesize, synthesize_recordings, SynthConfig};
pub use types::{vocabulary_of, Dataset, RawRecording, Role, Window, CHANNELS, WINDOW_LEN};

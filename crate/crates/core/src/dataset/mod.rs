//! Subject records and everything that reshapes them before training:
//! file IO, z-scoring, decimation, sliding windows, subject-level splits and
//! the synthetic generator.

mod io;
mod record;
mod split;
mod synthetic;
mod window;

pub use io::{
    load_csv, load_dataset, parse_tsds, read_tsds, tsds_bytes, write_csv, write_tsds, TSDS_MAGIC,
    TSDS_VERSION,
};
pub use record::{channel_stats, downsample, zscore, ChannelStats, TimeSeriesRecord};
pub use split::{kfold_split, subject_split, SplitPlan};
pub use synthetic::{gen_synthetic, AGE_MEAN, AGE_STD, SYNTHETIC_TR};
pub use window::{augment_seed, slide_windows, AugmentSeed, WindowGeometry, WindowSample};

//! SGF records to sharded, game-disjoint training data.

mod dataset;
mod parse;
mod replay;
mod shard;

pub use dataset::{
    build_dataset, file_sha256, split_counts, BuildOptions, Dataset, DatasetError, DatasetManifest, ShardInfo, Split,
    SplitInfo, DEFAULT_SHARD_RECORDS, MANIFEST_FILE, MANIFEST_VERSION, REJECTS_FILE,
};
pub use parse::{parse_sgf, parse_sgf_bytes, GameRecord, Move, SgfError};
pub use replay::{board_before, initial_board, replay, ReplayError, TrainingExample};
pub use shard::{
    decode_record, encode_record, sha256_hex, shard_bytes, write_shard, PackedPosition, Shard, ShardError,
    HEADER_SIZE, RECORD_SIZE,
};

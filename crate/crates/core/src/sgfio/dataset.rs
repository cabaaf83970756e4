//! Game-disjoint train/validation/test splits written as shards plus a TOML
//! manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use super::parse::parse_sgf_bytes;
use super::replay::{replay, TrainingExample};
use super::shard::{sha256_hex, write_shard, Shard, ShardError};
use crate::goboard::DEFAULT_SIZE;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const REJECTS_FILE: &str = "rejects.txt";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_SHARD_RECORDS: usize = 100_000;
const SETUP_NOTE: &str = "setup and handicap stones (AB/AW/AE) are placed before the first move";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Split, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardInfo {
    /// Relative to the manifest's directory.
    pub file: String,
    pub records: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitInfo {
    /// Source files relative to the corpus root, in storage order.
    pub games: Vec<String>,
    pub examples: u64,
    pub shards: Vec<ShardInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    /// Train, validation, test.
    pub fractions: [f64; 3],
    /// Digest over every source file's relative path and content.
    pub source_sha256: String,
    pub source_files: u64,
    pub rejected: u64,
    pub setup_stones: String,
    pub train: SplitInfo,
    pub val: SplitInfo,
    pub test: SplitInfo,
}

impl DatasetManifest {
    pub fn split(&self, s: Split) -> &SplitInfo {
        match s {
            Split::Train => &self.train,
            Split::Validation => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, s: Split) -> &mut SplitInfo {
        match s {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split fractions {0:?} must be non-negative and sum to 1")]
    BadFractions([f64; 3]),
    #[error("no parseable 19x19 game under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error("{split} index {index} out of range ({len} examples)")]
    OutOfRange { split: Split, index: usize, len: usize },
    #[error("{split} example {index}: stored target is not legal on its position")]
    IllegalTarget { split: Split, index: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub shard_records: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { fractions: [0.88, 0.04, 0.08], seed: 42, shard_records: DEFAULT_SHARD_RECORDS }
    }
}

/// Whole-game counts per split. The test and validation counts are rounded
/// from their fractions; training takes the remainder.
pub fn split_counts(games: usize, fractions: [f64; 3]) -> [usize; 3] {
    let test = ((games as f64 * fractions[2]).round() as usize).min(games);
    let val = ((games as f64 * fractions[1]).round() as usize).min(games - test);
    [games - test - val, val, test]
}

fn check_fractions(f: [f64; 3]) -> Result<(), DatasetError> {
    let ok = f.iter().all(|v| v.is_finite() && *v >= 0.0) && (f.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(DatasetError::BadFractions(f))
    }
}

struct SourceGame {
    rel: String,
    bytes: Vec<u8>,
}

fn collect_sources(root: &Path) -> Result<Vec<SourceGame>, DatasetError> {
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            DatasetError::Io { path, source: e.into() }
        })?;
        let is_sgf = entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("sgf"));
        if entry.file_type().is_file() && is_sgf {
            paths.push(entry.path().to_path_buf());
        }
    }
    let mut games = paths
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            Ok(SourceGame { rel, bytes })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    games.sort_by(|a, b| a.rel.cmp(&b.rel));
    Ok(games)
}

fn source_digest(games: &[SourceGame]) -> String {
    let mut h = Sha256::new();
    for g in games {
        h.update((g.rel.len() as u64).to_le_bytes());
        h.update(g.rel.as_bytes());
        h.update((g.bytes.len() as u64).to_le_bytes());
        h.update(&g.bytes);
    }
    hex::encode(h.finalize())
}

/// Parses, replays, splits and writes a corpus. Output is a pure function of
/// the corpus contents and `opts`.
pub fn build_dataset(sgf_dir: &Path, out: &Path, opts: &BuildOptions) -> Result<DatasetManifest, DatasetError> {
    check_fractions(opts.fractions)?;
    let sources = collect_sources(sgf_dir)?;
    let results: Vec<Result<Vec<TrainingExample>, String>> = sources
        .par_iter()
        .map(|g| {
            let game = parse_sgf_bytes(&g.bytes).map_err(|e| format!("parse: {e}"))?;
            if game.board_size != DEFAULT_SIZE {
                return Err(format!("board size {} is not {DEFAULT_SIZE}", game.board_size));
            }
            replay(&game).map_err(|e| format!("replay: {e}"))
        })
        .collect();

    let mut rejects = String::new();
    let mut accepted: Vec<(String, Vec<TrainingExample>)> = Vec::new();
    for (src, res) in sources.iter().zip(results) {
        match res {
            Ok(ex) => accepted.push((src.rel.clone(), ex)),
            Err(msg) => {
                log::warn!("rejected {}: {msg}", src.rel);
                rejects.push_str(&format!("{}\t{msg}\n", src.rel));
            }
        }
    }
    if accepted.is_empty() {
        return Err(DatasetError::EmptyCorpus(sgf_dir.to_path_buf()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    accepted.shuffle(&mut rng);
    let counts = split_counts(accepted.len(), opts.fractions);

    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed: opts.seed,
        fractions: opts.fractions,
        source_sha256: source_digest(&sources),
        source_files: sources.len() as u64,
        rejected: (sources.len() - accepted.len()) as u64,
        setup_stones: SETUP_NOTE.to_string(),
        train: SplitInfo::default(),
        val: SplitInfo::default(),
        test: SplitInfo::default(),
    };
    let mut games = accepted.into_iter();
    let per_shard = opts.shard_records.max(1);
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        let info = manifest.split_mut(*split);
        let mut examples = Vec::new();
        for (rel, ex) in games.by_ref().take(count) {
            info.games.push(rel);
            examples.extend(ex);
        }
        info.examples = examples.len() as u64;
        for (i, chunk) in examples.chunks(per_shard).enumerate() {
            let file = format!("{split}-{i:05}.shard");
            let sha256 = write_shard(&out.join(&file), chunk)?;
            info.shards.push(ShardInfo { file, records: chunk.len() as u64, sha256 });
        }
    }
    let rejects_path = out.join(REJECTS_FILE);
    fs::write(&rejects_path, rejects).map_err(io_err(&rejects_path))?;
    let manifest_path = out.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest.to_toml()).map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

struct LazyShard {
    path: PathBuf,
    info: ShardInfo,
    first: usize,
    data: OnceLock<Result<Shard, ShardError>>,
}

impl LazyShard {
    fn get(&self) -> Result<&Shard, ShardError> {
        self.data
            .get_or_init(|| Shard::open(&self.path, Some(&self.info.sha256)))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// Read access to a built dataset. Shards are loaded and checksummed on
/// first use; safe to share across threads.
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    shards: BTreeMap<Split, Vec<LazyShard>>,
}

impl Dataset {
    /// Opens a dataset from its directory or its manifest file.
    pub fn open(path: &Path) -> Result<Dataset, DatasetError> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: DatasetManifest = toml::from_str(&text)
            .map_err(|e| DatasetError::Manifest { path: manifest_path.clone(), message: e.to_string() })?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(DatasetError::Manifest {
                path: manifest_path,
                message: format!("unsupported manifest version {}", manifest.format_version),
            });
        }
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut shards = BTreeMap::new();
        for split in Split::ALL {
            let info = manifest.split(split);
            let total: u64 = info.shards.iter().map(|s| s.records).sum();
            if total != info.examples {
                return Err(DatasetError::Manifest {
                    path: manifest_path,
                    message: format!("{split}: shards hold {total} records, manifest says {}", info.examples),
                });
            }
            let mut first = 0;
            let list = info
                .shards
                .iter()
                .map(|s| {
                    let lazy = LazyShard { path: root.join(&s.file), info: s.clone(), first, data: OnceLock::new() };
                    first += s.records as usize;
                    lazy
                })
                .collect();
            shards.insert(split, list);
        }
        Ok(Dataset { root, manifest, shards })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self, split: Split) -> usize {
        self.manifest.split(split).examples as usize
    }

    /// One example, its target re-checked for legality.
    pub fn get(&self, split: Split, index: usize) -> Result<TrainingExample, DatasetError> {
        let list = &self.shards[&split];
        let len = self.len(split);
        if index >= len {
            return Err(DatasetError::OutOfRange { split, index, len });
        }
        let pos = list.partition_point(|s| s.first <= index) - 1;
        let lazy = &list[pos];
        let shard = lazy.get()?;
        if shard.len() as u64 != lazy.info.records {
            return Err(ShardError::Truncated {
                path: lazy.path.display().to_string(),
                count: lazy.info.records,
                bytes: shard.len(),
            }
            .into());
        }
        let ex = shard.example(index - lazy.first)?;
        let legal = ex.board().ok().and_then(|b| b.is_legal(ex.target).ok()).unwrap_or(false);
        if !legal {
            return Err(DatasetError::IllegalTarget { split, index });
        }
        Ok(ex)
    }

    pub fn load_batch(&self, split: Split, indices: &[usize]) -> Result<Vec<TrainingExample>, DatasetError> {
        indices.iter().map(|&i| self.get(split, i)).collect()
    }

    /// Loads and checksums every shard of `split`.
    pub fn verify(&self, split: Split) -> Result<(), DatasetError> {
        for s in &self.shards[&split] {
            s.get()?;
        }
        Ok(())
    }
}

/// Digest of a file, for comparing builds.
pub fn file_sha256(path: &Path) -> Result<String, DatasetError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

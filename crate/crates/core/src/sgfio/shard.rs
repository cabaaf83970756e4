//! Fixed-size binary records for training examples.
//!
//! File layout, little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 8     | magic `TGSHARD\0`                       |
//! | 2     | format version                          |
//! | 2     | record size (98)                        |
//! | 8     | record count                            |
//! | 98·n  | records                                 |
//!
//! Record: 91 bytes of 2-bit occupancy (point `i` in byte `i / 4`, bits
//! `2 * (i % 4)`, 0 empty / 1 black / 2 white), 1 byte side to move
//! (0 black, 1 white), then `u16` ko point (`0xFFFF` none), `u16` target and
//! `u16` move number. Points are row-major indices on a 19x19 board.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::replay::TrainingExample;
use crate::goboard::{Board, BoardError, Color, Point, DEFAULT_SIZE};

pub const MAGIC: &[u8; 8] = b"TGSHARD\0";
pub const FORMAT_VERSION: u16 = 1;
pub const RECORD_SIZE: usize = 98;
pub const HEADER_SIZE: usize = 20;
const OCCUPANCY_BYTES: usize = 91;
const NO_POINT: u16 = 0xFFFF;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ShardError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: not a shard file")]
    BadMagic { path: String },
    #[error("{path}: unsupported shard version {version} or record size {record_size}")]
    BadFormat { path: String, version: u16, record_size: u16 },
    #[error("{path}: header claims {count} records but file holds {bytes} bytes")]
    Truncated { path: String, count: u64, bytes: usize },
    #[error("{path}: checksum mismatch (manifest {expected}, file {actual})")]
    Checksum { path: String, expected: String, actual: String },
    #[error("record {index}: {reason}")]
    Corrupt { index: usize, reason: String },
    #[error("only {DEFAULT_SIZE}x{DEFAULT_SIZE} positions can be stored, got {0}x{0}")]
    UnsupportedSize(usize),
}

/// A board position in 2 bits per point, without move counters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PackedPosition {
    pub size: u8,
    pub cells: [u8; OCCUPANCY_BYTES],
    pub to_move: Color,
    pub ko: Option<Point>,
}

impl PackedPosition {
    pub const MAX_SIZE: usize = 19;

    pub fn from_board(board: &Board) -> PackedPosition {
        let n = board.size();
        assert!(n <= Self::MAX_SIZE, "board too large to pack");
        let mut cells = [0u8; OCCUPANCY_BYTES];
        for (i, c) in board.cells().iter().enumerate() {
            let code = match c {
                None => 0,
                Some(Color::Black) => 1,
                Some(Color::White) => 2,
            };
            cells[i / 4] |= code << (2 * (i % 4));
        }
        PackedPosition { size: n as u8, cells, to_move: board.to_move(), ko: board.ko_point() }
    }

    fn code(&self, i: usize) -> u8 {
        (self.cells[i / 4] >> (2 * (i % 4))) & 3
    }

    pub fn get(&self, p: Point) -> Option<Color> {
        match self.code(p.index(self.size as usize)) {
            1 => Some(Color::Black),
            2 => Some(Color::White),
            _ => None,
        }
    }

    pub fn to_board(&self) -> Result<Board, BoardError> {
        self.to_board_at(0)
    }

    pub fn to_board_at(&self, move_count: u32) -> Result<Board, BoardError> {
        let n = self.size as usize;
        let cells = (0..n * n)
            .map(|i| match self.code(i) {
                1 => Some(Color::Black),
                2 => Some(Color::White),
                _ => None,
            })
            .collect();
        Board::from_parts(n, cells, self.to_move, self.ko, move_count)
    }
}

impl TrainingExample {
    pub fn board(&self) -> Result<Board, BoardError> {
        self.position.to_board_at(self.move_number as u32)
    }
}

pub fn encode_record(ex: &TrainingExample) -> Result<[u8; RECORD_SIZE], ShardError> {
    let n = ex.position.size as usize;
    if n != DEFAULT_SIZE {
        return Err(ShardError::UnsupportedSize(n));
    }
    let mut out = [0u8; RECORD_SIZE];
    out[..OCCUPANCY_BYTES].copy_from_slice(&ex.position.cells);
    out[91] = match ex.position.to_move {
        Color::Black => 0,
        Color::White => 1,
    };
    let ko = ex.position.ko.map_or(NO_POINT, |p| p.index(n) as u16);
    out[92..94].copy_from_slice(&ko.to_le_bytes());
    out[94..96].copy_from_slice(&(ex.target.index(n) as u16).to_le_bytes());
    out[96..98].copy_from_slice(&ex.move_number.to_le_bytes());
    Ok(out)
}

pub fn decode_record(bytes: &[u8], index: usize) -> Result<TrainingExample, ShardError> {
    let corrupt = |reason: String| ShardError::Corrupt { index, reason };
    if bytes.len() != RECORD_SIZE {
        return Err(corrupt(format!("record is {} bytes", bytes.len())));
    }
    let points = DEFAULT_SIZE * DEFAULT_SIZE;
    let mut cells = [0u8; OCCUPANCY_BYTES];
    cells.copy_from_slice(&bytes[..OCCUPANCY_BYTES]);
    for i in 0..OCCUPANCY_BYTES * 4 {
        let code = (cells[i / 4] >> (2 * (i % 4))) & 3;
        if code == 3 || (i >= points && code != 0) {
            return Err(corrupt(format!("bad occupancy code {code} at point {i}")));
        }
    }
    let to_move = match bytes[91] {
        0 => Color::Black,
        1 => Color::White,
        v => return Err(corrupt(format!("bad side to move {v}"))),
    };
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let ko = match u16_at(92) {
        NO_POINT => None,
        k if (k as usize) < points => Some(Point::from_index(k as usize, DEFAULT_SIZE)),
        k => return Err(corrupt(format!("bad ko point {k}"))),
    };
    let target = u16_at(94) as usize;
    if target >= points {
        return Err(corrupt(format!("bad target {target}")));
    }
    Ok(TrainingExample {
        position: PackedPosition { size: DEFAULT_SIZE as u8, cells, to_move, ko },
        target: Point::from_index(target, DEFAULT_SIZE),
        move_number: u16_at(96),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serialized shard file contents.
pub fn shard_bytes(examples: &[TrainingExample]) -> Result<Vec<u8>, ShardError> {
    let mut out = Vec::with_capacity(HEADER_SIZE + examples.len() * RECORD_SIZE);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(RECORD_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&(examples.len() as u64).to_le_bytes());
    for ex in examples {
        out.extend_from_slice(&encode_record(ex)?);
    }
    Ok(out)
}

/// Writes a shard and returns its SHA-256.
pub fn write_shard(path: &Path, examples: &[TrainingExample]) -> Result<String, ShardError> {
    let bytes = shard_bytes(examples)?;
    fs::write(path, &bytes).map_err(|e| ShardError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Ok(sha256_hex(&bytes))
}

/// A shard held in memory, header checked.
#[derive(Clone, Debug)]
pub struct Shard {
    bytes: Vec<u8>,
    count: usize,
}

impl Shard {
    /// Reads and checks a shard. With `expected_sha256`, the file digest
    /// must match.
    pub fn open(path: &Path, expected_sha256: Option<&str>) -> Result<Shard, ShardError> {
        let name = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| ShardError::Io { path: name.clone(), message: e.to_string() })?;
        if let Some(expected) = expected_sha256 {
            let actual = sha256_hex(&bytes);
            if actual != expected {
                return Err(ShardError::Checksum { path: name, expected: expected.to_string(), actual });
            }
        }
        Shard::from_bytes(bytes, &name)
    }

    pub fn from_bytes(bytes: Vec<u8>, name: &str) -> Result<Shard, ShardError> {
        if bytes.len() < HEADER_SIZE || &bytes[..8] != MAGIC {
            return Err(ShardError::BadMagic { path: name.to_string() });
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        let record_size = u16::from_le_bytes([bytes[10], bytes[11]]);
        if version != FORMAT_VERSION || record_size as usize != RECORD_SIZE {
            return Err(ShardError::BadFormat { path: name.to_string(), version, record_size });
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected_len = (count as u128) * RECORD_SIZE as u128 + HEADER_SIZE as u128;
        if expected_len != bytes.len() as u128 {
            return Err(ShardError::Truncated { path: name.to_string(), count, bytes: bytes.len() });
        }
        Ok(Shard { bytes, count: count as usize })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn record(&self, i: usize) -> &[u8] {
        let start = HEADER_SIZE + i * RECORD_SIZE;
        &self.bytes[start..start + RECORD_SIZE]
    }

    pub fn example(&self, i: usize) -> Result<TrainingExample, ShardError> {
        decode_record(self.record(i), i)
    }
}

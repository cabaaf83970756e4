//! SGF FF[3]/FF[4] reader for the main line of the first game tree.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::goboard::{Color, Point, DEFAULT_SIZE, MAX_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Play(Point),
    Pass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameRecord {
    pub board_size: usize,
    pub setup_black: Vec<Point>,
    pub setup_white: Vec<Point>,
    /// `PL`: side to move after setup, if stated.
    pub first_player: Option<Color>,
    pub moves: Vec<(Color, Move)>,
    /// Remaining root properties, multiple values joined by `,`.
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SgfError {
    #[error("byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("byte {offset}: unsupported board size {value:?}")]
    UnsupportedSize { offset: usize, value: String },
    #[error("byte {offset}: bad point {value:?} for a {size}x{size} board")]
    BadPoint { offset: usize, value: String, size: usize },
    #[error("byte {offset}: setup property {id} after the first move")]
    SetupAfterMoves { offset: usize, id: String },
    #[error("byte {offset}: bad {id} value {value:?}")]
    BadValue { offset: usize, id: String, value: String },
}

#[derive(Debug)]
struct Property {
    id: String,
    offset: usize,
    /// `(byte offset, raw text)` per value.
    values: Vec<(usize, String)>,
}

type Node = Vec<Property>;

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn err(&self, message: impl Into<String>) -> SgfError {
        SgfError::Syntax { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<(), SgfError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", b as char)))
        }
    }

    fn node(&mut self) -> Result<Node, SgfError> {
        self.expect(b';')?;
        let mut props = Vec::new();
        while let Some(b) = self.peek() {
            if !b.is_ascii_alphabetic() {
                break;
            }
            let offset = self.pos;
            let mut id = String::new();
            while let Some(&c) = self.bytes.get(self.pos) {
                if !c.is_ascii_alphabetic() {
                    break;
                }
                // FF[3] allows lowercase letters inside identifiers; they carry no meaning.
                if c.is_ascii_uppercase() {
                    id.push(c as char);
                }
                self.pos += 1;
            }
            if id.is_empty() {
                return Err(SgfError::Syntax { offset, message: "property identifier has no uppercase letter".into() });
            }
            let mut values = Vec::new();
            while self.peek() == Some(b'[') {
                values.push(self.value()?);
            }
            if values.is_empty() {
                return Err(self.err(format!("property {id} has no value")));
            }
            props.push(Property { id, offset, values });
        }
        Ok(props)
    }

    fn value(&mut self) -> Result<(usize, String), SgfError> {
        let start = self.pos;
        self.pos += 1;
        let mut raw = Vec::new();
        loop {
            match self.bytes.get(self.pos) {
                None => return Err(SgfError::Syntax { offset: start, message: "unterminated property value".into() }),
                Some(b'\\') => {
                    if let Some(&c) = self.bytes.get(self.pos + 1) {
                        raw.push(c);
                    }
                    self.pos += 2;
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok((start + 1, String::from_utf8_lossy(&raw).into_owned()));
                }
                Some(&c) => {
                    raw.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    /// Checks and skips a game tree whose opening `(` was just consumed.
    fn skip_tree(&mut self) -> Result<(), SgfError> {
        let mut saw_node = false;
        loop {
            match self.peek() {
                Some(b';') => {
                    self.node()?;
                    saw_node = true;
                }
                Some(b'(') if saw_node => {
                    self.pos += 1;
                    self.skip_tree()?;
                }
                Some(b')') if saw_node => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => return Err(self.err("expected node, variation or ')'")),
            }
        }
    }

    /// Nodes along the first branch of the first game tree. Remaining
    /// variations are syntax-checked and dropped.
    fn main_line(&mut self) -> Result<Vec<Node>, SgfError> {
        // Tolerate byte-order marks and other junk before the collection.
        match self.bytes.iter().position(|&b| b == b'(') {
            Some(p) => self.pos = p + 1,
            None => return Err(self.err("no game tree")),
        }
        let mut nodes = Vec::new();
        let mut depth = 1;
        loop {
            match self.peek() {
                Some(b';') => nodes.push(self.node()?),
                Some(b'(') if !nodes.is_empty() => {
                    self.pos += 1;
                    depth += 1;
                }
                Some(b')') if !nodes.is_empty() => {
                    self.pos += 1;
                    depth -= 1;
                    break;
                }
                _ => return Err(self.err("expected node, variation or ')'")),
            }
        }
        // Close every tree entered along the main line, skipping siblings.
        while depth > 0 {
            match self.peek() {
                Some(b'(') => {
                    self.pos += 1;
                    self.skip_tree()?;
                }
                Some(b')') => {
                    self.pos += 1;
                    depth -= 1;
                }
                _ => return Err(self.err("expected variation or ')'")),
            }
        }
        Ok(nodes)
    }
}

fn parse_size(p: &Property) -> Result<usize, SgfError> {
    let (offset, text) = &p.values[0];
    let bad = || SgfError::UnsupportedSize { offset: *offset, value: text.clone() };
    let text_trim = text.trim();
    let size = match text_trim.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
            if a != b {
                return Err(bad());
            }
            a
        }
        None => text_trim.parse::<usize>().map_err(|_| bad())?,
    };
    if !(2..=MAX_SIZE).contains(&size) {
        return Err(bad());
    }
    Ok(size)
}

fn coord(c: u8, size: usize) -> Option<usize> {
    let v = c.checked_sub(b'a')? as usize;
    (c.is_ascii_lowercase() && v < size).then_some(v)
}

/// SGF point: first letter is the column, second the row, both from `a`.
fn parse_point(offset: usize, text: &str, size: usize) -> Result<Point, SgfError> {
    let b = text.trim().as_bytes();
    let bad = || SgfError::BadPoint { offset, value: text.to_string(), size };
    if b.len() != 2 {
        return Err(bad());
    }
    match (coord(b[0], size), coord(b[1], size)) {
        (Some(col), Some(row)) => Ok(Point::new(row, col)),
        _ => Err(bad()),
    }
}

fn parse_move(offset: usize, text: &str, size: usize) -> Result<Move, SgfError> {
    let t = text.trim();
    if t.is_empty() || (t == "tt" && size <= 19) {
        return Ok(Move::Pass);
    }
    parse_point(offset, t, size).map(Move::Play)
}

/// Point list with `aa:cc` rectangle compression.
fn parse_point_list(p: &Property, size: usize) -> Result<Vec<Point>, SgfError> {
    let mut out = Vec::new();
    for (offset, text) in &p.values {
        match text.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (parse_point(*offset, a, size)?, parse_point(*offset, b, size)?);
                for row in a.row.min(b.row)..=a.row.max(b.row) {
                    for col in a.col.min(b.col)..=a.col.max(b.col) {
                        out.push(Point { row, col });
                    }
                }
            }
            None => out.push(parse_point(*offset, text, size)?),
        }
    }
    Ok(out)
}

fn parse_color(offset: usize, id: &str, text: &str) -> Result<Color, SgfError> {
    match text.trim() {
        "B" | "b" => Ok(Color::Black),
        "W" | "w" => Ok(Color::White),
        _ => Err(SgfError::BadValue { offset, id: id.into(), value: text.into() }),
    }
}

pub fn parse_sgf(text: &str) -> Result<GameRecord, SgfError> {
    parse_sgf_bytes(text.as_bytes())
}

/// As [`parse_sgf`], for files whose text encoding is not known to be UTF-8.
pub fn parse_sgf_bytes(bytes: &[u8]) -> Result<GameRecord, SgfError> {
    let nodes = Scanner { bytes, pos: 0 }.main_line()?;
    let size = match nodes[0].iter().find(|p| p.id == "SZ") {
        Some(p) => parse_size(p)?,
        None => DEFAULT_SIZE,
    };
    let mut game = GameRecord {
        board_size: size,
        setup_black: Vec::new(),
        setup_white: Vec::new(),
        first_player: None,
        moves: Vec::new(),
        metadata: BTreeMap::new(),
    };
    for (n, node) in nodes.iter().enumerate() {
        for p in node {
            match p.id.as_str() {
                "B" | "W" => {
                    let color = if p.id == "B" { Color::Black } else { Color::White };
                    for (offset, v) in &p.values {
                        game.moves.push((color, parse_move(*offset, v, size)?));
                    }
                }
                "AB" | "AW" | "AE" => {
                    if !game.moves.is_empty() {
                        return Err(SgfError::SetupAfterMoves { offset: p.offset, id: p.id.clone() });
                    }
                    let points = parse_point_list(p, size)?;
                    game.setup_black.retain(|q| !points.contains(q));
                    game.setup_white.retain(|q| !points.contains(q));
                    match p.id.as_str() {
                        "AB" => game.setup_black.extend(points),
                        "AW" => game.setup_white.extend(points),
                        _ => {}
                    }
                }
                "PL" => {
                    let (offset, v) = &p.values[0];
                    game.first_player = Some(parse_color(*offset, "PL", v)?);
                }
                "SZ" => {}
                _ if n == 0 => {
                    let joined = p.values.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(",");
                    game.metadata.insert(p.id.clone(), joined);
                }
                _ => {}
            }
        }
    }
    Ok(game)
}

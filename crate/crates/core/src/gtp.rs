//! Go Text Protocol (version 2) front end.
//!
//! The engine plays the predictor's top-ranked legal move and passes when
//! its opponent has just passed. After that pass the game is over: further
//! `genmove` commands answer `pass` until `clear_board`.

use std::io::{self, BufRead, Write};

use crate::evaluator::{predict_ranked, Predictor};
use crate::goboard::{Board, Color, Point, DEFAULT_SIZE};

const COLUMNS: &[u8] = b"ABCDEFGHJKLMNOPQRST";

pub const COMMANDS: &[&str] = &[
    "boardsize",
    "clear_board",
    "genmove",
    "known_command",
    "komi",
    "list_commands",
    "name",
    "play",
    "protocol_version",
    "quit",
    "showboard",
    "version",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vertex {
    Point(Point),
    Pass,
}

/// `D4`-style vertex: columns A..T without I, rows counted from the bottom.
pub fn vertex_to_string(v: Vertex, size: usize) -> String {
    match v {
        Vertex::Pass => "pass".to_string(),
        Vertex::Point(p) => format!("{}{}", COLUMNS[p.col as usize] as char, size - p.row as usize),
    }
}

pub fn parse_vertex(s: &str, size: usize) -> Option<Vertex> {
    if s.eq_ignore_ascii_case("pass") {
        return Some(Vertex::Pass);
    }
    let mut chars = s.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    let col = COLUMNS.iter().take(size).position(|&c| c as char == letter)?;
    let rest = chars.as_str();
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let number: usize = rest.parse().ok()?;
    if number == 0 || number > size {
        return None;
    }
    Some(Vertex::Point(Point::new(size - number, col)))
}

fn parse_color(s: &str) -> Option<Color> {
    match s.to_ascii_lowercase().as_str() {
        "b" | "black" => Some(Color::Black),
        "w" | "white" => Some(Color::White),
        _ => None,
    }
}

pub struct Engine<P> {
    predictor: P,
    board: Board,
    /// Color of the player whose pass was the most recent move.
    last_pass: Option<Color>,
    game_over: bool,
    komi: f64,
    name: String,
}

/// Outcome of one command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reply {
    Success(String),
    Failure(String),
}

impl<P: Predictor> Engine<P> {
    pub fn new(predictor: P) -> Engine<P> {
        Engine {
            predictor,
            board: Board::new(DEFAULT_SIZE).expect("default size"),
            last_pass: None,
            game_over: false,
            komi: 0.0,
            name: "tiedgo".to_string(),
        }
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn komi(&self) -> f64 {
        self.komi
    }

    pub fn is_game_over(&self) -> bool {
        self.game_over
    }

    fn clear(&mut self) {
        self.board = Board::new(DEFAULT_SIZE).expect("default size");
        self.last_pass = None;
        self.game_over = false;
    }

    /// Plays `v` for `color` on the internal board.
    pub fn play(&mut self, color: Color, v: Vertex) -> Result<(), String> {
        let board = self.board.with_to_move(color);
        match v {
            Vertex::Pass => {
                self.board = board.pass();
                self.last_pass = Some(color);
            }
            Vertex::Point(p) => {
                self.board = board.play(p).map_err(|_| "illegal move".to_string())?.board;
                self.last_pass = None;
            }
        }
        Ok(())
    }

    /// Chooses and plays a move for `color`.
    pub fn genmove(&mut self, color: Color) -> Result<Vertex, String> {
        if self.game_over || self.last_pass == Some(color.opponent()) {
            self.game_over = true;
            self.play(color, Vertex::Pass)?;
            return Ok(Vertex::Pass);
        }
        let board = self.board.with_to_move(color);
        let v = match predict_ranked(&self.predictor, &board) {
            Ok(ranked) => Vertex::Point(ranked[0].0),
            Err(crate::evaluator::EvalError::NoLegalMove) => Vertex::Pass,
            Err(e) => return Err(e.to_string()),
        };
        self.play(color, v)?;
        Ok(v)
    }

    /// Runs one command line (already stripped of any id).
    pub fn execute(&mut self, command: &str, args: &[&str]) -> Reply {
        use Reply::{Failure, Success};
        let ok = |s: &str| Success(s.to_string());
        match command {
            "protocol_version" => ok("2"),
            "name" => Success(self.name.clone()),
            "version" => ok(env!("CARGO_PKG_VERSION")),
            "known_command" => match args.first() {
                Some(c) => ok(if COMMANDS.contains(c) { "true" } else { "false" }),
                None => Failure("syntax error".into()),
            },
            "list_commands" => Success(COMMANDS.join("\n")),
            "quit" => ok(""),
            "boardsize" => match args.first().and_then(|a| a.parse::<usize>().ok()) {
                Some(DEFAULT_SIZE) => {
                    self.clear();
                    ok("")
                }
                Some(_) => Failure("unacceptable size".into()),
                None => Failure("syntax error".into()),
            },
            "clear_board" => {
                self.clear();
                ok("")
            }
            "komi" => match args.first().and_then(|a| a.parse::<f64>().ok()) {
                Some(k) => {
                    self.komi = k;
                    ok("")
                }
                None => Failure("syntax error".into()),
            },
            "play" => {
                let (Some(c), Some(v)) = (args.first().and_then(|a| parse_color(a)), args.get(1)) else {
                    return Failure("syntax error".into());
                };
                match parse_vertex(v, DEFAULT_SIZE) {
                    Some(v) => match self.play(c, v) {
                        Ok(()) => ok(""),
                        Err(e) => Failure(e),
                    },
                    None => Failure("illegal move".into()),
                }
            }
            "genmove" => match args.first().and_then(|a| parse_color(a)) {
                Some(c) => match self.genmove(c) {
                    Ok(v) => Success(vertex_to_string(v, DEFAULT_SIZE)),
                    Err(e) => Failure(e),
                },
                None => Failure("syntax error".into()),
            },
            "showboard" => Success(format!("\n{}", self.board).trim_end().to_string()),
            _ => Failure("unknown command".into()),
        }
    }
}

/// Strips control characters and comments; `None` for lines to ignore.
fn preprocess(line: &str) -> Option<String> {
    let cleaned: String = line
        .split('#')
        .next()
        .unwrap_or("")
        .chars()
        .filter_map(|c| match c {
            '\t' => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect();
    let t = cleaned.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn format_reply(id: Option<&str>, reply: &Reply) -> String {
    let (status, text) = match reply {
        Reply::Success(t) => ('=', t),
        Reply::Failure(t) => ('?', t),
    };
    let id = id.unwrap_or("");
    if text.is_empty() || text.starts_with('\n') {
        format!("{status}{id}{text}\n\n")
    } else {
        format!("{status}{id} {text}\n\n")
    }
}

/// Serves commands from `input` until `quit` or end of input.
pub fn run_gtp<P: Predictor, R: BufRead, W: Write>(engine: &mut Engine<P>, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let Some(line) = preprocess(&line?) else { continue };
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or("");
        let (id, command) = if first.bytes().all(|b| b.is_ascii_digit()) {
            (Some(first), words.next().unwrap_or(""))
        } else {
            (None, first)
        };
        let args: Vec<&str> = words.collect();
        let reply = engine.execute(&command.to_ascii_lowercase(), &args);
        output.write_all(format_reply(id, &reply).as_bytes())?;
        output.flush()?;
        if command.eq_ignore_ascii_case("quit") {
            break;
        }
    }
    Ok(())
}

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use tiedgo::goboard::{Board, Point};

/// Naive rules engine: flat `i8` grid, flood fills from scratch, simple-ko
/// by comparing against the position before the opponent's last move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefBoard {
    pub n: usize,
    /// 0 empty, 1 black, 2 white.
    pub cells: Vec<i8>,
    pub to_move: i8,
    /// Position before the most recent move (pass or play).
    pub previous: Option<Vec<i8>>,
}

impl RefBoard {
    pub fn new(n: usize) -> RefBoard {
        RefBoard { n, cells: vec![0; n * n], to_move: 1, previous: None }
    }

    fn neighbours(&self, i: usize) -> Vec<usize> {
        let (r, c, n) = (i / self.n, i % self.n, self.n);
        let mut v = Vec::with_capacity(4);
        if r > 0 {
            v.push(i - n);
        }
        if r + 1 < n {
            v.push(i + n);
        }
        if c > 0 {
            v.push(i - 1);
        }
        if c + 1 < n {
            v.push(i + 1);
        }
        v
    }

    /// Stones of the chain through `i` and whether it has any liberty.
    fn chain(cells: &[i8], board: &RefBoard, i: usize) -> (Vec<usize>, bool) {
        let color = cells[i];
        let mut seen = vec![false; cells.len()];
        let mut stack = vec![i];
        let mut stones = Vec::new();
        let mut free = false;
        seen[i] = true;
        while let Some(j) = stack.pop() {
            stones.push(j);
            for k in board.neighbours(j) {
                if cells[k] == 0 {
                    free = true;
                } else if cells[k] == color && !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        (stones, free)
    }

    pub fn liberties(&self, i: usize) -> usize {
        let (stones, _) = Self::chain(&self.cells, self, i);
        let mut libs: Vec<usize> = stones
            .iter()
            .flat_map(|&s| self.neighbours(s))
            .filter(|&k| self.cells[k] == 0)
            .collect();
        libs.sort_unstable();
        libs.dedup();
        libs.len()
    }

    /// Resulting grid if `to_move` plays at `i`, or `None` if illegal.
    pub fn try_play(&self, i: usize) -> Option<Vec<i8>> {
        if self.cells[i] != 0 {
            return None;
        }
        let me = self.to_move;
        let mut cells = self.cells.clone();
        cells[i] = me;
        for k in self.neighbours(i) {
            if cells[k] == 3 - me {
                let (stones, free) = Self::chain(&cells, self, k);
                if !free {
                    for s in stones {
                        cells[s] = 0;
                    }
                }
            }
        }
        if !Self::chain(&cells, self, i).1 {
            return None;
        }
        if self.previous.as_ref() == Some(&cells) {
            return None;
        }
        Some(cells)
    }

    pub fn legal(&self) -> Vec<bool> {
        (0..self.n * self.n).map(|i| self.try_play(i).is_some()).collect()
    }

    pub fn play(&mut self, i: usize) -> bool {
        match self.try_play(i) {
            Some(cells) => {
                self.previous = Some(std::mem::replace(&mut self.cells, cells));
                self.to_move = 3 - self.to_move;
                true
            }
            None => false,
        }
    }

    pub fn pass(&mut self) {
        self.previous = Some(self.cells.clone());
        self.to_move = 3 - self.to_move;
    }

    pub fn matches(&self, b: &Board) -> bool {
        use tiedgo::goboard::Color;
        let cells_match = b.cells().iter().zip(&self.cells).all(|(c, &r)| match c {
            None => r == 0,
            Some(Color::Black) => r == 1,
            Some(Color::White) => r == 2,
        });
        let turn = match b.to_move() {
            Color::Black => 1,
            Color::White => 2,
        };
        cells_match && turn == self.to_move
    }
}

/// Moves of a random game on the reference engine; `None` is a pass.
pub fn random_game<R: Rng>(rng: &mut R, n: usize, moves: usize, pass_prob: f64) -> Vec<Option<usize>> {
    let mut b = RefBoard::new(n);
    let mut out = Vec::with_capacity(moves);
    for _ in 0..moves {
        let legal: Vec<usize> = b.legal().iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect();
        if legal.is_empty() || rng.random_bool(pass_prob) {
            b.pass();
            out.push(None);
        } else {
            let i = legal[rng.random_range(0..legal.len())];
            b.play(i);
            out.push(Some(i));
        }
    }
    out
}

pub fn sgf_point(i: usize, n: usize) -> String {
    let (r, c) = (i / n, i % n);
    format!("{}{}", (b'a' + c as u8) as char, (b'a' + r as u8) as char)
}

/// SGF text for a game of alternating moves starting with Black.
pub fn game_to_sgf(moves: &[Option<usize>], n: usize, extra_root: &str) -> String {
    let mut s = format!("(;GM[1]FF[4]SZ[{n}]{extra_root}");
    for (k, m) in moves.iter().enumerate() {
        let color = if k % 2 == 0 { 'B' } else { 'W' };
        let v = m.map_or(String::new(), |i| sgf_point(i, n));
        write!(s, ";{color}[{v}]").unwrap();
    }
    s.push_str(")\n");
    s
}

/// Writes `games` random 19x19 games of `moves` moves each.
pub fn write_corpus<R: Rng>(rng: &mut R, dir: &Path, games: usize, moves: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for g in 0..games {
        let m = random_game(rng, 19, moves, 0.02);
        std::fs::write(dir.join(format!("game-{g:04}.sgf")), game_to_sgf(&m, 19, "")).unwrap();
    }
}

/// Board after `moves` random legal moves on goboard.
pub fn random_board<R: Rng>(rng: &mut R, moves: usize) -> Board {
    let mut b = Board::new(19).unwrap();
    for _ in 0..moves {
        let legal = b.legal_moves();
        if legal.is_empty() {
            b = b.pass();
            continue;
        }
        let p: Point = legal[rng.random_range(0..legal.len())];
        b = b.play(p).unwrap().board;
    }
    b
}

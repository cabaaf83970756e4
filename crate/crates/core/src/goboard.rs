//! Go rules: stone placement, chains, liberties, captures and simple-ko.
//!
//! Boards are values. [`Board::play`] returns a fresh board and never mutates
//! its receiver, so positions can be shared freely across threads.

use std::fmt;

use thiserror::Error;

use crate::symmetry::Symmetry;

pub const DEFAULT_SIZE: usize = 19;
/// Largest board an SGF coordinate can address.
pub const MAX_SIZE: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn opponent(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Color::Black => write!(f, "black"),
            Color::White => write!(f, "white"),
        }
    }
}

/// A grid point, `(0, 0)` being the top-left corner. Ordering is row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub row: u8,
    pub col: u8,
}

impl Point {
    pub fn new(row: usize, col: usize) -> Point {
        debug_assert!(row < 256 && col < 256);
        Point { row: row as u8, col: col as u8 }
    }

    pub fn from_index(index: usize, size: usize) -> Point {
        Point::new(index / size, index % size)
    }

    #[inline]
    pub fn index(self, size: usize) -> usize {
        self.row as usize * size + self.col as usize
    }

    pub fn in_bounds(self, size: usize) -> bool {
        (self.row as usize) < size && (self.col as usize) < size
    }

    pub fn reflect(self, g: Symmetry, size: usize) -> Point {
        let (r, c) = g.apply(self.row as usize, self.col as usize, size);
        Point::new(r, c)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IllegalReason {
    Occupied,
    Ko,
    Suicide,
}

impl fmt::Display for IllegalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IllegalReason::Occupied => write!(f, "occupied"),
            IllegalReason::Ko => write!(f, "ko"),
            IllegalReason::Suicide => write!(f, "suicide"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("invalid board size {0} (must be between 2 and {MAX_SIZE})")]
    InvalidSize(usize),
    #[error("point {0} is off the {1}x{1} board")]
    OutOfBounds(Point, usize),
    #[error("point {0} holds no stone")]
    NotAStone(Point),
    #[error("illegal move at {point}: {reason}")]
    IllegalMove { point: Point, reason: IllegalReason },
    #[error("setup stone at {0} leaves a chain without liberties")]
    DeadSetup(Point),
}

/// Result of a successful [`Board::play`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveOutcome {
    pub board: Board,
    pub captured: Vec<Point>,
    pub ko_created: Option<Point>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Board {
    size: usize,
    cells: Vec<Option<Color>>,
    to_move: Color,
    ko_point: Option<Point>,
    move_count: u32,
    /// Stones captured by Black and by White.
    captures: [u32; 2],
}

/// Chain labelling of a whole board, computed in one pass.
#[derive(Clone, Debug)]
pub struct ChainMap {
    chain_of: Vec<u32>,
    liberties: Vec<u32>,
    sizes: Vec<u32>,
}

const NO_CHAIN: u32 = u32::MAX;

impl ChainMap {
    /// Chain id of the stone at `index`, `None` for empty points.
    pub fn chain_at(&self, index: usize) -> Option<usize> {
        let c = self.chain_of[index];
        (c != NO_CHAIN).then_some(c as usize)
    }

    /// Liberties of the chain containing the stone at `index`.
    pub fn liberties_at(&self, index: usize) -> Option<u32> {
        self.chain_at(index).map(|c| self.liberties[c])
    }

    pub fn chain_size(&self, chain: usize) -> u32 {
        self.sizes[chain]
    }

    pub fn chain_count(&self) -> usize {
        self.liberties.len()
    }
}

impl Board {
    pub fn new(size: usize) -> Result<Board, BoardError> {
        if !(2..=MAX_SIZE).contains(&size) {
            return Err(BoardError::InvalidSize(size));
        }
        Ok(Board {
            size,
            cells: vec![None; size * size],
            to_move: Color::Black,
            ko_point: None,
            move_count: 0,
            captures: [0, 0],
        })
    }

    /// Rebuilds a board from stored parts. Fails if any chain lacks liberties
    /// or the ko point is occupied.
    pub fn from_parts(
        size: usize,
        cells: Vec<Option<Color>>,
        to_move: Color,
        ko_point: Option<Point>,
        move_count: u32,
    ) -> Result<Board, BoardError> {
        let mut board = Board::new(size)?;
        assert_eq!(cells.len(), size * size, "cell count does not match size");
        board.cells = cells;
        board.to_move = to_move;
        board.move_count = move_count;
        if let Some(ko) = ko_point {
            board.check_bounds(ko)?;
            if board.cells[ko.index(size)].is_some() {
                return Err(BoardError::IllegalMove { point: ko, reason: IllegalReason::Occupied });
            }
        }
        board.ko_point = ko_point;
        let chains = board.chains();
        if let Some(i) = (0..size * size).find(|&i| chains.liberties_at(i) == Some(0)) {
            return Err(BoardError::DeadSetup(Point::from_index(i, size)));
        }
        Ok(board)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn to_move(&self) -> Color {
        self.to_move
    }

    pub fn ko_point(&self) -> Option<Point> {
        self.ko_point
    }

    pub fn move_count(&self) -> u32 {
        self.move_count
    }

    pub fn captures(&self, by: Color) -> u32 {
        self.captures[by.slot()]
    }

    pub fn cells(&self) -> &[Option<Color>] {
        &self.cells
    }

    pub fn get(&self, p: Point) -> Option<Color> {
        self.cells[p.index(self.size)]
    }

    pub fn stone_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    fn check_bounds(&self, p: Point) -> Result<(), BoardError> {
        if p.in_bounds(self.size) {
            Ok(())
        } else {
            Err(BoardError::OutOfBounds(p, self.size))
        }
    }

    #[inline]
    fn for_each_neighbor(&self, index: usize, mut f: impl FnMut(usize)) {
        let n = self.size;
        let (r, c) = (index / n, index % n);
        if r > 0 {
            f(index - n);
        }
        if r + 1 < n {
            f(index + n);
        }
        if c > 0 {
            f(index - 1);
        }
        if c + 1 < n {
            f(index + 1);
        }
    }

    /// Flood fill from `start` over `cells`: stone indices of the chain and
    /// its liberty count.
    fn flood(&self, cells: &[Option<Color>], start: usize) -> (Vec<usize>, usize) {
        let color = cells[start];
        debug_assert!(color.is_some());
        let mut seen = vec![false; cells.len()];
        let mut liberty_seen = vec![false; cells.len()];
        let mut stack = vec![start];
        let mut chain = Vec::new();
        let mut liberties = 0;
        seen[start] = true;
        while let Some(i) = stack.pop() {
            chain.push(i);
            self.for_each_neighbor(i, |j| {
                if cells[j].is_none() {
                    if !liberty_seen[j] {
                        liberty_seen[j] = true;
                        liberties += 1;
                    }
                } else if cells[j] == color && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            });
        }
        (chain, liberties)
    }

    /// The maximal same-colored chain through `p` and its liberty count.
    /// Chain points come back in row-major order.
    pub fn chain_and_liberties(&self, p: Point) -> Result<(Vec<Point>, usize), BoardError> {
        self.check_bounds(p)?;
        let i = p.index(self.size);
        if self.cells[i].is_none() {
            return Err(BoardError::NotAStone(p));
        }
        let (mut chain, liberties) = self.flood(&self.cells, i);
        chain.sort_unstable();
        Ok((chain.into_iter().map(|i| Point::from_index(i, self.size)).collect(), liberties))
    }

    /// Labels every chain and counts its liberties.
    pub fn chains(&self) -> ChainMap {
        let n2 = self.cells.len();
        let mut chain_of = vec![NO_CHAIN; n2];
        let mut liberties = Vec::new();
        let mut sizes = Vec::new();
        let mut liberty_mark = vec![NO_CHAIN; n2];
        let mut stack = Vec::new();
        for start in 0..n2 {
            if self.cells[start].is_none() || chain_of[start] != NO_CHAIN {
                continue;
            }
            let id = liberties.len() as u32;
            let color = self.cells[start];
            let (mut libs, mut size) = (0u32, 0u32);
            chain_of[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                size += 1;
                self.for_each_neighbor(i, |j| {
                    if self.cells[j].is_none() {
                        if liberty_mark[j] != id {
                            liberty_mark[j] = id;
                            libs += 1;
                        }
                    } else if self.cells[j] == color && chain_of[j] == NO_CHAIN {
                        chain_of[j] = id;
                        stack.push(j);
                    }
                });
            }
            liberties.push(libs);
            sizes.push(size);
        }
        ChainMap { chain_of, liberties, sizes }
    }

    fn legality_with(&self, chains: &ChainMap, i: usize) -> Result<(), IllegalReason> {
        if self.cells[i].is_some() {
            return Err(IllegalReason::Occupied);
        }
        if self.ko_point.map(|k| k.index(self.size)) == Some(i) {
            return Err(IllegalReason::Ko);
        }
        let me = Some(self.to_move);
        let mut breathes = false;
        self.for_each_neighbor(i, |j| match self.cells[j] {
            None => breathes = true,
            c if c == me => breathes |= chains.liberties_at(j).unwrap() > 1,
            _ => breathes |= chains.liberties_at(j).unwrap() == 1,
        });
        if breathes {
            Ok(())
        } else {
            Err(IllegalReason::Suicide)
        }
    }

    /// Why `p` is illegal for the side to move, or `Ok(())` if it is legal.
    pub fn check_move(&self, p: Point) -> Result<Result<(), IllegalReason>, BoardError> {
        self.check_bounds(p)?;
        Ok(self.legality_with(&self.chains(), p.index(self.size)))
    }

    pub fn is_legal(&self, p: Point) -> Result<bool, BoardError> {
        Ok(self.check_move(p)?.is_ok())
    }

    /// All legal points for the side to move, row-major.
    pub fn legal_moves(&self) -> Vec<Point> {
        let chains = self.chains();
        (0..self.cells.len())
            .filter(|&i| self.legality_with(&chains, i).is_ok())
            .map(|i| Point::from_index(i, self.size))
            .collect()
    }

    /// Row-major legality mask for the side to move.
    pub fn legal_mask(&self) -> Vec<bool> {
        let chains = self.chains();
        (0..self.cells.len()).map(|i| self.legality_with(&chains, i).is_ok()).collect()
    }

    /// Places a stone for the side to move, resolves captures and updates the
    /// simple-ko point.
    pub fn play(&self, p: Point) -> Result<MoveOutcome, BoardError> {
        self.check_bounds(p)?;
        let n = self.size;
        let i = p.index(n);
        let illegal = |reason| BoardError::IllegalMove { point: p, reason };
        if self.cells[i].is_some() {
            return Err(illegal(IllegalReason::Occupied));
        }
        if self.ko_point == Some(p) {
            return Err(illegal(IllegalReason::Ko));
        }

        let me = self.to_move;
        let mut cells = self.cells.clone();
        cells[i] = Some(me);

        let mut captured = Vec::new();
        let mut neighbors = Vec::with_capacity(4);
        self.for_each_neighbor(i, |j| neighbors.push(j));
        for &j in &neighbors {
            if cells[j] == Some(me.opponent()) {
                let (chain, libs) = self.flood(&cells, j);
                if libs == 0 {
                    for &s in &chain {
                        cells[s] = None;
                    }
                    captured.extend(chain);
                }
            }
        }

        let (own_chain, own_libs) = self.flood(&cells, i);
        if own_libs == 0 {
            return Err(illegal(IllegalReason::Suicide));
        }

        let ko_created = if captured.len() == 1 && own_chain.len() == 1 && own_libs == 1 {
            Some(Point::from_index(captured[0], n))
        } else {
            None
        };

        let mut captures = self.captures;
        captures[me.slot()] += captured.len() as u32;
        captured.sort_unstable();

        let board = Board {
            size: n,
            cells,
            to_move: me.opponent(),
            ko_point: ko_created,
            move_count: self.move_count + 1,
            captures,
        };
        Ok(MoveOutcome {
            board,
            captured: captured.into_iter().map(|s| Point::from_index(s, n)).collect(),
            ko_created,
        })
    }

    /// The side to move passes: turn flips, any ko constraint lapses.
    pub fn pass(&self) -> Board {
        let mut board = self.clone();
        board.to_move = self.to_move.opponent();
        board.ko_point = None;
        board.move_count += 1;
        board
    }

    /// Same position with `color` to move. A change of side drops the ko
    /// constraint, which only ever binds the player who was to move.
    pub fn with_to_move(&self, color: Color) -> Board {
        if color == self.to_move {
            return self.clone();
        }
        let mut board = self.clone();
        board.to_move = color;
        board.ko_point = None;
        board
    }

    /// Places a setup (handicap) stone without changing the side to move.
    pub fn place_setup(&self, color: Color, p: Point) -> Result<Board, BoardError> {
        self.check_bounds(p)?;
        let mut board = self.clone();
        board.cells[p.index(self.size)] = Some(color);
        board.ko_point = None;
        Ok(board)
    }

    /// Removes a stone (SGF `AE`), leaving the side to move unchanged.
    pub fn clear_point(&self, p: Point) -> Result<Board, BoardError> {
        self.check_bounds(p)?;
        let mut board = self.clone();
        board.cells[p.index(self.size)] = None;
        board.ko_point = None;
        Ok(board)
    }

    /// Fails if some chain has no liberties, as can happen after setup stones.
    pub fn validate(&self) -> Result<(), BoardError> {
        let chains = self.chains();
        match (0..self.cells.len()).find(|&i| chains.liberties_at(i) == Some(0)) {
            Some(i) => Err(BoardError::DeadSetup(Point::from_index(i, self.size))),
            None => Ok(()),
        }
    }

    /// The position transformed by `g`; side to move and counters unchanged.
    pub fn reflect(&self, g: Symmetry) -> Board {
        let mut board = self.clone();
        board.cells = g.reflect_grid(&self.cells, self.size);
        board.ko_point = self.ko_point.map(|k| k.reflect(g, self.size));
        board
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Board {}x{} to_move={} ko={:?} moves={}",
            self.size, self.size, self.to_move, self.ko_point, self.move_count
        )?;
        write!(f, "{self}")
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.size {
            for c in 0..self.size {
                let p = Point::new(r, c);
                let ch = match self.get(p) {
                    Some(Color::Black) => 'X',
                    Some(Color::White) => 'O',
                    None if self.ko_point == Some(p) => '*',
                    None => '.',
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

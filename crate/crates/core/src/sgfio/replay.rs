use thiserror::Error;

use super::parse::{GameRecord, Move};
use super::shard::PackedPosition;
use crate::goboard::{Board, BoardError, Color, Point};

/// A position and the move the expert chose in it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub position: PackedPosition,
    pub target: Point,
    /// Moves played before this position, passes included.
    pub move_number: u16,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("setup stones: {0}")]
    Setup(BoardError),
    #[error("move {index}: {source}")]
    Move { index: usize, source: BoardError },
    #[error("game has {moves} moves, no position before move {index}")]
    NoSuchMove { index: usize, moves: usize },
    #[error("game longer than {} moves", u16::MAX)]
    TooLong,
    #[error("{0}x{0} boards cannot be packed into training examples")]
    UnsupportedSize(usize),
}

/// Position after the setup stones and before the first move.
pub fn initial_board(game: &GameRecord) -> Result<Board, ReplayError> {
    let mut board = Board::new(game.board_size).map_err(ReplayError::Setup)?;
    for &p in &game.setup_black {
        board = board.place_setup(Color::Black, p).map_err(ReplayError::Setup)?;
    }
    for &p in &game.setup_white {
        board = board.place_setup(Color::White, p).map_err(ReplayError::Setup)?;
    }
    board.validate().map_err(ReplayError::Setup)?;
    let first = game.first_player.or_else(|| game.moves.first().map(|m| m.0));
    Ok(match first {
        Some(c) => board.with_to_move(c),
        None => board,
    })
}

/// Walks the game, calling `visit(index, board_before, color, move)` for
/// each move. A move by the side not on turn is played as if it were on
/// turn; the record is authoritative.
fn walk(
    game: &GameRecord,
    mut visit: impl FnMut(usize, &Board, Color, Move) -> bool,
) -> Result<Board, ReplayError> {
    if game.moves.len() > u16::MAX as usize {
        return Err(ReplayError::TooLong);
    }
    let mut board = initial_board(game)?;
    for (index, &(color, mv)) in game.moves.iter().enumerate() {
        board = board.with_to_move(color);
        if !visit(index, &board, color, mv) {
            break;
        }
        board = match mv {
            Move::Pass => board.pass(),
            Move::Play(p) => board.play(p).map_err(|source| ReplayError::Move { index, source })?.board,
        };
    }
    Ok(board)
}

/// One example per non-pass move, each holding the position just before it.
pub fn replay(game: &GameRecord) -> Result<Vec<TrainingExample>, ReplayError> {
    if game.board_size > PackedPosition::MAX_SIZE {
        return Err(ReplayError::UnsupportedSize(game.board_size));
    }
    let mut out = Vec::with_capacity(game.moves.len());
    walk(game, |index, board, _, mv| {
        if let Move::Play(target) = mv {
            out.push(TrainingExample {
                position: PackedPosition::from_board(board),
                target,
                move_number: index as u16,
            });
        }
        true
    })?;
    Ok(out)
}

/// Position after `move_number` moves, with the side to play next on turn.
pub fn board_before(game: &GameRecord, move_number: usize) -> Result<Board, ReplayError> {
    if move_number > game.moves.len() {
        return Err(ReplayError::NoSuchMove { index: move_number, moves: game.moves.len() });
    }
    let mut found = None;
    let end = walk(game, |index, board, _, _| {
        if index == move_number {
            found = Some(board.clone());
            return false;
        }
        true
    })?;
    Ok(found.unwrap_or(end))
}

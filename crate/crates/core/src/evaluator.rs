//! Move-prediction metrics: top-1 accuracy, mean rank and mean probability
//! of the expert move, plus accuracy by move number and top-k curves.
//!
//! Ranks are 1-based among legal moves, ordered by descending probability
//! with ties broken by row-major point order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::encoder::{encode, EncodeError};
use crate::goboard::{Board, BoardError, Point};
use crate::sgfio::{Dataset, DatasetError, Split, TrainingExample};
use crate::symnet::{NetError, Network};

pub const MOVE_BUCKET: u32 = 10;
pub const DEFAULT_TOPK: usize = 50;
const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no legal move")]
    NoLegalMove,
    #[error("split {0} is empty")]
    EmptySplit(Split),
    #[error("predictor returned {got} probabilities for {expected} points")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Anything that assigns probabilities to the points of a position.
pub trait Predictor: Sync {
    /// One probability per point in row-major order, zero wherever `legal`
    /// is false.
    fn predict(&self, board: &Board, legal: &[bool]) -> Result<Vec<f64>, EvalError>;
}

impl Predictor for Network<f32> {
    fn predict(&self, board: &Board, legal: &[bool]) -> Result<Vec<f64>, EvalError> {
        let input = encode(board, self.encoding())?;
        Ok(self.forward(&input, legal)?.into_iter().map(f64::from).collect())
    }
}

/// Equal probability on every legal move.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn predict(&self, _board: &Board, legal: &[bool]) -> Result<Vec<f64>, EvalError> {
        let n = legal.iter().filter(|&&l| l).count();
        if n == 0 {
            return Err(EvalError::NoLegalMove);
        }
        Ok(legal.iter().map(|&l| if l { 1.0 / n as f64 } else { 0.0 }).collect())
    }
}

fn by_rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// Legal moves, most probable first.
pub fn predict_ranked<P: Predictor + ?Sized>(p: &P, board: &Board) -> Result<Vec<(Point, f64)>, EvalError> {
    let legal = board.legal_mask();
    if !legal.contains(&true) {
        return Err(EvalError::NoLegalMove);
    }
    let probs = p.predict(board, &legal)?;
    if probs.len() != legal.len() {
        return Err(EvalError::Shape { expected: legal.len(), got: probs.len() });
    }
    let mut ranked: Vec<(usize, f64)> = (0..legal.len()).filter(|&i| legal[i]).map(|i| (i, probs[i])).collect();
    ranked.sort_by(by_rank);
    Ok(ranked.into_iter().map(|(i, pr)| (Point::from_index(i, board.size()), pr)).collect())
}

/// 1-based rank of `target` among the legal points.
pub fn rank_of(probs: &[f64], legal: &[bool], target: usize) -> usize {
    let t = (target, probs[target]);
    1 + (0..probs.len()).filter(|&j| legal[j] && j != target && by_rank(&(j, probs[j]), &t) == Ordering::Less).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub count: u64,
    pub accuracy: f64,
    pub mean_rank: f64,
    pub mean_probability: f64,
}

impl Metrics {
    pub fn to_key_values(&self) -> String {
        format!(
            "count={}\naccuracy={:.4}\nmean_rank={:.4}\nmean_probability={:.4}\n",
            self.count, self.accuracy, self.mean_rank, self.mean_probability
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    /// `rank_counts[r]` examples had their target at rank `r`.
    pub rank_counts: Vec<u64>,
    /// Bucket start (a multiple of [`MOVE_BUCKET`]) to `(count, correct)`.
    pub move_buckets: BTreeMap<u32, (u64, u64)>,
}

impl Curves {
    fn total(&self) -> u64 {
        self.rank_counts.iter().sum()
    }

    /// Fraction of examples whose target is among the `k` best moves.
    pub fn topk(&self, k: usize) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = self.rank_counts.iter().take(k + 1).sum();
        hits as f64 / total as f64
    }

    pub fn topk_table(&self, max_k: usize) -> Vec<(usize, f64)> {
        (1..=max_k).map(|k| (k, self.topk(k))).collect()
    }

    pub fn accuracy_by_move_number(&self) -> Vec<(u32, u64, f64)> {
        self.move_buckets.iter().map(|(&b, &(n, c))| (b, n, c as f64 / n as f64)).collect()
    }

    pub fn topk_tsv(&self, max_k: usize) -> String {
        let mut s = String::from("k\taccuracy\n");
        for (k, a) in self.topk_table(max_k) {
            writeln!(s, "{k}\t{a:.6}").unwrap();
        }
        s
    }

    pub fn move_number_tsv(&self) -> String {
        let mut s = String::from("move_from\tmove_to\tcount\taccuracy\n");
        for (b, n, a) in self.accuracy_by_move_number() {
            writeln!(s, "{b}\t{}\t{n}\t{a:.6}", b + MOVE_BUCKET - 1).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub curves: Curves,
}

struct Scored {
    rank: usize,
    probability: f64,
    move_number: u16,
}

fn score_one<F>(ex: &TrainingExample, predict: &F) -> Result<Scored, EvalError>
where
    F: Fn(&TrainingExample, &Board, &[bool]) -> Result<Vec<f64>, EvalError>,
{
    let board = ex.board()?;
    let legal = board.legal_mask();
    let probs = predict(ex, &board, &legal)?;
    if probs.len() != legal.len() {
        return Err(EvalError::Shape { expected: legal.len(), got: probs.len() });
    }
    let target = ex.target.index(board.size());
    Ok(Scored { rank: rank_of(&probs, &legal, target), probability: probs[target], move_number: ex.move_number })
}

fn reduce(scored: &[Scored], points: usize) -> Evaluation {
    let mut rank_counts = vec![0u64; points + 1];
    let mut move_buckets: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    let (mut rank_sum, mut prob_sum) = (0u64, 0.0f64);
    for s in scored {
        rank_counts[s.rank.min(points)] += 1;
        rank_sum += s.rank as u64;
        prob_sum += s.probability;
        let bucket = (s.move_number as u32 / MOVE_BUCKET) * MOVE_BUCKET;
        let e = move_buckets.entry(bucket).or_default();
        e.0 += 1;
        e.1 += (s.rank == 1) as u64;
    }
    let n = scored.len() as u64;
    let d = n.max(1) as f64;
    Evaluation {
        metrics: Metrics {
            count: n,
            accuracy: rank_counts[1] as f64 / d,
            mean_rank: rank_sum as f64 / d,
            mean_probability: prob_sum / d,
        },
        curves: Curves { rank_counts, move_buckets },
    }
}

/// Scores examples with a predictor that may look at the example itself.
pub fn evaluate_examples<F>(examples: &[TrainingExample], points: usize, predict: F) -> Result<Evaluation, EvalError>
where
    F: Fn(&TrainingExample, &Board, &[bool]) -> Result<Vec<f64>, EvalError> + Sync,
{
    let scored: Vec<Scored> = examples.par_iter().map(|ex| score_one(ex, &predict)).collect::<Result<_, _>>()?;
    Ok(reduce(&scored, points))
}

fn evaluate_split<F>(data: &Dataset, split: Split, limit: Option<usize>, predict: F) -> Result<Evaluation, EvalError>
where
    F: Fn(&TrainingExample, &Board, &[bool]) -> Result<Vec<f64>, EvalError> + Sync,
{
    let n = limit.map_or(data.len(split), |l| l.min(data.len(split)));
    if n == 0 {
        return Err(EvalError::EmptySplit(split));
    }
    let mut scored = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let examples = data.load_batch(split, &idx)?;
        let part: Vec<Scored> = examples.par_iter().map(|ex| score_one(ex, &predict)).collect::<Result<_, _>>()?;
        scored.extend(part);
    }
    let side = crate::goboard::DEFAULT_SIZE;
    Ok(reduce(&scored, side * side))
}

/// Metrics and curves of `predictor` on the first `limit` examples of a split.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    data: &Dataset,
    split: Split,
    limit: Option<usize>,
) -> Result<Evaluation, EvalError> {
    evaluate_split(data, split, limit, |_, board, legal| predictor.predict(board, legal))
}

/// Reference run with all probability on the stored target.
pub fn evaluate_oracle(data: &Dataset, split: Split, limit: Option<usize>) -> Result<Evaluation, EvalError> {
    evaluate_split(data, split, limit, |ex, board, legal| {
        let mut p = vec![0.0; legal.len()];
        p[ex.target.index(board.size())] = 1.0;
        Ok(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_tie_break_is_row_major() {
        let probs = [0.25, 0.25, 0.25, 0.25];
        let legal = [true; 4];
        assert_eq!((0..4).map(|t| rank_of(&probs, &legal, t)).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        let probs = [0.1, 0.6, 0.0, 0.3];
        let legal = [true, true, false, true];
        assert_eq!(rank_of(&probs, &legal, 1), 1);
        assert_eq!(rank_of(&probs, &legal, 3), 2);
        assert_eq!(rank_of(&probs, &legal, 0), 3);
    }

    #[test]
    fn ranked_list_matches_rank_of() {
        let b = Board::new(19).unwrap().play(Point::new(3, 3)).unwrap().board;
        let ranked = predict_ranked(&UniformPredictor, &b).unwrap();
        assert_eq!(ranked.len(), 360);
        assert_eq!(ranked[0].0, Point::new(0, 0));
        assert!(ranked.windows(2).all(|w| w[0].0 < w[1].0));
        let total: f64 = ranked.iter().map(|r| r.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curves_from_counts() {
        let scored: Vec<Scored> = [(1, 0), (2, 5), (1, 12), (4, 19), (1, 25)]
            .iter()
            .map(|&(rank, mv)| Scored { rank, probability: 0.5, move_number: mv })
            .collect();
        let e = reduce(&scored, 25);
        assert_eq!(e.metrics.count, 5);
        assert!((e.metrics.accuracy - 0.6).abs() < 1e-12);
        assert!((e.metrics.mean_rank - 1.8).abs() < 1e-12);
        assert_eq!(e.curves.topk(1), e.metrics.accuracy);
        assert!((e.curves.topk(2) - 0.8).abs() < 1e-12);
        assert_eq!(e.curves.topk(25), 1.0);
        assert_eq!(
            e.curves.accuracy_by_move_number(),
            vec![(0, 2, 0.5), (10, 2, 0.5), (20, 1, 1.0)]
        );
        assert!(e.curves.topk_tsv(3).starts_with("k\taccuracy\n1\t0.600000\n"));
        assert!(e.metrics.to_key_values().contains("accuracy=0.6000"));
    }
}

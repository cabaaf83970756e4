//! Minibatch gradient descent with a stepped learning-rate schedule.

mod checkpoint;
mod config;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use checkpoint::{
    Checkpoint, CheckpointError, CheckpointHeader, EpochStats, Progress, TensorEntry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{default_schedule, Hyperparameters, Phase, TrainConfig, DEFAULT_SEED};

use crate::encoder::{encode_as, EncodeError};
use crate::goboard::BoardError;
use crate::sgfio::{Dataset, DatasetError, Split, TrainingExample};
use crate::symnet::{masked_nll, NetError, Network, NetworkSpec, Sample, Scalar};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train.log";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("diverged at step {step}: batch loss {loss} (limit {limit})")]
    Divergence { step: u64, loss: f64, limit: f64 },
    #[error("checkpoint does not match config: {0}")]
    ResumeMismatch(String),
}

/// Fresh network: free weights drawn from `N(0, std²)` with a generator
/// seeded by `seed`, biases zero.
pub fn init_network<T: Scalar>(spec: &NetworkSpec, seed: u64, std: f64) -> Result<Network<T>, TrainError> {
    let mut net = Network::new(spec.clone()).map_err(|e| TrainError::Config(e.to_string()))?;
    net.init_normal(&mut ChaCha8Rng::seed_from_u64(seed), std);
    Ok(net)
}

/// Loss above which a step counts as divergence: ten times the loss of a
/// uniform guess over the board.
pub fn divergence_limit(board_size: usize) -> f64 {
    10.0 * ((board_size * board_size) as f64).ln()
}

/// One plain gradient step on the mean batch loss. Returns the loss before
/// the step. The network is left untouched if the loss is non-finite or
/// above [`divergence_limit`].
pub fn sgd_step<T: Scalar>(net: &mut Network<T>, batch: &[Sample<T>], lr: f64) -> Result<f64, TrainError> {
    let (grads, loss) = net.batch_gradient(batch)?;
    let loss = loss.as_f64();
    let limit = divergence_limit(net.board_size());
    if !loss.is_finite() || loss > limit {
        return Err(TrainError::Divergence { step: 0, loss, limit });
    }
    net.apply_gradient(&grads, T::from_f64(lr))?;
    Ok(loss)
}

/// Encodes a stored example. Without `masked`, every point is a candidate.
pub fn example_sample<T: Scalar>(
    ex: &TrainingExample,
    spec: &NetworkSpec,
    masked: bool,
) -> Result<Sample<T>, TrainError> {
    let board = ex.board()?;
    let input = encode_as::<T>(&board, spec.encoding)?;
    let mask = if masked { board.legal_mask() } else { vec![true; spec.points()] };
    Ok(Sample { input, mask, target: ex.target.index(spec.board_size) })
}

pub fn load_samples<T: Scalar>(
    data: &Dataset,
    split: Split,
    indices: &[usize],
    spec: &NetworkSpec,
    masked: bool,
) -> Result<Vec<Sample<T>>, TrainError> {
    let examples = data.load_batch(split, indices)?;
    examples.par_iter().map(|ex| example_sample(ex, spec, masked)).collect()
}

/// Mean loss and top-1 accuracy. Sums are taken in example order.
pub fn score<T: Scalar>(net: &Network<T>, samples: &[Sample<T>]) -> Result<(f64, f64), TrainError> {
    let per: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let logits = net.logits(&s.input)?;
            let nll = masked_nll(&logits, &s.mask, s.target)?.as_f64();
            let best = (0..logits.len())
                .filter(|&i| s.mask[i])
                .fold(None, |b: Option<usize>, i| match b {
                    Some(j) if logits[j] >= logits[i] => Some(j),
                    _ => Some(i),
                });
            Ok((nll, best == Some(s.target)))
        })
        .collect::<Result<_, NetError>>()?;
    let n = per.len().max(1) as f64;
    let nll = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((nll, acc))
}

/// Shuffled example order of 0-based `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from this checkpoint instead of initializing.
    pub resume: Option<PathBuf>,
    /// Stop (and checkpoint) once this many optimizer steps have been taken
    /// in total.
    pub stop_after_steps: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochStats>,
    pub progress: Progress,
    pub finished: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.ckpt")
}

/// Runs (or resumes) a training schedule, writing `epoch-NNNN.ckpt` and
/// `last.ckpt` after every epoch and appending to `train.log`.
pub fn train(cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let hyper = cfg.hyper();
    let data = Dataset::open(&cfg.manifest)?;
    let n_train = data.len(Split::Train);
    if n_train == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut ck = match &opts.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.header.network != cfg.network {
                return Err(TrainError::ResumeMismatch("network differs".into()));
            }
            if ck.header.training.as_ref() != Some(&hyper) {
                return Err(TrainError::ResumeMismatch("hyperparameters differ".into()));
            }
            ck
        }
        None => {
            let net = init_network::<f32>(&cfg.network, hyper.seed, hyper.init_std)?;
            let mut ck = Checkpoint::from_network(net);
            ck.header.training = Some(hyper.clone());
            ck
        }
    };
    fs::create_dir_all(&cfg.checkpoint_dir).map_err(io_err(&cfg.checkpoint_dir))?;
    let last = cfg.checkpoint_dir.join(LAST_CHECKPOINT);
    let log_path = cfg.checkpoint_dir.join(TRAIN_LOG);
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
    if log.metadata().map(|m| m.len() == 0).unwrap_or(false) {
        writeln!(log, "epoch\tlr\ttrain_nll\tval_nll\tval_accuracy\tseconds").map_err(io_err(&log_path))?;
    }

    let n_val = cfg.validation_limit.map_or(data.len(Split::Validation), |l| l.min(data.len(Split::Validation)));
    let val_indices: Vec<usize> = (0..n_val).collect();
    let total = hyper.total_epochs();
    let batches_per_epoch = n_train.div_ceil(hyper.batch_size);
    while ck.header.progress.epoch < total {
        let epoch = ck.header.progress.epoch;
        let lr = hyper.lr_at(epoch).expect("epoch inside schedule");
        let started = Instant::now();
        let order = epoch_order(hyper.seed, epoch, n_train);
        for (b, idx) in order.chunks(hyper.batch_size).enumerate().skip(ck.header.progress.batch) {
            let samples = load_samples::<f32>(&data, Split::Train, idx, &cfg.network, hyper.masked)?;
            let step = ck.header.progress.steps + 1;
            let loss = sgd_step(&mut ck.network, &samples, lr).map_err(|e| match e {
                TrainError::Divergence { loss, limit, .. } => TrainError::Divergence { step, loss, limit },
                e => e,
            })?;
            let p = &mut ck.header.progress;
            p.batch = b + 1;
            p.steps = step;
            p.epoch_loss_sum += loss;
            log::debug!("epoch {} batch {}/{} loss {loss:.4}", epoch + 1, b + 1, batches_per_epoch);
            if opts.stop_after_steps == Some(step) && p.batch < batches_per_epoch {
                ck.save(&last)?;
                return Ok(TrainOutcome {
                    checkpoint: last,
                    history: ck.header.history.clone(),
                    progress: ck.header.progress.clone(),
                    finished: false,
                });
            }
        }
        let (val_nll, val_accuracy) = if n_val > 0 {
            let samples = load_samples::<f32>(&data, Split::Validation, &val_indices, &cfg.network, hyper.masked)?;
            let (nll, acc) = score(&ck.network, &samples)?;
            (Some(nll), Some(acc))
        } else {
            (None, None)
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            train_nll: ck.header.progress.epoch_loss_sum / batches_per_epoch as f64,
            val_nll,
            val_accuracy,
        };
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(
            log,
            "{}\t{}\t{:.6}\t{}\t{}\t{:.1}",
            stats.epoch,
            lr,
            stats.train_nll,
            fmt(val_nll),
            fmt(val_accuracy),
            started.elapsed().as_secs_f64()
        )
        .map_err(io_err(&log_path))?;
        log::info!(
            "epoch {} lr {lr} train_nll {:.4} val_nll {} val_acc {}",
            stats.epoch,
            stats.train_nll,
            fmt(val_nll),
            fmt(val_accuracy)
        );
        ck.header.history.push(stats);
        let steps = ck.header.progress.steps;
        ck.header.progress = Progress { epoch: epoch + 1, batch: 0, steps, epoch_loss_sum: 0.0 };
        ck.save(&cfg.checkpoint_dir.join(epoch_checkpoint_name(epoch + 1)))?;
        ck.save(&last)?;
        if opts.stop_after_steps.is_some_and(|s| steps >= s) && epoch + 1 < total {
            return Ok(TrainOutcome {
                checkpoint: last,
                history: ck.header.history.clone(),
                progress: ck.header.progress.clone(),
                finished: false,
            });
        }
    }
    if !last.exists() {
        ck.save(&last)?;
    }
    Ok(TrainOutcome { checkpoint: last, history: ck.header.history, progress: ck.header.progress, finished: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncodingConfig;
    use crate::symnet::{ConvSpec, Tensor3};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            board_size: 5,
            encoding: EncodingConfig::BASIC,
            layers: vec![ConvSpec { filters: 2, kernel: 3 }],
            activation: Default::default(),
            tied: true,
        }
    }

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let a: Network<f32> = init_network(&tiny_spec(), 3, 0.01).unwrap();
        let b: Network<f32> = init_network(&tiny_spec(), 3, 0.01).unwrap();
        let c: Network<f32> = init_network(&tiny_spec(), 4, 0.01).unwrap();
        assert_eq!(a.tensors(), b.tensors());
        assert_ne!(a.tensors(), c.tensors());
        let names = a.tensor_names();
        for (name, t) in names.iter().zip(a.tensors()) {
            if name.ends_with("bias") {
                assert!(t.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut net: Network<f64> = init_network(&tiny_spec(), 1, 0.1).unwrap();
        let before: Vec<Vec<f64>> = net.tensors().iter().map(|t| t.to_vec()).collect();
        let s = Sample { input: Tensor3::from_vec(2, 5, 5, vec![0.5; 50]), mask: vec![true; 25], target: 3 };
        sgd_step(&mut net, &[s], 0.0).unwrap();
        let after: Vec<Vec<f64>> = net.tensors().iter().map(|t| t.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn divergence_detected() {
        let mut net: Network<f64> = init_network(&tiny_spec(), 1, 0.1).unwrap();
        let n = net.tensors().len();
        net.set_tensor(n - 1, vec![1e3, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let before: Vec<Vec<f64>> = net.tensors().iter().map(|t| t.to_vec()).collect();
        // Target at the centre, the heavily favoured corner orbit gets 1e3.
        let s = Sample { input: Tensor3::zeros(2, 5, 5), mask: vec![true; 25], target: 12 };
        assert!(matches!(sgd_step(&mut net, &[s], 0.1), Err(TrainError::Divergence { .. })));
        let after: Vec<Vec<f64>> = net.tensors().iter().map(|t| t.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn epoch_orders_differ_and_repeat() {
        let a = epoch_order(42, 0, 50);
        assert_eq!(a, epoch_order(42, 0, 50));
        assert_ne!(a, epoch_order(42, 1, 50));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn divergence_limit_value() {
        assert!((divergence_limit(19) - 10.0 * 361f64.ln()).abs() < 1e-12);
    }
}

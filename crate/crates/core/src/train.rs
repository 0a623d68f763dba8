//! Loss, metrics, early stopping and the seeded training loop.
//!
//! Each sample gets its own tape; a batch gradient is the mean of per-sample
//! gradients summed in batch order, so results do not depend on how many
//! threads evaluated the samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::EncodedSequence;
use crate::error::{Error, Result};
use crate::lif::GradientMode;
use crate::network::{Network, DEFAULT_DROPOUT};
use crate::optim::OptimizerKind;
use crate::parallel::{map_ordered, Parallelism};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clipped here before taking the log.
pub const PROB_FLOOR: Scalar = 1e-12;
const ROW_SUM_TOLERANCE: Scalar = 1e-6;

const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4521;
const DROPOUT_SALT: u64 = 0x4452_4f50_4f55_5421;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: Scalar,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub dropout: Scalar,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            batch_size: 8,
            max_epochs: 200,
            patience: 30,
            seed: 0,
            gradient_mode: GradientMode::Surrogate,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_accuracy: Scalar,
    pub test_accuracy: Scalar,
    pub mean_loss: Scalar,
    /// Fraction of ones in the LIF rasters over the test set.
    pub spike_density: Scalar,
}

/// `−mean_t log p_t(label)` for `probs` of shape `[T × classes]`.
pub fn cross_entropy_time_distributed(tape: &mut Tape, probs: Var, label: usize) -> Result<Var> {
    let (_, classes) = tape.value(probs).dims2("cross_entropy")?;
    if label >= classes {
        return Err(Error::OutOfRange(format!("label {label} with {classes} classes")));
    }
    for row in tape.value(probs).data().chunks(classes) {
        let s: Scalar = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("probability row sums to {s}, not 1")));
        }
    }
    let mut onehot = Tensor::zeros(&[classes, 1]);
    onehot.data_mut()[label] = 1.0;
    let onehot = tape.constant(onehot);
    let picked = tape.matmul(probs, onehot)?;
    let floored = tape.clamp_min(picked, PROB_FLOOR)?;
    let logp = tape.log(floored)?;
    let mean = tape.mean(logp)?;
    tape.neg(mean)
}

/// Mean over time of the probability assigned to `label`.
///
/// This is a conservative accuracy: a network that becomes certain only
/// late in the sequence scores well below 1.
pub fn accuracy_time_averaged(probs: &Tensor, label: usize) -> Result<Scalar> {
    let (steps, classes) = probs.dims2("accuracy")?;
    if label >= classes {
        return Err(Error::OutOfRange(format!("label {label} with {classes} classes")));
    }
    let total: Scalar = probs.data().chunks(classes).map(|row| row[label]).sum();
    Ok(total / steps as Scalar)
}

/// Outcome of one sequence through the network.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePass {
    pub loss: Scalar,
    pub accuracy: Scalar,
    pub spike_density: Scalar,
    /// Class probabilities averaged over time.
    pub mean_probs: Vec<Scalar>,
    /// Per-parameter gradients, in `Network::parameters` order.
    pub grads: Option<Vec<Tensor>>,
}

/// Runs one sequence. Dropout is active iff `dropout_rng` is given;
/// gradients are computed iff `with_grads`.
pub fn sample_pass(
    net: &Network,
    seq: &EncodedSequence,
    mode: GradientMode,
    dropout_rng: Option<ChaCha8Rng>,
    with_grads: bool,
) -> Result<SamplePass> {
    let mut tape = Tape::new();
    let params = if with_grads {
        net.bind(&mut tape)
    } else {
        net.bind_frozen(&mut tape)
    };
    let mut rng = dropout_rng;
    let fwd = net.forward(&mut tape, &params, &seq.x, mode, rng.as_mut())?;
    let loss = cross_entropy_time_distributed(&mut tape, fwd.probs, seq.label)?;
    let probs = tape.value(fwd.probs);
    let (steps, classes) = probs.dims2("sample_pass")?;
    let mut mean_probs = vec![0.0; classes];
    for row in probs.data().chunks(classes) {
        for (m, p) in mean_probs.iter_mut().zip(row) {
            *m += p;
        }
    }
    for m in &mut mean_probs {
        *m /= steps as Scalar;
    }
    let spikes = tape.value(fwd.lif.spikes);
    let grads = if with_grads {
        let mut g = tape.backward(loss)?;
        Some(params.iter().map(|&p| g.take(p).expect("leaf gradients are always present")).collect())
    } else {
        None
    };
    Ok(SamplePass {
        loss: tape.value(loss).data()[0],
        accuracy: accuracy_time_averaged(probs, seq.label)?,
        spike_density: spikes.sum() / spikes.len() as Scalar,
        mean_probs,
        grads,
    })
}

/// Mean gradient and loss over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    pub grads: Vec<Tensor>,
    pub loss: Scalar,
}

/// Gradients of the mean batch loss. `dropout_seeds[i]`, when given, seeds
/// the dropout masks of `batch[i]`.
pub fn batch_gradients(
    net: &Network,
    batch: &[&EncodedSequence],
    mode: GradientMode,
    dropout_seeds: Option<&[(u64, u64)]>,
    parallelism: Parallelism,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let passes = map_ordered(batch, parallelism, |i, seq| {
        let rng = dropout_seeds.map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s[i].0);
            rng.set_stream(s[i].1);
            rng
        });
        sample_pass(net, seq, mode, rng, true)
    });
    let mut grads: Option<Vec<Tensor>> = None;
    let mut loss = 0.0;
    for pass in passes {
        let pass = pass?;
        loss += pass.loss;
        let g = pass.grads.expect("requested gradients");
        match &mut grads {
            None => grads = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b)?;
                }
            }
        }
    }
    let n = batch.len() as Scalar;
    let grads = grads
        .expect("non-empty batch")
        .into_iter()
        .map(|g| g.map(|v| v / n))
        .collect::<Vec<_>>();
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            op: if bad < net.spiking_block_len() { "spiking-layer gradient" } else { "readout gradient" },
        });
    }
    Ok(BatchGradients { grads, loss: loss / n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: Scalar,
    pub mean_loss: Scalar,
    pub spike_density: Scalar,
    /// `confusion[true][predicted]`, predicting the arg-max of the
    /// time-averaged probabilities.
    pub confusion: Vec<Vec<usize>>,
}

/// Evaluation-mode metrics (no dropout, no gradients).
pub fn evaluate(net: &Network, samples: &[EncodedSequence], parallelism: Parallelism) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let classes = net.classes();
    let passes = map_ordered(samples, parallelism, |_, seq| {
        sample_pass(net, seq, GradientMode::Disabled, None, false)
    });
    let mut confusion = vec![vec![0; classes]; classes];
    let (mut acc, mut loss, mut density) = (0.0, 0.0, 0.0);
    for (seq, pass) in samples.iter().zip(passes) {
        let pass = pass?;
        acc += pass.accuracy;
        loss += pass.loss;
        density += pass.spike_density;
        let predicted = pass
            .mean_probs
            .iter()
            .enumerate()
            .fold(0, |best, (k, &p)| if p > pass.mean_probs[best] { k } else { best });
        confusion[seq.label][predicted] += 1;
    }
    let n = samples.len() as Scalar;
    Ok(Evaluation {
        accuracy: acc / n,
        mean_loss: loss / n,
        spike_density: density / n,
        confusion,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Waiting,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly better
/// monitored value. Monitoring starts at the first observed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<Scalar>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn best(&self) -> Option<Scalar> {
        self.best
    }

    pub fn observe(&mut self, value: Scalar) -> Progress {
        if self.best.map_or(true, |b| value > b) {
            self.best = Some(value);
            self.since_best = 0;
            return Progress::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            Progress::Stop
        } else {
            Progress::Waiting
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    MaxEpochs,
    /// A non-finite value appeared; the run keeps its last good checkpoint.
    Diverged(String),
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: TrainConfig,
    /// Entry 0 describes the untrained network.
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best: Network,
    pub initial: Network,
    pub stop: StopReason,
}

impl TrainRun {
    pub fn best_metrics(&self) -> &EpochMetrics {
        &self.history[self.best_epoch]
    }
}

fn epoch_metrics(
    net: &Network,
    epoch: usize,
    mean_loss: Option<Scalar>,
    train: &[EncodedSequence],
    test: &[EncodedSequence],
    parallelism: Parallelism,
) -> Result<EpochMetrics> {
    let on_train = evaluate(net, train, parallelism)?;
    let on_test = evaluate(net, test, parallelism)?;
    Ok(EpochMetrics {
        epoch,
        train_accuracy: on_train.accuracy,
        test_accuracy: on_test.accuracy,
        mean_loss: mean_loss.unwrap_or(on_train.mean_loss),
        spike_density: on_test.spike_density,
    })
}

/// Trains `net` in place of a copy and returns the full history together
/// with the network from the epoch of highest test accuracy.
pub fn train(
    net: Network,
    train_set: &[EncodedSequence],
    test_set: &[EncodedSequence],
    config: &TrainConfig,
    parallelism: Parallelism,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainRun> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Data("training needs non-empty train and test sets".into()));
    }
    let mut net = net;
    net.round_to_storage_precision();
    let initial = net.clone();
    let mut optimizer = config.optimizer.build(config.learning_rate)?;
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = vec![epoch_metrics(&net, 0, None, train_set, test_set, parallelism)?];
    on_epoch(&history[0]);
    let mut best = (0, net.clone());
    let mut stop = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
        shuffle_rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let seeds: Option<Vec<(u64, u64)>> = (net.dropout.rate > 0.0).then(|| {
                chunk
                    .iter()
                    .map(|&i| (config.seed ^ DROPOUT_SALT, ((epoch as u64) << 32) | i as u64))
                    .collect()
            });
            let step = batch_gradients(&net, &batch, config.gradient_mode, seeds.as_deref(), parallelism)
                .and_then(|g| {
                    optimizer.step(net.parameters_mut(), &g.grads)?;
                    Ok(g.loss)
                });
            match step {
                Ok(loss) => loss_sum += loss * chunk.len() as Scalar,
                Err(e @ Error::NonFinite { .. }) => {
                    log::error!("epoch {epoch}: {e}; keeping epoch {} checkpoint", best.0);
                    stop = StopReason::Diverged(e.to_string());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            net.clamp_lif();
            net.round_to_storage_precision();
        }

        let metrics = match epoch_metrics(
            &net,
            epoch,
            Some(loss_sum / train_set.len() as Scalar),
            train_set,
            test_set,
            parallelism,
        ) {
            Ok(m) if m.mean_loss.is_finite() => m,
            Ok(_) | Err(Error::NonFinite { .. }) => {
                stop = StopReason::Diverged(format!("non-finite metrics at epoch {epoch}"));
                break;
            }
            Err(e) => return Err(e),
        };
        on_epoch(&metrics);
        history.push(metrics);
        match stopper.observe(metrics.test_accuracy) {
            Progress::Improved => best = (epoch, net.clone()),
            Progress::Waiting => {}
            Progress::Stop => {
                stop = StopReason::Patience;
                break;
            }
        }
    }

    Ok(TrainRun {
        config: config.clone(),
        history,
        best_epoch: best.0,
        best: best.1,
        initial,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_probabilities_give_log_ten() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::full(&[5, 10], 0.1));
        let loss = cross_entropy_time_distributed(&mut tape, p, 3).unwrap();
        assert!((tape.value(loss).data()[0] - (10.0 as Scalar).ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_gives_zero_loss() {
        let mut tape = Tape::new();
        let mut t = Tensor::zeros(&[2, 3]);
        t.data_mut()[1] = 1.0;
        t.data_mut()[4] = 1.0;
        let p = tape.constant(t);
        let loss = cross_entropy_time_distributed(&mut tape, p, 1).unwrap();
        assert_eq!(tape.value(loss).data()[0], 0.0);
    }

    #[test]
    fn zero_probability_is_clipped() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let loss = cross_entropy_time_distributed(&mut tape, p, 1).unwrap();
        assert!((tape.value(loss).data()[0] + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn rows_must_be_distributions() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::full(&[2, 2], 0.4));
        assert!(cross_entropy_time_distributed(&mut tape, p, 0).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let constant = Tensor::from_rows(&vec![vec![0.4, 0.6]; 7]).unwrap();
        assert!((accuracy_time_averaged(&constant, 0).unwrap() - 0.4).abs() < 1e-15);
        let uniform = Tensor::full(&[9, 10], 0.1);
        assert!((accuracy_time_averaged(&uniform, 4).unwrap() - 0.1).abs() < 1e-15);
        let ramp: Vec<Vec<Scalar>> = (0..101)
            .map(|t| {
                let p = t as Scalar / 100.0;
                vec![p, 1.0 - p]
            })
            .collect();
        let ramp = Tensor::from_rows(&ramp).unwrap();
        assert!((accuracy_time_averaged(&ramp, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn patience_counts_from_the_first_epoch() {
        let mut s = EarlyStopping::new(30);
        let mut stopped_at = None;
        for epoch in 1..100 {
            if s.observe(1.0 - epoch as Scalar * 0.01) == Progress::Stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(31));
    }

    #[test]
    fn equal_value_is_not_an_improvement() {
        let mut s = EarlyStopping::new(2);
        assert_eq!(s.observe(0.5), Progress::Improved);
        assert_eq!(s.observe(0.5), Progress::Waiting);
        assert_eq!(s.observe(0.5), Progress::Stop);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}

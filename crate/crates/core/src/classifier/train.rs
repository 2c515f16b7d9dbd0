use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad_refs, Example, SoftmaxModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Length of the decay schedule and cap on steps run. Defaults to
    /// `epochs * steps_per_epoch`.
    pub total_steps: Option<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub eval_each_epoch: bool,
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 5.0e-5,
            total_steps: None,
            batch_size: 32,
            epochs: 3,
            l2: 1e-4,
            seed: 42,
            eval_each_epoch: true,
            log_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive");
        }
        if self.total_steps == Some(0) {
            return bad("total_steps must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

/// Linear decay: `initial * max(0, 1 - step / total)`.
pub fn learning_rate(initial: f64, step: usize, total_steps: usize) -> f64 {
    initial * (1.0 - step as f64 / total_steps as f64).max(0.0)
}

/// One line of the training log. Training rows carry loss, rate and
/// gradient norm; epoch-boundary rows carry the validation loss. A step that
/// is both gets a single row with every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: f64,
    pub training_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    pub learning_rate: Option<f64>,
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub step: usize,
    /// Mean of the minibatch objectives seen during the epoch.
    pub mean_batch_loss: f64,
    /// Objective on the full training set after the epoch.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps_per_epoch: usize,
    pub total_steps: usize,
    pub rows: Vec<LogRow>,
    pub epochs: Vec<EpochSummary>,
}

pub const LOG_HEADER: &str =
    "step\tepoch\ttraining_loss\tvalidation_loss\tlearning_rate\tgrad_norm";

impl TrainLog {
    /// Tab-separated table; absent values are empty fields.
    pub fn to_tsv(&self, header_comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = header_comment {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(LOG_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{}\t{}\t{}\t{}",
                r.step,
                r.epoch,
                opt(r.training_loss),
                opt(r.validation_loss),
                opt(r.learning_rate),
                opt(r.grad_norm)
            );
        }
        out
    }

    pub fn save(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        std::fs::write(path, self.to_tsv(header_comment)).map_err(|e| Error::io(path, e))
    }

    pub fn training_rows(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.training_loss.is_some())
    }
}

fn mean_loss<T: Scalar>(model: &SoftmaxModel<T>, data: &[Example<T>], l2: T) -> Result<f64> {
    let refs: Vec<&Example<T>> = data.iter().collect();
    Ok(loss_and_grad_refs(model, &refs, l2, false)?.0.as_f64())
}

/// Mini-batch gradient descent with linearly decaying step size.
///
/// The update at step `s` (1-based) uses `learning_rate(s - 1)`; the logged
/// rate is `learning_rate(s)`, the value in effect after the step. Batch
/// order comes from a per-run seeded shuffle each epoch. Validation loss is
/// plain cross-entropy (no penalty term).
pub fn train<T: Scalar>(
    mut model: SoftmaxModel<T>,
    train_set: &[Example<T>],
    val_set: &[Example<T>],
    config: &TrainConfig,
) -> Result<(SoftmaxModel<T>, TrainLog)> {
    config.validate()?;
    for ex in train_set.iter().chain(val_set) {
        if ex.y >= model.classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.y,
                classes: model.classes(),
            });
        }
        if ex.x.dim() != model.features() {
            return Err(Error::Dimension {
                expected: model.features(),
                actual: ex.x.dim(),
            });
        }
    }
    if config.epochs == 0 {
        return Ok((model, TrainLog::default()));
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }

    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let planned = config.epochs * steps_per_epoch;
    let schedule_len = config.total_steps.unwrap_or(planned);
    let run_steps = planned.min(schedule_len);
    let l2 = T::of(config.l2);
    let mut log = TrainLog {
        steps_per_epoch,
        total_steps: run_steps,
        ..Default::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;
    let mut interval_loss = 0.0;
    let mut interval_steps = 0usize;

    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if step == run_steps {
                break 'epochs;
            }
            step += 1;
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = loss_and_grad_refs(&model, &batch, l2, true)?;
            let grad = grad.expect("gradient requested");
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    last_good: step - 1,
                });
            }
            let lr = learning_rate(config.initial_lr, step - 1, schedule_len);
            model.apply_gradient(&grad, T::of(lr));
            if !model.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    last_good: step - 1,
                });
            }
            interval_loss += loss;
            interval_steps += 1;
            epoch_loss += loss;
            epoch_steps += 1;

            if step.is_multiple_of(config.log_interval) {
                log.rows.push(LogRow {
                    step,
                    epoch: step as f64 / steps_per_epoch as f64,
                    training_loss: Some(interval_loss / interval_steps as f64),
                    validation_loss: None,
                    learning_rate: Some(learning_rate(config.initial_lr, step, schedule_len)),
                    grad_norm: Some(grad.norm().as_f64()),
                });
                interval_loss = 0.0;
                interval_steps = 0;
            }
        }

        if epoch_steps < steps_per_epoch || !config.eval_each_epoch {
            continue;
        }
        let validation_loss = if val_set.is_empty() {
            None
        } else {
            Some(mean_loss(&model, val_set, T::zero())?)
        };
        log.epochs.push(EpochSummary {
            epoch,
            step,
            mean_batch_loss: epoch_loss / epoch_steps as f64,
            train_loss: mean_loss(&model, train_set, l2)?,
            validation_loss,
        });
        if let Some(v) = validation_loss {
            match log.rows.last_mut() {
                Some(last) if last.step == step => last.validation_loss = Some(v),
                _ => log.rows.push(LogRow {
                    step,
                    epoch: epoch as f64,
                    training_loss: None,
                    validation_loss: Some(v),
                    learning_rate: None,
                    grad_norm: None,
                }),
            }
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::init_model;
    use crate::features::SparseVector;

    fn toy(n: usize, classes: usize) -> Vec<Example<f64>> {
        (0..n)
            .map(|i| {
                let y = i % classes;
                let mut v = vec![0.0; classes + 1];
                v[y] = 1.0;
                v[classes] = (i % 3) as f64 * 0.1;
                Example::new(SparseVector::from_dense(&v), y)
            })
            .collect()
    }

    #[test]
    fn schedule_matches_linear_fit() {
        let lr = |s| learning_rate(5.0e-5, s, 781);
        assert!((lr(50) - 4.68e-5).abs() < 1e-7);
        assert!((lr(100) - 4.36e-5).abs() < 1e-7);
        assert!((lr(150) - 4.04e-5).abs() < 1e-7);
        assert_eq!(lr(0), 5.0e-5);
        assert_eq!(lr(781), 0.0);
        assert_eq!(lr(900), 0.0);
    }

    #[test]
    fn log_cadence() {
        let data = toy(80, 4);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 100,
            total_steps: Some(400),
            log_interval: 50,
            initial_lr: 0.5,
            ..Default::default()
        };
        let (_, log) = train(init_model(5, 4).unwrap(), &data, &data[..8], &cfg).unwrap();
        assert_eq!(log.steps_per_epoch, 10);
        assert_eq!(log.training_rows().count(), 8);
        assert_eq!(log.epochs.len(), 40);
        let steps: Vec<usize> = log.rows.iter().map(|r| r.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        for r in &log.rows {
            assert!((r.epoch - r.step as f64 / 10.0).abs() < 1e-12);
        }
        // every training row at a multiple of 10 also carries the epoch's validation loss
        assert!(log.training_rows().all(|r| r.validation_loss.is_some()));
    }

    #[test]
    fn validation_rows_between_training_rows() {
        let data = toy(155 * 4, 2);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 2,
            total_steps: Some(781),
            log_interval: 50,
            ..Default::default()
        };
        let (_, log) = train(init_model(3, 2).unwrap(), &data, &data[..10], &cfg).unwrap();
        let val: Vec<(usize, f64)> = log
            .rows
            .iter()
            .filter(|r| r.training_loss.is_none())
            .map(|r| (r.step, r.epoch))
            .collect();
        assert_eq!(val, vec![(155, 1.0), (310, 2.0)]);
        let first = &log.rows[0];
        assert_eq!(first.step, 50);
        assert!((first.epoch - 0.32).abs() < 0.01);
        assert!((first.learning_rate.unwrap() - 4.68e-5).abs() < 1e-7);
    }

    #[test]
    fn zero_epochs_returns_zero_model() {
        let data = toy(10, 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (m, log) = train(init_model(3, 2).unwrap(), &data, &[], &cfg).unwrap();
        assert!(m.weights().iter().all(|&w| w == 0.0));
        assert!(log.rows.is_empty());
    }

    #[test]
    fn rejects_bad_labels_and_nan() {
        let mut data = toy(10, 2);
        data[3].y = 7;
        let r = train(
            init_model(3, 2).unwrap(),
            &data,
            &[],
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::LabelOutOfRange { label: 7, .. })));

        let data = vec![Example::new(SparseVector::from_dense(&[f64::NAN]), 0)];
        let r = train(
            init_model(1, 2).unwrap(),
            &data,
            &[],
            &TrainConfig::default(),
        );
        assert!(matches!(
            r,
            Err(Error::NonFinite {
                step: 1,
                last_good: 0
            })
        ));
    }

    #[test]
    fn deterministic() {
        let data = toy(64, 4);
        let cfg = TrainConfig {
            initial_lr: 1.0,
            batch_size: 5,
            epochs: 4,
            log_interval: 3,
            ..Default::default()
        };
        let a = train(init_model(5, 4).unwrap(), &data, &data, &cfg).unwrap();
        let b = train(init_model(5, 4).unwrap(), &data, &data, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_tsv(None), b.1.to_tsv(None));
        let first = a.1.epochs.first().unwrap().train_loss;
        let last = a.1.epochs.last().unwrap().train_loss;
        assert!(last < first);
    }

    #[test]
    fn tsv_layout() {
        let log = TrainLog {
            steps_per_epoch: 2,
            total_steps: 2,
            rows: vec![
                LogRow {
                    step: 1,
                    epoch: 0.5,
                    training_loss: Some(1.5),
                    validation_loss: None,
                    learning_rate: Some(2.5e-5),
                    grad_norm: Some(0.25),
                },
                LogRow {
                    step: 2,
                    epoch: 1.0,
                    training_loss: None,
                    validation_loss: Some(0.75),
                    learning_rate: None,
                    grad_norm: None,
                },
            ],
            epochs: vec![],
        };
        let tsv = log.to_tsv(Some("seed=1"));
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "# seed=1");
        assert_eq!(lines[1], LOG_HEADER);
        assert_eq!(lines[2], "1\t0.5000\t1.5\t\t0.000025\t0.25");
        assert_eq!(lines[3], "2\t1.0000\t\t0.75\t\t");
    }
}

//! Multinomial logistic regression over sparse feature vectors.
//!
//! The model is `softmax(W x + b)` with `W` stored row-major as K×V. The
//! objective is mean cross-entropy plus `(l2 / 2) * ||W||²`; the bias is not
//! regularized.

mod train;

use std::io::Write;
use std::path::Path;

pub use train::{learning_rate, train, EpochSummary, LogRow, TrainConfig, TrainLog};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel<T> {
    classes: usize,
    features: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

/// A feature vector with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub x: SparseVector<T>,
    pub y: usize,
}

impl<T> Example<T> {
    pub fn new(x: SparseVector<T>, y: usize) -> Self {
        Example { x, y }
    }
}

/// Gradient of the objective, same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn norm(&self) -> T {
        self.weights
            .iter()
            .chain(&self.bias)
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }
}

pub fn init_model<T: Scalar>(features: usize, classes: usize) -> Result<SoftmaxModel<T>> {
    SoftmaxModel::zeros(features, classes)
}

impl<T: Scalar> SoftmaxModel<T> {
    /// All-zero model. Needs at least one feature and two classes.
    pub fn zeros(features: usize, classes: usize) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(Error::Precondition(format!(
                "model needs V >= 1 and K >= 2, got V={features}, K={classes}"
            )));
        }
        Ok(SoftmaxModel {
            classes,
            features,
            weights: vec![T::zero(); classes * features],
            bias: vec![T::zero(); classes],
        })
    }

    pub fn from_parts(
        features: usize,
        classes: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let mut m = Self::zeros(features, classes)?;
        if weights.len() != m.weights.len() {
            return Err(Error::Dimension {
                expected: m.weights.len(),
                actual: weights.len(),
            });
        }
        if bias.len() != classes {
            return Err(Error::Dimension {
                expected: classes,
                actual: bias.len(),
            });
        }
        m.weights = weights;
        m.bias = bias;
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn row(&self, class: usize) -> &[T] {
        &self.weights[class * self.features..(class + 1) * self.features]
    }

    pub fn weight_mut(&mut self, class: usize, feature: usize) -> &mut T {
        &mut self.weights[class * self.features + feature]
    }

    pub fn bias_mut(&mut self, class: usize) -> &mut T {
        &mut self.bias[class]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn check_dim(&self, x: &SparseVector<T>) -> Result<()> {
        if x.dim() != self.features {
            return Err(Error::Dimension {
                expected: self.features,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &SparseVector<T>) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok((0..self.classes)
            .map(|k| x.dot(self.row(k)) + self.bias[k])
            .collect())
    }

    /// Plain gradient step `theta -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &Gradient<T>, lr: T) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w = *w - lr * *g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b = *b - lr * *g;
        }
    }

    fn squared_weight_norm(&self) -> T {
        self.weights.iter().map(|&w| w * w).sum()
    }

    /// Text format: `K<TAB>V`, K rows of V weights, then the bias row.
    pub fn save(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        let mut out = String::new();
        if let Some(c) = header_comment {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&format!("{}\t{}\n", self.classes, self.features));
        let join = |row: &[T]| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("\t")
        };
        for k in 0..self.classes {
            out.push_str(&join(self.row(k)));
            out.push('\n');
        }
        out.push_str(&join(&self.bias));
        out.push('\n');
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let malformed = |line: usize, message: String| Error::Malformed {
            path: path.into(),
            line: line as u64,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.starts_with('#'));
        let (hl, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "missing K<TAB>V header".into()))?;
        let (k, v) = header
            .split_once('\t')
            .and_then(|(k, v)| Some((k.parse::<usize>().ok()?, v.parse::<usize>().ok()?)))
            .ok_or_else(|| malformed(hl, "expected K<TAB>V".into()))?;
        let mut parse_row = |want: usize| -> Result<Vec<T>> {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| malformed(hl, "truncated model file".into()))?;
            let row: Vec<T> = line
                .split('\t')
                .map(|s| s.parse::<T>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(ln, "unparseable number".into()))?;
            if row.len() != want {
                return Err(malformed(
                    ln,
                    format!("expected {want} values, got {}", row.len()),
                ));
            }
            Ok(row)
        };
        let mut weights = Vec::with_capacity(k * v);
        for _ in 0..k {
            weights.extend(parse_row(v)?);
        }
        let bias = parse_row(k)?;
        Self::from_parts(v, k, weights, bias)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln(sum(exp(z)))`, computed stably.
fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
}

pub fn forward<T: Scalar>(model: &SoftmaxModel<T>, x: &SparseVector<T>) -> Result<Vec<T>> {
    Ok(softmax(&model.logits(x)?))
}

/// Argmax of the class probabilities; ties go to the lowest index.
pub fn predict<T: Scalar>(model: &SoftmaxModel<T>, x: &SparseVector<T>) -> Result<usize> {
    let logits = model.logits(x)?;
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = k;
        }
    }
    Ok(best)
}

fn check_batch<'a, T: Scalar>(
    model: &SoftmaxModel<T>,
    batch: impl Iterator<Item = &'a Example<T>>,
) -> Result<usize> {
    let mut n = 0;
    for ex in batch {
        model.check_dim(&ex.x)?;
        if ex.y >= model.classes {
            return Err(Error::LabelOutOfRange {
                label: ex.y,
                classes: model.classes,
            });
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("batch".into()));
    }
    Ok(n)
}

/// Objective value and gradient over a batch given by reference.
pub(crate) fn loss_and_grad_refs<T: Scalar>(
    model: &SoftmaxModel<T>,
    batch: &[&Example<T>],
    l2: T,
    want_grad: bool,
) -> Result<(T, Option<Gradient<T>>)> {
    let n = check_batch(model, batch.iter().copied())?;
    let scale = T::one() / T::of_usize(n);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| Gradient {
        weights: vec![T::zero(); model.weights.len()],
        bias: vec![T::zero(); model.classes],
    });
    for ex in batch {
        let logits = model.logits(&ex.x)?;
        total = total + log_sum_exp(&logits) - logits[ex.y];
        if let Some(g) = grad.as_mut() {
            let p = softmax(&logits);
            for (k, &pk) in p.iter().enumerate() {
                let delta = if k == ex.y { pk - T::one() } else { pk } * scale;
                g.bias[k] = g.bias[k] + delta;
                let row = &mut g.weights[k * model.features..(k + 1) * model.features];
                for &(j, xj) in ex.x.entries() {
                    row[j] = row[j] + delta * xj;
                }
            }
        }
    }
    let half = T::of(0.5);
    let loss = total * scale + half * l2 * model.squared_weight_norm();
    if let Some(g) = grad.as_mut() {
        if l2 != T::zero() {
            for (gw, &w) in g.weights.iter_mut().zip(&model.weights) {
                *gw = *gw + l2 * w;
            }
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy plus the L2 penalty.
pub fn loss<T: Scalar>(model: &SoftmaxModel<T>, batch: &[Example<T>], l2: T) -> Result<T> {
    let refs: Vec<&Example<T>> = batch.iter().collect();
    Ok(loss_and_grad_refs(model, &refs, l2, false)?.0)
}

/// Analytic gradient of [`loss`].
pub fn grad<T: Scalar>(
    model: &SoftmaxModel<T>,
    batch: &[Example<T>],
    l2: T,
) -> Result<Gradient<T>> {
    let refs: Vec<&Example<T>> = batch.iter().collect();
    Ok(loss_and_grad_refs(model, &refs, l2, true)?
        .1
        .expect("gradient requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> SparseVector<f64> {
        SparseVector::from_dense(v)
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = init_model::<f64>(10, 14).unwrap();
        assert_eq!(m.weights().len(), 140);
        let x = sv(&[0.3, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2]);
        let p = forward(&m, &x).unwrap();
        assert!(p.iter().all(|&q| (q - 1.0 / 14.0).abs() < 1e-15));
        let batch = vec![Example::new(x.clone(), 3), Example::new(sv(&[0.0; 10]), 13)];
        let l = loss(&m, &batch, 0.0).unwrap();
        assert!((l - 14f64.ln()).abs() < 1e-12);
        assert!((l - 2.6391).abs() < 1e-4);
        assert_eq!(predict(&m, &x).unwrap(), 0);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_model::<f64>(0, 14).is_err());
        assert!(init_model::<f64>(3, 1).is_err());
    }

    #[test]
    fn crafted_two_class_probabilities() {
        let mut m = init_model::<f64>(1, 2).unwrap();
        *m.weight_mut(0, 0) = 3f64.ln();
        let p = forward(&m, &sv(&[1.0])).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_example_loss() {
        // logits (ln 3, 0) and (0, ln 4): -ln(3/4) and -ln(4/5)
        let mut m = init_model::<f64>(2, 2).unwrap();
        *m.weight_mut(0, 0) = 3f64.ln();
        *m.weight_mut(1, 1) = 4f64.ln();
        let batch = vec![
            Example::new(sv(&[1.0, 0.0]), 0),
            Example::new(sv(&[0.0, 1.0]), 1),
        ];
        let want = (-(0.75f64).ln() - (0.8f64).ln()) / 2.0;
        assert!((loss(&m, &batch, 0.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn near_certain_model_has_near_zero_loss() {
        let mut m = init_model::<f64>(1, 3).unwrap();
        *m.bias_mut(2) = 50.0;
        let batch = vec![Example::new(sv(&[1.0]), 2)];
        assert!(loss(&m, &batch, 0.0).unwrap() < 1e-20);
    }

    #[test]
    fn gradient_at_zero_model() {
        let m = init_model::<f64>(3, 4).unwrap();
        let x = [0.5, 0.0, -2.0];
        let g = grad(&m, &[Example::new(sv(&x), 2)], 0.0).unwrap();
        for k in 0..4 {
            let coeff = if k == 2 { 0.25 - 1.0 } else { 0.25 };
            for (j, xj) in x.iter().enumerate() {
                assert!((g.weights[k * 3 + j] - coeff * xj).abs() < 1e-15);
            }
            assert!((g.bias[k] - coeff).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_term_alone_when_data_term_vanishes() {
        // p = onehot(y) to machine precision: only l2 * W remains in the weights
        let mut m = init_model::<f64>(2, 2).unwrap();
        *m.bias_mut(0) = 800.0;
        *m.weight_mut(0, 1) = 0.3;
        *m.weight_mut(1, 0) = -1.5;
        let g = grad(&m, &[Example::new(sv(&[0.0, 0.0]), 0)], 0.1).unwrap();
        for (gw, w) in g.weights.iter().zip(m.weights()) {
            assert!((gw - 0.1 * w).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        let m = init_model::<f64>(2, 3).unwrap();
        assert!(matches!(
            forward(&m, &sv(&[1.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(loss(&m, &[], 0.0), Err(Error::Empty(_))));
        assert!(matches!(
            grad(&m, &[Example::new(sv(&[1.0, 0.0]), 3)], 0.0),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.tsv");
        let m =
            SoftmaxModel::from_parts(2, 2, vec![0.1, -1e-300, 3.5, 2.0 / 3.0], vec![1e10, -0.0])
                .unwrap();
        m.save(&p, Some("x")).unwrap();
        assert_eq!(SoftmaxModel::<f64>::load(&p).unwrap(), m);
        std::fs::write(&p, "2\t2\n1\t2\n").unwrap();
        assert!(SoftmaxModel::<f64>::load(&p).is_err());
    }

    #[test]
    fn descent_with_small_constant_step() {
        let data = vec![
            Example::new(sv(&[1.0, 0.0, 0.5]), 0),
            Example::new(sv(&[0.0, 1.0, 0.5]), 1),
            Example::new(sv(&[0.5, 0.5, 0.0]), 2),
            Example::new(sv(&[1.0, 1.0, 1.0]), 1),
        ];
        let mut m = init_model::<f64>(3, 3).unwrap();
        let mut prev = loss(&m, &data, 0.0).unwrap();
        for _ in 0..100 {
            let g = grad(&m, &data, 0.0).unwrap();
            m.apply_gradient(&g, 0.1);
            let l = loss(&m, &data, 0.0).unwrap();
            assert!(l <= prev + 1e-12, "{l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn f32_model() {
        let m = init_model::<f32>(2, 14).unwrap();
        let p = forward(&m, &SparseVector::from_dense(&[1.0f32, 0.0])).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn simplex_and_shift_invariance(
            w in proptest::collection::vec(-1.0f64..1.0, 12),
            b in proptest::collection::vec(-1.0f64..1.0, 4),
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            shift in -100.0f64..100.0,
        ) {
            let m = SoftmaxModel::from_parts(3, 4, w, b.clone()).unwrap();
            let x = sv(&x);
            let p = forward(&m, &x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&q| q > 0.0 && q < 1.0));
            let shifted_bias: Vec<f64> = b.iter().map(|v| v + shift).collect();
            let shifted = SoftmaxModel::from_parts(3, 4, m.weights().to_vec(), shifted_bias).unwrap();
            prop_assert_eq!(predict(&m, &x).unwrap(), predict(&shifted, &x).unwrap());
        }
    }
}

//! Linear multiclass softmax models.
//!
//! Training minimizes the objective `F(h, z) = CE(h, z) + (mu/2)||h||^2`,
//! while evaluation and every bound use the clamped loss
//! `min(CE(h, z), M)`, which is `M`-bounded.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default clamp for the bounded loss.
pub const DEFAULT_MAX_LOSS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Example { features, label }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// An ordered training set with shared dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    feature_dim: usize,
    num_classes: usize,
    feature_radius: f64,
}

impl Dataset {
    /// Validate `examples`; the class count is `max(label) + 1`.
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let classes = examples.iter().map(|z| z.label + 1).max().unwrap_or(0);
        Self::with_classes(examples, classes.max(2))
    }

    pub fn with_classes(examples: Vec<Example>, num_classes: usize) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty("dataset"))?;
        let feature_dim = first.features.len();
        if num_classes < 2 {
            return Err(Error::param("num_classes", "need at least two classes"));
        }
        let mut feature_radius = 0.0f64;
        for z in &examples {
            if z.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    actual: z.features.len(),
                });
            }
            if z.label >= num_classes {
                return Err(Error::IndexOutOfRange {
                    index: z.label,
                    len: num_classes,
                });
            }
            let r = norm(&z.features);
            if !r.is_finite() {
                return Err(Error::param("features", "non-finite feature value"));
            }
            feature_radius = feature_radius.max(r);
        }
        Ok(Dataset {
            examples,
            feature_dim,
            num_classes,
            feature_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> Result<&Example> {
        self.examples.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.examples.len(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// `max ||x||` over the set.
    pub fn feature_radius(&self) -> f64 {
        self.feature_radius
    }

    /// Copy of the set with example `i` replaced by `z`.
    pub fn with_replaced(&self, i: usize, z: Example) -> Result<Dataset> {
        self.get(i)?;
        let mut examples = self.examples.clone();
        examples[i] = z;
        Dataset::with_classes(examples, self.num_classes)
    }
}

/// Row-major `classes x dim` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    params: Vec<f64>,
    num_classes: usize,
    feature_dim: usize,
}

impl Hypothesis {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Hypothesis {
            params: vec![0.0; num_classes * feature_dim],
            num_classes,
            feature_dim,
        }
    }

    pub fn for_dataset(ds: &Dataset) -> Self {
        Self::zeros(ds.num_classes(), ds.feature_dim())
    }

    pub fn from_params(num_classes: usize, feature_dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != num_classes * feature_dim {
            return Err(Error::DimensionMismatch {
                expected: num_classes * feature_dim,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("params", "non-finite parameter"));
        }
        Ok(Hypothesis {
            params,
            num_classes,
            feature_dim,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn norm(&self) -> f64 {
        norm(&self.params)
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.feature_dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: x.len(),
            })
        }
    }

    fn check_example(&self, z: &Example) -> Result<()> {
        self.check_features(&z.features)?;
        if z.label < self.num_classes {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: z.label,
                len: self.num_classes,
            })
        }
    }

    /// Class scores `W x`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_features(x)?;
        Ok(self
            .params
            .chunks_exact(self.feature_dim.max(1))
            .take(self.num_classes)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// Scale onto the ball of the given radius if outside it.
    pub fn project(&mut self, radius: f64) {
        let n = self.norm();
        if n > radius && n > 0.0 {
            let s = radius / n;
            self.params.iter_mut().for_each(|p| *p *= s);
        }
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = libm::exp(*s - max);
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(scores.iter().map(|s| libm::exp(s - max)).sum::<f64>())
}

/// Softmax of the linear scores.
pub fn predict_proba(h: &Hypothesis, x: &[f64]) -> Result<Vec<f64>> {
    let mut s = h.scores(x)?;
    softmax_in_place(&mut s);
    Ok(s)
}

/// Index of the largest score; ties go to the lowest class.
pub fn predict_class(h: &Hypothesis, x: &[f64]) -> Result<usize> {
    let s = h.scores(x)?;
    let mut best = 0;
    for (c, v) in s.iter().enumerate() {
        if *v > s[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Cross-entropy `-ln p_y`, with `p_y` clamped below at [`PROB_FLOOR`].
pub fn surrogate_loss(h: &Hypothesis, z: &Example) -> Result<f64> {
    h.check_example(z)?;
    let s = h.scores(&z.features)?;
    let ce = log_sum_exp(&s) - s[z.label];
    Ok(ce.clamp(0.0, -libm::log(PROB_FLOOR)))
}

/// Unclamped training objective `CE + (mu/2)||h||^2`.
pub fn objective_value(h: &Hypothesis, z: &Example, mu: f64) -> Result<f64> {
    h.check_example(z)?;
    let s = h.scores(&z.features)?;
    let n = h.norm();
    Ok(log_sum_exp(&s) - s[z.label] + 0.5 * mu * n * n)
}

/// Add `scale * grad F(h, z)` into `out`.
pub fn accumulate_objective_grad(
    h: &Hypothesis,
    z: &Example,
    mu: f64,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    h.check_example(z)?;
    if out.len() != h.params.len() {
        return Err(Error::DimensionMismatch {
            expected: h.params.len(),
            actual: out.len(),
        });
    }
    let mut p = h.scores(&z.features)?;
    softmax_in_place(&mut p);
    p[z.label] -= 1.0;
    let d = h.feature_dim;
    for (c, residual) in p.iter().enumerate() {
        let row = &mut out[c * d..(c + 1) * d];
        let params = &h.params[c * d..(c + 1) * d];
        for ((o, x), w) in row.iter_mut().zip(&z.features).zip(params) {
            *o += scale * (residual * x + mu * w);
        }
    }
    Ok(())
}

/// `grad F(h, z) = (softmax(Wx) - e_y) x^T + mu h`.
pub fn objective_grad(h: &Hypothesis, z: &Example, mu: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; h.params.len()];
    accumulate_objective_grad(h, z, mu, 1.0, &mut g)?;
    Ok(g)
}

/// `min(CE(h, z), M)`.
pub fn bounded_loss(h: &Hypothesis, z: &Example, max_loss: f64) -> Result<f64> {
    if !(max_loss > 0.0) {
        return Err(Error::param("max_loss", "must be > 0"));
    }
    Ok(surrogate_loss(h, z)?.min(max_loss))
}

/// Mean bounded loss over a dataset.
pub fn empirical_risk(h: &Hypothesis, ds: &Dataset, max_loss: f64) -> Result<f64> {
    let mut total = 0.0;
    for z in ds.examples() {
        total += bounded_loss(h, z, max_loss)?;
    }
    Ok(total / ds.len() as f64)
}

/// Mean unclamped-below-floor cross-entropy over a dataset.
pub fn mean_surrogate_loss(h: &Hypothesis, ds: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for z in ds.examples() {
        total += surrogate_loss(h, z)?;
    }
    Ok(total / ds.len() as f64)
}

pub fn accuracy(h: &Hypothesis, ds: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for z in ds.examples() {
        if predict_class(h, &z.features)? == z.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

/// Model-side settings shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// L2 strength; the objective is `mu`-strongly convex.
    pub mu: f64,
    /// Clamp `M` of the bounded loss.
    pub max_loss: f64,
    /// Radius of the ball iterates are projected onto, if any.
    pub domain_radius: Option<f64>,
}

impl ObjectiveConfig {
    /// Projection is on whenever `mu > 0`, with radius `sqrt(2) R / mu`,
    /// the norm at which the regularizer gradient matches the largest
    /// cross-entropy gradient.
    pub fn for_dataset(ds: &Dataset, mu: f64, max_loss: f64) -> Result<Self> {
        let cfg = ObjectiveConfig {
            mu,
            max_loss,
            domain_radius: (mu > 0.0).then(|| core::f64::consts::SQRT_2 * ds.feature_radius() / mu),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::param("mu", "must be finite and >= 0"));
        }
        if !(self.max_loss > 0.0) {
            return Err(Error::param("max_loss", "must be > 0"));
        }
        if let Some(r) = self.domain_radius {
            if !(r >= 0.0) {
                return Err(Error::param("domain_radius", "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    /// Bound on `||grad F||` over the domain.
    pub lipschitz: f64,
    /// Lipschitz constant of `grad F`.
    pub smooth_beta: f64,
    /// Strong-convexity modulus; zero when unregularized.
    pub strong_mu: f64,
    /// `M`.
    pub loss_max: f64,
}

/// Constants for softmax cross-entropy plus `(mu/2)||h||^2` on features of
/// norm at most `R`.
///
/// The cross-entropy gradient is `(p - e_y) x^T` with `||p - e_y|| <= sqrt(2)`,
/// and its Hessian is `(diag p - p p^T) (x) x x^T`, whose top eigenvalue is
/// at most `||x||^2 / 2`.
pub fn regularity_constants(
    ds: &Dataset,
    mu: f64,
    max_loss: f64,
    domain_radius: Option<f64>,
) -> Result<RegularityConstants> {
    if !(mu >= 0.0) {
        return Err(Error::param("mu", "must be >= 0"));
    }
    if !(max_loss > 0.0) {
        return Err(Error::param("max_loss", "must be > 0"));
    }
    let r = ds.feature_radius();
    let reg_part = if mu > 0.0 {
        let radius = domain_radius.ok_or_else(|| {
            Error::param("domain_radius", "required when mu > 0 to bound the gradient")
        })?;
        mu * radius
    } else {
        0.0
    };
    Ok(RegularityConstants {
        lipschitz: r * core::f64::consts::SQRT_2 + reg_part,
        smooth_beta: r * r / 2.0 + mu,
        strong_mu: mu,
        loss_max: max_loss,
    })
}

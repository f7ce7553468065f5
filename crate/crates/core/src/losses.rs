//! Loss families and seeded loss streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::lift_reduced;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::scalar::Scalar;

/// How the learner's coordinates map onto the loss's native coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Embedding {
    #[default]
    Identity,
    /// Learner plays `w̃ ∈ R^{d−1}`; the loss sees `(w̃, 1 − Σ w̃)`.
    ReducedSimplex,
}

/// The loss revealed in one round, replayable at any point.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundLoss<T> {
    /// `⟨g, w⟩`.
    Linear { g: Vec<T> },
    /// `−ln ⟨w, r⟩` over the simplex.
    Portfolio { r: Vec<T> },
    /// Log-loss of the linear prediction `⟨w, x⟩ ∈ (0, 1)` for `y ∈ {−1, +1}`.
    LogLoss { x: Vec<T>, y: i8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvent<T> {
    pub loss: T,
    /// Subgradient in the learner's coordinates.
    pub grad: Vec<T>,
    pub meta: RoundLoss<T>,
}

/// `⟨g, w⟩` with subgradient `g`.
pub fn linear_loss<T: Scalar>(w: &[T], g: &[T]) -> Result<LossEvent<T>> {
    if w.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: g.len(),
        });
    }
    Ok(LossEvent {
        loss: dot(g, w),
        grad: g.to_vec(),
        meta: RoundLoss::Linear { g: g.to_vec() },
    })
}

/// Portfolio loss `−ln ⟨w, r⟩` at reduced-simplex coordinates.
///
/// The reduced gradient is `−(r_i − r_d) / ⟨w, r⟩` for `i < d`.
pub fn portfolio_loss<T: Scalar>(w_reduced: &[T], r: &[T]) -> Result<LossEvent<T>> {
    if r.len() != w_reduced.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: w_reduced.len() + 1,
            found: r.len(),
        });
    }
    if let Some(i) = r.iter().position(|&ri| !(ri > T::zero())) {
        return Err(Error::NonPositiveReturn(i));
    }
    let w = lift_reduced(w_reduced);
    let wealth = dot(&w, r);
    if !(wealth > T::zero()) {
        return Err(Error::NonPositiveWealth(wealth.to_f64_lossy()));
    }
    let last = r[r.len() - 1];
    let grad = r[..r.len() - 1]
        .iter()
        .map(|&ri| -(ri - last) / wealth)
        .collect();
    Ok(LossEvent {
        loss: -wealth.ln(),
        grad,
        meta: RoundLoss::Portfolio { r: r.to_vec() },
    })
}

/// Log-loss of a linear prediction in native coordinates:
/// `−ln⟨w, x⟩` for `y = +1` and `−ln(1 − ⟨w, x⟩)` for `y = −1`.
pub fn logloss_linear<T: Scalar>(w: &[T], x: &[T], y: i8) -> Result<LossEvent<T>> {
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: x.len(),
        });
    }
    let p = dot(w, x);
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::PredictionOutOfRange(p.to_f64_lossy()));
    }
    let (loss, grad) = if y > 0 {
        (-p.ln(), x.iter().map(|&xi| -xi / p).collect())
    } else {
        let q = T::one() - p;
        (-q.ln(), x.iter().map(|&xi| xi / q).collect())
    };
    Ok(LossEvent {
        loss,
        grad,
        meta: RoundLoss::LogLoss { x: x.to_vec(), y },
    })
}

/// Chain rule through `w_d = 1 − Σ w̃_i`.
fn reduce_gradient<T: Scalar>(full: &[T]) -> Vec<T> {
    let last = full[full.len() - 1];
    full[..full.len() - 1].iter().map(|&g| g - last).collect()
}

impl<T: Scalar> RoundLoss<T> {
    pub fn eval(&self, w: &[T], embedding: Embedding) -> Result<LossEvent<T>> {
        match (self, embedding) {
            (RoundLoss::Linear { g }, _) => linear_loss(w, g),
            (RoundLoss::Portfolio { r }, Embedding::ReducedSimplex) => portfolio_loss(w, r),
            (RoundLoss::Portfolio { r }, Embedding::Identity) => {
                // full-coordinate portfolio: w must already be a distribution
                if r.len() != w.len() {
                    return Err(Error::DimensionMismatch {
                        expected: w.len(),
                        found: r.len(),
                    });
                }
                if let Some(i) = r.iter().position(|&ri| !(ri > T::zero())) {
                    return Err(Error::NonPositiveReturn(i));
                }
                let wealth = dot(w, r);
                if !(wealth > T::zero()) {
                    return Err(Error::NonPositiveWealth(wealth.to_f64_lossy()));
                }
                Ok(LossEvent {
                    loss: -wealth.ln(),
                    grad: r.iter().map(|&ri| -ri / wealth).collect(),
                    meta: self.clone(),
                })
            }
            (RoundLoss::LogLoss { x, y }, Embedding::Identity) => logloss_linear(w, x, *y),
            (RoundLoss::LogLoss { x, y }, Embedding::ReducedSimplex) => {
                let mut ev = logloss_linear(&lift_reduced(w), x, *y)?;
                ev.grad = reduce_gradient(&ev.grad);
                Ok(ev)
            }
        }
    }

    pub fn value(&self, w: &[T], embedding: Embedding) -> Result<T> {
        Ok(self.eval(w, embedding)?.loss)
    }

    /// Hessian in the learner's coordinates. Portfolio and log-loss are
    /// `−ln` of an affine function, so their Hessian is `g gᵀ`.
    pub fn hessian(&self, w: &[T], embedding: Embedding) -> Result<Matrix<T>> {
        let n = w.len();
        if let RoundLoss::Linear { .. } = self {
            return Ok(Matrix::zeros(n, n));
        }
        let g = self.eval(w, embedding)?.grad;
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = g[i] * g[j];
            }
        }
        Ok(h)
    }
}

/// i.i.d. returns, each coordinate uniform on `[lo, hi]`.
pub struct ReturnsIid<T> {
    rng: ChaCha8Rng,
    d: usize,
    lo: T,
    hi: T,
}

pub fn returns_iid<T: Scalar>(seed: u64, d: usize, lo: T, hi: T) -> Result<ReturnsIid<T>> {
    if !(lo > T::zero() && hi >= lo) {
        return Err(Error::InvalidBounds(format!(
            "returns need 0 < lo <= hi, got lo={lo}, hi={hi}"
        )));
    }
    Ok(ReturnsIid {
        rng: ChaCha8Rng::seed_from_u64(seed),
        d,
        lo,
        hi,
    })
}

impl<T: Scalar> Iterator for ReturnsIid<T> {
    type Item = RoundLoss<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let r = (0..self.d)
            .map(|_| self.lo + (self.hi - self.lo) * T::lit(self.rng.random::<f64>()))
            .collect();
        Some(RoundLoss::Portfolio { r })
    }
}

/// Two assets whose returns alternate `(2, 1/2)` and `(1/2, 2)`.
pub struct TwoAssetAdversarial {
    t: u64,
}

/// The stream does not depend on `seed`; it is taken for uniformity with the
/// other generators.
pub fn returns_two_asset_adversarial(_seed: u64) -> TwoAssetAdversarial {
    TwoAssetAdversarial { t: 0 }
}

impl TwoAssetAdversarial {
    fn next_returns<T: Scalar>(&mut self) -> RoundLoss<T> {
        let (hi, lo) = (T::lit(2.0), T::lit(0.5));
        let r = if self.t.is_multiple_of(2) { vec![hi, lo] } else { vec![lo, hi] };
        self.t += 1;
        RoundLoss::Portfolio { r }
    }

    /// Typed adapter for the scalar in use.
    pub fn typed<T: Scalar>(self) -> impl Iterator<Item = RoundLoss<T>> {
        let mut inner = self;
        std::iter::from_fn(move || Some(inner.next_returns::<T>()))
    }
}

/// Linear losses drawn uniformly from the sphere of radius `g_norm`.
pub struct LinearSphere<T> {
    rng: ChaCha8Rng,
    dim: usize,
    g_norm: T,
}

pub fn linear_adversary_iid_sphere<T: Scalar>(seed: u64, dim: usize, g_norm: T) -> LinearSphere<T> {
    LinearSphere {
        rng: ChaCha8Rng::seed_from_u64(seed),
        dim,
        g_norm,
    }
}

impl<T: Scalar> Iterator for LinearSphere<T> {
    type Item = RoundLoss<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.g_norm == T::zero() {
            return Some(RoundLoss::Linear {
                g: vec![T::zero(); self.dim],
            });
        }
        loop {
            let z: Vec<T> = (0..self.dim)
                .map(|_| T::lit(self.rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let n = norm(&z);
            if n > T::lit(1e-12) {
                let g = z.into_iter().map(|x| x * self.g_norm / n).collect();
                return Some(RoundLoss::Linear { g });
            }
        }
    }
}

/// Feature vectors with coordinates uniform on `[lo, hi]`.
pub fn features_uniform<T: Scalar>(seed: u64, d: usize, lo: T, hi: T) -> impl Iterator<Item = Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::from_fn(move || {
        Some(
            (0..d)
                .map(|_| lo + (hi - lo) * T::lit(rng.random::<f64>()))
                .collect(),
        )
    })
}

/// Labels `y = +1` with probability `⟨w_true, x⟩` (clamped to `[0, 1]`).
pub struct LabeledStream<T, I> {
    rng: ChaCha8Rng,
    features: I,
    w_true: Vec<T>,
}

pub fn labels_logistic<T: Scalar, I: Iterator<Item = Vec<T>>>(
    seed: u64,
    x_stream: I,
    w_true: Vec<T>,
) -> LabeledStream<T, I> {
    LabeledStream {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1abe1),
        features: x_stream,
        w_true,
    }
}

impl<T: Scalar, I: Iterator<Item = Vec<T>>> Iterator for LabeledStream<T, I> {
    type Item = RoundLoss<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let x = self.features.next()?;
        let p = dot(&self.w_true, &x).max(T::zero()).min(T::one());
        let y = if T::lit(self.rng.random::<f64>()) < p { 1 } else { -1 };
        Some(RoundLoss::LogLoss { x, y })
    }
}

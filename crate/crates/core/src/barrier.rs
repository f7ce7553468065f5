//! Self-concordant barriers over polytopes and their tolerance-tagged oracles.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::domain::Polytope;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, spd_factorize, Matrix, SpdFactor};
use crate::scalar::Scalar;

/// Self-concordance constant `m` and barrier parameter `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams<T> {
    pub m: T,
    pub nu: T,
}

/// Per-barrier call counters for the gradient and Hessian oracles.
#[derive(Debug, Default)]
pub struct OracleCounters {
    grad: AtomicU64,
    hess: AtomicU64,
}

impl OracleCounters {
    pub fn grad_calls(&self) -> u64 {
        self.grad.load(Ordering::Relaxed)
    }

    pub fn hess_calls(&self) -> u64 {
        self.hess.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.grad.store(0, Ordering::Relaxed);
        self.hess.store(0, Ordering::Relaxed);
    }

    fn bump_grad(&self) -> u64 {
        self.grad.fetch_add(1, Ordering::Relaxed)
    }

    fn bump_hess(&self) -> u64 {
        self.hess.fetch_add(1, Ordering::Relaxed)
    }
}

impl Clone for OracleCounters {
    fn clone(&self) -> Self {
        Self {
            grad: AtomicU64::new(self.grad_calls()),
            hess: AtomicU64::new(self.hess_calls()),
        }
    }
}

/// A self-concordant function on the interior of a polytope.
///
/// Every evaluation fails with [`Error::NotInterior`] outside the open domain.
pub trait Barrier<T: Scalar>: Send + Sync {
    fn domain(&self) -> &Polytope<T>;
    fn params(&self) -> BarrierParams<T>;
    fn value(&self, w: &[T]) -> Result<T>;
    fn gradient(&self, w: &[T]) -> Result<Vec<T>>;
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>>;
    fn counters(&self) -> &OracleCounters;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn is_interior(&self, w: &[T]) -> bool {
        self.domain().is_strictly_feasible(w, T::zero())
    }
}

impl<T: Scalar, B: Barrier<T> + ?Sized> Barrier<T> for &B {
    fn domain(&self) -> &Polytope<T> {
        (**self).domain()
    }
    fn params(&self) -> BarrierParams<T> {
        (**self).params()
    }
    fn value(&self, w: &[T]) -> Result<T> {
        (**self).value(w)
    }
    fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        (**self).gradient(w)
    }
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>> {
        (**self).hessian(w)
    }
    fn counters(&self) -> &OracleCounters {
        (**self).counters()
    }
}

impl<T: Scalar, B: Barrier<T> + ?Sized> Barrier<T> for Box<B> {
    fn domain(&self) -> &Polytope<T> {
        (**self).domain()
    }
    fn params(&self) -> BarrierParams<T> {
        (**self).params()
    }
    fn value(&self, w: &[T]) -> Result<T> {
        (**self).value(w)
    }
    fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        (**self).gradient(w)
    }
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>> {
        (**self).hessian(w)
    }
    fn counters(&self) -> &OracleCounters {
        (**self).counters()
    }
}

fn interior_slacks<T: Scalar>(p: &Polytope<T>, w: &[T]) -> Result<Vec<T>> {
    let s = p.slacks(w)?;
    if !s.all_positive() {
        return Err(Error::NotInterior {
            min_slack: s.min().to_f64_lossy(),
        });
    }
    Ok(s.into_vec())
}

/// `−Σ ln(a_iᵀ w − b_i)`.
pub fn log_barrier_value<T: Scalar>(p: &Polytope<T>, w: &[T]) -> Result<T> {
    Ok(-interior_slacks(p, w)?.iter().map(|s| s.ln()).sum::<T>())
}

/// `−Aᵀ S⁻¹ 1`.
pub fn log_barrier_gradient<T: Scalar>(p: &Polytope<T>, w: &[T]) -> Result<Vec<T>> {
    let inv: Vec<T> = interior_slacks(p, w)?.iter().map(|&s| -s.recip()).collect();
    p.normals().tr_mul_vec(&inv)
}

/// `Aᵀ S⁻² A`.
pub fn log_barrier_hessian<T: Scalar>(p: &Polytope<T>, w: &[T]) -> Result<Matrix<T>> {
    let s = interior_slacks(p, w)?;
    let a = p.normals();
    let d = p.dim();
    let mut h = Matrix::zeros(d, d);
    for (i, &si) in s.iter().enumerate() {
        let weight = (si * si).recip();
        let row = a.row(i);
        for j in 0..d {
            let wj = weight * row[j];
            if wj == T::zero() {
                continue;
            }
            for k in 0..=j {
                h[(j, k)] += wj * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            h[(k, j)] = h[(j, k)];
        }
    }
    Ok(h)
}

/// The log-barrier is `(1, m)`-self-concordant.
pub fn barrier_params_log<T: Scalar>(p: &Polytope<T>) -> BarrierParams<T> {
    BarrierParams {
        m: T::one(),
        nu: T::lit(p.num_constraints() as f64),
    }
}

/// Standard logarithmic barrier of a polytope.
#[derive(Debug, Clone)]
pub struct LogBarrier<T> {
    polytope: Polytope<T>,
    counters: OracleCounters,
}

impl<T: Scalar> LogBarrier<T> {
    pub fn new(polytope: Polytope<T>) -> Self {
        Self {
            polytope,
            counters: OracleCounters::default(),
        }
    }
}

impl<T: Scalar> Barrier<T> for LogBarrier<T> {
    fn domain(&self) -> &Polytope<T> {
        &self.polytope
    }
    fn params(&self) -> BarrierParams<T> {
        barrier_params_log(&self.polytope)
    }
    fn value(&self, w: &[T]) -> Result<T> {
        log_barrier_value(&self.polytope, w)
    }
    fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        log_barrier_gradient(&self.polytope, w)
    }
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>> {
        log_barrier_hessian(&self.polytope, w)
    }
    fn counters(&self) -> &OracleCounters {
        &self.counters
    }
}

/// `Ψ(w) + (ν / 2R²) ‖w‖²`, with the quadratic centered at the origin.
#[derive(Debug, Clone)]
pub struct HybridBarrier<T, B> {
    inner: B,
    nu: T,
    radius: T,
    counters: OracleCounters,
}

impl<T: Scalar, B: Barrier<T>> HybridBarrier<T, B> {
    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// Curvature `ν / R²` of the quadratic term.
    pub fn quadratic_weight(&self) -> T {
        self.nu / (self.radius * self.radius)
    }
}

pub fn hybrid_compose<T: Scalar, B: Barrier<T>>(psi: B, nu: T, radius: T) -> HybridBarrier<T, B> {
    debug_assert!(nu > T::zero() && radius > T::zero());
    HybridBarrier {
        inner: psi,
        nu,
        radius,
        counters: OracleCounters::default(),
    }
}

impl<T: Scalar, B: Barrier<T>> Barrier<T> for HybridBarrier<T, B> {
    fn domain(&self) -> &Polytope<T> {
        self.inner.domain()
    }
    fn params(&self) -> BarrierParams<T> {
        BarrierParams {
            m: self.inner.params().m,
            nu: self.nu,
        }
    }
    fn value(&self, w: &[T]) -> Result<T> {
        let q = self.quadratic_weight() / T::lit(2.0) * dot(w, w);
        Ok(self.inner.value(w)? + q)
    }
    fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        let k = self.quadratic_weight();
        let mut g = self.inner.gradient(w)?;
        for (gi, &wi) in g.iter_mut().zip(w) {
            *gi += k * wi;
        }
        Ok(g)
    }
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>> {
        let mut h = self.inner.hessian(w)?;
        h.add_diagonal(self.quadratic_weight());
        Ok(h)
    }
    fn counters(&self) -> &OracleCounters {
        &self.counters
    }
}

/// Oracle perturbation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Off,
    /// Perturb every answer to sit exactly on its tolerance boundary.
    Adversarial { seed: u64 },
}

/// Tolerances of the approximate gradient and Hessian oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig<T> {
    /// Dual local norm bound on the gradient error.
    pub eps: T,
    /// Relative spectral bound on the Hessian error.
    pub alpha: T,
    pub noise: NoiseMode,
}

impl<T: Scalar> OracleConfig<T> {
    pub fn exact() -> Self {
        Self {
            eps: T::zero(),
            alpha: T::zero(),
            noise: NoiseMode::Off,
        }
    }

    pub fn new(eps: T, alpha: T, noise: NoiseMode) -> Result<Self> {
        if !(eps >= T::zero()) || !(alpha >= T::zero() && alpha < T::one()) {
            return Err(Error::Config(format!(
                "oracle tolerances need eps >= 0 and 0 <= alpha < 1 (eps={eps}, alpha={alpha})"
            )));
        }
        Ok(Self { eps, alpha, noise })
    }
}

fn call_rng(seed: u64, stream: u64, call: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(call);
    rng
}

fn gaussian_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// A vector `δ = eps · L z / ‖z‖` with `‖δ‖_{H⁻¹} = eps`, where `H = L Lᵀ`.
pub fn dual_sphere_perturbation<T: Scalar, R: Rng + ?Sized>(
    factor: &SpdFactor<T>,
    eps: T,
    rng: &mut R,
) -> Result<Vec<T>> {
    let n = factor.dim();
    let mut z = gaussian_vec::<T, _>(rng, n);
    let mut nz = norm(&z);
    while !(nz > T::zero()) {
        z = gaussian_vec(rng, n);
        nz = norm(&z);
    }
    let dir = factor.mul_lower(&z)?;
    Ok(dir.into_iter().map(|x| x * eps / nz).collect())
}

/// `L (I + E) Lᵀ` with `E` a random symmetric matrix whose eigenvalues are
/// `±alpha`, so every generalized eigenvalue against `hess = L Lᵀ` sits on
/// the boundary of `[1 − alpha, 1 + alpha]`.
pub fn worst_case_sandwich<T: Scalar, R: Rng + ?Sized>(
    hess: &Matrix<T>,
    alpha: T,
    rng: &mut R,
) -> Result<Matrix<T>> {
    let factor = spd_factorize(hess)?;
    let n = hess.rows();
    let q = random_orthogonal::<T, _>(rng, n);
    let signs: Vec<T> = (0..n)
        .map(|_| if rng.random::<bool>() { alpha } else { -alpha })
        .collect();
    // E = Q diag(signs) Qᵀ
    let mut inner = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let mut e = T::zero();
            for k in 0..n {
                e += q[(i, k)] * signs[k] * q[(j, k)];
            }
            inner[(i, j)] += e;
        }
    }
    let l = factor.lower();
    let out = l.matmul(&inner)?.matmul(&l.transpose())?;
    let mut sym = out.clone();
    for i in 0..n {
        for j in 0..i {
            let v = (out[(i, j)] + out[(j, i)]) / T::lit(2.0);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    Ok(sym)
}

/// Haar-ish orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix<T> {
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = gaussian_vec::<T, _>(rng, n);
        for c in &cols {
            let p = dot(c, &v);
            for (vi, &ci) in v.iter_mut().zip(c) {
                *vi -= p * ci;
            }
        }
        let nv = norm(&v);
        if nv > T::lit(1e-6) {
            cols.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let mut q = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q[(i, j)] = c[i];
        }
    }
    q
}

const GRAD_STREAM: u64 = 1;
const HESS_STREAM: u64 = 2;

/// ε-approximate gradient. With noise on, the exact gradient is shifted by a
/// pseudo-random vector of dual local norm exactly `cfg.eps`.
pub fn grad_oracle<T: Scalar, B: Barrier<T> + ?Sized>(
    barrier: &B,
    w: &[T],
    cfg: &OracleConfig<T>,
) -> Result<Vec<T>> {
    let call = barrier.counters().bump_grad();
    let mut g = barrier.gradient(w)?;
    if let NoiseMode::Adversarial { seed } = cfg.noise {
        if cfg.eps > T::zero() {
            let factor = spd_factorize(&barrier.hessian(w)?)?;
            let mut rng = call_rng(seed, GRAD_STREAM, call);
            let delta = dual_sphere_perturbation(&factor, cfg.eps, &mut rng)?;
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
    }
    Ok(g)
}

/// α-approximate Hessian together with its factorization. With noise on, the
/// exact Hessian is scaled by `1 ± alpha`.
pub fn hess_oracle<T: Scalar, B: Barrier<T> + ?Sized>(
    barrier: &B,
    w: &[T],
    cfg: &OracleConfig<T>,
) -> Result<(Matrix<T>, SpdFactor<T>)> {
    let call = barrier.counters().bump_hess();
    let mut h = barrier.hessian(w)?;
    if let NoiseMode::Adversarial { seed } = cfg.noise {
        if cfg.alpha > T::zero() {
            let mut rng = call_rng(seed, HESS_STREAM, call);
            let delta = if rng.random::<bool>() {
                cfg.alpha
            } else {
                -cfg.alpha
            };
            h = h.scaled(T::one() + delta);
        }
    }
    let factor = spd_factorize(&h)?;
    Ok((h, factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{generalized_eigenvalues, spectral_sandwich_check};
    use approx::assert_relative_eq;

    fn interval() -> Polytope<f64> {
        Polytope::build_reduced_simplex(2).unwrap()
    }

    fn unit_box() -> Polytope<f64> {
        Polytope::build_box(2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn log_barrier_values() {
        assert_relative_eq!(
            log_barrier_value(&interval(), &[0.5]).unwrap(),
            2.0 * 2f64.ln(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            log_barrier_value(&unit_box(), &[0.5, 0.5]).unwrap(),
            4.0 * 2f64.ln(),
            epsilon = 1e-15
        );
        assert!(matches!(
            log_barrier_value(&interval(), &[1.0]),
            Err(Error::NotInterior { .. })
        ));
    }

    #[test]
    fn log_barrier_derivatives() {
        let g = log_barrier_gradient(&interval(), &[0.25]).unwrap();
        assert_relative_eq!(g[0], -8.0 / 3.0, epsilon = 1e-14);
        let g = log_barrier_gradient(&unit_box(), &[0.5, 0.5]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let h = log_barrier_hessian(&unit_box(), &[0.5, 0.5]).unwrap();
        assert_eq!(h, Matrix::identity(2).scaled(8.0));
        assert!(log_barrier_hessian(&unit_box(), &[0.5, 1.5]).is_err());
    }

    #[test]
    fn log_params() {
        assert_eq!(barrier_params_log(&unit_box()), BarrierParams { m: 1.0, nu: 4.0 });
        assert_eq!(barrier_params_log(&interval()), BarrierParams { m: 1.0, nu: 2.0 });
        let s3 = Polytope::<f64>::build_reduced_simplex(3).unwrap();
        assert_eq!(barrier_params_log(&s3), BarrierParams { m: 1.0, nu: 3.0 });
    }

    #[test]
    fn hybrid_composition() {
        let h = hybrid_compose(LogBarrier::new(interval()), 2.0, 1.0);
        assert_relative_eq!(h.value(&[0.5]).unwrap(), 2.0 * 2f64.ln() + 0.25, epsilon = 1e-14);
        assert_relative_eq!(h.value(&[0.5]).unwrap(), 1.636294, epsilon = 1e-6);
        assert_eq!(h.params(), BarrierParams { m: 1.0, nu: 2.0 });

        let sym = Polytope::build_box(2, -1.0, 1.0).unwrap();
        let h = hybrid_compose(LogBarrier::new(sym), 4.0, 2f64.sqrt());
        assert_eq!(h.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);

        let h = hybrid_compose(LogBarrier::new(unit_box()), 4.0, 1.0);
        assert_eq!(h.hessian(&[0.5, 0.5]).unwrap(), Matrix::identity(2).scaled(12.0));
        assert!(h.value(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn gradient_oracle_noise() {
        let b = LogBarrier::new(interval());
        let exact = grad_oracle(&b, &[0.25], &OracleConfig::exact()).unwrap();
        assert_relative_eq!(exact[0], -8.0 / 3.0, epsilon = 1e-14);

        let zero = OracleConfig::new(0.0, 0.0, NoiseMode::Adversarial { seed: 3 }).unwrap();
        assert_eq!(grad_oracle(&b, &[0.3], &zero).unwrap(), b.gradient(&[0.3]).unwrap());

        let cfg = OracleConfig::new(0.01, 0.0, NoiseMode::Adversarial { seed: 3 }).unwrap();
        let g = grad_oracle(&b, &[0.5], &cfg).unwrap();
        assert_relative_eq!(g[0].abs(), 0.01 * 8f64.sqrt(), epsilon = 1e-12);
        assert_eq!(b.counters().grad_calls(), 3);
    }

    #[test]
    fn gradient_oracle_meets_dual_norm_contract() {
        let b = LogBarrier::new(Polytope::build_reduced_simplex(4).unwrap());
        let w = [0.1, 0.5, 0.2];
        let cfg = OracleConfig::new(0.02, 0.0, NoiseMode::Adversarial { seed: 9 }).unwrap();
        let f = spd_factorize(&b.hessian(&w).unwrap()).unwrap();
        let exact = b.gradient(&w).unwrap();
        for _ in 0..5 {
            let g = grad_oracle(&b, &w, &cfg).unwrap();
            let err = crate::linalg::sub(&g, &exact);
            assert_relative_eq!(f.dual_quad_norm(&err).unwrap(), 0.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn hessian_oracle_noise() {
        let b = LogBarrier::new(unit_box());
        let (h, f) = hess_oracle(&b, &[0.5, 0.5], &OracleConfig::exact()).unwrap();
        assert_eq!(h, Matrix::identity(2).scaled(8.0));
        assert_relative_eq!(f.solve(&[8.0, 0.0]).unwrap()[0], 1.0, epsilon = 1e-15);

        let exact = b.hessian(&[0.3, 0.6]).unwrap();
        let cfg = OracleConfig::new(0.0, 0.001, NoiseMode::Adversarial { seed: 1 }).unwrap();
        let (h, _) = hess_oracle(&b, &[0.3, 0.6], &cfg).unwrap();
        assert!(spectral_sandwich_check(&h, &exact, 0.001).unwrap());
        let eig = generalized_eigenvalues(&h, &exact).unwrap();
        assert_relative_eq!((eig[0] - 1.0).abs(), 0.001, epsilon = 1e-12);

        let cfg = OracleConfig::new(0.0, 0.0, NoiseMode::Adversarial { seed: 1 }).unwrap();
        assert_eq!(hess_oracle(&b, &[0.3, 0.6], &cfg).unwrap().0, exact);
        assert_eq!(b.counters().hess_calls(), 3);
    }

    #[test]
    fn worst_case_sandwich_is_on_boundary() {
        let b = LogBarrier::new(Polytope::build_reduced_simplex(5).unwrap());
        let h = b.hessian(&[0.1, 0.2, 0.3, 0.15]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = worst_case_sandwich(&h, 0.1, &mut rng).unwrap();
        let eig: Vec<f64> = generalized_eigenvalues(&p, &h).unwrap();
        for e in eig {
            assert_relative_eq!((e - 1.0).abs(), 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_oracle_config() {
        assert!(OracleConfig::new(-1.0, 0.0, NoiseMode::Off).is_err());
        assert!(OracleConfig::new(0.0, 1.0, NoiseMode::Off).is_err());
    }
}

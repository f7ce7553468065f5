//! Reference learners: exact follow-the-regularized-leader on the barrier and
//! projected online gradient descent on the probability simplex.

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::newton::{analytic_center, damped_newton_minimize, ShiftedObjective, DEFAULT_MAX_ITER};
use crate::scalar::Scalar;

/// Decrement tolerance for the exact FTRL solves.
pub const FTRL_TOL: f64 = 1e-12;

/// `argmin_w Φ(w) + ⟨s, w⟩`, warm-started at `w_prev`.
pub fn ftrl_exact_round<T: Scalar, B: Barrier<T> + ?Sized>(barrier: &B, s: &[T], w_prev: &[T]) -> Result<Vec<T>> {
    let obj = ShiftedObjective::new(barrier, s.to_vec())?;
    damped_newton_minimize(&obj, w_prev, T::lit(FTRL_TOL), DEFAULT_MAX_ITER)
}

/// Exact FTRL with the barrier as regularizer and step size `eta`.
pub struct FtrlExact<T, B> {
    barrier: B,
    eta: T,
    s: Vec<T>,
    w: Vec<T>,
}

impl<T: Scalar, B: Barrier<T>> FtrlExact<T, B> {
    pub fn new(barrier: B, eta: T, w0: &[T]) -> Result<Self> {
        let w = analytic_center(&barrier, w0)?;
        Ok(Self {
            s: vec![T::zero(); w.len()],
            barrier,
            eta,
            w,
        })
    }

    pub fn iterate(&self) -> &[T] {
        &self.w
    }

    pub fn shift(&self) -> &[T] {
        &self.s
    }

    pub fn barrier(&self) -> &B {
        &self.barrier
    }

    pub fn round(&mut self, g: &[T]) -> Result<&[T]> {
        if g.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: g.len(),
            });
        }
        for (si, &gi) in self.s.iter_mut().zip(g) {
            *si += self.eta * gi;
        }
        self.w = ftrl_exact_round(&self.barrier, &self.s, &self.w)?;
        Ok(&self.w)
    }
}

/// Euclidean projection onto `{x ≥ 0, Σ x = 1}` (sort-and-threshold).
pub fn project_simplex<T: Scalar>(v: &[T]) -> Vec<T> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut tau = T::zero();
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - T::one()) / T::lit((k + 1) as f64);
        if x - candidate > T::zero() {
            tau = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(T::zero())).collect()
}

/// `project_simplex(w − step · g)`.
pub fn ogd_simplex_round<T: Scalar>(w: &[T], g: &[T], step: T) -> Vec<T> {
    let moved: Vec<T> = w.iter().zip(g).map(|(&wi, &gi)| wi - step * gi).collect();
    project_simplex(&moved)
}

/// Projected OGD on the full simplex with step `R / (G √t)`.
#[derive(Debug, Clone)]
pub struct OgdSimplex<T> {
    w: Vec<T>,
    diameter: T,
    grad_bound: T,
    t: usize,
}

impl<T: Scalar> OgdSimplex<T> {
    /// Starts at the uniform distribution over `d` outcomes.
    pub fn new(d: usize, grad_bound: T) -> Self {
        Self {
            w: vec![T::one() / T::lit(d as f64); d],
            diameter: T::lit(2.0).sqrt(),
            grad_bound,
            t: 0,
        }
    }

    pub fn iterate(&self) -> &[T] {
        &self.w
    }

    pub fn round(&mut self, g: &[T]) -> &[T] {
        self.t += 1;
        let step = self.diameter / (self.grad_bound * T::lit(self.t as f64).sqrt());
        self.w = ogd_simplex_round(&self.w, g, step);
        &self.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::LogBarrier;
    use crate::domain::Polytope;
    use approx::assert_relative_eq;

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.6, 0.6]), vec![0.5, 0.5]);
        let on = [0.2, 0.3, 0.5];
        let p = project_simplex(&on);
        for (a, b) in p.iter().zip(on) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn ogd_examples() {
        assert_eq!(ogd_simplex_round(&[0.5, 0.5], &[0.0, 0.0], 0.3), vec![0.5, 0.5]);
        let w = ogd_simplex_round(&[0.5, 0.5], &[1.0, -1.0], 0.1);
        assert_relative_eq!(w[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.6, epsilon = 1e-15);
        assert_eq!(ogd_simplex_round(&[1.0, 0.0], &[1.0, -1.0], 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn ftrl_examples() {
        let b = LogBarrier::new(Polytope::build_reduced_simplex(2).unwrap());
        assert_relative_eq!(ftrl_exact_round(&b, &[0.0], &[0.2]).unwrap()[0], 0.5, epsilon = 1e-12);
        let eta = 0.001f64;
        let root = (1.0 + eta / 2.0 - (1.0 + eta * eta / 4.0).sqrt()) / eta;
        assert_relative_eq!(ftrl_exact_round(&b, &[0.001], &[0.5]).unwrap()[0], root, epsilon = 1e-12);
        assert_relative_eq!(
            ftrl_exact_round(&b, &[2.0], &[0.5]).unwrap()[0],
            1.0 - 2f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ftrl_runner_accumulates_shift() {
        let b = LogBarrier::new(Polytope::build_reduced_simplex(2).unwrap());
        let mut f = FtrlExact::new(b, 0.5, &[0.3]).unwrap();
        f.round(&[2.0]).unwrap();
        f.round(&[2.0]).unwrap();
        assert_eq!(f.shift(), &[2.0]);
        assert_relative_eq!(f.iterate()[0], 1.0 - 2f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ftrl_is_permutation_equivariant_on_the_box() {
        let b = LogBarrier::new(Polytope::build_box(3, 0.0, 1.0).unwrap());
        let s = [0.7, -1.3, 2.1];
        let w = ftrl_exact_round(&b, &s, &[0.5, 0.5, 0.5]).unwrap();
        let perm = [2usize, 0, 1];
        let sp: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let wp = ftrl_exact_round(&b, &sp, &[0.5, 0.5, 0.5]).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_relative_eq!(wp[k], w[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn ogd_runner_stays_on_simplex() {
        let mut o = OgdSimplex::new(3, 1.0);
        for k in 0..20 {
            let g = [k as f64 % 3.0, -1.0, 0.5];
            let w = o.round(&g);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }
}

//! Newton decrements, damped Newton minimization and the approximate Newton
//! step used inside the online loop.

use crate::barrier::Barrier;
use crate::error::{Error, Result};
use crate::linalg::{dot, spd_factorize, Matrix, SpdFactor};
use crate::scalar::{to_f64_vec, Scalar};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// A self-concordant objective Newton's method can minimize.
pub trait SmoothObjective<T: Scalar> {
    fn dim(&self) -> usize;
    fn contains(&self, w: &[T]) -> bool;
    fn gradient(&self, w: &[T]) -> Result<Vec<T>>;
    fn hessian(&self, w: &[T]) -> Result<Matrix<T>>;
    /// Self-concordance constant used by the damping rule.
    fn self_concordance(&self) -> T;
}

/// `Φ(w) + ⟨shift, w⟩`.
#[derive(Debug, Clone)]
pub struct ShiftedObjective<'a, T, B: ?Sized> {
    barrier: &'a B,
    shift: Vec<T>,
}

impl<'a, T: Scalar, B: Barrier<T> + ?Sized> ShiftedObjective<'a, T, B> {
    pub fn new(barrier: &'a B, shift: Vec<T>) -> Result<Self> {
        if shift.len() != barrier.dim() {
            return Err(Error::DimensionMismatch {
                expected: barrier.dim(),
                found: shift.len(),
            });
        }
        Ok(Self { barrier, shift })
    }

    pub fn unshifted(barrier: &'a B) -> Self {
        Self {
            barrier,
            shift: vec![T::zero(); barrier.dim()],
        }
    }

    pub fn barrier(&self) -> &B {
        self.barrier
    }

    pub fn shift(&self) -> &[T] {
        &self.shift
    }

    pub fn value(&self, w: &[T]) -> Result<T> {
        Ok(self.barrier.value(w)? + dot(&self.shift, w))
    }
}

impl<T: Scalar, B: Barrier<T> + ?Sized> SmoothObjective<T> for ShiftedObjective<'_, T, B> {
    fn dim(&self) -> usize {
        self.barrier.dim()
    }

    fn contains(&self, w: &[T]) -> bool {
        self.barrier.is_interior(w)
    }

    fn gradient(&self, w: &[T]) -> Result<Vec<T>> {
        let mut g = self.barrier.gradient(w)?;
        for (gi, &si) in g.iter_mut().zip(&self.shift) {
            *gi += si;
        }
        Ok(g)
    }

    fn hessian(&self, w: &[T]) -> Result<Matrix<T>> {
        self.barrier.hessian(w)
    }

    fn self_concordance(&self) -> T {
        self.barrier.params().m
    }
}

fn not_interior<T: Scalar, O: SmoothObjective<T> + ?Sized>(obj: &O, w: &[T]) -> Result<()> {
    if w.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: w.len(),
        });
    }
    if obj.contains(w) {
        Ok(())
    } else {
        Err(Error::NotInterior { min_slack: f64::NAN })
    }
}

/// Gradient, Hessian factor, Newton direction and decrement at `w`.
struct NewtonData<T> {
    direction: Vec<T>,
    decrement: T,
}

fn newton_data<T: Scalar, O: SmoothObjective<T> + ?Sized>(obj: &O, w: &[T]) -> Result<NewtonData<T>> {
    not_interior(obj, w)?;
    let g = obj.gradient(w)?;
    let factor = spd_factorize(&obj.hessian(w)?)?;
    let direction = factor.solve(&g)?;
    let decrement = dot(&g, &direction).max(T::zero()).sqrt();
    Ok(NewtonData {
        direction,
        decrement,
    })
}

/// `λ(w) = ‖∇f(w)‖_{∇²f(w)⁻¹}`.
pub fn newton_decrement<T: Scalar, O: SmoothObjective<T> + ?Sized>(obj: &O, w: &[T]) -> Result<T> {
    not_interior(obj, w)?;
    let g = obj.gradient(w)?;
    let factor = spd_factorize(&obj.hessian(w)?)?;
    factor.dual_quad_norm(&g)
}

/// Damped Newton: step `1 / (1 + Mλ)` while `λ ≥ 1/(4M)`, full steps after.
///
/// Stops once the decrement is at most `tol`; every iterate stays strictly
/// inside the domain.
pub fn damped_newton_minimize<T: Scalar, O: SmoothObjective<T> + ?Sized>(
    obj: &O,
    w0: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    not_interior(obj, w0)?;
    let m = obj.self_concordance();
    let quarter = T::lit(0.25) / m;
    let mut w = w0.to_vec();
    let mut best = (w.clone(), T::infinity());
    for _ in 0..max_iter {
        let NewtonData {
            direction,
            decrement,
        } = newton_data(obj, &w)?;
        if decrement < best.1 {
            best = (w.clone(), decrement);
        }
        if decrement <= tol {
            return Ok(w);
        }
        let mut step = if decrement >= quarter {
            T::one() / (T::one() + m * decrement)
        } else {
            T::one()
        };
        // Dikin steps are feasible in exact arithmetic; halve on round-off.
        let mut candidate: Vec<T>;
        loop {
            candidate = w
                .iter()
                .zip(&direction)
                .map(|(&wi, &di)| wi - step * di)
                .collect();
            if obj.contains(&candidate) {
                break;
            }
            step /= T::lit(2.0);
            if step < T::lit(1e-30) {
                return Err(max_iter_error(max_iter, tol, &best));
            }
        }
        w = candidate;
    }
    let last = newton_decrement(obj, &w)?;
    if last <= tol {
        return Ok(w);
    }
    if last < best.1 {
        best = (w, last);
    }
    Err(max_iter_error(max_iter, tol, &best))
}

fn max_iter_error<T: Scalar>(iterations: usize, tol: T, best: &(Vec<T>, T)) -> Error {
    Error::MaxIterExceeded {
        iterations,
        tol: tol.to_f64_lossy(),
        decrement: best.1.to_f64_lossy(),
        best: to_f64_vec(&best.0),
    }
}

/// Minimizer of the barrier, starting from any interior point.
pub fn analytic_center<T: Scalar, B: Barrier<T> + ?Sized>(barrier: &B, w0: &[T]) -> Result<Vec<T>> {
    let obj = ShiftedObjective::unshifted(barrier);
    damped_newton_minimize(&obj, w0, T::lit(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

/// `w − H⁻¹ g̃` through a cached factorization of `H`.
pub fn approx_newton_step<T: Scalar>(w: &[T], factor: &SpdFactor<T>, grad_tilde: &[T]) -> Result<Vec<T>> {
    if w.len() != factor.dim() {
        return Err(Error::DimensionMismatch {
            expected: factor.dim(),
            found: w.len(),
        });
    }
    let step = factor.solve(grad_tilde)?;
    Ok(w.iter().zip(&step).map(|(&wi, &si)| wi - si).collect())
}

//! The BARONS online learner.
//!
//! Each round adds `η g_t` to the running shift `s`, then takes a fixed number
//! of approximate Newton steps on `Φ(w) + ⟨s, w⟩` using the Hessian factor cached
//! at the current landmark `u`. The landmark (and its factorization) is only
//! recomputed when the new iterate leaves the `1/(41 M_Φ)` ball around `u` in
//! the cached Hessian norm.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::barrier::{grad_oracle, hess_oracle, Barrier, BarrierParams, NoiseMode, OracleConfig};
use crate::error::{Error, Result};
use crate::linalg::{sub, Matrix, SpdFactor};
use crate::newton::{
    analytic_center, approx_newton_step, damped_newton_minimize, newton_decrement, ShiftedObjective,
    DEFAULT_MAX_ITER,
};
use crate::scalar::Scalar;

/// Hessian-oracle tolerance used throughout.
pub const ALPHA_HESS: f64 = 0.001;

/// How gradients are bounded, which selects the step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormBound<T> {
    /// `‖g_t‖_{∇⁻²Φ(w_t)} ≤ b`.
    LocalNorm { b: T },
    /// `‖g_t‖ ≤ g` on a domain inside the origin-centered ball of radius `r`.
    Euclidean { g: T, r: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reject parameters outside the regime where the regret analysis holds.
    Strict,
    /// Accept any schedule; precondition violations become warnings.
    #[default]
    Practical,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Practical => "practical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaronsParams<T> {
    pub eta: T,
    pub eps: T,
    pub alpha_hess: T,
    pub m_newton: usize,
    pub landmark_threshold: T,
    /// Decrement the iterate is expected to reach each round.
    pub lambda_target: T,
    pub mode: Mode,
    /// Self-concordance constant of the barrier.
    pub barrier_m: T,
    /// Local-norm gradient bound the schedule assumes.
    pub local_bound: T,
    /// Violated preconditions (practical mode only).
    pub warnings: Vec<String>,
}

/// Number of inner Newton steps: `⌈ln(1/(10 ε M)) / ln(16/15)⌉`, at least 1.
pub fn m_newton_for<T: Scalar>(eps: T, barrier_m: T) -> usize {
    let arg = (T::lit(10.0) * eps * barrier_m).recip();
    if !(arg > T::one()) || !arg.is_finite() {
        return if arg.is_finite() { 1 } else { 1000 };
    }
    let m = (arg.ln() / T::lit(16.0 / 15.0).ln()).ceil();
    m.to_usize().unwrap_or(1).max(1)
}

impl<T: Scalar> BaronsParams<T> {
    /// Builds parameters from an explicit `(η, ε)` pair and derives the rest.
    pub fn from_schedule(eta: T, eps: T, barrier_m: T, local_bound: T, mode: Mode) -> Result<Self> {
        if !(eta > T::zero()) || !(eps > T::zero()) || !(barrier_m > T::zero()) || !(local_bound > T::zero()) {
            return Err(Error::Config(format!(
                "schedule needs positive eta, eps, M and b (eta={eta}, eps={eps}, M={barrier_m}, b={local_bound})"
            )));
        }
        let violations = precondition_violations(eta, eps, barrier_m, local_bound);
        if mode == Mode::Strict && !violations.is_empty() {
            return Err(Error::PreconditionViolated(violations.join("; ")));
        }
        let thousand = T::lit(1000.0);
        Ok(Self {
            eta,
            eps,
            alpha_hess: T::lit(ALPHA_HESS),
            m_newton: m_newton_for(eps, barrier_m),
            landmark_threshold: (T::lit(41.0) * barrier_m).recip(),
            lambda_target: (thousand * barrier_m).recip().min(thousand * eps),
            mode,
            barrier_m,
            local_bound,
            warnings: violations,
        })
    }

    /// Largest decrement tolerated before the fallback engages: `1/(20 M)`.
    pub fn guard_threshold(&self) -> T {
        (T::lit(20.0) * self.barrier_m).recip()
    }
}

fn precondition_violations<T: Scalar>(eta: T, eps: T, barrier_m: T, b: T) -> Vec<String> {
    let mut out = Vec::new();
    let eta_max = (T::lit(1000.0) * b * barrier_m).recip();
    if eta > eta_max {
        out.push(format!("η = {eta} violates η ≤ 1/(1000 b M_Φ) = {eta_max}"));
    }
    let eps_max = (T::lit(20000.0) * barrier_m).recip();
    if eps > eps_max {
        out.push(format!("ε = {eps} violates ε ≤ 1/(20000 M_Φ) = {eps_max}"));
    }
    out
}

/// Step size and oracle tolerance for a horizon `T` and comparator shrink `c`.
///
/// Local-norm bound: `η = √(ν ln(1/c) / (b² T))`. Euclidean bound:
/// `η = (ν / (R G)) √((ln T + 1) / T)`, for which the assumed local bound is
/// `b = G R / √ν`. Both use `ε = √(ν / T)`.
pub fn compute_params<T: Scalar>(
    barrier: BarrierParams<T>,
    bound: NormBound<T>,
    horizon: usize,
    c: T,
    mode: Mode,
) -> Result<BaronsParams<T>> {
    if horizon < 2 {
        return Err(Error::Config(format!("horizon T must be >= 2, got {horizon}")));
    }
    if !(c > T::zero() && c < T::one()) {
        return Err(Error::Config(format!("comparator shrink c must lie in (0, 1), got {c}")));
    }
    let t = T::lit(horizon as f64);
    let nu = barrier.nu;
    let eps = (nu / t).sqrt();
    let (eta, b) = match bound {
        NormBound::LocalNorm { b } => {
            if !(b > T::zero()) {
                return Err(Error::Config(format!("local-norm bound b must be positive, got {b}")));
            }
            ((nu * c.recip().ln() / (b * b * t)).sqrt(), b)
        }
        NormBound::Euclidean { g, r } => {
            if !(g > T::zero() && r > T::zero()) {
                return Err(Error::Config(format!("Euclidean bound needs G, R > 0, got G={g}, R={r}")));
            }
            let eta = nu / (r * g) * ((t.ln() + T::one()) / t).sqrt();
            (eta, g * r / nu.sqrt())
        }
    };
    BaronsParams::from_schedule(eta, eps, barrier.m, b, mode)
}

/// Counters accumulated over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaronsStats {
    pub rounds: usize,
    pub landmark_updates: usize,
    pub inner_steps: usize,
    /// Rounds where the damped fallback ran.
    pub guard_events: usize,
    /// Monitored rounds ending above `lambda_target`.
    pub decrement_violations: usize,
    /// Inner steps breaking the geometric decay bound (inner monitoring only).
    pub inner_decay_violations: usize,
}

/// When to evaluate exact Newton decrements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorConfig {
    /// Monitor every `every`-th round; 0 disables.
    pub every: usize,
    /// Record the decrement after every inner step as well.
    pub inner: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            every: 50,
            inner: false,
        }
    }
}

impl MonitorConfig {
    pub fn every_round() -> Self {
        Self {
            every: 1,
            inner: true,
        }
    }

    fn due(&self, round: usize) -> bool {
        self.every > 0 && round.is_multiple_of(self.every)
    }
}

#[derive(Debug, Clone)]
pub struct BaronsState<T> {
    /// Rounds completed.
    pub t: usize,
    pub w: Vec<T>,
    /// `η Σ_τ g_τ`.
    pub s: Vec<T>,
    /// Landmark point.
    pub u: Vec<T>,
    pub hessian: Matrix<T>,
    pub factor: SpdFactor<T>,
    pub stats: BaronsStats,
}

/// What one round produced.
#[derive(Debug, Clone)]
pub struct RoundReport<T> {
    /// The next iterate to play.
    pub w: Vec<T>,
    pub landmark_updated: bool,
    /// `‖w_{t+1} − u_t‖_{H_t}`, the distance the landmark test compared.
    pub landmark_distance: T,
    /// `λ(w_{t+1}, Φ_{t+1})` on monitored rounds.
    pub decrement: Option<T>,
    /// `λ(w^m, Φ_{t+1})` for `m = 1..=m_newton + 1` with inner monitoring.
    pub inner_decrements: Vec<T>,
    pub guard_engaged: bool,
}

pub struct Barons<T: Scalar, B> {
    barrier: B,
    params: BaronsParams<T>,
    oracle: OracleConfig<T>,
    monitor: MonitorConfig,
    state: BaronsState<T>,
}

impl<T: Scalar, B: Barrier<T>> Barons<T, B> {
    /// Starts at the analytic center of the barrier with the landmark there.
    pub fn init(barrier: B, params: BaronsParams<T>, noise: NoiseMode, w0: &[T]) -> Result<Self> {
        let oracle = OracleConfig::new(params.eps, params.alpha_hess, noise)?;
        let center = analytic_center(&barrier, w0)?;
        let (hessian, factor) = hess_oracle(&barrier, &center, &oracle)?;
        let state = BaronsState {
            t: 0,
            w: center.clone(),
            s: vec![T::zero(); center.len()],
            u: center,
            hessian,
            factor,
            stats: BaronsStats::default(),
        };
        Ok(Self {
            barrier,
            params,
            oracle,
            monitor: MonitorConfig::default(),
            state,
        })
    }

    pub fn with_monitor(mut self, monitor: MonitorConfig) -> Self {
        self.monitor = monitor;
        self
    }

    pub fn barrier(&self) -> &B {
        &self.barrier
    }

    pub fn params(&self) -> &BaronsParams<T> {
        &self.params
    }

    pub fn state(&self) -> &BaronsState<T> {
        &self.state
    }

    pub fn stats(&self) -> &BaronsStats {
        &self.state.stats
    }

    /// Current iterate `w_t`.
    pub fn iterate(&self) -> &[T] {
        &self.state.w
    }

    /// `‖w − u‖_H` for the current state.
    pub fn landmark_distance(&self) -> Result<T> {
        self.state
            .factor
            .quad_norm(&sub(&self.state.w, &self.state.u))
    }

    /// Exact `λ(w_t, Φ_t)` for the current state.
    pub fn current_decrement(&self) -> Result<T> {
        let obj = ShiftedObjective::new(&self.barrier, self.state.s.clone())?;
        newton_decrement(&obj, &self.state.w)
    }

    /// Consumes the subgradient `g_t` observed at `w_t` and moves to `w_{t+1}`.
    pub fn round(&mut self, g: &[T]) -> Result<RoundReport<T>> {
        let round = self.state.t + 1;
        self.round_inner(g).map_err(|e| e.at_round(round))
    }

    fn round_inner(&mut self, g: &[T]) -> Result<RoundReport<T>> {
        let dim = self.state.w.len();
        if g.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("subgradient has non-finite entries".into()));
        }
        let eta = self.params.eta;
        for (si, &gi) in self.state.s.iter_mut().zip(g) {
            *si += eta * gi;
        }
        self.state.t += 1;
        let round = self.state.t;

        let monitor_round = self.monitor.due(round);
        let watch_inner = monitor_round && self.monitor.inner;
        let objective = ShiftedObjective::new(&self.barrier, self.state.s.clone())?;

        let mut inner_decrements = Vec::new();
        let mut w = self.state.w.clone();
        let mut left_domain = false;
        if watch_inner {
            inner_decrements.push(newton_decrement(&objective, &w)?);
        }
        for _ in 0..self.params.m_newton {
            let mut grad = grad_oracle(&self.barrier, &w, &self.oracle)?;
            for (gi, &si) in grad.iter_mut().zip(&self.state.s) {
                *gi += si;
            }
            let next = approx_newton_step(&w, &self.state.factor, &grad)?;
            self.state.stats.inner_steps += 1;
            if !self.barrier.is_interior(&next) {
                left_domain = true;
                break;
            }
            w = next;
            if watch_inner {
                inner_decrements.push(newton_decrement(&objective, &w)?);
            }
        }
        if watch_inner && !left_domain {
            let first = inner_decrements[0];
            let ratio = T::lit(15.0 / 16.0);
            let slack = T::lit(500.0) * self.params.eps;
            let mut bound_factor = T::one();
            for &lam in &inner_decrements {
                if lam > bound_factor * first + slack + T::lit(1e-12) {
                    self.state.stats.inner_decay_violations += 1;
                }
                bound_factor *= ratio;
            }
        }

        let mut decrement = None;
        let mut guard_engaged = false;
        if monitor_round || left_domain {
            let lam = newton_decrement(&objective, &w)?;
            if left_domain || lam > self.params.guard_threshold() {
                guard_engaged = true;
                self.state.stats.guard_events += 1;
                w = damped_newton_minimize(&objective, &w, self.params.lambda_target, DEFAULT_MAX_ITER)
                    .map_err(|e| match e {
                        Error::MaxIterExceeded { decrement, .. } => {
                            Error::DivergenceDetected { round, decrement }
                        }
                        other => other,
                    })?;
                decrement = Some(newton_decrement(&objective, &w)?);
            } else {
                decrement = Some(lam);
            }
            if self.params.mode == Mode::Strict {
                if let Some(lam) = decrement {
                    if lam > self.params.lambda_target {
                        self.state.stats.decrement_violations += 1;
                    }
                }
            }
        }

        let distance = self.state.factor.quad_norm(&sub(&w, &self.state.u))?;
        let landmark_updated = distance > self.params.landmark_threshold;
        if landmark_updated {
            let (hessian, factor) = hess_oracle(&self.barrier, &w, &self.oracle)?;
            self.state.u = w.clone();
            self.state.hessian = hessian;
            self.state.factor = factor;
            self.state.stats.landmark_updates += 1;
        }
        self.state.w = w.clone();
        self.state.stats.rounds += 1;

        Ok(RoundReport {
            w,
            landmark_updated,
            landmark_distance: distance,
            decrement,
            inner_decrements,
            guard_engaged,
        })
    }
}

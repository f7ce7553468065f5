//! Experiment runs: drive a learner against a seeded loss stream, record one
//! trace row per round, and measure regret against the best fixed comparator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barons::{compute_params, Barons, BaronsParams, Mode, MonitorConfig, NormBound};
use crate::barrier::{hybrid_compose, Barrier, LogBarrier, NoiseMode};
use crate::baselines::{FtrlExact, OgdSimplex};
use crate::domain::{lift_reduced, reduce_full, shrink_toward, Polytope};
use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, Matrix};
use crate::losses::{
    features_uniform, labels_logistic, linear_adversary_iid_sphere, returns_iid,
    returns_two_asset_adversarial, Embedding, RoundLoss,
};
use crate::newton::{analytic_center, damped_newton_minimize, SmoothObjective, DEFAULT_TOL};

/// Slack margin for the per-round feasibility assertion.
pub const FEASIBILITY_MARGIN: f64 = 1e-12;

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 7] = [
    "t",
    "loss",
    "local_norm_g",
    "decrement",
    "landmark_updated",
    "landmark_distance",
    "wall_time_us",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Box,
    #[default]
    Simplex,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub kind: DomainKind,
    /// Box dimension, or number of assets/outcomes for the simplex.
    pub d: usize,
    pub lo: f64,
    pub hi: f64,
    /// Polytope text file for `kind = "file"`.
    pub path: Option<String>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            kind: DomainKind::Simplex,
            d: 4,
            lo: 0.0,
            hi: 1.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    #[default]
    Log,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierConfig {
    pub kind: BarrierKind,
    /// Barrier parameter of the hybrid barrier (default: number of constraints).
    pub nu: Option<f64>,
    /// Radius of the origin-centered ball containing the domain.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    Barons,
    FtrlExact,
    Ogd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    #[default]
    Local,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Off,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub mode: Mode,
    pub bound: BoundKind,
    /// Local-norm gradient bound.
    pub b: f64,
    /// Euclidean gradient bound (default: the linear loss norm, else 1).
    pub g: Option<f64>,
    /// Euclidean domain radius (default: computed for box and simplex).
    pub r: Option<f64>,
    /// Explicit step size, replacing the schedule.
    pub eta: Option<f64>,
    /// Explicit oracle tolerance, replacing the schedule.
    pub eps: Option<f64>,
    /// Exact decrement every this many rounds; 0 disables.
    pub monitor_every: usize,
    /// Also record decrements after every inner step.
    pub monitor_inner: bool,
    pub noise: NoiseKind,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            kind: AlgorithmKind::Barons,
            mode: Mode::Practical,
            bound: BoundKind::Local,
            b: 2.0,
            g: None,
            r: None,
            eta: None,
            eps: None,
            monitor_every: 50,
            monitor_inner: false,
            noise: NoiseKind::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Zero,
    Linear,
    #[default]
    Portfolio,
    TwoAsset,
    Logloss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub family: LossFamily,
    /// Norm of every linear loss vector.
    pub g_norm: f64,
    /// Return range for i.i.d. portfolio returns.
    pub lo: f64,
    pub hi: f64,
    /// Feature range for log-loss (default depends on the domain).
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    /// Label model weights for log-loss (default: center of the domain).
    pub w_true: Option<Vec<f64>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            family: LossFamily::Portfolio,
            g_norm: 1.0,
            lo: 0.5,
            hi: 1.5,
            x_lo: None,
            x_hi: None,
            w_true: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    /// Comparator shrink (default `1/T`).
    pub c: Option<f64>,
    /// Trace CSV destination.
    pub output: Option<String>,
    /// Constant in the landmark-count budget.
    pub landmark_constant: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 1000,
            seed: 0,
            c: None,
            output: None,
            landmark_constant: 50.0,
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub barrier: BarrierConfig,
    pub algorithm: AlgorithmConfig,
    pub loss: LossConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn shrink(&self) -> f64 {
        self.run.c.unwrap_or(1.0 / self.run.horizon.max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        if self.run.horizon < 1 {
            return bad("run.T", "must be at least 1".into());
        }
        let c = self.shrink();
        if !(c > 0.0 && c < 1.0) {
            return bad("run.c", format!("must lie in (0, 1), got {c}"));
        }
        match self.domain.kind {
            DomainKind::Box if self.domain.d < 1 => return bad("domain.d", "must be at least 1".into()),
            DomainKind::Box if !(self.domain.hi > self.domain.lo) => {
                return bad("domain.hi", format!("must exceed domain.lo = {}", self.domain.lo))
            }
            DomainKind::Simplex if self.domain.d < 2 => return bad("domain.d", "simplex needs at least 2".into()),
            DomainKind::File if self.domain.path.is_none() => {
                return bad("domain.path", "required for kind = \"file\"".into())
            }
            _ => {}
        }
        let simplex = self.domain.kind == DomainKind::Simplex;
        match self.loss.family {
            LossFamily::Portfolio | LossFamily::TwoAsset if !simplex => {
                return bad("loss.family", "portfolio losses need domain.kind = \"simplex\"".into())
            }
            LossFamily::TwoAsset if self.domain.d != 2 => {
                return bad("domain.d", "the two-asset stream needs d = 2".into())
            }
            LossFamily::Portfolio if !(self.loss.lo > 0.0 && self.loss.hi >= self.loss.lo) => {
                return bad("loss.lo", format!("returns need 0 < lo <= hi, got [{}, {}]", self.loss.lo, self.loss.hi))
            }
            LossFamily::Logloss if self.domain.kind == DomainKind::File => {
                return bad("loss.family", "log-loss needs a box or simplex domain".into())
            }
            LossFamily::Logloss
                if self.domain.kind == DomainKind::Box && (self.domain.lo < 0.0 || self.domain.hi > 1.0) =>
            {
                return bad("domain.lo", "log-loss on a box needs 0 <= lo < hi <= 1".into())
            }
            LossFamily::Linear if !(self.loss.g_norm >= 0.0) => {
                return bad("loss.g_norm", "must be nonnegative".into())
            }
            _ => {}
        }
        if self.algorithm.kind == AlgorithmKind::Ogd && !simplex {
            return bad("algorithm.kind", "ogd runs on the simplex only".into());
        }
        if !(self.algorithm.b > 0.0) {
            return bad("algorithm.b", "must be positive".into());
        }
        if self.barrier.kind == BarrierKind::Hybrid {
            if let Some(nu) = self.barrier.nu {
                if !(nu > 0.0) {
                    return bad("barrier.nu", "must be positive".into());
                }
            }
        }
        Ok(())
    }
}

/// One round of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub loss: f64,
    /// `‖g_t‖` in the inverse barrier Hessian at `w_t`.
    pub local_norm_g: f64,
    /// Exact decrement after the round; NaN when not monitored.
    pub decrement: f64,
    pub landmark_updated: bool,
    pub landmark_distance: f64,
    pub wall_time_us: u64,
}

impl TraceRow {
    /// Equality on every column except wall time.
    pub fn same_values(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.t == other.t
            && eq(self.loss, other.loss)
            && eq(self.local_norm_g, other.local_norm_g)
            && eq(self.decrement, other.decrement)
            && self.landmark_updated == other.landmark_updated
            && eq(self.landmark_distance, other.landmark_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    /// `key=value` header lines, in insertion order.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn landmark_updates(&self) -> usize {
        self.rows.iter().filter(|r| r.landmark_updated).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_regret: f64,
    pub landmark_updates: usize,
    pub max_local_norm: f64,
    pub sum_local_norm: f64,
    /// `C (M T ε + M η Σ ‖g_t‖_local)`; NaN for learners without landmarks.
    pub landmark_budget: f64,
    pub feasibility_violations: usize,
    pub guard_events: usize,
    pub decrement_violations: usize,
    pub grad_calls: u64,
    pub hess_calls: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub loss_log: Vec<RoundLoss<f64>>,
    /// The points played, in the learner's coordinates.
    pub iterates: Vec<Vec<f64>>,
    pub comparator: Comparator,
    pub regret: Vec<f64>,
    pub params: Option<BaronsParams<f64>>,
    pub embedding: Embedding,
    pub summary: RunSummary,
}

/// Builds the domain and the coordinates the learner plays in.
pub fn build_domain(cfg: &DomainConfig) -> Result<(Polytope<f64>, Embedding)> {
    match cfg.kind {
        DomainKind::Box => Ok((Polytope::build_box(cfg.d, cfg.lo, cfg.hi)?, Embedding::Identity)),
        DomainKind::Simplex => Ok((Polytope::build_reduced_simplex(cfg.d)?, Embedding::ReducedSimplex)),
        DomainKind::File => {
            let path = cfg
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("domain.path: required for kind = \"file\"".into()))?;
            let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            Ok((Polytope::from_text(&text)?, Embedding::Identity))
        }
    }
}

/// Radius of an origin-centered ball containing the domain.
fn domain_radius(cfg: &RunConfig) -> Result<f64> {
    if let Some(r) = cfg.algorithm.r.or(cfg.barrier.radius) {
        return Ok(r);
    }
    match cfg.domain.kind {
        DomainKind::Box => Ok((cfg.domain.d as f64).sqrt() * cfg.domain.lo.abs().max(cfg.domain.hi.abs())),
        DomainKind::Simplex => Ok(1.0),
        DomainKind::File => Err(Error::Config(
            "algorithm.r: required for file domains with Euclidean bounds or hybrid barriers".into(),
        )),
    }
}

/// The configured barrier over `polytope`.
pub fn build_barrier(cfg: &RunConfig, polytope: Polytope<f64>) -> Result<Box<dyn Barrier<f64>>> {
    match cfg.barrier.kind {
        BarrierKind::Log => Ok(Box::new(LogBarrier::new(polytope))),
        BarrierKind::Hybrid => {
            let nu = cfg.barrier.nu.unwrap_or(polytope.num_constraints() as f64);
            let radius = domain_radius(cfg)?;
            Ok(Box::new(hybrid_compose(LogBarrier::new(polytope), nu, radius)))
        }
    }
}

/// Resolved step size, tolerance and derived constants for a config.
pub fn resolve_params(cfg: &RunConfig, barrier: &dyn Barrier<f64>) -> Result<BaronsParams<f64>> {
    let bp = barrier.params();
    let bound = match cfg.algorithm.bound {
        BoundKind::Local => NormBound::LocalNorm { b: cfg.algorithm.b },
        BoundKind::Euclidean => NormBound::Euclidean {
            g: cfg.algorithm.g.unwrap_or(match cfg.loss.family {
                LossFamily::Linear => cfg.loss.g_norm,
                _ => 1.0,
            }),
            r: domain_radius(cfg)?,
        },
    };
    let mode = cfg.algorithm.mode;
    let scheduled = compute_params(bp, bound, cfg.run.horizon, cfg.shrink(), Mode::Practical)?;
    let eta = cfg.algorithm.eta.unwrap_or(scheduled.eta);
    let eps = cfg.algorithm.eps.unwrap_or(scheduled.eps);
    BaronsParams::from_schedule(eta, eps, bp.m, scheduled.local_bound, mode)
}

fn loss_stream(cfg: &RunConfig, dim: usize) -> Result<Box<dyn Iterator<Item = RoundLoss<f64>> + Send>> {
    let seed = cfg.run.seed;
    let l = &cfg.loss;
    let simplex = cfg.domain.kind == DomainKind::Simplex;
    Ok(match l.family {
        LossFamily::Zero => Box::new(linear_adversary_iid_sphere(seed, dim, 0.0)),
        LossFamily::Linear => Box::new(linear_adversary_iid_sphere(seed, dim, l.g_norm)),
        LossFamily::Portfolio => Box::new(returns_iid(seed, cfg.domain.d, l.lo, l.hi)?),
        LossFamily::TwoAsset => Box::new(returns_two_asset_adversarial(seed).typed::<f64>()),
        LossFamily::Logloss => {
            let d = cfg.domain.d;
            let (lo, hi) = if simplex { (0.05, 0.95) } else { (0.05 / d as f64, 0.95 / d as f64) };
            let (lo, hi) = (l.x_lo.unwrap_or(lo), l.x_hi.unwrap_or(hi));
            let w_true = match &l.w_true {
                Some(w) if w.len() == d => w.clone(),
                Some(w) => {
                    return Err(Error::Config(format!(
                        "loss.w_true: expected {d} entries, found {}",
                        w.len()
                    )))
                }
                None if simplex => vec![1.0 / d as f64; d],
                None => vec![0.5; d],
            };
            Box::new(labels_logistic(seed, features_uniform(seed.wrapping_add(1), d, lo, hi), w_true))
        }
    })
}

#[allow(clippy::large_enum_variant)]
enum Learner<'a> {
    Barons(Barons<f64, &'a dyn Barrier<f64>>),
    Ftrl(FtrlExact<f64, &'a dyn Barrier<f64>>),
    Ogd(OgdSimplex<f64>),
}

struct Step {
    decrement: f64,
    landmark_updated: bool,
    landmark_distance: f64,
}

impl Learner<'_> {
    /// Point played this round, in the learner's (possibly reduced) coordinates.
    fn play(&self) -> Vec<f64> {
        match self {
            Learner::Barons(b) => b.iterate().to_vec(),
            Learner::Ftrl(f) => f.iterate().to_vec(),
            Learner::Ogd(o) => reduce_full(o.iterate()),
        }
    }

    fn update(&mut self, g: &[f64]) -> Result<Step> {
        match self {
            Learner::Barons(b) => {
                let report = b.round(g)?;
                Ok(Step {
                    decrement: report.decrement.unwrap_or(f64::NAN),
                    landmark_updated: report.landmark_updated,
                    landmark_distance: report.landmark_distance,
                })
            }
            Learner::Ftrl(f) => {
                f.round(g)?;
                Ok(Step {
                    decrement: f64::NAN,
                    landmark_updated: false,
                    landmark_distance: f64::NAN,
                })
            }
            Learner::Ogd(o) => {
                // reduced gradient padded with 0 differs from the full one by a
                // multiple of the all-ones vector, which the projection ignores
                let mut full = g.to_vec();
                full.push(0.0);
                o.round(&full);
                Ok(Step {
                    decrement: f64::NAN,
                    landmark_updated: false,
                    landmark_distance: f64::NAN,
                })
            }
        }
    }
}

fn local_norm(barrier: &dyn Barrier<f64>, w: &[f64], g: &[f64]) -> f64 {
    if !barrier.is_interior(w) {
        return f64::NAN;
    }
    barrier
        .hessian(w)
        .and_then(|h| spd_factorize(&h))
        .and_then(|f| f.dual_quad_norm(g))
        .unwrap_or(f64::NAN)
}

/// Runs one experiment to completion. Deterministic given the config; only
/// the wall-time column varies between repeats.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (polytope, embedding) = build_domain(&cfg.domain)?;
    let barrier = build_barrier(cfg, polytope)?;
    let barrier: &dyn Barrier<f64> = barrier.as_ref();
    let dim = barrier.dim();
    let horizon = cfg.run.horizon;
    let w0 = barrier.domain().witness().to_vec();

    let params = match cfg.algorithm.kind {
        AlgorithmKind::Ogd => None,
        _ => Some(resolve_params(cfg, barrier)?),
    };
    let mut learner = match cfg.algorithm.kind {
        AlgorithmKind::Barons => {
            let p = params.clone().expect("resolved above");
            let noise = match cfg.algorithm.noise {
                NoiseKind::Off => NoiseMode::Off,
                NoiseKind::Adversarial => NoiseMode::Adversarial {
                    seed: cfg.run.seed ^ 0xA5A5_5A5A_0F0F_F0F0,
                },
            };
            let monitor = MonitorConfig {
                every: cfg.algorithm.monitor_every,
                inner: cfg.algorithm.monitor_inner,
            };
            Learner::Barons(Barons::init(barrier, p, noise, &w0)?.with_monitor(monitor))
        }
        AlgorithmKind::FtrlExact => {
            let eta = params.as_ref().expect("resolved above").eta;
            Learner::Ftrl(FtrlExact::new(barrier, eta, &w0)?)
        }
        AlgorithmKind::Ogd => Learner::Ogd(OgdSimplex::new(cfg.domain.d, cfg.algorithm.g.unwrap_or(1.0))),
    };
    let checks_feasibility = cfg.algorithm.kind != AlgorithmKind::Ogd;

    let mut stream = loss_stream(cfg, dim)?;
    let mut trace = Trace::default();
    let mut loss_log = Vec::with_capacity(horizon);
    let mut iterates = Vec::with_capacity(horizon);
    let mut violations = 0usize;
    let (mut max_local, mut sum_local) = (0.0f64, 0.0f64);

    for t in 1..=horizon {
        let loss = stream
            .next()
            .ok_or_else(|| Error::Config("loss stream ended early".into()))?;
        let w = learner.play();
        if checks_feasibility && !barrier.domain().is_strictly_feasible(&w, FEASIBILITY_MARGIN) {
            violations += 1;
        }
        let ev = loss.eval(&w, embedding).map_err(|e| e.at_round(t))?;
        let ln = local_norm(barrier, &w, &ev.grad);
        if ln.is_finite() {
            max_local = max_local.max(ln);
            sum_local += ln;
        }
        let start = Instant::now();
        let step = learner.update(&ev.grad)?;
        let elapsed = start.elapsed().as_micros() as u64;
        trace.rows.push(TraceRow {
            t,
            loss: ev.loss,
            local_norm_g: ln,
            decrement: step.decrement,
            landmark_updated: step.landmark_updated,
            landmark_distance: step.landmark_distance,
            wall_time_us: elapsed,
        });
        loss_log.push(loss);
        iterates.push(w);
    }

    let c = cfg.shrink();
    let comparator = best_fixed_comparator(&loss_log, barrier, c, embedding)?;
    let played: Vec<f64> = trace.rows.iter().map(|r| r.loss).collect();
    let regret = regret_curve(&played, &comparator.point, &loss_log, embedding)?;

    let stats = match &learner {
        Learner::Barons(b) => Some(b.stats().clone()),
        _ => None,
    };
    let landmark_updates = trace.landmark_updates();
    let landmark_budget = match (&params, &stats) {
        (Some(p), Some(_)) => {
            cfg.run.landmark_constant * (p.barrier_m * horizon as f64 * p.eps + p.barrier_m * p.eta * sum_local)
        }
        _ => f64::NAN,
    };
    let summary = RunSummary {
        final_regret: regret.last().copied().unwrap_or(0.0),
        landmark_updates,
        max_local_norm: max_local,
        sum_local_norm: sum_local,
        landmark_budget,
        feasibility_violations: violations,
        guard_events: stats.as_ref().map_or(0, |s| s.guard_events),
        decrement_violations: stats.as_ref().map_or(0, |s| s.decrement_violations),
        grad_calls: barrier.counters().grad_calls(),
        hess_calls: barrier.counters().hess_calls(),
    };

    fill_meta(&mut trace, cfg, params.as_ref(), &comparator, &summary);
    Ok(RunOutput {
        trace,
        loss_log,
        iterates,
        comparator,
        regret,
        params,
        embedding,
        summary,
    })
}

fn fill_meta(
    trace: &mut Trace,
    cfg: &RunConfig,
    params: Option<&BaronsParams<f64>>,
    comparator: &Comparator,
    s: &RunSummary,
) {
    let algorithm = match cfg.algorithm.kind {
        AlgorithmKind::Barons => "barons",
        AlgorithmKind::FtrlExact => "ftrl_exact",
        AlgorithmKind::Ogd => "ogd",
    };
    trace.set_meta("algorithm", algorithm);
    trace.set_meta("T", cfg.run.horizon);
    trace.set_meta("seed", cfg.run.seed);
    if let Some(p) = params {
        trace.set_meta("mode", p.mode);
        trace.set_meta("eta", p.eta);
        trace.set_meta("eps", p.eps);
        trace.set_meta("m_newton", p.m_newton);
        trace.set_meta("landmark_threshold", p.landmark_threshold);
        trace.set_meta("lambda_target", p.lambda_target);
        trace.set_meta("guard_threshold", p.guard_threshold());
        trace.set_meta("local_bound", p.local_bound);
        if !p.warnings.is_empty() {
            trace.set_meta("precondition_warnings", p.warnings.join("; "));
        }
    }
    trace.set_meta("comparator_c", comparator.c);
    trace.set_meta("comparator_delta", comparator.delta);
    trace.set_meta("comparator_bias", comparator.bias);
    trace.set_meta("final_regret", s.final_regret);
    trace.set_meta("landmark_updates", s.landmark_updates);
    trace.set_meta("landmark_budget", s.landmark_budget);
    trace.set_meta("max_local_norm", s.max_local_norm);
    trace.set_meta("feasibility_violations", s.feasibility_violations);
    trace.set_meta("guard_events", s.guard_events);
    trace.set_meta("decrement_violations", s.decrement_violations);
    trace.set_meta("grad_calls", s.grad_calls);
    trace.set_meta("hess_calls", s.hess_calls);
    if let Some(p) = params {
        if cfg.algorithm.bound == BoundKind::Local && s.max_local_norm > p.local_bound {
            trace.set_meta(
                "local_norm_warning",
                format!("max local norm {} exceeds b = {}", s.max_local_norm, p.local_bound),
            );
        }
    }
}

/// Runs every config on a pool of `jobs` workers (0: rayon's default).
pub fn run_matrix(cfgs: &[RunConfig], jobs: usize) -> Vec<Result<RunOutput>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
    match pool {
        Ok(pool) => pool.install(|| cfgs.par_iter().map(run_experiment).collect()),
        Err(_) => cfgs.iter().map(run_experiment).collect(),
    }
}

/// The best fixed point in the shrunk domain, with the bias of the
/// regularization used to keep it interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    /// Shrunk minimizer, in the learner's coordinates.
    pub point: Vec<f64>,
    /// Minimizer of `Σ ℓ_t + δ Φ` before shrinking.
    pub unshrunk: Vec<f64>,
    pub c: f64,
    pub delta: f64,
    /// `δ (Φ(unshrunk) − Φ(w*))`, an upper bound on how much the barrier term
    /// can have raised the comparator's total loss.
    pub bias: f64,
}

/// `(1/δ) Σ ℓ_t(w) + Φ(w)`.
struct ComparatorObjective<'a> {
    losses: &'a [RoundLoss<f64>],
    barrier: &'a dyn Barrier<f64>,
    embedding: Embedding,
    weight: f64,
}

impl SmoothObjective<f64> for ComparatorObjective<'_> {
    fn dim(&self) -> usize {
        self.barrier.dim()
    }

    fn contains(&self, w: &[f64]) -> bool {
        self.barrier.is_interior(w)
            && self
                .losses
                .iter()
                .all(|l| l.value(w, self.embedding).is_ok_and(f64::is_finite))
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.barrier.gradient(w)?;
        for l in self.losses {
            for (gi, li) in g.iter_mut().zip(l.eval(w, self.embedding)?.grad) {
                *gi += self.weight * li;
            }
        }
        Ok(g)
    }

    fn hessian(&self, w: &[f64]) -> Result<Matrix<f64>> {
        let mut h = self.barrier.hessian(w)?;
        for l in self.losses {
            if let RoundLoss::Linear { .. } = l {
                continue;
            }
            h = h.add(&l.hessian(w, self.embedding)?.scaled(self.weight))?;
        }
        Ok(h)
    }

    fn self_concordance(&self) -> f64 {
        // each log-type loss is 1-self-concordant; scaling by k divides that by √k
        self.barrier.params().m.max(self.weight.recip().sqrt())
    }
}

/// Minimizes `Σ ℓ_t(w) + δ Φ(w)` with `δ = 1e-8 T` by path-following on the
/// loss weight, then shrinks the minimizer toward the analytic center by `c`.
pub fn best_fixed_comparator(
    loss_log: &[RoundLoss<f64>],
    barrier: &dyn Barrier<f64>,
    c: f64,
    embedding: Embedding,
) -> Result<Comparator> {
    let delta = 1e-8 * loss_log.len().max(1) as f64;
    let center = analytic_center(barrier, barrier.domain().witness())?;
    let mut w = center.clone();
    let target = delta.recip();
    let mut weight = target.min(1.0);
    loop {
        let obj = ComparatorObjective {
            losses: loss_log,
            barrier,
            embedding,
            weight,
        };
        let last = weight >= target;
        let tol = if last { DEFAULT_TOL } else { 1e-6 };
        w = match damped_newton_minimize(&obj, &w, tol, 2000) {
            Ok(w) => w,
            Err(Error::MaxIterExceeded { decrement, best, .. }) if last && decrement < 1e-6 => best,
            Err(e) => return Err(e),
        };
        if last {
            break;
        }
        weight = (weight * 10.0).min(target);
    }
    let bias = delta * (barrier.value(&w)? - barrier.value(&center)?);
    Ok(Comparator {
        point: shrink_toward(&w, c, &center),
        unshrunk: w,
        c,
        delta,
        bias,
    })
}

/// Cumulative regret `Σ_{τ≤t} (ℓ_τ(w_τ) − ℓ_τ(u))`; `played[t]` is the loss
/// the learner suffered in round `t`.
pub fn regret_curve(
    played: &[f64],
    comparator: &[f64],
    loss_log: &[RoundLoss<f64>],
    embedding: Embedding,
) -> Result<Vec<f64>> {
    if played.len() != loss_log.len() {
        return Err(Error::DimensionMismatch {
            expected: loss_log.len(),
            found: played.len(),
        });
    }
    let mut total = 0.0;
    let mut out = Vec::with_capacity(played.len());
    for (t, (&lp, loss)) in played.iter().zip(loss_log).enumerate() {
        total += lp - loss.value(comparator, embedding).map_err(|e| e.at_round(t + 1))?;
        out.push(total);
    }
    Ok(out)
}

/// A point of the learner's coordinates as a full distribution when reduced.
pub fn native_point(w: &[f64], embedding: Embedding) -> Vec<f64> {
    match embedding {
        Embedding::Identity => w.to_vec(),
        Embedding::ReducedSimplex => lift_reduced(w),
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn parse_f64(s: &str, column: &str, line: usize) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Parse(format!("row {line}, column {column}: invalid number {s:?}")))
}

/// Serializes a trace: `#key=value` lines, the header, then one row per round.
pub fn trace_to_csv(trace: &Trace) -> Result<String> {
    let mut out = String::new();
    for (k, v) in &trace.meta {
        let _ = writeln!(out, "#{k}={}", v.replace('\n', " "));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &trace.rows {
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.local_norm_g),
            fmt_f64(r.decrement),
            (r.landmark_updated as u8).to_string(),
            fmt_f64(r.landmark_distance),
            r.wall_time_us.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?);
    Ok(out)
}

pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(kv) = line.strip_prefix('#') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("metadata line without '=': {line:?}")))?;
            trace.meta.push((k.to_string(), v.to_string()));
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse(format!(
            "unexpected header {header:?}, expected {CSV_COLUMNS:?}"
        )));
    }
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let t = field(0)
            .parse()
            .map_err(|_| Error::Parse(format!("row {line}, column t: {:?}", field(0))))?;
        let landmark_updated = match field(4) {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::Parse(format!("row {line}, column landmark_updated: {other:?}"))),
        };
        let wall_time_us = field(6)
            .parse()
            .map_err(|_| Error::Parse(format!("row {line}, column wall_time_us: {:?}", field(6))))?;
        trace.rows.push(TraceRow {
            t,
            loss: parse_f64(field(1), "loss", line)?,
            local_norm_g: parse_f64(field(2), "local_norm_g", line)?,
            decrement: parse_f64(field(3), "decrement", line)?,
            landmark_updated,
            landmark_distance: parse_f64(field(5), "landmark_distance", line)?,
            wall_time_us,
        });
    }
    Ok(trace)
}

pub fn write_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, trace_to_csv(trace)?)?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Trace> {
    trace_from_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_cfg(horizon: usize) -> RunConfig {
        RunConfig {
            domain: DomainConfig {
                kind: DomainKind::Box,
                d: 2,
                lo: 0.0,
                hi: 1.0,
                path: None,
            },
            loss: LossConfig {
                family: LossFamily::Zero,
                ..LossConfig::default()
            },
            run: RunSection {
                horizon,
                seed: 3,
                ..RunSection::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_loss_run() {
        let out = run_experiment(&zero_cfg(10)).unwrap();
        assert_eq!(out.trace.rows.len(), 10);
        assert!(out.trace.rows.iter().all(|r| r.loss == 0.0));
        assert_eq!(out.trace.landmark_updates(), 0);
        assert!(out.regret.iter().all(|&r| r == 0.0));
        for w in &out.iterates {
            assert_eq!(w, &out.iterates[0]);
        }
        for (k, r) in out.trace.rows.iter().enumerate() {
            assert_eq!(r.t, k + 1);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon = 200;
        cfg.run.seed = 11;
        cfg.algorithm.monitor_every = 7;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.trace.rows.len(), b.trace.rows.len());
        for (x, y) in a.trace.rows.iter().zip(&b.trace.rows) {
            assert!(x.same_values(y));
        }
        assert_eq!(a.iterates, b.iterates);
    }

    #[test]
    fn comparator_constant_returns_heads_to_vertex() {
        let p = Polytope::build_reduced_simplex(2).unwrap();
        let barrier = LogBarrier::new(p);
        let horizon = 5000;
        let log = vec![RoundLoss::Portfolio { r: vec![2.0, 1.0] }; horizon];
        let c = 1.0 / horizon as f64;
        let cmp = best_fixed_comparator(&log, &barrier, c, Embedding::ReducedSimplex).unwrap();
        // grid search over the shrunk segment at resolution 1e-4
        let total = |x: f64| -> f64 { log.iter().map(|l| l.value(&[x], Embedding::ReducedSimplex).unwrap()).sum() };
        let grid_best = (1..10_000)
            .map(|k| k as f64 * 1e-4)
            .map(|x| shrink_toward(&[x], c, &[0.5])[0])
            .min_by(|a, b| total(*a).partial_cmp(&total(*b)).unwrap())
            .unwrap();
        let vertex = shrink_toward(&[1.0], c, &[0.5])[0];
        assert!((cmp.point[0] - vertex).abs() < 1e-4);
        assert!((cmp.point[0] - grid_best).abs() < 1e-4 + 1e-6);
    }

    #[test]
    fn comparator_symmetric_and_zero_cases() {
        let barrier = LogBarrier::new(Polytope::build_reduced_simplex(2).unwrap());
        let log: Vec<RoundLoss<f64>> = (0..400)
            .map(|k| RoundLoss::Portfolio {
                r: if k % 2 == 0 { vec![1.5, 0.7] } else { vec![0.7, 1.5] },
            })
            .collect();
        let cmp = best_fixed_comparator(&log, &barrier, 1e-3, Embedding::ReducedSimplex).unwrap();
        assert_relative_eq!(cmp.point[0], 0.5, epsilon = 1e-8);

        let bx = LogBarrier::new(Polytope::build_box(3, 0.0, 1.0).unwrap());
        let zeros = vec![RoundLoss::Linear { g: vec![0.0; 3] }; 50];
        let cmp = best_fixed_comparator(&zeros, &bx, 0.01, Embedding::Identity).unwrap();
        for x in cmp.point {
            assert_relative_eq!(x, 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn regret_curve_definitions() {
        let log = vec![RoundLoss::Linear { g: vec![0.0, 0.0] }; 4];
        assert_eq!(
            regret_curve(&[0.0; 4], &[0.3, 0.3], &log, Embedding::Identity).unwrap(),
            vec![0.0; 4]
        );
        let g = vec![1.0, -2.0];
        let w1 = [0.2, 0.4];
        let u = [0.5, 0.1];
        let log = vec![RoundLoss::Linear { g: g.clone() }];
        let played = g[0] * w1[0] + g[1] * w1[1];
        let reg = regret_curve(&[played], &u, &log, Embedding::Identity).unwrap();
        assert_relative_eq!(reg[0], g[0] * (w1[0] - u[0]) + g[1] * (w1[1] - u[1]), epsilon = 1e-15);
        assert!(regret_curve(&[0.0], &u, &[], Embedding::Identity).is_err());
    }

    #[test]
    fn csv_header_and_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon = 60;
        cfg.algorithm.monitor_every = 10;
        let out = run_experiment(&cfg).unwrap();
        let text = trace_to_csv(&out.trace).unwrap();
        let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "t,loss,local_norm_g,decrement,landmark_updated,landmark_distance,wall_time_us");
        let unmonitored = text.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
        assert_eq!(unmonitored.split(',').nth(3), Some(""));
        let back = trace_from_csv(&text).unwrap();
        assert_eq!(back.meta, out.trace.meta);
        assert_eq!(back.rows.len(), out.trace.rows.len());
        for (a, b) in back.rows.iter().zip(&out.trace.rows) {
            assert!(a.same_values(b));
            assert_eq!(a.wall_time_us, b.wall_time_us);
        }
        assert!(back.meta_value("eta").is_some());
        assert!(back.meta_value("comparator_delta").is_some());
    }

    #[test]
    fn csv_rejects_wrong_header() {
        assert!(matches!(trace_from_csv("a,b\n1,2\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = zero_cfg(0);
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.starts_with("run.T")));
        cfg.run.horizon = 10;
        cfg.loss.family = LossFamily::Portfolio;
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.starts_with("loss.family")));
        let mut cfg = RunConfig::default();
        cfg.run.c = Some(1.5);
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.starts_with("run.c")));
    }

    #[test]
    fn every_learner_and_family_runs() {
        let base = RunConfig::default();
        let mut cfgs = Vec::new();
        for kind in [AlgorithmKind::Barons, AlgorithmKind::FtrlExact, AlgorithmKind::Ogd] {
            for family in [LossFamily::Portfolio, LossFamily::Logloss, LossFamily::Linear] {
                let mut c = base.clone();
                c.algorithm.kind = kind;
                c.loss.family = family;
                c.run.horizon = 100;
                cfgs.push(c);
            }
        }
        let mut two = base.clone();
        two.domain.d = 2;
        two.loss.family = LossFamily::TwoAsset;
        two.run.horizon = 100;
        cfgs.push(two);
        let mut hybrid = zero_cfg(100);
        hybrid.barrier.kind = BarrierKind::Hybrid;
        hybrid.loss.family = LossFamily::Linear;
        hybrid.algorithm.bound = BoundKind::Euclidean;
        cfgs.push(hybrid);
        for out in run_matrix(&cfgs, 2) {
            let out = out.unwrap();
            assert_eq!(out.trace.rows.len(), 100);
            assert_eq!(out.summary.feasibility_violations, 0);
        }
    }
}

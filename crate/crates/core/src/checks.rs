//! Randomized inequality suites for the barrier and Newton machinery.
//!
//! Every suite draws small random polytopes (the box `[−1, 1]^d` cut by a few
//! random halfspaces that keep the origin inside), evaluates one or more
//! inequalities per trial and reports pass counts with the first failing
//! instance serialized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::barrier::{dual_sphere_perturbation, hybrid_compose, worst_case_sandwich, Barrier, LogBarrier};
use crate::domain::Polytope;
use crate::error::{Error, Result};
use crate::linalg::{dot, generalized_eigenvalues, norm, quad_norm, spd_factorize, sub, Matrix};
use crate::newton::{damped_newton_minimize, newton_decrement, ShiftedObjective, SmoothObjective};

/// Suite names accepted by [`run_suite`].
pub const SUITES: [&str; 8] = [
    "newton-decrement-decrease",
    "quadratic-convergence",
    "minimizer-proximity",
    "hessian-stability",
    "dikin-feasibility",
    "newton-step-norm",
    "barrier-finite-difference",
    "nu-barrier",
];

const SLACK: f64 = 1e-9;
const PROXIMITY_SLACK: f64 = 1e-6;
const FD_GRAD_TOL: f64 = 1e-5;
const FD_HESS_TOL: f64 = 1e-4;
const DIKIN_RADIUS: f64 = 0.999;
const DIKIN_SAMPLES: usize = 32;

/// Pass count for one inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCount {
    pub label: String,
    pub passed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    /// Trials where every inequality held.
    pub passed: usize,
    pub inequalities: Vec<InequalityCount>,
    pub first_counterexample: Option<String>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// One evaluated inequality: `lhs ≤ rhs`.
struct Outcome {
    label: &'static str,
    lhs: f64,
    rhs: f64,
    context: String,
}

impl Outcome {
    fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

type Trial = fn(&mut ChaCha8Rng) -> Result<Vec<Outcome>>;

fn suite_fn(name: &str) -> Option<Trial> {
    Some(match name {
        "newton-decrement-decrease" => trial_decrement_decrease,
        "quadratic-convergence" => trial_quadratic_convergence,
        "minimizer-proximity" => trial_minimizer_proximity,
        "hessian-stability" => trial_hessian_stability,
        "dikin-feasibility" => trial_dikin_feasibility,
        "newton-step-norm" => trial_newton_step_norm,
        "barrier-finite-difference" => trial_finite_difference,
        "nu-barrier" => trial_nu_barrier,
        _ => return None,
    })
}

/// Runs `trials` independent trials of the named suite.
pub fn run_suite(name: &str, seed: u64, trials: usize) -> Result<SuiteReport> {
    let trial = suite_fn(name)
        .ok_or_else(|| Error::Config(format!("unknown suite {name:?}; known: {}", SUITES.join(", "))))?;
    let mut report = SuiteReport {
        name: name.to_string(),
        seed,
        trials,
        passed: 0,
        inequalities: Vec::new(),
        first_counterexample: None,
    };
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let outcomes = match trial(&mut rng) {
            Ok(o) => o,
            Err(e) => {
                report.first_counterexample.get_or_insert_with(|| format!("trial {k}: error: {e}"));
                continue;
            }
        };
        let mut ok = true;
        for o in outcomes {
            let held = o.holds();
            ok &= held;
            match report.inequalities.iter_mut().find(|c| c.label == o.label) {
                Some(c) => {
                    c.total += 1;
                    c.passed += held as usize;
                }
                None => report.inequalities.push(InequalityCount {
                    label: o.label.to_string(),
                    passed: held as usize,
                    total: 1,
                }),
            }
            if !held && report.first_counterexample.is_none() {
                report.first_counterexample = Some(format!(
                    "trial {k}: {}: lhs={:e} > rhs={:e}\n{}",
                    o.label, o.lhs, o.rhs, o.context
                ));
            }
        }
        report.passed += ok as usize;
    }
    Ok(report)
}

/// `[−1, 1]^d` plus up to `12 − 2d` random cuts `⟨n, w⟩ ≤ β`, `β ∈ [0.2, 1]`.
pub fn random_polytope<R: Rng + ?Sized>(rng: &mut R) -> Polytope<f64> {
    let d = rng.random_range(1..=5usize);
    let extra = rng.random_range(0..=(12 - 2 * d));
    let mut rows = Vec::new();
    let mut offsets = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rows.push(e.clone());
        offsets.push(-1.0);
        e[i] = -1.0;
        rows.push(e);
        offsets.push(-1.0);
    }
    for _ in 0..extra {
        let n = gaussian_unit(rng, d);
        let beta = rng.random_range(0.2..1.0);
        rows.push(n.iter().map(|x| -x).collect());
        offsets.push(-beta);
    }
    let a = Matrix::from_rows(&rows).expect("rows share a length");
    Polytope::new(a, offsets, vec![0.0; d]).expect("origin is interior")
}

fn gaussian_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&z);
        if n > 1e-9 {
            return z.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Interior point at a random fraction of the way from the origin to a
/// random boundary point, so near-boundary points are common.
pub fn random_interior_point<R: Rng + ?Sized>(rng: &mut R, p: &Polytope<f64>) -> Vec<f64> {
    let dir = gaussian_unit(rng, p.dim());
    // largest step along dir before some slack hits zero
    let a = p.normals();
    let mut t_max = f64::INFINITY;
    for i in 0..p.num_constraints() {
        let rate = dot(a.row(i), &dir);
        if rate < 0.0 {
            t_max = t_max.min(-p.offsets()[i] / -rate);
        }
    }
    let frac: f64 = rng.random_range(0.0..0.98);
    dir.iter().map(|x| x * t_max * frac).collect()
}

fn describe(p: &Polytope<f64>, points: &[(&str, &[f64])]) -> String {
    let mut s = format!("polytope:\n{}", p.to_text());
    for (name, w) in points {
        s.push_str(&format!("{name} = {w:?}\n"));
    }
    s
}

/// A shift making `λ(y, Φ + ⟨s, ·⟩)` exactly `lambda`.
fn shift_for_decrement<R: Rng + ?Sized>(
    rng: &mut R,
    barrier: &LogBarrier<f64>,
    y: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let factor = spd_factorize(&barrier.hessian(y)?)?;
    let v = dual_sphere_perturbation(&factor, lambda, rng)?;
    let g = barrier.gradient(y)?;
    Ok(v.iter().zip(&g).map(|(vi, gi)| vi - gi).collect())
}

/// Barrier, target point, starting point and its decrement.
type NewtonSetup = (LogBarrier<f64>, Vec<f64>, Vec<f64>, f64);

fn newton_setup<R: Rng + ?Sized>(rng: &mut R, lambda_max: f64) -> Result<NewtonSetup> {
    let barrier = LogBarrier::new(random_polytope(rng));
    let y = random_interior_point(rng, barrier.domain());
    let lambda = rng.random_range(1e-6..lambda_max);
    let s = shift_for_decrement(rng, &barrier, &y, lambda)?;
    Ok((barrier, y, s, lambda))
}

fn trial_decrement_decrease(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let mm = 1.0;
    let (barrier, y, s, _) = newton_setup(rng, 1.0 / (40.0 * mm))?;
    let eps = rng.random_range(0.0..1.0 / (40.0 * mm));
    let alpha = rng.random_range(0.0..0.2);
    let obj = ShiftedObjective::new(&barrier, s)?;
    let lambda = newton_decrement(&obj, &y)?;
    let hess = barrier.hessian(&y)?;
    let h = worst_case_sandwich(&hess, alpha, rng)?;
    let noise = dual_sphere_perturbation(&spd_factorize(&hess)?, eps, rng)?;
    let g_hat: Vec<f64> = obj.gradient(&y)?.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let step = spd_factorize(&h)?.solve(&g_hat)?;
    let y_plus = sub(&y, &step);
    let lambda_plus = newton_decrement(&obj, &y_plus)?;
    let k = 20.0 * (1.0 + alpha) * eps;
    let rhs = k + (1.0 + k) * (9.0 * mm * lambda * lambda + 2.5 * alpha * lambda) + SLACK;
    Ok(vec![Outcome {
        label: "λ(y⁺) ≤ 20(1+α)ε + (1+20(1+α)ε)(9Mλ² + 2.5αλ)",
        lhs: lambda_plus,
        rhs,
        context: format!(
            "{}shift = {:?}\neps = {eps}, alpha = {alpha}, lambda = {lambda}\n",
            describe(barrier.domain(), &[("y", &y), ("y_plus", &y_plus)]),
            obj.shift()
        ),
    }])
}

fn trial_quadratic_convergence(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let mm = 1.0;
    let (barrier, x, s, _) = newton_setup(rng, 0.5 / mm)?;
    let obj = ShiftedObjective::new(&barrier, s)?;
    let lambda = newton_decrement(&obj, &x)?;
    let step = spd_factorize(&barrier.hessian(&x)?)?.solve(&obj.gradient(&x)?)?;
    let x_plus = sub(&x, &step);
    let lambda_plus = newton_decrement(&obj, &x_plus)?;
    let ml = mm * lambda;
    Ok(vec![Outcome {
        label: "λ(x⁺) ≤ Mλ²/(1−Mλ)²",
        lhs: lambda_plus,
        rhs: ml * lambda / ((1.0 - ml) * (1.0 - ml)) + SLACK,
        context: format!(
            "{}shift = {:?}\nlambda = {lambda}\n",
            describe(barrier.domain(), &[("x", &x)]),
            obj.shift()
        ),
    }])
}

fn trial_minimizer_proximity(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let mm = 1.0;
    let (barrier, x, s, _) = newton_setup(rng, 0.5 / mm)?;
    let obj = ShiftedObjective::new(&barrier, s)?;
    let lambda = newton_decrement(&obj, &x)?;
    let x_f = damped_newton_minimize(&obj, &x, 1e-12, 500)?;
    let dist = quad_norm(&sub(&x, &x_f), &barrier.hessian(&x_f)?)?;
    Ok(vec![Outcome {
        label: "‖x − x_f‖_{∇²Φ(x_f)} ≤ λ/(1 − Mλ)",
        lhs: dist,
        rhs: lambda / (1.0 - mm * lambda) + PROXIMITY_SLACK,
        context: format!(
            "{}shift = {:?}\nlambda = {lambda}\n",
            describe(barrier.domain(), &[("x", &x), ("x_f", &x_f)]),
            obj.shift()
        ),
    }])
}

fn trial_hessian_stability(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let barrier = LogBarrier::new(random_polytope(rng));
    let x = random_interior_point(rng, barrier.domain());
    let hx = barrier.hessian(&x)?;
    let factor = spd_factorize(&hx)?;
    let r: f64 = rng.random_range(0.0..0.95);
    // L⁻ᵀ z / ‖z‖ has unit local norm at x
    let z = gaussian_unit(rng, x.len());
    let dir = factor.solve_upper(&z)?;
    let w: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + r * b).collect();
    let r = factor.quad_norm(&sub(&w, &x))?;
    let eig = generalized_eigenvalues(&barrier.hessian(&w)?, &hx)?;
    let lo = (1.0 - r) * (1.0 - r);
    let context = format!("{}r = {r}\neigenvalues = {eig:?}\n", describe(barrier.domain(), &[("x", &x), ("w", &w)]));
    Ok(vec![
        Outcome {
            label: "(1−r)² ≤ min eig",
            lhs: lo,
            rhs: eig[0] + SLACK,
            context: context.clone(),
        },
        Outcome {
            label: "max eig ≤ (1−r)⁻²",
            lhs: eig[eig.len() - 1],
            rhs: lo.recip() + SLACK,
            context,
        },
    ])
}

fn trial_dikin_feasibility(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let barrier = LogBarrier::new(random_polytope(rng));
    let radius = DIKIN_RADIUS / barrier.params().m;
    let x = random_interior_point(rng, barrier.domain());
    let factor = spd_factorize(&barrier.hessian(&x)?)?;
    let mut worst = f64::INFINITY;
    let mut worst_w = x.clone();
    for _ in 0..DIKIN_SAMPLES {
        let z = gaussian_unit(rng, x.len());
        let dir = factor.solve_upper(&z)?;
        let w: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + radius * b).collect();
        let m = barrier.domain().slacks(&w)?.min();
        if m < worst {
            worst = m;
            worst_w = w;
        }
    }
    Ok(vec![Outcome {
        label: "min slack > 0 on the Dikin boundary",
        lhs: 0.0,
        // strict: a zero slack counts as a failure
        rhs: if worst > 0.0 { worst } else { -1.0 },
        context: describe(barrier.domain(), &[("x", &x), ("worst", &worst_w)]),
    }])
}

fn trial_newton_step_norm(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let (barrier, y, s, _) = newton_setup(rng, 1.0)?;
    let alpha = rng.random_range(0.0..0.2);
    let obj = ShiftedObjective::new(&barrier, s)?;
    let lambda = newton_decrement(&obj, &y)?;
    let hess = barrier.hessian(&y)?;
    let h = worst_case_sandwich(&hess, alpha, rng)?;
    let step = spd_factorize(&h)?.solve(&obj.gradient(&y)?)?;
    let size = quad_norm(&step, &hess)?;
    Ok(vec![Outcome {
        label: "‖H⁻¹∇Φ(y)‖_{∇²Φ(y)} ≤ λ/(1−α)",
        lhs: size,
        rhs: lambda / (1.0 - alpha) + SLACK,
        context: format!(
            "{}shift = {:?}\nalpha = {alpha}, lambda = {lambda}\n",
            describe(barrier.domain(), &[("y", &y)]),
            obj.shift()
        ),
    }])
}

fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    norm(&sub(approx, exact)) / norm(exact).max(1.0)
}

fn fd_outcomes(barrier: &dyn Barrier<f64>, w: &[f64], rng: &mut ChaCha8Rng, tag: &str) -> Result<Vec<Outcome>> {
    let h = 1e-5 * barrier.domain().slacks(w)?.min();
    let n = w.len();
    let g = barrier.gradient(w)?;
    let mut fd = vec![0.0; n];
    for i in 0..n {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[i] += h;
        wm[i] -= h;
        fd[i] = (barrier.value(&wp)? - barrier.value(&wm)?) / (2.0 * h);
    }
    let v = gaussian_unit(rng, n);
    let hv = barrier.hessian(w)?.mul_vec(&v)?;
    let wp: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + h * b).collect();
    let wm: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - h * b).collect();
    let fd_hv: Vec<f64> = barrier
        .gradient(&wp)?
        .iter()
        .zip(barrier.gradient(&wm)?)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    let context = format!("{tag}\n{}", describe(barrier.domain(), &[("w", w), ("v", &v)]));
    Ok(vec![
        Outcome {
            label: "gradient vs central difference",
            lhs: rel_err(&fd, &g),
            rhs: FD_GRAD_TOL,
            context: context.clone(),
        },
        Outcome {
            label: "Hessian-vector vs gradient difference",
            lhs: rel_err(&fd_hv, &hv),
            rhs: FD_HESS_TOL,
            context,
        },
    ])
}

fn trial_finite_difference(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let p = random_polytope(rng);
    let w = random_interior_point(rng, &p);
    let log = LogBarrier::new(p.clone());
    let mut out = fd_outcomes(&log, &w, rng, "log barrier")?;
    let radius = (p.dim() as f64).sqrt();
    let hybrid = hybrid_compose(LogBarrier::new(p), rng.random_range(1.0..20.0), radius);
    out.extend(fd_outcomes(&hybrid, &w, rng, "hybrid barrier")?);
    Ok(out)
}

fn trial_nu_barrier(rng: &mut ChaCha8Rng) -> Result<Vec<Outcome>> {
    let barrier = LogBarrier::new(random_polytope(rng));
    let w = random_interior_point(rng, barrier.domain());
    let g = barrier.gradient(&w)?;
    let val = spd_factorize(&barrier.hessian(&w)?)?.dual_quad_norm(&g)?.powi(2);
    Ok(vec![Outcome {
        label: "∇Φᵀ∇⁻²Φ∇Φ ≤ m",
        lhs: val,
        rhs: barrier.domain().num_constraints() as f64 + SLACK,
        context: describe(barrier.domain(), &[("w", &w)]),
    }])
}

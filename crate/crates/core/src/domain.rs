//! Polytope domains `{w : a_iᵀ w ≥ b_i}` with unit-norm constraint rows.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::scalar::Scalar;

/// Feasible region `{w ∈ R^d : a_iᵀ w ≥ b_i, i = 1..m}`.
///
/// Rows of `a` have unit Euclidean norm and `witness` is strictly feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope<T> {
    a: Matrix<T>,
    b: Vec<T>,
    witness: Vec<T>,
}

/// Per-constraint slacks `s_i = a_iᵀ w − b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slacks<T>(Vec<T>);

impl<T: Scalar> Slacks<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn min(&self) -> T {
        self.0.iter().fold(T::infinity(), |m, &s| m.min(s))
    }

    pub fn all_positive(&self) -> bool {
        self.0.iter().all(|&s| s > T::zero())
    }
}

impl<T: Scalar> Polytope<T> {
    /// Normalizes each row of `a_raw` (and the matching offset) to unit norm,
    /// then validates the witness against the normalized system.
    pub fn new(a_raw: Matrix<T>, b_raw: Vec<T>, witness: Vec<T>) -> Result<Self> {
        if b_raw.len() != a_raw.rows() {
            return Err(Error::DimensionMismatch {
                expected: a_raw.rows(),
                found: b_raw.len(),
            });
        }
        if witness.len() != a_raw.cols() {
            return Err(Error::DimensionMismatch {
                expected: a_raw.cols(),
                found: witness.len(),
            });
        }
        let mut a = a_raw;
        let mut b = b_raw;
        for (i, bi) in b.iter_mut().enumerate() {
            let n = norm(a.row(i));
            if !(n > T::zero()) {
                return Err(Error::ZeroRow(i));
            }
            for x in a.row_mut(i) {
                *x /= n;
            }
            *bi /= n;
        }
        let p = Self { a, b, witness };
        let s = p.slacks(&p.witness)?;
        if !s.all_positive() {
            return Err(Error::InfeasibleWitness {
                min_slack: s.min().to_f64_lossy(),
            });
        }
        Ok(p)
    }

    /// Number of constraints `m`.
    pub fn num_constraints(&self) -> usize {
        self.a.rows()
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn normals(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn offsets(&self) -> &[T] {
        &self.b
    }

    pub fn witness(&self) -> &[T] {
        &self.witness
    }

    pub fn slacks(&self, w: &[T]) -> Result<Slacks<T>> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        Ok(Slacks(
            (0..self.num_constraints())
                .map(|i| dot(self.a.row(i), w) - self.b[i])
                .collect(),
        ))
    }

    /// `min_i s_i(w) > margin`. Wrong-sized points are never feasible.
    pub fn is_strictly_feasible(&self, w: &[T], margin: T) -> bool {
        self.slacks(w).is_ok_and(|s| s.min() > margin)
    }

    /// Unit-norm rows of the box `[lo, hi]^d`: lower faces first, then upper.
    pub fn build_box(d: usize, lo: T, hi: T) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidBounds("box dimension must be positive".into()));
        }
        if !(hi > lo) {
            return Err(Error::InvalidBounds(format!(
                "box needs hi > lo, got lo={lo}, hi={hi}"
            )));
        }
        let mut rows = Vec::with_capacity(2 * d);
        let mut b = Vec::with_capacity(2 * d);
        for i in 0..d {
            let mut r = vec![T::zero(); d];
            r[i] = T::one();
            rows.push(r);
            b.push(lo);
        }
        for i in 0..d {
            let mut r = vec![T::zero(); d];
            r[i] = -T::one();
            rows.push(r);
            b.push(-hi);
        }
        let mid = (lo + hi) / T::lit(2.0);
        Self::new(Matrix::from_rows(&rows)?, b, vec![mid; d])
    }

    /// `{w̃ ∈ R^{d−1} : w̃ ≥ 0, Σ w̃_i ≤ 1}`: the probability simplex over `d`
    /// outcomes in coordinates that drop the last weight.
    pub fn build_reduced_simplex(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidBounds(format!(
                "reduced simplex needs d >= 2, got {d}"
            )));
        }
        let k = d - 1;
        let mut rows = Vec::with_capacity(d);
        let mut b = Vec::with_capacity(d);
        for i in 0..k {
            let mut r = vec![T::zero(); k];
            r[i] = T::one();
            rows.push(r);
            b.push(T::zero());
        }
        rows.push(vec![-T::one(); k]);
        b.push(-T::one());
        let bary = T::one() / T::lit(d as f64);
        Self::new(Matrix::from_rows(&rows)?, b, vec![bary; k])
    }

    /// Plain-text form: `m d`, then `m` rows of `d + 1` numbers (normal then
    /// offset), then the witness.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.num_constraints(), self.dim());
        for i in 0..self.num_constraints() {
            let row: Vec<String> = self
                .a
                .row(i)
                .iter()
                .chain(std::iter::once(&self.b[i]))
                .map(|x| x.to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let w: Vec<String> = self.witness.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", w.join(" "));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty polytope file".into()))?;
        let dims = parse_numbers::<usize>(header)?;
        let [m, d] = dims[..] else {
            return Err(Error::Parse(format!(
                "header must be `m d`, got `{header}`"
            )));
        };
        let mut rows = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for i in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing constraint row {i}")))?;
            let mut nums = parse_numbers::<f64>(line)?;
            if nums.len() != d + 1 {
                return Err(Error::Parse(format!(
                    "constraint row {i} has {} numbers, expected {}",
                    nums.len(),
                    d + 1
                )));
            }
            b.push(T::lit(nums.pop().unwrap_or_default()));
            rows.push(nums.into_iter().map(T::lit).collect());
        }
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing witness line".into()))?;
        let witness: Vec<T> = parse_numbers::<f64>(line)?.into_iter().map(T::lit).collect();
        if witness.len() != d {
            return Err(Error::Parse(format!(
                "witness has {} numbers, expected {d}",
                witness.len()
            )));
        }
        let a = if m == 0 {
            Matrix::zeros(0, d)
        } else {
            Matrix::from_rows(&rows)?
        };
        Self::new(a, b, witness)
    }
}

fn parse_numbers<N: FromStr>(line: &str) -> Result<Vec<N>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<N>()
                .map_err(|_| Error::Parse(format!("cannot parse `{tok}` as a number")))
        })
        .collect()
}

/// `(1 − c) w + c w_star`: maps `K` into the shrunk comparator set.
pub fn shrink_toward<T: Scalar>(w: &[T], c: T, w_star: &[T]) -> Vec<T> {
    w.iter()
        .zip(w_star)
        .map(|(&x, &y)| (T::one() - c) * x + c * y)
        .collect()
}

/// Reduced simplex coordinates to a full distribution (`w_d = 1 − Σ w̃_i`).
pub fn lift_reduced<T: Scalar>(reduced: &[T]) -> Vec<T> {
    let last = T::one() - reduced.iter().copied().sum::<T>();
    reduced.iter().copied().chain(std::iter::once(last)).collect()
}

/// Drops the last coordinate of a full distribution.
pub fn reduce_full<T: Scalar>(full: &[T]) -> Vec<T> {
    full[..full.len().saturating_sub(1)].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box() -> Polytope<f64> {
        let a = Matrix::from_rows(&[
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![-2.0, 0.0],
            vec![0.0, -2.0],
        ])
        .unwrap();
        Polytope::new(a, vec![0.0, 0.0, -2.0, -2.0], vec![0.5, 0.5]).unwrap()
    }

    fn interval() -> Polytope<f64> {
        let a = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        Polytope::new(a, vec![0.0, -1.0], vec![0.5]).unwrap()
    }

    #[test]
    fn normalizes_rows() {
        let p = unit_box();
        assert_eq!(p.offsets(), &[0.0, 0.0, -1.0, -1.0]);
        for i in 0..4 {
            assert_relative_eq!(norm(p.normals().row(i)), 1.0);
        }
        assert_eq!(p, Polytope::build_box(2, 0.0, 1.0).unwrap());
    }

    #[test]
    fn rejects_zero_rows_and_bad_witness() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            Polytope::new(a, vec![0.0, 0.0], vec![1.0, 1.0]),
            Err(Error::ZeroRow(1))
        );
        let p = unit_box();
        let r = Polytope::new(p.normals().clone(), p.offsets().to_vec(), vec![1.0, 0.5]);
        assert!(matches!(r, Err(Error::InfeasibleWitness { .. })));
    }

    #[test]
    fn slack_values() {
        assert_eq!(
            unit_box().slacks(&[0.5, 0.5]).unwrap().as_slice(),
            &[0.5, 0.5, 0.5, 0.5]
        );
        let p = interval();
        assert_eq!(p.slacks(&[0.25]).unwrap().as_slice(), &[0.25, 0.75]);
        assert_eq!(p.slacks(&[1.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert!(matches!(
            p.slacks(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn strict_feasibility() {
        let p = unit_box();
        assert!(p.is_strictly_feasible(&[0.5, 0.5], 0.0));
        assert!(!p.is_strictly_feasible(&[1.0, 0.5], 0.0));
        assert!(!p.is_strictly_feasible(&[0.01, 0.5], 0.05));
    }

    #[test]
    fn shrink_examples() {
        let w = [1.0, 0.0];
        let star = [1.0 / 3.0, 1.0 / 3.0];
        assert_eq!(shrink_toward(&w, 0.0, &star), w.to_vec());
        assert_eq!(shrink_toward(&w, 1.0, &star), star.to_vec());
        let s = shrink_toward(&w, 0.1, &star);
        assert_relative_eq!(s[0], 0.9 + 0.1 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s[1], 0.1 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn builders() {
        let s3 = Polytope::<f64>::build_reduced_simplex(3).unwrap();
        assert_eq!(s3.num_constraints(), 3);
        assert_eq!(s3.dim(), 2);
        assert_eq!(s3.witness(), &[1.0 / 3.0, 1.0 / 3.0]);
        assert!(s3.is_strictly_feasible(&[0.2, 0.7], 0.0));
        assert!(!s3.is_strictly_feasible(&[0.5, 0.6], 0.0));
        let last = s3.normals().row(2);
        assert_relative_eq!(last[0], -1.0 / 2f64.sqrt());

        let s2 = Polytope::<f64>::build_reduced_simplex(2).unwrap();
        assert_eq!(s2, interval());

        assert!(matches!(
            Polytope::<f64>::build_box(2, 1.0, 1.0),
            Err(Error::InvalidBounds(_))
        ));
        assert!(Polytope::<f64>::build_reduced_simplex(1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let p = Polytope::<f64>::build_reduced_simplex(4).unwrap();
        let q = Polytope::<f64>::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        let txt = "2 1\n1 0\n-1 -1\n0.5\n";
        assert_eq!(Polytope::<f64>::from_text(txt).unwrap(), interval());
        assert!(Polytope::<f64>::from_text("2 1\n1 0\n").is_err());
        assert!(Polytope::<f64>::from_text("2 1\n1 0\n-1 -1\n1.5\n").is_err());
    }

    #[test]
    fn lift_and_reduce() {
        let full = lift_reduced(&[0.2, 0.3]);
        assert_relative_eq!(full[2], 0.5);
        assert_eq!(reduce_full(&full), vec![0.2, 0.3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_preserves_feasible_set(
                rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 3..6),
                offs in proptest::collection::vec(-2.0f64..-0.1, 6),
                pts in proptest::collection::vec(proptest::collection::vec(-4.0f64..4.0, 2), 20),
            ) {
                prop_assume!(rows.iter().all(|r| norm(r) > 1e-3));
                let m = rows.len();
                let b_raw = offs[..m].to_vec();
                let a_raw = Matrix::from_rows(&rows).unwrap();
                let p = Polytope::new(a_raw.clone(), b_raw.clone(), vec![0.0, 0.0]).unwrap();
                for w in &pts {
                    let raw_strict = (0..m).all(|i| dot(a_raw.row(i), w) - b_raw[i] > 0.0);
                    prop_assert_eq!(raw_strict, p.is_strictly_feasible(w, 0.0));
                }
            }

            #[test]
            fn shrink_slack_bound(
                w in proptest::collection::vec(0.0f64..1.0, 3),
                c in 0.0f64..1.0,
            ) {
                let p = Polytope::build_box(3, 0.0, 1.0).unwrap();
                let star = p.witness().to_vec();
                let shrunk = shrink_toward(&w, c, &star);
                let s = p.slacks(&shrunk).unwrap();
                let s_star = p.slacks(&star).unwrap();
                for (a, b) in s.as_slice().iter().zip(s_star.as_slice()) {
                    prop_assert!(*a >= c * b - 1e-12);
                }
            }

            #[test]
            fn reduced_points_lift_to_distributions(
                raw in proptest::collection::vec(0.0f64..1.0, 4),
            ) {
                let total: f64 = raw.iter().sum::<f64>() + 0.5;
                let reduced: Vec<f64> = raw.iter().map(|x| x / total).collect();
                let p = Polytope::<f64>::build_reduced_simplex(5).unwrap();
                prop_assert!(p.slacks(&reduced).unwrap().min() >= -1e-15);
                let full = lift_reduced(&reduced);
                prop_assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(full.iter().all(|&x| (-1e-15..=1.0 + 1e-15).contains(&x)));
            }
        }
    }
}

//! Exact dynamic-programming oracles for lattice walks.
//!
//! Everything here is computed by propagating the law of the killed walk on
//! the lattice, either in exact rational arithmetic or in doubles. These
//! values are the ground truth the Monte Carlo estimators are checked against.

mod brute;
mod dp;
mod weight;

use std::io::Write;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub use brute::{brute_force_check, BruteForce, BRUTE_FORCE_LIMIT};
pub use dp::LatticeDp;
pub use weight::{Weight, PRUNE_BELOW};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::walk::{ratio, Rational, StepDistribution, Coupling};

/// Walk on `shift + Z^k` with i.i.d. integer-valued components.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeWalkSpec {
    atoms: Vec<(i64, Rational)>,
    k: usize,
    shift: Rational,
    min_offset: i64,
    span: i64,
    stride: i64,
    shift_num: i64,
    shift_den: i64,
    shift_f64: f64,
}

impl LatticeWalkSpec {
    pub fn new(k: usize, atoms: Vec<(i64, Rational)>, lattice_shift: Rational) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if atoms.is_empty() {
            return Err(Error::invalid("step law has no atoms"));
        }
        let mut total = Rational::zero();
        for (_, p) in &atoms {
            if !p.is_positive() {
                return Err(Error::invalid(format!("probability {p} is not positive")));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let mut atoms = atoms;
        atoms.sort_by_key(|(o, _)| *o);
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("repeated offset in step law"));
        }
        let min_offset = atoms[0].0;
        let span = atoms[atoms.len() - 1].0 - min_offset;
        let stride = atoms
            .iter()
            .map(|(o, _)| o - min_offset)
            .fold(0i64, |g, d| g.gcd(&d))
            .max(1);
        // reduce the shift to [0, 1)
        let shift = &lattice_shift - lattice_shift.floor();
        let shift_num = shift.numer().to_i64().ok_or_else(|| Error::invalid("shift too large"))?;
        let shift_den = shift.denom().to_i64().ok_or_else(|| Error::invalid("shift too large"))?;
        Ok(LatticeWalkSpec {
            atoms,
            k,
            shift_f64: shift_num as f64 / shift_den as f64,
            shift,
            min_offset,
            span,
            stride,
            shift_num,
            shift_den,
        })
    }

    /// Independent ±1 components.
    pub fn rademacher(k: usize) -> Self {
        Self::new(k, vec![(-1, ratio(1, 2)), (1, ratio(1, 2))], Rational::zero()).expect("valid")
    }

    /// Independent components on {-1, 0, 1} with masses 1/4, 1/2, 1/4.
    pub fn lazy(k: usize) -> Self {
        Self::new(k, vec![(-1, ratio(1, 4)), (0, ratio(1, 2)), (1, ratio(1, 4))], Rational::zero())
            .expect("valid")
    }

    /// Lattice version of an i.i.d. discrete law with integer atoms.
    pub fn from_distribution(dist: &StepDistribution) -> Result<Self> {
        if !matches!(dist.coupling(), Coupling::IidComponents) {
            return Err(Error::Unsupported("lattice oracle needs independent components".into()));
        }
        let atoms = dist
            .marginal_atoms()
            .ok_or_else(|| Error::Unsupported("lattice oracle needs a discrete law".into()))?;
        let atoms = atoms
            .iter()
            .map(|(v, p)| {
                if v.is_integer() {
                    v.to_integer().to_i64().map(|o| (o, p.clone())).ok_or_else(|| Error::invalid("offset too large"))
                } else {
                    Err(Error::Unsupported(format!("atom {v} is not an integer")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dist.dim(), atoms, Rational::zero())
    }

    /// The same law as a [`StepDistribution`].
    pub fn to_distribution(&self) -> StepDistribution {
        StepDistribution::atoms(
            self.k,
            self.atoms.iter().map(|(o, p)| (ratio(*o, 1), p.clone())).collect(),
        )
        .expect("valid law")
    }

    /// The one-dimensional marginal walk.
    pub fn marginal(&self) -> Self {
        let mut m = self.clone();
        m.k = 1;
        m
    }

    pub fn with_dim(&self, k: usize) -> Self {
        let mut m = self.clone();
        m.k = k;
        m
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn atoms(&self) -> &[(i64, Rational)] {
        &self.atoms
    }

    pub fn lattice_shift(&self) -> &Rational {
        &self.shift
    }

    pub(crate) fn min_offset(&self) -> i64 {
        self.min_offset
    }

    pub(crate) fn span(&self) -> i64 {
        self.span
    }

    pub(crate) fn stride(&self) -> i64 {
        self.stride
    }

    /// Whether every offset `o` has a mirror `-o` with the same mass.
    pub fn is_symmetric(&self) -> bool {
        self.atoms
            .iter()
            .all(|(o, p)| self.atoms.iter().any(|(q, r)| *q == -o && r == p))
    }

    pub fn variance(&self) -> Rational {
        let m1: Rational = self.atoms.iter().map(|(o, p)| p * BigInt::from(*o)).sum();
        let m2: Rational = self.atoms.iter().map(|(o, p)| p * BigInt::from(o * o)).sum();
        m2 - &m1 * &m1
    }

    /// Real coordinate of lattice coordinate `c`.
    pub fn real_coord(&self, c: i64) -> f64 {
        c as f64 + self.shift_f64
    }

    /// Lattice coordinates of a real point, or an error if it is off the lattice.
    pub fn to_lattice(&self, x: &[f64]) -> Result<Vec<i64>> {
        if x.len() != self.k {
            return Err(Error::invalid(format!(
                "point has dimension {}, walk has dimension {}",
                x.len(),
                self.k
            )));
        }
        x.iter()
            .map(|&v| {
                let c = v - self.shift_f64;
                let r = c.round();
                if !c.is_finite() || (c - r).abs() > 1e-9 {
                    Err(Error::invalid(format!("coordinate {v} is not on the lattice")))
                } else {
                    Ok(r as i64)
                }
            })
            .collect()
    }

    pub fn to_real(&self, c: &[i64]) -> Vec<f64> {
        c.iter().map(|&v| self.real_coord(v)).collect()
    }

    /// Chamber membership of a lattice point.
    pub fn contains(&self, chamber: ChamberType, c: &[i64]) -> bool {
        if self.shift_num == 0 {
            return chamber.holds(c);
        }
        let mut buf = [0i64; 8];
        if c.len() <= buf.len() {
            for (b, &v) in buf.iter_mut().zip(c) {
                *b = self.shift_den * v + self.shift_num;
            }
            chamber.holds(&buf[..c.len()])
        } else {
            let v: Vec<i64> = c.iter().map(|&v| self.shift_den * v + self.shift_num).collect();
            chamber.holds(&v)
        }
    }

    /// Exact `h^Z` at a lattice point.
    pub fn h_exact(&self, chamber: ChamberType, c: &[i64]) -> Rational {
        if self.shift_num == 0 {
            return Rational::from_integer(chamber.h_exact(c));
        }
        let scaled: Vec<i64> = c.iter().map(|&v| self.shift_den * v + self.shift_num).collect();
        let deg = chamber.degree(c.len());
        Rational::new(chamber.h_exact(&scaled), num_traits::pow(BigInt::from(self.shift_den), deg))
    }

    pub(crate) fn to_doc(&self) -> LatticeSpecDoc {
        LatticeSpecDoc {
            k: self.k,
            atoms: self
                .atoms
                .iter()
                .map(|(o, p)| (*o, p.numer().to_i64().unwrap_or(0), p.denom().to_i64().unwrap_or(1)))
                .collect(),
            shift: (self.shift_num, self.shift_den),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct LatticeSpecDoc {
    k: usize,
    atoms: Vec<(i64, i64, i64)>,
    shift: (i64, i64),
}

impl LatticeSpecDoc {
    pub(crate) fn build(&self) -> Result<LatticeWalkSpec> {
        LatticeWalkSpec::new(
            self.k,
            self.atoms.iter().map(|&(o, n, d)| (o, ratio(n, d))).collect(),
            ratio(self.shift.0, self.shift.1),
        )
    }
}

/// Outcome of a survival query.
#[derive(Clone, Debug, PartialEq)]
pub struct Survival<W> {
    pub probability: W,
    /// The start point was outside the open chamber.
    pub outside_start: bool,
}

/// `P_x(tau^Z > n)`.
pub fn survival_probability<W: Weight>(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[f64],
    n: usize,
) -> Result<Survival<W>> {
    let start = spec.to_lattice(x)?;
    let mut dp = LatticeDp::<W>::new(spec, chamber, &start)?;
    dp.advance_to(n);
    Ok(Survival { probability: dp.survival(), outside_start: dp.started_outside() })
}

/// `E_x[f(S(n)); tau^Z > n]`; `f` receives lattice coordinates.
pub fn restricted_expectation<W: Weight>(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[f64],
    n: usize,
    f: impl FnMut(&[i64]) -> W,
) -> Result<W> {
    let start = spec.to_lattice(x)?;
    let mut dp = LatticeDp::<W>::new(spec, chamber, &start)?;
    dp.advance_to(n);
    Ok(dp.expect(f))
}

/// Truncated value of `V^Z(x)` with its convergence diagnostics.
#[derive(Clone, Debug)]
pub struct VExact<W> {
    /// `E_x[h(S(n_max)); tau > n_max]`.
    pub value: W,
    /// `E_x[h(S(n)); tau > n]` for `n = 0..=n_max`.
    pub sequence: Vec<W>,
    /// `h(x) - E_x[h(S(tau)); tau <= n_max]`, the optional-stopping route.
    pub identity_value: W,
    /// `|sequence[n] - sequence[n-1]|` for `n = 1..=n_max`.
    pub increments: Vec<f64>,
    /// False if the increments were still growing near `n_max`.
    pub converging: bool,
}

/// Truncated `V^Z(x) = lim E_x[h(S(n)); tau > n]` computed up to `n_max`.
pub fn v_exact<W: Weight>(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[f64],
    n_max: usize,
) -> Result<VExact<W>> {
    let start = spec.to_lattice(x)?;
    if !spec.contains(chamber, &start) {
        return Err(Error::invalid("V is only defined inside the chamber"));
    }
    let mut dp = LatticeDp::<W>::new(spec, chamber, &start)?;
    let mut sequence = vec![dp.expect_h()];
    while dp.step_index() < n_max {
        dp.advance();
        sequence.push(dp.expect_h());
    }
    let h_x = W::h_at(chamber, spec, &start);
    let identity_value = h_x.sub(dp.exit_h());
    let increments: Vec<f64> = sequence.windows(2).map(|w| w[1].sub(&w[0]).as_f64().abs()).collect();
    Ok(VExact {
        value: sequence.last().expect("nonempty").clone(),
        converging: increments_converging(&increments),
        sequence,
        identity_value,
        increments,
    })
}

/// Compares increment sizes, summed over pairs of steps to average out
/// period-two oscillation, between the last two quarters of the run.
pub fn increments_converging(increments: &[f64]) -> bool {
    let n = increments.len();
    if n < 8 {
        return true;
    }
    let q = n / 4;
    let tail: f64 = increments[n - q..].iter().sum();
    let before: f64 = increments[n - 2 * q..n - q].iter().sum();
    tail <= before
}

/// Law of `S(n)` given `tau > n`, as lattice points with masses.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalLaw<W> {
    pub atoms: Vec<(Vec<i64>, W)>,
    pub survival: W,
}

impl<W: Weight> ConditionalLaw<W> {
    pub fn total_mass(&self) -> W {
        W::sum(self.atoms.iter().map(|(_, w)| w))
    }
}

impl ConditionalLaw<f64> {
    /// `E[f(S(n))]` under the conditional law; `f` receives real coordinates.
    pub fn mean_of(&self, spec: &LatticeWalkSpec, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().map(|(c, w)| w * f(&spec.to_real(c))).collect();
        f64::sum(terms.iter())
    }
}

/// Normalised surviving mass at step `n`.
pub fn conditional_distribution<W: Weight>(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[f64],
    n: usize,
) -> Result<ConditionalLaw<W>> {
    let start = spec.to_lattice(x)?;
    let mut dp = LatticeDp::<W>::new(spec, chamber, &start)?;
    dp.advance_to(n);
    conditional_from_dp(&dp)
}

pub fn conditional_from_dp<W: Weight>(dp: &LatticeDp<W>) -> Result<ConditionalLaw<W>> {
    let survival = dp.survival();
    if survival.is_zero_weight() {
        return Err(Error::DegenerateConditioning { step: dp.step_index() });
    }
    let atoms = dp
        .support()
        .into_iter()
        .map(|(c, w)| (c, w.div(&survival)))
        .collect();
    Ok(ConditionalLaw { atoms, survival })
}

/// One row of an exported survival curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub n: usize,
    pub p_survive: f64,
    pub e_h_restricted: f64,
    pub v_estimate: f64,
    pub dropped_mass: f64,
}

/// Snapshot of the DP at its current step. `e_h_restricted` is summed over the
/// surviving support; `v_estimate` is `h(x) - E_x[h(S(tau)); tau <= n]`.
pub fn curve_row(dp: &LatticeDp<f64>, with_h: bool) -> CurveRow {
    let h_x = f64::h_at(dp.chamber(), dp.spec(), dp.start());
    CurveRow {
        n: dp.step_index(),
        p_survive: dp.survival(),
        e_h_restricted: if with_h { dp.expect_h() } else { f64::NAN },
        v_estimate: h_x - dp.exit_h(),
        dropped_mass: dp.dropped_mass(),
    }
}

pub const CURVE_CSV_HEADER: &str = "n,P_survive,E_h_restricted,V_estimate,dropped_mass";

/// Writes curve rows as CSV with [`CURVE_CSV_HEADER`].
pub fn write_curve_csv<Wr: Write>(out: &mut Wr, rows: &[CurveRow]) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.n, r.p_survive, r.e_h_restricted, r.v_estimate, r.dropped_mass
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChamberType::*;

    fn r(n: i64, d: i64) -> Rational {
        ratio(n, d)
    }

    #[test]
    fn survival_examples() {
        let s = LatticeWalkSpec::rademacher(2);
        let p = survival_probability::<Rational>(&s, C, &[1.0, 2.0], 1).unwrap();
        assert_eq!(p.probability, r(1, 4));
        assert!(!p.outside_start);
        let p = survival_probability::<Rational>(&s, C, &[1.0, 2.0], 2).unwrap();
        assert_eq!(p.probability, r(3, 16));
        let p = survival_probability::<Rational>(&s, D, &[1.0, 2.0], 1).unwrap();
        assert_eq!(p.probability, r(3, 4));
    }

    #[test]
    fn outside_start_and_off_lattice() {
        let s = LatticeWalkSpec::rademacher(2);
        let p = survival_probability::<Rational>(&s, C, &[2.0, 1.0], 3).unwrap();
        assert!(p.outside_start);
        assert!(p.probability.is_zero());
        assert!(survival_probability::<f64>(&s, C, &[1.5, 2.0], 3).is_err());
    }

    #[test]
    fn half_integer_lattice() {
        let s = LatticeWalkSpec::new(1, vec![(-1, r(1, 2)), (1, r(1, 2))], r(1, 2)).unwrap();
        // from 1/2 the first step down leaves (0, inf)
        let p = survival_probability::<Rational>(&s, C, &[0.5], 1).unwrap();
        assert_eq!(p.probability, r(1, 2));
        let e = restricted_expectation::<Rational>(&s, C, &[0.5], 1, |c| s.h_exact(C, c)).unwrap();
        assert_eq!(e, r(3, 4));
    }

    #[test]
    fn restricted_expectation_examples() {
        let s = LatticeWalkSpec::rademacher(2);
        let e = restricted_expectation::<Rational>(&s, C, &[1.0, 2.0], 1, |c| s.h_exact(C, c)).unwrap();
        assert_eq!(e, r(15, 2));
        let one = restricted_expectation::<Rational>(&s, C, &[1.0, 2.0], 4, |_| r(1, 1)).unwrap();
        let p = survival_probability::<Rational>(&s, C, &[1.0, 2.0], 4).unwrap();
        assert_eq!(one, p.probability);
        let e0 = restricted_expectation::<Rational>(&s, C, &[1.0, 2.0], 0, |c| s.h_exact(C, c)).unwrap();
        assert_eq!(e0, r(6, 1));
    }

    #[test]
    fn v_sequence_starts_with_h_then_seven_and_a_half() {
        let s = LatticeWalkSpec::rademacher(2);
        let v = v_exact::<Rational>(&s, C, &[1.0, 2.0], 6).unwrap();
        assert_eq!(v.sequence[0], r(6, 1));
        assert_eq!(v.sequence[1], r(15, 2));
        assert_eq!(v.value, v.identity_value);
        assert!(v.sequence.iter().all(|x| x.is_positive()));
    }

    #[test]
    fn conditional_examples() {
        let s = LatticeWalkSpec::rademacher(2);
        let c = conditional_distribution::<Rational>(&s, C, &[1.0, 2.0], 1).unwrap();
        assert_eq!(c.atoms, vec![(vec![2, 3], r(1, 1))]);
        let c = conditional_distribution::<Rational>(&s, C, &[1.0, 2.0], 2).unwrap();
        assert_eq!(
            c.atoms,
            vec![(vec![1, 2], r(1, 3)), (vec![1, 4], r(1, 3)), (vec![3, 4], r(1, 3))]
        );
        let c = conditional_distribution::<Rational>(&s, C, &[1.0, 2.0], 0).unwrap();
        assert_eq!(c.atoms, vec![(vec![1, 2], r(1, 1))]);
        assert!(matches!(
            conditional_distribution::<Rational>(&s, C, &[0.0, 2.0], 2),
            Err(Error::DegenerateConditioning { .. })
        ));
    }

    #[test]
    fn mass_is_conserved() {
        for spec in [LatticeWalkSpec::rademacher(2), LatticeWalkSpec::lazy(2)] {
            let start = [2, 5];
            let mut dp = LatticeDp::<Rational>::new(&spec, D, &start).unwrap();
            for _ in 0..8 {
                dp.advance();
                assert_eq!(dp.survival() + dp.exit_mass(), r(1, 1));
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let spec = LatticeWalkSpec::lazy(2);
        let mut dp = LatticeDp::<f64>::new(&spec, C, &[1, 3]).unwrap();
        dp.advance_to(20);
        let dir = std::env::temp_dir().join(format!("weylwalk-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dp.ckpt");
        dp.save_checkpoint(&path).unwrap();
        let mut back = LatticeDp::<f64>::load_checkpoint(&path).unwrap();
        dp.advance_to(30);
        back.advance_to(30);
        assert_eq!(dp.survival(), back.survival());
        assert_eq!(dp.exit_h(), back.exit_h());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn pruning_reports_dropped_mass() {
        // heavy killing: after many steps surviving cells can fall under the cutoff
        let spec = LatticeWalkSpec::rademacher(1);
        let mut dp = LatticeDp::<f64>::new(&spec, C, &[1]).unwrap();
        dp.advance_to(1200);
        let total = dp.survival() + dp.exit_mass() + dp.dropped_mass();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(dp.dropped_mass() > 0.0 && dp.dropped_mass() < 1e-290);
    }

    #[test]
    fn symmetric_and_variance() {
        assert!(LatticeWalkSpec::lazy(1).is_symmetric());
        assert_eq!(LatticeWalkSpec::lazy(1).variance(), r(1, 2));
        let skew = LatticeWalkSpec::new(1, vec![(-1, r(2, 3)), (2, r(1, 3))], Rational::zero()).unwrap();
        assert!(!skew.is_symmetric());
        assert_eq!(skew.stride(), 3);
    }
}

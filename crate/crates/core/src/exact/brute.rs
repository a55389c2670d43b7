//! Exhaustive path enumeration, independent of the lattice DP.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::LatticeWalkSpec;
use crate::walk::Rational;

/// Largest number of step sequences the enumerator accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e8;

/// Exact quantities obtained by summing over every step sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub survival: Rational,
    /// `E_x[h(S(n)); tau > n]`
    pub restricted_h: Rational,
    /// `E_x[h(S(tau)); tau <= n]`
    pub exit_h: Rational,
    /// Unnormalised mass of each surviving endpoint.
    pub endpoints: BTreeMap<Vec<i64>, Rational>,
}

impl BruteForce {
    /// Endpoint law given survival, sorted by lattice point.
    pub fn conditional(&self) -> Result<Vec<(Vec<i64>, Rational)>> {
        if self.survival.is_zero() {
            return Err(Error::DegenerateConditioning { step: 0 });
        }
        Ok(self
            .endpoints
            .iter()
            .map(|(c, w)| (c.clone(), w / &self.survival))
            .collect())
    }
}

/// Enumerates all `|atoms|^(k n)` step sequences (`n <= 8`). A path that
/// leaves the chamber is stopped there, carrying the mass of all its
/// continuations.
pub fn brute_force_check(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[f64],
    n: usize,
) -> Result<BruteForce> {
    if n > 8 {
        return Err(Error::TooLarge(format!("brute force is limited to n <= 8, got {n}")));
    }
    let paths = (spec.atoms().len() as f64).powi((spec.dim() * n) as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("{paths:e} step sequences exceed {BRUTE_FORCE_LIMIT:e}")));
    }
    let start = spec.to_lattice(x)?;
    chamber.check_dim(spec.dim())?;
    let mut out = BruteForce {
        survival: Rational::zero(),
        restricted_h: Rational::zero(),
        exit_h: Rational::zero(),
        endpoints: BTreeMap::new(),
    };
    let steps = all_steps(spec);
    let mut pos = start.clone();
    walk(spec, chamber, &steps, &mut pos, Rational::one(), n, &mut out);
    Ok(out)
}

fn all_steps(spec: &LatticeWalkSpec) -> Vec<(Vec<i64>, Rational)> {
    let mut out = vec![(Vec::new(), Rational::one())];
    for _ in 0..spec.dim() {
        out = out
            .into_iter()
            .flat_map(|(v, p)| {
                spec.atoms().iter().map(move |(o, q)| {
                    let mut w = v.clone();
                    w.push(*o);
                    (w, &p * q)
                })
            })
            .collect();
    }
    out
}

fn walk(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    steps: &[(Vec<i64>, Rational)],
    pos: &mut Vec<i64>,
    prob: Rational,
    remaining: usize,
    out: &mut BruteForce,
) {
    if !spec.contains(chamber, pos) {
        out.exit_h += &prob * spec.h_exact(chamber, pos);
        return;
    }
    if remaining == 0 {
        out.restricted_h += &prob * spec.h_exact(chamber, pos);
        out.survival += &prob;
        *out.endpoints.entry(pos.clone()).or_insert_with(Rational::zero) += &prob;
        return;
    }
    for (s, p) in steps {
        for (a, d) in pos.iter_mut().zip(s) {
            *a += d;
        }
        walk(spec, chamber, steps, pos, &prob * p, remaining - 1, out);
        for (a, d) in pos.iter_mut().zip(s) {
            *a -= d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::ratio;

    #[test]
    fn two_step_enumeration() {
        let s = LatticeWalkSpec::rademacher(2);
        let b = brute_force_check(&s, ChamberType::C, &[1.0, 2.0], 2).unwrap();
        assert_eq!(b.survival, ratio(3, 16));
        assert_eq!(b.endpoints.len(), 3);
    }

    #[test]
    fn refuses_large_instances() {
        let s = LatticeWalkSpec::lazy(4);
        assert!(matches!(
            brute_force_check(&s, ChamberType::C, &[1.0, 2.0, 3.0, 4.0], 5),
            Err(Error::TooLarge(_))
        ));
        assert!(brute_force_check(&LatticeWalkSpec::rademacher(1), ChamberType::C, &[1.0], 9).is_err());
    }
}

//! Transformed kernels `p(x, y) V(y) / V(x)` on discrete laws.

use std::collections::BTreeMap;

use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::{LatticeDp, LatticeWalkSpec};
use crate::htransform::table::joint_moves;
use crate::htransform::HFunction;
use crate::stream::RandomStream;
use crate::walk::{PathSample, Rational, StepDistribution};

/// One-step transformed kernel at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoobKernel {
    /// In-chamber targets with renormalised probabilities.
    pub moves: Vec<(Vec<f64>, f64)>,
    /// `sum_y p(x, y) V(y) / V(x)` before renormalisation.
    pub total_mass: f64,
    /// `total_mass - 1`; zero when `V` is exactly regular at `x`.
    pub residual: f64,
}

/// Samples the `V`-transformed walk.
#[derive(Clone, Debug)]
pub struct DoobSampler {
    chamber: ChamberType,
    steps: Vec<(Vec<f64>, f64)>,
    v: HFunction,
}

impl DoobSampler {
    pub fn new(dist: &StepDistribution, chamber: ChamberType, v: HFunction) -> Result<Self> {
        if !dist.is_discrete() {
            return Err(Error::Unsupported("transformed kernels need a discrete step law".into()));
        }
        chamber.check_dim(dist.dim())?;
        if v.chamber() != chamber {
            return Err(Error::invalid(format!("transform lives on {}, walk on {chamber}", v.chamber())));
        }
        let steps = dist
            .joint_support()?
            .into_iter()
            .map(|(s, p)| {
                (s.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect(), p.to_f64().unwrap_or(f64::NAN))
            })
            .collect();
        Ok(DoobSampler { chamber, steps, v })
    }

    pub fn kernel(&self, x: &[f64]) -> Result<DoobKernel> {
        if !self.chamber.contains(x)? {
            return Err(Error::invalid("transformed kernel is only defined inside the chamber"));
        }
        let vx = self.v.evaluate(x)?;
        let mut moves = Vec::new();
        let mut total = 0.0;
        for (s, p) in &self.steps {
            let y: Vec<f64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
            if self.chamber.holds(&y) {
                let w = p * self.v.evaluate(&y)? / vx;
                total += w;
                moves.push((y, w));
            }
        }
        if moves.is_empty() || !(total > 0.0) {
            return Err(Error::AbsorbingState { point: x.to_vec() });
        }
        for m in moves.iter_mut() {
            m.1 /= total;
        }
        Ok(DoobKernel { moves, total_mass: total, residual: total - 1.0 })
    }

    /// One transformed step; returns the new point and the kernel residual.
    pub fn step(&self, x: &[f64], stream: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        let k = self.kernel(x)?;
        let u = stream.uniform();
        let mut acc = 0.0;
        let last = k.moves.len() - 1;
        for (i, (y, p)) in k.moves.iter().enumerate() {
            acc += p;
            if u < acc || i == last {
                return Ok((y.clone(), k.residual));
            }
        }
        unreachable!("kernel has at least one move")
    }

    /// `n` transformed steps from `x`.
    pub fn path(&self, x: &[f64], n: usize, stream: &mut RandomStream) -> Result<ConditionedPath> {
        let mut steps = Vec::with_capacity(n);
        let mut pos = x.to_vec();
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let (y, r) = self.step(&pos, stream)?;
            worst = worst.max(r.abs());
            steps.push(y.iter().zip(&pos).map(|(a, b)| a - b).collect());
            pos = y;
        }
        Ok(ConditionedPath { path: PathSample::from_steps(x.to_vec(), steps), max_abs_residual: worst })
    }
}

/// A transformed path and the largest kernel residual met along it.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionedPath {
    pub path: PathSample,
    pub max_abs_residual: f64,
}

pub fn doob_kernel(dist: &StepDistribution, chamber: ChamberType, v: &HFunction, x: &[f64]) -> Result<DoobKernel> {
    DoobSampler::new(dist, chamber, v.clone())?.kernel(x)
}

pub fn doob_step(
    dist: &StepDistribution,
    chamber: ChamberType,
    v: &HFunction,
    x: &[f64],
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    Ok(DoobSampler::new(dist, chamber, v.clone())?.step(x, stream)?.0)
}

pub fn sample_conditioned_path(
    dist: &StepDistribution,
    chamber: ChamberType,
    v: &HFunction,
    x: &[f64],
    n: usize,
    stream: &mut RandomStream,
) -> Result<ConditionedPath> {
    DoobSampler::new(dist, chamber, v.clone())?.path(x, n, stream)
}

/// `P_x(S(n) = y, tau > n)` in exact arithmetic, keyed by lattice point.
pub fn killed_marginal_exact(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    x: &[i64],
    n: usize,
) -> Result<BTreeMap<Vec<i64>, Rational>> {
    let mut dp = LatticeDp::<Rational>::new(spec, chamber, x)?;
    dp.advance_to(n);
    Ok(dp.support().into_iter().collect())
}

/// `n`-step masses of the unnormalised transformed kernel
/// `p(u, y) v(y) / v(u)`, chained step by step in exact arithmetic.
pub fn transformed_marginal_exact(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    v: impl Fn(&[i64]) -> Rational,
    x: &[i64],
    n: usize,
) -> Result<BTreeMap<Vec<i64>, Rational>> {
    if !spec.contains(chamber, x) {
        return Err(Error::invalid("start point is outside the chamber"));
    }
    let moves = joint_moves(spec);
    let mut mass = BTreeMap::new();
    mass.insert(x.to_vec(), Rational::from_integer(1.into()));
    for _ in 0..n {
        let mut next: BTreeMap<Vec<i64>, Rational> = BTreeMap::new();
        for (u, m) in &mass {
            let vu = v(u);
            if vu.is_zero() {
                return Err(Error::NonPositiveTransform { point: spec.to_real(u), value: 0.0 });
            }
            for (xi, p) in &moves {
                let y: Vec<i64> = u.iter().zip(xi).map(|(a, b)| a + b).collect();
                if spec.contains(chamber, &y) {
                    let w = m * p * v(&y) / &vu;
                    *next.entry(y).or_insert_with(Rational::zero) += w;
                }
            }
        }
        mass = next;
    }
    Ok(mass)
}

/// Total-variation distance between `P_x(S(n) = . | tau > m)` and the
/// `V`-transformed `n`-step marginal (renormalised), computed with
/// `P_x(S(n) = y | tau > m) = P_x(S(n) = y, tau > n) P_y(tau > m - n) / P_x(tau > m)`.
pub fn conditioning_tv(
    spec: &LatticeWalkSpec,
    chamber: ChamberType,
    v: &HFunction,
    x: &[f64],
    n: usize,
    m: usize,
) -> Result<f64> {
    if m < n {
        return Err(Error::invalid("conditioning horizon must be at least n"));
    }
    let start = spec.to_lattice(x)?;
    let mut dp = LatticeDp::<f64>::new(spec, chamber, &start)?;
    if dp.started_outside() {
        return Err(Error::invalid("start point is outside the chamber"));
    }
    dp.advance_to(n);
    let support = dp.support();
    let vx = v.evaluate(x)?;
    let mut cond = Vec::with_capacity(support.len());
    let mut transformed = Vec::with_capacity(support.len());
    for (y, q) in &support {
        let mut from_y = LatticeDp::<f64>::new(spec, chamber, y)?;
        from_y.advance_to(m - n);
        cond.push(q * from_y.survival());
        transformed.push(q * v.evaluate(&spec.to_real(y))? / vx);
    }
    let zc: f64 = cond.iter().sum();
    let zt: f64 = transformed.iter().sum();
    if !(zc > 0.0) {
        return Err(Error::DegenerateConditioning { step: m });
    }
    Ok(0.5 * cond.iter().zip(&transformed).map(|(a, b)| (a / zc - b / zt).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htransform::{VTable, VTableConfig};
    use crate::walk::ratio;
    use std::sync::Arc;
    use ChamberType::*;

    fn table_c2() -> HFunction {
        let t = VTable::build(
            &LatticeWalkSpec::rademacher(2),
            C,
            VTableConfig { radius: 60, switchover: None, ..VTableConfig::default() },
        )
        .unwrap();
        HFunction::from_table(Arc::new(t))
    }

    #[test]
    fn single_in_chamber_neighbour() {
        let k = doob_kernel(&StepDistribution::rademacher(2), C, &table_c2(), &[1.0, 2.0]).unwrap();
        assert_eq!(k.moves, vec![(vec![2.0, 3.0], 1.0)]);
        assert!(k.residual.abs() < 1e-9);
    }

    #[test]
    fn table_kernels_are_normalised() {
        let dist = StepDistribution::rademacher(2);
        let s = DoobSampler::new(&dist, C, table_c2()).unwrap();
        for x in [[1.0, 4.0], [2.0, 3.0], [5.0, 17.0], [30.0, 31.0]] {
            assert!(s.kernel(&x).unwrap().residual.abs() < 1e-6);
        }
    }

    #[test]
    fn h_is_not_regular_for_the_killed_walk() {
        let dist = StepDistribution::rademacher(2);
        let k = doob_kernel(&dist, C, &HFunction::h(C), &[1.0, 2.0]).unwrap();
        assert!(k.residual.abs() > 1e-3);
    }

    #[test]
    fn paths_stay_inside() {
        let dist = StepDistribution::rademacher(2);
        let mut s = RandomStream::new(3, 0);
        let p = sample_conditioned_path(&dist, C, &table_c2(), &[1.0, 2.0], 100, &mut s).unwrap();
        assert_eq!(p.path.len(), 100);
        assert!(p.path.positions.iter().all(|y| C.holds(y)));
    }

    #[test]
    fn telescoping_identity_is_exact() {
        let spec = LatticeWalkSpec::lazy(2);
        for z in [C, D] {
            let x = [1, 3];
            let v = |c: &[i64]| spec.h_exact(z, c) + ratio(1, 3);
            let t = transformed_marginal_exact(&spec, z, v, &x, 4).unwrap();
            let killed = killed_marginal_exact(&spec, z, &x, 4).unwrap();
            assert_eq!(t.len(), killed.len());
            let vx = v(&x);
            for (y, m) in killed {
                assert_eq!(t[&y], m * v(&y) / &vx);
            }
        }
    }

    #[test]
    fn two_step_marginal_matches_sampling() {
        let spec = LatticeWalkSpec::rademacher(2);
        let dist = StepDistribution::rademacher(2);
        let v = table_c2();
        let killed = killed_marginal_exact(&spec, C, &[1, 2], 2).unwrap();
        let vx = v.raw(&[1.0, 2.0]);
        let exact: Vec<(Vec<i64>, f64)> = killed
            .iter()
            .map(|(y, m)| (y.clone(), m.to_f64().unwrap() * v.raw(&spec.to_real(y)) / vx))
            .collect();
        let total: f64 = exact.iter().map(|e| e.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let sampler = DoobSampler::new(&dist, C, v).unwrap();
        let n = 40_000u64;
        let ends = crate::stream::par_trajectories(8, n, |_, s| sampler.path(&[1.0, 2.0], 2, s).unwrap().path.positions[2].clone());
        for (y, p) in &exact {
            let yr = spec.to_real(y);
            let hits = ends.iter().filter(|e| **e == yr).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits - p).abs() < 4.0 * se + 1e-12, "{y:?}: {hits} vs {p}");
        }
    }

    #[test]
    fn conditioning_converges_to_transform() {
        let spec = LatticeWalkSpec::rademacher(2);
        let v = table_c2();
        let a = conditioning_tv(&spec, C, &v, &[1.0, 2.0], 2, 50).unwrap();
        let b = conditioning_tv(&spec, C, &v, &[1.0, 2.0], 2, 100).unwrap();
        assert!(b < a, "{b} !< {a}");
    }
}

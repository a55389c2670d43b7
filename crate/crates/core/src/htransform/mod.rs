//! Doob transforms of the killed walk: Monte Carlo estimates of `V^Z`,
//! transformed kernels and paths, and the alternate type-C function
//! `V^{+,A} V^{(x)k}`.

mod alternate;
mod doob;
mod table;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub use alternate::{
    estimate_v_plus_a, one_dim_v_exact, one_dim_v_mc, tilde_v_c, tilde_v_c_ratio_table, tilde_v_c_regularity,
    OneDimV, OrderingFunction, RatioRow, RegularityCheck, TildeVc,
};
pub use doob::{
    conditioning_tv, doob_kernel, doob_step, killed_marginal_exact, sample_conditioned_path, transformed_marginal_exact,
    ConditionedPath, DoobKernel, DoobSampler,
};
pub use table::{VTable, VTableConfig, VTableDiagnostics, MAX_BOX_POINTS};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::LatticeWalkSpec;
use crate::stream::{mean_and_std_error, par_trajectories};
use crate::walk::{validate_assumptions, StepDistribution};

/// A Monte Carlo value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    /// Paths still alive at this step contribute no exit term.
    pub truncation_horizon: usize,
}

/// Default truncation horizon `10 max(|x|_inf, 1)^2`.
pub fn default_horizon(x: &[f64]) -> usize {
    let d = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (10.0 * d * d).ceil() as usize
}

/// `V^Z(x) = h(x) - E_x[h(S(tau)); tau <= horizon]` by simulation.
pub fn estimate_v_mc(
    dist: &StepDistribution,
    chamber: ChamberType,
    x: &[f64],
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<EstimateWithError> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if x.len() != dist.dim() {
        return Err(Error::invalid("start point and law have different dimensions"));
    }
    if !chamber.contains(x)? {
        return Err(Error::invalid("V is only defined inside the chamber"));
    }
    let report = validate_assumptions(dist, chamber, x.len())?;
    if !report.symmetry || report.joint_sign_symmetry == Some(false) {
        return Err(Error::invalid("step law is not sign-symmetric; h is not a martingale"));
    }
    let h_x = chamber.h(x);
    let values = par_trajectories(seed, samples, |_, s| {
        let mut pos = x.to_vec();
        let mut step = vec![0.0; pos.len()];
        for _ in 0..horizon {
            dist.sample_step(s, &mut step);
            for (p, d) in pos.iter_mut().zip(&step) {
                *p += d;
            }
            if !chamber.holds(&pos) {
                return h_x - chamber.h(&pos);
            }
        }
        h_x
    });
    let (value, std_error) = mean_and_std_error(&values);
    Ok(EstimateWithError { value, std_error, n_samples: samples, truncation_horizon: horizon })
}

/// Which function an [`HFunction`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HKind {
    HZ,
    VExactTable,
    VMcTable,
    TildeVC,
    OneDimV,
}

/// A function on the chamber used as the `h` of a Doob transform.
#[derive(Clone)]
pub struct HFunction {
    kind: HKind,
    chamber: ChamberType,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for HFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HFunction").field("kind", &self.kind).field("chamber", &self.chamber).finish()
    }
}

impl HFunction {
    pub fn new(kind: HKind, chamber: ChamberType, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        HFunction { kind, chamber, eval: Arc::new(eval) }
    }

    /// `h^Z` itself.
    pub fn h(chamber: ChamberType) -> Self {
        Self::new(HKind::HZ, chamber, move |x| chamber.h(x))
    }

    /// A DP-built table of `V^Z`.
    pub fn from_table(table: Arc<VTable>) -> Self {
        let chamber = table.chamber();
        Self::new(HKind::VExactTable, chamber, move |x| table.value(x).unwrap_or(f64::NAN))
    }

    /// Monte Carlo values of `V^Z` at lattice points, `h^Z` elsewhere.
    pub fn from_mc_points(spec: &LatticeWalkSpec, chamber: ChamberType, points: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut map = HashMap::new();
        for (x, v) in points {
            map.insert(spec.to_lattice(x)?, *v);
        }
        let spec = spec.clone();
        Ok(Self::new(HKind::VMcTable, chamber, move |x| match spec.to_lattice(x) {
            Ok(c) => map.get(&c).copied().unwrap_or_else(|| chamber.h(x)),
            Err(_) => f64::NAN,
        }))
    }

    pub fn kind(&self) -> HKind {
        self.kind
    }

    pub fn chamber(&self) -> ChamberType {
        self.chamber
    }

    /// Value without the positivity check.
    pub fn raw(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Value at `x`; a value that is not strictly positive inside the chamber
    /// is an error.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let v = (self.eval)(x);
        if self.chamber.holds(x) && !(v > 0.0) {
            return Err(Error::NonPositiveTransform { point: x.to_vec(), value: v });
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::v_exact;
    use ChamberType::*;

    #[test]
    fn mc_agrees_with_dp() {
        let dist = StepDistribution::rademacher(2);
        let spec = LatticeWalkSpec::rademacher(2);
        let e = estimate_v_mc(&dist, C, &[1.0, 2.0], 200, 200_000, 5).unwrap();
        // same truncation on both sides
        let v = v_exact::<f64>(&spec, C, &[1.0, 2.0], 200).unwrap();
        assert!((e.value - v.identity_value).abs() < 3.0 * e.std_error, "{e:?} vs {}", v.identity_value);
        assert_eq!(e.truncation_horizon, 200);
    }

    #[test]
    fn single_sample_arithmetic() {
        // one step from (1, 2): replay the first step of each stream by hand
        let dist = StepDistribution::rademacher(2);
        for seed in 0..64 {
            let e = estimate_v_mc(&dist, C, &[1.0, 2.0], 1, 1, seed).unwrap();
            let mut s = crate::stream::RandomStream::new(seed, 0);
            let mut step = [0.0; 2];
            dist.sample_step(&mut s, &mut step);
            let y = [1.0 + step[0], 2.0 + step[1]];
            let expect = if C.holds(&y) { C.h(&[1.0, 2.0]) } else { C.h(&[1.0, 2.0]) - C.h(&y) };
            assert_eq!(e.value, expect);
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn deep_interior_ratio() {
        let dist = StepDistribution::rademacher(2);
        let x = [50.0, 100.0];
        let e = estimate_v_mc(&dist, C, &x, default_horizon(&x), 2_000, 1).unwrap();
        let r = e.value / C.h(&x);
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn rejects_outside_start() {
        let dist = StepDistribution::rademacher(2);
        assert!(estimate_v_mc(&dist, C, &[2.0, 1.0], 10, 10, 0).is_err());
    }

    #[test]
    fn positivity_checked_on_evaluation() {
        let f = HFunction::new(HKind::VMcTable, C, |_| -1.0);
        assert!(matches!(f.evaluate(&[1.0, 2.0]), Err(Error::NonPositiveTransform { .. })));
        assert!(f.evaluate(&[-1.0, 2.0]).is_ok());
        assert_eq!(HFunction::h(C).evaluate(&[1.0, 2.0]).unwrap(), 6.0);
    }

    #[test]
    fn horizon_default() {
        assert_eq!(default_horizon(&[1.0, 2.0]), 40);
        assert_eq!(default_horizon(&[0.5]), 10);
    }
}

//! The alternate type-C function `V~^C = V^{+,A} V^{(x)k}`: each component is
//! first transformed to stay positive by the one-dimensional `V`, then the
//! ordering is handled by `V^{+,A}`.

use std::sync::Arc;

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::{v_exact, LatticeWalkSpec};
use crate::htransform::table::joint_moves;
use crate::htransform::{estimate_v_mc, EstimateWithError, HFunction, HKind, VTable, VTableConfig};
use crate::stream::{mean_and_std_error, par_trajectories, RandomStream};
use crate::walk::StepDistribution;

/// `V(z) = z - E_z[S(tau^+)]` of the one-dimensional marginal walk, tabulated
/// on `0 < z <= radius` and taken as `z` beyond.
#[derive(Clone, Debug)]
pub struct OneDimV {
    table: VTable,
    /// Per lattice point up to the radius: targets and cumulative
    /// probabilities of the transformed step.
    kernels: Vec<Vec<(i64, f64)>>,
    first: i64,
}

impl OneDimV {
    pub fn build(spec: &LatticeWalkSpec, radius: i64) -> Result<Self> {
        let m = spec.marginal();
        let table = VTable::build(&m, ChamberType::C, VTableConfig { radius, switchover: None, ..VTableConfig::default() })?;
        let first = table.entries().map(|(c, _)| c[0]).min().unwrap_or(1);
        let mut kernels = Vec::new();
        for c in first..=radius {
            kernels.push(Self::kernel_at(&table, c)?);
        }
        Ok(OneDimV { table, kernels, first })
    }

    fn kernel_at(table: &VTable, c: i64) -> Result<Vec<(i64, f64)>> {
        let vc = table.value_at(&[c]);
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (o, p) in table.spec().atoms() {
            let v = table.value_at(&[c + o]);
            if v > 0.0 {
                acc += p.to_f64().unwrap_or(f64::NAN) * v / vc;
                out.push((c + o, acc));
            }
        }
        let total = acc;
        if out.is_empty() {
            return Err(Error::AbsorbingState { point: vec![table.spec().real_coord(c)] });
        }
        for e in out.iter_mut() {
            e.1 /= total;
        }
        Ok(out)
    }

    pub fn spec(&self) -> &LatticeWalkSpec {
        self.table.spec()
    }

    pub fn table(&self) -> &VTable {
        &self.table
    }

    /// `V(z)` for `z > 0` on the lattice.
    pub fn value(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::invalid(format!("V(z) needs z > 0, got {z}")));
        }
        self.table.value(&[z])
    }

    /// `V` at a lattice coordinate, zero off the half-line.
    pub fn value_at(&self, c: i64) -> f64 {
        self.table.value_at(&[c])
    }

    /// `prod_i V(x_i)` at lattice coordinates.
    pub fn product_at(&self, c: &[i64]) -> f64 {
        c.iter().map(|&ci| self.value_at(ci)).product()
    }

    /// One step of the walk transformed to stay positive.
    fn step(&self, c: i64, u: f64) -> Result<i64> {
        let idx = c - self.first;
        let owned;
        let kernel = if idx >= 0 && (idx as usize) < self.kernels.len() {
            &self.kernels[idx as usize]
        } else {
            owned = Self::kernel_at(&self.table, c)?;
            &owned
        };
        let last = kernel.len() - 1;
        Ok(kernel.iter().find(|(_, cum)| u < *cum).unwrap_or(&kernel[last]).0)
    }

    pub fn into_hfunction(self: Arc<Self>) -> HFunction {
        HFunction::new(HKind::OneDimV, ChamberType::C, move |x| {
            if x.len() == 1 && x[0] > 0.0 {
                self.value(x[0]).unwrap_or(f64::NAN)
            } else {
                0.0
            }
        })
    }
}

/// `V(z)` by the one-dimensional DP up to `n_max` steps, through the
/// optional-stopping form `z - E_z[S(tau); tau <= n_max]`.
pub fn one_dim_v_exact(spec: &LatticeWalkSpec, z: f64, n_max: usize) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!("V(z) needs z > 0, got {z}")));
    }
    Ok(v_exact::<f64>(&spec.marginal(), ChamberType::C, &[z], n_max)?.identity_value)
}

/// `V(z)` by simulation of the marginal law.
pub fn one_dim_v_mc(dist: &StepDistribution, z: f64, horizon: usize, samples: u64, seed: u64) -> Result<EstimateWithError> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!("V(z) needs z > 0, got {z}")));
    }
    let d1 = if dist.dim() == 1 { dist.clone() } else { dist.with_dim(1)? };
    estimate_v_mc(&d1, ChamberType::C, &[z], horizon, samples, seed)
}

/// The function whose exit correction defines `V^{+,A}`.
///
/// Under the product of one-dimensional transforms the Vandermonde `h^A` is a
/// strict supermartingale (for the simple walk `E^+_x[h^A(S(1))] = h^A(x) +
/// 1/x_2 - 1/x_1`), so `h^A - E^+[h^A(S(tau^A))]` is not regular. The product
/// `prod_{i<j}(x_j^2 - x_i^2)` is an exact martingale there for the simple
/// walk and vanishes on the same walls, and its correction is regular.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingFunction {
    /// `prod_{i<j}(x_j - x_i)`.
    Vandermonde,
    /// `prod_{i<j}(x_j^2 - x_i^2)`.
    #[default]
    SquareDifferences,
}

impl OrderingFunction {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            OrderingFunction::Vandermonde => ChamberType::A.h(x),
            OrderingFunction::SquareDifferences => {
                let mut p = 1.0;
                for j in 0..x.len() {
                    for i in 0..j {
                        p *= x[j] * x[j] - x[i] * x[i];
                    }
                }
                p
            }
        }
    }
}

/// `V^{+,A}(x) = g(x) - E^+_x[g(S(tau^A)); tau^A <= horizon]` for the
/// ordering function `g`, where the components move independently under the
/// one-dimensional transform.
pub fn estimate_v_plus_a(
    one_dim: &OneDimV,
    ordering: OrderingFunction,
    x: &[f64],
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<EstimateWithError> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if !ChamberType::C.contains(x)? {
        return Err(Error::invalid("V^{+,A} is only defined on the type-C chamber"));
    }
    if x.len() == 1 {
        return Ok(EstimateWithError { value: 1.0, std_error: 0.0, n_samples: samples, truncation_horizon: horizon });
    }
    let spec = one_dim.spec().with_dim(x.len());
    let start = spec.to_lattice(x)?;
    let h_x = ordering.eval(x);
    let results = par_trajectories(seed, samples, |_, s: &mut RandomStream| -> Result<f64> {
        let mut pos = start.clone();
        for _ in 0..horizon {
            for c in pos.iter_mut() {
                *c = one_dim.step(*c, s.uniform())?;
            }
            if !ChamberType::A.holds(&pos) {
                return Ok(h_x - ordering.eval(&spec.to_real(&pos)));
            }
        }
        Ok(h_x)
    });
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let (value, std_error) = mean_and_std_error(&values);
    Ok(EstimateWithError { value, std_error, n_samples: samples, truncation_horizon: horizon })
}

/// `V~^C(x)` with its error, propagated from the `V^{+,A}` estimate (the
/// one-dimensional factors come from a table).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TildeVc {
    pub x: Vec<f64>,
    pub value: f64,
    pub std_error: f64,
    pub v_plus_a: EstimateWithError,
    pub v_product: f64,
}

pub fn tilde_v_c(
    one_dim: &OneDimV,
    ordering: OrderingFunction,
    x: &[f64],
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<TildeVc> {
    let vpa = estimate_v_plus_a(one_dim, ordering, x, horizon, samples, seed)?;
    let c = one_dim.spec().with_dim(x.len()).to_lattice(x)?;
    let prod = one_dim.product_at(&c);
    let value = vpa.value * prod;
    if !(value > 0.0) {
        return Err(Error::NonPositiveTransform { point: x.to_vec(), value });
    }
    Ok(TildeVc { x: x.to_vec(), value, std_error: vpa.std_error * prod, v_plus_a: vpa, v_product: prod })
}

/// Regularity check `E_x[V~^C(S(1)); tau^C > 1] - V~^C(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityCheck {
    pub x: Vec<f64>,
    pub value: f64,
    pub one_step: f64,
    pub residual: f64,
    /// Independent estimates at `x` and each neighbour, combined.
    pub combined_std_error: f64,
}

/// Seeds for independent estimates derived from one master seed.
fn sub_seed(seed: u64, j: u64) -> u64 {
    seed ^ (j + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn tilde_v_c_regularity(
    one_dim: &OneDimV,
    ordering: OrderingFunction,
    x: &[f64],
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<RegularityCheck> {
    let spec = one_dim.spec().with_dim(x.len());
    let start = spec.to_lattice(x)?;
    let here = tilde_v_c(one_dim, ordering, x, horizon, samples, seed)?;
    let mut sum = 0.0;
    let mut var = here.std_error * here.std_error;
    for (j, (xi, p)) in joint_moves(&spec).into_iter().enumerate() {
        let y: Vec<i64> = start.iter().zip(&xi).map(|(a, b)| a + b).collect();
        if !spec.contains(ChamberType::C, &y) {
            continue;
        }
        let p = p.to_f64().unwrap_or(f64::NAN);
        let t = tilde_v_c(one_dim, ordering, &spec.to_real(&y), horizon, samples, sub_seed(seed, j as u64))?;
        sum += p * t.value;
        var += p * p * t.std_error * t.std_error;
    }
    Ok(RegularityCheck {
        x: x.to_vec(),
        value: here.value,
        one_step: sum,
        residual: sum - here.value,
        combined_std_error: var.sqrt(),
    })
}

/// One row of the `V~^C / V^C` comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub x: Vec<f64>,
    pub tilde_v_c: f64,
    pub tilde_std_error: f64,
    pub v_c: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
}

/// `V~^C(x) / V^C(x)` over a grid, with `V^C` from a table. The two functions
/// are different in general; this is data, not a test.
pub fn tilde_v_c_ratio_table(
    one_dim: &OneDimV,
    ordering: OrderingFunction,
    v_c: &VTable,
    points: &[Vec<f64>],
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    points
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let t = tilde_v_c(one_dim, ordering, x, horizon, samples, sub_seed(seed, j as u64))?;
            let v = v_c.value(x)?;
            Ok(RatioRow {
                x: x.clone(),
                tilde_v_c: t.value,
                tilde_std_error: t.std_error,
                v_c: v,
                ratio: t.value / v,
                ratio_std_error: t.std_error / v,
            })
        })
        .collect()
}

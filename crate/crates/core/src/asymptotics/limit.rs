//! The limit law `mu^Z` with density proportional to `h^Z(y) e^{-|y|^2/2}`
//! on the chamber.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::stream::{par_trajectories, KahanSum};

/// Largest dimension handled by nested quadrature.
pub const QUADRATURE_MAX_DIM: usize = 4;
/// Gauss-Legendre nodes per panel.
pub const DEFAULT_QUADRATURE_NODES: usize = 16;
const PANEL_WIDTH: f64 = 3.0;
/// Truncation radius of the outer quadrature variable.
const CUTOFF: f64 = 14.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum NormalizerMethod {
    /// Nested Gauss-Legendre rules following the ordered chamber limits.
    Quadrature { nodes: usize },
    /// Gaussian sampling of `|h|` over `R^k`, divided by the group order.
    MonteCarlo { samples: u64, seed: u64 },
    /// Product of Gamma functions.
    ClosedForm,
}

/// `int_W h(y) e^{-|y|^2/2} dy` with an error estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Normalizer {
    pub chamber: ChamberType,
    pub k: usize,
    pub value: f64,
    /// Quadrature: difference to a coarser rule. Monte Carlo: standard error.
    pub error: f64,
    pub method: NormalizerMethod,
}

/// `int_{R^k} |h(x)| e^{-|x|^2/2} dx` in closed form (Selberg and Mehta
/// integrals).
pub fn full_space_abs_integral_closed_form(chamber: ChamberType, k: usize) -> Result<f64> {
    chamber.check_dim(k)?;
    let kf = k as f64;
    let ln2 = std::f64::consts::LN_2;
    let lg32 = ln_gamma(1.5);
    let s = match chamber {
        ChamberType::C => {
            let mut s = kf * ln2 + kf * (kf - 1.0) / 2.0 * ln2;
            for j in 0..k {
                let j = j as f64;
                s += ln_gamma(1.0 + j / 2.0) + ln_gamma(1.0 + (j + 1.0) / 2.0) - lg32;
            }
            s
        }
        ChamberType::D => {
            let mut s = kf / 2.0 * ln2 + kf * (kf - 1.0) / 2.0 * ln2;
            for j in 0..k {
                let j = j as f64;
                s += ln_gamma(0.5 + j / 2.0) + ln_gamma(1.0 + (j + 1.0) / 2.0) - lg32;
            }
            s
        }
        ChamberType::A => {
            let mut s = kf / 2.0 * (2.0 * std::f64::consts::PI).ln();
            for j in 1..=k {
                s += ln_gamma(1.0 + j as f64 / 2.0) - lg32;
            }
            s
        }
    };
    Ok(s.exp())
}

/// Maps `y` to the representative of its orbit under the reflection group in
/// the closed chamber. `|h|` is invariant along the orbit.
pub fn fold_into_chamber(chamber: ChamberType, y: &mut [f64]) {
    match chamber {
        ChamberType::A => y.sort_by(f64::total_cmp),
        ChamberType::C => {
            for v in y.iter_mut() {
                *v = v.abs();
            }
            y.sort_by(f64::total_cmp);
        }
        ChamberType::D => {
            let negative = y.iter().filter(|v| v.is_sign_negative()).count() % 2 == 1;
            for v in y.iter_mut() {
                *v = v.abs();
            }
            y.sort_by(f64::total_cmp);
            if negative {
                y[0] = -y[0];
            }
        }
    }
}

fn gaussian_weight(y: &[f64]) -> f64 {
    (-y.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()
}

/// `int_W f(y) dy` by nested Gauss-Legendre rules. The outer variable runs to
/// [`CUTOFF`], so `f` must decay like a Gaussian.
fn nested_quadrature<F>(chamber: ChamberType, k: usize, nodes: usize, f: &F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    chamber.check_dim(k)?;
    if k > QUADRATURE_MAX_DIM {
        return Err(Error::TooLarge(format!(
            "nested quadrature is limited to k <= {QUADRATURE_MAX_DIM}, got {k}"
        )));
    }
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::invalid("quadrature needs at least one node"))?;
    let rule = GaussLegendre::new(n);
    let pairs = rule.as_node_weight_pairs();
    let top = k - 1;
    let (lo, hi) = match chamber {
        ChamberType::A => (-CUTOFF, CUTOFF),
        _ => (0.0, CUTOFF),
    };
    let outer: Vec<(f64, f64)> = panel_nodes(pairs, lo, hi).collect();
    let parts: Vec<f64> = outer
        .par_iter()
        .map(|&(t, w)| {
            let mut y = vec![0.0; k];
            y[top] = t;
            w * inner(chamber, pairs, top, &mut y, f)
        })
        .collect();
    Ok(parts.into_iter().collect::<KahanSum>().value())
}

/// Nodes and weights of the composite rule on `(lo, hi)` with panels no wider
/// than [`PANEL_WIDTH`].
fn panel_nodes(pairs: &[(f64, f64)], lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let panels = ((hi - lo) / PANEL_WIDTH).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    (0..panels).flat_map(move |p| {
        let a = lo + width * p as f64;
        let half = width / 2.0;
        pairs.iter().map(move |&(t, w)| (a + half * (t + 1.0), w * half))
    })
}

/// Integrates coordinates `0..level` given `y[level..]`.
fn inner<F: Fn(&[f64]) -> f64>(
    chamber: ChamberType,
    pairs: &[(f64, f64)],
    level: usize,
    y: &mut [f64],
    f: &F,
) -> f64 {
    if level == 0 {
        return f(y);
    }
    let j = level - 1;
    let upper = y[level];
    let lower = match chamber {
        ChamberType::A => -CUTOFF,
        ChamberType::C => 0.0,
        ChamberType::D if j == 0 => -upper,
        ChamberType::D => 0.0,
    };
    if upper <= lower {
        return 0.0;
    }
    let mut s = KahanSum::default();
    for (t, w) in panel_nodes(pairs, lower, upper) {
        y[j] = t;
        s.add(w * inner(chamber, pairs, j, y, f));
    }
    s.value()
}

/// The normalised measure `mu^Z`.
#[derive(Clone, Debug, Serialize)]
pub struct LimitMeasure {
    pub chamber: ChamberType,
    pub k: usize,
    pub normalizer: Normalizer,
}

impl LimitMeasure {
    pub fn new(chamber: ChamberType, k: usize, method: NormalizerMethod) -> Result<Self> {
        let normalizer = Self::normalizer_by(chamber, k, method)?;
        if !(normalizer.value > 0.0) {
            return Err(Error::NoConvergence(format!("normalizer {} is not positive", normalizer.value)));
        }
        Ok(LimitMeasure { chamber, k, normalizer })
    }

    /// Computes `int_W h e^{-|y|^2/2}` by the given method.
    pub fn normalizer_by(chamber: ChamberType, k: usize, method: NormalizerMethod) -> Result<Normalizer> {
        chamber.check_dim(k)?;
        let (value, error) = match method {
            NormalizerMethod::ClosedForm => {
                (full_space_abs_integral_closed_form(chamber, k)? / chamber.group_order(k), 0.0)
            }
            NormalizerMethod::Quadrature { nodes } => {
                let g = |y: &[f64]| chamber.h(y) * gaussian_weight(y);
                let fine = nested_quadrature(chamber, k, nodes, &g)?;
                let coarse = nested_quadrature(chamber, k, (3 * nodes / 4).max(1), &g)?;
                (fine, (fine - coarse).abs())
            }
            NormalizerMethod::MonteCarlo { samples, seed } => {
                let (m, se) = full_space_abs_mc(chamber, k, samples, seed)?;
                let c = (2.0 * std::f64::consts::PI).powf(k as f64 / 2.0) / chamber.group_order(k);
                (m * c, se * c)
            }
        };
        Ok(Normalizer { chamber, k, value, error, method })
    }

    /// Monte Carlo estimate of `int_W h e^{-|y|^2/2}` using only samples that
    /// fall in the chamber, for comparison with the folded estimator.
    pub fn normalizer_mc_restricted(chamber: ChamberType, k: usize, samples: u64, seed: u64) -> Result<(f64, f64)> {
        chamber.check_dim(k)?;
        let values = par_trajectories(seed, samples, |_, s| {
            let y: Vec<f64> = (0..k).map(|_| StandardNormal.sample(s)).collect();
            if chamber.holds(&y) {
                chamber.h(&y)
            } else {
                0.0
            }
        });
        let (m, se) = crate::stream::mean_and_std_error(&values);
        let c = (2.0 * std::f64::consts::PI).powf(k as f64 / 2.0);
        Ok((m * c, se * c))
    }

    /// Density of `mu^Z` at `y` (zero outside the chamber).
    pub fn density(&self, y: &[f64]) -> f64 {
        if y.len() != self.k || !self.chamber.holds(y) {
            return 0.0;
        }
        self.chamber.h(y) * gaussian_weight(y) / self.normalizer.value
    }

    /// `int_W f(y) dy` by nested quadrature (`k <= 4`).
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Result<f64> {
        self.integrate_with_nodes(DEFAULT_QUADRATURE_NODES, f)
    }

    pub fn integrate_with_nodes<F: Fn(&[f64]) -> f64 + Sync>(&self, nodes: usize, f: F) -> Result<f64> {
        nested_quadrature(self.chamber, self.k, nodes, &f)
    }

    /// `E_mu[f]` by quadrature (`k <= 4`).
    pub fn expect<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Result<f64> {
        let (z, n) = (self.chamber, self.normalizer.value);
        self.integrate(|y| f(y) * z.h(y) * gaussian_weight(y) / n)
    }

    /// `E_mu[f]` and its standard error by folding Gaussian samples into the
    /// chamber and weighting with `|h|` (ratio estimator).
    pub fn expect_mc<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F, samples: u64, seed: u64) -> Result<(f64, f64)> {
        if samples < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let (z, k) = (self.chamber, self.k);
        let pairs = par_trajectories(seed, samples, |_, s| {
            let mut y: Vec<f64> = (0..k).map(|_| StandardNormal.sample(s)).collect();
            let w = z.h(&y).abs();
            fold_into_chamber(z, &mut y);
            (w * f(&y), w)
        });
        let n = samples as f64;
        let a = pairs.iter().map(|p| p.0).collect::<KahanSum>().value() / n;
        let b = pairs.iter().map(|p| p.1).collect::<KahanSum>().value() / n;
        let r = a / b;
        let var = pairs.iter().map(|p| (p.0 - r * p.1).powi(2)).collect::<KahanSum>().value() / (n - 1.0);
        Ok((r, (var / n).sqrt() / b))
    }

    /// `E_mu[prod_i y_i^{e_i}]` for each exponent vector.
    pub fn moments(&self, orders: &[Vec<u32>]) -> Result<Vec<f64>> {
        orders
            .iter()
            .map(|e| {
                if e.len() != self.k {
                    return Err(Error::invalid("exponent vector has the wrong dimension"));
                }
                self.expect(|y| y.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product())
            })
            .collect()
    }

    /// `E_mu[|y|^2]`, which equals `alpha + k`.
    pub fn mean_square_norm(&self) -> Result<f64> {
        self.expect(|y| y.iter().map(|v| v * v).sum())
    }
}

/// Mean and standard error of `|h(Y)|` for standard Gaussian `Y`.
fn full_space_abs_mc(chamber: ChamberType, k: usize, samples: u64, seed: u64) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let values = par_trajectories(seed, samples, |_, s| {
        let y: Vec<f64> = (0..k).map(|_| StandardNormal.sample(s)).collect();
        chamber.h(&y).abs()
    });
    Ok(crate::stream::mean_and_std_error(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use ChamberType::*;

    const Q: NormalizerMethod = NormalizerMethod::Quadrature { nodes: 16 };

    #[test]
    fn one_dim_normalizer_and_moments() {
        let mu = LimitMeasure::new(C, 1, Q).unwrap();
        assert!((mu.normalizer.value - 1.0).abs() < 1e-12);
        let m = mu.moments(&[vec![1], vec![2]]).unwrap();
        assert!((m[0] - (PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((m[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn d2_normalizer_by_polar_coordinates() {
        // radial part int r^3 e^{-r^2/2} = 2, angular part 1
        let n = LimitMeasure::normalizer_by(D, 2, Q).unwrap();
        assert!((n.value - 2.0).abs() < 1e-12, "{}", n.value);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for (z, k) in [(C, 1), (C, 2), (C, 3), (C, 4), (D, 2), (D, 3), (D, 4), (A, 2), (A, 3), (A, 4)] {
            let q = LimitMeasure::normalizer_by(z, k, NormalizerMethod::Quadrature { nodes: 12 }).unwrap();
            let c = LimitMeasure::normalizer_by(z, k, NormalizerMethod::ClosedForm).unwrap();
            assert!((q.value / c.value - 1.0).abs() < 1e-9, "{z} {k}: {} vs {}", q.value, c.value);
            assert!(q.error < 1e-6 * q.value);
        }
    }

    #[test]
    fn mean_square_norm_is_alpha_plus_k() {
        for (z, k) in [(C, 1), (C, 2), (C, 3), (D, 2), (D, 3), (A, 3)] {
            let mu = LimitMeasure::new(z, k, Q).unwrap();
            let expected = (z.degree(k) + k) as f64;
            let got = mu.mean_square_norm().unwrap();
            assert!((got - expected).abs() < 1e-9, "{z} {k}: {got}");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        for (z, k) in [(C, 2), (D, 2), (C, 3), (D, 3)] {
            let q = LimitMeasure::normalizer_by(z, k, Q).unwrap();
            let m = LimitMeasure::normalizer_by(z, k, NormalizerMethod::MonteCarlo { samples: 200_000, seed: 1 })
                .unwrap();
            let (r, rse) = LimitMeasure::normalizer_mc_restricted(z, k, 200_000, 4).unwrap();
            assert!((q.value - m.value).abs() < 3.0 * m.error, "{z} {k}: {} vs {} ± {}", q.value, m.value, m.error);
            assert!((q.value - r).abs() < 3.0 * rse, "{z} {k} restricted");
        }
    }

    #[test]
    fn folded_expectation() {
        let mu = LimitMeasure::new(C, 2, Q).unwrap();
        let (v, se) = mu.expect_mc(|y| y[0] * y[0] + y[1] * y[1], 100_000, 9).unwrap();
        assert!((v - 6.0).abs() < 3.0 * se, "{v} {se}");
    }

    #[test]
    fn folding_lands_in_closed_chamber() {
        let mut y = [0.3, -2.0, 1.0];
        fold_into_chamber(D, &mut y);
        assert_eq!(y, [-0.3, 1.0, 2.0]);
        let mut y = [0.3, -2.0, -1.0];
        fold_into_chamber(D, &mut y);
        assert_eq!(y, [0.3, 1.0, 2.0]);
        let mut y = [0.3, -2.0, 1.0];
        fold_into_chamber(C, &mut y);
        assert_eq!(y, [0.3, 1.0, 2.0]);
    }
}

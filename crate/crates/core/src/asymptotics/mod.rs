//! Exit-time constants, Brownian tail formulas, the limit law of the
//! conditioned walk and power-law fits of survival curves.

mod fit;
mod limit;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

pub use fit::{even_only, tail_fit, tail_fit_upper_half, tail_fit_window, TailFit};
pub use limit::{
    fold_into_chamber, full_space_abs_integral_closed_form, LimitMeasure, Normalizer, NormalizerMethod,
    DEFAULT_QUADRATURE_NODES, QUADRATURE_MAX_DIM,
};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};

/// Decay exponent `alpha`: `P(tau > n)` falls like `n^(-alpha/2)`.
pub fn alpha(chamber: ChamberType, k: usize) -> Result<usize> {
    chamber.check_dim(k)?;
    Ok(chamber.degree(k))
}

/// `ln` of the type-D constant, accumulated term by term.
fn ln_kappa_d(k: usize) -> f64 {
    let kf = k as f64;
    let mut s = (3.0 * kf * kf - 3.0 * kf + 2.0) / 2.0 * std::f64::consts::LN_2
        - kf * std::f64::consts::PI.ln()
        - ln_gamma(kf + 1.0);
    for j in 1..=k {
        for i in 1..j {
            let (a, b) = ((2 * j - 1) as f64, (2 * i - 1) as f64);
            s -= (a * a - b * b).ln();
        }
    }
    for i in 1..=k {
        let fi = i as f64;
        s += ln_gamma(1.0 + fi / 2.0) + ln_gamma((1.0 + fi) / 2.0);
    }
    s
}

/// Tail constant `kappa` in `P(tau > n) ~ kappa V(x) n^(-alpha/2)`.
///
/// Type A is not covered: no closed form is available for it.
pub fn kappa(chamber: ChamberType, k: usize) -> Result<f64> {
    chamber.check_dim(k)?;
    match chamber {
        ChamberType::D => Ok(ln_kappa_d(k).exp()),
        ChamberType::C => {
            let kf = k as f64;
            let mut s = ln_kappa_d(k) + (3.0 * kf - 2.0) / 2.0 * std::f64::consts::LN_2;
            for i in 1..=k {
                s -= ((2 * k + 1 - 2 * i) as f64).ln();
            }
            Ok(s.exp())
        }
        ChamberType::A => Err(Error::Unsupported("no closed-form tail constant for type A".into())),
    }
}

/// Density constant `K = |G| kappa / int_{R^k} |h| e^{-|x|^2/2} dx`, with the
/// integral from its closed form.
pub fn k_constant(chamber: ChamberType, k: usize) -> Result<f64> {
    let full = full_space_abs_integral_closed_form(chamber, k)?;
    Ok(chamber.group_order(k) * kappa(chamber, k)? / full)
}

/// As [`k_constant`] but with the denominator from a numerical normalizer.
pub fn k_constant_with(normalizer: &Normalizer) -> Result<f64> {
    Ok(kappa(normalizer.chamber, normalizer.k)? / normalizer.value)
}

/// Asymptotic Brownian survival `kappa h(y) t^(-alpha/2)`.
pub fn bm_tail(chamber: ChamberType, y: &[f64], t: f64) -> Result<f64> {
    check_point_and_time(chamber, y, t)?;
    let a = alpha(chamber, y.len())? as f64;
    Ok(kappa(chamber, y.len())? * chamber.h(y) * t.powf(-a / 2.0))
}

/// Asymptotic killed Brownian density
/// `K t^(-k/2) e^(-|z|^2/(2t)) h(y) h(z) t^(-alpha)`.
pub fn bm_density_asym(chamber: ChamberType, y: &[f64], z: &[f64], t: f64) -> Result<f64> {
    check_point_and_time(chamber, y, t)?;
    if z.len() != y.len() {
        return Err(Error::invalid("y and z have different dimensions"));
    }
    if !chamber.contains(z)? {
        return Ok(0.0);
    }
    let k = y.len();
    let a = alpha(chamber, k)? as f64;
    let z2: f64 = z.iter().map(|v| v * v).sum();
    Ok(k_constant(chamber, k)?
        * t.powf(-(k as f64) / 2.0 - a)
        * (-z2 / (2.0 * t)).exp()
        * chamber.h(y)
        * chamber.h(z))
}

fn check_point_and_time(chamber: ChamberType, y: &[f64], t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time must be positive, got {t}")));
    }
    if !chamber.contains(y)? {
        return Err(Error::invalid("starting point is outside the chamber"));
    }
    Ok(())
}

/// One row of the constants table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsRow {
    pub chamber: ChamberType,
    pub k: usize,
    pub alpha: usize,
    pub kappa: f64,
    #[serde(rename = "K")]
    pub k_constant: f64,
}

pub fn constants_row(chamber: ChamberType, k: usize) -> Result<ConstantsRow> {
    Ok(ConstantsRow {
        chamber,
        k,
        alpha: alpha(chamber, k)?,
        kappa: kappa(chamber, k)?,
        k_constant: k_constant(chamber, k)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use ChamberType::*;

    #[test]
    fn exponents() {
        assert_eq!(alpha(C, 2).unwrap(), 4);
        assert_eq!(alpha(D, 2).unwrap(), 2);
        assert_eq!(alpha(C, 1).unwrap(), 1);
        assert!(alpha(D, 1).is_err());
        for k in 1..=8 {
            assert_eq!(alpha(C, k).unwrap(), k * k);
        }
    }

    #[test]
    fn golden_kappas() {
        assert!((kappa(C, 1).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((kappa(D, 2).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-12);
        assert!((kappa(C, 2).unwrap() - 1.0 / (3.0 * PI)).abs() < 1e-12);
        assert!(kappa(A, 3).is_err());
    }

    /// Direct evaluation of the product formula without logarithms.
    fn kappa_d_direct(k: usize) -> f64 {
        let g = |x: f64| statrs::function::gamma::gamma(x);
        let mut v = 2f64.powf((3 * k * k - 3 * k + 2) as f64 / 2.0) / (PI.powi(k as i32) * g(k as f64 + 1.0));
        for j in 1..=k {
            for i in 1..j {
                v /= ((2 * j - 1) * (2 * j - 1) - (2 * i - 1) * (2 * i - 1)) as f64;
            }
            v *= g(1.0 + j as f64 / 2.0) * g((1.0 + j as f64) / 2.0);
        }
        v
    }

    #[test]
    fn log_domain_matches_direct_products() {
        for k in 2..=8 {
            let d = kappa(D, k).unwrap();
            assert!((d / kappa_d_direct(k) - 1.0).abs() < 1e-12, "k={k}");
            let mut c = kappa_d_direct(k) * 2f64.powf((3 * k - 2) as f64 / 2.0);
            for i in 1..=k {
                c /= (2 * k + 1 - 2 * i) as f64;
            }
            assert!((kappa(C, k).unwrap() / c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_positive() {
        for k in 1..=8 {
            assert!(kappa(C, k).unwrap() > 0.0 && k_constant(C, k).unwrap() > 0.0);
            if k >= 2 {
                assert!(kappa(D, k).unwrap() > 0.0 && k_constant(D, k).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn k_constant_one_dim() {
        assert!((k_constant(C, 1).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        // numerator |G| kappa for D, k = 2 is 1/pi
        let full = full_space_abs_integral_closed_form(D, 2).unwrap();
        assert!((k_constant(D, 2).unwrap() * full - 1.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn brownian_tail() {
        assert!((bm_tail(C, &[1.0], 1.0).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        let y = [0.5, 1.7];
        for z in [C, D] {
            let a = bm_tail(z, &y, 10.0).unwrap();
            let b = bm_tail(z, &y, 30.0).unwrap();
            let al = alpha(z, 2).unwrap() as f64;
            assert!((b / a - 3f64.powf(-al / 2.0)).abs() < 1e-12);
        }
        assert!(bm_tail(C, &[-1.0], 1.0).is_err());
        assert!(bm_tail(C, &[1.0], 0.0).is_err());
    }

    #[test]
    fn density_on_boundary_vanishes() {
        assert_eq!(bm_density_asym(C, &[1.0, 2.0], &[0.0, 2.0], 5.0).unwrap(), 0.0);
        assert_eq!(bm_density_asym(D, &[0.0, 2.0], &[1.0, 1.0], 5.0).unwrap(), 0.0);
    }

    #[test]
    fn density_integrates_to_tail() {
        // z = sqrt(t) u turns the integral into K N_W h(y) t^(-alpha/2)
        for (z, k) in [(C, 1), (C, 2), (D, 2), (C, 3)] {
            let mu = LimitMeasure::new(z, k, NormalizerMethod::Quadrature { nodes: 16 }).unwrap();
            let t: f64 = 1.0e4;
            let y: Vec<f64> = (1..=k).map(|i| i as f64).collect();
            let st = t.sqrt();
            let integral = mu
                .integrate(|u| {
                    let zz: Vec<f64> = u.iter().map(|v| v * st).collect();
                    bm_density_asym(z, &y, &zz, t).unwrap() * st.powi(k as i32)
                })
                .unwrap();
            let tail = bm_tail(z, &y, t).unwrap();
            assert!((integral / tail - 1.0).abs() < 1e-8, "{z} {k}: {integral} vs {tail}");
        }
    }

    #[test]
    fn table_row_serialises() {
        let row = constants_row(D, 2).unwrap();
        let s = serde_json::to_string(&row).unwrap();
        assert!(s.contains("\"K\":") && s.contains("\"chamber\":\"D\""));
    }
}

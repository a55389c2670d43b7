//! Log-log regression of survival curves.

use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares fit `log P = log(prefactor) + slope log n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub n_range: (u64, u64),
}

/// Fits every point of `curve`. Needs at least 10 points, increasing `n` and
/// positive `P`.
pub fn tail_fit(curve: &[(u64, f64)]) -> Result<TailFit> {
    if curve.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 points, got {}", curve.len())));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) || curve[0].0 == 0 {
        return Err(Error::invalid("n must be positive and strictly increasing"));
    }
    if let Some(&(n, p)) = curve.iter().find(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("P({n}) = {p} is not positive")));
    }
    let xs: Vec<f64> = curve.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = curve.iter().map(|(_, p)| p.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(TailFit {
        slope,
        prefactor: intercept.exp(),
        r_squared,
        n_range: (curve[0].0, curve[curve.len() - 1].0),
    })
}

/// Fits the points with `n_min <= n <= n_max`.
pub fn tail_fit_window(curve: &[(u64, f64)], n_min: u64, n_max: u64) -> Result<TailFit> {
    let w: Vec<(u64, f64)> = curve.iter().copied().filter(|(n, _)| (n_min..=n_max).contains(n)).collect();
    tail_fit(&w)
}

/// Fits the upper half of the curve in `log n`.
pub fn tail_fit_upper_half(curve: &[(u64, f64)]) -> Result<TailFit> {
    let (first, last) = match (curve.first(), curve.last()) {
        (Some(a), Some(b)) => (a.0.max(1), b.0),
        _ => return Err(Error::invalid("empty curve")),
    };
    let mid = ((first as f64) * (last as f64)).sqrt().ceil() as u64;
    tail_fit_window(curve, mid, last)
}

/// Keeps even `n`, removing the period-two oscillation of `±1` walks.
pub fn even_only(curve: &[(u64, f64)]) -> Vec<(u64, f64)> {
    curve.iter().copied().filter(|(n, _)| n % 2 == 0).collect()
}

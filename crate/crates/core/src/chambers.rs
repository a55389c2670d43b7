//! Weyl chambers of type A, C and D and their réduite functions.
//!
//! The chambers are open cones in `R^k`:
//!
//! ```text
//! W^A = { x_1 < x_2 < ... < x_k }
//! W^C = { 0 < x_1 < x_2 < ... < x_k }
//! W^D = { |x_1| < x_2 < ... < x_k }
//! ```
//!
//! Each carries a polynomial `h^Z` that is positive inside the chamber and
//! vanishes on its walls. `h^A` is the Vandermonde product,
//! `h^D(x) = prod_{i<j} (x_j^2 - x_i^2)` and `h^C(x) = h^D(x) prod_i x_i`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Float, Signed};
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// The three chamber families handled by the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChamberType {
    A,
    C,
    D,
}

impl ChamberType {
    pub const ALL: [ChamberType; 3] = [ChamberType::A, ChamberType::C, ChamberType::D];

    /// Exponent offset in the determinant form: 1 for C, 0 for D.
    pub fn gamma(self) -> Option<u32> {
        match self {
            ChamberType::A => None,
            ChamberType::C => Some(1),
            ChamberType::D => Some(0),
        }
    }

    /// Smallest dimension for which the chamber is a proper constraint.
    pub fn min_dim(self) -> usize {
        match self {
            ChamberType::A | ChamberType::C => 1,
            ChamberType::D => 2,
        }
    }

    pub fn check_dim(self, k: usize) -> Result<()> {
        if k < self.min_dim() {
            return Err(Error::invalid(format!(
                "chamber {self} needs dimension k >= {}, got {k}",
                self.min_dim()
            )));
        }
        Ok(())
    }

    /// Total degree of the homogeneous polynomial `h^Z` in dimension `k`.
    pub fn degree(self, k: usize) -> usize {
        match self {
            ChamberType::A => k * k.saturating_sub(1) / 2,
            ChamberType::C => k * k,
            ChamberType::D => k * k.saturating_sub(1),
        }
    }

    /// Number of copies of the chamber that tile `R^k` under the reflection group.
    pub fn group_order(self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        match self {
            ChamberType::A => fact,
            ChamberType::C => 2f64.powi(k as i32) * fact,
            ChamberType::D => 2f64.powi(k as i32 - 1) * fact,
        }
    }

    /// Membership in the open chamber.
    pub fn contains(self, x: &[f64]) -> Result<bool> {
        if x.is_empty() {
            return Err(Error::invalid("point has dimension 0"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point has non-finite coordinates"));
        }
        self.check_dim(x.len())?;
        Ok(self.holds(x))
    }

    /// Unchecked membership test, generic over the coordinate type.
    ///
    /// For D with `k = 1` this degenerates to `true`, matching the empty
    /// product `h^D = 1`.
    pub fn holds<T: Signed + Copy + PartialOrd>(self, x: &[T]) -> bool {
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        match self {
            ChamberType::A => true,
            ChamberType::C => x.first().is_none_or(|v| *v > T::zero()),
            ChamberType::D => x.len() < 2 || x[0].abs() < x[1],
        }
    }

    /// `h^Z(x)` in product form.
    pub fn h(self, x: &[f64]) -> f64 {
        let k = x.len();
        let mut p = 1.0;
        for j in 1..k {
            for i in 0..j {
                p *= match self {
                    ChamberType::A => x[j] - x[i],
                    _ => (x[j] - x[i]) * (x[j] + x[i]),
                };
            }
        }
        if self == ChamberType::C {
            p *= x.iter().product::<f64>();
        }
        p
    }

    /// `h^Z(x)` for integer points, exactly.
    pub fn h_exact(self, x: &[i64]) -> BigInt {
        let k = x.len();
        let mut p = BigInt::from(1);
        for j in 1..k {
            for i in 0..j {
                let (a, b) = (x[j] as i128, x[i] as i128);
                p *= match self {
                    ChamberType::A => BigInt::from(a - b),
                    _ => BigInt::from(a - b) * BigInt::from(a + b),
                };
            }
        }
        if self == ChamberType::C {
            for &v in x {
                p *= v;
            }
        }
        p
    }

    /// Sign and log-magnitude of `h^Z(x)`, for dimensions where the plain
    /// product over- or underflows.
    pub fn h_signed_log(self, x: &[f64]) -> SignedLog {
        let mut acc = SignedLog::ONE;
        let k = x.len();
        for j in 1..k {
            for i in 0..j {
                acc.mul(x[j] - x[i]);
                if self != ChamberType::A {
                    acc.mul(x[j] + x[i]);
                }
            }
        }
        if self == ChamberType::C {
            for &v in x {
                acc.mul(v);
            }
        }
        acc
    }

    /// `h^Z(x)` as the determinant `det[x_j^(2i-2+gamma)]`, by partial-pivot
    /// LU. Dimensions `k >= 8` run the elimination in double-double.
    pub fn h_det(self, x: &[f64]) -> Result<f64> {
        let gamma = self.gamma().ok_or_else(|| {
            Error::Unsupported("determinant form is only provided for C and D".into())
        })?;
        if x.is_empty() {
            return Err(Error::invalid("point has dimension 0"));
        }
        let k = x.len();
        if k >= 8 {
            let m: Vec<TwoFloat> = power_matrix(x, gamma)
                .into_iter()
                .map(TwoFloat::from)
                .collect();
            Ok(lu_det(m, k).hi())
        } else {
            Ok(lu_det(power_matrix(x, gamma), k))
        }
    }

    /// Smoothed majorant `h_t^Z`, strictly positive for `t > 0`.
    pub fn h_smoothed(self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("smoothing parameter must be > 0, got {t}")));
        }
        let k = x.len();
        let mut p = 1.0;
        for j in 1..k {
            for i in 0..j {
                p *= t + (x[j] - x[i]).abs();
                if self != ChamberType::A {
                    p *= t + (x[j] + x[i]).abs();
                }
            }
        }
        if self == ChamberType::C {
            p *= x.iter().map(|v| t + v.abs()).product::<f64>();
        }
        Ok(p)
    }

    /// Whether all gaps that define the chamber exceed `n^(1/2 - eps)`.
    pub fn in_auxiliary(self, n: u64, eps: f64, x: &[f64]) -> Result<bool> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::invalid(format!("eps must lie in (0, 1/2), got {eps}")));
        }
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        let thr = auxiliary_threshold(n, eps);
        let k = x.len();
        for j in 1..k {
            for i in 0..j {
                if (x[j] - x[i]).abs() <= thr {
                    return Ok(false);
                }
                if self != ChamberType::A && (x[j] + x[i]).abs() <= thr {
                    return Ok(false);
                }
            }
        }
        if self == ChamberType::C && x.iter().any(|v| v.abs() <= thr) {
            return Ok(false);
        }
        Ok(true)
    }

    /// Euclidean distance from an interior point to the chamber boundary,
    /// i.e. the smallest distance to a wall hyperplane.
    pub fn boundary_distance(self, x: &[f64]) -> f64 {
        let s = std::f64::consts::SQRT_2;
        let mut d = x
            .windows(2)
            .map(|w| (w[1] - w[0]) / s)
            .fold(f64::INFINITY, f64::min);
        match self {
            ChamberType::A => {}
            ChamberType::C => d = d.min(x[0]),
            ChamberType::D => {
                if x.len() >= 2 {
                    d = d.min((x[0] + x[1]) / s);
                }
            }
        }
        d
    }
}

/// `n^(1/2 - eps)`, the wall distance used by the auxiliary chambers.
pub fn auxiliary_threshold(n: u64, eps: f64) -> f64 {
    (n as f64).powf(0.5 - eps)
}

fn power_matrix(x: &[f64], gamma: u32) -> Vec<f64> {
    let k = x.len();
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        for (j, &xj) in x.iter().enumerate() {
            m[i * k + j] = xj.powi((2 * i) as i32 + gamma as i32);
        }
    }
    m
}

fn lu_det<T: Float>(mut m: Vec<T>, k: usize) -> T {
    let mut det = T::one();
    for c in 0..k {
        let pivot = (c..k)
            .max_by(|&a, &b| {
                m[a * k + c]
                    .abs()
                    .partial_cmp(&m[b * k + c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(c);
        if m[pivot * k + c] == T::zero() {
            return T::zero();
        }
        if pivot != c {
            for j in 0..k {
                m.swap(c * k + j, pivot * k + j);
            }
            det = -det;
        }
        let p = m[c * k + c];
        det = det * p;
        for r in c + 1..k {
            let f = m[r * k + c] / p;
            if f == T::zero() {
                continue;
            }
            for j in c..k {
                let v = m[c * k + j];
                m[r * k + j] = m[r * k + j] - f * v;
            }
        }
    }
    det
}

/// A real number stored as sign and natural log of its magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    pub sign: i8,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ONE: SignedLog = SignedLog { sign: 1, ln_abs: 0.0 };

    fn mul(&mut self, v: f64) {
        if v == 0.0 {
            self.sign = 0;
            self.ln_abs = f64::NEG_INFINITY;
        } else if self.sign != 0 {
            if v < 0.0 {
                self.sign = -self.sign;
            }
            self.ln_abs += v.abs().ln();
        }
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * self.ln_abs.exp()
    }
}

impl fmt::Display for ChamberType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChamberType::A => "A",
            ChamberType::C => "C",
            ChamberType::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for ChamberType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ChamberType::A),
            "C" | "c" => Ok(ChamberType::C),
            "D" | "d" => Ok(ChamberType::D),
            other => Err(Error::invalid(format!("unknown chamber {other:?}; expected A, C or D"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ChamberType::*;

    #[test]
    fn gamma_values() {
        assert_eq!(C.gamma(), Some(1));
        assert_eq!(D.gamma(), Some(0));
        assert_eq!(A.gamma(), None);
    }

    #[test]
    fn contains_examples() {
        assert!(C.contains(&[1.0, 2.0]).unwrap());
        assert!(!C.contains(&[0.0, 2.0]).unwrap());
        assert!(!D.contains(&[-1.5, 1.0]).unwrap());
        assert!(D.contains(&[-0.5, 1.0]).unwrap());
        assert!(A.contains(&[-3.0, 1.0]).unwrap());
        assert!(C.contains(&[]).is_err());
        assert!(D.contains(&[1.0]).is_err());
    }

    #[test]
    fn product_form_examples() {
        assert_eq!(C.h(&[1.0, 2.0]), 6.0);
        assert_eq!(D.h(&[1.0, 2.0]), 3.0);
        assert_eq!(D.h(&[4.5, 4.5]), 0.0);
        assert_eq!(C.h(&[1.0, 2.0, 3.0]), 720.0);
        assert_eq!(A.h(&[1.0, 2.0, 4.0]), 6.0);
        assert_eq!(C.h_exact(&[1, 2, 3]), BigInt::from(720));
    }

    #[test]
    fn determinant_form_examples() {
        assert!((C.h_det(&[1.0, 2.0]).unwrap() - 6.0).abs() < 1e-12);
        assert!((D.h_det(&[1.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(D.h_det(&[2.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(A.h_det(&[1.0, 2.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn determinant_form_in_double_double() {
        let x: Vec<f64> = (1..=8).map(|i| 0.7 * i as f64 - 0.2).collect();
        for z in [C, D] {
            let det = z.h_det(&x).unwrap();
            let prod = z.h(&x);
            assert!((det - prod).abs() <= 1e-9 * prod.abs(), "{z}: {det} vs {prod}");
        }
    }

    #[test]
    fn smoothed_examples() {
        assert_eq!(D.h_smoothed(2.0, &[1.0, 2.0]).unwrap(), 15.0);
        assert_eq!(C.h_smoothed(2.0, &[1.0, 2.0]).unwrap(), 180.0);
        assert_eq!(C.h_smoothed(3.0, &[0.0, 0.0, 0.0]).unwrap(), 3f64.powi(9));
        assert_eq!(A.h_smoothed(3.0, &[0.0, 0.0, 0.0]).unwrap(), 27.0);
        assert!(C.h_smoothed(0.0, &[1.0]).is_err());
    }

    #[test]
    fn auxiliary_examples() {
        assert!(C.in_auxiliary(16, 0.25, &[3.0, 7.0]).unwrap());
        assert!(!C.in_auxiliary(16, 0.25, &[1.0, 7.0]).unwrap());
        assert!(A.in_auxiliary(1, 0.3, &[0.0, 1.5]).unwrap());
        assert!(!A.in_auxiliary(1, 0.3, &[0.0, 1.0]).unwrap());
        assert!(C.in_auxiliary(16, 0.5, &[3.0, 7.0]).is_err());
        assert!(C.in_auxiliary(16, 0.0, &[3.0, 7.0]).is_err());
    }

    #[test]
    fn signed_log_matches_product() {
        let x = [-0.5, 1.5, 4.0];
        for z in ChamberType::ALL {
            let sl = z.h_signed_log(&x);
            assert!((sl.to_f64() - z.h(&x)).abs() <= 1e-12 * z.h(&x).abs());
        }
        assert_eq!(C.h_signed_log(&[0.0, 1.0]).sign, 0);
    }

    #[test]
    fn parses_chamber_names() {
        assert_eq!("C".parse::<ChamberType>().unwrap(), C);
        assert!("B".parse::<ChamberType>().is_err());
    }

    fn point(max_k: usize) -> impl Strategy<Value = Vec<f64>> {
        (1..=max_k).prop_flat_map(|k| prop::collection::vec(-10.0f64..10.0, k))
    }

    proptest! {
        #[test]
        fn determinant_equals_product(x in point(6)) {
            for z in [C, D] {
                let h = z.h(&x);
                let det = z.h_det(&x).unwrap();
                // the determinant cannot resolve cancellation inside a factor,
                // so compare against the magnitude of the unreduced terms
                let mut scale = 1.0f64;
                for j in 0..x.len() {
                    for i in 0..j {
                        scale *= x[i] * x[i] + x[j] * x[j];
                    }
                    if z == C {
                        scale *= x[j].abs();
                    }
                }
                prop_assert!((det - h).abs() <= 1e-9 * scale.max(1.0), "{} {:?}: {} vs {}", z, x, det, h);
            }
        }

        #[test]
        fn positive_inside(x in point(5)) {
            for z in ChamberType::ALL {
                if x.len() >= z.min_dim() && z.contains(&x).unwrap() {
                    prop_assert!(z.h(&x) > 0.0);
                }
            }
        }

        #[test]
        fn zero_on_walls(mut x in point(5), w in 0usize..5) {
            let k = x.len();
            let w = w % k;
            // put x on one wall
            if w + 1 < k {
                x[w + 1] = x[w];
                for z in ChamberType::ALL {
                    prop_assert_eq!(z.h(&x), 0.0);
                }
            } else {
                x[0] = 0.0;
                prop_assert_eq!(C.h(&x), 0.0);
                if k >= 2 {
                    x[0] = -x[1];
                    prop_assert_eq!(D.h(&x), 0.0);
                }
            }
        }

        #[test]
        fn antisymmetry(x in point(5), i in 0usize..5, j in 0usize..5) {
            let k = x.len();
            let (i, j) = (i % k, j % k);
            prop_assume!(i != j);
            let mut y = x.clone();
            y.swap(i, j);
            for z in ChamberType::ALL {
                let (a, b) = (z.h(&x), z.h(&y));
                prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            let mut flipped = x.clone();
            flipped[0] = -flipped[0];
            prop_assert!((D.h(&flipped) - D.h(&x)).abs() <= 1e-9 * D.h(&x).abs().max(1.0));
            prop_assert!((C.h(&flipped) + C.h(&x)).abs() <= 1e-9 * C.h(&x).abs().max(1.0));
        }

        #[test]
        fn smoothed_dominates(x in point(6)) {
            for z in ChamberType::ALL {
                prop_assert!(z.h(&x).abs() <= z.h_smoothed(2.0, &x).unwrap());
            }
        }

        #[test]
        fn auxiliary_points_are_far_from_walls(x in point(4), n in 1u64..400, eps in 0.01f64..0.49) {
            for z in ChamberType::ALL {
                if x.len() >= z.min_dim() && z.contains(&x).unwrap() && z.in_auxiliary(n, eps, &x).unwrap() {
                    let thr = auxiliary_threshold(n, eps);
                    prop_assert!(z.boundary_distance(&x) > thr / std::f64::consts::SQRT_2);
                }
            }
        }
    }
}

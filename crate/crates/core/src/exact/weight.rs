use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::chambers::ChamberType;
use crate::exact::LatticeWalkSpec;
use crate::stream::KahanSum;
use crate::walk::Rational;

/// Arithmetic used by the lattice dynamic program: exact rationals for
/// golden checks, doubles for long horizons.
pub trait Weight: Clone + Send + Sync + std::fmt::Debug + PartialEq + 'static {
    fn zero_weight() -> Self;
    fn is_zero_weight(&self) -> bool;
    fn from_rational(r: &Rational) -> Self;
    fn from_bigint(v: &BigInt) -> Self;
    fn add_assign(&mut self, v: &Self);
    /// `self += a * b`
    fn add_mul(&mut self, a: &Self, b: &Self);
    fn mul(&self, b: &Self) -> Self;
    fn sub(&self, b: &Self) -> Self;
    fn div(&self, b: &Self) -> Self;
    fn as_f64(&self) -> f64;
    /// Weights this small are dropped from the state (double mode only).
    fn negligible(&self) -> bool {
        false
    }
    /// `h^Z` at a lattice point given in lattice coordinates.
    fn h_at(chamber: ChamberType, spec: &LatticeWalkSpec, coords: &[i64]) -> Self;
    /// Sums in iteration order; doubles use compensated summation.
    fn sum<'a, I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        let mut s = Self::zero_weight();
        for v in iter {
            s.add_assign(v);
        }
        s
    }
}

/// Weights below this are pruned in double mode.
pub const PRUNE_BELOW: f64 = 1e-300;

impl Weight for f64 {
    fn zero_weight() -> Self {
        0.0
    }
    fn is_zero_weight(&self) -> bool {
        *self == 0.0
    }
    fn from_rational(r: &Rational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn from_bigint(v: &BigInt) -> Self {
        v.to_f64().unwrap_or(f64::NAN)
    }
    fn add_assign(&mut self, v: &Self) {
        *self += v;
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn mul(&self, b: &Self) -> Self {
        self * b
    }
    fn sub(&self, b: &Self) -> Self {
        self - b
    }
    fn div(&self, b: &Self) -> Self {
        self / b
    }
    fn as_f64(&self) -> f64 {
        *self
    }
    fn negligible(&self) -> bool {
        self.abs() < PRUNE_BELOW
    }
    fn h_at(chamber: ChamberType, spec: &LatticeWalkSpec, coords: &[i64]) -> Self {
        let mut buf = [0.0f64; 8];
        if coords.len() <= buf.len() {
            for (b, &c) in buf.iter_mut().zip(coords) {
                *b = spec.real_coord(c);
            }
            chamber.h(&buf[..coords.len()])
        } else {
            let v: Vec<f64> = coords.iter().map(|&c| spec.real_coord(c)).collect();
            chamber.h(&v)
        }
    }
    fn sum<'a, I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.copied().collect::<KahanSum>().value()
    }
}

impl Weight for Rational {
    fn zero_weight() -> Self {
        Zero::zero()
    }
    fn is_zero_weight(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_bigint(v: &BigInt) -> Self {
        Rational::from_integer(v.clone())
    }
    fn add_assign(&mut self, v: &Self) {
        *self += v;
    }
    fn add_mul(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn mul(&self, b: &Self) -> Self {
        self * b
    }
    fn sub(&self, b: &Self) -> Self {
        self - b
    }
    fn div(&self, b: &Self) -> Self {
        self / b
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn h_at(chamber: ChamberType, spec: &LatticeWalkSpec, coords: &[i64]) -> Self {
        spec.h_exact(chamber, coords)
    }
}

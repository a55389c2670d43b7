//! Tables of `V^Z` on a window of lattice points, obtained by solving the
//! regularity equations with `V = h^Z` prescribed outside the window.
//!
//! Writing `V = h + w` and using `E[h(x + xi)] = h(x)` on all of `R^k`, the
//! unknown correction solves `w_u - sum_{v in window} p(v - u) w_v = b_u` with
//! `b_u = -sum_{v outside W} p(v - u) h(v)`, computed exactly. For symmetric
//! steps the matrix is symmetric positive definite and conjugate gradients
//! apply.

use std::collections::HashMap;
use std::io::{Read, Write};

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::{LatticeWalkSpec, Weight};
use crate::stream::KahanSum;
use crate::walk::Rational;

/// Window of a [`VTable`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VTableConfig {
    /// Largest `|coordinate|` in lattice units.
    pub radius: i64,
    /// Points with `h_2/h` below this are left to the approximation `V = h`.
    /// `None` keeps every chamber point within the radius.
    pub switchover: Option<f64>,
    /// Target for `max_u |residual_u| / V_u`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for VTableConfig {
    fn default() -> Self {
        VTableConfig { radius: 200, switchover: Some(1.05), tolerance: 1e-13, max_iterations: 200_000 }
    }
}

/// Largest number of box points scanned when building a window.
pub const MAX_BOX_POINTS: f64 = 2e8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VTableDiagnostics {
    pub window_points: usize,
    pub cg_iterations: usize,
    pub refinement_rounds: usize,
    /// `max_u |E_u[V(S(1)); tau > 1] - V(u)| / V(u)` over the window.
    pub max_relative_residual: f64,
    pub min_value: f64,
}

/// `V^Z` on a window of lattice points; `h^Z` elsewhere in the chamber.
#[derive(Clone, Debug)]
pub struct VTable {
    spec: LatticeWalkSpec,
    chamber: ChamberType,
    config: VTableConfig,
    points: Vec<Vec<i64>>,
    values: Vec<f64>,
    index: HashMap<Vec<i64>, usize>,
    diagnostics: VTableDiagnostics,
}

/// Sparse rows `(column, probability)` of the window-restricted kernel.
struct Kernel {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

impl Kernel {
    /// `y = (I - P) x`
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(u, out)| {
            let mut s = x[u];
            for e in self.row_start[u]..self.row_start[u + 1] {
                s -= self.probs[e] * x[self.cols[e]];
            }
            *out = s;
        });
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).collect::<KahanSum>().value()
}

/// Conjugate gradients for `(I - P) x = b` from `x = 0`; stops at relative
/// residual `tol`. Returns the iteration count.
fn conjugate_gradient(kernel: &Kernel, b: &[f64], x: &mut [f64], tol: f64, max_it: usize) -> Result<usize> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(0);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_it {
        kernel.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * b_norm {
            return Ok(it);
        }
        let beta = rr_new / rr;
        p.par_iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    Err(Error::NoConvergence(format!("conjugate gradients did not converge in {max_it} iterations")))
}

impl VTable {
    /// Solves for `V` on the window described by `config`. Needs a symmetric
    /// step law.
    pub fn build(spec: &LatticeWalkSpec, chamber: ChamberType, config: VTableConfig) -> Result<Self> {
        let k = spec.dim();
        chamber.check_dim(k)?;
        if !spec.is_symmetric() {
            return Err(Error::Unsupported("V tables need a symmetric step law".into()));
        }
        if config.radius < 1 {
            return Err(Error::invalid("window radius must be positive"));
        }
        if let Some(s) = config.switchover {
            if !(s >= 1.0) {
                return Err(Error::invalid(format!("switchover must be at least 1, got {s}")));
            }
        }
        let side = (2 * config.radius + 1) as f64;
        if side.powi(k as i32) > MAX_BOX_POINTS {
            return Err(Error::TooLarge(format!("window box of {} points", side.powi(k as i32))));
        }
        let points = window_points(spec, chamber, &config);
        if points.is_empty() {
            return Err(Error::invalid("window contains no chamber points"));
        }
        let index: HashMap<Vec<i64>, usize> = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let moves = joint_moves(spec);

        let rows: Vec<(Vec<(usize, f64)>, f64)> = points
            .par_iter()
            .map(|u| {
                let mut nb = Vec::new();
                let mut exit = Rational::zero();
                let mut v = vec![0i64; k];
                for (xi, p) in &moves {
                    for a in 0..k {
                        v[a] = u[a] + xi[a];
                    }
                    if !spec.contains(chamber, &v) {
                        exit += p * spec.h_exact(chamber, &v);
                    } else if let Some(&j) = index.get(&v) {
                        nb.push((j, p.to_f64().unwrap_or(f64::NAN)));
                    }
                }
                (nb, -exit.to_f64().unwrap_or(f64::NAN))
            })
            .collect();
        let mut kernel = Kernel { row_start: vec![0], cols: Vec::new(), probs: Vec::new() };
        let mut b = Vec::with_capacity(points.len());
        for (nb, rhs) in rows {
            for (j, p) in nb {
                kernel.cols.push(j);
                kernel.probs.push(p);
            }
            kernel.row_start.push(kernel.cols.len());
            b.push(rhs);
        }
        let h: Vec<f64> = points.iter().map(|u| f64::h_at(chamber, spec, u)).collect();

        // iterative refinement: the true residual is formed pointwise, so
        // points with small V are driven to small relative residual too
        let n = points.len();
        let mut w = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut aw = vec![0.0; n];
        let mut iterations = 0;
        let mut rounds = 0;
        let mut worst;
        loop {
            kernel.apply(&w, &mut aw);
            let r: Vec<f64> = b.iter().zip(&aw).map(|(bi, ai)| bi - ai).collect();
            worst = r
                .iter()
                .zip(w.iter().zip(&h))
                .map(|(ri, (wi, hi))| ri.abs() / (wi + hi).abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if worst <= config.tolerance || rounds >= 8 {
                break;
            }
            let left = config.max_iterations.saturating_sub(iterations).max(1);
            iterations += conjugate_gradient(&kernel, &r, &mut d, 1e-10, left)?;
            w.iter_mut().zip(&d).for_each(|(wi, di)| *wi += di);
            rounds += 1;
        }
        let values: Vec<f64> = h.iter().zip(&w).map(|(hi, wi)| hi + wi).collect();
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut table = VTable {
            spec: spec.clone(),
            chamber,
            config,
            points,
            values,
            index,
            diagnostics: VTableDiagnostics {
                window_points: n,
                cg_iterations: iterations,
                refinement_rounds: rounds,
                max_relative_residual: worst,
                min_value,
            },
        };
        if !(min_value > 0.0) {
            let i = table.values.iter().position(|v| !(*v > 0.0)).expect("nonpositive entry");
            return Err(Error::NonPositiveTransform { point: table.spec.to_real(&table.points[i]), value: table.values[i] });
        }
        table.diagnostics.max_relative_residual = table.max_regularity_residual();
        Ok(table)
    }

    pub fn spec(&self) -> &LatticeWalkSpec {
        &self.spec
    }

    pub fn chamber(&self) -> ChamberType {
        self.chamber
    }

    pub fn config(&self) -> &VTableConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> &VTableDiagnostics {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Window points in lattice coordinates with their values.
    pub fn entries(&self) -> impl Iterator<Item = (&[i64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.values.iter().copied())
    }

    pub fn in_window(&self, c: &[i64]) -> bool {
        self.index.contains_key(c)
    }

    /// `V` at a lattice point: the table inside the window, `h` elsewhere in
    /// the chamber, zero outside it.
    pub fn value_at(&self, c: &[i64]) -> f64 {
        if let Some(&i) = self.index.get(c) {
            self.values[i]
        } else if self.spec.contains(self.chamber, c) {
            f64::h_at(self.chamber, &self.spec, c)
        } else {
            0.0
        }
    }

    /// `V` at a real point on the lattice.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_at(&self.spec.to_lattice(x)?))
    }

    /// `|E_u[V(S(1)); tau > 1] - V(u)| / V(u)` at a lattice point.
    pub fn regularity_residual_at(&self, u: &[i64]) -> f64 {
        let k = u.len();
        let mut v = vec![0i64; k];
        let mut s = KahanSum::default();
        for (xi, p) in joint_moves(&self.spec) {
            for a in 0..k {
                v[a] = u[a] + xi[a];
            }
            s.add(p.to_f64().unwrap_or(f64::NAN) * self.value_at(&v));
        }
        let vu = self.value_at(u);
        (s.value() - vu).abs() / vu
    }

    fn max_regularity_residual(&self) -> f64 {
        self.points
            .par_iter()
            .map(|u| self.regularity_residual_at(u))
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// CSV with columns `x1..xk,V` in real coordinates, one row per window
    /// point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.spec.dim();
        let mut header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        header.push("V".into());
        w.write_record(&header).map_err(csv_error)?;
        for (c, v) in self.entries() {
            let mut row: Vec<String> = self.spec.to_real(c).iter().map(|x| x.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`VTable::write_csv`]. Diagnostics are
    /// recomputed; the window is whatever the file lists.
    pub fn read_csv<R: Read>(input: R, spec: &LatticeWalkSpec, chamber: ChamberType) -> Result<Self> {
        let k = spec.dim();
        chamber.check_dim(k)?;
        let mut rdr = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            if rec.len() != k + 1 {
                return Err(Error::invalid(format!("expected {} columns, found {}", k + 1, rec.len())));
            }
            let nums: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad number {f:?}: {e}"))))
                .collect::<Result<_>>()?;
            let c = spec.to_lattice(&nums[..k])?;
            if !spec.contains(chamber, &c) {
                return Err(Error::invalid(format!("table point {:?} is outside the chamber", &nums[..k])));
            }
            points.push(c);
            values.push(nums[k]);
        }
        let index: HashMap<Vec<i64>, usize> = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        if index.len() != points.len() {
            return Err(Error::invalid("table lists a point twice"));
        }
        let radius = points.iter().flat_map(|p| p.iter().map(|c| c.abs())).max().unwrap_or(0);
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut table = VTable {
            spec: spec.clone(),
            chamber,
            config: VTableConfig { radius, switchover: None, ..VTableConfig::default() },
            diagnostics: VTableDiagnostics {
                window_points: points.len(),
                cg_iterations: 0,
                refinement_rounds: 0,
                max_relative_residual: f64::NAN,
                min_value,
            },
            points,
            values,
            index,
        };
        if let Some(i) = table.values.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::NonPositiveTransform { point: spec.to_real(&table.points[i]), value: table.values[i] });
        }
        table.diagnostics.max_relative_residual = table.max_regularity_residual();
        Ok(table)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// Chamber points of the window, in lexicographic order.
fn window_points(spec: &LatticeWalkSpec, chamber: ChamberType, config: &VTableConfig) -> Vec<Vec<i64>> {
    let k = spec.dim();
    let r = config.radius;
    let mut out = Vec::new();
    let mut c = vec![-r; k];
    loop {
        if spec.contains(chamber, &c) {
            let keep = match config.switchover {
                None => true,
                Some(s) => {
                    let x = spec.to_real(&c);
                    let h = chamber.h(&x);
                    chamber.h_smoothed(2.0, &x).map_or(true, |h2| h2 >= s * h)
                }
            };
            if keep {
                out.push(c.clone());
            }
        }
        let mut a = k;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            c[a] += 1;
            if c[a] <= r {
                break;
            }
            c[a] = -r;
        }
    }
}

/// All joint moves of the i.i.d. lattice walk with their probabilities.
pub(crate) fn joint_moves(spec: &LatticeWalkSpec) -> Vec<(Vec<i64>, Rational)> {
    let mut out = vec![(Vec::new(), Rational::from_integer(1.into()))];
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

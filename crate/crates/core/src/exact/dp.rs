//! Layer-by-layer propagation of the killed walk on a dense lattice box.
//!
//! At step `m` coordinate `i` can only take the values
//! `start_i + m * min_offset + stride * j` with `0 <= j <= m * span / stride`,
//! so the state is a dense box indexed by `j`. Parity classes of walks such
//! as the simple ±1 walk are therefore handled without storing dead cells.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::exact::{LatticeWalkSpec, Weight};

/// A joint move: per-axis index shift and its probability.
#[derive(Clone, Debug)]
struct Move<W> {
    shift: Vec<usize>,
    prob: W,
}

/// DP state of the walk killed on leaving a chamber.
#[derive(Clone, Debug)]
pub struct LatticeDp<W: Weight> {
    spec: LatticeWalkSpec,
    chamber: ChamberType,
    start: Vec<i64>,
    step: usize,
    dims: Vec<usize>,
    weights: Vec<W>,
    exit_mass: W,
    exit_h: W,
    dropped: f64,
    moves: Vec<Move<W>>,
    start_outside: bool,
}

impl<W: Weight> LatticeDp<W> {
    /// Starts the walk at lattice coordinates `start`. A start outside the
    /// chamber is allowed: all mass is counted as exited at step 0.
    pub fn new(spec: &LatticeWalkSpec, chamber: ChamberType, start: &[i64]) -> Result<Self> {
        if start.len() != spec.dim() {
            return Err(Error::invalid("start point and lattice walk have different dimensions"));
        }
        chamber.check_dim(spec.dim())?;
        let k = spec.dim();
        let moves = joint_moves::<W>(spec);
        let inside = spec.contains(chamber, start);
        let mut dp = LatticeDp {
            spec: spec.clone(),
            chamber,
            start: start.to_vec(),
            step: 0,
            dims: vec![1; k],
            weights: vec![W::zero_weight()],
            exit_mass: W::zero_weight(),
            exit_h: W::zero_weight(),
            dropped: 0.0,
            moves,
            start_outside: !inside,
        };
        let one = W::from_rational(&crate::walk::ratio(1, 1));
        if inside {
            dp.weights[0] = one;
        } else {
            dp.exit_h = W::h_at(chamber, spec, start);
            dp.exit_mass = one;
        }
        Ok(dp)
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn chamber(&self) -> ChamberType {
        self.chamber
    }

    pub fn spec(&self) -> &LatticeWalkSpec {
        &self.spec
    }

    pub fn start(&self) -> &[i64] {
        &self.start
    }

    pub fn started_outside(&self) -> bool {
        self.start_outside
    }

    /// Lattice coordinate of index `j` on `axis` at the current step.
    fn coord(&self, axis: usize, j: usize) -> i64 {
        self.start[axis] + self.step as i64 * self.spec.min_offset() + self.spec.stride() * j as i64
    }

    /// Advances one step, killing mass that leaves the chamber.
    pub fn advance(&mut self) {
        let k = self.dims.len();
        let grow = (self.spec.span() / self.spec.stride()) as usize;
        let new_dims: Vec<usize> = self.dims.iter().map(|d| d + grow).collect();
        let new_strides = strides(&new_dims);
        let total: usize = new_dims.iter().product();
        let mut next = vec![W::zero_weight(); total];
        let mut exit_mass = W::zero_weight();
        let mut exit_h = W::zero_weight();

        let next_base: Vec<i64> = (0..k)
            .map(|a| self.start[a] + (self.step as i64 + 1) * self.spec.min_offset())
            .collect();
        let stride = self.spec.stride();
        let move_offsets: Vec<usize> = self
            .moves
            .iter()
            .map(|m| m.shift.iter().zip(&new_strides).map(|(s, st)| s * st).sum())
            .collect();

        let mut j = vec![0usize; k];
        let mut target = vec![0i64; k];
        for w in self.weights.iter() {
            if !w.is_zero_weight() {
                let base_idx: usize = j.iter().zip(&new_strides).map(|(a, b)| a * b).sum();
                for (mv, off) in self.moves.iter().zip(&move_offsets) {
                    for a in 0..k {
                        target[a] = next_base[a] + stride * (j[a] + mv.shift[a]) as i64;
                    }
                    if self.spec.contains(self.chamber, &target) {
                        next[base_idx + off].add_mul(w, &mv.prob);
                    } else {
                        let m = w.mul(&mv.prob);
                        exit_h.add_mul(&m, &W::h_at(self.chamber, &self.spec, &target));
                        exit_mass.add_assign(&m);
                    }
                }
            }
            // odometer over the old box, last axis fastest
            for a in (0..k).rev() {
                j[a] += 1;
                if j[a] < self.dims[a] {
                    break;
                }
                j[a] = 0;
            }
        }
        let mut dropped = 0.0;
        for w in next.iter_mut() {
            if !w.is_zero_weight() && w.negligible() {
                dropped += w.as_f64();
                *w = W::zero_weight();
            }
        }
        self.weights = next;
        self.dims = new_dims;
        self.step += 1;
        self.exit_mass.add_assign(&exit_mass);
        self.exit_h.add_assign(&exit_h);
        self.dropped += dropped;
    }

    pub fn advance_to(&mut self, n: usize) {
        while self.step < n {
            self.advance();
        }
    }

    /// `P_x(tau > n)` at the current step.
    pub fn survival(&self) -> W {
        W::sum(self.weights.iter())
    }

    /// `P_x(tau <= n)`, accumulated over exits.
    pub fn exit_mass(&self) -> &W {
        &self.exit_mass
    }

    /// `E_x[h(S(tau)); tau <= n]`.
    pub fn exit_h(&self) -> &W {
        &self.exit_h
    }

    /// Mass pruned so far (double mode).
    pub fn dropped_mass(&self) -> f64 {
        self.dropped
    }

    /// Calls `f` with the lattice coordinates and weight of every surviving cell.
    pub fn for_each_support(&self, mut f: impl FnMut(&[i64], &W)) {
        let k = self.dims.len();
        let mut j = vec![0usize; k];
        let mut c = vec![0i64; k];
        for w in self.weights.iter() {
            if !w.is_zero_weight() {
                for a in 0..k {
                    c[a] = self.coord(a, j[a]);
                }
                f(&c, w);
            }
            for a in (0..k).rev() {
                j[a] += 1;
                if j[a] < self.dims[a] {
                    break;
                }
                j[a] = 0;
            }
        }
    }

    /// `E_x[f(S(n)); tau > n]`.
    pub fn expect(&self, mut f: impl FnMut(&[i64]) -> W) -> W {
        let mut terms = Vec::new();
        self.for_each_support(|c, w| terms.push(w.mul(&f(c))));
        W::sum(terms.iter())
    }

    /// `E_x[h(S(n)); tau > n]`.
    pub fn expect_h(&self) -> W {
        let (z, spec) = (self.chamber, &self.spec);
        self.expect(|c| W::h_at(z, spec, c))
    }

    /// Surviving cells and their unnormalised masses.
    pub fn support(&self) -> Vec<(Vec<i64>, W)> {
        let mut out = Vec::new();
        self.for_each_support(|c, w| out.push((c.to_vec(), w.clone())));
        out
    }
}

impl LatticeDp<f64> {
    /// Writes the state as a JSON header line followed by raw little-endian
    /// weights.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            spec: self.spec.to_doc(),
            chamber: self.chamber,
            start: self.start.clone(),
            step: self.step,
            dims: self.dims.clone(),
            exit_mass: self.exit_mass,
            exit_h: self.exit_h,
            dropped: self.dropped,
            start_outside: self.start_outside,
        };
        let tmp = path.with_extension("partial");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut out, &header)?;
            out.write_all(b"\n")?;
            for w in &self.weights {
                out.write_all(&w.to_le_bytes())?;
            }
            out.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(&line)?;
        let spec = header.spec.build()?;
        let total: usize = header.dims.iter().product();
        let mut bytes = vec![0u8; total * 8];
        input.read_exact(&mut bytes)?;
        let weights = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let moves = joint_moves::<f64>(&spec);
        Ok(LatticeDp {
            spec,
            chamber: header.chamber,
            start: header.start,
            step: header.step,
            dims: header.dims,
            weights,
            exit_mass: header.exit_mass,
            exit_h: header.exit_h,
            dropped: header.dropped,
            moves,
            start_outside: header.start_outside,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    spec: crate::exact::LatticeSpecDoc,
    chamber: ChamberType,
    start: Vec<i64>,
    step: usize,
    dims: Vec<usize>,
    exit_mass: f64,
    exit_h: f64,
    dropped: f64,
    start_outside: bool,
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

fn joint_moves<W: Weight>(spec: &LatticeWalkSpec) -> Vec<Move<W>> {
    let one: Vec<(usize, W)> = spec
        .atoms()
        .iter()
        .map(|(o, p)| (((o - spec.min_offset()) / spec.stride()) as usize, W::from_rational(p)))
        .collect();
    let mut out = vec![Move { shift: Vec::new(), prob: W::from_rational(&crate::walk::ratio(1, 1)) }];
    for _ in 0..spec.dim() {
        out = out
            .into_iter()
            .flat_map(|m| {
                one.iter().map(move |(s, p)| {
                    let mut shift = m.shift.clone();
                    shift.push(*s);
                    Move { shift, prob: m.prob.mul(p) }
                })
            })
            .collect();
    }
    out
}

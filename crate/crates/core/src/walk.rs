//! Step distributions, path sampling and the stopping times of a walk.

use std::collections::HashMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chambers::ChamberType;
use crate::error::{Error, Result};
use crate::stream::{par_trajectories, RandomStream};

pub type Rational = BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    DiscreteAtoms,
    Gaussian,
    UniformSymmetric,
}

/// How the `k` components of a step are tied together.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    /// Components are i.i.d. copies of the one-dimensional marginal.
    IidComponents,
    /// A joint table of step vectors and their probabilities, invariant under
    /// coordinate permutations.
    ExchangeableTable(Vec<(Vec<Rational>, Rational)>),
}

/// Exchangeable step law of the k-dimensional walk.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    kind: StepKind,
    k: usize,
    atoms: Option<Vec<(Rational, Rational)>>,
    coupling: Coupling,
    /// Standard deviation (gaussian) or half-width (uniform).
    scale: f64,
    sampler: Sampler,
}

#[derive(Clone, Debug)]
enum Sampler {
    Marginal { values: Vec<f64>, cumulative: Vec<f64> },
    Table { rows: Vec<Vec<f64>>, cumulative: Vec<f64> },
    Gaussian(f64),
    Uniform(f64),
}

impl StepDistribution {
    /// i.i.d. components with the given one-dimensional atoms `(value, probability)`.
    pub fn atoms(k: usize, atoms: Vec<(Rational, Rational)>) -> Result<Self> {
        check_k(k)?;
        check_probabilities(atoms.iter().map(|(_, p)| p))?;
        let values = atoms.iter().map(|(v, _)| to_f64(v)).collect();
        let cumulative = cumulative(atoms.iter().map(|(_, p)| p));
        Ok(StepDistribution {
            kind: StepKind::DiscreteAtoms,
            k,
            atoms: Some(atoms),
            coupling: Coupling::IidComponents,
            scale: f64::NAN,
            sampler: Sampler::Marginal { values, cumulative },
        })
    }

    /// Independent ±1 components.
    pub fn rademacher(k: usize) -> Self {
        Self::atoms(k, vec![(ratio(-1, 1), ratio(1, 2)), (ratio(1, 1), ratio(1, 2))])
            .expect("valid law")
    }

    /// Independent components on {-1, 0, 1} with probabilities 1/4, 1/2, 1/4.
    pub fn lazy(k: usize) -> Self {
        Self::atoms(
            k,
            vec![
                (ratio(-1, 1), ratio(1, 4)),
                (ratio(0, 1), ratio(1, 2)),
                (ratio(1, 1), ratio(1, 4)),
            ],
        )
        .expect("valid law")
    }

    /// Jointly distributed step vectors. Entries with equal vectors are merged.
    pub fn exchangeable_table(k: usize, table: Vec<(Vec<Rational>, Rational)>) -> Result<Self> {
        check_k(k)?;
        if table.iter().any(|(v, _)| v.len() != k) {
            return Err(Error::invalid("table row has the wrong dimension"));
        }
        check_probabilities(table.iter().map(|(_, p)| p))?;
        let mut merged: HashMap<Vec<Rational>, Rational> = HashMap::new();
        for (v, p) in &table {
            *merged.entry(v.clone()).or_insert_with(Rational::zero) += p;
        }
        // Adjacent transpositions generate the symmetric group.
        for (v, p) in &merged {
            for i in 0..k.saturating_sub(1) {
                let mut w = v.clone();
                w.swap(i, i + 1);
                if merged.get(&w) != Some(p) {
                    return Err(Error::invalid(format!(
                        "table is not exchangeable: swapping coordinates {i} and {} changes the mass of {:?}",
                        i + 1,
                        v.iter().map(|r| r.to_string()).collect::<Vec<_>>()
                    )));
                }
            }
        }
        let mut rows: Vec<(Vec<Rational>, Rational)> = merged.into_iter().collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        // Marginal of the first coordinate.
        let mut marginal: HashMap<Rational, Rational> = HashMap::new();
        for (v, p) in &rows {
            *marginal.entry(v[0].clone()).or_insert_with(Rational::zero) += p;
        }
        let mut atoms: Vec<(Rational, Rational)> = marginal.into_iter().collect();
        atoms.sort();
        let sampler = Sampler::Table {
            rows: rows.iter().map(|(v, _)| v.iter().map(to_f64).collect()).collect(),
            cumulative: cumulative(rows.iter().map(|(_, p)| p)),
        };
        Ok(StepDistribution {
            kind: StepKind::DiscreteAtoms,
            k,
            atoms: Some(atoms),
            coupling: Coupling::ExchangeableTable(rows),
            scale: f64::NAN,
            sampler,
        })
    }

    /// i.i.d. centred normal components with standard deviation `sd`.
    pub fn gaussian(k: usize, sd: f64) -> Result<Self> {
        check_k(k)?;
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::invalid("standard deviation must be positive"));
        }
        Ok(StepDistribution {
            kind: StepKind::Gaussian,
            k,
            atoms: None,
            coupling: Coupling::IidComponents,
            scale: sd,
            sampler: Sampler::Gaussian(sd),
        })
    }

    /// i.i.d. components uniform on `[-half_width, half_width]`.
    pub fn uniform(k: usize, half_width: f64) -> Result<Self> {
        check_k(k)?;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("half width must be positive"));
        }
        Ok(StepDistribution {
            kind: StepKind::UniformSymmetric,
            k,
            atoms: None,
            coupling: Coupling::IidComponents,
            scale: half_width,
            sampler: Sampler::Uniform(half_width),
        })
    }

    pub fn kind(&self) -> StepKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    /// One-dimensional marginal atoms, for discrete laws.
    pub fn marginal_atoms(&self) -> Option<&[(Rational, Rational)]> {
        self.atoms.as_deref()
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn is_discrete(&self) -> bool {
        self.kind == StepKind::DiscreteAtoms
    }

    /// The same law in another dimension. Joint tables cannot be re-sized.
    pub fn with_dim(&self, k: usize) -> Result<Self> {
        match (&self.kind, &self.coupling) {
            (_, Coupling::ExchangeableTable(_)) => {
                Err(Error::Unsupported("cannot change the dimension of a joint table".into()))
            }
            (StepKind::DiscreteAtoms, _) => Self::atoms(k, self.atoms.clone().unwrap_or_default()),
            (StepKind::Gaussian, _) => Self::gaussian(k, self.scale),
            (StepKind::UniformSymmetric, _) => Self::uniform(k, self.scale),
        }
    }

    /// All step vectors with their exact probabilities, for discrete laws.
    pub fn joint_support(&self) -> Result<Vec<(Vec<Rational>, Rational)>> {
        match (&self.coupling, &self.atoms) {
            (Coupling::ExchangeableTable(rows), _) => Ok(rows.clone()),
            (Coupling::IidComponents, Some(atoms)) => {
                let mut out = vec![(Vec::with_capacity(self.k), Rational::one())];
                for _ in 0..self.k {
                    out = out
                        .into_iter()
                        .flat_map(|(v, p)| {
                            atoms.iter().map(move |(a, q)| {
                                let mut w = v.clone();
                                w.push(a.clone());
                                (w, &p * q)
                            })
                        })
                        .collect();
                }
                Ok(out)
            }
            _ => Err(Error::Unsupported("continuous law has no finite support".into())),
        }
    }

    /// Draws one step vector into `out`.
    pub fn sample_step(&self, stream: &mut RandomStream, out: &mut [f64]) {
        match &self.sampler {
            Sampler::Marginal { values, cumulative } => {
                for o in out.iter_mut() {
                    *o = values[pick(cumulative, stream.uniform())];
                }
            }
            Sampler::Table { rows, cumulative } => {
                out.copy_from_slice(&rows[pick(cumulative, stream.uniform())]);
            }
            Sampler::Gaussian(sd) => {
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(stream);
                    *o = sd * z;
                }
            }
            Sampler::Uniform(a) => {
                for o in out.iter_mut() {
                    *o = a * (2.0 * stream.uniform() - 1.0);
                }
            }
        }
    }

    /// Loads a law from its JSON description.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: DistributionDoc = serde_json::from_str(s)?;
        doc.build()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_doc(&self) -> DistributionDoc {
        let pair = |r: &Rational| -> [i64; 2] {
            [r.numer().to_i64().unwrap_or(0), r.denom().to_i64().unwrap_or(1)]
        };
        DistributionDoc {
            kind: self.kind,
            k: self.k,
            atoms: match (&self.coupling, &self.atoms) {
                (Coupling::IidComponents, Some(a)) => Some(
                    a.iter()
                        .map(|(v, p)| {
                            let (v, p) = (pair(v), pair(p));
                            [v[0], v[1], p[0], p[1]]
                        })
                        .collect(),
                ),
                _ => None,
            },
            table: match &self.coupling {
                Coupling::ExchangeableTable(rows) => Some(
                    rows.iter()
                        .map(|(v, p)| TableRow { vector: v.iter().map(pair).collect(), p: pair(p) })
                        .collect(),
                ),
                Coupling::IidComponents => None,
            },
            scale: if self.scale.is_nan() { None } else { Some(self.scale) },
        }
    }
}

/// JSON form of a step law:
/// `{"kind": "discrete-atoms", "atoms": [[num, den, pnum, pden], ...], "k": 2}`.
/// Gaussian and uniform laws take an optional `scale`; joint tables are given
/// as `"table": [{"vector": [[num, den], ...], "p": [pnum, pden]}, ...]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistributionDoc {
    pub kind: StepKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<[i64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TableRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableRow {
    pub vector: Vec<[i64; 2]>,
    pub p: [i64; 2],
}

impl DistributionDoc {
    pub fn build(&self) -> Result<StepDistribution> {
        let rat = |n: i64, d: i64| -> Result<Rational> {
            if d == 0 {
                Err(Error::invalid("zero denominator"))
            } else {
                Ok(ratio(n, d))
            }
        };
        match self.kind {
            StepKind::DiscreteAtoms => match (&self.atoms, &self.table) {
                (Some(atoms), None) => {
                    let atoms = atoms
                        .iter()
                        .map(|a| Ok((rat(a[0], a[1])?, rat(a[2], a[3])?)))
                        .collect::<Result<Vec<_>>>()?;
                    StepDistribution::atoms(self.k, atoms)
                }
                (None, Some(table)) => {
                    let rows = table
                        .iter()
                        .map(|r| {
                            let v = r.vector.iter().map(|c| rat(c[0], c[1])).collect::<Result<Vec<_>>>()?;
                            Ok((v, rat(r.p[0], r.p[1])?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    StepDistribution::exchangeable_table(self.k, rows)
                }
                _ => Err(Error::invalid("discrete law needs exactly one of `atoms` or `table`")),
            },
            StepKind::Gaussian => StepDistribution::gaussian(self.k, self.scale.unwrap_or(1.0)),
            StepKind::UniformSymmetric => {
                StepDistribution::uniform(self.k, self.scale.unwrap_or(3f64.sqrt()))
            }
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("dimension must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_probabilities<'a>(ps: impl Iterator<Item = &'a Rational>) -> Result<()> {
    let mut total = Rational::zero();
    let mut any = false;
    for p in ps {
        if !p.is_positive() {
            return Err(Error::invalid(format!("probability {p} is not positive")));
        }
        total += p;
        any = true;
    }
    if !any || !total.is_one() {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn cumulative<'a>(ps: impl Iterator<Item = &'a Rational>) -> Vec<f64> {
    let mut acc = Rational::zero();
    ps.map(|p| {
        acc += p;
        to_f64(&acc)
    })
    .collect()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

/// Status of the moment assumption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentStatus {
    /// Vacuous: the marginal has bounded support.
    SatisfiedBoundedSupport,
    /// All absolute moments are finite.
    SatisfiedAllMoments,
}

/// Moment diagnostics of a step law against a chamber.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub variance: f64,
    /// `(order, E[xi^order])` for odd orders up to `r_required`.
    pub odd_moments: Vec<(u32, f64)>,
    pub r_required: u32,
    pub moment: MomentStatus,
    /// Odd marginal moments up to `r_required` vanish.
    pub symmetry: bool,
    /// Unit variance.
    pub normalization: bool,
    /// For joint tables: every mixed moment with an odd exponent in some
    /// coordinate vanishes. The one-step identity `E_x[h(x + xi)] = h(x)`
    /// needs this for correlated laws; for i.i.d. components it follows from
    /// `symmetry`.
    pub joint_sign_symmetry: Option<bool>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.symmetry && self.normalization && self.joint_sign_symmetry.unwrap_or(true)
    }
}

/// Moment order required by the chamber.
pub fn required_moment_order(chamber: ChamberType, k: usize) -> u32 {
    let k = k as u32;
    match chamber {
        ChamberType::C => (2 * k).saturating_sub(1).max(1),
        // any order > 2 will do for k = 2
        ChamberType::D if k <= 2 => 3,
        ChamberType::D => 2 * k - 2,
        ChamberType::A if k >= 4 => k - 1,
        ChamberType::A => 3,
    }
}

/// Checks the moment, symmetry and normalisation assumptions.
pub fn validate_assumptions(
    dist: &StepDistribution,
    chamber: ChamberType,
    k: usize,
) -> Result<AssumptionReport> {
    chamber.check_dim(k)?;
    if k != dist.dim() {
        return Err(Error::invalid(format!(
            "law has dimension {}, chamber check asked for {k}",
            dist.dim()
        )));
    }
    let r = required_moment_order(chamber, k);
    let odd_orders: Vec<u32> = (1..=r).filter(|o| o % 2 == 1).collect();
    match dist.kind {
        StepKind::DiscreteAtoms => {
            let atoms = dist.atoms.as_ref().expect("discrete law has atoms");
            let moment = |order: u32| -> Rational {
                atoms
                    .iter()
                    .map(|(v, p)| num_traits::pow(v.clone(), order as usize) * p)
                    .fold(Rational::zero(), |a, b| a + b)
            };
            let odd: Vec<(u32, Rational)> = odd_orders.iter().map(|&o| (o, moment(o))).collect();
            let second = moment(2);
            let mean = moment(1);
            let variance = &second - &mean * &mean;
            let joint = match &dist.coupling {
                Coupling::ExchangeableTable(rows) => Some(table_sign_symmetric(rows, r)),
                Coupling::IidComponents => None,
            };
            Ok(AssumptionReport {
                variance: to_f64(&variance),
                symmetry: odd.iter().all(|(_, m)| m.is_zero()),
                odd_moments: odd.iter().map(|(o, m)| (*o, to_f64(m))).collect(),
                r_required: r,
                moment: MomentStatus::SatisfiedBoundedSupport,
                normalization: variance.is_one(),
                joint_sign_symmetry: joint,
            })
        }
        StepKind::Gaussian | StepKind::UniformSymmetric => {
            let variance = match dist.kind {
                StepKind::Gaussian => dist.scale * dist.scale,
                _ => dist.scale * dist.scale / 3.0,
            };
            Ok(AssumptionReport {
                variance,
                odd_moments: odd_orders.iter().map(|&o| (o, 0.0)).collect(),
                r_required: r,
                moment: if dist.kind == StepKind::Gaussian {
                    MomentStatus::SatisfiedAllMoments
                } else {
                    MomentStatus::SatisfiedBoundedSupport
                },
                symmetry: true,
                normalization: (variance - 1.0).abs() <= 1e-12,
                joint_sign_symmetry: None,
            })
        }
    }
}

/// Mixed moments `E[prod xi_j^m_j]` with `m_j <= r` and some `m_j` odd all vanish.
fn table_sign_symmetric(rows: &[(Vec<Rational>, Rational)], r: u32) -> bool {
    let k = rows.first().map_or(0, |(v, _)| v.len());
    let mut exps = vec![0u32; k];
    loop {
        if exps.iter().any(|e| e % 2 == 1) {
            let m = rows
                .iter()
                .map(|(v, p)| {
                    v.iter()
                        .zip(&exps)
                        .fold(p.clone(), |acc, (x, &e)| acc * num_traits::pow(x.clone(), e as usize))
                })
                .fold(Rational::zero(), |a, b| a + b);
            if !m.is_zero() {
                return false;
            }
        }
        // next multi-index in [0, r]^k
        let mut i = 0;
        loop {
            if i == k {
                return true;
            }
            exps[i] += 1;
            if exps[i] <= r {
                break;
            }
            exps[i] = 0;
            i += 1;
        }
    }
}

/// A finite trajectory with optional stopping-time annotations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub start: Vec<f64>,
    /// `steps[m - 1]` is the increment from `positions[m - 1]` to `positions[m]`.
    pub steps: Vec<Vec<f64>>,
    pub positions: Vec<Vec<f64>>,
    pub tau: Option<usize>,
    pub sign_time: Option<usize>,
    pub nu: Option<usize>,
}

impl PathSample {
    /// Builds a path from its start and increments.
    pub fn from_steps(start: Vec<f64>, steps: Vec<Vec<f64>>) -> Self {
        let mut positions = Vec::with_capacity(steps.len() + 1);
        positions.push(start.clone());
        for s in &steps {
            let last = positions.last().expect("nonempty");
            let next: Vec<f64> = last.iter().zip(s).map(|(a, b)| a + b).collect();
            positions.push(next);
        }
        PathSample { start, steps, positions, tau: None, sign_time: None, nu: None }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Fills `tau`, `sign_time` and `nu` for the given chamber.
    pub fn annotate(&mut self, chamber: ChamberType, n: u64, eps: f64) -> Result<()> {
        self.tau = exit_time_tau(chamber, self);
        self.sign_time = sign_time(chamber, self);
        self.nu = entrance_time_nu(chamber, n, eps, self)?;
        Ok(())
    }
}

/// Samples `n` steps of the walk started at `x`.
pub fn sample_path(
    dist: &StepDistribution,
    x: &[f64],
    n: usize,
    stream: &mut RandomStream,
) -> Result<PathSample> {
    if x.len() != dist.dim() {
        return Err(Error::invalid("start point and law have different dimensions"));
    }
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = vec![0.0; dist.dim()];
        dist.sample_step(stream, &mut s);
        steps.push(s);
    }
    Ok(PathSample::from_steps(x.to_vec(), steps))
}

/// First index at which the path is outside the open chamber.
pub fn exit_time_tau(chamber: ChamberType, path: &PathSample) -> Option<usize> {
    path.positions.iter().position(|p| !chamber.holds(p))
}

/// First index at which `h^Z` is not positive.
pub fn sign_time(chamber: ChamberType, path: &PathSample) -> Option<usize> {
    path.positions.iter().position(|p| chamber.h(p) <= 0.0)
}

/// First index at which the path lies in the auxiliary chamber `W_{n,eps}`.
pub fn entrance_time_nu(
    chamber: ChamberType,
    n: u64,
    eps: f64,
    path: &PathSample,
) -> Result<Option<usize>> {
    for (m, p) in path.positions.iter().enumerate() {
        if chamber.in_auxiliary(n, eps, p)? {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Survivor counts of a simulated exit time: `survivors[n]` paths out of
/// `samples` had `tau > n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCounts {
    pub samples: u64,
    pub survivors: Vec<u64>,
}

impl SurvivalCounts {
    /// Empirical `P(tau > n)` and its binomial standard error.
    pub fn probability(&self, n: usize) -> (f64, f64) {
        let p = self.survivors[n] as f64 / self.samples as f64;
        (p, (p * (1.0 - p) / self.samples as f64).sqrt())
    }
}

/// Exit time of the walk from `x`, capped at `horizon` (`None` if alive).
pub fn simulate_exit_time(
    dist: &StepDistribution,
    chamber: ChamberType,
    x: &[f64],
    horizon: usize,
    stream: &mut RandomStream,
) -> Option<usize> {
    if !chamber.holds(x) {
        return Some(0);
    }
    let mut pos = x.to_vec();
    let mut step = vec![0.0; pos.len()];
    for m in 1..=horizon {
        dist.sample_step(stream, &mut step);
        for (p, d) in pos.iter_mut().zip(&step) {
            *p += d;
        }
        if !chamber.holds(&pos) {
            return Some(m);
        }
    }
    None
}

/// Counts `tau > n` for `n = 0..=n_max` over independent paths.
pub fn mc_survival(
    dist: &StepDistribution,
    chamber: ChamberType,
    x: &[f64],
    n_max: usize,
    samples: u64,
    seed: u64,
) -> Result<SurvivalCounts> {
    if x.len() != dist.dim() {
        return Err(Error::invalid("start point and law have different dimensions"));
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let exits = par_trajectories(seed, samples, |_, s| simulate_exit_time(dist, chamber, x, n_max, s));
    let mut died = vec![0u64; n_max + 1];
    for t in exits.into_iter().flatten() {
        died[t] += 1;
    }
    let mut alive = samples;
    let survivors = died
        .iter()
        .map(|d| {
            alive -= d;
            alive
        })
        .collect();
    Ok(SurvivalCounts { samples, survivors })
}

/// Endpoints `S(n)` of the simulated paths that survive `n` steps, in
/// trajectory order.
pub fn mc_surviving_endpoints(
    dist: &StepDistribution,
    chamber: ChamberType,
    x: &[f64],
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if x.len() != dist.dim() {
        return Err(Error::invalid("start point and law have different dimensions"));
    }
    let ends = par_trajectories(seed, samples, |_, s| {
        let mut pos = x.to_vec();
        if !chamber.holds(&pos) {
            return None;
        }
        let mut step = vec![0.0; pos.len()];
        for _ in 0..n {
            dist.sample_step(s, &mut step);
            for (p, d) in pos.iter_mut().zip(&step) {
                *p += d;
            }
            if !chamber.holds(&pos) {
                return None;
            }
        }
        Some(pos)
    });
    Ok(ends.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ChamberType::*;

    #[test]
    fn rademacher_report() {
        let r = validate_assumptions(&StepDistribution::rademacher(2), C, 2).unwrap();
        assert_eq!(r.variance, 1.0);
        assert_eq!(r.r_required, 3);
        assert!(r.odd_moments.iter().all(|(_, m)| *m == 0.0));
        assert!(r.all_pass());
        assert_eq!(r.moment, MomentStatus::SatisfiedBoundedSupport);
    }

    #[test]
    fn lazy_law_fails_normalization() {
        let r = validate_assumptions(&StepDistribution::lazy(2), C, 2).unwrap();
        assert_eq!(r.variance, 0.5);
        assert!(r.symmetry);
        assert!(!r.normalization);
    }

    #[test]
    fn gaussian_report() {
        let r = validate_assumptions(&StepDistribution::gaussian(3, 1.0).unwrap(), D, 3).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.r_required, 4);
        assert_eq!(r.moment, MomentStatus::SatisfiedAllMoments);
    }

    #[test]
    fn moment_orders() {
        assert_eq!(required_moment_order(C, 3), 5);
        assert_eq!(required_moment_order(D, 3), 4);
        assert_eq!(required_moment_order(C, 2), 3);
        assert_eq!(required_moment_order(D, 2), 3);
        assert_eq!(required_moment_order(C, 1), 1);
    }

    #[test]
    fn asymmetric_atoms_fail_symmetry() {
        let d = StepDistribution::atoms(2, vec![(ratio(-1, 1), ratio(2, 3)), (ratio(2, 1), ratio(1, 3))]).unwrap();
        let r = validate_assumptions(&d, C, 2).unwrap();
        // mean zero, third moment -2/3 + 8/3 = 2
        assert_eq!(r.odd_moments[0].1, 0.0);
        assert_eq!(r.odd_moments[1].1, 2.0);
        assert!(!r.symmetry);
    }

    #[test]
    fn bad_probabilities_are_rejected() {
        assert!(StepDistribution::atoms(1, vec![(ratio(1, 1), ratio(1, 2))]).is_err());
        assert!(StepDistribution::atoms(0, vec![(ratio(1, 1), ratio(1, 1))]).is_err());
    }

    #[test]
    fn non_exchangeable_table_is_rejected() {
        let rows = vec![
            (vec![ratio(1, 1), ratio(0, 1)], ratio(3, 4)),
            (vec![ratio(0, 1), ratio(1, 1)], ratio(1, 4)),
        ];
        assert!(StepDistribution::exchangeable_table(2, rows).is_err());
    }

    #[test]
    fn centrally_symmetric_table_is_not_sign_symmetric() {
        let rows = vec![
            (vec![ratio(1, 1), ratio(1, 1)], ratio(3, 8)),
            (vec![ratio(-1, 1), ratio(-1, 1)], ratio(3, 8)),
            (vec![ratio(1, 1), ratio(-1, 1)], ratio(1, 8)),
            (vec![ratio(-1, 1), ratio(1, 1)], ratio(1, 8)),
        ];
        let d = StepDistribution::exchangeable_table(2, rows).unwrap();
        let r = validate_assumptions(&d, C, 2).unwrap();
        assert!(r.symmetry && r.normalization);
        assert_eq!(r.joint_sign_symmetry, Some(false));
        assert!(!r.all_pass());
    }

    #[test]
    fn json_roundtrip() {
        let s = r#"{"kind": "discrete-atoms", "atoms": [[-1, 1, 1, 4], [0, 1, 1, 2], [1, 1, 1, 4]], "k": 2}"#;
        let d = StepDistribution::from_json_str(s).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.marginal_atoms().unwrap().len(), 3);
        let again = StepDistribution::from_json_str(&serde_json::to_string(&d.to_doc()).unwrap()).unwrap();
        assert_eq!(again.marginal_atoms(), d.marginal_atoms());
        let g = StepDistribution::from_json_str(r#"{"kind": "gaussian", "k": 3}"#).unwrap();
        assert_eq!(g.kind(), StepKind::Gaussian);
        assert!(StepDistribution::from_json_str(r#"{"kind": "discrete-atoms", "k": 3}"#).is_err());
    }

    #[test]
    fn empty_walk() {
        let p = sample_path(&StepDistribution::rademacher(2), &[1.0, 2.0], 0, &mut RandomStream::new(0, 0)).unwrap();
        assert_eq!(p.positions, vec![vec![1.0, 2.0]]);
        assert!(p.steps.is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = StepDistribution::gaussian(3, 1.0).unwrap();
        let a = sample_path(&d, &[0.0, 1.0, 2.0], 50, &mut RandomStream::new(5, 9)).unwrap();
        let b = sample_path(&d, &[0.0, 1.0, 2.0], 50, &mut RandomStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_step_frequencies_match_exact_law() {
        let d = StepDistribution::rademacher(2);
        let draws = 200_000u64;
        let mut counts: HashMap<(i64, i64), u64> = HashMap::new();
        for i in 0..draws {
            let p = sample_path(&d, &[1.0, 2.0], 1, &mut RandomStream::new(42, i)).unwrap();
            let y = &p.positions[1];
            *counts.entry((y[0] as i64, y[1] as i64)).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for (pt, c) in counts {
            assert!([0, 2].contains(&pt.0) && [1, 3].contains(&pt.1));
            assert!((c as f64 - draws as f64 * 0.25).abs() < 3.0 * sigma, "{pt:?}: {c}");
        }
    }

    #[test]
    fn stopping_time_examples() {
        let p = PathSample::from_steps(vec![1.0, 2.0], vec![vec![-1.0, 1.0]]);
        assert_eq!(exit_time_tau(C, &p), Some(1));
        let p = PathSample::from_steps(vec![1.0, 2.0], vec![vec![1.0, 1.0]]);
        assert_eq!(exit_time_tau(C, &p), None);
        assert_eq!(sign_time(C, &p), None);
        let p = PathSample::from_steps(vec![-1.0, 2.0], vec![vec![1.0, 1.0]]);
        assert_eq!(exit_time_tau(C, &p), Some(0));
        let p = PathSample::from_steps(vec![1.0, 2.0], vec![vec![1.0, -1.0]]);
        assert_eq!(C.h(&p.positions[1]), -6.0);
        assert_eq!(sign_time(C, &p), Some(1));
    }

    #[test]
    fn entrance_time_examples() {
        let p = PathSample::from_steps(vec![1.0, 7.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(entrance_time_nu(C, 16, 0.25, &p).unwrap(), Some(2));
        let p = PathSample::from_steps(vec![3.0, 7.0], vec![]);
        assert_eq!(entrance_time_nu(C, 16, 0.25, &p).unwrap(), Some(0));
        let p = PathSample::from_steps(vec![1.0, 7.0], vec![]);
        assert_eq!(entrance_time_nu(C, 16, 0.25, &p).unwrap(), None);
        assert!(entrance_time_nu(C, 16, 0.7, &p).is_err());
    }

    #[test]
    fn mc_survival_matches_first_steps() {
        // from (1, 2) only the move (+1, +1) survives the first step
        let d = StepDistribution::rademacher(2);
        let c = mc_survival(&d, C, &[1.0, 2.0], 3, 40_000, 3).unwrap();
        assert_eq!(c.survivors[0], 40_000);
        let (p, se) = c.probability(1);
        assert!((p - 0.25).abs() < 4.0 * se, "{p}");
        assert!(c.survivors.windows(2).all(|w| w[1] <= w[0]));
        let ends = mc_surviving_endpoints(&d, C, &[1.0, 2.0], 3, 40_000, 3).unwrap();
        assert_eq!(ends.len() as u64, c.survivors[3]);
        assert!(ends.iter().all(|y| C.holds(y)));
    }

    #[test]
    fn outside_start_dies_at_zero() {
        let d = StepDistribution::rademacher(2);
        let c = mc_survival(&d, C, &[2.0, 1.0], 2, 10, 0).unwrap();
        assert_eq!(c.survivors, vec![0, 0, 0]);
    }
}

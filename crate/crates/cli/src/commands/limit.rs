use std::io::Write;

use clap::{Args, ValueEnum};
use serde::Serialize;
use weylwalk::asymptotics::{LimitMeasure, NormalizerMethod, DEFAULT_QUADRATURE_NODES, QUADRATURE_MAX_DIM};
use weylwalk::exact::{conditional_from_dp, LatticeDp, LatticeWalkSpec};
use weylwalk::stream::mean_and_std_error;
use weylwalk::walk::mc_surviving_endpoints;
use weylwalk::{ChamberType, SCHEMA};

use super::{dimension, distribution, item_seed, parse_chamber};
use crate::output::{emit, OutputDir};
use crate::{Cli, CliError, CliResult};

pub const LIMIT_FILE: &str = "limit.csv";
/// Below this `S(n)/sqrt(n)` is still close to the point mass at the start.
pub const MIN_STEPS: usize = 10;

/// Moments of `S(n)/sqrt(n)` given survival against the limiting measure.
///
/// Writes `limit.csv` with columns statistic,walk,walk_error,mu,mu_error,z.
/// In exact mode walk_error is the Richardson bias estimate
/// |m(n) - m(n/2)| / (sqrt 2 - 1) for corrections of order n^(-1/2).
#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long, value_parser = parse_chamber)]
    pub chamber: ChamberType,

    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x: Vec<f64>,

    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, default_value = "rademacher")]
    pub dist: String,

    /// Number of steps (at least 10).
    #[arg(long)]
    pub n: usize,

    #[arg(long, value_enum, default_value_t = LimitMode::Exact)]
    pub mode: LimitMode,

    /// Monte Carlo paths (mc mode), and samples for mu when k > 4.
    #[arg(long, default_value_t = 200_000)]
    pub samples: u64,

    /// Gauss-Legendre nodes per panel for mu.
    #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    Exact,
    Mc,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatRow {
    pub statistic: String,
    pub walk: f64,
    pub walk_error: f64,
    pub mu: f64,
    pub mu_error: f64,
    /// `|walk - mu| / sqrt(walk_error^2 + mu_error^2)`.
    pub z: f64,
    /// Exact mode: `m(n) + (m(n) - m(n/2)) / (sqrt 2 - 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrapolated: Option<f64>,
}

#[derive(Serialize)]
struct LimitRecord<'a> {
    schema: &'static str,
    command: &'static str,
    mode: LimitMode,
    chamber: ChamberType,
    x: &'a [f64],
    n: usize,
    survival: f64,
    rows: &'a [StatRow],
}

type Statistic = (String, Box<dyn Fn(&[f64]) -> f64 + Sync>);

fn statistics(k: usize) -> Vec<Statistic> {
    let mut s: Vec<Statistic> = (0..k)
        .map(|i| (format!("mean_y{}", i + 1), Box::new(move |y: &[f64]| y[i]) as Box<dyn Fn(&[f64]) -> f64 + Sync>))
        .collect();
    s.push(("mean_sq_norm".into(), Box::new(|y: &[f64]| y.iter().map(|v| v * v).sum())));
    s
}

pub fn run(args: &LimitArgs, cli: &Cli, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    if args.n < MIN_STEPS {
        return Err(CliError::usage(format!("--n must be at least {MIN_STEPS}, got {}", args.n)));
    }
    let k = dimension(Some(&args.x), args.k)?;
    args.chamber.check_dim(k)?;
    let stats = statistics(k);
    let scale = 1.0 / (args.n as f64).sqrt();
    let scaled = |x: &[f64]| x.iter().map(|v| v * scale).collect::<Vec<f64>>();

    let (walk, survival): (Vec<(f64, f64, Option<f64>)>, f64) = match args.mode {
        LimitMode::Exact => {
            let spec = LatticeWalkSpec::from_distribution(&distribution(&args.dist, k)?)?;
            let mut dp = LatticeDp::<f64>::new(&spec, args.chamber, &spec.to_lattice(&args.x)?)?;
            dp.advance_to(args.n / 2);
            let half_scale = 1.0 / ((args.n / 2) as f64).sqrt();
            let law = conditional_from_dp(&dp)?;
            let half: Vec<f64> = stats
                .iter()
                .map(|(_, f)| law.mean_of(&spec, |x| f(&x.iter().map(|v| v * half_scale).collect::<Vec<_>>())))
                .collect();
            dp.advance_to(args.n);
            let law = conditional_from_dp(&dp)?;
            let c = std::f64::consts::SQRT_2 - 1.0;
            let rows = stats
                .iter()
                .zip(&half)
                .map(|((_, f), m_half)| {
                    let m = law.mean_of(&spec, |x| f(&scaled(x)));
                    (m, (m - m_half).abs() / c, Some(m + (m - m_half) / c))
                })
                .collect();
            (rows, law.survival)
        }
        LimitMode::Mc => {
            let dist = distribution(&args.dist, k)?;
            let ends = mc_surviving_endpoints(&dist, args.chamber, &args.x, args.n, args.samples, cli.seed)?;
            if ends.len() < 2 {
                return Err(weylwalk::Error::DegenerateConditioning { step: args.n }.into());
            }
            let rows = stats
                .iter()
                .map(|(_, f)| {
                    let v: Vec<f64> = ends.iter().map(|y| f(&scaled(y))).collect();
                    let (m, se) = mean_and_std_error(&v);
                    (m, se, None)
                })
                .collect();
            (rows, ends.len() as f64 / args.samples as f64)
        }
    };

    let mu_values: Vec<(f64, f64)> = if k <= QUADRATURE_MAX_DIM {
        let mu = LimitMeasure::new(args.chamber, k, NormalizerMethod::Quadrature { nodes: args.nodes })?;
        let coarse_nodes = (3 * args.nodes / 4).max(1);
        stats
            .iter()
            .map(|(_, f)| {
                let fine = mu.expect(f)?;
                let coarse = mu.integrate_with_nodes(coarse_nodes, |y| {
                    f(y) * mu.density(y)
                })?;
                Ok((fine, (fine - coarse).abs()))
            })
            .collect::<weylwalk::Result<_>>()?
    } else {
        let mu = LimitMeasure::new(args.chamber, k, NormalizerMethod::ClosedForm)?;
        stats
            .iter()
            .enumerate()
            .map(|(j, (_, f))| mu.expect_mc(f, args.samples, item_seed(cli.seed, j as u64)))
            .collect::<weylwalk::Result<_>>()?
    };

    let rows: Vec<StatRow> = stats
        .iter()
        .zip(walk)
        .zip(mu_values)
        .map(|(((name, _), (w, we, ex)), (m, me))| {
            let err = (we * we + me * me).sqrt();
            StatRow {
                statistic: name.clone(),
                walk: w,
                walk_error: we,
                mu: m,
                mu_error: me,
                z: if err > 0.0 { (w - m).abs() / err } else { f64::INFINITY },
                extrapolated: ex,
            }
        })
        .collect();
    let mut w = csv::Writer::from_writer(dir.create(LIMIT_FILE)?);
    w.write_record(["statistic", "walk", "walk_error", "mu", "mu_error", "z"])?;
    for r in &rows {
        w.write_record([
            r.statistic.clone(),
            super::num(r.walk),
            super::num(r.walk_error),
            super::num(r.mu),
            super::num(r.mu_error),
            super::num(r.z),
        ])?;
    }
    w.flush()?;
    emit(
        out,
        &LimitRecord {
            schema: SCHEMA,
            command: "limit",
            mode: args.mode,
            chamber: args.chamber,
            x: &args.x,
            n: args.n,
            survival,
            rows: &rows,
        },
    )
}

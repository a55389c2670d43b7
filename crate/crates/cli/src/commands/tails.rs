use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use weylwalk::asymptotics::{alpha, even_only, kappa, tail_fit, TailFit};
use weylwalk::exact::{curve_row, write_curve_csv, CurveRow, LatticeDp, LatticeWalkSpec};
use weylwalk::walk::mc_survival;
use weylwalk::{ChamberType, SCHEMA};

use super::{dimension, distribution, has_period_two, num, parse_chamber};
use crate::output::{emit, OutputDir};
use crate::{Cli, CliError, CliResult};

pub const CURVE_FILE: &str = "tails_curve.csv";
pub const SUMMARY_FILE: &str = "tails_summary.json";
const CHECKPOINT_FILE: &str = "tails.ckpt";

/// Survival curve `P_x(tau > n)` and its power-law fit.
///
/// Exact mode writes `tails_curve.csv` with columns
/// n,P_survive,E_h_restricted,V_estimate,dropped_mass, where V_estimate is
/// h(x) - E_x[h(S(tau)); tau <= n]. Monte Carlo mode writes
/// n,P_survive,std_error,survivors. Both write `tails_summary.json`.
#[derive(Debug, Args)]
pub struct TailsArgs {
    #[arg(long, value_parser = parse_chamber)]
    pub chamber: ChamberType,

    /// Start point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x: Vec<f64>,

    #[arg(long)]
    pub k: Option<usize>,

    /// rademacher, lazy, gaussian, uniform or a JSON law file.
    #[arg(long, default_value = "rademacher")]
    pub dist: String,

    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,

    #[arg(long)]
    pub n_max: usize,

    /// Record every this many steps (n_max is always recorded).
    #[arg(long, default_value_t = 1)]
    pub every: usize,

    /// Monte Carlo paths.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,

    /// Smallest n in the fit window (default n_max / 4).
    #[arg(long)]
    pub fit_min: Option<u64>,

    #[arg(long)]
    pub fit_max: Option<u64>,

    /// Which n enter the fit (default: even n for walks of period two).
    #[arg(long, value_enum)]
    pub parity: Option<Parity>,

    /// Skip the restricted expectation of h in exact mode.
    #[arg(long)]
    pub no_h: bool,

    /// Do not checkpoint the DP.
    #[arg(long)]
    pub no_checkpoint: bool,

    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    All,
}

#[derive(Debug, Serialize)]
pub struct TailsSummary {
    pub schema: &'static str,
    pub command: &'static str,
    pub mode: Mode,
    pub chamber: ChamberType,
    pub x: Vec<f64>,
    pub n_max: usize,
    pub parity: Parity,
    pub fit: TailFit,
    pub alpha: Option<usize>,
    pub predicted_slope: Option<f64>,
    pub kappa: Option<f64>,
    /// Exact mode: `h(x) - E_x[h(S(tau)); tau <= n_max]`.
    pub v_estimate: Option<f64>,
    /// `P(tau > n_max) n_max^(alpha/2)`.
    pub scaled_tail: Option<f64>,
    /// `scaled_tail / (kappa v_estimate)`.
    pub prefactor_ratio: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn run(args: &TailsArgs, cli: &Cli, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let k = dimension(Some(&args.x), args.k)?;
    args.chamber.check_dim(k)?;
    if args.n_max < 1 {
        return Err(CliError::usage("--n-max must be positive"));
    }
    if args.every == 0 || args.checkpoint_every == 0 {
        return Err(CliError::usage("--every and --checkpoint-every must be positive"));
    }
    let dist = distribution(&args.dist, k)?;
    let parity = args.parity.unwrap_or(if has_period_two(&dist) { Parity::Even } else { Parity::All });
    let mut warnings = Vec::new();
    let (curve, v_estimate) = match args.mode {
        Mode::Exact => {
            let spec = LatticeWalkSpec::from_distribution(&dist)?;
            let rows = exact_curve(args, &spec, dir)?;
            let mut f = dir.create(CURVE_FILE)?;
            write_curve_csv(&mut f, &rows)?;
            f.flush()?;
            let last = rows.last().expect("n = 0 is always recorded");
            let curve: Vec<(u64, f64)> = rows.iter().map(|r| (r.n as u64, r.p_survive)).collect();
            (curve, Some(last.v_estimate))
        }
        Mode::Mc => {
            let counts = mc_survival(&dist, args.chamber, &args.x, args.n_max, args.samples, cli.seed)?;
            let mut w = csv::Writer::from_writer(dir.create(CURVE_FILE)?);
            w.write_record(["n", "P_survive", "std_error", "survivors"])?;
            let mut curve = Vec::new();
            for n in recorded(args.n_max, args.every) {
                let (p, se) = counts.probability(n);
                w.write_record([n.to_string(), num(p), num(se), counts.survivors[n].to_string()])?;
                if counts.survivors[n] > 0 {
                    curve.push((n as u64, p));
                }
            }
            w.flush()?;
            if counts.survivors[args.n_max] == 0 {
                let last = curve.last().map_or(0, |c| c.0);
                let msg = format!("no survivors at n = {}; fit window truncated at n = {last}", args.n_max);
                eprintln!("warning: {msg}");
                warnings.push(msg);
            }
            (curve, None)
        }
    };

    let fit_min = args.fit_min.unwrap_or((args.n_max / 4).max(1) as u64).max(1);
    let fit_max = args.fit_max.unwrap_or(args.n_max as u64);
    let window: Vec<(u64, f64)> = curve
        .iter()
        .copied()
        .filter(|(n, p)| (fit_min..=fit_max).contains(n) && *p > 0.0)
        .collect();
    let window = if parity == Parity::Even { even_only(&window) } else { window };
    let fit = tail_fit(&window)?;

    let alpha = alpha(args.chamber, k).ok();
    let kappa = kappa(args.chamber, k).ok();
    let p_last = curve.iter().find(|(n, _)| *n == args.n_max as u64).map(|c| c.1);
    let scaled_tail = match (alpha, p_last) {
        (Some(a), Some(p)) => Some(p * (args.n_max as f64).powf(a as f64 / 2.0)),
        _ => None,
    };
    let prefactor_ratio = match (scaled_tail, kappa, v_estimate) {
        (Some(s), Some(c), Some(v)) => Some(s / (c * v)),
        _ => None,
    };
    let summary = TailsSummary {
        schema: SCHEMA,
        command: "tails",
        mode: args.mode,
        chamber: args.chamber,
        x: args.x.clone(),
        n_max: args.n_max,
        parity,
        fit,
        alpha,
        predicted_slope: alpha.map(|a| -(a as f64) / 2.0),
        kappa,
        v_estimate,
        scaled_tail,
        prefactor_ratio,
        warnings,
    };
    let mut f = dir.create(SUMMARY_FILE)?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    f.flush()?;
    emit(out, &summary)
}

fn recorded(n_max: usize, every: usize) -> impl Iterator<Item = usize> {
    (0..=n_max).filter(move |n| n % every == 0 || *n == n_max)
}

/// Parameters a checkpoint must match to be resumed.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointKey {
    chamber: ChamberType,
    start: Vec<i64>,
    law: String,
    every: usize,
    with_h: bool,
}

struct Checkpoint {
    state: PathBuf,
    rows: PathBuf,
    key: PathBuf,
}

impl Checkpoint {
    fn at(dir: &OutputDir) -> Self {
        Checkpoint {
            state: dir.path(CHECKPOINT_FILE),
            rows: dir.path(&format!("{CHECKPOINT_FILE}.csv")),
            key: dir.path(&format!("{CHECKPOINT_FILE}.json")),
        }
    }

    fn load(&self, key: &CheckpointKey) -> Option<(LatticeDp<f64>, Vec<CurveRow>)> {
        let stored: CheckpointKey = serde_json::from_str(&std::fs::read_to_string(&self.key).ok()?).ok()?;
        if &stored != key {
            return None;
        }
        let dp = LatticeDp::<f64>::load_checkpoint(&self.state).ok()?;
        let mut rows = read_rows(&self.rows).ok()?;
        rows.retain(|r| r.n <= dp.step_index());
        Some((dp, rows))
    }

    fn save(&self, key: &CheckpointKey, dp: &LatticeDp<f64>, rows: &[CurveRow]) -> CliResult<()> {
        std::fs::write(&self.key, serde_json::to_string(key)?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&self.rows)?);
        write_curve_csv(&mut f, rows)?;
        f.flush()?;
        dp.save_checkpoint(&self.state)?;
        Ok(())
    }

    fn remove(&self) {
        for p in [&self.state, &self.rows, &self.key] {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn read_rows(path: &Path) -> CliResult<Vec<CurveRow>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in f.lines().skip(1) {
        let line = line?;
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 5 {
            return Err(CliError::usage("malformed checkpoint rows"));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| CliError::usage("malformed checkpoint rows"));
        rows.push(CurveRow {
            n: v[0].parse().map_err(|_| CliError::usage("malformed checkpoint rows"))?,
            p_survive: parse(v[1])?,
            e_h_restricted: parse(v[2])?,
            v_estimate: parse(v[3])?,
            dropped_mass: parse(v[4])?,
        });
    }
    Ok(rows)
}

fn exact_curve(args: &TailsArgs, spec: &LatticeWalkSpec, dir: &OutputDir) -> CliResult<Vec<CurveRow>> {
    let start = spec.to_lattice(&args.x)?;
    let with_h = !args.no_h;
    let key = CheckpointKey {
        chamber: args.chamber,
        start: start.clone(),
        law: format!("{spec:?}"),
        every: args.every,
        with_h,
    };
    let ckpt = Checkpoint::at(dir);
    let resumed = if args.no_checkpoint { None } else { ckpt.load(&key) };
    let resumed = resumed.filter(|(dp, _)| dp.step_index() <= args.n_max);
    let (mut dp, mut rows) = match resumed {
        Some(r) => r,
        None => {
            let dp = LatticeDp::<f64>::new(spec, args.chamber, &start)?;
            let rows = vec![curve_row(&dp, with_h)];
            (dp, rows)
        }
    };
    while dp.step_index() < args.n_max {
        dp.advance();
        let n = dp.step_index();
        if n % args.every == 0 || n == args.n_max {
            rows.push(curve_row(&dp, with_h));
        }
        if !args.no_checkpoint && n % args.checkpoint_every == 0 && n < args.n_max {
            std::fs::create_dir_all(dir.root())?;
            ckpt.save(&key, &dp, &rows)?;
        }
    }
    rows.retain(|r| r.n <= args.n_max);
    if !args.no_checkpoint {
        ckpt.remove();
    }
    Ok(rows)
}

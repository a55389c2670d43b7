use std::io::Write;
use std::sync::Arc;

use clap::{ArgGroup, Args, ValueEnum};
use serde::Serialize;
use weylwalk::htransform::{
    tilde_v_c, tilde_v_c_regularity, DoobSampler, HFunction, OneDimV, OrderingFunction, VTable, VTableConfig,
    VTableDiagnostics,
};
use weylwalk::stream::par_trajectories;
use weylwalk::{ChamberType, SCHEMA};

use super::{dimension, distribution, item_seed, lattice, num, parse_chamber};
use crate::output::{emit, OutputDir};
use crate::{Cli, CliError, CliResult};

pub const V_TABLE_FILE: &str = "v_table.csv";
pub const TILDE_C_FILE: &str = "tilde_c.csv";
pub const PATHS_FILE: &str = "paths.jsonl";

/// Doob transforms: build a V table, tabulate the alternate type-C function,
/// or sample transformed paths.
///
/// `--build-v` writes `v_table.csv` (x1..xk,V in real coordinates).
/// `--tilde-c` writes `tilde_c.csv` (x1..xk,value,std_error,v_plus_a,
/// v_plus_a_std_error,v_product and, with --regularity, one_step,residual,
/// combined_std_error). `--sample` writes `paths.jsonl`, one path per line.
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("action").required(true).args(["build_v", "tilde_c", "sample"])))]
pub struct TransformArgs {
    /// Solve for V on a window and write the table.
    #[arg(long)]
    pub build_v: bool,

    /// Estimate the alternate type-C function on a grid.
    #[arg(long)]
    pub tilde_c: bool,

    /// Sample paths of the transformed walk.
    #[arg(long)]
    pub sample: bool,

    #[arg(long, value_parser = parse_chamber, default_value = "C")]
    pub chamber: ChamberType,

    #[arg(long)]
    pub k: Option<usize>,

    /// Start point (sample) or spot point (build-v), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,

    /// rademacher, lazy or a JSON law file with integer atoms.
    #[arg(long, default_value = "rademacher")]
    pub dist: String,

    /// Half-width of the V window in lattice units.
    #[arg(long, default_value_t = 200)]
    pub radius: i64,

    /// Keep window points with h_2 >= s h only; `0` disables the switchover.
    #[arg(long, default_value_t = 1.05)]
    pub switchover: f64,

    /// Steps per sampled path.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub paths: u64,

    /// Function used to transform sampled paths.
    #[arg(long, value_enum, default_value_t = Transform::V)]
    pub transform: Transform,

    /// Grid for --tilde-c: lattice points with coordinates in 1..=grid-max.
    #[arg(long, default_value_t = 4)]
    pub grid_max: i64,

    /// Truncation horizon of the exit correction.
    #[arg(long, default_value_t = 400)]
    pub horizon: usize,

    /// Monte Carlo paths per grid point.
    #[arg(long, default_value_t = 4000)]
    pub samples: u64,

    #[arg(long, value_enum, default_value_t = Ordering::SquareDifferences)]
    pub ordering: Ordering,

    /// Window of the one-dimensional V table.
    #[arg(long, default_value_t = 400)]
    pub one_dim_radius: i64,

    /// Also compare each grid value with its one-step average.
    #[arg(long)]
    pub regularity: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Transform {
    /// DP-built V table.
    V,
    /// The chamber's h.
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ordering {
    SquareDifferences,
    Vandermonde,
}

impl From<Ordering> for OrderingFunction {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::SquareDifferences => OrderingFunction::SquareDifferences,
            Ordering::Vandermonde => OrderingFunction::Vandermonde,
        }
    }
}

pub fn run(args: &TransformArgs, cli: &Cli, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    if args.build_v {
        build_v(args, dir, out)
    } else if args.tilde_c {
        tilde_c(args, cli, dir, out)
    } else {
        sample(args, cli, dir, out)
    }
}

fn table_config(args: &TransformArgs) -> CliResult<VTableConfig> {
    if args.radius < 1 {
        return Err(CliError::usage("--radius must be positive"));
    }
    let switchover = if args.switchover == 0.0 { None } else { Some(args.switchover) };
    Ok(VTableConfig { radius: args.radius, switchover, ..VTableConfig::default() })
}

#[derive(Serialize)]
struct BuildRecord {
    schema: &'static str,
    command: &'static str,
    action: &'static str,
    chamber: ChamberType,
    k: usize,
    radius: i64,
    entries: usize,
    diagnostics: VTableDiagnostics,
    spot: Option<Spot>,
}

#[derive(Serialize)]
struct Spot {
    x: Vec<f64>,
    v: f64,
    h: f64,
}

fn build_v(args: &TransformArgs, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let k = dimension(args.x.as_deref(), args.k)?;
    args.chamber.check_dim(k)?;
    let spec = lattice(&args.dist, k)?;
    let table = VTable::build(&spec, args.chamber, table_config(args)?)?;
    let mut f = dir.create(V_TABLE_FILE)?;
    table.write_csv(&mut f)?;
    f.flush()?;
    let spot = match &args.x {
        Some(x) => Some(Spot { x: x.clone(), v: table.value(x)?, h: args.chamber.h(x) }),
        None => None,
    };
    emit(
        out,
        &BuildRecord {
            schema: SCHEMA,
            command: "transform",
            action: "build_v",
            chamber: args.chamber,
            k,
            radius: args.radius,
            entries: table.len(),
            diagnostics: table.diagnostics().clone(),
            spot,
        },
    )
}

#[derive(Serialize)]
struct TildeRecord {
    schema: &'static str,
    command: &'static str,
    action: &'static str,
    x: Vec<f64>,
    value: f64,
    std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    combined_std_error: Option<f64>,
}

/// Lattice points `1 <= c_1 < ... < c_k <= m`.
fn ordered_grid(k: usize, m: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut c: Vec<i64> = (1..=k as i64).collect();
    if k as i64 > m {
        return out;
    }
    loop {
        out.push(c.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if c[i] < m - (k - 1 - i) as i64 {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn tilde_c(args: &TransformArgs, cli: &Cli, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    if args.chamber != ChamberType::C {
        return Err(CliError::usage("the alternate transform lives on chamber C"));
    }
    let k = dimension(args.x.as_deref(), args.k)?;
    let spec = lattice(&args.dist, k)?;
    let one_dim = OneDimV::build(&spec, args.one_dim_radius)?;
    let ordering = OrderingFunction::from(args.ordering);
    let mut w = csv::Writer::from_writer(dir.create(TILDE_C_FILE)?);
    let mut header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    header.extend(["value", "std_error", "v_plus_a", "v_plus_a_std_error", "v_product"].map(String::from));
    if args.regularity {
        header.extend(["one_step", "residual", "combined_std_error"].map(String::from));
    }
    w.write_record(&header)?;
    for (j, c) in ordered_grid(k, args.grid_max).into_iter().enumerate() {
        let x = spec.to_real(&c);
        let seed = item_seed(cli.seed, j as u64);
        let t = tilde_v_c(&one_dim, ordering, &x, args.horizon, args.samples, seed)?;
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.extend([t.value, t.std_error, t.v_plus_a.value, t.v_plus_a.std_error, t.v_product].map(num));
        let mut record = TildeRecord {
            schema: SCHEMA,
            command: "transform",
            action: "tilde_c",
            x: x.clone(),
            value: t.value,
            std_error: t.std_error,
            residual: None,
            combined_std_error: None,
        };
        if args.regularity {
            let r = tilde_v_c_regularity(&one_dim, ordering, &x, args.horizon, args.samples, seed)?;
            row.extend([r.one_step, r.residual, r.combined_std_error].map(num));
            record.residual = Some(r.residual);
            record.combined_std_error = Some(r.combined_std_error);
        }
        w.write_record(&row)?;
        emit(out, &record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PathLine {
    path: u64,
    positions: Vec<Vec<f64>>,
    max_abs_residual: f64,
}

#[derive(Serialize)]
struct SampleRecord {
    schema: &'static str,
    command: &'static str,
    action: &'static str,
    chamber: ChamberType,
    x: Vec<f64>,
    n: usize,
    paths: u64,
    all_in_chamber: bool,
    max_abs_residual: f64,
}

fn sample(args: &TransformArgs, cli: &Cli, dir: &OutputDir, out: &mut dyn Write) -> CliResult<()> {
    let x = args.x.clone().ok_or_else(|| CliError::usage("--sample needs --x"))?;
    let n = args.n.ok_or_else(|| CliError::usage("--sample needs --n"))?;
    let k = dimension(Some(&x), args.k)?;
    args.chamber.check_dim(k)?;
    if args.paths == 0 {
        return Err(CliError::usage("--paths must be positive"));
    }
    let dist = distribution(&args.dist, k)?;
    let v = match args.transform {
        Transform::H => HFunction::h(args.chamber),
        Transform::V => {
            let spec = lattice(&args.dist, k)?;
            HFunction::from_table(Arc::new(VTable::build(&spec, args.chamber, table_config(args)?)?))
        }
    };
    let sampler = DoobSampler::new(&dist, args.chamber, v)?;
    let results = par_trajectories(cli.seed, args.paths, |_, s| sampler.path(&x, n, s));
    let mut f = dir.create(PATHS_FILE)?;
    let mut all_in = true;
    let mut worst = 0.0f64;
    for (i, r) in results.into_iter().enumerate() {
        let p = r?;
        all_in &= p.path.positions.iter().all(|y| args.chamber.holds(y));
        worst = worst.max(p.max_abs_residual);
        emit(&mut f, &PathLine { path: i as u64, positions: p.path.positions, max_abs_residual: p.max_abs_residual })?;
    }
    f.flush()?;
    emit(
        out,
        &SampleRecord {
            schema: SCHEMA,
            command: "transform",
            action: "sample",
            chamber: args.chamber,
            x,
            n,
            paths: args.paths,
            all_in_chamber: all_in,
            max_abs_residual: worst,
        },
    )?;
    if !all_in {
        return Err(CliError::Core(weylwalk::Error::NoConvergence("a transformed path left the chamber".into())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_enumeration() {
        assert_eq!(ordered_grid(2, 3), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(ordered_grid(1, 2), vec![vec![1], vec![2]]);
        assert_eq!(ordered_grid(3, 4).len(), 4);
        assert!(ordered_grid(3, 2).is_empty());
    }
}

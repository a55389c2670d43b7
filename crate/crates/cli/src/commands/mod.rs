pub mod constants;
pub mod limit;
pub mod tails;
pub mod transform;

use std::path::Path;

use weylwalk::exact::LatticeWalkSpec;
use weylwalk::{ChamberType, StepDistribution};

use crate::{CliError, CliResult};

pub(crate) fn parse_chamber(s: &str) -> Result<ChamberType, String> {
    s.parse::<ChamberType>().map_err(|e| e.to_string())
}

/// `rademacher`, `lazy`, `gaussian`, `uniform` (both with unit variance) or a
/// JSON law file, in dimension `k`.
pub(crate) fn distribution(name: &str, k: usize) -> CliResult<StepDistribution> {
    let d = match name {
        "rademacher" => StepDistribution::rademacher(k),
        "lazy" => StepDistribution::lazy(k),
        "gaussian" => StepDistribution::gaussian(k, 1.0)?,
        "uniform" => StepDistribution::uniform(k, 3f64.sqrt())?,
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(CliError::usage(format!(
                    "unknown law {path:?}; expected rademacher, lazy, gaussian, uniform or a JSON file"
                )));
            }
            let d = StepDistribution::from_json_file(p)?;
            if d.dim() == k {
                d
            } else {
                d.with_dim(k)?
            }
        }
    };
    Ok(d)
}

pub(crate) fn lattice(name: &str, k: usize) -> CliResult<LatticeWalkSpec> {
    Ok(LatticeWalkSpec::from_distribution(&distribution(name, k)?)?)
}

/// Dimension from `--x` and `--k`, which must agree when both are given.
pub(crate) fn dimension(x: Option<&[f64]>, k: Option<usize>) -> CliResult<usize> {
    match (x, k) {
        (Some(x), Some(k)) if x.len() != k => {
            Err(CliError::usage(format!("--x has {} coordinates but --k is {k}", x.len())))
        }
        (Some(x), _) if x.is_empty() => Err(CliError::usage("--x is empty")),
        (Some(x), _) => Ok(x.len()),
        (None, Some(k)) if k >= 1 => Ok(k),
        _ => Err(CliError::usage("give --x or --k")),
    }
}

/// Period of the walk's parity: 2 if every step moves each coordinate by an
/// odd integer.
pub(crate) fn has_period_two(dist: &StepDistribution) -> bool {
    match dist.marginal_atoms() {
        Some(atoms) => atoms.iter().all(|(v, _)| v.is_integer() && v.to_integer() % 2u8 != 0u8.into()),
        None => false,
    }
}

/// Independent seed for the `j`-th item of a command.
pub(crate) fn item_seed(seed: u64, j: u64) -> u64 {
    seed ^ (j + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Formats a float so that it parses back to the same value.
pub(crate) fn num(v: f64) -> String {
    format!("{v:e}")
}

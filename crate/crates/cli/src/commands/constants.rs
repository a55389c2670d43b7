use std::io::Write;

use clap::{Args, ValueEnum};
use serde::Serialize;
use weylwalk::asymptotics::constants_row;
use weylwalk::{ChamberType, SCHEMA};

use crate::output::emit;
use crate::{CliError, CliResult};

/// Tail constants `alpha`, `kappa` and `K` per dimension.
///
/// CSV columns: chamber,k,alpha,kappa,K.
#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// Chamber type: C or D.
    #[arg(long, value_parser = super::parse_chamber)]
    pub chamber: ChamberType,

    /// Dimension or inclusive range, e.g. `3` or `1..4`.
    #[arg(long, value_parser = parse_k_range)]
    pub k: (usize, usize),

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub(crate) fn parse_k_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("invalid k {t:?}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let k = parse(s)?;
            (k, k)
        }
    };
    if a == 0 || b < a {
        return Err(format!("invalid k range {s:?}"));
    }
    Ok((a, b))
}

#[derive(Serialize)]
struct Record {
    schema: &'static str,
    command: &'static str,
    #[serde(flatten)]
    row: weylwalk::asymptotics::ConstantsRow,
}

pub fn run(args: &ConstantsArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.chamber == ChamberType::A {
        return Err(CliError::usage("closed-form constants exist for chambers C and D only"));
    }
    let rows = (args.k.0..=args.k.1)
        .map(|k| constants_row(args.chamber, k))
        .collect::<weylwalk::Result<Vec<_>>>()?;
    match args.format {
        Format::Json => {
            for row in rows {
                emit(out, &Record { schema: SCHEMA, command: "constants", row })?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("3"), Ok((3, 3)));
        assert_eq!(parse_k_range("1..3"), Ok((1, 3)));
        assert_eq!(parse_k_range("1..=3"), Ok((1, 3)));
        assert!(parse_k_range("0").is_err());
        assert!(parse_k_range("3..1").is_err());
        assert!(parse_k_range("x").is_err());
    }
}

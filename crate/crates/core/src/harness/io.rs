//! Instance files and CSV logs.
//!
//! An instance file is a UTF-8 header of `key: value` lines ending with a
//! line `---`, followed by `x_true` (n values) and `b` (m values) as
//! little-endian `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Result, SolverError};
use crate::harness::instance::{assemble, Family, Instance, InstanceSpec, RNG_NAME};
use crate::outer::IterationRecord;

pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &[u8] = b"\n---\n";

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SolverError::Format(msg.into()))
}

pub fn encode_instance(inst: &Instance) -> Vec<u8> {
    let s = &inst.spec;
    let mut h = String::new();
    let _ = writeln!(h, "format_version: {FORMAT_VERSION}");
    let _ = writeln!(h, "rng: {RNG_NAME}");
    let _ = writeln!(h, "seed: {}", s.seed);
    let _ = writeln!(h, "n: {}", s.n);
    let _ = writeln!(h, "m: {}", s.m);
    match s.family {
        Family::L1 { sparsity } => {
            let _ = writeln!(h, "family: l1");
            let _ = writeln!(h, "k: {sparsity}");
        }
        Family::Group { groups, active } => {
            let _ = writeln!(h, "family: group");
            let _ = writeln!(h, "l: {groups}");
            let _ = writeln!(h, "s: {active}");
        }
    }
    // `{:?}` on f64 round-trips exactly.
    let _ = writeln!(h, "d: {:?}", s.dynamic_range_db);
    let _ = writeln!(h, "nu: {:?}", s.nu);
    let _ = writeln!(h, "noise_scale: {:?}", s.noise_scale);
    let _ = writeln!(h, "lambda: {:?}", inst.lambda);
    let rows: Vec<String> = inst.rows.iter().map(|r| r.to_string()).collect();
    let _ = write!(h, "J: {}", rows.join(","));
    let mut out = h.into_bytes();
    out.extend_from_slice(SEPARATOR);
    for v in inst.x_true.iter().chain(inst.b.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_instance(bytes: &[u8]) -> Result<Instance> {
    let Some(pos) = bytes.windows(SEPARATOR.len()).position(|w| w == SEPARATOR) else {
        return fmt_err("missing header terminator");
    };
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|e| SolverError::Format(e.to_string()))?;
    let body = &bytes[pos + SEPARATOR.len()..];
    let mut fields = std::collections::HashMap::new();
    for line in header.lines() {
        let Some((k, v)) = line.split_once(':') else {
            return fmt_err(format!("malformed header line {line:?}"));
        };
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<&String> {
        fields
            .get(k)
            .ok_or_else(|| SolverError::Format(format!("missing header field {k}")))
    };
    fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| SolverError::Format(format!("cannot parse {k} = {v:?}")))
    }
    let version: u32 = parse("format_version", get("format_version")?)?;
    if version != FORMAT_VERSION {
        return fmt_err(format!("unsupported format version {version}"));
    }
    let n: usize = parse("n", get("n")?)?;
    let m: usize = parse("m", get("m")?)?;
    let family = match get("family")?.as_str() {
        "l1" => Family::L1 {
            sparsity: parse("k", get("k")?)?,
        },
        "group" => Family::Group {
            groups: parse("l", get("l")?)?,
            active: parse("s", get("s")?)?,
        },
        other => return fmt_err(format!("unknown family {other}")),
    };
    let spec = InstanceSpec {
        n,
        m,
        family,
        dynamic_range_db: parse("d", get("d")?)?,
        nu: parse("nu", get("nu")?)?,
        noise_scale: parse("noise_scale", get("noise_scale")?)?,
        seed: parse("seed", get("seed")?)?,
    };
    let lambda: f64 = parse("lambda", get("lambda")?)?;
    let j = get("J")?;
    let rows: Vec<usize> = if j.is_empty() {
        Vec::new()
    } else {
        j.split(',').map(|r| parse("J", r)).collect::<Result<_>>()?
    };
    if body.len() != 8 * (n + m) {
        return fmt_err(format!("expected {} payload bytes, found {}", 8 * (n + m), body.len()));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let x_true = DVector::from_column_slice(&vals[..n]);
    let b = DVector::from_column_slice(&vals[n..]);
    assemble(spec, rows, x_true, b, Some(lambda))
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    fs::write(path, encode_instance(inst))?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    decode_instance(&fs::read(path)?)
}

pub const ITERATION_COLUMNS: [&str; 12] = [
    "k",
    "phi",
    "g_norm",
    "d_norm",
    "alpha",
    "ls_trials",
    "inner_iters",
    "cg_total",
    "cert_residual",
    "cert_bound",
    "lh_current",
    "wall_ms",
];

/// Per-iteration log. With `timing = false` the `wall_ms` column is zero so
/// that repeated runs produce identical files.
pub fn iteration_csv(records: &[IterationRecord], timing: bool) -> String {
    let mut s = ITERATION_COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let lh = r.lh_current.map(|v| format!("{v:e}")).unwrap_or_default();
        let wall = if timing { r.wall_ms } else { 0.0 };
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{},{},{},{:e},{:e},{},{:.3}",
            r.k,
            r.phi,
            r.g_norm,
            r.d_norm,
            r.alpha,
            r.ls_trials,
            r.inner_iters,
            r.cg_total,
            r.cert_residual,
            r.cert_bound,
            lh,
            wall
        );
    }
    s
}

pub fn write_iteration_csv(path: &Path, records: &[IterationRecord], timing: bool) -> Result<()> {
    fs::write(path, iteration_csv(records, timing))?;
    Ok(())
}

//! Plain-text records: state-space matrices, synthesis summaries, FIR
//! coefficients and trajectories.
//!
//! Reals are written with `{:.16e}` (17 significant digits), which is enough
//! for every `f64` to read back bit-identically.

use std::fmt::Write as _;

use crate::lti::{Mat, StateSpaceModel, Trajectory};
use crate::param::BlockSet;
use crate::synth::SynthesisResult;
use crate::{Error, Result};

const MODEL_HEADER: &str = "%%StateSpaceModel";

pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_matrix(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    if m.ncols() == 0 {
        return;
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_real(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// ```text
/// %%StateSpaceModel states=n inputs=m outputs=p
/// A n n
/// <n rows of n reals>
/// B n m
/// ...
/// C p n
/// ...
/// D p m
/// ...
/// ```
/// Matrices with no columns have no row lines. Blank lines and lines starting
/// with `#` are ignored when reading.
pub fn model_to_text(model: &StateSpaceModel) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MODEL_HEADER} states={} inputs={} outputs={}",
        model.states(),
        model.inputs(),
        model.outputs()
    );
    write_matrix(&mut out, "A", model.a());
    write_matrix(&mut out, "B", model.b());
    write_matrix(&mut out, "C", model.c());
    write_matrix(&mut out, "D", model.d());
    out
}

fn parse_usize(tok: Option<&str>, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("expected an integer for {what}")))
}

fn header_field(tokens: &[&str], key: &str) -> Result<usize> {
    let prefix = format!("{key}=");
    let value = tokens
        .iter()
        .find_map(|t| t.strip_prefix(&prefix))
        .ok_or_else(|| Error::Parse(format!("header is missing '{key}='")))?;
    parse_usize(Some(value), key)
}

pub fn model_from_text(text: &str) -> Result<StateSpaceModel> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty model record".into()))?
        .split_whitespace()
        .collect();
    if header.first() != Some(&MODEL_HEADER) {
        return Err(Error::Parse(format!("model record must start with {MODEL_HEADER}")));
    }
    let (n, m, p) = (
        header_field(&header, "states")?,
        header_field(&header, "inputs")?,
        header_field(&header, "outputs")?,
    );
    let mut read = |name: &str, rows: usize, cols: usize| -> Result<Mat> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing matrix {name}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&name) {
            return Err(Error::Parse(format!("expected matrix {name}, found '{line}'")));
        }
        let (r, c) = (parse_usize(tokens.get(1).copied(), name)?, parse_usize(tokens.get(2).copied(), name)?);
        if (r, c) != (rows, cols) {
            return Err(Error::Parse(format!("{name} is declared {r}x{c}, header implies {rows}x{cols}")));
        }
        let mut mat = Mat::zeros(r, c);
        for i in (0..r).filter(|_| c > 0) {
            let row = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("{name} ends after {i} rows")))?;
            let values: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{name}: '{t}': {e}"))))
                .collect::<Result<_>>()?;
            if values.len() != c {
                return Err(Error::Parse(format!("{name} row {i} has {} entries, expected {c}", values.len())));
            }
            for (j, v) in values.into_iter().enumerate() {
                mat[(i, j)] = v;
            }
        }
        Ok(mat)
    };
    let a = read("A", n, n)?;
    let b = read("B", n, m)?;
    let c = read("C", p, n)?;
    let d = read("D", p, m)?;
    StateSpaceModel::new(a, b, c, d)
}

/// `key=value` summary of a synthesis run.
pub fn synthesis_record(result: &SynthesisResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "%%SynthesisResult");
    let _ = writeln!(out, "kind={}", result.kind);
    let _ = writeln!(out, "horizon={}", result.horizon);
    let _ = writeln!(out, "h2_norm={}", format_real(result.h2_norm));
    let _ = writeln!(out, "cost_squared={}", format_real(result.cost_squared));
    let _ = writeln!(out, "kkt_residual={}", format_real(result.kkt_residual));
    let _ = writeln!(out, "constraint_residual={}", format_real(result.constraint_residual));
    let _ = writeln!(out, "flat_directions={}", result.flat_directions);
    let _ = writeln!(out, "variables={}", result.solution.len());
    out
}

/// One row per coefficient entry: `block,lag,row,col,value`.
pub fn coefficients_csv(blocks: &BlockSet) -> String {
    let mut out = String::from("block,lag,row,col,value\n");
    for (name, h) in blocks.iter() {
        for (k, c) in h.coeffs().iter().enumerate() {
            for i in 0..c.nrows() {
                for j in 0..c.ncols() {
                    let _ = writeln!(out, "{},{k},{i},{j},{}", name.label(), format_real(c[(i, j)]));
                }
            }
        }
    }
    out
}

/// `t,x1..xn,y1..yp,u1..um` with `t = step · dt`.
pub fn trajectory_csv(traj: &Trajectory, dt: f64) -> String {
    let dims = |v: &[nalgebra::DVector<f64>]| v.first().map_or(0, |s| s.len());
    let (n, p, m) = (dims(&traj.x), dims(&traj.y), dims(&traj.u));
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for t in 0..traj.x.len() {
        let mut row = vec![format_real(t as f64 * dt)];
        for v in [&traj.x[t], &traj.y[t], &traj.u[t]] {
            row.extend(v.iter().map(|x| format_real(*x)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn static_gain_record_has_empty_state_blocks() {
        let k = StateSpaceModel::static_gain(dmatrix![-2.0, 0.5]);
        let text = model_to_text(&k);
        assert!(text.starts_with("%%StateSpaceModel states=0 inputs=2 outputs=1\nA 0 0\nB 0 2\nC 1 0\nD 1 2\n"));
        let back = model_from_text(&text).unwrap();
        assert_eq!(back.d(), k.d());
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(matches!(model_from_text(""), Err(Error::Parse(_))));
        assert!(matches!(model_from_text("%%StateSpaceModel states=1 inputs=1 outputs=1\nA 1 1\n0.5\n"), Err(Error::Parse(_))));
        let wrong = "%%StateSpaceModel states=1 inputs=1 outputs=1\nA 1 1\n0.5 2\nB 1 1\n1\nC 1 1\n1\nD 1 1\n0\n";
        assert!(matches!(model_from_text(wrong), Err(Error::Parse(_))));
    }

    proptest! {
        #[test]
        fn model_text_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 9), tiny in -1e-300f64..1e-300) {
            let a = dmatrix![values[0], values[1]; values[2], tiny];
            let model = StateSpaceModel::new(
                a,
                dmatrix![values[3]; values[4]],
                dmatrix![values[5], values[6]],
                dmatrix![values[7] * values[8]],
            ).unwrap();
            let back = model_from_text(&model_to_text(&model)).unwrap();
            prop_assert_eq!(back.a(), model.a());
            prop_assert_eq!(back.b(), model.b());
            prop_assert_eq!(back.c(), model.c());
            prop_assert_eq!(back.d(), model.d());
        }
    }
}

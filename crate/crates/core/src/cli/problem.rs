//! JSON problem files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::examples::forward_euler;
use crate::lti::{FirTransferMatrix, Mat, StateSpaceModel};
use crate::param::{BlockName, BlockSet, ParameterizationKind};
use crate::{Error, Result};

/// Row-major nested array.
pub type MatrixRows = Vec<Vec<f64>>;

/// `x⁺ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a: MatrixRows,
    pub b: MatrixRows,
    pub c: MatrixRows,
}

/// Continuous-time matrices to be sampled before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub a: MatrixRows,
    pub b: MatrixRows,
    pub c: MatrixRows,
    pub method: String,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(default)]
    pub a: MatrixRows,
    #[serde(default)]
    pub b: MatrixRows,
    #[serde(default)]
    pub c: MatrixRows,
    pub d: MatrixRows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatrixRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<MatrixRows>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Points of the frequency grid used for peak gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Problem description read by every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<Discretization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Options>,
    /// Stable stabilizing initial controller for unstable plants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<ControllerSpec>,
    /// Fixed FIR blocks keyed by label (`Phi_xx`, …), each a list of
    /// coefficient matrices starting at lag 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<BTreeMap<String, Vec<MatrixRows>>>,
}

/// Dense matrix from nested rows. Empty `rows` yields `expected_rows × expected_cols`
/// zeros when both are given, so zero-state blocks can be written as `[]`.
pub fn to_matrix(rows: &MatrixRows, what: &str, expected: (Option<usize>, Option<usize>)) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(expected.1.unwrap_or(0), Vec::len);
    if r == 0 {
        return Ok(Mat::zeros(expected.0.unwrap_or(0), expected.1.unwrap_or(0)));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{what} is not rectangular")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{what} has non-finite entries")));
    }
    if let Some(er) = expected.0 {
        if er != r {
            return Err(Error::Parse(format!("{what} has {r} rows, expected {er}")));
        }
    }
    if let Some(ec) = expected.1 {
        if ec != c {
            return Err(Error::Parse(format!("{what} has {c} columns, expected {ec}")));
        }
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> MatrixRows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn write_json(v: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Array(items) if items.iter().all(|x| !x.is_array() && !x.is_object()) => {
            out.push_str(&serde_json::to_string(v).expect("scalars serialize"));
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json(x, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("keys serialize"));
                out.push_str(": ");
                write_json(x, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalars serialize")),
    }
}

fn plant_from(a: &MatrixRows, b: &MatrixRows, c: &MatrixRows, what: &str) -> Result<(Mat, Mat, Mat)> {
    let a = to_matrix(a, &format!("{what}.a"), (None, None))?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Parse(format!("{what}.a must be square")));
    }
    let b = to_matrix(b, &format!("{what}.b"), (Some(n), None))?;
    let c = to_matrix(c, &format!("{what}.c"), (None, Some(n)))?;
    Ok((a, b, c))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("problem file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    /// Pretty JSON with each matrix row kept on one line.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("problem files always serialize");
        let mut out = String::new();
        write_json(&value, 0, &mut out);
        out.push('\n');
        out
    }

    /// Schema checks beyond what the JSON shape enforces.
    pub fn validate(&self) -> Result<()> {
        match (&self.plant, &self.discretization) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse("give either 'plant' or 'discretization', not both".into()))
            }
            (None, None) => return Err(Error::Parse("problem file needs 'plant' or 'discretization'".into())),
            _ => {}
        }
        if let Some(d) = &self.discretization {
            if d.method != "forward-euler" {
                return Err(Error::Parse(format!("unsupported discretization method '{}'", d.method)));
            }
            if !(d.dt > 0.0 && d.dt.is_finite()) {
                return Err(Error::Parse(format!("discretization dt must be positive, got {}", d.dt)));
            }
        }
        let plant = self.plant()?;
        self.weights(&plant, ParameterizationKind::Iop)?;
        self.initial_controller(&plant)?;
        self.fixture_blocks(&plant)?;
        if let Some(kind) = &self.kind {
            kind.parse::<ParameterizationKind>()?;
        }
        Ok(())
    }

    /// The discrete-time plant, sampling first when requested.
    pub fn plant(&self) -> Result<StateSpaceModel> {
        if let Some(p) = &self.plant {
            let (a, b, c) = plant_from(&p.a, &p.b, &p.c, "plant")?;
            return StateSpaceModel::strictly_proper(a, b, c);
        }
        let d = self
            .discretization
            .as_ref()
            .ok_or_else(|| Error::Parse("problem file needs 'plant' or 'discretization'".into()))?;
        let (a, b, c) = plant_from(&d.a, &d.b, &d.c, "discretization")?;
        forward_euler(&a, &b, &c, d.dt)
    }

    /// Sampling time for time axes; 1 without a discretization directive.
    pub fn sample_time(&self) -> f64 {
        self.discretization.as_ref().map_or(1.0, |d| d.dt)
    }

    /// `(Q, R)`, identities where absent.
    pub fn weights(&self, plant: &StateSpaceModel, kind: ParameterizationKind) -> Result<(Mat, Mat)> {
        let q_dim = match kind {
            ParameterizationKind::SimplifiedStateFeedback => plant.states(),
            _ => plant.outputs(),
        };
        let m = plant.inputs();
        let w = self.weights.clone().unwrap_or_default();
        let q = match &w.q {
            Some(rows) => to_matrix(rows, "weights.q", (None, None))?,
            None => Mat::identity(q_dim, q_dim),
        };
        let r = match &w.r {
            Some(rows) => to_matrix(rows, "weights.r", (Some(m), Some(m)))?,
            None => Mat::identity(m, m),
        };
        Ok((q, r))
    }

    pub fn kind(&self) -> Result<Option<ParameterizationKind>> {
        self.kind.as_deref().map(str::parse).transpose()
    }

    pub fn options(&self) -> Options {
        self.options.clone().unwrap_or_default()
    }

    pub fn initial_controller(&self, plant: &StateSpaceModel) -> Result<Option<StateSpaceModel>> {
        let Some(k) = &self.k0 else { return Ok(None) };
        let (m, p) = (plant.inputs(), plant.outputs());
        let a = to_matrix(&k.a, "k0.a", (None, None))?;
        let q = a.nrows();
        let b = to_matrix(&k.b, "k0.b", (Some(q), Some(p)))?;
        let c = to_matrix(&k.c, "k0.c", (Some(m), Some(q)))?;
        let d = to_matrix(&k.d, "k0.d", (Some(m), Some(p)))?;
        StateSpaceModel::new(a, b, c, d).map(Some)
    }

    pub fn fixture_blocks(&self, plant: &StateSpaceModel) -> Result<Option<BlockSet>> {
        let Some(f) = &self.fixture else { return Ok(None) };
        let mut out = BlockSet::new();
        for (label, coeffs) in f {
            let name: BlockName = label.parse()?;
            let (r, c) = name.shape(plant);
            let mats = coeffs
                .iter()
                .enumerate()
                .map(|(k, rows)| to_matrix(rows, &format!("fixture.{label}[{k}]"), (Some(r), Some(c))))
                .collect::<Result<Vec<_>>>()?;
            out.insert(name, FirTransferMatrix::new(mats)?);
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_plant_forms_are_rejected() {
        let text = r#"{"plant": {"a": [[0.5]], "b": [[1]], "c": [[1]]},
                      "discretization": {"a": [[0]], "b": [[1]], "c": [[1]], "method": "forward-euler", "dt": 0.1}}"#;
        assert!(matches!(ProblemFile::from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn ragged_and_mismatched_matrices_are_rejected() {
        let ragged = r#"{"plant": {"a": [[0.5, 0], [1]], "b": [[1], [0]], "c": [[1, 0]]}}"#;
        assert!(ProblemFile::from_json(ragged).is_err());
        let wrong_b = r#"{"plant": {"a": [[0.5]], "b": [[1], [0]], "c": [[1]]}}"#;
        assert!(ProblemFile::from_json(wrong_b).is_err());
        let zero_dt = r#"{"discretization": {"a": [[0]], "b": [[1]], "c": [[1]], "method": "forward-euler", "dt": 0}}"#;
        assert!(ProblemFile::from_json(zero_dt).is_err());
        let unknown = r#"{"plant": {"a": [[0.5]], "b": [[1]], "c": [[1]]}, "horizen": 3}"#;
        assert!(ProblemFile::from_json(unknown).is_err());
    }

    #[test]
    fn json_output_reads_back() {
        let text = r#"{"name": "t", "plant": {"a": [[0.5, 1e-300], [0, 2]], "b": [[1], [0]], "c": [[1, 0]]},
                      "weights": {"r": [[3]]}, "horizon": 4, "fixture": {"Phi_yy": [[[1]], [[0.1]]]}}"#;
        let file = ProblemFile::from_json(text).unwrap();
        let out = file.to_json();
        assert!(out.contains("[0.5, 1e-300]") || out.contains("[0.5,1e-300]"));
        assert_eq!(ProblemFile::from_json(&out).unwrap(), file);
    }

    #[test]
    fn static_initial_controller_uses_empty_state_blocks() {
        let text = r#"{"plant": {"a": [[2]], "b": [[1]], "c": [[1]]}, "k0": {"d": [[-2]]}}"#;
        let file = ProblemFile::from_json(text).unwrap();
        let k0 = file.initial_controller(&file.plant().unwrap()).unwrap().unwrap();
        assert_eq!((k0.states(), k0.inputs(), k0.outputs()), (0, 1, 1));
    }
}

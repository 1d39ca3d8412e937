//! JSON instance and config files, dense-matrix CSV fixtures.
//!
//! Instance documents use the field names `n, A, b, C, c, C_tilde, c_tilde, W, objective`
//! with matrices as nested row arrays. Floats are written in shortest round-trip form and
//! parsed exactly, so write-then-read reproduces every bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problems::{MixedProblemData, NodeObjective, QuadraticSpec};
use crate::solvers::SlidingConfig;
use crate::worstcase::{WorstInstance, WorstInstanceSpec};

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveFile {
    Quadratic {
        #[serde(rename = "Q")]
        q_mat: Rows,
        q: Vec<f64>,
        #[serde(default)]
        mu_shift: f64,
    },
}

/// On-disk form of [`MixedProblemData`]. Absent constraint groups are empty lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "A", default)]
    pub a: Vec<Rows>,
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C", default)]
    pub c: Vec<Rows>,
    #[serde(rename = "c", default)]
    pub c_vec: Vec<Vec<f64>>,
    #[serde(rename = "C_tilde", default)]
    pub c_tilde: Vec<Rows>,
    #[serde(rename = "c_tilde", default)]
    pub c_tilde_vec: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Rows,
    pub objective: Vec<ObjectiveFile>,
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &Rows, what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Format(format!("{what}: ragged rows")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vec_of(v: &[f64]) -> Vector {
    Vector::from_column_slice(v)
}

impl InstanceFile {
    pub fn from_data(data: &MixedProblemData) -> Result<Self> {
        let objective = data
            .objective
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                NodeObjective::Quadratic(s) => Ok(ObjectiveFile::Quadratic {
                    q_mat: rows_of(&s.q_mat),
                    q: s.q.iter().copied().collect(),
                    mu_shift: s.mu_shift,
                }),
                NodeObjective::Oracle(_) => {
                    Err(Error::Format(format!("node {i}: only quadratic objectives can be serialized")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let vecs = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
        Ok(Self {
            n: data.n,
            a: data.a.iter().map(rows_of).collect(),
            b: vecs(&data.b),
            c: data.c.iter().map(rows_of).collect(),
            c_vec: vecs(&data.c_vec),
            c_tilde: data.c_tilde.iter().map(rows_of).collect(),
            c_tilde_vec: vecs(&data.c_tilde_vec),
            w: rows_of(&data.w),
            objective,
        })
    }

    /// Converts to problem data, checking shapes and feasibility.
    pub fn to_data(&self) -> Result<MixedProblemData> {
        let mats = |ms: &[Rows], what: &str| -> Result<Vec<Matrix>> {
            ms.iter().enumerate().map(|(i, m)| matrix_of(m, &format!("{what}[{i}]"))).collect()
        };
        let vecs = |vs: &[Vec<f64>]| vs.iter().map(|v| vec_of(v)).collect::<Vec<_>>();
        let objective = self
            .objective
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                ObjectiveFile::Quadratic { q_mat, q, mu_shift } => Ok(NodeObjective::Quadratic(QuadraticSpec {
                    q_mat: matrix_of(q_mat, &format!("objective[{i}].Q"))?,
                    q: vec_of(q),
                    mu_shift: *mu_shift,
                })),
            })
            .collect::<Result<Vec<_>>>()?;
        let data = MixedProblemData {
            n: self.n,
            a: mats(&self.a, "A")?,
            b: vecs(&self.b),
            c: mats(&self.c, "C")?,
            c_vec: vecs(&self.c_vec),
            c_tilde: mats(&self.c_tilde, "C_tilde")?,
            c_tilde_vec: vecs(&self.c_tilde_vec),
            w: matrix_of(&self.w, "W")?,
            objective,
        };
        data.dims()?;
        for (i, f) in data.objective.iter().enumerate() {
            if let NodeObjective::Quadratic(s) = f {
                if s.q_mat.nrows() != s.q.len() || s.q_mat.ncols() != s.q.len() {
                    return Err(Error::Format(format!("objective[{i}]: Q and q shapes disagree")));
                }
            }
        }
        data.check_feasible()?;
        Ok(data)
    }
}

pub fn instance_to_json(data: &MixedProblemData) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_data(data)?)?)
}

pub fn instance_from_json(text: &str) -> Result<MixedProblemData> {
    serde_json::from_str::<InstanceFile>(text)?.to_data()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Parses a JSON file; format errors name the file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_instance(path: &Path) -> Result<MixedProblemData> {
    read_json::<InstanceFile>(path)?.to_data()
}

pub fn write_instance(path: &Path, data: &MixedProblemData) -> Result<()> {
    write_text(path, &instance_to_json(data)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Apapc,
    ApapcRegularized,
    Sliding,
    SlidingRestart,
}

/// Solver section of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Target accuracy for the convex and nonsmooth methods.
    pub eps: f64,
    /// Bound on the distance from the start to a solution. Required by the regularized
    /// and sliding methods unless a dense solution is available.
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub max_iters: Option<usize>,
    /// Fixed-point tolerance of APAPC; the default is set by the caller.
    pub tol: Option<f64>,
    pub schedule_overrides: SlidingConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Apapc,
            eps: 1e-6,
            r: None,
            max_iters: None,
            tol: None,
            schedule_overrides: SlidingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub target: f64,
    pub measured: f64,
}

/// On-disk form of a worst-case instance: the spec, construction constants and data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorstInstanceFile {
    pub spec: WorstInstanceSpec,
    pub l_prime: f64,
    pub mu_prime: f64,
    pub kappa_product: f64,
    pub rho: f64,
    pub measurements: Vec<Measurement>,
    pub instance: InstanceFile,
}

pub fn worst_instance_to_json(spec: &WorstInstanceSpec, inst: &WorstInstance) -> Result<String> {
    let file = WorstInstanceFile {
        spec: spec.clone(),
        l_prime: inst.l_prime,
        mu_prime: inst.mu_prime,
        kappa_product: inst.kappa_product,
        rho: inst.rho,
        measurements: inst
            .measurements
            .iter()
            .map(|(name, target, measured)| Measurement { name: name.clone(), target: *target, measured: *measured })
            .collect(),
        instance: InstanceFile::from_data(&inst.data)?,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Dense matrix from CSV text: one row per line, no header.
pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_of(&rows, "csv matrix")
}

pub fn matrix_to_csv(m: &Matrix) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    matrix_from_csv(&read_text(path)?)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &matrix_to_csv(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::generate::{random_instance, InstanceSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instance_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = InstanceSpec { d_tilde: 2, p: 1, p_tilde: 1, ..Default::default() };
        let (data, _, _) = random_instance(&mut rng, &spec).unwrap();
        let text = instance_to_json(&data).unwrap();
        let back = instance_from_json(&text).unwrap();
        assert_eq!(InstanceFile::from_data(&back).unwrap(), InstanceFile::from_data(&data).unwrap());
        for (x, y) in data.a.iter().zip(&back.a) {
            assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert_eq!(instance_to_json(&back).unwrap(), text);
    }

    #[test]
    fn infeasible_file_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = InstanceSpec { d: 1, m: 6, ..Default::default() };
        let (mut data, _, _) = random_instance(&mut rng, &spec).unwrap();
        data.b[0][0] += 1.0;
        let text = instance_to_json(&data).unwrap();
        assert!(matches!(instance_from_json(&text), Err(Error::Infeasible(_))));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_instance(Path::new("/nonexistent/instance.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/instance.json"));
    }

    #[test]
    fn csv_matrix_round_trip() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, -0.1, 1e-300, 3.5, 0.0, 7.0 / 3.0]);
        assert_eq!(matrix_from_csv(&matrix_to_csv(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn solver_config_defaults() {
        let c: SolverConfig = serde_json::from_str(r#"{"method": "sliding_restart", "R": 2.0}"#).unwrap();
        assert_eq!(c.method, Method::SlidingRestart);
        assert_eq!(c.r, Some(2.0));
        assert_eq!(c.schedule_overrides, SlidingConfig::default());
    }
}

//! Instance data: CSV ingestion, summary statistics, and the synthetic
//! correlated instance generator.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A regression instance: `n` observations of `m` explanatory variables plus
/// the response vector `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    /// Row-major observation matrix, `a[i * m + j]`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub var_names: Vec<String>,
    /// RNG seed when the instance was generated synthetically.
    pub seed: Option<u64>,
}

impl Instance {
    pub fn new(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>, var_names: Vec<String>) -> Result<Self> {
        let inst = Instance { n, m, a, b, var_names, seed: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidInstance(format!("need n >= 3, got {}", self.n)));
        }
        if self.m < 1 {
            return Err(Error::InvalidInstance("need m >= 1".into()));
        }
        if self.a.len() != self.n * self.m || self.b.len() != self.n {
            return Err(Error::InvalidInstance("dimension mismatch".into()));
        }
        if self.var_names.len() != self.m {
            return Err(Error::InvalidInstance("var_names length mismatch".into()));
        }
        let mut names = self.var_names.clone();
        names.sort();
        names.dedup();
        if names.len() != self.m {
            return Err(Error::InvalidInstance("duplicate variable names".into()));
        }
        if self.a.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite entry".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.m + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, j)).collect()
    }

    /// True when the instance requires the penalized fat-case objectives.
    pub fn is_fat(&self) -> bool {
        self.m > self.n.saturating_sub(2)
    }

    /// New instance keeping only the given columns, in the given order.
    pub fn restrict_columns(&self, cols: &[usize]) -> Instance {
        let m = cols.len();
        let mut a = Vec::with_capacity(self.n * m);
        for i in 0..self.n {
            for &j in cols {
                a.push(self.at(i, j));
            }
        }
        Instance {
            n: self.n,
            m,
            a,
            b: self.b.clone(),
            var_names: cols.iter().map(|&j| self.var_names[j].clone()).collect(),
            seed: self.seed,
        }
    }
}

/// Summary statistics used throughout the solver stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceStats {
    /// Number of observations, copied from the instance.
    pub n: usize,
    /// Mean of the response.
    pub b_bar: f64,
    /// Total absolute deviation of the response from its mean.
    pub t_max: f64,
    /// Error of the no-variable model, `t_max / (n - 1)`.
    pub mae_0: f64,
    /// Squared-error counterpart of `mae_0`.
    pub mse_0: f64,
    /// Full-model mean absolute error, `SAE_full / (n - 1 - m)`.
    /// `None` for fat instances where the denominator is not positive.
    pub mae_m: Option<f64>,
    /// Sum of absolute errors of the full-model LAD fit.
    pub sae_full: f64,
}

/// Computes the summary statistics. The full-model values come from an
/// actual LAD fit over all `m` variables.
pub fn compute_stats(inst: &Instance) -> Result<InstanceStats> {
    inst.validate()?;
    let n = inst.n as f64;
    let b_bar = inst.b.iter().sum::<f64>() / n;
    let t_max: f64 = inst.b.iter().map(|&bi| (bi - b_bar).abs()).sum();
    let mae_0 = t_max / (n - 1.0);
    let mse_0 = inst.b.iter().map(|&bi| (bi - b_bar).powi(2)).sum::<f64>() / (n - 1.0);
    let full: Vec<usize> = (0..inst.m).collect();
    let fit = crate::objectives::lad_fit(inst, &full)?;
    let sae_full = fit.sae();
    let mae_m = if inst.m + 2 <= inst.n {
        Some(sae_full / (n - 1.0 - inst.m as f64))
    } else {
        None
    };
    Ok(InstanceStats { n: inst.n, b_bar, t_max, mae_0, mse_0, mae_m, sae_full })
}

/// Sidecar metadata written next to generated CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub rho_seed: f64,
    /// The response is drawn from a normal with this standard deviation.
    pub b_sigma: f64,
}

/// Generates a synthetic instance. Columns come in groups of five: column
/// `5g` is correlated to `b` with coefficient 0.2, and columns `5g+1..5g+5`
/// are correlated to column `5g` with a coefficient drawn uniformly from
/// `[0.5, 0.8]`.
pub fn generate(m: usize, n: usize, seed: u64) -> Result<Instance> {
    if m < 5 || m % 5 != 0 {
        return Err(Error::InvalidArgument(format!(
            "m must be a positive multiple of 5, got {m}"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resp = Normal::new(0.0, 5.0).expect("valid normal");
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let b: Vec<f64> = (0..n).map(|_| resp.sample(&mut rng)).collect();

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let rho_range = Uniform::new(0.5, 0.8);
    for _ in 0..m / 5 {
        let seed_col = correlated_column(&b, 0.2, &mut rng, &std_normal);
        let parent = seed_col.clone();
        cols.push(seed_col);
        for _ in 0..4 {
            let rho = rng.sample(rho_range);
            cols.push(correlated_column(&parent, rho, &mut rng, &std_normal));
        }
    }

    let mut a = Vec::with_capacity(n * m);
    for i in 0..n {
        for col in &cols {
            a.push(col[i]);
        }
    }
    let var_names = (1..=m).map(|j| format!("x{j}")).collect();
    let mut inst = Instance::new(n, m, a, b, var_names)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// `rho * standardize(parent) + sqrt(1 - rho^2) * eps`, so the population
/// correlation to `parent` is exactly `rho`.
fn correlated_column<R: Rng>(parent: &[f64], rho: f64, rng: &mut R, std_normal: &Normal<f64>) -> Vec<f64> {
    let n = parent.len() as f64;
    let mean = parent.iter().sum::<f64>() / n;
    let var = parent.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt().max(f64::MIN_POSITIVE);
    let tail = (1.0 - rho * rho).sqrt();
    parent
        .iter()
        .map(|&v| rho * (v - mean) / sd + tail * std_normal.sample(rng))
        .collect()
}

/// Loads an instance from CSV. The header must contain a response column
/// named `b`; every other column is a predictor.
pub fn load_csv(path: &Path) -> Result<Instance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse { row: 0, col: 0, msg: e.to_string() })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::CsvParse { row: 0, col: 0, msg: e.to_string() })?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let b_col = headers
        .iter()
        .position(|h| h == "b")
        .ok_or_else(|| Error::CsvParse { row: 0, col: 0, msg: "no response column named 'b'".into() })?;
    {
        let mut sorted = headers.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != headers.len() {
            return Err(Error::InvalidInstance("duplicate column names".into()));
        }
    }
    let var_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != b_col)
        .map(|(_, h)| h.clone())
        .collect();
    let m = var_names.len();
    if m == 0 {
        return Err(Error::InvalidInstance("no predictor columns".into()));
    }

    let mut a = Vec::new();
    let mut b = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvParse { row: row_idx + 1, col: 0, msg: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::CsvParse {
                row: row_idx + 1,
                col: 0,
                msg: format!("expected {} cells, got {}", headers.len(), record.len()),
            });
        }
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                row: row_idx + 1,
                col: col_idx,
                msg: format!("cannot parse {cell:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    row: row_idx + 1,
                    col: col_idx,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            if col_idx == b_col {
                b.push(value);
            } else {
                a.push(value);
            }
        }
    }
    let n = b.len();
    Instance::new(n, m, a, b, var_names)
}

/// Writes the instance in the same CSV layout `load_csv` reads.
pub fn save_csv(inst: &Instance, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let mut header = vec!["b".to_string()];
    header.extend(inst.var_names.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for i in 0..inst.n {
        let mut row = vec![format!("{}", inst.b[i])];
        for j in 0..inst.m {
            row.push(format!("{}", inst.at(i, j)));
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(())
}

/// Sample Pearson correlation between two columns.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx).powi(2);
        syy += (yi - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

//! Output files with pinned CSV schemas.
//!
//! Headers are part of the public interface: change them only together with
//! [`SCHEMA_VERSION`].

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Version of the CSV layouts below, recorded in every manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// `walk-c`: coordinates, then these columns.
pub const WALK_C_COLUMNS: &[&str] = &["C", "tail_bound", "asymptotic", "difference"];
/// `solve`: coordinates, then these columns.
pub const SOLVE_COLUMNS: &[&str] = &["C", "f", "H", "G", "err_est"];
/// `oracle`: coordinates, then these columns.
pub const ORACLE_COLUMNS: &[&str] = &["H", "error"];
/// `validate-asymptotics` summary per direction: direction index and
/// components, then these columns.
pub const FIT_COLUMNS: &[&str] = &["prefactor", "predicted", "deviation", "exponent_H", "exponent_G"];
/// `validate-asymptotics` plot data.
pub const PREFACTOR_HEADER: &[&str] = &["direction", "radius", "prefactor", "predicted"];
/// `srbm` with `task = "gamma"`.
pub const GAMMA_HEADER: &[&str] = &["radius", "gamma_hat", "stderr", "phi_reference", "five_c_phi"];
/// `srbm` with `task = "lambda"`.
pub const LAMBDA_HEADER: &[&str] = &["n", "mean_weight", "stderr"];
/// `srbm` with `task = "domination"`.
pub const DOMINATION_HEADER: &[&str] = &["radius", "sum_hat", "stderr", "five_c_phi", "pass"];
/// `srbm` with `task = "amplitude"`.
pub const AMPLITUDE_HEADER: &[&str] = &[
    "lambda",
    "sigma2_moment",
    "sigma2_derived",
    "a_d",
    "predicted",
    "measured",
    "band_low",
    "band_high",
    "within_band",
];

/// `x1, …, xd` followed by `columns`.
pub fn coordinate_header(dim: usize, columns: &[&str]) -> Vec<String> {
    (1..=dim)
        .map(|i| format!("x{i}"))
        .chain(columns.iter().map(|c| c.to_string()))
        .collect()
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Collects the files written by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory `{}`", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Write a CSV file in one pass.
    pub fn csv<H, R>(&mut self, name: &str, header: H, rows: R) -> Result<()>
    where
        H: IntoIterator,
        H::Item: AsRef<[u8]>,
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.root.join(name);
        let mut writer = csv::Writer::from_path(&path)
            .with_context(|| format!("cannot create `{}`", path.display()))?;
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(&row)?;
        }
        writer
            .flush()
            .with_context(|| format!("cannot write `{}`", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write `{}`", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

//! Output directory with a reproducibility manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fluortraj::io::{write_json, write_table, FloatFormat};
use serde::Serialize;
use serde_json::Value;

use crate::config::{RunConfig, GAMMA};
use crate::error::CliResult;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
    config: &'a RunConfig,
    gamma: f64,
    time_unit: &'static str,
    gamma_mhz: Option<f64>,
    threads: usize,
    float_format: FloatFormat,
    tolerances: &'a BTreeMap<String, f64>,
    files: &'a [String],
    summary: &'a BTreeMap<String, Value>,
}

pub struct Output {
    pub dir: PathBuf,
    pub format: FloatFormat,
    command: String,
    gamma_mhz: Option<f64>,
    files: Vec<String>,
    tolerances: BTreeMap<String, f64>,
    summary: BTreeMap<String, Value>,
}

impl Output {
    pub fn create(dir: &Path, command: &str, exact_floats: bool, gamma_mhz: Option<f64>) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format: if exact_floats { FloatFormat::Hex } else { FloatFormat::Decimal },
            command: command.to_string(),
            gamma_mhz,
            files: Vec::new(),
            tolerances: BTreeMap::new(),
            summary: BTreeMap::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn table<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let path = self.path(name);
        write_table(path, header, rows, self.format)?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        write_json(&path, value)?;
        Ok(())
    }

    pub fn tolerance(&mut self, name: &str, value: f64) {
        self.tolerances.insert(name.to_string(), value);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn finish(self, config: &RunConfig) -> CliResult<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            args: std::env::args().skip(1).collect(),
            config,
            gamma: GAMMA,
            time_unit: "T1",
            gamma_mhz: self.gamma_mhz,
            threads: rayon::current_num_threads(),
            float_format: self.format,
            tolerances: &self.tolerances,
            files: &self.files,
            summary: &self.summary,
        };
        write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(())
    }
}

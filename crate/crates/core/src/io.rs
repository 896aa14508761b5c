//! CSV tables and JSON sidecars.
//!
//! Floats are written either as shortest round-trip decimals or as C99 hex
//! literals (`0x1.8p+1`); both parse back bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::ensemble::{Ensemble, SimOptions, Trajectory};
use crate::error::{Error, Result};
use crate::measure::{Readout, Scheme, SchemeConfig};
use crate::rng::trajectory_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloatFormat {
    #[default]
    Decimal,
    Hex,
}

impl FloatFormat {
    pub fn format(self, v: f64) -> String {
        match self {
            FloatFormat::Decimal => format!("{v:?}"),
            FloatFormat::Hex => format_hex(v),
        }
    }
}

/// Hex literal of `v`; subnormals use the `0x0.` form with exponent −1022.
pub fn format_hex(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    format!("{sign}0x{lead}{frac}p{e:+}")
}

/// Parses decimal or hex floats, plus `inf`, `-inf` and `nan`.
pub fn parse_float(s: &str) -> Result<f64> {
    let t = s.trim();
    let unsigned = t.strip_prefix(['-', '+']).unwrap_or(t);
    if unsigned.starts_with("0x") || unsigned.starts_with("0X") {
        return hexf_parse::parse_hexf64(t, false).map_err(|e| Error::Parse(format!("{t:?}: {e}")));
    }
    t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}")))
}

/// Sidecar written next to an ensemble CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub config: SchemeConfig,
    pub master_seed: u64,
    pub initial: BlochVector,
    pub t_final: f64,
    pub options: SimOptions,
    pub trajectories: usize,
    pub float_format: FloatFormat,
    pub distance: String,
}

impl EnsembleMeta {
    pub fn of(e: &Ensemble, float_format: FloatFormat) -> Self {
        Self {
            config: e.config,
            master_seed: e.master_seed,
            initial: e.initial,
            t_final: e.t_final,
            options: e.options,
            trajectories: e.len(),
            float_format,
            distance: "trace".into(),
        }
    }
}

fn readout_columns(scheme: Scheme) -> &'static [&'static str] {
    match scheme {
        Scheme::Photodetect => &["click"],
        Scheme::Homodyne | Scheme::HomodyneInefficient => &["r"],
        Scheme::Heterodyne => &["r_i", "r_q"],
    }
}

fn readout_fields(ro: &Readout, fmt: FloatFormat) -> Vec<String> {
    match *ro {
        Readout::Jump { clicked } => vec![u8::from(clicked).to_string()],
        Readout::Dyne { r } => vec![fmt.format(r)],
        Readout::DualDyne { r_i, r_q } => vec![fmt.format(r_i), fmt.format(r_q)],
    }
}

/// One row per (trajectory, time). Readout columns hold the outcome that
/// leaves the state on that row and are blank on the last row.
pub fn write_ensemble_csv<W: Write>(e: &Ensemble, out: W, fmt: FloatFormat) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let extra = readout_columns(e.config.scheme);
    let with_readouts = e.options.keep_readouts;
    let mut header = vec!["index", "t", "x", "y", "z"];
    if with_readouts {
        header.extend_from_slice(extra);
    }
    w.write_record(&header)?;
    for tr in &e.trajectories {
        for (k, (t, q)) in tr.times.iter().zip(&tr.states).enumerate() {
            let mut row = vec![
                tr.index.to_string(),
                fmt.format(*t),
                fmt.format(q.x),
                fmt.format(q.y),
                fmt.format(q.z),
            ];
            if with_readouts {
                match tr.readouts.get(k) {
                    Some(ro) => row.extend(readout_fields(ro, fmt)),
                    None => row.extend(extra.iter().map(|_| String::new())),
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_readout(scheme: Scheme, fields: &[&str]) -> Result<Readout> {
    Ok(match scheme {
        Scheme::Photodetect => Readout::Jump {
            clicked: match fields[0] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Parse(format!("click flag {other:?}"))),
            },
        },
        Scheme::Homodyne | Scheme::HomodyneInefficient => Readout::Dyne {
            r: parse_float(fields[0])?,
        },
        Scheme::Heterodyne => Readout::DualDyne {
            r_i: parse_float(fields[0])?,
            r_q: parse_float(fields[1])?,
        },
    })
}

/// Inverse of [`write_ensemble_csv`]; header fields come from the sidecar.
pub fn read_ensemble_csv<R: std::io::Read>(input: R, meta: &EnsembleMeta) -> Result<Ensemble> {
    let mut rd = csv::Reader::from_reader(input);
    let extra = readout_columns(meta.config.scheme).len();
    let with_readouts = meta.options.keep_readouts;
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let expected = 5 + if with_readouts { extra } else { 0 };
        if rec.len() != expected {
            return Err(Error::Shape(format!("row has {} fields, expected {expected}", rec.len())));
        }
        let index: u64 = rec[0]
            .parse()
            .map_err(|e| Error::Parse(format!("index {:?}: {e}", &rec[0])))?;
        if trajectories.last().map(|t| t.index) != Some(index) {
            trajectories.push(Trajectory {
                times: Vec::new(),
                states: Vec::new(),
                readouts: Vec::new(),
                scheme: Some(meta.config.scheme),
                index,
                seed: trajectory_seed(meta.master_seed, index),
            });
        }
        let tr = trajectories.last_mut().expect("pushed above");
        tr.times.push(parse_float(&rec[1])?);
        tr.states.push(BlochVector::new(
            parse_float(&rec[2])?,
            parse_float(&rec[3])?,
            parse_float(&rec[4])?,
        ));
        if with_readouts && !rec[5].is_empty() {
            let fields: Vec<&str> = rec.iter().skip(5).collect();
            tr.readouts.push(parse_readout(meta.config.scheme, &fields)?);
        }
    }
    if trajectories.len() != meta.trajectories {
        return Err(Error::Shape(format!(
            "{} trajectories in csv, sidecar says {}",
            trajectories.len(),
            meta.trajectories
        )));
    }
    Ok(Ensemble {
        master_seed: meta.master_seed,
        config: meta.config,
        initial: meta.initial,
        t_final: meta.t_final,
        options: meta.options,
        trajectories,
    })
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn save_ensemble(e: &Ensemble, dir: &Path, stem: &str, fmt: FloatFormat) -> Result<()> {
    let csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    write_ensemble_csv(e, csv, fmt)?;
    write_json(&dir.join(format!("{stem}.json")), &EnsembleMeta::of(e, fmt))
}

pub fn load_ensemble(dir: &Path, stem: &str) -> Result<Ensemble> {
    let meta: EnsembleMeta = read_json(&dir.join(format!("{stem}.json")))?;
    let csv = BufReader::new(File::open(dir.join(format!("{stem}.csv")))?);
    read_ensemble_csv(csv, &meta)
}

/// Plain numeric table with a header row.
pub fn write_table<P, I>(path: P, header: &[&str], rows: I, fmt: FloatFormat) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Shape(format!("row of {} values for {} columns", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&v| fmt.format(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

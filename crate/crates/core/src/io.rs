//! File formats: strain and PSD input, CSV/JSON artefacts with a provenance
//! header, written atomically.
//!
//! Strain comes either as CSV with columns `t,strain` or as raw little-endian
//! `f64` samples next to a `<file>.json` sidecar holding `{fs_hz, t0_s}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{Psd, SnrSeries, TimeSeries};
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "qmf";

/// Tool version, configuration echo and seed stamped onto every artefact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
        }
    }

    /// Single `#` comment line for CSV headers.
    pub fn csv_comment(&self) -> String {
        let seed = self
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# {} {} command={} seed={} config={}",
            self.tool, self.version, self.command, seed, self.config
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// CSV with a provenance comment line, a header and `rows` already formatted.
pub fn csv_bytes<I, R>(prov: &Provenance, header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = Vec::new();
    writeln!(out, "{}", prov.csv_comment()).expect("writing to a Vec cannot fail");
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Numeric(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Numeric(e.to_string()))
}

pub fn write_csv<I, R>(path: &Path, prov: &Provenance, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    write_atomic(path, &csv_bytes(prov, header, rows)?)
}

/// Pretty JSON of `body` with an added `provenance` field.
pub fn json_bytes<T: Serialize>(prov: &Provenance, body: &T) -> Result<Vec<u8>> {
    let mut value = serde_json::to_value(body).map_err(|e| Error::Numeric(e.to_string()))?;
    let prov = serde_json::to_value(prov).map_err(|e| Error::Numeric(e.to_string()))?;
    let merged = match value {
        serde_json::Value::Object(ref mut map) => {
            let mut out = serde_json::Map::new();
            out.insert("provenance".into(), prov);
            out.extend(std::mem::take(map));
            serde_json::Value::Object(out)
        }
        other => serde_json::json!({ "provenance": prov, "result": other }),
    };
    let mut bytes =
        serde_json::to_vec_pretty(&merged).map_err(|e| Error::Numeric(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: &T) -> Result<()> {
    write_atomic(path, &json_bytes(prov, body)?)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Parses a JSON file into `T`.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| parse_err(path, e.to_string()))
}

fn numeric_columns(path: &Path, expect: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(parse_err(
                path,
                format!("row {} has {} fields, expected 2", line + 1, record.len()),
            ));
        }
        if line == 0 && record[0].eq_ignore_ascii_case(expect[0]) {
            if !record[1].eq_ignore_ascii_case(expect[1]) {
                return Err(parse_err(
                    path,
                    format!("expected header {},{}", expect[0], expect[1]),
                ));
            }
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(path, format!("row {}: {s:?} is not a number", line + 1)))
        };
        rows.push((num(&record[0])?, num(&record[1])?));
    }
    Ok(rows)
}

fn uniform_step(path: &Path, xs: &[f64], what: &str) -> Result<f64> {
    if xs.len() < 2 {
        return Err(parse_err(path, "need at least two rows"));
    }
    let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if !(step > 0.0) || !step.is_finite() {
        return Err(parse_err(path, format!("{what} column is not increasing")));
    }
    for (j, w) in xs.windows(2).enumerate() {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
            return Err(parse_err(
                path,
                format!("{what} spacing is not uniform at row {}", j + 2),
            ));
        }
    }
    Ok(step)
}

/// Reads strain CSV `t,strain`; the sample rate comes from the time column.
pub fn read_strain_csv(path: &Path) -> Result<TimeSeries> {
    let rows = numeric_columns(path, ["t", "strain"])?;
    let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let dt = uniform_step(path, &times, "time")?;
    TimeSeries::new(rows.iter().map(|r| r.1).collect(), dt, times[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub fs_hz: f64,
    #[serde(default)]
    pub t0_s: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Reads raw little-endian `f64` strain plus its JSON sidecar.
pub fn read_strain_raw(path: &Path) -> Result<TimeSeries> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 8 != 0 {
        return Err(parse_err(
            path,
            format!("{} bytes is not a whole number of f64", bytes.len()),
        ));
    }
    let meta: RawSidecar = read_json(&sidecar_path(path))?;
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    TimeSeries::from_rate(samples, meta.fs_hz, meta.t0_s)
}

pub fn write_strain_raw(path: &Path, ts: &TimeSeries) -> Result<()> {
    let bytes: Vec<u8> = ts.samples().iter().flat_map(|x| x.to_le_bytes()).collect();
    write_atomic(path, &bytes)?;
    let meta = RawSidecar {
        fs_hz: ts.fs(),
        t0_s: ts.t0(),
    };
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Numeric(e.to_string()))?;
    write_atomic(&sidecar_path(path), &json)
}

/// CSV for `.csv` paths, raw binary otherwise.
pub fn read_strain(path: &Path) -> Result<TimeSeries> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_strain_csv(path)
    } else {
        read_strain_raw(path)
    }
}

pub fn strain_csv_bytes(prov: &Provenance, ts: &TimeSeries) -> Result<Vec<u8>> {
    csv_bytes(
        prov,
        &["t", "strain"],
        ts.samples()
            .iter()
            .enumerate()
            .map(|(j, x)| [fmt_f64(ts.time(j)), fmt_f64(*x)]),
    )
}

/// Reads a one-sided PSD CSV `f_hz,sn` sampled uniformly from 0 Hz.
pub fn read_psd_csv(path: &Path) -> Result<Psd> {
    let rows = numeric_columns(path, ["f_hz", "sn"])?;
    let freqs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let df = uniform_step(path, &freqs, "frequency")?;
    if freqs[0].abs() > 1e-9 * df {
        return Err(parse_err(path, "PSD must start at 0 Hz"));
    }
    Psd::new(rows.iter().map(|r| r.1).collect(), df)
}

pub fn psd_rows(psd: &Psd) -> impl Iterator<Item = [String; 2]> + '_ {
    psd.values()
        .iter()
        .enumerate()
        .map(|(k, v)| [fmt_f64(psd.frequency(k)), fmt_f64(*v)])
}

pub fn snr_rows<'a>(snr: &'a SnrSeries, t0: f64) -> impl Iterator<Item = [String; 2]> + 'a {
    snr.rho
        .iter()
        .enumerate()
        .map(move |(j, r)| [fmt_f64(t0 + j as f64 * snr.dt), fmt_f64(*r)])
}

/// Shortest representation that round-trips.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("test", Some(3), serde_json::json!({"a": 1}))
    }

    #[test]
    fn csv_has_provenance_then_header() {
        let bytes =
            csv_bytes(&prov(), &["b", "probability"], [["0", "0.5"], ["1", "0.5"]]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# qmf "));
        assert!(lines[0].contains("seed=3"));
        assert!(lines[0].contains(r#"config={"a":1}"#));
        assert_eq!(&lines[1..], ["b,probability", "0,0.5", "1,0.5"]);
    }

    #[test]
    fn json_carries_provenance() {
        let bytes = json_bytes(&prov(), &serde_json::json!({"rho_max": 2.0})).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["provenance"]["seed"], 3);
        assert_eq!(v["rho_max"], 2.0);
    }

    #[test]
    fn strain_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ts = TimeSeries::from_rate(vec![0.0, 1.5, -2.25, 1e-21], 4.0, 10.0).unwrap();

        let csv_path = dir.path().join("s.csv");
        write_atomic(&csv_path, &strain_csv_bytes(&prov(), &ts).unwrap()).unwrap();
        let back = read_strain(&csv_path).unwrap();
        assert_eq!(back.samples(), ts.samples());
        assert!((back.fs() - 4.0).abs() < 1e-9);
        assert_eq!(back.t0(), 10.0);

        let raw = dir.path().join("s.f64");
        write_strain_raw(&raw, &ts).unwrap();
        assert_eq!(read_strain(&raw).unwrap(), ts);
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "t,strain\n0,1\n0.5,x\n").unwrap();
        assert!(matches!(read_strain_csv(&p), Err(Error::Parse { .. })));
        fs::write(&p, "t,strain\n0,1\n0.5,2\n0.7,3\n").unwrap();
        assert!(read_strain_csv(&p).is_err(), "irregular sampling");
        fs::write(&p, "0,1\n1,nan\n").unwrap();
        assert!(matches!(
            read_strain_csv(&p),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            read_strain_csv(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
        let raw = dir.path().join("odd.f64");
        fs::write(&raw, [0u8; 12]).unwrap();
        assert!(read_strain_raw(&raw).is_err());
    }

    #[test]
    fn psd_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let psd = Psd::new(vec![f64::INFINITY, 2.0, 3.0, f64::INFINITY], 0.5).unwrap();
        let p = dir.path().join("psd.csv");
        write_csv(&p, &prov(), &["f_hz", "sn"], psd_rows(&psd)).unwrap();
        assert_eq!(read_psd_csv(&p).unwrap(), psd);
        fs::write(&p, "f_hz,sn\n1,1\n2,1\n").unwrap();
        assert!(read_psd_csv(&p).is_err(), "must start at DC");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

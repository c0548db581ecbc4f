//! CSV and JSON persistence of stage outputs.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the values bit for bit. Timestamps are RFC 3339 in UTC.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::detect::ScorePanel;
use crate::error::{Error, Result};
use crate::market_data::{parse_timestamp, PricePanel, ReturnPanel};
use crate::month::Month;
use crate::realized_cov::RealizedCovSeries;
use crate::regime::{Detector, Regime, RegimeSeries};

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row: row as u64 + 2,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, row: usize, raw: &str) -> Result<f64> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, row, format!("`{raw}` is not a number")))
}

/// A CSV with one key column followed by numeric columns.
struct Table {
    header: Vec<String>,
    keys: Vec<String>,
    values: DMatrix<f64>,
}

fn read_table(path: &Path, key: &str) -> Result<Table> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some(key) {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: key.to_string(),
        });
    }
    let width = header.len() - 1;
    let mut keys = Vec::new();
    let mut flat = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(parse_err(path, row, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        keys.push(rec[0].trim().to_string());
        for raw in rec.iter().skip(1) {
            flat.push(parse_f64(path, row, raw)?);
        }
    }
    Ok(Table {
        header: header[1..].to_vec(),
        values: DMatrix::from_row_slice(keys.len(), width, &flat),
        keys,
    })
}

fn write_table(path: &Path, key: &str, header: &[String], keys: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once(key).chain(header.iter().map(String::as_str)))?;
    for (i, k) in keys.iter().enumerate() {
        let mut rec = vec![k.clone()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_timestamps(path: &Path, keys: &[String]) -> Result<Vec<DateTime<Utc>>> {
    keys.iter()
        .enumerate()
        .map(|(i, k)| parse_timestamp(k).ok_or_else(|| parse_err(path, i, format!("bad timestamp `{k}`"))))
        .collect()
}

fn parse_months(path: &Path, keys: &[String]) -> Result<Vec<Month>> {
    keys.iter()
        .enumerate()
        .map(|(i, k)| k.parse().map_err(|_| parse_err(path, i, format!("bad month `{k}`"))))
        .collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `timestamp,<instrument>...` with price levels.
pub fn write_price_panel(path: impl AsRef<Path>, panel: &PricePanel) -> Result<()> {
    let keys: Vec<String> = panel.timestamps.iter().map(format_timestamp).collect();
    let levels = panel.log_prices.map(f64::exp);
    write_table(path.as_ref(), "timestamp", &panel.instruments, &keys, &levels)
}

pub fn read_price_panel(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let t = read_table(path, "timestamp")?;
    if t.values.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid(format!("{}: prices must be positive", path.display())));
    }
    Ok(PricePanel {
        timestamps: parse_timestamps(path, &t.keys)?,
        instruments: t.header,
        log_prices: t.values.map(f64::ln),
    })
}

/// `timestamp,<instrument>...` with one return per cell.
pub fn write_return_panel(path: impl AsRef<Path>, panel: &ReturnPanel) -> Result<()> {
    let keys: Vec<String> = panel.timestamps().iter().map(format_timestamp).collect();
    write_table(path.as_ref(), "timestamp", panel.instruments(), &keys, panel.returns())
}

pub fn read_return_panel(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let t = read_table(path, "timestamp")?;
    ReturnPanel::new(parse_timestamps(path, &t.keys)?, t.header, t.values)
}

/// `month,rows,<row:col>...` where the `row:col` columns are in `vech` order.
pub fn write_rcov(path: impl AsRef<Path>, rcov: &RealizedCovSeries) -> Result<()> {
    let keys: Vec<String> = rcov.months.iter().map(Month::to_string).collect();
    let mut header = vec!["rows".to_string()];
    header.extend(rcov.vech_header());
    let vech = rcov.vech_matrix();
    let mut values = DMatrix::zeros(rcov.len(), vech.ncols() + 1);
    for i in 0..rcov.len() {
        values[(i, 0)] = rcov.observations[i] as f64;
        for j in 0..vech.ncols() {
            values[(i, j + 1)] = vech[(i, j)];
        }
    }
    write_table(path.as_ref(), "month", &header, &keys, &values)
}

pub fn read_rcov(path: impl AsRef<Path>) -> Result<RealizedCovSeries> {
    let path = path.as_ref();
    let t = read_table(path, "month")?;
    if t.header.first().map(String::as_str) != Some("rows") {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: "rows".into(),
        });
    }
    // the first column of vech order lists `instrument_i:instrument_1`
    let mut instruments = Vec::new();
    for label in &t.header[1..] {
        let (row, col) = label
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("{}: vech column `{label}` is not row:col", path.display())))?;
        if instruments.first().is_some_and(|first: &String| first != col) {
            break;
        }
        instruments.push(row.to_string());
    }
    let months = parse_months(path, &t.keys)?;
    let observations = t.values.column(0).iter().map(|v| *v as usize).collect();
    let vech = t.values.columns(1, t.values.ncols() - 1).into_owned();
    let rcov = RealizedCovSeries::from_vech(months, instruments, &vech, observations)?;
    if rcov.vech_header() != t.header[1..] {
        return Err(Error::invalid(format!("{}: vech header is not in vech order", path.display())));
    }
    Ok(rcov)
}

/// `month,trace,<component>...`; the covariance trace travels with the
/// scores because every detector labels regimes by it.
pub fn write_scores(path: impl AsRef<Path>, panel: &ScorePanel) -> Result<()> {
    let keys: Vec<String> = panel.months.iter().map(Month::to_string).collect();
    let mut header = vec!["trace".to_string()];
    header.extend(panel.names.iter().cloned());
    let (t, k) = panel.scores.shape();
    let values = DMatrix::from_fn(t, k + 1, |i, j| if j == 0 { panel.traces[i] } else { panel.scores[(i, j - 1)] });
    write_table(path.as_ref(), "month", &header, &keys, &values)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScorePanel> {
    let path = path.as_ref();
    let t = read_table(path, "month")?;
    if t.header.first().map(String::as_str) != Some("trace") || t.header.len() < 2 {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: "trace".into(),
        });
    }
    let traces = t.values.column(0).iter().copied().collect();
    let scores = t.values.columns(1, t.values.ncols() - 1).into_owned();
    ScorePanel::new(parse_months(path, &t.keys)?, t.header[1..].to_vec(), scores, traces)
}

/// `month,detector,regime,transition`; `transition` is empty for detectors
/// without one.
pub fn write_regimes(path: impl AsRef<Path>, regimes: &RegimeSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["month", "detector", "regime", "transition"])?;
    for (i, (m, r)) in regimes.months.iter().zip(&regimes.labels).enumerate() {
        let g = regimes
            .transition_values
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        w.write_record([m.to_string().as_str(), regimes.detector.as_str(), r.as_str(), g.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_regimes(path: impl AsRef<Path>) -> Result<RegimeSeries> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (mc, rc) = (col("month")?, col("regime")?);
    let dc = header.iter().position(|h| h == "detector");
    let gc = header.iter().position(|h| h == "transition");
    let mut detector = None;
    let mut months = Vec::new();
    let mut labels = Vec::new();
    let mut transition = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim().to_string();
        months.push(field(mc).parse::<Month>().map_err(|e| parse_err(path, row, e.to_string()))?);
        labels.push(field(rc).parse::<Regime>().map_err(|e| parse_err(path, row, e.to_string()))?);
        if let Some(c) = dc {
            let d: Detector = field(c).parse().map_err(|e: Error| parse_err(path, row, e.to_string()))?;
            if detector.is_some_and(|prev| prev != d) {
                return Err(parse_err(path, row, "mixed detectors in one label file"));
            }
            detector = Some(d);
        }
        if let Some(c) = gc {
            let raw = field(c);
            if !raw.is_empty() {
                transition.push(parse_f64(path, row, &raw)?);
            }
        }
    }
    if months.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!("{}: months must be strictly increasing", path.display())));
    }
    let transition_values = match transition.len() {
        0 => None,
        n if n == months.len() => Some(transition),
        _ => return Err(Error::invalid(format!("{}: transition column partly empty", path.display()))),
    };
    Ok(RegimeSeries {
        detector: detector.unwrap_or(Detector::Truth),
        months,
        labels,
        transition_values,
        warnings: Vec::new(),
    })
}

/// Row-level ground truth: `timestamp,month,b_bar,high_vol`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTruth {
    pub timestamps: Vec<DateTime<Utc>>,
    pub months: Vec<Month>,
    pub b_bar: Vec<f64>,
    pub high_vol: Vec<bool>,
}

pub fn write_truth(path: impl AsRef<Path>, truth: &RowTruth) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["timestamp", "month", "b_bar", "high_vol"])?;
    for i in 0..truth.timestamps.len() {
        w.write_record([
            format_timestamp(&truth.timestamps[i]),
            truth.months[i].to_string(),
            truth.b_bar[i].to_string(),
            (truth.high_vol[i] as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<RowTruth> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected = ["timestamp", "month", "b_bar", "high_vol"];
    if header != expected {
        return Err(Error::invalid(format!(
            "{}: header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    let mut out = RowTruth {
        timestamps: Vec::new(),
        months: Vec::new(),
        b_bar: Vec::new(),
        high_vol: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.timestamps
            .push(parse_timestamp(&rec[0]).ok_or_else(|| parse_err(path, row, "bad timestamp"))?);
        out.months.push(rec[1].parse().map_err(|e: Error| parse_err(path, row, e.to_string()))?);
        out.b_bar.push(parse_f64(path, row, &rec[2])?);
        out.high_vol.push(match rec[3].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_err(path, row, format!("bad flag `{other}`"))),
        });
    }
    Ok(out)
}

/// Square matrix with row and column labels, e.g. the ordered dissimilarity.
pub fn write_labelled_matrix(path: impl AsRef<Path>, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_table(path.as_ref(), "label", labels, labels, m)
}

/// Generic numeric table with a leading key column.
pub fn write_columns(path: impl AsRef<Path>, key: &str, header: &[String], keys: &[String], values: &DMatrix<f64>) -> Result<()> {
    write_table(path.as_ref(), key, header, keys, values)
}

//! Hourly price ingestion, log returns and calendar alignment.
//!
//! Price files are CSV with a header row. The caller names the timestamp
//! column and the price column through [`CsvFormat`]. Timestamps are parsed as
//! ISO-8601; values without an offset are taken to be UTC.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::month::Month;

/// Column mapping for a single-instrument price file.
#[derive(Debug, Clone)]
pub struct CsvFormat {
    pub instrument_id: String,
    pub timestamp_column: String,
    pub price_column: String,
}

impl CsvFormat {
    pub fn new(instrument_id: impl Into<String>) -> Self {
        CsvFormat {
            instrument_id: instrument_id.into(),
            timestamp_column: "timestamp".to_string(),
            price_column: "price".to_string(),
        }
    }
}

/// Strictly time-ordered, strictly positive prices of one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    instrument_id: String,
    timestamps: Vec<DateTime<Utc>>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from observations in any order. Rejects duplicate
    /// timestamps and non-positive prices.
    pub fn new(
        instrument_id: impl Into<String>,
        mut observations: Vec<(DateTime<Utc>, f64)>,
    ) -> Result<Self> {
        let instrument_id = instrument_id.into();
        for (ts, p) in &observations {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::invalid(format!(
                    "{instrument_id}: non-positive price {p} at {ts}"
                )));
            }
        }
        observations.sort_by_key(|(ts, _)| *ts);
        if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!(
                "{instrument_id}: duplicate timestamp {}",
                w[0].0
            )));
        }
        let (timestamps, prices) = observations.into_iter().unzip();
        Ok(PriceSeries {
            instrument_id,
            timestamps,
            prices,
        })
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Parses an ISO-8601 timestamp. Accepts `2010-01-04T10:00`, seconds,
/// fractional seconds, a space separator, an explicit offset or `Z`, and a
/// bare date (midnight).
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    const NAIVE: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc());
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M%:z", "%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M%:z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.with_timezone(&Utc));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

/// Loads one instrument from a CSV file. Errors carry the 1-based line number
/// of the offending record (the header is line 1).
pub fn load_prices(path: impl AsRef<Path>, format: &CsvFormat) -> Result<PriceSeries> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let ts_col = column(&format.timestamp_column)?;
    let px_col = column(&format.price_column)?;

    let mut rows: Vec<(DateTime<Utc>, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let raw_ts = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("unparseable timestamp `{raw_ts}`"),
        })?;
        let raw_px = record.get(px_col).unwrap_or("");
        let price: f64 = raw_px.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("unparseable price `{raw_px}`"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::NonPositivePrice {
                path: path.to_path_buf(),
                row,
                value: price,
            });
        }
        rows.push((ts, price, row));
    }

    rows.sort_by_key(|(ts, _, row)| (*ts, *row));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateTimestamp {
            path: path.to_path_buf(),
            row: w[1].2,
            timestamp: w[1].0.to_rfc3339(),
        });
    }

    PriceSeries::new(
        format.instrument_id.clone(),
        rows.into_iter().map(|(ts, p, _)| (ts, p)).collect(),
    )
}

/// `r_t = ln p_t - ln p_{t-1}`.
pub fn log_returns(series: &PriceSeries) -> Result<Vec<f64>> {
    log_returns_of(series.prices())
}

pub(crate) fn log_returns_of(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::TooShort {
            what: "log returns".into(),
            needed: 2,
            got: prices.len(),
        });
    }
    Ok(prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
}

/// Log price levels of several instruments on their common timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub timestamps: Vec<DateTime<Utc>>,
    pub instruments: Vec<String>,
    /// One row per timestamp, one column per instrument.
    pub log_prices: DMatrix<f64>,
}

impl PricePanel {
    /// Differences consecutive rows. The first timestamp is consumed.
    pub fn returns(&self) -> Result<ReturnPanel> {
        let t = self.log_prices.nrows();
        if t < 2 {
            return Err(Error::TooShort {
                what: "aligned price panel".into(),
                needed: 2,
                got: t,
            });
        }
        let n = self.log_prices.ncols();
        let returns =
            DMatrix::from_fn(t - 1, n, |i, j| self.log_prices[(i + 1, j)] - self.log_prices[(i, j)]);
        ReturnPanel::new(self.timestamps[1..].to_vec(), self.instruments.clone(), returns)
    }
}

/// Intraday returns of N instruments on a common calendar. Row `t` holds the
/// return ending at `timestamps[t]` and belongs to `months[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    timestamps: Vec<DateTime<Utc>>,
    instruments: Vec<String>,
    returns: DMatrix<f64>,
    months: Vec<Month>,
}

impl ReturnPanel {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        instruments: Vec<String>,
        returns: DMatrix<f64>,
    ) -> Result<Self> {
        if instruments.len() < 2 {
            return Err(Error::invalid("a return panel needs at least 2 instruments"));
        }
        if returns.nrows() != timestamps.len() || returns.ncols() != instruments.len() {
            return Err(Error::DimensionMismatch(format!(
                "returns are {}x{}, expected {}x{}",
                returns.nrows(),
                returns.ncols(),
                timestamps.len(),
                instruments.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("panel timestamps must be strictly increasing"));
        }
        let months = timestamps.iter().map(Month::of).collect();
        Ok(ReturnPanel {
            timestamps,
            instruments,
            returns,
            months,
        })
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn months(&self) -> &[Month] {
        &self.months
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    /// Distinct months in order, with the half-open row range of each.
    pub fn month_ranges(&self) -> Vec<(Month, std::ops::Range<usize>)> {
        let mut out: Vec<(Month, std::ops::Range<usize>)> = Vec::new();
        for (i, m) in self.months.iter().enumerate() {
            match out.last_mut() {
                Some((last, range)) if last == m => range.end = i + 1,
                _ => out.push((*m, i..i + 1)),
            }
        }
        out
    }

    /// Replaces the values while keeping timestamps and instruments.
    pub fn with_values(&self, returns: DMatrix<f64>) -> Result<Self> {
        ReturnPanel::new(self.timestamps.clone(), self.instruments.clone(), returns)
    }
}

/// Inner-joins the series on timestamps.
pub fn align_prices(series_list: &[PriceSeries]) -> Result<PricePanel> {
    if series_list.len() < 2 {
        return Err(Error::invalid("alignment needs at least 2 instruments"));
    }
    let mut common: BTreeSet<DateTime<Utc>> =
        series_list[0].timestamps().iter().copied().collect();
    for s in &series_list[1..] {
        let other: BTreeSet<_> = s.timestamps().iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let timestamps: Vec<_> = common.into_iter().collect();
    let mut log_prices = DMatrix::zeros(timestamps.len(), series_list.len());
    for (j, s) in series_list.iter().enumerate() {
        // both sides sorted: merge walk
        let mut k = 0;
        for (i, ts) in timestamps.iter().enumerate() {
            while s.timestamps()[k] < *ts {
                k += 1;
            }
            log_prices[(i, j)] = s.prices()[k].ln();
        }
    }
    Ok(PricePanel {
        timestamps,
        instruments: series_list
            .iter()
            .map(|s| s.instrument_id().to_string())
            .collect(),
        log_prices,
    })
}

/// Inner-joins the series on timestamps and computes log returns on the
/// aligned grid.
pub fn align_panel(series_list: &[PriceSeries]) -> Result<ReturnPanel> {
    align_prices(series_list)?.returns()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use std::io::Write;

    fn hour(h: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2010, 1, 4, 0, 0, 0).unwrap() + Duration::hours(h)
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_rows() {
        let f = write_csv("timestamp,price\n2010-01-04T10:00,1132.99\n2010-01-04T11:00,1133.50\n");
        let s = load_prices(f.path(), &CsvFormat::new("SP")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.prices(), &[1132.99, 1133.50]);
        assert_eq!(s.timestamps()[0], hour(10));
    }

    #[test]
    fn custom_columns_and_unsorted_rows() {
        let f = write_csv("px,when,other\n2.0,2010-01-04 11:00:00,x\n1.0,2010-01-04T10:00:00Z,y\n");
        let fmt = CsvFormat {
            instrument_id: "GC".into(),
            timestamp_column: "when".into(),
            price_column: "px".into(),
        };
        let s = load_prices(f.path(), &fmt).unwrap();
        assert_eq!(s.prices(), &[1.0, 2.0]);
    }

    #[test]
    fn duplicate_timestamp_names_row() {
        let f = write_csv("timestamp,price\n2010-01-04T10:00,1\n2010-01-04T11:00,2\n2010-01-04T10:00,3\n");
        match load_prices(f.path(), &CsvFormat::new("SP")) {
            Err(Error::DuplicateTimestamp { row, .. }) => assert_eq!(row, 4),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn negative_price_rejected() {
        let f = write_csv("timestamp,price\n2010-01-04T10:00,1\n2010-01-04T11:00,-3.2\n");
        match load_prices(f.path(), &CsvFormat::new("SP")) {
            Err(Error::NonPositivePrice { row, value, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(value, -3.2);
            }
            other => panic!("expected non-positive price error, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_and_missing_inputs() {
        let f = write_csv("timestamp,price\nyesterday,1\n");
        assert!(matches!(
            load_prices(f.path(), &CsvFormat::new("SP")),
            Err(Error::Parse { row: 2, .. })
        ));
        let f = write_csv("time,price\n2010-01-04,1\n");
        assert!(matches!(
            load_prices(f.path(), &CsvFormat::new("SP")),
            Err(Error::MissingColumn { .. })
        ));
        assert!(matches!(
            load_prices("/nonexistent/prices.csv", &CsvFormat::new("SP")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn log_return_examples() {
        let series = |p: &[f64]| {
            PriceSeries::new("X", p.iter().enumerate().map(|(i, &v)| (hour(i as i64), v)).collect())
                .unwrap()
        };
        assert_eq!(log_returns(&series(&[100.0, 100.0])).unwrap(), vec![0.0]);
        let r = log_returns(&series(&[100.0, 100.0 * std::f64::consts::E])).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        let r = log_returns(&series(&[100.0, 102.0, 101.0])).unwrap();
        assert!((r[0] - 0.019803).abs() < 1e-6);
        assert!((r[1] + 0.009852).abs() < 1e-6);
        assert!(matches!(
            log_returns(&series(&[100.0])),
            Err(Error::TooShort { .. })
        ));
    }

    fn flat_series(id: &str, hours: &[i64]) -> PriceSeries {
        PriceSeries::new(
            id,
            hours.iter().map(|&h| (hour(h), 100.0 + h as f64)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_timestamps_keep_every_row() {
        let a = flat_series("A", &[0, 1, 2, 3]);
        let b = flat_series("B", &[0, 1, 2, 3]);
        let p = align_panel(&[a, b]).unwrap();
        assert_eq!(p.instruments().len(), 2);
        assert_eq!(p.n_rows(), 3);
    }

    #[test]
    fn missing_hour_is_dropped() {
        let a = flat_series("A", &[0, 1, 3, 4]);
        let b = flat_series("B", &[0, 1, 2, 3, 4]);
        let p = align_panel(&[a, b]).unwrap();
        assert!(!p.timestamps().contains(&hour(2)));
        assert_eq!(p.timestamps(), &[hour(1), hour(3), hour(4)]);
        // return over the gap spans 1h -> 3h
        assert!((p.returns()[(1, 1)] - (103.0f64 / 101.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn month_index_spans_two_months() {
        let hours: Vec<i64> = (0..24 * 40).step_by(24).collect();
        let series: Vec<_> = ["A", "B", "C"].iter().map(|id| flat_series(id, &hours)).collect();
        let p = align_panel(&series).unwrap();
        let ranges = p.month_ranges();
        assert_eq!(ranges.len(), 2);
        assert!(p.months().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_intersection_is_error() {
        let a = flat_series("A", &[0, 1]);
        let b = flat_series("B", &[5, 6]);
        assert!(matches!(align_panel(&[a, b]), Err(Error::EmptyIntersection)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn log_returns_invert_cumsum(x in prop::collection::vec(-0.5f64..0.5, 1..200)) {
                let mut level = 0.0;
                let mut prices = vec![1.0];
                for v in &x {
                    level += v;
                    prices.push(level.exp());
                }
                let r = log_returns_of(&prices).unwrap();
                for (a, b) in r.iter().zip(&x) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn aligned_rows_exist_in_every_input(
                a in prop::collection::btree_set(0i64..300, 3..60),
                b in prop::collection::btree_set(0i64..300, 3..60),
            ) {
                let ha: Vec<i64> = a.into_iter().collect();
                let hb: Vec<i64> = b.into_iter().collect();
                let sa = flat_series("A", &ha);
                let sb = flat_series("B", &hb);
                match align_prices(&[sa.clone(), sb.clone()]) {
                    Ok(p) => {
                        for ts in &p.timestamps {
                            prop_assert!(sa.timestamps().contains(ts));
                            prop_assert!(sb.timestamps().contains(ts));
                        }
                    }
                    Err(Error::EmptyIntersection) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }
    }
}

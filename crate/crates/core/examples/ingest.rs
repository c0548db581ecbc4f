//! Load two single-instrument price files with different calendars, align
//! them on common timestamps and print the resulting log-return panel.

use std::fs;

use regime_detect::market_data::{align_panel, load_prices, CsvFormat};

fn main() -> regime_detect::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let a = dir.path().join("aaa.csv");
    let b = dir.path().join("bbb.csv");
    let mut rows_a = String::from("timestamp,price\n");
    let mut rows_b = String::from("time,close\n");
    for h in 0..48 {
        let ts = format!("2021-03-{:02}T{:02}:00:00Z", 1 + h / 24, h % 24);
        rows_a.push_str(&format!("{ts},{}\n", 100.0 + (h as f64 * 0.3).sin()));
        // the second file skips every fifth hour
        if h % 5 != 0 {
            rows_b.push_str(&format!("{ts},{}\n", 50.0 + (h as f64 * 0.2).cos()));
        }
    }
    fs::write(&a, rows_a).expect("write");
    fs::write(&b, rows_b).expect("write");

    let sa = load_prices(&a, &CsvFormat::new("AAA"))?;
    let fb = CsvFormat {
        instrument_id: "BBB".into(),
        timestamp_column: "time".into(),
        price_column: "close".into(),
    };
    let sb = load_prices(&b, &fb)?;
    let panel = align_panel(&[sa.clone(), sb.clone()])?;
    println!("AAA {} rows, BBB {} rows, aligned returns {} rows", sa.len(), sb.len(), panel.n_rows());
    for (month, range) in panel.month_ranges() {
        println!("{month}: rows {}..{}", range.start, range.end);
    }
    println!("first return row: {:?}", panel.returns().row(0).iter().collect::<Vec<_>>());
    Ok(())
}

//! File formats: the measurement CSV, versioned model and matrix documents,
//! and external ΔE histograms.

mod documents;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::analysis::{DeltaEHistogram, Grouping};
use crate::colorspace::Tristimulus;
use crate::error::{Error, Result};
use crate::record::MeasurementRecord;

pub use documents::{read_matrix, read_model, write_matrix, write_model, MatrixDocument, FORMAT_VERSION};

/// Header of the measurement CSV, in column order.
pub const MEASUREMENT_HEADER: [&str; 8] = [
    "panel_id",
    "color_id",
    "brightness",
    "repeat_index",
    "timestamp",
    "X",
    "Y",
    "Z",
];

/// Writes `contents` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn measurements_to_csv(records: &[MeasurementRecord]) -> String {
    let mut out = MEASUREMENT_HEADER.join(",");
    out.push('\n');
    for r in records {
        let ts = r.timestamp.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(&r.panel_id),
            csv_field(&r.color_id),
            r.brightness,
            r.repeat_index,
            ts,
            r.xyz.x(),
            r.xyz.y(),
            r.xyz.z()
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_measurements(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    write_atomic(path, measurements_to_csv(records).as_bytes())
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let text = read_to_string(path)?;
    parse_measurements(path, &text)
}

/// Parses the measurement CSV. `path` only labels error messages.
pub fn parse_measurements(path: &Path, text: &str) -> Result<Vec<MeasurementRecord>> {
    let parse_err = |line: u64, column: &str, reason: String| Error::Parse {
        path: path.to_owned(),
        line,
        column: column.to_owned(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, "-", e.to_string()))?
        .clone();
    if header.iter().ne(MEASUREMENT_HEADER) {
        return Err(parse_err(
            1,
            "-",
            format!("expected header `{}`", MEASUREMENT_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, "-", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let real = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| parse_err(line, MEASUREMENT_HEADER[i], format!("`{}` is not a number", field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, MEASUREMENT_HEADER[i], "value must be finite".into()))
            }
        };
        let invalid = |reason: String| Error::InvalidRow {
            path: path.to_owned(),
            line,
            reason,
        };

        let panel_id = field(0).to_owned();
        let color_id = field(1).to_owned();
        if panel_id.is_empty() || color_id.is_empty() {
            return Err(invalid("panel_id and color_id must be non-empty".into()));
        }
        let brightness = real(2)?;
        if !(brightness > 0.0 && brightness <= 1.0) {
            return Err(invalid(format!("brightness {brightness} outside (0, 1]")));
        }
        let repeat_index: u32 = field(3)
            .parse()
            .map_err(|_| parse_err(line, "repeat_index", format!("`{}` is not a non-negative integer", field(3))))?;
        let timestamp = if field(4).is_empty() { None } else { Some(real(4)?) };
        let (x, y, z) = (real(5)?, real(6)?, real(7)?);
        let xyz = Tristimulus::new(x, y, z).map_err(|e| invalid(e.to_string()))?;

        if !seen.insert((panel_id.clone(), color_id.clone(), brightness.to_bits(), repeat_index)) {
            return Err(invalid(format!(
                "duplicate measurement {panel_id}/{color_id} brightness {brightness} repeat {repeat_index}"
            )));
        }
        records.push(MeasurementRecord {
            panel_id,
            color_id,
            brightness,
            repeat_index,
            timestamp,
            xyz,
        });
    }
    Ok(records)
}

/// Reads a `bin_start,bin_end,count` CSV describing an externally measured ΔE histogram.
pub fn read_external_histogram(path: &Path) -> Result<DeltaEHistogram> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut bins = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            column: "-".into(),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize, name: &str| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::Parse {
                    path: path.to_owned(),
                    line,
                    column: name.into(),
                    reason: "expected a non-negative number".into(),
                })
        };
        let (start, end, count) = (get(0, "bin_start")?, get(1, "bin_end")?, get(2, "count")?);
        if end <= start || count.fract() != 0.0 {
            return Err(Error::InvalidRow {
                path: path.to_owned(),
                line,
                reason: "bins need end > start and an integer count".into(),
            });
        }
        bins.push((start, end, count as u64));
    }
    DeltaEHistogram::from_bins(Grouping::ExternalBetweenRegions, &bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "panel_id,color_id,brightness,repeat_index,timestamp,X,Y,Z\n";

    fn parse(text: &str) -> Result<Vec<MeasurementRecord>> {
        parse_measurements(Path::new("test.csv"), text)
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse(HEADER).unwrap().is_empty());
    }

    #[test]
    fn single_row() {
        let r = parse(&format!("{HEADER}P1,white,1.0,0,12.5,30.1,31.2,33.0\n")).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].panel_id, "P1");
        assert_eq!(r[0].timestamp, Some(12.5));
        assert_eq!(r[0].xyz, Tristimulus::new(30.1, 31.2, 33.0).unwrap());
    }

    #[test]
    fn missing_timestamp_is_none() {
        let r = parse(&format!("{HEADER}P1,white,1.0,0,,30.1,31.2,33.0\n")).unwrap();
        assert_eq!(r[0].timestamp, None);
    }

    #[test]
    fn negative_component_reports_line() {
        let text = format!("{HEADER}P1,white,1.0,0,,30.1,31.2,33.0\nP1,white,1.0,1,,-1,31.2,33.0\n");
        match parse(&text) {
            Err(Error::InvalidRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{HEADER}P1,white,1.0,0,,1,1,1\nP1,white,1.0,0,,2,2,2\n");
        assert!(matches!(parse(&text), Err(Error::InvalidRow { line: 3, .. })));
    }

    #[test]
    fn parse_errors_name_the_column() {
        match parse(&format!("{HEADER}P1,white,1.0,0,,abc,1,1\n")) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "X");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a,b,c\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse(&format!("{HEADER}P1,white,1.0,-2,,1,1,1\n")),
            Err(Error::Parse { .. })
        ));
    }

    fn record() -> impl Strategy<Value = MeasurementRecord> {
        (
            "[A-Za-z0-9_ ,\"]{1,8}",
            "[a-z]{1,8}",
            1e-6..=1.0f64,
            0u32..1000,
            prop::option::of(0.0..1e6f64),
            (0.0..1e4f64, 0.0..1e4f64, 0.0..1e4f64),
        )
            .prop_map(|(panel_id, color_id, brightness, repeat_index, timestamp, (x, y, z))| MeasurementRecord {
                panel_id: panel_id.trim().to_owned() + "p",
                color_id,
                brightness,
                repeat_index,
                timestamp,
                xyz: Tristimulus::new(x, y, z).unwrap(),
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(mut records in prop::collection::vec(record(), 0..20)) {
            for (i, r) in records.iter_mut().enumerate() {
                r.repeat_index = i as u32;
            }
            let back = parse(&measurements_to_csv(&records)).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}

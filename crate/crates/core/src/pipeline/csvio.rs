//! CSV ingestion and emission.
//!
//! Location files use the header `timestamp,s1,...,sd[,ref]` with ISO-8601
//! UTC timestamps truncated to the hour, one row per hour, and empty cells
//! for NA. Output files keep the same shape and may append corrected-estimate
//! columns `yhat_1..d,ystd_1..d`. Raw per-device files use `timestamp,value`
//! at arbitrary frequency.

use super::{DataError, HourStamp, HourlySeries, LocationDataset, RawSeries};
use std::path::Path;

/// Corrected-output columns carried alongside a location table.
#[derive(Debug, Clone, Default)]
pub struct CorrectedColumns {
    pub y_hat: Vec<Vec<f64>>,
    pub y_std: Vec<Vec<f64>>,
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>, DataError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("na") || trimmed.eq_ignore_ascii_case("nan")
    {
        return Ok(None);
    }
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|_| DataError::BadValue {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Reads a location CSV. Rows may skip hours; the result sits on the gap-free
/// grid from the first to the last hour seen, with skipped hours as NA.
pub fn read_location_csv(
    path: &Path,
) -> Result<(LocationDataset, Option<CorrectedColumns>), DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 || headers[0] != "timestamp" {
        return Err(DataError::BadHeader);
    }
    let yhat_start = headers.iter().position(|h| h.starts_with("yhat_"));
    let data_end = yhat_start.unwrap_or(headers.len());
    let has_ref = headers[..data_end].last().map(String::as_str) == Some("ref");
    let sensor_names: Vec<String> = headers[1..if has_ref { data_end - 1 } else { data_end }].to_vec();
    let d = sensor_names.len();
    if d == 0 {
        return Err(DataError::EmptyLocation);
    }
    let n_yhat = headers.len() - data_end;
    if yhat_start.is_some() && n_yhat != 2 * d {
        return Err(DataError::BadHeader);
    }

    struct ParsedRow {
        hour: HourStamp,
        sensors: Vec<Option<f64>>,
        reference: Option<f64>,
        corrected: Option<(Vec<f64>, Vec<f64>)>,
    }
    let mut rows: Vec<ParsedRow> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 2;
        if record.len() != headers.len() {
            return Err(DataError::RowShape {
                row: row_no,
                expected: headers.len(),
                actual: record.len(),
            });
        }
        let hour = HourStamp::parse(record.get(0).unwrap_or_default())?;
        let mut sensors = Vec::with_capacity(d);
        for (j, name) in sensor_names.iter().enumerate() {
            sensors.push(parse_cell(record.get(1 + j).unwrap(), row_no, name)?);
        }
        let reference = if has_ref {
            parse_cell(record.get(1 + d).unwrap(), row_no, "ref")?
        } else {
            None
        };
        let corrected = if yhat_start.is_some() {
            let mut y_hat = Vec::with_capacity(d);
            let mut y_std = Vec::with_capacity(d);
            for j in 0..d {
                let col = &headers[data_end + j];
                y_hat.push(
                    parse_cell(record.get(data_end + j).unwrap(), row_no, col)?.unwrap_or(f64::NAN),
                );
            }
            for j in 0..d {
                let col = &headers[data_end + d + j];
                y_std.push(
                    parse_cell(record.get(data_end + d + j).unwrap(), row_no, col)?
                        .unwrap_or(f64::NAN),
                );
            }
            Some((y_hat, y_std))
        } else {
            None
        };
        rows.push(ParsedRow {
            hour,
            sensors,
            reference,
            corrected,
        });
    }

    if rows.is_empty() {
        return Err(DataError::BadHeader);
    }
    let start = rows.iter().map(|r| r.hour.0).min().unwrap();
    let end = rows.iter().map(|r| r.hour.0).max().unwrap();
    let hours = (end - start + 1) as usize;
    let mut seen = vec![false; hours];
    let mut sensor_values: Vec<Vec<Option<f64>>> = vec![vec![None; hours]; d];
    let mut ref_values: Vec<Option<f64>> = vec![None; hours];
    let mut corrected = rows[0].corrected.as_ref().map(|_| CorrectedColumns {
        y_hat: vec![vec![f64::NAN; d]; hours],
        y_std: vec![vec![f64::NAN; d]; hours],
    });
    for row in &rows {
        let t = (row.hour.0 - start) as usize;
        if seen[t] {
            return Err(DataError::DuplicateHour { hour: row.hour });
        }
        seen[t] = true;
        for (j, v) in row.sensors.iter().enumerate() {
            sensor_values[j][t] = *v;
        }
        ref_values[t] = row.reference;
        if let (Some(c), Some((yh, ys))) = (corrected.as_mut(), row.corrected.as_ref()) {
            c.y_hat[t] = yh.clone();
            c.y_std[t] = ys.clone();
        }
    }

    let start_hour = HourStamp(start);
    let sensors = sensor_names
        .into_iter()
        .zip(sensor_values)
        .map(|(sensor_id, values)| HourlySeries {
            sensor_id,
            start_hour,
            values,
        })
        .collect();
    let reference = if has_ref {
        Some(HourlySeries {
            sensor_id: "ref".into(),
            start_hour,
            values: ref_values,
        })
    } else {
        None
    };
    Ok((
        LocationDataset {
            sensors,
            reference,
            start_hour,
            hours,
        },
        corrected,
    ))
}

fn format_cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

/// Writes a location table, optionally with corrected-output columns.
pub fn write_location_csv(
    path: &Path,
    location: &LocationDataset,
    corrected: Option<&CorrectedColumns>,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    let d = location.sensor_count();
    let mut header: Vec<String> = vec!["timestamp".into()];
    header.extend(location.sensors.iter().map(|s| s.sensor_id.clone()));
    if location.reference.is_some() {
        header.push("ref".into());
    }
    if corrected.is_some() {
        header.extend((1..=d).map(|i| format!("yhat_{i}")));
        header.extend((1..=d).map(|i| format!("ystd_{i}")));
    }
    writer.write_record(&header)?;
    for t in 0..location.hours {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(HourStamp(location.start_hour.0 + t as i64).to_string());
        for s in &location.sensors {
            record.push(format_cell(s.values[t]));
        }
        if let Some(r) = &location.reference {
            record.push(format_cell(r.values[t]));
        }
        if let Some(c) = corrected {
            for j in 0..d {
                record.push(format_cell(Some(c.y_hat[t][j])));
            }
            for j in 0..d {
                record.push(format_cell(Some(c.y_std[t][j])));
            }
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a raw per-device stream (`timestamp,value`); empty value cells are
/// NA samples. Timestamps must be strictly increasing.
pub fn read_raw_series_csv(path: &Path, sensor_id: &str) -> Result<RawSeries, DataError> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("timestamp") {
        return Err(DataError::BadHeader);
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 2;
        let ts = record.get(0).unwrap_or_default();
        let dt = chrono::DateTime::parse_from_rfc3339(ts).map_err(|e| DataError::Timestamp {
            value: ts.to_string(),
            reason: e.to_string(),
        })?;
        let value = parse_cell(record.get(1).unwrap_or_default(), row_no, "value")?;
        samples.push((dt.timestamp(), value));
    }
    RawSeries::new(sensor_id, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir();
        let path = dir.join(format!(
            "veli_csv_test_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn read_location_with_ref_and_gaps() {
        let path = write_temp(
            "timestamp,s1,s2,ref\n\
             2021-01-01T00:00:00Z,1.5,,10\n\
             2021-01-01T02:00:00Z,2.5,3.5,\n",
        );
        let (loc, corrected) = read_location_csv(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert!(corrected.is_none());
        assert_eq!(loc.hours, 3);
        assert_eq!(loc.sensors[0].values, vec![Some(1.5), None, Some(2.5)]);
        assert_eq!(loc.sensors[1].values, vec![None, None, Some(3.5)]);
        assert_eq!(
            loc.reference.as_ref().unwrap().values,
            vec![Some(10.0), None, None]
        );
    }

    #[test]
    fn duplicate_hour_is_rejected() {
        let path = write_temp(
            "timestamp,s1\n\
             2021-01-01T00:00:00Z,1\n\
             2021-01-01T00:30:00Z,2\n",
        );
        let err = read_location_csv(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, DataError::DuplicateHour { .. }));
    }

    #[test]
    fn write_then_read_round_trips() {
        let (loc, _) = {
            let path = write_temp(
                "timestamp,s1,s2,ref\n\
                 2021-01-01T00:00:00Z,1.25,,3.5\n\
                 2021-01-01T01:00:00Z,,2.75,\n",
            );
            let out = read_location_csv(&path).unwrap();
            std::fs::remove_file(&path).ok();
            out
        };
        let out_path = std::env::temp_dir().join(format!(
            "veli_csv_round_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        write_location_csv(&out_path, &loc, None).unwrap();
        let (again, _) = read_location_csv(&out_path).unwrap();
        std::fs::remove_file(&out_path).ok();
        assert_eq!(again.sensors, loc.sensors);
        assert_eq!(again.reference, loc.reference);
    }

    #[test]
    fn corrected_columns_round_trip() {
        let (loc, _) = {
            let path = write_temp(
                "timestamp,s1,ref\n2021-01-01T00:00:00Z,1.0,2.0\n",
            );
            let out = read_location_csv(&path).unwrap();
            std::fs::remove_file(&path).ok();
            out
        };
        let corrected = CorrectedColumns {
            y_hat: vec![vec![4.5]],
            y_std: vec![vec![0.25]],
        };
        let out_path = std::env::temp_dir().join(format!(
            "veli_csv_corr_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        write_location_csv(&out_path, &loc, Some(&corrected)).unwrap();
        let (_, parsed) = read_location_csv(&out_path).unwrap();
        std::fs::remove_file(&out_path).ok();
        let parsed = parsed.unwrap();
        assert_eq!(parsed.y_hat, corrected.y_hat);
        assert_eq!(parsed.y_std, corrected.y_std);
    }

    #[test]
    fn raw_series_reads_subhourly_timestamps() {
        let path = write_temp(
            "timestamp,value\n\
             2021-01-01T00:05:00Z,4\n\
             2021-01-01T00:35:00Z,6\n\
             2021-01-01T01:00:10Z,\n",
        );
        let raw = read_raw_series_csv(&path, "dev1").unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(raw.samples().len(), 3);
        assert_eq!(raw.samples()[0].1, Some(4.0));
        assert_eq!(raw.samples()[2].1, None);
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use super::RawRecording;
use crate::{Error, Result};

const BASE_COLUMNS: [&str; 5] = ["user_id", "timestamp_ms", "x", "y", "z"];

struct Builder {
    timestamps: Vec<f64>,
    samples: Vec<[f64; 3]>,
    labels: Vec<Option<String>>,
}

/// Reads `user_id,timestamp_ms,x,y,z[,label]` into one recording per user,
/// ordered by user id.
///
/// Rows of different users may interleave, but each user's timestamps must
/// strictly increase in file order.
pub fn ingest_csv(path: &Path) -> Result<Vec<RawRecording>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let labeled = match names.as_slice() {
        [a, b, c, d, e] if [*a, *b, *c, *d, *e] == BASE_COLUMNS => false,
        [a, b, c, d, e, "label"] if [*a, *b, *c, *d, *e] == BASE_COLUMNS => true,
        [] => return Err(parse_err(1, "missing header".into())),
        _ => {
            return Err(parse_err(
                1,
                format!("expected header `user_id,timestamp_ms,x,y,z[,label]`, found `{}`", names.join(",")),
            ))
        }
    };

    let mut users: BTreeMap<String, Builder> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            let field = record[i].trim();
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("column `{}`: invalid number `{field}`", names[i])))
        };
        let user = record[0].trim();
        if user.is_empty() {
            return Err(parse_err(line, "empty user_id".into()));
        }
        let ts = num(1)?;
        let sample = [num(2)?, num(3)?, num(4)?];
        let b = users.entry(user.to_string()).or_insert_with(|| Builder {
            timestamps: Vec::new(),
            samples: Vec::new(),
            labels: Vec::new(),
        });
        if let Some(&prev) = b.timestamps.last() {
            if ts <= prev {
                return Err(Error::data(format!(
                    "{}:{line}: timestamp {ts} for user {user} does not increase (previous {prev})",
                    path.display()
                )));
            }
        }
        b.timestamps.push(ts);
        b.samples.push(sample);
        if labeled {
            let l = record[5].trim();
            b.labels.push((!l.is_empty()).then(|| l.to_string()));
        }
    }

    Ok(users
        .into_iter()
        .map(|(user_id, b)| {
            let sampling_rate_hz = estimate_rate(&b.timestamps);
            RawRecording {
                user_id,
                timestamps_ms: b.timestamps,
                samples: b.samples,
                labels: labeled.then_some(b.labels),
                sampling_rate_hz,
            }
        })
        .collect())
}

/// Sampling rate from the median inter-sample interval; 0 when undefined.
fn estimate_rate(ts: &[f64]) -> f64 {
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    1000.0 / d[d.len() / 2]
}

/// Writes recordings in the ingestion format. The label column is present when
/// any recording is labeled. Numbers use the shortest exact decimal form.
pub fn export_csv(recordings: &[RawRecording], path: &Path) -> Result<()> {
    let labeled = recordings.iter().any(|r| r.labels.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if labeled {
        header.push("label");
    }
    w.write_record(&header)?;
    for r in recordings {
        r.validate()?;
        for (i, (ts, s)) in r.timestamps_ms.iter().zip(&r.samples).enumerate() {
            let mut row = vec![
                r.user_id.clone(),
                ts.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                s[2].to_string(),
            ];
            if labeled {
                let label = r.labels.as_ref().and_then(|l| l[i].clone()).unwrap_or_default();
                row.push(label);
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn header_only_is_empty() {
        let f = write("user_id,timestamp_ms,x,y,z,label\n");
        assert!(ingest_csv(f.path()).unwrap().is_empty());
    }

    #[test]
    fn interleaved_users() {
        let f = write(
            "user_id,timestamp_ms,x,y,z\n\
             b,0,1,2,3\n\
             a,0,0,0,1\n\
             b,20,1,2,4\n\
             a,20,0,0,2\n\
             a,40,0,0,3\n",
        );
        let r = ingest_csv(f.path()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].user_id, "a");
        assert_eq!(r[0].samples.len(), 3);
        assert_eq!(r[0].samples[2], [0.0, 0.0, 3.0]);
        assert_eq!(r[1].timestamps_ms, vec![0.0, 20.0]);
        assert!(r[0].labels.is_none());
        assert_eq!(r[0].sampling_rate_hz, 50.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write("user_id,timestamp_ms,x,y,z\na,0,1,2,3\na,20,1,oops,3\n");
        match ingest_csv(f.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write("user_id,timestamp_ms,x,y\na,0,1,2\n");
        assert!(matches!(ingest_csv(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn non_monotonic_is_data_error() {
        let f = write("user_id,timestamp_ms,x,y,z\na,20,1,2,3\na,10,1,2,3\n");
        assert!(matches!(ingest_csv(f.path()), Err(Error::Data(_))));
    }

    #[test]
    fn round_trip_is_lossless() {
        let rec = RawRecording {
            user_id: "u7".into(),
            timestamps_ms: vec![0.0, 12.5, 25.0],
            samples: vec![[0.1, -2.0 / 3.0, 9.81], [1e-9, 123456.789, -0.0], [std::f64::consts::PI, 1.0, 2.0]],
            labels: Some(vec![Some("walk".into()), None, Some("sit down".into())]),
            sampling_rate_hz: 80.0,
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        export_csv(std::slice::from_ref(&rec), f.path()).unwrap();
        let back = ingest_csv(f.path()).unwrap();
        assert_eq!(back, vec![rec]);
    }
}

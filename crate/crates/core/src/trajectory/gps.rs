use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::TrajectoryError;

pub const GPS_HEADER: [&str; 4] = ["user_id", "timestamp", "longitude", "latitude"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub user_id: String,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub longitude: f64,
    pub latitude: f64,
}

impl GpsRecord {
    pub fn lon_lat(&self) -> (f64, f64) {
        (self.longitude, self.latitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorKind {
    Malformed,
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
    pub message: String,
}

/// One user's records in nondecreasing timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTrack {
    pub user_id: String,
    pub records: Vec<GpsRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedGps {
    /// Tracks ordered by user id.
    pub users: Vec<UserTrack>,
    pub errors: Vec<RowError>,
}

impl ParsedGps {
    pub fn n_records(&self) -> usize {
        self.users.iter().map(|u| u.records.len()).sum()
    }

    pub fn rejected_out_of_range(&self) -> usize {
        self.errors
            .iter()
            .filter(|e| e.kind == RowErrorKind::OutOfRange)
            .count()
    }
}

/// Parses the `user_id,timestamp,longitude,latitude` CSV. Bad rows are
/// reported in [`ParsedGps::errors`] instead of aborting the parse; only a
/// wrong header or an unreadable stream is fatal.
pub fn parse_gps_records<R: Read>(input: R) -> Result<ParsedGps, TrajectoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Ok(ParsedGps::default());
    }
    if headers.len() != 4 || headers.iter().zip(GPS_HEADER).any(|(h, e)| h != e) {
        return Err(TrajectoryError::Header {
            found: headers.iter().map(str::to_owned).collect(),
        });
    }

    let mut by_user: BTreeMap<String, Vec<GpsRecord>> = BTreeMap::new();
    let mut errors = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(err) => {
                let line = err.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RowError {
                    line,
                    kind: RowErrorKind::Malformed,
                    message: err.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row) {
            Ok(rec) => by_user.entry(rec.user_id.clone()).or_default().push(rec),
            Err((kind, message)) => errors.push(RowError { line, kind, message }),
        }
    }

    let users = by_user
        .into_iter()
        .map(|(user_id, mut records)| {
            records.sort_by_key(|r| r.timestamp);
            UserTrack { user_id, records }
        })
        .collect();
    Ok(ParsedGps { users, errors })
}

fn parse_row(row: &csv::StringRecord) -> Result<GpsRecord, (RowErrorKind, String)> {
    if row.len() != 4 {
        return Err((
            RowErrorKind::Malformed,
            format!("expected 4 fields, found {}", row.len()),
        ));
    }
    let malformed = |what: &str, v: &str| (RowErrorKind::Malformed, format!("bad {what} {v:?}"));
    let user_id = row[0].to_owned();
    if user_id.is_empty() || user_id.contains(['\t', '\n', '\r']) {
        return Err(malformed("user_id", &row[0]));
    }
    let timestamp: i64 = row[1].parse().map_err(|_| malformed("timestamp", &row[1]))?;
    let longitude: f64 = row[2].parse().map_err(|_| malformed("longitude", &row[2]))?;
    let latitude: f64 = row[3].parse().map_err(|_| malformed("latitude", &row[3]))?;
    if !(-180.0..=180.0).contains(&longitude) || !(-90.0..=90.0).contains(&latitude) {
        return Err((
            RowErrorKind::OutOfRange,
            format!("coordinate ({longitude}, {latitude}) out of range"),
        ));
    }
    Ok(GpsRecord {
        user_id,
        timestamp,
        longitude,
        latitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "user_id,timestamp,longitude,latitude\n";

    #[test]
    fn single_row() {
        let data = format!("{HEADER}u1,1454284800,130.70,32.80\n");
        let parsed = parse_gps_records(data.as_bytes()).unwrap();
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.users.len(), 1);
        assert_eq!(
            parsed.users[0].records,
            vec![GpsRecord {
                user_id: "u1".into(),
                timestamp: 1454284800,
                longitude: 130.70,
                latitude: 32.80
            }]
        );
    }

    #[test]
    fn empty_input() {
        let parsed = parse_gps_records(&b""[..]).unwrap();
        assert_eq!(parsed, ParsedGps::default());
        let parsed = parse_gps_records(HEADER.as_bytes()).unwrap();
        assert_eq!(parsed.n_records(), 0);
        assert!(parsed.errors.is_empty());
    }

    #[test]
    fn latitude_out_of_range_is_rejected() {
        let data = format!("{HEADER}u1,1454284800,130.70,95.0\nu1,1454284900,130.70,32.8\n");
        let parsed = parse_gps_records(data.as_bytes()).unwrap();
        assert_eq!(parsed.errors.len(), 1);
        assert_eq!(parsed.rejected_out_of_range(), 1);
        assert_eq!(parsed.errors[0].line, 2);
        assert_eq!(parsed.n_records(), 1);
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let data = format!("{HEADER}u1,abc,130.7,32.8\nu1,5,130.7\nu2,7,130.7,32.8\n");
        let parsed = parse_gps_records(data.as_bytes()).unwrap();
        let lines: Vec<u64> = parsed.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(parsed.errors.iter().all(|e| e.kind == RowErrorKind::Malformed));
        assert_eq!(parsed.users[0].user_id, "u2");
    }

    #[test]
    fn groups_and_sorts_by_time() {
        let data = format!("{HEADER}b,30,1,1\na,20,1,1\nb,10,1,1\na,5,1,1\n");
        let parsed = parse_gps_records(data.as_bytes()).unwrap();
        let ids: Vec<&str> = parsed.users.iter().map(|u| u.user_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        let ts: Vec<i64> = parsed.users[1].records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, [10, 30]);
    }

    #[test]
    fn wrong_header_is_fatal() {
        let err = parse_gps_records(&b"id,t,x,y\n"[..]).unwrap_err();
        assert!(matches!(err, TrajectoryError::Header { .. }));
    }
}

//! CSV ingestion with a configurable column mapping.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::Interaction;
use crate::error::DataError;

/// Maps log-file column headers onto interaction fields.
///
/// `event` / `keep_events` support logs that mix event kinds (views,
/// cart adds, purchases): when both are set, only rows whose event
/// column matches one of `keep_events` are kept.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub session: String,
    pub timestamp: String,
    pub item: String,
    pub price: String,
    pub category: String,
    pub event: Option<String>,
    pub keep_events: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            session: "session".into(),
            timestamp: "timestamp".into(),
            item: "item".into(),
            price: "price".into(),
            category: "category".into(),
            event: None,
            keep_events: Vec::new(),
        }
    }
}

/// Read a CSV interaction log.
///
/// Returns interactions sorted by `(session_key, timestamp)`, ties
/// keeping file order; duplicate rows are preserved. Timestamps may be
/// integer epoch seconds or ISO-8601 datetimes (auto-detected per
/// value). Every field must be non-empty and the price non-negative.
pub fn load_interactions(path: &Path, columns: &ColumnMap) -> Result<Vec<Interaction>, DataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: display.clone(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => DataError::Csv {
                path: display.clone(),
                row: 0,
                message: e.to_string(),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: display.clone(),
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                path: display.clone(),
                column: name.to_string(),
            })
    };
    let session_col = col(&columns.session)?;
    let timestamp_col = col(&columns.timestamp)?;
    let item_col = col(&columns.item)?;
    let price_col = col(&columns.price)?;
    let category_col = col(&columns.category)?;
    let event_col = match &columns.event {
        Some(name) => Some(col(name)?),
        None => None,
    };

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // +2: one for the header line, one for 1-based numbering.
        let row = i as u64 + 2;
        let record = record.map_err(|e| DataError::Csv {
            path: display.clone(),
            row,
            message: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<&str, DataError> {
            let value = record.get(idx).unwrap_or("").trim();
            if value.is_empty() {
                return Err(DataError::EmptyField {
                    path: display.clone(),
                    row,
                    column: name.to_string(),
                });
            }
            Ok(value)
        };

        if let Some(idx) = event_col {
            let event = field(idx, columns.event.as_deref().unwrap_or("event"))?;
            if !columns.keep_events.is_empty() && !columns.keep_events.iter().any(|k| k == event) {
                continue;
            }
        }

        let session_key = field(session_col, &columns.session)?.to_string();
        let raw_ts = field(timestamp_col, &columns.timestamp)?;
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| DataError::BadField {
            path: display.clone(),
            row,
            column: columns.timestamp.clone(),
            value: raw_ts.to_string(),
            reason: "not epoch seconds or ISO-8601".into(),
        })?;
        let item_id = field(item_col, &columns.item)?.to_string();
        let raw_price = field(price_col, &columns.price)?;
        let price: f64 = raw_price.parse().map_err(|_| DataError::BadField {
            path: display.clone(),
            row,
            column: columns.price.clone(),
            value: raw_price.to_string(),
            reason: "not a number".into(),
        })?;
        if !price.is_finite() || price < 0.0 {
            return Err(DataError::BadField {
                path: display.clone(),
                row,
                column: columns.price.clone(),
                value: raw_price.to_string(),
                reason: "price must be finite and non-negative".into(),
            });
        }
        let category = field(category_col, &columns.category)?.to_string();

        out.push(Interaction {
            session_key,
            timestamp,
            item_id,
            price,
            category,
        });
    }

    out.sort_by(|a, b| {
        a.session_key
            .cmp(&b.session_key)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(out)
}

/// Epoch seconds, RFC 3339, or a naive `YYYY-MM-DD HH:MM:SS` datetime
/// (treated as UTC).
fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(seconds) = raw.parse::<i64>() {
        return Some(seconds);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_parse_in_timestamp_order() {
        let f = write_csv(
            "session,timestamp,item,price,category\n\
             s1,30,b,2.5,toys\n\
             s1,10,a,1.0,toys\n\
             s1,20,c,9.9,games\n",
        );
        let rows = load_interactions(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(rows.len(), 3);
        let ids: Vec<_> = rows.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert_eq!(rows[0].price, 1.0);
    }

    #[test]
    fn negative_price_names_the_row() {
        let f = write_csv(
            "session,timestamp,item,price,category\n\
             s1,10,a,1.0,toys\n\
             s1,20,b,-1,toys\n",
        );
        let err = load_interactions(f.path(), &ColumnMap::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("-1"), "{msg}");
    }

    #[test]
    fn windows_line_endings_match_unix() {
        let unix = write_csv("session,timestamp,item,price,category\ns1,10,a,1.0,toys\ns1,20,b,2.0,toys\n");
        let wind = write_csv(
            "session,timestamp,item,price,category\r\ns1,10,a,1.0,toys\r\ns1,20,b,2.0,toys\r\n",
        );
        let a = load_interactions(unix.path(), &ColumnMap::default()).unwrap();
        let b = load_interactions(wind.path(), &ColumnMap::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iso_timestamps_equal_epoch_seconds() {
        let f = write_csv(
            "session,timestamp,item,price,category\n\
             s1,2021-03-01T00:00:00Z,a,1.0,toys\n\
             s1,1614556800,b,2.0,toys\n",
        );
        let rows = load_interactions(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(rows[0].timestamp, rows[1].timestamp);
    }

    #[test]
    fn missing_column_is_reported() {
        let f = write_csv("session,timestamp,item,price\ns1,10,a,1.0\n");
        let err = load_interactions(f.path(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { column, .. } if column == "category"));
    }

    #[test]
    fn renamed_columns_resolve_through_the_mapping() {
        let f = write_csv("sid,ts,sku,amount,dept\nu1,5,x,3.0,home\n");
        let map = ColumnMap {
            session: "sid".into(),
            timestamp: "ts".into(),
            item: "sku".into(),
            price: "amount".into(),
            category: "dept".into(),
            ..ColumnMap::default()
        };
        let rows = load_interactions(f.path(), &map).unwrap();
        assert_eq!(rows[0].item_id, "x");
        assert_eq!(rows[0].category, "home");
    }

    #[test]
    fn event_filter_keeps_only_listed_kinds() {
        let f = write_csv(
            "session,timestamp,item,price,category,event\n\
             s1,10,a,1.0,toys,view\n\
             s1,20,b,2.0,toys,purchase\n\
             s1,30,c,3.0,toys,cart\n",
        );
        let map = ColumnMap {
            event: Some("event".into()),
            keep_events: vec!["purchase".into(), "cart".into()],
            ..ColumnMap::default()
        };
        let rows = load_interactions(f.path(), &map).unwrap();
        let ids: Vec<_> = rows.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
    }

    #[test]
    fn empty_field_is_rejected() {
        let f = write_csv("session,timestamp,item,price,category\ns1,10,,1.0,toys\n");
        let err = load_interactions(f.path(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, DataError::EmptyField { column, .. } if column == "item"));
    }
}

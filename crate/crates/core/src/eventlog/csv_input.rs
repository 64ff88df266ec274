use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{AttrValue, Event, EventLog, LogError, Trace};

/// Format keyword selecting RFC 3339 / ISO-8601 timestamp parsing.
pub const ISO_8601: &str = "iso8601";

/// Column mapping for CSV logs. Columns not named here become event payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
    /// `iso8601` or a chrono format string interpreted as UTC.
    pub timestamp_format: String,
    pub delimiter: char,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            timestamp_format: ISO_8601.into(),
            delimiter: ',',
        }
    }
}

pub fn parse_csv<I, S>(path: &Path, schema: &CsvSchema, agent_activities: I) -> Result<EventLog, LogError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let file = std::fs::File::open(path)?;
    parse_csv_reader(file, schema, agent_activities)
}

pub fn parse_csv_reader<R, I, S>(reader: R, schema: &CsvSchema, agent_activities: I) -> Result<EventLog, LogError>
where
    R: Read,
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let case_col = col(&schema.case_id)?;
    let act_col = col(&schema.activity)?;
    let ts_col = col(&schema.timestamp)?;
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![case_col, act_col, ts_col].contains(i))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut cases: HashMap<String, Vec<Event>> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = i + 2;
        let field = |c: usize| record.get(c).unwrap_or("");
        let case_id = field(case_col).to_string();
        let activity = field(act_col).trim().to_string();
        if activity.is_empty() {
            return Err(LogError::MissingColumn(format!(
                "{} (empty at row {row})",
                schema.activity
            )));
        }
        let timestamp = parse_timestamp(field(ts_col), &schema.timestamp_format)
            .map_err(|reason| LogError::UnparseableTimestamp { row, reason })?;
        let mut event = Event::new(activity, timestamp);
        for (c, name) in &extra {
            let raw = field(*c);
            if !raw.is_empty() {
                event.payload.insert(name.clone(), AttrValue::from_text(raw));
            }
        }
        cases
            .entry(case_id.clone())
            .or_insert_with(|| {
                order.push(case_id);
                Vec::new()
            })
            .push(event);
    }
    if order.is_empty() {
        return Err(LogError::EmptyLog);
    }
    let traces = order
        .into_iter()
        .map(|id| {
            let mut events = cases.remove(&id).unwrap_or_default();
            // stable: ties keep file order
            events.sort_by_key(|e| e.timestamp);
            Trace::new(id, events)
        })
        .collect();
    Ok(EventLog::new(traces, agent_activities))
}

/// Parses a timestamp into epoch milliseconds (UTC).
pub(crate) fn parse_timestamp(raw: &str, format: &str) -> Result<i64, String> {
    let raw = raw.trim();
    if format == ISO_8601 {
        if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
            return Ok(dt.timestamp_millis());
        }
        for f in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(raw, f) {
                return Ok(dt.and_utc().timestamp_millis());
            }
        }
        if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis());
        }
        return Err(format!("`{raw}` is not an ISO-8601 timestamp"));
    }
    if let Ok(dt) = DateTime::parse_from_str(raw, format) {
        return Ok(dt.timestamp_millis());
    }
    NaiveDateTime::parse_from_str(raw, format)
        .map(|dt| dt.and_utc().timestamp_millis())
        .map_err(|e| format!("`{raw}` does not match `{format}`: {e}"))
}

/// Formats epoch milliseconds as RFC 3339 with millisecond precision.
/// RFC 3339 UTC with millisecond precision, as accepted by the parser.
pub fn format_timestamp(millis: i64) -> String {
    DateTime::from_timestamp_millis(millis)
        .map(|dt| dt.to_rfc3339_opts(chrono::SecondsFormat::Millis, true))
        .unwrap_or_else(|| millis.to_string())
}

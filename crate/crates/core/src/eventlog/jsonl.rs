use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventLog, LogError, Trace};

#[derive(Serialize, Deserialize)]
struct Header {
    alphabet: BTreeSet<String>,
    agent_activities: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

/// Writes a header line followed by one trace per line.
pub fn write_jsonl(log: &EventLog, path: &Path) -> Result<(), LogError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let header = HeaderLine {
        header: Header {
            alphabet: log.alphabet.clone(),
            agent_activities: log.agent_activities.clone(),
        },
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for trace in log.traces() {
        serde_json::to_writer(&mut out, trace).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<EventLog, LogError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let bad = |line: usize, reason: String| LogError::Checkpoint { line: line + 1, reason };
    let (_, first) = lines.next().ok_or(LogError::EmptyLog)?;
    let header: HeaderLine = serde_json::from_str(&first?).map_err(|e| bad(0, e.to_string()))?;
    let mut traces = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: Trace = serde_json::from_str(&line).map_err(|e| bad(i, e.to_string()))?;
        traces.push(trace);
    }
    let mut log = EventLog::new(traces, header.header.agent_activities);
    log.alphabet.extend(header.header.alphabet);
    Ok(log)
}

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::SessionEvent;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Writes one JSON record per line.
pub fn write_transcript<W: Write>(mut out: W, events: &[SessionEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_transcript<R: BufRead>(input: R) -> Result<Vec<SessionEvent>, TranscriptError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| TranscriptError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn save_transcript(path: &Path, events: &[SessionEvent]) -> io::Result<()> {
    write_transcript(BufWriter::new(File::create(path)?), events)
}

pub fn load_transcript(path: &Path) -> Result<Vec<SessionEvent>, TranscriptError> {
    read_transcript(BufReader::new(File::open(path)?))
}

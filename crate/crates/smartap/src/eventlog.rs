//! Newline-delimited JSON event log.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use parking_lot::Mutex;
use smartap_core::events::Event;

struct Inner {
    file: Option<BufWriter<File>>,
    memory: Option<Vec<Event>>,
    last_iteration: u64,
}

impl Inner {
    fn write(&mut self, ev: Event) {
        self.last_iteration = self.last_iteration.max(ev.iteration());
        if let Some(w) = self.file.as_mut() {
            let line = serde_json::to_string(&ev).expect("events always serialize");
            if let Err(e) = writeln!(w, "{line}") {
                log::error!("event log write failed: {e}");
            }
        }
        if let Some(m) = self.memory.as_mut() {
            m.push(ev);
        }
    }
}

/// Sink for events: an optional file plus an optional in-memory copy.
pub struct EventLog(Mutex<Inner>);

impl EventLog {
    fn with(file: Option<BufWriter<File>>, memory: bool) -> Self {
        EventLog(Mutex::new(Inner { file, memory: memory.then(Vec::new), last_iteration: 0 }))
    }

    pub fn in_memory() -> Self {
        Self::with(None, true)
    }

    pub fn discard() -> Self {
        Self::with(None, false)
    }

    pub fn to_file(path: &Path, keep_in_memory: bool) -> io::Result<Self> {
        Ok(Self::with(Some(BufWriter::new(File::create(path)?)), keep_in_memory))
    }

    pub fn record(&self, ev: Event) {
        self.0.lock().write(ev);
    }

    /// Records an event stamped with the newest iteration logged so far, so
    /// writers outside the loop never put the counter out of order.
    pub fn record_current(&self, build: impl FnOnce(u64) -> Event) {
        let mut g = self.0.lock();
        let ev = build(g.last_iteration);
        g.write(ev);
    }

    pub fn flush(&self) -> io::Result<()> {
        match self.0.lock().file.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    /// Copy of the in-memory events (empty when not kept).
    pub fn events(&self) -> Vec<Event> {
        self.0.lock().memory.clone().unwrap_or_default()
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReadLogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Reads a log back. Blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<Event>, ReadLogError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ReadLogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::fsm::FsmState;

/// One processed event: who, when, the resulting state, and the message kind
/// if the event was a delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub agent: usize,
    pub state: FsmState,
    pub event: String,
    pub kind: Option<String>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.9} {} {} {} {}",
            self.time,
            self.agent,
            self.state,
            self.event,
            self.kind.as_deref().unwrap_or("-")
        )
    }
}

pub fn write_trace<W: Write>(out: &mut W, trace: &[TraceRecord]) -> io::Result<()> {
    for r in trace {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

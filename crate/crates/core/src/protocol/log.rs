use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

/// One state change of a simulated component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub time_us: u64,
    pub entity: String,
    pub from: String,
    pub to: String,
    pub trigger: String,
}

/// Append-only record of transitions, exported as JSON lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionLog {
    entries: Vec<Transition>,
}

impl TransitionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        time: SimTime,
        entity: impl Into<String>,
        from: impl ToString,
        to: impl ToString,
        trigger: impl Into<String>,
    ) {
        self.entries.push(Transition {
            time_us: time.as_us(),
            entity: entity.into(),
            from: from.to_string(),
            to: to.to_string(),
            trigger: trigger.into(),
        });
    }

    pub fn entries(&self) -> &[Transition] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

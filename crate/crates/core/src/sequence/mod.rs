//! Pulse programs: the event tree, its textual form and canonical templates.

mod build;
mod parse;

pub use build::{
    build_bangbang, build_hahn_echo, build_inversion_recovery, validate_bangbang, BangBangCheck,
    BangBangParams, BangBangReadout, BathCutoff, PulseSpec,
};
pub use parse::{parse, serialize};

use serde::{Deserialize, Serialize};

use crate::bloch::PulseEvent;
use crate::error::{Error, Result};

/// One statement of a pulse program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Pulse(PulseEvent),
    /// Free evolution, seconds.
    Wait(f64),
    Repeat { count: u32, body: Vec<Event> },
    Acquire(String),
}

/// A validated, immutable pulse program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Event>", into = "Vec<Event>")]
pub struct PulseProgram {
    events: Vec<Event>,
}

/// A step of a fully unrolled program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step<'a> {
    Pulse(&'a PulseEvent),
    Wait(f64),
    Acquire(&'a str),
}

impl PulseProgram {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        validate_events(&events, 0, false)?;
        let program = Self { events };
        let duration = program.duration();
        if !duration.is_finite() {
            return Err(Error::InvalidProgram(format!(
                "expanded duration is not finite ({duration})"
            )));
        }
        Ok(program)
    }

    pub fn empty() -> Self {
        Self { events: Vec::new() }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Total duration with every repeat expanded, pulse durations included.
    pub fn duration(&self) -> f64 {
        events_duration(&self.events)
    }

    /// Number of steps after expansion.
    pub fn expanded_len(&self) -> u64 {
        events_len(&self.events)
    }

    /// Calls `f` for every step of the unrolled program, in order.
    pub fn for_each_step<'a>(&'a self, mut f: impl FnMut(Step<'a>)) {
        walk(&self.events, &mut f);
    }

    /// The unrolled program as a flat list.
    pub fn expand(&self) -> Vec<Event> {
        let mut out = Vec::new();
        self.for_each_step(|s| {
            out.push(match s {
                Step::Pulse(p) => Event::Pulse(*p),
                Step::Wait(d) => Event::Wait(d),
                Step::Acquire(l) => Event::Acquire(l.to_string()),
            })
        });
        out
    }

    /// Removes the leading state-preparation pulse, if the program starts
    /// with one. Used to turn a measurement sequence into a bare process.
    pub fn strip_preparation(&self) -> PulseProgram {
        let mut events = self.events.clone();
        if matches!(events.first(), Some(Event::Pulse(_))) {
            events.remove(0);
        }
        PulseProgram { events }
    }

    /// Labels of all acquire statements, in program order, duplicates removed.
    pub fn acquire_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        self.for_each_step(|s| {
            if let Step::Acquire(l) = s {
                if !labels.iter().any(|x| x == l) {
                    labels.push(l.to_string());
                }
            }
        });
        labels
    }
}

impl TryFrom<Vec<Event>> for PulseProgram {
    type Error = Error;
    fn try_from(events: Vec<Event>) -> Result<Self> {
        Self::new(events)
    }
}

impl From<PulseProgram> for Vec<Event> {
    fn from(p: PulseProgram) -> Self {
        p.events
    }
}

fn validate_events(events: &[Event], depth: usize, in_repeat: bool) -> Result<()> {
    for e in events {
        match e {
            Event::Pulse(p) => p.validate()?,
            Event::Wait(d) => {
                if !d.is_finite() || *d < 0.0 {
                    return Err(Error::InvalidProgram(format!("invalid wait duration {d}")));
                }
            }
            Event::Repeat { count, body } => {
                if *count < 1 {
                    return Err(Error::InvalidProgram("repeat count must be >= 1".into()));
                }
                validate_events(body, depth + 1, true)?;
            }
            Event::Acquire(label) => {
                if in_repeat && depth > 1 {
                    return Err(Error::InvalidProgram(format!(
                        "acquire `{label}` nested {depth} repeats deep (at most 1 allowed)"
                    )));
                }
                if !is_label(label) {
                    return Err(Error::InvalidProgram(format!("invalid acquire label `{label}`")));
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn events_duration(events: &[Event]) -> f64 {
    events
        .iter()
        .map(|e| match e {
            Event::Pulse(p) => p.duration(),
            Event::Wait(d) => *d,
            Event::Repeat { count, body } => *count as f64 * events_duration(body),
            Event::Acquire(_) => 0.0,
        })
        .sum()
}

fn events_len(events: &[Event]) -> u64 {
    events
        .iter()
        .map(|e| match e {
            Event::Repeat { count, body } => *count as u64 * events_len(body),
            _ => 1,
        })
        .sum()
}

fn walk<'a>(events: &'a [Event], f: &mut impl FnMut(Step<'a>)) {
    for e in events {
        match e {
            Event::Pulse(p) => f(Step::Pulse(p)),
            Event::Wait(d) => f(Step::Wait(*d)),
            Event::Acquire(l) => f(Step::Acquire(l)),
            Event::Repeat { count, body } => {
                for _ in 0..*count {
                    walk(body, f);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn repeat_expansion_counts_and_duration() {
        let body = vec![
            Event::Pulse(PulseEvent::hard(PI, 0.0)),
            Event::Wait(2e-3),
            Event::Pulse(PulseEvent::hard(PI, PI)),
            Event::Wait(2e-3),
        ];
        let p = PulseProgram::new(vec![Event::Repeat { count: 7, body: body.clone() }]).unwrap();
        assert_eq!(p.expanded_len(), 28);
        assert_eq!(p.expand().len(), 28);
        assert!((p.duration() - 7.0 * 4e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_deeply_nested_acquire() {
        let inner = Event::Repeat {
            count: 2,
            body: vec![Event::Acquire("a".into())],
        };
        let err = PulseProgram::new(vec![Event::Repeat { count: 2, body: vec![inner] }]);
        assert!(err.is_err());
        let ok = PulseProgram::new(vec![Event::Repeat {
            count: 2,
            body: vec![Event::Wait(1.0), Event::Acquire("a".into())],
        }]);
        assert!(ok.is_ok());
    }

    #[test]
    fn rejects_zero_repeat_and_bad_waits() {
        assert!(PulseProgram::new(vec![Event::Repeat { count: 0, body: vec![] }]).is_err());
        assert!(PulseProgram::new(vec![Event::Wait(-1.0)]).is_err());
        assert!(PulseProgram::new(vec![Event::Wait(f64::INFINITY)]).is_err());
    }

    #[test]
    fn strip_preparation_drops_leading_pulse_only() {
        let p = PulseProgram::new(vec![
            Event::Pulse(PulseEvent::hard(PI / 2.0, 0.0)),
            Event::Wait(1e-3),
            Event::Acquire("echo".into()),
        ])
        .unwrap();
        let s = p.strip_preparation();
        assert_eq!(s.events().len(), 2);
        assert_eq!(s.strip_preparation(), s);
    }
}

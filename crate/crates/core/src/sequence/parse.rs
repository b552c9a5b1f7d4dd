//! Text form of pulse programs.
//!
//! Grammar (EBNF):
//!
//! ```text
//! program    = { [ statement ] separator } [ statement ] ;
//! separator  = newline | ";" ;
//! statement  = pulse | wait | repeat | acquire ;
//! pulse      = "pulse" { attribute } ;
//! attribute  = ( "area" | "phase" ) "=" angle
//!            | "rabi" "=" frequency
//!            | "duration" "=" time ;
//! wait       = "wait" time ;
//! repeat     = "repeat" integer "{" program "}" ;
//! acquire    = "acquire" label ;
//! time       = number ( "s" | "ms" | "us" | "ns" ) ;
//! frequency  = number ( "Hz" | "kHz" | "MHz" ) ;
//! angle      = number [ "rad" | "deg" ]            (* bare numbers are degrees *)
//!            | [ "-" ] [ number [ "*" ] ] "pi" [ "/" number ] ;
//! label      = letter { letter | digit | "_" | "-" } ;
//! comment    = "#" { any character except newline } ;
//! ```
//!
//! A pulse with `area` only is hard; `rabi` + `duration` is a finite pulse;
//! `rabi` + `area` is a finite pulse whose duration gives that area on
//! resonance. `phase` defaults to 0.

use std::f64::consts::PI;
use std::fmt::Write;

use super::{is_label, Event, PulseProgram};
use crate::bloch::{PulseEvent, PulseShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Open,
    Close,
    Sep,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 0;
    let mut word = String::new();
    let mut word_start = (1, 1);
    let mut in_comment = false;
    let flush = |word: &mut String, start: (usize, usize), out: &mut Vec<Token>| {
        if !word.is_empty() {
            out.push(Token {
                tok: Tok::Word(std::mem::take(word)),
                line: start.0,
                column: start.1,
            });
        }
    };
    for c in text.chars() {
        column += 1;
        if c == '\n' {
            flush(&mut word, word_start, &mut out);
            out.push(Token { tok: Tok::Sep, line, column });
            line += 1;
            column = 0;
            in_comment = false;
            continue;
        }
        if in_comment {
            continue;
        }
        match c {
            '#' => {
                flush(&mut word, word_start, &mut out);
                in_comment = true;
            }
            ';' | '{' | '}' => {
                flush(&mut word, word_start, &mut out);
                let tok = match c {
                    ';' => Tok::Sep,
                    '{' => Tok::Open,
                    _ => Tok::Close,
                };
                out.push(Token { tok, line, column });
            }
            c if c.is_whitespace() => flush(&mut word, word_start, &mut out),
            c => {
                if word.is_empty() {
                    word_start = (line, column);
                }
                word.push(c);
            }
        }
    }
    flush(&mut word, word_start, &mut out);
    out
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn syntax<T>(&self, at: (usize, usize), message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            line: at.0,
            column: at.1,
            message: message.into(),
        })
    }

    fn block(&mut self, nested: bool) -> Result<Vec<Event>> {
        let mut events = Vec::new();
        loop {
            let Some(tok) = self.peek().cloned() else {
                if nested {
                    return self.syntax(self.end, "unterminated repeat block, expected `}`");
                }
                return Ok(events);
            };
            match &tok.tok {
                Tok::Sep => {
                    self.pos += 1;
                }
                Tok::Close => {
                    if nested {
                        self.pos += 1;
                        return Ok(events);
                    }
                    return self.syntax((tok.line, tok.column), "unexpected `}`");
                }
                Tok::Open => return self.syntax((tok.line, tok.column), "unexpected `{`"),
                Tok::Word(w) => {
                    self.pos += 1;
                    let at = (tok.line, tok.column);
                    let event = match w.as_str() {
                        "pulse" => self.pulse(at)?,
                        "wait" => self.wait()?,
                        "repeat" => self.repeat()?,
                        "acquire" => self.acquire()?,
                        other => return self.syntax(at, format!("unknown statement `{other}`")),
                    };
                    events.push(event);
                    // A statement must be followed by a separator or block boundary.
                    match self.peek().map(|t| &t.tok) {
                        None | Some(Tok::Sep) | Some(Tok::Close) => {}
                        Some(_) => {
                            return self.syntax(self.here(), "expected end of statement");
                        }
                    }
                }
            }
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, (usize, usize))> {
        match self.next() {
            Some(Token {
                tok: Tok::Word(w),
                line,
                column,
            }) => Ok((w, (line, column))),
            Some(t) => self.syntax((t.line, t.column), format!("expected {what}")),
            None => self.syntax(self.end, format!("expected {what}, found end of input")),
        }
    }

    fn pulse(&mut self, at: (usize, usize)) -> Result<Event> {
        let mut area = None;
        let mut phase = None;
        let mut rabi = None;
        let mut duration = None;
        while let Some(Token {
            tok: Tok::Word(w),
            line,
            column,
        }) = self.peek().cloned()
        {
            self.pos += 1;
            let Some((key, value)) = w.split_once('=') else {
                return self.syntax((line, column), format!("expected key=value, found `{w}`"));
            };
            let vat = (line, column + key.chars().count() + 1);
            let slot = match key {
                "area" => &mut area,
                "phase" => &mut phase,
                "rabi" => &mut rabi,
                "duration" => &mut duration,
                _ => return self.syntax((line, column), format!("unknown pulse attribute `{key}`")),
            };
            if slot.is_some() {
                return self.syntax((line, column), format!("duplicate attribute `{key}`"));
            }
            *slot = Some(match key {
                "area" | "phase" => parse_angle(value, vat)?,
                "rabi" => parse_quantity(value, vat, FREQUENCY_UNITS)?,
                _ => {
                    let d = parse_quantity(value, vat, TIME_UNITS)?;
                    if d < 0.0 {
                        return Err(Error::NegativeDuration {
                            value: d,
                            line: vat.0,
                            column: vat.1,
                        });
                    }
                    d
                }
            });
        }
        let phase = phase.unwrap_or(0.0);
        let event = match (area, rabi, duration) {
            (Some(area), None, None) => PulseEvent::hard(area, phase),
            (None, Some(rabi), Some(duration)) => PulseEvent::finite(rabi, duration, phase),
            (Some(area), Some(rabi), None) => PulseEvent::finite_with_area(rabi, area, phase),
            _ => {
                return self.syntax(
                    at,
                    "pulse needs `area`, `rabi`+`duration`, or `rabi`+`area`",
                )
            }
        };
        event.validate().or_else(|e| self.syntax(at, e.to_string()))?;
        Ok(Event::Pulse(event))
    }

    fn wait(&mut self) -> Result<Event> {
        let (w, at) = self.word("a duration")?;
        let d = parse_quantity(&w, at, TIME_UNITS)?;
        if d < 0.0 {
            return Err(Error::NegativeDuration {
                value: d,
                line: at.0,
                column: at.1,
            });
        }
        Ok(Event::Wait(d))
    }

    fn repeat(&mut self) -> Result<Event> {
        let (w, at) = self.word("a repeat count")?;
        let count: u32 = match w.parse() {
            Ok(n) if n >= 1 => n,
            _ => return self.syntax(at, format!("repeat count must be a positive integer, got `{w}`")),
        };
        match self.next() {
            Some(Token { tok: Tok::Open, .. }) => {}
            Some(t) => return self.syntax((t.line, t.column), "expected `{`"),
            None => return self.syntax(self.end, "expected `{`"),
        }
        let body = self.block(true)?;
        Ok(Event::Repeat { count, body })
    }

    fn acquire(&mut self) -> Result<Event> {
        let (w, at) = self.word("an acquire label")?;
        if !is_label(&w) {
            return self.syntax(at, format!("invalid label `{w}`"));
        }
        Ok(Event::Acquire(w))
    }
}

/// Unit suffixes with their decimal exponent relative to s or Hz.
const TIME_UNITS: &[(&str, i32)] = &[("s", 0), ("ms", -3), ("us", -6), ("ns", -9)];
const FREQUENCY_UNITS: &[(&str, i32)] = &[("Hz", 0), ("kHz", 3), ("MHz", 6)];

/// Splits `text` into the longest leading float literal and the remainder.
fn split_number(text: &str) -> (&str, &str) {
    let b = text.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return ("", text);
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    text.split_at(i)
}

fn parse_quantity(text: &str, at: (usize, usize), units: &[(&str, i32)]) -> Result<f64> {
    let (num, unit) = split_number(text);
    let value: f64 = num.parse().map_err(|_| Error::Syntax {
        line: at.0,
        column: at.1,
        message: format!("expected a number, found `{text}`"),
    })?;
    if unit.is_empty() {
        return Err(Error::Syntax {
            line: at.0,
            column: at.1,
            message: format!("missing unit in `{text}`"),
        });
    }
    let exponent = units
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::UnknownUnit {
            unit: unit.to_string(),
            line: at.0,
            column: at.1 + num.len(),
        })?;
    let v = if exponent < 0 {
        value / 10f64.powi(-exponent)
    } else {
        value * 10f64.powi(exponent)
    };
    if !v.is_finite() {
        return Err(Error::Syntax {
            line: at.0,
            column: at.1,
            message: format!("value `{text}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_angle(text: &str, at: (usize, usize)) -> Result<f64> {
    let bad = || Error::Syntax {
        line: at.0,
        column: at.1,
        message: format!("malformed angle `{text}`"),
    };
    if let Some(pi_at) = text.find("pi") {
        let (head, tail) = text.split_at(pi_at);
        let tail = &tail[2..];
        let head = head.strip_suffix('*').unwrap_or(head);
        let coefficient = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().map_err(|_| bad())?,
        };
        let divisor = match tail {
            "" => 1.0,
            t => t
                .strip_prefix('/')
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())?,
        };
        let v = coefficient * PI / divisor;
        return if v.is_finite() { Ok(v) } else { Err(bad()) };
    }
    let (num, unit) = split_number(text);
    let value: f64 = num.parse().map_err(|_| bad())?;
    let v = match unit {
        "" | "deg" => value.to_radians(),
        "rad" => value,
        u => {
            return Err(Error::UnknownUnit {
                unit: u.to_string(),
                line: at.0,
                column: at.1 + num.len(),
            })
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Parses sequence-language source into a validated program.
pub fn parse(text: &str) -> Result<PulseProgram> {
    let tokens = lex(text);
    let lines = text.lines().count().max(1);
    let last_len = text.lines().last().map(|l| l.chars().count()).unwrap_or(0);
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: (lines, last_len + 1),
    };
    let events = parser.block(false)?;
    PulseProgram::new(events)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Canonical text form: one statement per line, SI units, 17 significant
/// digits so that `parse(serialize(p)) == p` bit for bit.
pub fn serialize(program: &PulseProgram) -> String {
    let mut out = String::new();
    write_events(&mut out, program.events(), 0);
    out
}

fn write_events(out: &mut String, events: &[Event], depth: usize) {
    let indent = "    ".repeat(depth);
    for e in events {
        out.push_str(&indent);
        match e {
            Event::Pulse(p) => match p.shape {
                PulseShape::Hard { area } => {
                    let _ = writeln!(
                        out,
                        "pulse area={}rad phase={}rad",
                        fmt_f64(area),
                        fmt_f64(p.phase)
                    );
                }
                PulseShape::Finite { rabi, duration } => {
                    let _ = writeln!(
                        out,
                        "pulse rabi={}Hz duration={}s phase={}rad",
                        fmt_f64(rabi),
                        fmt_f64(duration),
                        fmt_f64(p.phase)
                    );
                }
            },
            Event::Wait(d) => {
                let _ = writeln!(out, "wait {}s", fmt_f64(*d));
            }
            Event::Repeat { count, body } => {
                let _ = writeln!(out, "repeat {count} {{");
                write_events(out, body, depth + 1);
                out.push_str(&indent);
                out.push_str("}\n");
            }
            Event::Acquire(label) => {
                let _ = writeln!(out, "acquire {label}");
            }
        }
    }
}

//! Deterministic kick schedules and their plain-text form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kick {
    pub time: f64,
    pub strength: f64,
}

/// Ordered list of `(time, strength)` kicks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KickPolicy {
    kicks: Vec<Kick>,
}

impl KickPolicy {
    pub fn new() -> Self {
        KickPolicy::default()
    }

    pub fn from_kicks(mut kicks: Vec<Kick>) -> Self {
        kicks.sort_by(|a, b| a.time.total_cmp(&b.time));
        KickPolicy { kicks }
    }

    /// Constant-strength kicks at `period, 2·period, …` strictly before `horizon`.
    pub fn periodic(strength: f64, period: f64, horizon: f64) -> Self {
        let mut kicks = Vec::new();
        let mut n = 1u64;
        while (n as f64) * period < horizon - 1e-9 * period {
            kicks.push(Kick { time: n as f64 * period, strength });
            n += 1;
        }
        KickPolicy { kicks }
    }

    pub fn push(&mut self, time: f64, strength: f64) {
        self.kicks.push(Kick { time, strength });
    }

    pub fn kicks(&self) -> &[Kick] {
        &self.kicks
    }

    pub fn len(&self) -> usize {
        self.kicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kicks.is_empty()
    }

    pub fn total_strength(&self) -> f64 {
        self.kicks.iter().map(|k| k.strength).sum()
    }

    /// Accumulated kicking strength up to and including time `t`.
    pub fn accumulated(&self, t: f64) -> f64 {
        self.kicks.iter().filter(|k| k.time <= t).map(|k| k.strength).sum()
    }

    /// One `time strength` pair per line; floats use the shortest exact decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# time strength\n");
        for k in &self.kicks {
            let _ = writeln!(out, "{} {}", k.time, k.strength);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kicks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing field", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let time = parse(it.next())?;
            let strength = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing fields", lineno + 1)));
            }
            kicks.push(Kick { time, strength });
        }
        Ok(KickPolicy { kicks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn periodic_schedule() {
        let p = KickPolicy::periodic(30.0, 1.0, 5.0);
        let times: Vec<f64> = p.kicks().iter().map(|k| k.time).collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.total_strength(), 120.0);
        assert_eq!(p.accumulated(2.5), 60.0);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KickPolicy::from_text("1.0").is_err());
        assert!(KickPolicy::from_text("1.0 2.0 3.0").is_err());
        assert!(KickPolicy::from_text("a 2").is_err());
        assert!(KickPolicy::from_text("# only a comment\n\n").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(raw in prop::collection::vec((0.0f64..1e4, 0.0f64..1e3), 0..40)) {
            let p = KickPolicy::from_kicks(raw.iter().map(|&(time, strength)| Kick { time, strength }).collect());
            let back = KickPolicy::from_text(&p.to_text()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}

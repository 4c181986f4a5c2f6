use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Speech,
    Silence,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Speech => "speech",
            Condition::Silence => "silence",
        }
    }

    pub fn other(&self) -> Condition {
        match self {
            Condition::Speech => Condition::Silence,
            Condition::Silence => Condition::Speech,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset: f64,
    pub duration: f64,
    pub condition: Condition,
}

impl Event {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Stimulus intervals, sorted by onset.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTimeline {
    events: Vec<Event>,
    total_duration: f64,
}

impl EventTimeline {
    /// Validates and sorts `events`. Any two intervals may touch but not overlap.
    pub fn new(events: Vec<Event>, total_duration: f64) -> Result<Self> {
        Self::validate(events.into_iter().map(|e| (None, e)).collect(), total_duration)
    }

    fn validate(mut rows: Vec<(Option<usize>, Event)>, total_duration: f64) -> Result<Self> {
        if !(total_duration > 0.0 && total_duration.is_finite()) {
            return Err(Error::Validation(format!("total duration {total_duration} must be > 0")));
        }
        let label = |line: Option<usize>, idx: usize| match line {
            Some(l) => format!("row at line {l}"),
            None => format!("event {idx}"),
        };
        for (idx, (line, e)) in rows.iter().enumerate() {
            let at = label(*line, idx);
            if !(e.onset >= 0.0 && e.onset.is_finite()) {
                return Err(Error::Validation(format!("{at}: onset {} must be >= 0", e.onset)));
            }
            if !(e.duration > 0.0 && e.duration.is_finite()) {
                return Err(Error::Validation(format!("{at}: duration {} must be > 0", e.duration)));
            }
            if e.end() > total_duration + 1e-9 {
                return Err(Error::Validation(format!(
                    "{at}: interval ends at {} s, after the {total_duration} s stimulus",
                    e.end()
                )));
            }
        }
        rows.sort_by(|a, b| a.1.onset.total_cmp(&b.1.onset));
        for (idx, pair) in rows.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            if cur.1.onset < prev.1.end() - 1e-9 {
                return Err(Error::Validation(format!(
                    "{} ({}) overlaps {} ({})",
                    label(cur.0, idx + 1),
                    cur.1.condition.as_str(),
                    label(prev.0, idx),
                    prev.1.condition.as_str()
                )));
            }
        }
        Ok(Self { events: rows.into_iter().map(|(_, e)| e).collect(), total_duration })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn of(&self, condition: Condition) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.condition == condition)
    }

    /// Same intervals with the two condition labels exchanged.
    pub fn swapped(&self) -> Self {
        let events = self.events.iter().map(|e| Event { condition: e.condition.other(), ..*e }).collect();
        Self { events, total_duration: self.total_duration }
    }
}

pub fn parse_events_tsv(text: &str, total_duration: f64) -> Result<EventTimeline> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split('\t').map(str::trim).collect(),
        None => return Err(Error::Validation("events file is empty (header row required)".into())),
    };
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Validation(format!("events header lacks column '{name}'")))
    };
    let (c_onset, c_dur, c_cond) = (col("onset")?, col("duration")?, col("condition")?);

    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let get = |c: usize| {
            fields
                .get(c)
                .copied()
                .ok_or_else(|| Error::Validation(format!("row at line {lineno}: expected {} columns", header.len())))
        };
        let num = |c: usize, what: &str| -> Result<f64> {
            let s = get(c)?;
            s.parse::<f64>()
                .map_err(|_| Error::Validation(format!("row at line {lineno}: {what} '{s}' is not a number")))
        };
        let condition = match get(c_cond)? {
            "speech" => Condition::Speech,
            "silence" => Condition::Silence,
            other => return Err(Error::Validation(format!("row at line {lineno}: unknown condition '{other}'"))),
        };
        rows.push((
            Some(lineno),
            Event { onset: num(c_onset, "onset")?, duration: num(c_dur, "duration")?, condition },
        ));
    }
    EventTimeline::validate(rows, total_duration)
}

pub fn read_events_tsv(path: impl AsRef<Path>, total_duration: f64) -> Result<EventTimeline> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events_tsv(&text, total_duration)
}

pub fn format_events_tsv(timeline: &EventTimeline) -> String {
    let mut out = String::from("onset\tduration\tcondition\n");
    for e in timeline.events() {
        writeln!(out, "{}\t{}\t{}", e.onset, e.duration, e.condition.as_str()).unwrap();
    }
    out
}

pub fn write_events_tsv(path: impl AsRef<Path>, timeline: &EventTimeline) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_events_tsv(timeline)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_adjacent_events() {
        let tl = parse_events_tsv("onset\tduration\tcondition\n0\t10\tspeech\n10\t5\tsilence\n", 20.0).unwrap();
        assert_eq!(tl.events().len(), 2);
    }

    #[test]
    fn overlap_is_rejected_with_row() {
        let err = parse_events_tsv("onset\tduration\tcondition\n0\t10\tspeech\n5\t5\tsilence\n", 20.0).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_timeline() {
        let tl = parse_events_tsv("onset\tduration\tcondition\n", 20.0).unwrap();
        assert!(tl.events().is_empty());
    }

    #[test]
    fn bad_rows() {
        let h = "onset\tduration\tcondition\n";
        assert!(parse_events_tsv(&format!("{h}-1\t2\tspeech\n"), 20.0).is_err());
        assert!(parse_events_tsv(&format!("{h}1\t2\tmusic\n"), 20.0).is_err());
        assert!(parse_events_tsv(&format!("{h}1\t0\tspeech\n"), 20.0).is_err());
        assert!(parse_events_tsv(&format!("{h}15\t10\tspeech\n"), 20.0).is_err());
    }

    #[test]
    fn rows_sorted_and_round_trip() {
        let text = "condition\tonset\tduration\nsilence\t12.5\t3\nspeech\t0\t10\n";
        let tl = parse_events_tsv(text, 30.0).unwrap();
        assert_eq!(tl.events()[0].condition, Condition::Speech);
        let again = parse_events_tsv(&format_events_tsv(&tl), 30.0).unwrap();
        assert_eq!(again, tl);
    }
}

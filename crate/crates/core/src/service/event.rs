//! Event types and the append-only newline-delimited log.

use super::intro::AdmissionAttempt;
use super::{AisSubmission, AssignmentId, StudyConfig, TaskFlow};
use crate::domain::{AnswerId, Dimension, DimensionRating, LikertValue, RaterId, ScreeningResult, StudyId};
use crate::pipeline::AnswerBundle;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    StudyCreated { config: StudyConfig, bundles: Vec<AnswerBundle> },
    StudyClosed { study_id: StudyId },
    RaterAdmitted { rater_id: RaterId },
    TutorialAnswered { rater_id: RaterId, item_id: String, advanced: bool },
    AdmissionScored { attempt: AdmissionAttempt },
    AssignmentIssued {
        assignment_id: AssignmentId,
        study_id: StudyId,
        answer_id: AnswerId,
        rater_id: RaterId,
        kind: TaskFlow,
    },
    AssignmentExpired { assignment_id: AssignmentId },
    ScreeningSubmitted { assignment_id: AssignmentId, result: ScreeningResult },
    DimensionRated { assignment_id: AssignmentId, rating: DimensionRating },
    AssistanceFeedback { assignment_id: AssignmentId, dimension: Dimension, helpfulness: LikertValue },
    AisSubmitted { assignment_id: AssignmentId, submission: AisSubmission },
}

impl EventBody {
    pub fn event_type(&self) -> &'static str {
        match self {
            EventBody::StudyCreated { .. } => "study_created",
            EventBody::StudyClosed { .. } => "study_closed",
            EventBody::RaterAdmitted { .. } => "rater_admitted",
            EventBody::TutorialAnswered { .. } => "tutorial_answered",
            EventBody::AdmissionScored { .. } => "admission_scored",
            EventBody::AssignmentIssued { .. } => "assignment_issued",
            EventBody::AssignmentExpired { .. } => "assignment_expired",
            EventBody::ScreeningSubmitted { .. } => "screening_submitted",
            EventBody::DimensionRated { .. } => "dimension_rated",
            EventBody::AssistanceFeedback { .. } => "assistance_feedback",
            EventBody::AisSubmitted { .. } => "ais_submitted",
        }
    }
}

/// One log line: `{seq, event_type, payload, server_time}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
    pub server_time: DateTime<Utc>,
}

/// Append-only JSONL file. Each append is one `write` of a full line
/// followed by `fsync`.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) and returns the events already present.
    pub fn open(path: impl AsRef<Path>) -> io::Result<(EventLog, Vec<Event>)> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let events = if path.exists() { read_events(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((EventLog { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

pub fn read_events(path: impl AsRef<Path>) -> io::Result<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

pub fn write_events(path: impl AsRef<Path>, events: &[Event]) -> io::Result<()> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}

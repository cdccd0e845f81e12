//! Job records and their state machine.

use std::time::Instant;

use adforge_core::pipeline::RenderReport;
use adforge_core::Quad;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Created,
    Detecting,
    Detected,
    CornersConfirmed,
    Rendering,
    Done,
    Failed,
}

impl JobState {
    /// Whether `self -> to` is an allowed step. Re-confirming corners is a
    /// legal self-loop; nothing else is.
    pub fn can_transition(self, to: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, to),
            (Created, Detecting)
                | (Detecting, Detected)
                | (Detecting, Failed)
                | (Detected, CornersConfirmed)
                | (CornersConfirmed, CornersConfirmed)
                | (CornersConfirmed, Rendering)
                | (Rendering, Done)
                | (Rendering, Failed)
        )
    }

    /// True once corners have been confirmed along the success path.
    pub fn has_confirmed_corners(self) -> bool {
        matches!(self, JobState::CornersConfirmed | JobState::Rendering | JobState::Done)
    }

    pub fn is_busy(self) -> bool {
        matches!(self, JobState::Detecting | JobState::Rendering)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IllegalTransition {
    pub from: JobState,
    pub to: JobState,
}

impl std::fmt::Display for IllegalTransition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "illegal job transition {:?} -> {:?}", self.from, self.to)
    }
}

#[derive(Debug)]
pub struct JobRecord {
    pub id: String,
    state: JobState,
    history: Vec<JobState>,
    pub video: String,
    pub advert: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub keyframe: Option<usize>,
    pub detected: Option<Quad>,
    pub confirmed: Option<Quad>,
    progress: f64,
    pub report: Option<RenderReport>,
    pub error: Option<String>,
    /// PNG bytes of every frame emitted so far.
    pub previews: Vec<Vec<u8>>,
    pub finished_at: Option<Instant>,
}

impl JobRecord {
    pub fn new(id: String, video: String, advert: String, width: usize, height: usize, frame_count: usize) -> Self {
        Self {
            id,
            state: JobState::Created,
            history: vec![JobState::Created],
            video,
            advert,
            width,
            height,
            frame_count,
            keyframe: None,
            detected: None,
            confirmed: None,
            progress: 0.0,
            report: None,
            error: None,
            previews: Vec::new(),
            finished_at: None,
        }
    }

    pub fn state(&self) -> JobState {
        self.state
    }

    pub fn history(&self) -> &[JobState] {
        &self.history
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    /// The only way a record changes state.
    pub fn transition(&mut self, to: JobState) -> Result<(), IllegalTransition> {
        if !self.state.can_transition(to) {
            return Err(IllegalTransition { from: self.state, to });
        }
        self.state = to;
        self.history.push(to);
        Ok(())
    }

    /// Progress never moves backwards.
    pub fn advance_progress(&mut self, p: f64) {
        self.progress = self.progress.max(p.clamp(0.0, 1.0));
    }

    pub fn view(&self) -> JobView {
        JobView {
            id: self.id.clone(),
            state: self.state,
            history: self.history.clone(),
            video: self.video.clone(),
            advert: self.advert.clone(),
            width: self.width,
            height: self.height,
            frame_count: self.frame_count,
            keyframe: self.keyframe,
            detected: self.detected,
            confirmed: self.confirmed,
            progress: self.progress,
            frames_available: self.previews.len(),
            report: self.report.clone(),
            error: self.error.clone(),
        }
    }
}

/// JSON shape of `GET /jobs/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub state: JobState,
    pub history: Vec<JobState>,
    pub video: String,
    pub advert: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub keyframe: Option<usize>,
    pub detected: Option<Quad>,
    pub confirmed: Option<Quad>,
    pub progress: f64,
    pub frames_available: usize,
    pub report: Option<RenderReport>,
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use JobState::*;

    const ALL: [JobState; 7] = [Created, Detecting, Detected, CornersConfirmed, Rendering, Done, Failed];

    #[test]
    fn transition_table() {
        let legal: Vec<(JobState, JobState)> =
            ALL.iter().flat_map(|&a| ALL.iter().map(move |&b| (a, b))).filter(|(a, b)| a.can_transition(*b)).collect();
        assert_eq!(legal.len(), 8);
        for s in [Done, Failed] {
            assert!(ALL.iter().all(|&t| !s.can_transition(t)), "{s:?} is terminal");
        }
        assert!(!Created.can_transition(Detected));
        assert!(!Detected.can_transition(Rendering));
    }

    #[test]
    fn record_rejects_illegal_steps() {
        let mut r = JobRecord::new("j".into(), "v".into(), "a".into(), 4, 4, 1);
        assert_eq!(r.transition(Rendering), Err(IllegalTransition { from: Created, to: Rendering }));
        r.transition(Detecting).unwrap();
        r.transition(Failed).unwrap();
        assert!(r.transition(Detecting).is_err());
        assert_eq!(r.history(), &[Created, Detecting, Failed]);
        r.advance_progress(0.5);
        r.advance_progress(0.2);
        assert_eq!(r.progress(), 0.5);
    }
}

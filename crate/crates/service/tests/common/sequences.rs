//! Random API call sequences checked against the job state machine.

use std::collections::HashMap;

use adforge_service::jobs::JobState;
use axum::http::StatusCode;
use axum::Router;
use proptest::prelude::*;
use serde_json::Value;

use super::{call, call_json, settle, FRAMES};

#[derive(Debug, Clone)]
pub enum Op {
    /// 0 heatmaps on the clip, 1 chroma on the clip, 2 chroma on a blank
    /// video, 3 unknown video, 4 malformed body.
    Create(u8),
    /// 0 valid, 1 bowtie, 2 out of bounds, 3 frame out of range.
    Corners(usize, u8),
    Render(usize, bool),
    Get(usize),
    Frame(usize, usize),
    Result(usize),
    Settle(usize),
    /// Settle, then confirm valid corners, then render: the happy path.
    Drive(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u8..5).prop_map(Op::Create),
        3 => (any::<usize>(), prop_oneof![3 => Just(0u8), 1 => 1u8..4]).prop_map(|(j, v)| Op::Corners(j, v)),
        3 => (any::<usize>(), prop::bool::weighted(0.2)).prop_map(|(j, m)| Op::Render(j, m)),
        1 => any::<usize>().prop_map(Op::Get),
        1 => (any::<usize>(), 0..FRAMES + 2).prop_map(|(j, n)| Op::Frame(j, n)),
        1 => any::<usize>().prop_map(Op::Result),
        3 => any::<usize>().prop_map(Op::Settle),
        2 => any::<usize>().prop_map(Op::Drive),
    ]
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op(), 1..20)
}

fn state_of(v: &Value) -> JobState {
    serde_json::from_value(v["state"].clone()).unwrap()
}

fn history_of(v: &Value) -> Vec<JobState> {
    serde_json::from_value(v["history"].clone()).unwrap()
}

fn corners_body(variant: u8) -> String {
    match variant {
        0 => r#"{"frame": 0, "corners": [[22, 55], [20, 15], [70, 17], [72, 50]]}"#,
        1 => r#"{"frame": 0, "corners": [[20, 15], [72, 50], [70, 17], [22, 55]]}"#,
        2 => r#"{"frame": 0, "corners": [[20, 15], [170, 17], [72, 50], [22, 55]]}"#,
        _ => r#"{"frame": 99, "corners": [[20, 15], [70, 17], [72, 50], [22, 55]]}"#,
    }
    .to_string()
}

#[derive(Default)]
struct Model {
    ids: Vec<String>,
    /// Whether the job's detection is expected to succeed.
    detectable: HashMap<String, bool>,
    last: HashMap<String, Value>,
}

impl Model {
    fn pick(&self, j: usize) -> String {
        if self.ids.is_empty() {
            "job-999999".into()
        } else {
            self.ids[j % self.ids.len()].clone()
        }
    }

    /// Fetches the job and checks every invariant against the previous view.
    async fn observe(&mut self, app: &Router, id: &str) -> Result<Value, String> {
        let (s, v) = call_json(app, "GET", &format!("/jobs/{id}"), None).await;
        if !self.detectable.contains_key(id) {
            return if s == StatusCode::NOT_FOUND { Ok(Value::Null) } else { Err(format!("unknown job {id} answered {s}")) };
        }
        if s != StatusCode::OK {
            return Err(format!("GET {id} -> {s}"));
        }
        let history = history_of(&v);
        if history.first() != Some(&JobState::Created) || history.last() != Some(&state_of(&v)) {
            return Err(format!("history does not end in the current state: {v}"));
        }
        if let Some(w) = history.windows(2).find(|w| !w[0].can_transition(w[1])) {
            return Err(format!("illegal step {:?} -> {:?} in {v}", w[0], w[1]));
        }
        if history.contains(&JobState::CornersConfirmed) != !v["confirmed"].is_null() {
            return Err(format!("confirmed corners disagree with history: {v}"));
        }
        if let Some(prev) = self.last.get(id) {
            let old = history_of(prev);
            if !history.starts_with(&old) {
                return Err(format!("history rewritten: {old:?} -> {history:?}"));
            }
            if v["progress"].as_f64() < prev["progress"].as_f64() {
                return Err(format!("progress went backwards: {} -> {}", prev["progress"], v["progress"]));
            }
            if v["frames_available"].as_u64() < prev["frames_available"].as_u64() {
                return Err("previews disappeared".into());
            }
        }
        self.last.insert(id.to_string(), v.clone());
        Ok(v)
    }
}

fn expect(op: &Op, got: StatusCode, allowed: &[StatusCode]) -> Result<(), String> {
    if allowed.contains(&got) {
        Ok(())
    } else {
        Err(format!("{op:?} -> {got}, expected one of {allowed:?}"))
    }
}

/// Terminal states reached by the jobs of a sequence.
#[derive(Debug, Default, Clone, Copy)]
pub struct Outcome {
    pub done: usize,
    pub failed: usize,
    pub idle: usize,
}

/// Runs one sequence; any violated invariant or unexpected status is an error.
pub async fn run_sequence(app: &Router, ops: &[Op]) -> Result<Outcome, String> {
    let mut expanded = Vec::new();
    for op in ops {
        match *op {
            Op::Drive(j) => expanded.extend([Op::Settle(j), Op::Corners(j, 0), Op::Render(j, false)]),
            ref o => expanded.push(o.clone()),
        }
    }
    use StatusCode as S;
    let mut m = Model::default();
    for op in &expanded {
        match *op {
            Op::Create(variant) => {
                let body = match variant {
                    0 => r#"{"video": "clip", "advert": "logo"}"#,
                    1 => r#"{"video": "clip", "advert": "logo", "detector": {"kind": "chroma-baseline", "color": [0.1, 0.75, 0.2], "sigma": 0.2}}"#,
                    2 => r#"{"video": "blank", "advert": "logo", "detector": {"kind": "chroma-baseline", "color": [0.1, 0.75, 0.2]}}"#,
                    3 => r#"{"video": "nope", "advert": "logo"}"#,
                    _ => r#"{"video": 7}"#,
                };
                let (s, v) = call_json(app, "POST", "/jobs", Some(body)).await;
                match variant {
                    0..=2 => {
                        expect(op, s, &[S::CREATED])?;
                        let id = v["id"].as_str().ok_or("no id")?.to_string();
                        m.ids.push(id.clone());
                        m.detectable.insert(id.clone(), variant < 2);
                        m.observe(app, &id).await?;
                    }
                    3 => expect(op, s, &[S::NOT_FOUND])?,
                    _ => expect(op, s, &[S::UNPROCESSABLE_ENTITY])?,
                }
            }
            Op::Corners(j, variant) => {
                let id = m.pick(j);
                let before = m.observe(app, &id).await?;
                let (s, _) = call(app, "POST", &format!("/jobs/{id}/corners"), Some(&corners_body(variant))).await;
                let ok = if variant == 0 { S::OK } else { S::UNPROCESSABLE_ENTITY };
                let allowed: &[S] = if before.is_null() {
                    &[S::NOT_FOUND]
                } else {
                    match state_of(&before) {
                        JobState::Detected | JobState::CornersConfirmed => &[ok],
                        JobState::Created | JobState::Detecting => &[ok, S::CONFLICT],
                        _ => &[S::CONFLICT],
                    }
                };
                expect(op, s, allowed)?;
                m.observe(app, &id).await?;
            }
            Op::Render(j, malformed) => {
                let id = m.pick(j);
                let before = m.observe(app, &id).await?;
                let (s, _) = call(app, "POST", &format!("/jobs/{id}/render"), Some(if malformed { "[1" } else { "{}" })).await;
                let allowed = if before.is_null() {
                    S::NOT_FOUND
                } else if malformed {
                    S::UNPROCESSABLE_ENTITY
                } else if state_of(&before) == JobState::CornersConfirmed {
                    S::ACCEPTED
                } else {
                    S::CONFLICT
                };
                expect(op, s, &[allowed])?;
                m.observe(app, &id).await?;
            }
            Op::Get(j) => {
                let id = m.pick(j);
                m.observe(app, &id).await?;
            }
            Op::Frame(j, n) => {
                let id = m.pick(j);
                let before = m.observe(app, &id).await?;
                let (s, _) = call(app, "GET", &format!("/jobs/{id}/frames/{n}"), None).await;
                let after = m.observe(app, &id).await?;
                let avail = |v: &Value| v["frames_available"].as_u64().unwrap_or(0) as usize;
                let allowed: &[S] = if before.is_null() || avail(&after) <= n {
                    &[S::NOT_FOUND]
                } else if avail(&before) > n {
                    &[S::OK]
                } else {
                    &[S::OK, S::NOT_FOUND]
                };
                expect(op, s, allowed)?;
            }
            Op::Result(j) => {
                let id = m.pick(j);
                let before = m.observe(app, &id).await?;
                let (s, _) = call(app, "GET", &format!("/jobs/{id}/result"), None).await;
                let allowed: &[S] = if before.is_null() {
                    &[S::NOT_FOUND]
                } else {
                    match state_of(&before) {
                        JobState::Done => &[S::OK],
                        JobState::Rendering => &[S::OK, S::CONFLICT],
                        _ => &[S::CONFLICT],
                    }
                };
                expect(op, s, allowed)?;
                m.observe(app, &id).await?;
            }
            Op::Settle(j) => {
                let id = m.pick(j);
                if m.detectable.contains_key(&id) {
                    settle(app, &id).await;
                }
                m.observe(app, &id).await?;
            }
            Op::Drive(_) => unreachable!("expanded above"),
        }
    }

    // Every job must come to rest in the state its inputs dictate.
    let mut outcome = Outcome::default();
    for id in m.ids.clone() {
        settle(app, &id).await;
        let v = m.observe(app, &id).await?;
        let state = state_of(&v);
        let history = history_of(&v);
        if !m.detectable[&id] {
            if history != [JobState::Created, JobState::Detecting, JobState::Failed] {
                return Err(format!("undetectable job did not fail cleanly: {v}"));
            }
            outcome.failed += 1;
            continue;
        }
        if history.contains(&JobState::Failed) {
            return Err(format!("job on a valid clip failed: {v}"));
        }
        if state == JobState::Done && (v["progress"] != 1.0 || v["frames_available"] != FRAMES) {
            return Err(format!("finished job incomplete: {v}"));
        }
        if state == JobState::Done {
            outcome.done += 1;
        } else {
            outcome.idle += 1;
        }
    }
    Ok(outcome)
}

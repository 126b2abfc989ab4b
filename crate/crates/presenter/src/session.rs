//! Transport-independent session engine: reorders inbound frames, drives the
//! pipeline and records everything it emits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use magboard_core::mapper::{serialize_command_trace, CommandSet, InteractionCommand};
use magboard_core::pipeline::{Pipeline, RejectedCommand};
use magboard_core::recognizer::{serialize_event_trace, RecognizerConfig, RecognizerError, UserActionEvent};
use magboard_core::story::StoryDocument;
use magboard_core::tracking::{serialize_stream, ObservationFrame};
use magboard_core::viz::VizState;

use crate::protocol::{Role, SessionMessage, StatePayload};

/// Largest number of frames held back for reordering.
pub const REORDER_CAPACITY: usize = 1024;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SessionError {
    #[error("frame at {t_ms} ms arrived after {released_ms} ms was processed")]
    Stale { t_ms: u64, released_ms: u64 },
    #[error("duplicate frame timestamp {0} ms")]
    Duplicate(u64),
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
}

/// Holds frames until a frame at least `window_ms` newer has arrived, then
/// releases them in timestamp order.
#[derive(Debug, Clone)]
pub struct ReorderBuffer {
    window_ms: u64,
    pending: BTreeMap<u64, ObservationFrame>,
    released: Option<u64>,
}

impl ReorderBuffer {
    pub fn new(window_ms: u64) -> Self {
        ReorderBuffer {
            window_ms,
            pending: BTreeMap::new(),
            released: None,
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn push(&mut self, frame: ObservationFrame) -> Result<Vec<ObservationFrame>, SessionError> {
        if let Some(r) = self.released {
            if frame.t_ms <= r {
                return Err(SessionError::Stale {
                    t_ms: frame.t_ms,
                    released_ms: r,
                });
            }
        }
        if self.pending.contains_key(&frame.t_ms) {
            return Err(SessionError::Duplicate(frame.t_ms));
        }
        self.pending.insert(frame.t_ms, frame);
        let newest = *self.pending.keys().next_back().expect("just inserted");
        let mut out = Vec::new();
        while let Some((&t, _)) = self.pending.first_key_value() {
            if t.saturating_add(self.window_ms) > newest && self.pending.len() <= REORDER_CAPACITY {
                break;
            }
            out.push(self.take_first());
        }
        Ok(out)
    }

    pub fn drain(&mut self) -> Vec<ObservationFrame> {
        let mut out = Vec::with_capacity(self.pending.len());
        while !self.pending.is_empty() {
            out.push(self.take_first());
        }
        out
    }

    fn take_first(&mut self) -> ObservationFrame {
        let (t, f) = self.pending.pop_first().expect("non-empty");
        self.released = Some(t);
        f
    }
}

/// Append-only JSONL record of a session.
pub struct SessionLog {
    out: BufWriter<File>,
}

impl SessionLog {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(SessionLog {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, msg: &SessionMessage) -> std::io::Result<()> {
        self.out.write_all(msg.to_line().as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Frames recorded in a session log, in processing order.
pub fn frames_from_log(text: &str) -> Result<Vec<ObservationFrame>, (usize, String)> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match SessionMessage::parse(line) {
            Ok(SessionMessage::Frame(f)) => frames.push(f),
            Ok(_) => {}
            Err(e) => return Err((i + 1, e.to_string())),
        }
    }
    Ok(frames)
}

pub struct Session {
    pipeline: Pipeline,
    reorder: ReorderBuffer,
    log: Option<SessionLog>,
    frames: Vec<ObservationFrame>,
    events: Vec<UserActionEvent>,
    commands: Vec<InteractionCommand>,
    finished: bool,
}

impl Session {
    pub fn new(
        story: StoryDocument,
        set: CommandSet,
        cfg: RecognizerConfig,
        reorder_window_ms: u64,
    ) -> Result<Self, RecognizerError> {
        Ok(Session {
            pipeline: Pipeline::new(story, set, cfg)?,
            reorder: ReorderBuffer::new(reorder_window_ms),
            log: None,
            frames: Vec::new(),
            events: Vec::new(),
            commands: Vec::new(),
            finished: false,
        })
    }

    /// Starts logging; the log opens with the session hello and snapshot.
    pub fn with_log(mut self, mut log: SessionLog) -> std::io::Result<Self> {
        log.write(&self.hello(Role::Debug))?;
        log.write(&self.snapshot())?;
        self.log = Some(log);
        Ok(self)
    }

    pub fn story_id(&self) -> &str {
        &self.pipeline.story().story_id
    }

    pub fn hello(&self, role: Role) -> SessionMessage {
        SessionMessage::hello(self.story_id(), role)
    }

    pub fn snapshot(&self) -> SessionMessage {
        SessionMessage::State(StatePayload::Snapshot(Box::new(self.pipeline.viz().clone())))
    }

    pub fn state(&self) -> &VizState {
        self.pipeline.viz()
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn buffered(&self) -> usize {
        self.reorder.len()
    }

    pub fn rejected(&self) -> &[RejectedCommand] {
        self.pipeline.rejected()
    }

    pub fn events(&self) -> &[UserActionEvent] {
        &self.events
    }

    pub fn commands(&self) -> &[InteractionCommand] {
        &self.commands
    }

    /// Accepts one inbound frame and returns the messages of every frame it
    /// released, in order.
    pub fn offer(&mut self, frame: ObservationFrame) -> Result<Vec<SessionMessage>, SessionError> {
        let ready = self.reorder.push(frame)?;
        self.process(ready)
    }

    /// Releases every buffered frame.
    pub fn flush(&mut self) -> Result<Vec<SessionMessage>, SessionError> {
        let ready = self.reorder.drain();
        self.process(ready)
    }

    /// Flushes, finalizes the recognizer at the last frame time and resolves
    /// pending intents. Later calls return nothing.
    pub fn finish(&mut self) -> Result<Vec<SessionMessage>, SessionError> {
        if self.finished {
            return Ok(Vec::new());
        }
        let mut out = self.flush()?;
        self.finished = true;
        let t_end = self.frames.last().map_or(0, |f| f.t_ms);
        let step = self.pipeline.finish(t_end);
        self.record(step, &mut out);
        if let Some(log) = &mut self.log {
            for m in &out {
                log_write(log, m);
            }
            if let Err(e) = log.flush() {
                log::error!("session log flush failed: {e}");
            }
        }
        Ok(out)
    }

    fn process(&mut self, frames: Vec<ObservationFrame>) -> Result<Vec<SessionMessage>, SessionError> {
        let mut out = Vec::new();
        for frame in frames {
            if self.finished {
                break;
            }
            let step = self.pipeline.ingest(&frame)?;
            if let Some(log) = &mut self.log {
                log_write(log, &SessionMessage::Frame(frame.clone()));
            }
            self.frames.push(frame);
            let start = out.len();
            self.record(step, &mut out);
            if let Some(log) = &mut self.log {
                for m in &out[start..] {
                    log_write(log, m);
                }
            }
        }
        Ok(out)
    }

    fn record(&mut self, step: magboard_core::pipeline::StepOutput, out: &mut Vec<SessionMessage>) {
        for e in &step.events {
            out.push(SessionMessage::Action(e.clone()));
        }
        for (c, d) in step.commands.iter().zip(step.diffs) {
            out.push(SessionMessage::Command(c.clone()));
            out.push(SessionMessage::State(StatePayload::Diff(Box::new(d))));
        }
        self.events.extend(step.events);
        self.commands.extend(step.commands);
    }

    /// Writes `frames.jsonl`, `actions.jsonl`, `commands.jsonl` and
    /// `final_snapshot.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("frames.jsonl"), serialize_stream(&self.frames))?;
        write_traces(dir, &self.events, &self.commands, self.pipeline.viz())
    }
}

fn log_write(log: &mut SessionLog, m: &SessionMessage) {
    if let Err(e) = log.write(m) {
        log::error!("session log write failed: {e}");
    }
}

/// Writes the trace files shared by live runs and offline replays.
pub fn write_traces(
    dir: &Path,
    events: &[UserActionEvent],
    commands: &[InteractionCommand],
    state: &VizState,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("actions.jsonl"), serialize_event_trace(events))?;
    std::fs::write(dir.join("commands.jsonl"), serialize_command_trace(commands))?;
    let mut snap = state.snapshot();
    snap.push(b'\n');
    std::fs::write(dir.join("final_snapshot.json"), snap)
}

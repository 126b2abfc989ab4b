//! Frame-to-state session loop shared by live sessions and offline replays.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::ids::MagnetId;
use crate::mapper::{CommandSet, InteractionCommand, Mapper};
use crate::recognizer::{Recognizer, RecognizerConfig, RecognizerError, UserActionEvent};
use crate::story::StoryDocument;
use crate::tracking::ObservationFrame;
use crate::viz::{StateDiff, VizState};

/// What one frame produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub events: Vec<UserActionEvent>,
    pub commands: Vec<InteractionCommand>,
    pub diffs: Vec<StateDiff>,
}

/// A mapped command the state refused. The mapper checks preconditions
/// against the current state, so this stays empty in practice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCommand {
    pub command: InteractionCommand,
    pub reason: String,
}

pub struct Pipeline {
    story: StoryDocument,
    recognizer: Recognizer,
    mapper: Mapper,
    viz: VizState,
    rejected: Vec<RejectedCommand>,
}

impl Pipeline {
    pub fn new(story: StoryDocument, set: CommandSet, cfg: RecognizerConfig) -> Result<Self, RecognizerError> {
        let recognizer = Recognizer::new(cfg, &story.magnets)?;
        let mapper = Mapper::new(set, &story);
        let viz = VizState::initial(&story);
        Ok(Pipeline {
            story,
            recognizer,
            mapper,
            viz,
            rejected: Vec::new(),
        })
    }

    pub fn story(&self) -> &StoryDocument {
        &self.story
    }

    pub fn viz(&self) -> &VizState {
        &self.viz
    }

    pub fn mapper(&self) -> &Mapper {
        &self.mapper
    }

    pub fn recognizer(&self) -> &Recognizer {
        &self.recognizer
    }

    pub fn rejected(&self) -> &[RejectedCommand] {
        &self.rejected
    }

    /// Centers of the magnets currently seen on the board.
    pub fn magnet_poses(&self) -> BTreeMap<MagnetId, Point> {
        self.recognizer
            .poses()
            .into_iter()
            .filter(|(_, p)| p.visible)
            .map(|(m, p)| (m, p.center))
            .collect()
    }

    pub fn ingest(&mut self, frame: &ObservationFrame) -> Result<StepOutput, RecognizerError> {
        let events = self.recognizer.ingest_frame(frame)?;
        Ok(self.consume(events, frame.t_ms))
    }

    /// Flushes the recognizer at end of stream and resolves what is due.
    pub fn finish(&mut self, t_end: u64) -> StepOutput {
        let t_end = t_end.max(self.recognizer.last_t().unwrap_or(0));
        let events = self.recognizer.finalize(t_end);
        self.consume(events, t_end)
    }

    fn consume(&mut self, events: Vec<UserActionEvent>, now: u64) -> StepOutput {
        let mut out = StepOutput::default();
        for ev in &events {
            let cmds = self.mapper.map_action(&self.story, &self.viz, ev);
            self.apply_all(cmds, &mut out);
        }
        let cmds = self.mapper.resolve_pending(&self.story, &self.viz, now);
        self.apply_all(cmds, &mut out);
        out.events = events;
        out
    }

    fn apply_all(&mut self, cmds: Vec<InteractionCommand>, out: &mut StepOutput) {
        for cmd in cmds {
            match self.viz.apply_command(&self.story, &cmd) {
                Ok(diff) => {
                    out.diffs.push(diff);
                    out.commands.push(cmd);
                }
                Err(e) => {
                    warn!("rejected {} at {}: {e}", cmd.kind.name(), cmd.t_ms);
                    self.rejected.push(RejectedCommand {
                        command: cmd,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
}

/// Everything an offline run produced.
#[derive(Debug, Clone)]
pub struct SessionTrace {
    pub events: Vec<UserActionEvent>,
    pub commands: Vec<InteractionCommand>,
    pub state: VizState,
    pub rejected: Vec<RejectedCommand>,
}

/// Runs a whole frame stream through the pipeline and flushes at its last frame.
pub fn run_frames(
    story: &StoryDocument,
    set: &CommandSet,
    cfg: &RecognizerConfig,
    frames: &[ObservationFrame],
) -> Result<SessionTrace, RecognizerError> {
    let mut p = Pipeline::new(story.clone(), set.clone(), cfg.clone())?;
    let mut events = Vec::new();
    let mut commands = Vec::new();
    for f in frames {
        let out = p.ingest(f)?;
        events.extend(out.events);
        commands.extend(out.commands);
    }
    let out = p.finish(frames.last().map_or(0, |f| f.t_ms));
    events.extend(out.events);
    commands.extend(out.commands);
    Ok(SessionTrace {
        events,
        commands,
        state: p.viz.clone(),
        rejected: p.rejected,
    })
}

//! Normalized sensing protocol.
//!
//! One [`ObservationFrame`] per line, encoded as a JSON object:
//!
//! ```text
//! {"t_ms":1000,"markers":[{"id":17,"x":0.500000,"y":0.500000,"rot":90.000,"conf":1.000}],"hands":[{"hand":0,"x":0.510000,"y":0.500000,"contact":true}]}
//! ```
//!
//! * `t_ms`: integer milliseconds, strictly increasing along a stream.
//! * `markers[].id`: fiducial id; unique within a frame; records sorted by id.
//! * `markers[].x`, `y`: normalized board coordinates in `[0, 1]`, 6 decimals.
//! * `markers[].rot`: clockwise degrees in `[0, 360)`, 3 decimals.
//! * `markers[].conf`: detector confidence in `[0, 1]`, 3 decimals.
//! * `hands[].hand`: small integer id, unique within a frame; sorted.
//! * `hands[].x`, `y`: index fingertip, normalized, 6 decimals.
//! * `hands[].contact`: fingertip judged touching the board.
//!
//! Parsing rounds every value to the wire precision, so a parsed frame
//! serializes back to the same bytes.

mod random;
mod resample;
mod script;

use std::fmt::Write as _;

use serde::Deserialize;

use crate::geom::{quantize, quantize_angle, Point, ANGLE_DECIMALS};
use crate::ids::FiducialId;

pub use random::{margin_script, perturb, random_script, static_script, RandomScriptParams};
pub use resample::resample_stream;
pub use script::{sample_times, script_scenario, GestureScript, ScriptStep};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrackingError {
    #[error("syntax error{}: {message}", line_suffix(*line))]
    Syntax { line: Option<usize>, message: String },
    #[error("range error{}: {message}", line_suffix(*line))]
    Range { line: Option<usize>, message: String },
    #[error("script conflict: {0}")]
    ScriptConflict(String),
    #[error("invalid sampling rate {0} Hz (must be in (0, 1000])")]
    Rate(f64),
    #[error("timestamp {t_ms} does not follow {previous_ms}{}", line_suffix(*line))]
    Timestamp {
        line: Option<usize>,
        t_ms: u64,
        previous_ms: u64,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" on line {l}")).unwrap_or_default()
}

impl TrackingError {
    fn at_line(self, line: usize) -> Self {
        match self {
            TrackingError::Syntax { message, .. } => TrackingError::Syntax {
                line: Some(line),
                message,
            },
            TrackingError::Range { message, .. } => TrackingError::Range {
                line: Some(line),
                message,
            },
            TrackingError::Timestamp { t_ms, previous_ms, .. } => TrackingError::Timestamp {
                line: Some(line),
                t_ms,
                previous_ms,
            },
            other => other,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            TrackingError::Syntax { line, .. }
            | TrackingError::Range { line, .. }
            | TrackingError::Timestamp { line, .. } => *line,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerObservation {
    pub fiducial_id: FiducialId,
    pub center: Point,
    pub rotation_deg: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandObservation {
    pub hand_id: u8,
    pub fingertip: Point,
    pub contact: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationFrame {
    pub t_ms: u64,
    pub markers: Vec<MarkerObservation>,
    pub hands: Vec<HandObservation>,
}

impl ObservationFrame {
    pub fn empty(t_ms: u64) -> Self {
        ObservationFrame {
            t_ms,
            markers: vec![],
            hands: vec![],
        }
    }

    /// Rounds to wire precision and sorts records; the form every parsed frame has.
    pub fn canonical(mut self) -> Self {
        for m in &mut self.markers {
            m.center = m.center.quantized();
            m.rotation_deg = quantize_angle(m.rotation_deg);
            m.confidence = quantize(m.confidence, 3);
        }
        for h in &mut self.hands {
            h.fingertip = h.fingertip.quantized();
        }
        self.markers.sort_by_key(|m| m.fiducial_id);
        self.hands.sort_by_key(|h| h.hand_id);
        self
    }

    pub fn marker(&self, id: FiducialId) -> Option<&MarkerObservation> {
        self.markers.iter().find(|m| m.fiducial_id == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarker {
    id: FiducialId,
    x: f64,
    y: f64,
    rot: f64,
    #[serde(default = "full_confidence")]
    conf: f64,
}

fn full_confidence() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHand {
    hand: u8,
    x: f64,
    y: f64,
    contact: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawFrame {
    t_ms: u64,
    #[serde(default)]
    markers: Vec<RawMarker>,
    #[serde(default)]
    hands: Vec<RawHand>,
}

fn range(message: String) -> TrackingError {
    TrackingError::Range { line: None, message }
}

fn check_unit(what: &str, v: f64) -> Result<(), TrackingError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(range(format!("{what} {v} outside [0, 1]")))
    }
}

impl RawFrame {
    pub(crate) fn into_frame(self) -> Result<ObservationFrame, TrackingError> {
        let mut markers = Vec::with_capacity(self.markers.len());
        for m in self.markers {
            check_unit("marker x", m.x)?;
            check_unit("marker y", m.y)?;
            check_unit("marker confidence", m.conf)?;
            if !(0.0..360.0).contains(&m.rot) {
                return Err(range(format!("rotation {} outside [0, 360)", m.rot)));
            }
            markers.push(MarkerObservation {
                fiducial_id: m.id,
                center: Point::new(m.x, m.y),
                rotation_deg: m.rot,
                confidence: m.conf,
            });
        }
        let mut hands = Vec::with_capacity(self.hands.len());
        for h in self.hands {
            check_unit("fingertip x", h.x)?;
            check_unit("fingertip y", h.y)?;
            hands.push(HandObservation {
                hand_id: h.hand,
                fingertip: Point::new(h.x, h.y),
                contact: h.contact,
            });
        }
        let frame = ObservationFrame {
            t_ms: self.t_ms,
            markers,
            hands,
        }
        .canonical();
        if frame.markers.windows(2).any(|w| w[0].fiducial_id == w[1].fiducial_id) {
            return Err(TrackingError::Syntax {
                line: None,
                message: "duplicate fiducial id within one frame".into(),
            });
        }
        if frame.hands.windows(2).any(|w| w[0].hand_id == w[1].hand_id) {
            return Err(TrackingError::Syntax {
                line: None,
                message: "duplicate hand id within one frame".into(),
            });
        }
        Ok(frame)
    }
}

pub(crate) fn syntax(e: serde_json::Error) -> TrackingError {
    TrackingError::Syntax {
        line: None,
        message: e.to_string(),
    }
}

pub fn parse_frame(record: &str) -> Result<ObservationFrame, TrackingError> {
    let raw: RawFrame = serde_json::from_str(record.trim()).map_err(syntax)?;
    raw.into_frame()
}

pub fn serialize_frame(frame: &ObservationFrame) -> String {
    let mut out = String::with_capacity(64 + 72 * frame.markers.len() + 56 * frame.hands.len());
    write_frame(&mut out, frame);
    out
}

/// Appends the canonical record (no trailing newline) to `out`.
pub fn write_frame(out: &mut String, frame: &ObservationFrame) {
    let mut markers: Vec<&MarkerObservation> = frame.markers.iter().collect();
    markers.sort_by_key(|m| m.fiducial_id);
    let mut hands: Vec<&HandObservation> = frame.hands.iter().collect();
    hands.sort_by_key(|h| h.hand_id);
    let _ = write!(out, "{{\"t_ms\":{},\"markers\":[", frame.t_ms);
    for (i, m) in markers.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"id\":{},\"x\":{:.6},\"y\":{:.6},\"rot\":{:.prec$},\"conf\":{:.3}}}",
            m.fiducial_id,
            m.center.x,
            m.center.y,
            quantize_angle(m.rotation_deg),
            m.confidence,
            prec = ANGLE_DECIMALS as usize
        );
    }
    out.push_str("],\"hands\":[");
    for (i, h) in hands.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"hand\":{},\"x\":{:.6},\"y\":{:.6},\"contact\":{}}}",
            h.hand_id, h.fingertip.x, h.fingertip.y, h.contact
        );
    }
    out.push_str("]}");
}

/// Parses a `.frames.jsonl` stream. Blank lines are skipped; errors carry the
/// 1-based line number.
pub fn parse_stream(text: &str) -> Result<Vec<ObservationFrame>, TrackingError> {
    let mut frames: Vec<ObservationFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_frame(line).map_err(|e| e.at_line(i + 1))?;
        if let Some(prev) = frames.last() {
            if frame.t_ms <= prev.t_ms {
                return Err(TrackingError::Timestamp {
                    line: Some(i + 1),
                    t_ms: frame.t_ms,
                    previous_ms: prev.t_ms,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn serialize_stream(frames: &[ObservationFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        write_frame(&mut out, f);
        out.push('\n');
    }
    out
}

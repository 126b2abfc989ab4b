//! Temporal recognition of magnet and hand actions.
//!
//! [`Recognizer`] folds [`ObservationFrame`](crate::tracking::ObservationFrame)s
//! into [`UserActionEvent`]s one frame at a time; [`batch_reference`]
//! evaluates the same threshold semantics over a whole stream, stage by stage.

mod batch;
mod engine;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::ids::MagnetId;
use crate::story::Side;

pub use batch::batch_reference;
pub use engine::{MagnetPose, Presence, Recognizer};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RecognizerError {
    #[error("frame at {t_ms} ms does not follow {previous_ms} ms")]
    Timestamp { t_ms: u64, previous_ms: u64 },
    #[error("angle {0} outside [0, 360)")]
    Range(f64),
    #[error("invalid recognizer config: {0}")]
    Config(String),
}

/// Thresholds. Distances given as `*_factor` scale the diameter of the magnet
/// involved (the larger one for pairs); other distances are in board widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognizerConfig {
    pub t_confirm_ms: u64,
    pub t_detach_ms: u64,
    pub t_tap_max_ms: u64,
    pub t_hold_min_ms: u64,
    pub t_point_dwell_ms: u64,
    pub t_cover_min_ms: u64,
    /// Slide threshold.
    pub eps_move: f64,
    /// Rest speed, board widths per second, averaged over `t_settle_ms`.
    pub v_rest: f64,
    pub t_settle_ms: u64,
    pub d_near_factor: f64,
    pub d_near_release_factor: f64,
    pub r_contact_factor: f64,
    /// Fingertip distance from a vanished marker that counts as covering it.
    pub r_cover_factor: f64,
    pub r_stack_factor: f64,
    /// Maximum jump between the two faces of a flip.
    pub r_flip_factor: f64,
    /// Maximum delay between one face vanishing and the other appearing.
    pub t_flip_ms: u64,
    pub theta_full_deg: f64,
    /// Smallest episode total reported as a rotation.
    pub theta_min_deg: f64,
    pub t_spin_gap_ms: u64,
    /// Angular speed below which a frame does not count as rotating.
    pub w_rest_deg_s: f64,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            t_confirm_ms: 100,
            t_detach_ms: 500,
            t_tap_max_ms: 300,
            t_hold_min_ms: 600,
            t_point_dwell_ms: 800,
            t_cover_min_ms: 600,
            eps_move: 0.01,
            v_rest: 0.02,
            t_settle_ms: 300,
            d_near_factor: 2.0,
            d_near_release_factor: 3.0,
            r_contact_factor: 0.75,
            r_cover_factor: 1.0,
            r_stack_factor: 0.75,
            r_flip_factor: 2.0,
            t_flip_ms: 1000,
            theta_full_deg: 330.0,
            theta_min_deg: 5.0,
            t_spin_gap_ms: 400,
            w_rest_deg_s: 20.0,
        }
    }
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<(), RecognizerError> {
        let times = [
            ("t_confirm_ms", self.t_confirm_ms),
            ("t_detach_ms", self.t_detach_ms),
            ("t_tap_max_ms", self.t_tap_max_ms),
            ("t_hold_min_ms", self.t_hold_min_ms),
            ("t_point_dwell_ms", self.t_point_dwell_ms),
            ("t_cover_min_ms", self.t_cover_min_ms),
            ("t_settle_ms", self.t_settle_ms),
            ("t_flip_ms", self.t_flip_ms),
            ("t_spin_gap_ms", self.t_spin_gap_ms),
        ];
        if let Some((name, _)) = times.iter().find(|(_, v)| *v == 0) {
            return Err(RecognizerError::Config(format!("{name} must be positive")));
        }
        let reals = [
            ("eps_move", self.eps_move),
            ("v_rest", self.v_rest),
            ("d_near_factor", self.d_near_factor),
            ("d_near_release_factor", self.d_near_release_factor),
            ("r_contact_factor", self.r_contact_factor),
            ("r_cover_factor", self.r_cover_factor),
            ("r_stack_factor", self.r_stack_factor),
            ("r_flip_factor", self.r_flip_factor),
            ("theta_full_deg", self.theta_full_deg),
            ("theta_min_deg", self.theta_min_deg),
            ("w_rest_deg_s", self.w_rest_deg_s),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(RecognizerError::Config(format!("{name} must be positive")));
        }
        if self.d_near_release_factor <= self.d_near_factor {
            return Err(RecognizerError::Config("d_near_release must exceed d_near".into()));
        }
        if self.t_tap_max_ms >= self.t_hold_min_ms {
            return Err(RecognizerError::Config("t_tap_max_ms must be below t_hold_min_ms".into()));
        }
        if self.theta_full_deg >= 360.0 || self.theta_min_deg >= self.theta_full_deg {
            return Err(RecognizerError::Config("need theta_min_deg < theta_full_deg < 360".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplexity {
    Single,
    MultiSimultaneous,
    MultiSequential,
}

/// Variant order is the emission rank within one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionKind {
    Attach { magnet: MagnetId, at: Point },
    Detach { magnet: MagnetId, last: Point },
    Flip { magnet: MagnetId, side: Side },
    Stack { top: MagnetId, base: MagnetId },
    Unstack { top: MagnetId, base: MagnetId },
    CoverBegin { magnet: MagnetId },
    CoverEnd { magnet: MagnetId },
    SlideEnd { magnet: MagnetId, from: Point, to: Point },
    RotateDelta { magnet: MagnetId, deg: f64 },
    FullRevolution { magnet: MagnetId, direction: Direction },
    Tap { magnet: MagnetId },
    HoldBegin { magnet: MagnetId },
    HoldEnd { magnet: MagnetId, duration_ms: u64 },
    PointDwell { magnet: MagnetId },
    BringCloser { a: MagnetId, b: MagnetId },
    MovedApart { a: MagnetId, b: MagnetId },
}

impl ActionKind {
    pub fn rank(&self) -> u8 {
        match self {
            ActionKind::Attach { .. } => 0,
            ActionKind::Detach { .. } => 1,
            ActionKind::Flip { .. } => 2,
            ActionKind::Stack { .. } => 3,
            ActionKind::Unstack { .. } => 4,
            ActionKind::CoverBegin { .. } => 5,
            ActionKind::CoverEnd { .. } => 6,
            ActionKind::SlideEnd { .. } => 7,
            ActionKind::RotateDelta { .. } => 8,
            ActionKind::FullRevolution { .. } => 9,
            ActionKind::Tap { .. } => 10,
            ActionKind::HoldBegin { .. } => 11,
            ActionKind::HoldEnd { .. } => 12,
            ActionKind::PointDwell { .. } => 13,
            ActionKind::BringCloser { .. } => 14,
            ActionKind::MovedApart { .. } => 15,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Attach { .. } => "attach",
            ActionKind::Detach { .. } => "detach",
            ActionKind::Flip { .. } => "flip",
            ActionKind::Stack { .. } => "stack",
            ActionKind::Unstack { .. } => "unstack",
            ActionKind::CoverBegin { .. } => "cover-begin",
            ActionKind::CoverEnd { .. } => "cover-end",
            ActionKind::SlideEnd { .. } => "slide-end",
            ActionKind::RotateDelta { .. } => "rotate-delta",
            ActionKind::FullRevolution { .. } => "full-revolution",
            ActionKind::Tap { .. } => "tap",
            ActionKind::HoldBegin { .. } => "hold-begin",
            ActionKind::HoldEnd { .. } => "hold-end",
            ActionKind::PointDwell { .. } => "point-dwell",
            ActionKind::BringCloser { .. } => "bring-closer",
            ActionKind::MovedApart { .. } => "moved-apart",
        }
    }

    /// Participating magnets, acting magnet first.
    pub fn magnets(&self) -> Vec<&MagnetId> {
        match self {
            ActionKind::Attach { magnet, .. }
            | ActionKind::Detach { magnet, .. }
            | ActionKind::Flip { magnet, .. }
            | ActionKind::CoverBegin { magnet }
            | ActionKind::CoverEnd { magnet }
            | ActionKind::SlideEnd { magnet, .. }
            | ActionKind::RotateDelta { magnet, .. }
            | ActionKind::FullRevolution { magnet, .. }
            | ActionKind::Tap { magnet }
            | ActionKind::HoldBegin { magnet }
            | ActionKind::HoldEnd { magnet, .. }
            | ActionKind::PointDwell { magnet } => vec![magnet],
            ActionKind::Stack { top, base } | ActionKind::Unstack { top, base } => vec![top, base],
            ActionKind::BringCloser { a, b } | ActionKind::MovedApart { a, b } => vec![a, b],
        }
    }

    pub fn multiplexity(&self) -> Multiplexity {
        match self {
            ActionKind::BringCloser { .. } | ActionKind::MovedApart { .. } => Multiplexity::MultiSimultaneous,
            ActionKind::Stack { .. } | ActionKind::Unstack { .. } => Multiplexity::MultiSequential,
            _ => Multiplexity::Single,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EventWire", try_from = "EventWire")]
pub struct UserActionEvent {
    pub t_ms: u64,
    pub kind: ActionKind,
}

#[derive(Serialize, Deserialize)]
struct EventWire {
    t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multiplexity: Option<Multiplexity>,
    #[serde(flatten)]
    kind: ActionKind,
}

impl From<UserActionEvent> for EventWire {
    fn from(e: UserActionEvent) -> Self {
        EventWire {
            t_ms: e.t_ms,
            multiplexity: Some(e.kind.multiplexity()),
            kind: e.kind,
        }
    }
}

impl TryFrom<EventWire> for UserActionEvent {
    type Error = String;

    fn try_from(w: EventWire) -> Result<Self, Self::Error> {
        if let Some(m) = w.multiplexity {
            if m != w.kind.multiplexity() {
                return Err(format!("multiplexity {m:?} inconsistent with {}", w.kind.name()));
            }
        }
        Ok(UserActionEvent { t_ms: w.t_ms, kind: w.kind })
    }
}

impl UserActionEvent {
    pub fn new(t_ms: u64, kind: ActionKind) -> Self {
        UserActionEvent { t_ms, kind }
    }

    /// Order within one emission batch: kind rank, then magnet ids.
    pub fn batch_order(&self, other: &Self) -> Ordering {
        self.kind
            .rank()
            .cmp(&other.kind.rank())
            .then_with(|| self.kind.magnets().cmp(&other.kind.magnets()))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

pub(crate) fn sort_batch(events: &mut [UserActionEvent]) {
    events.sort_by(|a, b| a.batch_order(b));
}

/// Signed shortest rotation from `prev_deg` to `curr_deg`, in `(-180, 180]`.
pub fn unwrap_rotation(prev_deg: f64, curr_deg: f64) -> Result<f64, RecognizerError> {
    for v in [prev_deg, curr_deg] {
        if !(0.0..360.0).contains(&v) {
            return Err(RecognizerError::Range(v));
        }
    }
    Ok(shortest_delta(prev_deg, curr_deg))
}

pub(crate) fn shortest_delta(prev: f64, curr: f64) -> f64 {
    let d = (curr - prev).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

pub fn parse_event_trace(text: &str) -> Result<Vec<UserActionEvent>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

pub fn serialize_event_trace(events: &[UserActionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwrap_examples() {
        assert_eq!(unwrap_rotation(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(unwrap_rotation(350.0, 5.0).unwrap(), 15.0);
        assert_eq!(unwrap_rotation(5.0, 350.0).unwrap(), -15.0);
        assert_eq!(unwrap_rotation(0.0, 180.0).unwrap(), 180.0);
        assert_eq!(unwrap_rotation(180.0, 0.0).unwrap(), 180.0);
        assert_eq!(unwrap_rotation(0.0, 360.0), Err(RecognizerError::Range(360.0)));
        assert!(unwrap_rotation(-1.0, 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn unwrap_matches_argmin_oracle(prev in 0.0..360.0f64, curr in 0.0..360.0f64) {
            let d = unwrap_rotation(prev, curr).unwrap();
            // Oracle: smallest |curr - prev + 360k|, ties to the positive candidate.
            let oracle = (-2..=2)
                .map(|k| curr - prev + 360.0 * k as f64)
                .filter(|c| *c > -180.0 && *c <= 180.0)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap();
            proptest::prop_assert!((d - oracle).abs() < 1e-9);
            proptest::prop_assert!(d > -180.0 && d <= 180.0);
        }
    }

    #[test]
    fn defaults_validate_and_bad_configs_do_not() {
        RecognizerConfig::default().validate().unwrap();
        let bad = RecognizerConfig {
            d_near_release_factor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RecognizerConfig {
            t_tap_max_ms: 700,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RecognizerConfig {
            t_confirm_ms: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn events_round_trip_with_multiplexity() {
        let events = vec![
            UserActionEvent::new(
                5,
                ActionKind::Attach {
                    magnet: "m1".into(),
                    at: Point::new(0.1, 0.2),
                },
            ),
            UserActionEvent::new(
                9,
                ActionKind::BringCloser {
                    a: "m1".into(),
                    b: "m2".into(),
                },
            ),
            UserActionEvent::new(
                11,
                ActionKind::RotateDelta {
                    magnet: "m1".into(),
                    deg: -42.125,
                },
            ),
        ];
        let text = serialize_event_trace(&events);
        assert!(text.contains("\"multiplexity\":\"multi-simultaneous\""));
        assert_eq!(parse_event_trace(&text).unwrap(), events);
        assert_eq!(serialize_event_trace(&parse_event_trace(&text).unwrap()), text);
        let wrong = r#"{"t_ms":1,"multiplexity":"single","kind":"stack","top":"w","base":"m"}"#;
        assert!(parse_event_trace(wrong).is_err());
    }
}

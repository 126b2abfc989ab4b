//! Gesture scripts: timed primitives expanded into deterministic frame streams.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{HandObservation, MarkerObservation, ObservationFrame, TrackingError};
use crate::geom::{quantize_angle, Point};
use crate::ids::MagnetId;
use crate::story::{MagnetSpec, Side};

fn default_rate() -> f64 {
    60.0
}

/// A timed list of primitives. Times are milliseconds from stream start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureScript {
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Last sampled instant; defaults to the latest primitive boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScriptStep {
    Place {
        magnet: MagnetId,
        #[serde(default = "side_a")]
        side: Side,
        at: Point,
        t_ms: u64,
        #[serde(default)]
        rot_deg: f64,
    },
    Remove {
        magnet: MagnetId,
        t_ms: u64,
    },
    Glide {
        magnet: MagnetId,
        /// Starting point; the current position when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<Point>,
        to: Point,
        t0_ms: u64,
        t1_ms: u64,
    },
    Spin {
        magnet: MagnetId,
        /// Clockwise positive.
        delta_deg: f64,
        t0_ms: u64,
        t1_ms: u64,
    },
    Flip {
        magnet: MagnetId,
        t_ms: u64,
    },
    /// Fingertip on the magnet, in contact.
    Touch {
        magnet: MagnetId,
        t0_ms: u64,
        t1_ms: u64,
    },
    /// Fingertip over the magnet, no contact.
    Hover {
        magnet: MagnetId,
        t0_ms: u64,
        t1_ms: u64,
    },
    /// Free fingertip at a fixed point, no contact.
    Handoff {
        at: Point,
        t0_ms: u64,
        t1_ms: u64,
    },
    /// Marker hidden from the sensor; ground truth unchanged.
    Occlude {
        magnet: MagnetId,
        t0_ms: u64,
        t1_ms: u64,
    },
}

fn side_a() -> Side {
    Side::A
}

impl ScriptStep {
    pub fn magnet(&self) -> Option<&MagnetId> {
        match self {
            ScriptStep::Place { magnet, .. }
            | ScriptStep::Remove { magnet, .. }
            | ScriptStep::Glide { magnet, .. }
            | ScriptStep::Spin { magnet, .. }
            | ScriptStep::Flip { magnet, .. }
            | ScriptStep::Touch { magnet, .. }
            | ScriptStep::Hover { magnet, .. }
            | ScriptStep::Occlude { magnet, .. } => Some(magnet),
            ScriptStep::Handoff { .. } => None,
        }
    }

    /// `[start, end]` of the primitive; instants have `start == end`.
    pub fn span(&self) -> (u64, u64) {
        match *self {
            ScriptStep::Place { t_ms, .. } | ScriptStep::Remove { t_ms, .. } | ScriptStep::Flip { t_ms, .. } => (t_ms, t_ms),
            ScriptStep::Glide { t0_ms, t1_ms, .. }
            | ScriptStep::Spin { t0_ms, t1_ms, .. }
            | ScriptStep::Touch { t0_ms, t1_ms, .. }
            | ScriptStep::Hover { t0_ms, t1_ms, .. }
            | ScriptStep::Handoff { t0_ms, t1_ms, .. }
            | ScriptStep::Occlude { t0_ms, t1_ms, .. } => (t0_ms, t1_ms),
        }
    }

    fn op(&self) -> &'static str {
        match self {
            ScriptStep::Place { .. } => "place",
            ScriptStep::Remove { .. } => "remove",
            ScriptStep::Glide { .. } => "glide",
            ScriptStep::Spin { .. } => "spin",
            ScriptStep::Flip { .. } => "flip",
            ScriptStep::Touch { .. } => "touch",
            ScriptStep::Hover { .. } => "hover",
            ScriptStep::Handoff { .. } => "handoff",
            ScriptStep::Occlude { .. } => "occlude",
        }
    }
}

impl GestureScript {
    pub fn new(rate_hz: f64) -> Self {
        GestureScript {
            rate_hz,
            end_ms: None,
            steps: vec![],
        }
    }

    pub fn push(&mut self, step: ScriptStep) -> &mut Self {
        self.steps.push(step);
        self
    }

    pub fn last_boundary(&self) -> u64 {
        self.steps.iter().map(|s| s.span().1).max().unwrap_or(0)
    }
}

/// Sample instants `round(k * 1000 / rate)` up to and including `end_ms`.
pub fn sample_times(rate_hz: f64, start_ms: u64, end_ms: u64) -> Result<Vec<u64>, TrackingError> {
    check_rate(rate_hz)?;
    let period = 1000.0 / rate_hz;
    let mut out = Vec::new();
    let mut k: u64 = 0;
    loop {
        let t = start_ms + (k as f64 * period).round() as u64;
        if t > end_ms {
            break;
        }
        out.push(t);
        k += 1;
    }
    Ok(out)
}

pub(crate) fn check_rate(rate_hz: f64) -> Result<(), TrackingError> {
    if rate_hz.is_finite() && rate_hz > 0.0 && rate_hz <= 1000.0 {
        Ok(())
    } else {
        Err(TrackingError::Rate(rate_hz))
    }
}

#[derive(Debug, Clone)]
enum Motion {
    Glide { from: Option<Point>, to: Point, t0: u64, t1: u64 },
    Spin { delta: f64, t0: u64, t1: u64 },
    Flip { t: u64 },
}

impl Motion {
    fn start(&self) -> u64 {
        match *self {
            Motion::Glide { t0, .. } | Motion::Spin { t0, .. } => t0,
            Motion::Flip { t } => t,
        }
    }
}

#[derive(Debug, Clone)]
struct Presence {
    order: usize,
    placed: u64,
    removed: Option<u64>,
    at: Point,
    side: Side,
    rot: f64,
}

impl Presence {
    fn covers(&self, t: u64) -> bool {
        t >= self.placed && self.removed.is_none_or(|r| t < r)
    }

    /// Closed-interval containment for a primitive spanning `[t0, t1]`.
    fn contains_span(&self, t0: u64, t1: u64) -> bool {
        t0 >= self.placed && self.removed.is_none_or(|r| t1 <= r)
    }
}

/// Scripted truth for one magnet at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TruePose {
    pub center: Point,
    pub rot: f64,
    pub side: Side,
    pub order: usize,
}

struct Timeline<'a> {
    spec: &'a MagnetSpec,
    presences: Vec<Presence>,
    motions: Vec<Motion>,
    occlusions: Vec<(u64, u64)>,
}

impl Timeline<'_> {
    fn pose_at(&self, t: u64) -> Option<TruePose> {
        let p = self.presences.iter().find(|p| p.covers(t))?;
        let mut center = p.at;
        let mut rot = p.rot;
        let mut side = p.side;
        for m in &self.motions {
            if m.start() < p.placed || p.removed.is_some_and(|r| m.start() >= r) || m.start() > t {
                continue;
            }
            match *m {
                Motion::Glide { from, to, t0, t1 } => {
                    let start = from.unwrap_or(center);
                    let f = if t >= t1 { 1.0 } else { (t - t0) as f64 / (t1 - t0) as f64 };
                    center = start.lerp(to, f);
                }
                Motion::Spin { delta, t0, t1 } => {
                    let f = if t >= t1 { 1.0 } else { (t - t0) as f64 / (t1 - t0) as f64 };
                    rot += delta * f;
                }
                Motion::Flip { .. } => side = side.flipped(),
            }
        }
        Some(TruePose {
            center: center.clamp_unit(),
            rot,
            side,
            order: p.order,
        })
    }

    fn occluded(&self, t: u64) -> bool {
        self.occlusions.iter().any(|&(a, b)| a <= t && t < b)
    }
}

fn conflict(msg: String) -> TrackingError {
    TrackingError::ScriptConflict(msg)
}

fn overlaps(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Expands `script` against the roster into frames sampled at `script.rate_hz`.
pub fn script_scenario(script: &GestureScript, magnets: &[MagnetSpec]) -> Result<Vec<ObservationFrame>, TrackingError> {
    check_rate(script.rate_hz)?;
    if script.steps.is_empty() {
        return Ok(vec![]);
    }
    let roster: HashMap<&MagnetId, &MagnetSpec> = magnets.iter().map(|m| (&m.magnet_id, m)).collect();

    let mut per_magnet: BTreeMap<&MagnetId, Vec<(usize, &ScriptStep)>> = BTreeMap::new();
    let mut handoffs: Vec<(usize, Point, u64, u64)> = Vec::new();
    for (i, step) in script.steps.iter().enumerate() {
        let (t0, t1) = step.span();
        if t1 < t0 || (t0 == t1 && !matches!(step, ScriptStep::Place { .. } | ScriptStep::Remove { .. } | ScriptStep::Flip { .. })) {
            return Err(conflict(format!("step {i} ({}) has an empty or inverted interval", step.op())));
        }
        match step {
            ScriptStep::Handoff { at, t0_ms, t1_ms } => {
                if !at.in_unit_square() {
                    return Err(conflict(format!("step {i} handoff point outside the board")));
                }
                handoffs.push((i, *at, *t0_ms, *t1_ms));
            }
            other => {
                let m = other.magnet().expect("magnet primitive");
                if !roster.contains_key(m) {
                    return Err(conflict(format!("step {i} references unknown magnet {m}")));
                }
                per_magnet.entry(m).or_default().push((i, other));
            }
        }
    }

    let mut timelines: Vec<Timeline> = Vec::new();
    for (id, mut steps) in per_magnet {
        steps.sort_by_key(|(i, s)| (s.span().0, *i));
        let mut tl = Timeline {
            spec: roster[id],
            presences: vec![],
            motions: vec![],
            occlusions: vec![],
        };
        let mut contacts: Vec<(u64, u64)> = Vec::new();
        let mut motion_spans: Vec<(u64, u64)> = Vec::new();
        for &(i, step) in &steps {
            match step {
                ScriptStep::Place { at, side, t_ms, rot_deg, .. } => {
                    if tl.presences.last().is_some_and(|p| p.removed.is_none()) {
                        return Err(conflict(format!("step {i}: {id} placed while already on the board")));
                    }
                    if !at.in_unit_square() {
                        return Err(conflict(format!("step {i}: {id} placed outside the board")));
                    }
                    tl.presences.push(Presence {
                        order: i,
                        placed: *t_ms,
                        removed: None,
                        at: *at,
                        side: *side,
                        rot: *rot_deg,
                    });
                }
                ScriptStep::Remove { t_ms, .. } => match tl.presences.last_mut() {
                    Some(p) if p.removed.is_none() => p.removed = Some(*t_ms),
                    _ => return Err(conflict(format!("step {i}: {id} removed while not on the board"))),
                },
                _ => {}
            }
        }
        for &(i, step) in &steps {
            let (t0, t1) = step.span();
            if matches!(step, ScriptStep::Place { .. } | ScriptStep::Remove { .. }) {
                continue;
            }
            if !tl.presences.iter().any(|p| p.contains_span(t0, t1) && (t0 < t1 || p.covers(t0))) {
                return Err(conflict(format!("step {i}: {} on {id} outside its presence", step.op())));
            }
            match step {
                ScriptStep::Glide { from, to, .. } => {
                    if !to.in_unit_square() || from.is_some_and(|f| !f.in_unit_square()) {
                        return Err(conflict(format!("step {i}: glide of {id} leaves the board")));
                    }
                    tl.motions.push(Motion::Glide { from: *from, to: *to, t0, t1 });
                }
                ScriptStep::Spin { delta_deg, .. } => tl.motions.push(Motion::Spin { delta: *delta_deg, t0, t1 }),
                ScriptStep::Flip { .. } => tl.motions.push(Motion::Flip { t: t0 }),
                ScriptStep::Touch { .. } | ScriptStep::Hover { .. } => {
                    if contacts.iter().any(|&c| overlaps(c, (t0, t1))) {
                        return Err(conflict(format!("step {i}: overlapping touch/hover on {id}")));
                    }
                    contacts.push((t0, t1));
                    continue;
                }
                ScriptStep::Occlude { .. } => {
                    if tl.occlusions.iter().any(|&c| overlaps(c, (t0, t1))) {
                        return Err(conflict(format!("step {i}: overlapping occlusions on {id}")));
                    }
                    tl.occlusions.push((t0, t1));
                    continue;
                }
                _ => unreachable!(),
            }
            let span = if t0 == t1 { (t0, t0 + 1) } else { (t0, t1) };
            if motion_spans.iter().any(|&s| overlaps(s, span)) {
                return Err(conflict(format!("step {i}: overlapping motion primitives on {id}")));
            }
            motion_spans.push(span);
        }
        tl.motions.sort_by_key(Motion::start);
        timelines.push(tl);
    }

    let end = script.end_ms.unwrap_or_else(|| script.last_boundary());
    let times = sample_times(script.rate_hz, 0, end)?;

    // Fingertip primitives in script order; hand ids are ranks among active ones.
    let mut hand_steps: Vec<(usize, &ScriptStep)> = script
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, ScriptStep::Touch { .. } | ScriptStep::Hover { .. } | ScriptStep::Handoff { .. }))
        .collect();
    hand_steps.sort_by_key(|(i, _)| *i);
    let tl_index: HashMap<&MagnetId, usize> = timelines.iter().enumerate().map(|(i, tl)| (&tl.spec.magnet_id, i)).collect();

    let mut frames = Vec::with_capacity(times.len());
    for t in times {
        let poses: Vec<Option<TruePose>> = timelines.iter().map(|tl| tl.pose_at(t)).collect();
        let mut markers = Vec::new();
        for (k, tl) in timelines.iter().enumerate() {
            let Some(pose) = poses[k] else { continue };
            if tl.occluded(t) {
                continue;
            }
            let covered = timelines.iter().enumerate().any(|(j, other)| {
                j != k
                    && poses[j].is_some_and(|q| {
                        q.order > pose.order && q.center.dist(pose.center) < 0.5 * tl.spec.diameter.max(other.spec.diameter)
                    })
            });
            if covered {
                continue;
            }
            markers.push(MarkerObservation {
                fiducial_id: tl.spec.marker(pose.side),
                center: pose.center,
                rotation_deg: quantize_angle(pose.rot),
                confidence: 1.0,
            });
        }
        let mut hands = Vec::new();
        for (_, step) in &hand_steps {
            let (t0, t1) = step.span();
            if !(t0 <= t && t < t1) {
                continue;
            }
            let (tip, contact) = match step {
                ScriptStep::Handoff { at, .. } => (*at, false),
                ScriptStep::Touch { magnet, .. } | ScriptStep::Hover { magnet, .. } => {
                    let pose = poses[tl_index[magnet]].expect("validated presence");
                    (pose.center, matches!(step, ScriptStep::Touch { .. }))
                }
                _ => unreachable!(),
            };
            hands.push(HandObservation {
                hand_id: hands.len() as u8,
                fingertip: tip,
                contact,
            });
        }
        frames.push(ObservationFrame { t_ms: t, markers, hands }.canonical());
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::minimal_story;

    fn m1() -> MagnetId {
        MagnetId::new("m1")
    }

    fn place(t: u64, x: f64, y: f64) -> ScriptStep {
        ScriptStep::Place {
            magnet: m1(),
            side: Side::A,
            at: Point::new(x, y),
            t_ms: t,
            rot_deg: 0.0,
        }
    }

    #[test]
    fn empty_script_gives_empty_stream() {
        let story = minimal_story();
        for rate in [1.0, 30.0, 60.0, 1000.0] {
            assert!(script_scenario(&GestureScript::new(rate), &story.magnets).unwrap().is_empty());
        }
    }

    #[test]
    fn touch_contact_sample_count() {
        let story = minimal_story();
        let mut s = GestureScript::new(60.0);
        s.push(place(0, 0.5, 0.5)).push(ScriptStep::Touch {
            magnet: m1(),
            t0_ms: 1000,
            t1_ms: 1150,
        });
        s.end_ms = Some(2000);
        let frames = script_scenario(&s, &story.magnets).unwrap();
        let contact: Vec<u64> = frames.iter().filter(|f| f.hands.iter().any(|h| h.contact)).map(|f| f.t_ms).collect();
        // Oracle: samples k with 1000 <= round(k * 1000/60) < 1150.
        let oracle = (0..200u64)
            .map(|k| (k as f64 * 1000.0 / 60.0).round() as u64)
            .filter(|t| (1000..1150).contains(t))
            .count();
        assert_eq!(oracle, 9);
        assert_eq!(contact.len(), oracle);
        assert!(contact.iter().all(|t| (1000..1150).contains(t)));
    }

    #[test]
    fn glide_moves_linearly() {
        let story = minimal_story();
        let mut s = GestureScript::new(60.0);
        s.push(place(0, 0.1, 0.5)).push(ScriptStep::Glide {
            magnet: m1(),
            from: None,
            to: Point::new(0.7, 0.5),
            t0_ms: 0,
            t1_ms: 1000,
        });
        let frames = script_scenario(&s, &story.magnets).unwrap();
        assert_eq!(frames.len(), 61);
        for f in &frames {
            let expected = 0.1 + 0.6 * f.t_ms as f64 / 1000.0;
            assert!((f.markers[0].center.x - expected).abs() < 1e-6);
        }
        let total = frames.last().unwrap().markers[0].center.x - frames[0].markers[0].center.x;
        let per_frame = total / (frames.len() - 1) as f64;
        assert!((per_frame - 0.6 / 60.0).abs() < 1e-6);
    }

    #[test]
    fn flip_swaps_fiducial_without_overlap() {
        let story = minimal_story();
        let mut s = GestureScript::new(60.0);
        s.push(place(0, 0.5, 0.5)).push(ScriptStep::Flip { magnet: m1(), t_ms: 500 });
        s.end_ms = Some(1000);
        let frames = script_scenario(&s, &story.magnets).unwrap();
        for f in &frames {
            assert_eq!(f.markers.len(), 1);
            let expected = if f.t_ms >= 500 { 2 } else { 1 };
            assert_eq!(f.markers[0].fiducial_id, expected);
        }
    }

    #[test]
    fn spin_wraps_around() {
        let story = minimal_story();
        let mut s = GestureScript::new(60.0);
        s.push(ScriptStep::Place {
            magnet: m1(),
            side: Side::A,
            at: Point::new(0.5, 0.5),
            t_ms: 0,
            rot_deg: 350.0,
        })
        .push(ScriptStep::Spin {
            magnet: m1(),
            delta_deg: 20.0,
            t0_ms: 0,
            t1_ms: 1000,
        });
        let frames = script_scenario(&s, &story.magnets).unwrap();
        assert_eq!(frames.last().unwrap().markers[0].rotation_deg, 10.0);
        assert!(frames.iter().all(|f| (0.0..360.0).contains(&f.markers[0].rotation_deg)));
    }

    #[test]
    fn conflicts_are_rejected() {
        let story = minimal_story();
        let cases = vec![
            vec![place(0, 0.5, 0.5), place(10, 0.5, 0.5)],
            vec![ScriptStep::Remove { magnet: m1(), t_ms: 5 }],
            vec![
                place(0, 0.5, 0.5),
                ScriptStep::Touch {
                    magnet: m1(),
                    t0_ms: 10,
                    t1_ms: 100,
                },
                ScriptStep::Hover {
                    magnet: m1(),
                    t0_ms: 50,
                    t1_ms: 150,
                },
            ],
            vec![
                place(0, 0.5, 0.5),
                ScriptStep::Spin {
                    magnet: m1(),
                    delta_deg: 90.0,
                    t0_ms: 0,
                    t1_ms: 500,
                },
                ScriptStep::Flip { magnet: m1(), t_ms: 200 },
            ],
            vec![ScriptStep::Touch {
                magnet: m1(),
                t0_ms: 0,
                t1_ms: 10,
            }],
            vec![
                place(0, 0.5, 0.5),
                ScriptStep::Occlude {
                    magnet: m1(),
                    t0_ms: 0,
                    t1_ms: 100,
                },
                ScriptStep::Occlude {
                    magnet: m1(),
                    t0_ms: 99,
                    t1_ms: 200,
                },
            ],
            vec![ScriptStep::Place {
                magnet: MagnetId::new("ghost"),
                side: Side::A,
                at: Point::new(0.5, 0.5),
                t_ms: 0,
                rot_deg: 0.0,
            }],
        ];
        for steps in cases {
            let s = GestureScript {
                rate_hz: 60.0,
                end_ms: None,
                steps,
            };
            assert!(matches!(script_scenario(&s, &story.magnets), Err(TrackingError::ScriptConflict(_))), "{s:?}");
        }
    }

    #[test]
    fn rates_are_checked() {
        let story = minimal_story();
        let mut s = GestureScript::new(0.0);
        s.push(place(0, 0.5, 0.5));
        assert_eq!(script_scenario(&s, &story.magnets), Err(TrackingError::Rate(0.0)));
        s.rate_hz = -5.0;
        assert!(script_scenario(&s, &story.magnets).is_err());
    }

    #[test]
    fn script_json_round_trips() {
        let mut s = GestureScript::new(60.0);
        s.push(place(0, 0.5, 0.5)).push(ScriptStep::Handoff {
            at: Point::new(0.2, 0.3),
            t0_ms: 10,
            t1_ms: 20,
        });
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"op\":\"place\""));
        assert_eq!(serde_json::from_str::<GestureScript>(&text).unwrap(), s);
    }
}

//! Incremental, frame-at-a-time recognizer.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{shortest_delta, sort_batch, ActionKind, Direction, RecognizerConfig, RecognizerError, UserActionEvent};
use crate::geom::{quantize, Point};
use crate::ids::{FiducialId, MagnetId};
use crate::story::{MagnetRole, MagnetSpec, Side};
use crate::tracking::{MarkerObservation, ObservationFrame};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Presence {
    Absent,
    /// Attached; the marker may be momentarily unseen.
    Present,
    /// A widget resting on a node-carrier.
    Stacked { base: MagnetId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetPose {
    pub center: Point,
    pub rotation_deg: f64,
    pub side: Side,
    /// Marker seen in the latest frame.
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Absent,
    Present,
    Stacked(usize),
}

#[derive(Debug, Clone, Copy)]
struct RotEpisode {
    acc: f64,
    last_rotating: u64,
    revolved: bool,
}

#[derive(Debug, Clone)]
struct Track {
    id: MagnetId,
    role: MagnetRole,
    diameter: f64,
    markers: [FiducialId; 2],
    state: State,
    side: Side,
    /// Confirmation run while absent: side and first visible instant.
    run: Option<(Side, u64)>,
    center: Point,
    rot: f64,
    visible: bool,
    fresh: bool,
    last_seen: u64,
    absent_since: Option<u64>,
    /// Cover run start and whether CoverBegin fired.
    cover: Option<(u64, bool)>,
    rot_ref: f64,
    /// Sub-threshold step of the previous frame outside any episode.
    rot_lead: f64,
    rot_ep: Option<RotEpisode>,
    anchor: Point,
    slide_from: Option<Point>,
    history: VecDeque<(u64, Point)>,
    /// Contact run start and whether HoldBegin fired.
    contact: Option<(u64, bool)>,
    /// Dwell run start and whether PointDwell fired.
    dwell: Option<(u64, bool)>,
}

impl Track {
    fn reset_absent(&mut self) {
        self.state = State::Absent;
        self.run = None;
        self.visible = false;
        self.absent_since = None;
        self.cover = None;
        self.rot_ep = None;
        self.rot_lead = 0.0;
        self.slide_from = None;
        self.history.clear();
    }

    fn set_pose(&mut self, m: &MarkerObservation) {
        self.center = m.center;
        self.rot = m.rotation_deg;
        self.visible = true;
    }
}

/// Sequential recognizer state: one track per roster magnet, plus pair latches.
#[derive(Debug, Clone)]
pub struct Recognizer {
    cfg: RecognizerConfig,
    tracks: Vec<Track>,
    by_fiducial: HashMap<FiducialId, (usize, Side)>,
    latches: BTreeMap<(usize, usize), bool>,
    last_t: Option<u64>,
}

type Seen<'a> = Vec<[Option<&'a MarkerObservation>; 2]>;

impl Recognizer {
    pub fn new(cfg: RecognizerConfig, roster: &[MagnetSpec]) -> Result<Self, RecognizerError> {
        cfg.validate()?;
        let mut specs: Vec<&MagnetSpec> = roster.iter().collect();
        specs.sort_by(|a, b| a.magnet_id.cmp(&b.magnet_id));
        let tracks: Vec<Track> = specs
            .iter()
            .map(|s| Track {
                id: s.magnet_id.clone(),
                role: s.role,
                diameter: s.diameter,
                markers: [s.side_a_marker, s.side_b_marker],
                state: State::Absent,
                side: Side::A,
                run: None,
                center: Point::default(),
                rot: 0.0,
                visible: false,
                fresh: false,
                last_seen: 0,
                absent_since: None,
                cover: None,
                rot_ref: 0.0,
                rot_lead: 0.0,
                rot_ep: None,
                anchor: Point::default(),
                slide_from: None,
                history: VecDeque::new(),
                contact: None,
                dwell: None,
            })
            .collect();
        let mut by_fiducial = HashMap::new();
        for (i, t) in tracks.iter().enumerate() {
            by_fiducial.insert(t.markers[0], (i, Side::A));
            by_fiducial.insert(t.markers[1], (i, Side::B));
        }
        Ok(Recognizer {
            cfg,
            tracks,
            by_fiducial,
            latches: BTreeMap::new(),
            last_t: None,
        })
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.cfg
    }

    pub fn last_t(&self) -> Option<u64> {
        self.last_t
    }

    pub fn presence(&self, id: &MagnetId) -> Option<Presence> {
        let t = self.tracks.iter().find(|t| &t.id == id)?;
        Some(match t.state {
            State::Absent => Presence::Absent,
            State::Present => Presence::Present,
            State::Stacked(b) => Presence::Stacked {
                base: self.tracks[b].id.clone(),
            },
        })
    }

    /// Last known poses of attached and stacked magnets, by magnet id.
    pub fn poses(&self) -> BTreeMap<MagnetId, MagnetPose> {
        self.tracks
            .iter()
            .filter(|t| t.state != State::Absent)
            .map(|t| {
                (
                    t.id.clone(),
                    MagnetPose {
                        center: t.center,
                        rotation_deg: t.rot,
                        side: t.side,
                        visible: t.visible,
                    },
                )
            })
            .collect()
    }

    pub fn ingest_frame(&mut self, frame: &ObservationFrame) -> Result<Vec<UserActionEvent>, RecognizerError> {
        if let Some(prev) = self.last_t {
            if frame.t_ms <= prev {
                return Err(RecognizerError::Timestamp {
                    t_ms: frame.t_ms,
                    previous_ms: prev,
                });
            }
        }
        self.last_t = Some(frame.t_ms);
        let t = frame.t_ms;
        let mut seen: Seen = vec![[None, None]; self.tracks.len()];
        for m in &frame.markers {
            if let Some(&(i, side)) = self.by_fiducial.get(&m.fiducial_id) {
                seen[i][side as usize] = Some(m);
            }
        }
        for tr in &mut self.tracks {
            tr.visible = false;
            tr.fresh = false;
        }
        let mut out = Vec::new();
        let unstacked = self.stacked_step(t, &seen, &mut out);
        let shielded = self.shielded();
        for role in [MagnetRole::NodeCarrier, MagnetRole::Widget] {
            for i in 0..self.tracks.len() {
                if self.tracks[i].role != role || unstacked[i] || matches!(self.tracks[i].state, State::Stacked(_)) {
                    continue;
                }
                self.presence_step(i, t, &seen, frame, shielded[i], &mut out);
            }
        }
        for i in 0..self.tracks.len() {
            if self.tracks[i].state == State::Present {
                self.motion_step(i, t, &mut out);
            }
        }
        self.hands_step(t, frame, &mut out);
        self.proximity_step(t, &mut out);
        sort_batch(&mut out);
        Ok(out)
    }

    fn emit(out: &mut Vec<UserActionEvent>, t: u64, kind: ActionKind) {
        out.push(UserActionEvent::new(t, kind));
    }

    fn shielded(&self) -> Vec<bool> {
        let mut s = vec![false; self.tracks.len()];
        for tr in &self.tracks {
            if let State::Stacked(b) = tr.state {
                s[b] = true;
            }
        }
        s
    }

    fn stack_radius(&self, a: usize, b: usize) -> f64 {
        self.cfg.r_stack_factor * self.tracks[a].diameter.max(self.tracks[b].diameter)
    }

    fn stacked_step(&mut self, t: u64, seen: &Seen, out: &mut Vec<UserActionEvent>) -> Vec<bool> {
        let mut unstacked = vec![false; self.tracks.len()];
        for i in 0..self.tracks.len() {
            let State::Stacked(base) = self.tracks[i].state else { continue };
            let own = {
                let tr = &self.tracks[i];
                seen[i][tr.side as usize].map(|m| (tr.side, m)).or_else(|| seen[i][tr.side.flipped() as usize].map(|m| (tr.side.flipped(), m)))
            };
            let r = self.stack_radius(i, base);
            let base_center = self.tracks[base].center;
            let base_seen = seen[base].iter().any(Option::is_some);
            let tr = &mut self.tracks[i];
            match own {
                Some((side, m)) => {
                    tr.side = side;
                    tr.set_pose(m);
                    tr.absent_since = None;
                }
                None => {
                    tr.absent_since.get_or_insert(t);
                }
            }
            let gone = tr.absent_since.is_some_and(|a| t - a >= self.cfg.t_detach_ms);
            let slid_off = own.is_some_and(|(_, m)| m.center.dist(base_center) > r);
            if base_seen || gone || slid_off {
                Self::emit(
                    out,
                    t,
                    ActionKind::Unstack {
                        top: tr.id.clone(),
                        base: self.tracks[base].id.clone(),
                    },
                );
                self.tracks[i].reset_absent();
                unstacked[i] = true;
            }
        }
        unstacked
    }

    fn presence_step(&mut self, i: usize, t: u64, seen: &Seen, frame: &ObservationFrame, shielded: bool, out: &mut Vec<UserActionEvent>) {
        match self.tracks[i].state {
            State::Absent => self.absent_step(i, t, seen, out),
            State::Present => self.present_step(i, t, seen, frame, shielded, out),
            State::Stacked(_) => {}
        }
    }

    fn absent_step(&mut self, i: usize, t: u64, seen: &Seen, out: &mut Vec<UserActionEvent>) {
        let tr = &self.tracks[i];
        let pick = match tr.run {
            Some((s, _)) if seen[i][s as usize].is_some() => Some(s),
            _ if seen[i][0].is_some() => Some(Side::A),
            _ if seen[i][1].is_some() => Some(Side::B),
            _ => None,
        };
        let Some(side) = pick else {
            self.tracks[i].run = None;
            return;
        };
        let m = seen[i][side as usize].expect("picked side is visible");
        let since = match tr.run {
            Some((s, since)) if s == side => since,
            _ => t,
        };
        self.tracks[i].run = Some((side, since));
        if t - since < self.cfg.t_confirm_ms {
            return;
        }
        if self.tracks[i].role == MagnetRole::Widget {
            let base = (0..self.tracks.len())
                .filter(|&b| self.tracks[b].role == MagnetRole::NodeCarrier && self.tracks[b].state == State::Present)
                .map(|b| (b, self.tracks[b].center.dist(m.center)))
                .filter(|&(b, d)| d <= self.stack_radius(i, b))
                .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            if let Some((b, _)) = base {
                Self::emit(
                    out,
                    t,
                    ActionKind::Stack {
                        top: self.tracks[i].id.clone(),
                        base: self.tracks[b].id.clone(),
                    },
                );
                let tr = &mut self.tracks[i];
                tr.state = State::Stacked(b);
                tr.side = side;
                tr.set_pose(m);
                tr.run = None;
                tr.absent_since = None;
                return;
            }
        }
        let tr = &mut self.tracks[i];
        Self::emit(
            out,
            t,
            ActionKind::Attach {
                magnet: tr.id.clone(),
                at: m.center,
            },
        );
        tr.state = State::Present;
        tr.side = side;
        tr.set_pose(m);
        tr.fresh = true;
        tr.last_seen = t;
        tr.run = None;
        tr.absent_since = None;
        tr.cover = None;
        tr.rot_ref = m.rotation_deg;
        tr.rot_lead = 0.0;
        tr.rot_ep = None;
        tr.anchor = m.center;
        tr.slide_from = None;
        tr.history.clear();
        tr.history.push_back((t, m.center));
    }

    fn present_step(&mut self, i: usize, t: u64, seen: &Seen, frame: &ObservationFrame, shielded: bool, out: &mut Vec<UserActionEvent>) {
        let cfg = &self.cfg;
        let tr = &mut self.tracks[i];
        let cur = seen[i][tr.side as usize];
        let other = seen[i][tr.side.flipped() as usize];
        let end_cover = |tr: &mut Track, out: &mut Vec<UserActionEvent>| {
            if let Some((_, true)) = tr.cover.take() {
                Self::emit(out, t, ActionKind::CoverEnd { magnet: tr.id.clone() });
            }
        };
        if let Some(m) = cur {
            end_cover(tr, out);
            tr.absent_since = None;
            tr.set_pose(m);
            return;
        }
        if let Some(m) = other {
            let in_time = tr.absent_since.is_none_or(|a| t - a <= cfg.t_flip_ms);
            if in_time && m.center.dist(tr.center) <= cfg.r_flip_factor * tr.diameter {
                tr.side = tr.side.flipped();
                Self::emit(
                    out,
                    t,
                    ActionKind::Flip {
                        magnet: tr.id.clone(),
                        side: tr.side,
                    },
                );
                end_cover(tr, out);
                tr.absent_since = None;
                tr.set_pose(m);
                tr.rot_ref = m.rotation_deg;
                tr.rot_lead = 0.0;
                return;
            }
        }
        let since = *tr.absent_since.get_or_insert(t);
        if shielded {
            end_cover(tr, out);
            return;
        }
        let r_cover = cfg.r_cover_factor * tr.diameter;
        if frame.hands.iter().any(|h| h.fingertip.dist(tr.center) <= r_cover) {
            let c = tr.cover.get_or_insert((t, false));
            if !c.1 && t - c.0 >= cfg.t_cover_min_ms {
                c.1 = true;
                Self::emit(out, t, ActionKind::CoverBegin { magnet: tr.id.clone() });
            }
        } else {
            end_cover(tr, out);
        }
        if tr.cover.is_none() && t - since >= cfg.t_detach_ms {
            Self::emit(
                out,
                t,
                ActionKind::Detach {
                    magnet: tr.id.clone(),
                    last: tr.center,
                },
            );
            tr.reset_absent();
        }
    }

    fn motion_step(&mut self, i: usize, t: u64, out: &mut Vec<UserActionEvent>) {
        let cfg = &self.cfg;
        let tr = &mut self.tracks[i];
        if tr.visible && !tr.fresh {
            let dt = t - tr.last_seen;
            tr.last_seen = t;
            let d = shortest_delta(tr.rot_ref, tr.rot);
            tr.rot_ref = tr.rot;
            let rotating = d.abs() * 1000.0 > cfg.w_rest_deg_s * dt as f64;
            let lead = std::mem::take(&mut tr.rot_lead);
            if rotating || tr.rot_ep.is_some() {
                // A turn that starts between samples shows a slow first step;
                // count it when it goes the same way.
                let ep = tr.rot_ep.get_or_insert(RotEpisode {
                    acc: if lead * d > 0.0 { lead } else { 0.0 },
                    last_rotating: t,
                    revolved: false,
                });
                ep.acc += d;
                if rotating {
                    ep.last_rotating = t;
                }
                if ep.acc.abs() >= cfg.theta_full_deg {
                    let direction = if ep.acc > 0.0 { Direction::Cw } else { Direction::Ccw };
                    ep.acc = 0.0;
                    ep.revolved = true;
                    Self::emit(
                        out,
                        t,
                        ActionKind::FullRevolution {
                            magnet: tr.id.clone(),
                            direction,
                        },
                    );
                }
            } else {
                tr.rot_lead = d;
            }

            let c = tr.center;
            tr.history.push_back((t, c));
            while tr.history.len() >= 2 && tr.history[1].0 + cfg.t_settle_ms <= t {
                tr.history.pop_front();
            }
            if tr.slide_from.is_none() && c.dist(tr.anchor) >= cfg.eps_move {
                tr.slide_from = Some(tr.anchor);
            }
            if let Some(from) = tr.slide_from {
                let r = cfg.v_rest * cfg.t_settle_ms as f64 / 1000.0;
                let rest = tr.history[0].0 + cfg.t_settle_ms <= t && tr.history.iter().all(|(_, p)| p.dist(c) <= r);
                if rest {
                    if c.dist(from) >= cfg.eps_move {
                        Self::emit(
                            out,
                            t,
                            ActionKind::SlideEnd {
                                magnet: tr.id.clone(),
                                from,
                                to: c,
                            },
                        );
                    }
                    tr.anchor = c;
                    tr.slide_from = None;
                }
            }
        }
        if let Some(ep) = tr.rot_ep {
            if t - ep.last_rotating >= cfg.t_spin_gap_ms {
                tr.rot_ep = None;
                if !ep.revolved && ep.acc.abs() >= cfg.theta_min_deg {
                    Self::emit(
                        out,
                        t,
                        ActionKind::RotateDelta {
                            magnet: tr.id.clone(),
                            deg: quantize(ep.acc, 3),
                        },
                    );
                }
            }
        }
    }

    fn hands_step(&mut self, t: u64, frame: &ObservationFrame, out: &mut Vec<UserActionEvent>) {
        let n = self.tracks.len();
        let mut contact = vec![false; n];
        let mut hover = vec![false; n];
        for h in &frame.hands {
            let best = (0..n)
                .filter(|&i| self.tracks[i].state == State::Present)
                .map(|i| (i, self.tracks[i].center.dist(h.fingertip)))
                .filter(|&(i, d)| d <= self.cfg.r_contact_factor * self.tracks[i].diameter)
                .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            if let Some((i, _)) = best {
                if h.contact {
                    contact[i] = true;
                } else {
                    hover[i] = true;
                }
            }
        }
        let cfg = &self.cfg;
        for (i, tr) in self.tracks.iter_mut().enumerate() {
            if tr.state != State::Present {
                if let Some((since, true)) = tr.contact.take() {
                    Self::emit(
                        out,
                        t,
                        ActionKind::HoldEnd {
                            magnet: tr.id.clone(),
                            duration_ms: t - since,
                        },
                    );
                }
                tr.contact = None;
                tr.dwell = None;
                continue;
            }
            if contact[i] {
                let c = tr.contact.get_or_insert((t, false));
                if !c.1 && t - c.0 >= cfg.t_hold_min_ms {
                    c.1 = true;
                    Self::emit(out, t, ActionKind::HoldBegin { magnet: tr.id.clone() });
                }
            } else if let Some((since, held)) = tr.contact.take() {
                if held {
                    Self::emit(
                        out,
                        t,
                        ActionKind::HoldEnd {
                            magnet: tr.id.clone(),
                            duration_ms: t - since,
                        },
                    );
                } else if t - since <= cfg.t_tap_max_ms {
                    Self::emit(out, t, ActionKind::Tap { magnet: tr.id.clone() });
                }
            }
            if hover[i] && !contact[i] && tr.visible {
                let d = tr.dwell.get_or_insert((t, false));
                if !d.1 && t - d.0 >= cfg.t_point_dwell_ms {
                    d.1 = true;
                    Self::emit(out, t, ActionKind::PointDwell { magnet: tr.id.clone() });
                }
            } else {
                tr.dwell = None;
            }
        }
    }

    fn proximity_step(&mut self, t: u64, out: &mut Vec<UserActionEvent>) {
        let live: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].role == MagnetRole::NodeCarrier && self.tracks[i].state == State::Present)
            .collect();
        self.latches.retain(|(a, b), _| live.contains(a) && live.contains(b));
        for (k, &a) in live.iter().enumerate() {
            for &b in &live[k + 1..] {
                let (ta, tb) = (&self.tracks[a], &self.tracks[b]);
                let d = ta.center.dist(tb.center);
                let size = ta.diameter.max(tb.diameter);
                let near = d < self.cfg.d_near_factor * size;
                match self.latches.get_mut(&(a, b)) {
                    None => {
                        self.latches.insert((a, b), near);
                    }
                    Some(latched) => {
                        if !*latched && near {
                            *latched = true;
                            Self::emit(
                                out,
                                t,
                                ActionKind::BringCloser {
                                    a: ta.id.clone(),
                                    b: tb.id.clone(),
                                },
                            );
                        } else if *latched && d > self.cfg.d_near_release_factor * size {
                            *latched = false;
                            Self::emit(
                                out,
                                t,
                                ActionKind::MovedApart {
                                    a: ta.id.clone(),
                                    b: tb.id.clone(),
                                },
                            );
                        }
                    }
                }
            }
        }
    }

    /// Flushes open episodes at `t_end` (clamped to the last frame time).
    pub fn finalize(&mut self, t_end: u64) -> Vec<UserActionEvent> {
        let Some(last) = self.last_t else { return vec![] };
        let t = t_end.max(last);
        let shielded = self.shielded();
        let cfg = &self.cfg;
        let mut out = Vec::new();
        for (i, tr) in self.tracks.iter_mut().enumerate() {
            if let Some((since, true)) = tr.contact {
                Self::emit(
                    &mut out,
                    t,
                    ActionKind::HoldEnd {
                        magnet: tr.id.clone(),
                        duration_ms: t - since,
                    },
                );
            }
            tr.contact = None;
            tr.dwell = None;
            if tr.state != State::Present {
                continue;
            }
            if let Some(ep) = tr.rot_ep.take() {
                if !ep.revolved && ep.acc.abs() >= cfg.theta_min_deg {
                    Self::emit(
                        &mut out,
                        t,
                        ActionKind::RotateDelta {
                            magnet: tr.id.clone(),
                            deg: quantize(ep.acc, 3),
                        },
                    );
                }
            }
            tr.slide_from = None;
            if let Some((_, true)) = tr.cover.take() {
                Self::emit(&mut out, t, ActionKind::CoverEnd { magnet: tr.id.clone() });
            }
            if let Some(a) = tr.absent_since {
                if !shielded[i] && t - a >= cfg.t_detach_ms {
                    Self::emit(
                        &mut out,
                        t,
                        ActionKind::Detach {
                            magnet: tr.id.clone(),
                            last: tr.center,
                        },
                    );
                    tr.reset_absent();
                }
            }
        }
        sort_batch(&mut out);
        out
    }
}

//! Whole-stream evaluation, one stage at a time.
//!
//! Presence (attach, detach, flip, stack, cover) is swept first for every
//! magnet and recorded per frame; motion, hand contact and proximity are then
//! scanned independently against that table. Used as the oracle for the
//! incremental [`Recognizer`](super::Recognizer).

use std::collections::{BTreeMap, HashMap};

use super::{shortest_delta, ActionKind, Direction, RecognizerConfig, RecognizerError, UserActionEvent};
use crate::geom::{quantize, Point};
use crate::ids::{FiducialId, MagnetId};
use crate::story::{MagnetRole, MagnetSpec, Side};
use crate::tracking::ObservationFrame;

type Pose = (Point, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Off,
    On,
    Riding,
}

#[derive(Debug, Clone, Copy)]
struct Snap {
    mode: Mode,
    center: Point,
    rot: f64,
    seen: bool,
    attached: bool,
    flipped: bool,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Off { run: Option<(Side, u64)> },
    On { side: Side, pose: Pose, gone: Option<u64>, cover: Option<(u64, bool)> },
    Riding { base: usize, side: Side, pose: Pose, gone: Option<u64> },
}

struct Roster {
    ids: Vec<MagnetId>,
    roles: Vec<MagnetRole>,
    sizes: Vec<f64>,
}

struct Tagged {
    t: u64,
    kind: ActionKind,
}

fn tag(t: u64, kind: ActionKind) -> Tagged {
    Tagged { t, kind }
}

/// Evaluates `frames` in one pass per stage and flushes at the last frame time.
pub fn batch_reference(frames: &[ObservationFrame], cfg: &RecognizerConfig, roster: &[MagnetSpec]) -> Result<Vec<UserActionEvent>, RecognizerError> {
    cfg.validate()?;
    for w in frames.windows(2) {
        if w[1].t_ms <= w[0].t_ms {
            return Err(RecognizerError::Timestamp {
                t_ms: w[1].t_ms,
                previous_ms: w[0].t_ms,
            });
        }
    }
    let mut specs: Vec<&MagnetSpec> = roster.iter().collect();
    specs.sort_by(|a, b| a.magnet_id.cmp(&b.magnet_id));
    let r = Roster {
        ids: specs.iter().map(|s| s.magnet_id.clone()).collect(),
        roles: specs.iter().map(|s| s.role).collect(),
        sizes: specs.iter().map(|s| s.diameter).collect(),
    };
    let n = specs.len();
    let lookup: HashMap<FiducialId, (usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| [(s.side_a_marker, (i, 0)), (s.side_b_marker, (i, 1))])
        .collect();
    let obs: Vec<Vec<[Option<Pose>; 2]>> = frames
        .iter()
        .map(|f| {
            let mut row = vec![[None, None]; n];
            for m in &f.markers {
                if let Some(&(i, s)) = lookup.get(&m.fiducial_id) {
                    row[i][s] = Some((m.center, m.rotation_deg));
                }
            }
            row
        })
        .collect();

    let mut frame_events: Vec<Tagged> = Vec::new();
    let mut tail: Vec<ActionKind> = Vec::new();
    let t_end = frames.last().map(|f| f.t_ms);

    let (snaps, phases) = presence_pass(frames, &obs, cfg, &r, &mut frame_events);
    let open_rotations = motion_pass(frames, &snaps, cfg, &r, &mut frame_events);
    let open_holds = hands_pass(frames, &snaps, cfg, &r, &mut frame_events);
    proximity_pass(frames, &snaps, cfg, &r, &mut frame_events);

    if let Some(t_end) = t_end {
        let shield: Vec<bool> = (0..n)
            .map(|b| phases.iter().any(|p| matches!(p, Phase::Riding { base, .. } if *base == b)))
            .collect();
        for i in 0..n {
            if let Some(since) = open_holds[i] {
                tail.push(ActionKind::HoldEnd {
                    magnet: r.ids[i].clone(),
                    duration_ms: t_end - since,
                });
            }
            if let Phase::On { pose, gone, cover, .. } = phases[i] {
                if let Some(acc) = open_rotations[i] {
                    tail.push(ActionKind::RotateDelta {
                        magnet: r.ids[i].clone(),
                        deg: quantize(acc, 3),
                    });
                }
                if let Some((_, true)) = cover {
                    tail.push(ActionKind::CoverEnd { magnet: r.ids[i].clone() });
                }
                if gone.is_some_and(|g| t_end - g >= cfg.t_detach_ms) && !shield[i] {
                    tail.push(ActionKind::Detach {
                        magnet: r.ids[i].clone(),
                        last: pose.0,
                    });
                }
            }
        }
    }

    let key = |k: &ActionKind| (k.rank(), k.magnets().into_iter().cloned().collect::<Vec<_>>());
    frame_events.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| key(&a.kind).cmp(&key(&b.kind))));
    tail.sort_by_key(key);
    let mut out: Vec<UserActionEvent> = frame_events.into_iter().map(|e| UserActionEvent::new(e.t, e.kind)).collect();
    out.extend(tail.into_iter().map(|k| UserActionEvent::new(t_end.unwrap_or(0), k)));
    Ok(out)
}

fn presence_pass(
    frames: &[ObservationFrame],
    obs: &[Vec<[Option<Pose>; 2]>],
    cfg: &RecognizerConfig,
    r: &Roster,
    ev: &mut Vec<Tagged>,
) -> (Vec<Vec<Snap>>, Vec<Phase>) {
    let n = r.ids.len();
    let mut phases = vec![Phase::Off { run: None }; n];
    let mut table = Vec::with_capacity(frames.len());
    let stack_r = |a: usize, b: usize| cfg.r_stack_factor * r.sizes[a].max(r.sizes[b]);
    for (k, frame) in frames.iter().enumerate() {
        let t = frame.t_ms;
        let row = &obs[k];
        let mut snap: Vec<Snap> = phases
            .iter()
            .map(|p| {
                let (mode, pose) = match *p {
                    Phase::Off { .. } => (Mode::Off, (Point::default(), 0.0)),
                    Phase::On { pose, .. } => (Mode::On, pose),
                    Phase::Riding { pose, .. } => (Mode::Riding, pose),
                };
                Snap {
                    mode,
                    center: pose.0,
                    rot: pose.1,
                    seen: false,
                    attached: false,
                    flipped: false,
                }
            })
            .collect();

        // Widgets riding a base go first; they decide which bases stay shielded.
        let mut dismounted = vec![false; n];
        for i in 0..n {
            let Phase::Riding { base, side, pose, gone } = phases[i] else { continue };
            let here = row[i][side as usize].map(|p| (side, p)).or_else(|| row[i][side.flipped() as usize].map(|p| (side.flipped(), p)));
            let base_center = match phases[base] {
                Phase::On { pose, .. } => pose.0,
                _ => unreachable!("a ridden base is attached"),
            };
            let (side, pose, gone) = match here {
                Some((s, p)) => (s, p, None),
                None => (side, pose, Some(gone.unwrap_or(t))),
            };
            let off = row[base].iter().any(Option::is_some)
                || gone.is_some_and(|g| t - g >= cfg.t_detach_ms)
                || here.is_some_and(|(_, p)| p.0.dist(base_center) > stack_r(i, base));
            if off {
                ev.push(tag(
                    t,
                    ActionKind::Unstack {
                        top: r.ids[i].clone(),
                        base: r.ids[base].clone(),
                    },
                ));
                phases[i] = Phase::Off { run: None };
                dismounted[i] = true;
            } else {
                phases[i] = Phase::Riding { base, side, pose, gone };
                snap[i].center = pose.0;
                snap[i].rot = pose.1;
                snap[i].seen = here.is_some();
            }
        }
        let ridden: Vec<bool> = (0..n)
            .map(|b| phases.iter().any(|p| matches!(p, Phase::Riding { base, .. } if *base == b)))
            .collect();

        let order: Vec<usize> = (0..n)
            .filter(|&i| r.roles[i] == MagnetRole::NodeCarrier)
            .chain((0..n).filter(|&i| r.roles[i] == MagnetRole::Widget))
            .collect();
        for i in order {
            if dismounted[i] {
                snap[i].mode = Mode::Off;
                continue;
            }
            match phases[i] {
                Phase::Riding { .. } => {}
                Phase::Off { run } => {
                    let side = match run {
                        Some((s, _)) if row[i][s as usize].is_some() => Some(s),
                        _ => [Side::A, Side::B].into_iter().find(|s| row[i][*s as usize].is_some()),
                    };
                    let Some(side) = side else {
                        phases[i] = Phase::Off { run: None };
                        continue;
                    };
                    let pose = row[i][side as usize].unwrap();
                    let start = match run {
                        Some((s, st)) if s == side => st,
                        _ => t,
                    };
                    if t - start < cfg.t_confirm_ms {
                        phases[i] = Phase::Off { run: Some((side, start)) };
                        continue;
                    }
                    let mut base = None;
                    if r.roles[i] == MagnetRole::Widget {
                        let mut best: Option<(f64, usize)> = None;
                        for b in 0..n {
                            if r.roles[b] != MagnetRole::NodeCarrier {
                                continue;
                            }
                            let Phase::On { pose: bp, .. } = phases[b] else { continue };
                            let d = bp.0.dist(pose.0);
                            if d <= stack_r(i, b) && best.is_none_or(|(bd, _)| d < bd) {
                                best = Some((d, b));
                            }
                        }
                        base = best.map(|(_, b)| b);
                    }
                    match base {
                        Some(b) => {
                            ev.push(tag(
                                t,
                                ActionKind::Stack {
                                    top: r.ids[i].clone(),
                                    base: r.ids[b].clone(),
                                },
                            ));
                            phases[i] = Phase::Riding { base: b, side, pose, gone: None };
                            snap[i] = Snap {
                                mode: Mode::Riding,
                                center: pose.0,
                                rot: pose.1,
                                seen: true,
                                attached: false,
                                flipped: false,
                            };
                        }
                        None => {
                            ev.push(tag(
                                t,
                                ActionKind::Attach {
                                    magnet: r.ids[i].clone(),
                                    at: pose.0,
                                },
                            ));
                            phases[i] = Phase::On {
                                side,
                                pose,
                                gone: None,
                                cover: None,
                            };
                            snap[i] = Snap {
                                mode: Mode::On,
                                center: pose.0,
                                rot: pose.1,
                                seen: true,
                                attached: true,
                                flipped: false,
                            };
                        }
                    }
                }
                Phase::On { side, pose, gone, cover } => {
                    let begun = matches!(cover, Some((_, true)));
                    if let Some(p) = row[i][side as usize] {
                        if begun {
                            ev.push(tag(t, ActionKind::CoverEnd { magnet: r.ids[i].clone() }));
                        }
                        phases[i] = Phase::On {
                            side,
                            pose: p,
                            gone: None,
                            cover: None,
                        };
                        snap[i].center = p.0;
                        snap[i].rot = p.1;
                        snap[i].seen = true;
                        continue;
                    }
                    let flip = row[i][side.flipped() as usize]
                        .filter(|p| gone.is_none_or(|g| t - g <= cfg.t_flip_ms) && p.0.dist(pose.0) <= cfg.r_flip_factor * r.sizes[i]);
                    if let Some(p) = flip {
                        ev.push(tag(
                            t,
                            ActionKind::Flip {
                                magnet: r.ids[i].clone(),
                                side: side.flipped(),
                            },
                        ));
                        if begun {
                            ev.push(tag(t, ActionKind::CoverEnd { magnet: r.ids[i].clone() }));
                        }
                        phases[i] = Phase::On {
                            side: side.flipped(),
                            pose: p,
                            gone: None,
                            cover: None,
                        };
                        snap[i].center = p.0;
                        snap[i].rot = p.1;
                        snap[i].seen = true;
                        snap[i].flipped = true;
                        continue;
                    }
                    let gone_at = gone.unwrap_or(t);
                    if ridden[i] {
                        if begun {
                            ev.push(tag(t, ActionKind::CoverEnd { magnet: r.ids[i].clone() }));
                        }
                        phases[i] = Phase::On {
                            side,
                            pose,
                            gone: Some(gone_at),
                            cover: None,
                        };
                        continue;
                    }
                    let hand_near = frame.hands.iter().any(|h| h.fingertip.dist(pose.0) <= cfg.r_cover_factor * r.sizes[i]);
                    let cover = if hand_near {
                        let (start, mut fired) = cover.unwrap_or((t, false));
                        if !fired && t - start >= cfg.t_cover_min_ms {
                            fired = true;
                            ev.push(tag(t, ActionKind::CoverBegin { magnet: r.ids[i].clone() }));
                        }
                        Some((start, fired))
                    } else {
                        if begun {
                            ev.push(tag(t, ActionKind::CoverEnd { magnet: r.ids[i].clone() }));
                        }
                        None
                    };
                    if cover.is_none() && t - gone_at >= cfg.t_detach_ms {
                        ev.push(tag(
                            t,
                            ActionKind::Detach {
                                magnet: r.ids[i].clone(),
                                last: pose.0,
                            },
                        ));
                        phases[i] = Phase::Off { run: None };
                        snap[i].mode = Mode::Off;
                    } else {
                        phases[i] = Phase::On {
                            side,
                            pose,
                            gone: Some(gone_at),
                            cover,
                        };
                    }
                }
            }
        }
        table.push(snap);
    }
    (table, phases)
}

/// Returns, per magnet, the accumulated angle of an episode still open and
/// reportable at the end of the stream.
fn motion_pass(frames: &[ObservationFrame], snaps: &[Vec<Snap>], cfg: &RecognizerConfig, r: &Roster, ev: &mut Vec<Tagged>) -> Vec<Option<f64>> {
    let rest_radius = cfg.v_rest * cfg.t_settle_ms as f64 / 1000.0;
    let mut open = Vec::with_capacity(r.ids.len());
    for i in 0..r.ids.len() {
        let id = &r.ids[i];
        let mut rot_ref = 0.0;
        let mut lead = 0.0;
        let mut last_seen = 0u64;
        // (accumulated, last rotating instant, revolved)
        let mut episode: Option<(f64, u64, bool)> = None;
        let mut anchor = Point::default();
        let mut moving_from: Option<Point> = None;
        let mut trail: Vec<(u64, Point)> = Vec::new();
        for (k, frame) in frames.iter().enumerate() {
            let t = frame.t_ms;
            let s = snaps[k][i];
            if s.mode != Mode::On {
                episode = None;
                lead = 0.0;
                moving_from = None;
                trail.clear();
                continue;
            }
            if s.attached {
                rot_ref = s.rot;
                lead = 0.0;
                last_seen = t;
                episode = None;
                anchor = s.center;
                moving_from = None;
                trail = vec![(t, s.center)];
                continue;
            }
            if s.flipped {
                rot_ref = s.rot;
                lead = 0.0;
            }
            if s.seen {
                let dt = (t - last_seen) as f64;
                last_seen = t;
                let delta = shortest_delta(rot_ref, s.rot);
                rot_ref = s.rot;
                let turning = delta.abs() * 1000.0 > cfg.w_rest_deg_s * dt;
                let prev_lead = std::mem::take(&mut lead);
                if turning || episode.is_some() {
                    let start = if prev_lead * delta > 0.0 { prev_lead } else { 0.0 };
                    let (mut acc, mut last, mut revolved) = episode.unwrap_or((start, t, false));
                    acc += delta;
                    if turning {
                        last = t;
                    }
                    if acc.abs() >= cfg.theta_full_deg {
                        ev.push(tag(
                            t,
                            ActionKind::FullRevolution {
                                magnet: id.clone(),
                                direction: if acc > 0.0 { Direction::Cw } else { Direction::Ccw },
                            },
                        ));
                        acc = 0.0;
                        revolved = true;
                    }
                    episode = Some((acc, last, revolved));
                } else {
                    lead = delta;
                }

                trail.push((t, s.center));
                // Keep the newest sample at or before the window start.
                let keep_from = trail.iter().rposition(|(ts, _)| ts + cfg.t_settle_ms <= t).unwrap_or(0);
                trail.drain(..keep_from);
                if moving_from.is_none() && s.center.dist(anchor) >= cfg.eps_move {
                    moving_from = Some(anchor);
                }
                if let Some(from) = moving_from {
                    let settled = trail[0].0 + cfg.t_settle_ms <= t && trail.iter().all(|(_, p)| p.dist(s.center) <= rest_radius);
                    if settled {
                        if s.center.dist(from) >= cfg.eps_move {
                            ev.push(tag(
                                t,
                                ActionKind::SlideEnd {
                                    magnet: id.clone(),
                                    from,
                                    to: s.center,
                                },
                            ));
                        }
                        anchor = s.center;
                        moving_from = None;
                    }
                }
            }
            if let Some((acc, last, revolved)) = episode {
                if t - last >= cfg.t_spin_gap_ms {
                    episode = None;
                    if !revolved && acc.abs() >= cfg.theta_min_deg {
                        ev.push(tag(
                            t,
                            ActionKind::RotateDelta {
                                magnet: id.clone(),
                                deg: quantize(acc, 3),
                            },
                        ));
                    }
                }
            }
        }
        open.push(episode.filter(|&(acc, _, revolved)| !revolved && acc.abs() >= cfg.theta_min_deg).map(|e| e.0));
    }
    open
}

/// Returns, per magnet, the start of a hold still open at the end of the stream.
fn hands_pass(frames: &[ObservationFrame], snaps: &[Vec<Snap>], cfg: &RecognizerConfig, r: &Roster, ev: &mut Vec<Tagged>) -> Vec<Option<u64>> {
    let n = r.ids.len();
    // Per frame: (touched, hovered) flags for each magnet.
    let flags: Vec<Vec<(bool, bool)>> = frames
        .iter()
        .zip(snaps)
        .map(|(f, row)| {
            let mut fl = vec![(false, false); n];
            for h in &f.hands {
                let mut best: Option<(f64, usize)> = None;
                for (i, s) in row.iter().enumerate() {
                    if s.mode != Mode::On {
                        continue;
                    }
                    let d = s.center.dist(h.fingertip);
                    if d <= cfg.r_contact_factor * r.sizes[i] && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, i));
                    }
                }
                if let Some((_, i)) = best {
                    if h.contact {
                        fl[i].0 = true;
                    } else {
                        fl[i].1 = true;
                    }
                }
            }
            fl
        })
        .collect();

    let mut open = vec![None; n];
    for i in 0..n {
        let id = &r.ids[i];
        let mut press: Option<(u64, bool)> = None;
        let mut dwell: Option<(u64, bool)> = None;
        for (k, frame) in frames.iter().enumerate() {
            let t = frame.t_ms;
            let s = snaps[k][i];
            let (touched, hovered) = flags[k][i];
            if s.mode != Mode::On {
                if let Some((since, true)) = press {
                    ev.push(tag(
                        t,
                        ActionKind::HoldEnd {
                            magnet: id.clone(),
                            duration_ms: t - since,
                        },
                    ));
                }
                press = None;
                dwell = None;
                continue;
            }
            press = match (touched, press) {
                (true, None) => Some((t, false)),
                (true, Some((since, false))) if t - since >= cfg.t_hold_min_ms => {
                    ev.push(tag(t, ActionKind::HoldBegin { magnet: id.clone() }));
                    Some((since, true))
                }
                (true, p) => p,
                (false, Some((since, true))) => {
                    ev.push(tag(
                        t,
                        ActionKind::HoldEnd {
                            magnet: id.clone(),
                            duration_ms: t - since,
                        },
                    ));
                    None
                }
                (false, Some((since, false))) => {
                    if t - since <= cfg.t_tap_max_ms {
                        ev.push(tag(t, ActionKind::Tap { magnet: id.clone() }));
                    }
                    None
                }
                (false, None) => None,
            };
            dwell = if hovered && !touched && s.seen {
                let (start, mut fired) = dwell.unwrap_or((t, false));
                if !fired && t - start >= cfg.t_point_dwell_ms {
                    fired = true;
                    ev.push(tag(t, ActionKind::PointDwell { magnet: id.clone() }));
                }
                Some((start, fired))
            } else {
                None
            };
        }
        open[i] = press.filter(|p| p.1).map(|p| p.0);
    }
    open
}

fn proximity_pass(frames: &[ObservationFrame], snaps: &[Vec<Snap>], cfg: &RecognizerConfig, r: &Roster, ev: &mut Vec<Tagged>) {
    let carriers: Vec<usize> = (0..r.ids.len()).filter(|&i| r.roles[i] == MagnetRole::NodeCarrier).collect();
    let mut latch: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for (k, frame) in frames.iter().enumerate() {
        let row = &snaps[k];
        for (x, &a) in carriers.iter().enumerate() {
            for &b in &carriers[x + 1..] {
                if row[a].mode != Mode::On || row[b].mode != Mode::On {
                    latch.remove(&(a, b));
                    continue;
                }
                let d = row[a].center.dist(row[b].center);
                let size = r.sizes[a].max(r.sizes[b]);
                let close = d < cfg.d_near_factor * size;
                let prev = latch.insert((a, b), close);
                match prev {
                    None => {}
                    Some(false) if close => ev.push(tag(
                        frame.t_ms,
                        ActionKind::BringCloser {
                            a: r.ids[a].clone(),
                            b: r.ids[b].clone(),
                        },
                    )),
                    Some(true) if d > cfg.d_near_release_factor * size => {
                        ev.push(tag(
                            frame.t_ms,
                            ActionKind::MovedApart {
                                a: r.ids[a].clone(),
                                b: r.ids[b].clone(),
                            },
                        ));
                    }
                    Some(was) => {
                        latch.insert((a, b), was);
                    }
                }
            }
        }
    }
}

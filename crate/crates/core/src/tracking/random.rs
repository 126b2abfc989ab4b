//! Seeded script generators for the randomized suites.

use rand::seq::SliceRandom;
use rand::Rng;

use super::script::{GestureScript, ScriptStep};
use super::ObservationFrame;
use crate::geom::Point;
use crate::ids::MagnetId;
use crate::story::{MagnetRole, Side, StoryDocument};

#[derive(Debug, Clone, Copy)]
pub struct RandomScriptParams {
    /// Number of roster magnets used.
    pub magnets: usize,
    pub duration_ms: u64,
    pub rate_hz: f64,
}

impl Default for RandomScriptParams {
    fn default() -> Self {
        RandomScriptParams {
            magnets: 6,
            duration_ms: 20_000,
            rate_hz: 60.0,
        }
    }
}

fn rand_point<R: Rng>(rng: &mut R) -> Point {
    Point::new(rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98)).quantized()
}

fn near<R: Rng>(rng: &mut R, p: Point, spread: f64) -> Point {
    Point::new(p.x + rng.gen_range(-spread..=spread), p.y + rng.gen_range(-spread..=spread))
        .clamp_inset(0.01)
        .quantized()
}

/// Unconstrained valid script: random placements around shared hot spots so
/// that proximity, stacking, flips, covers and hand contacts all occur, with
/// durations straddling every recognizer threshold.
pub fn random_script<R: Rng>(rng: &mut R, story: &StoryDocument, params: RandomScriptParams) -> GestureScript {
    let mut hot: Vec<Point> = (0..6).map(|_| rand_point(rng)).collect();
    hot.extend(story.registration_slots.iter().take(3).map(|s| s.center));
    let pick = |rng: &mut R, hot: &[Point]| -> Point {
        let spread = *[0.0, 0.005, 0.02, 0.06].choose(rng).unwrap();
        let base = *hot.choose(rng).unwrap();
        near(rng, base, spread)
    };
    let end = params.duration_ms;
    let mut steps = Vec::new();
    // Node-carriers first; from three magnets on, up to two widgets take the last seats.
    let carriers = story.magnets.iter().filter(|m| m.role == MagnetRole::NodeCarrier);
    let widgets: Vec<_> = story.magnets.iter().filter(|m| m.role == MagnetRole::Widget).collect();
    let seats = if params.magnets >= 3 { widgets.len().min(2).min(params.magnets - 2) } else { 0 };
    let chosen: Vec<_> = carriers.take(params.magnets - seats).chain(widgets.into_iter().take(seats)).collect();
    for spec in chosen {
        let m = &spec.magnet_id;
        let mut t = rng.gen_range(0..2000u64);
        while t + 200 < end {
            let p0 = t;
            let p1 = (p0 + rng.gen_range(150..9000u64)).min(end);
            let at = pick(rng, &hot);
            steps.push(ScriptStep::Place {
                magnet: m.clone(),
                side: if rng.gen_bool(0.5) { Side::A } else { Side::B },
                at,
                t_ms: p0,
                rot_deg: (rng.gen_range(0.0..360.0f64) * 1000.0).round() / 1000.0,
            });
            // Motion lane.
            let mut c = p0 + rng.gen_range(0..600u64);
            while c + 40 < p1 {
                let d = rng.gen_range(30..1800u64).min(p1 - c);
                match rng.gen_range(0..4) {
                    0 => steps.push(ScriptStep::Glide {
                        magnet: m.clone(),
                        from: None,
                        to: pick(rng, &hot),
                        t0_ms: c,
                        t1_ms: c + d,
                    }),
                    1 => steps.push(ScriptStep::Spin {
                        magnet: m.clone(),
                        delta_deg: (rng.gen_range(-540.0..540.0f64) * 10.0).round() / 10.0,
                        t0_ms: c,
                        t1_ms: c + d,
                    }),
                    2 => steps.push(ScriptStep::Flip { magnet: m.clone(), t_ms: c }),
                    _ => {}
                }
                c += d + rng.gen_range(0..900u64);
            }
            // Hand lane.
            let mut c = p0 + rng.gen_range(0..1500u64);
            while c + 40 < p1 {
                let d = rng.gen_range(40..1500u64).min(p1 - c);
                match rng.gen_range(0..3) {
                    0 => steps.push(ScriptStep::Touch {
                        magnet: m.clone(),
                        t0_ms: c,
                        t1_ms: c + d,
                    }),
                    1 => steps.push(ScriptStep::Hover {
                        magnet: m.clone(),
                        t0_ms: c,
                        t1_ms: c + d,
                    }),
                    _ => {}
                }
                c += d + rng.gen_range(0..2000u64);
            }
            // Occlusion lane.
            let mut c = p0 + rng.gen_range(0..3000u64);
            while c + 40 < p1 {
                let d = rng.gen_range(20..1200u64).min(p1 - c);
                steps.push(ScriptStep::Occlude {
                    magnet: m.clone(),
                    t0_ms: c,
                    t1_ms: c + d,
                });
                c += d + rng.gen_range(50..4000u64);
            }
            if p1 >= end {
                break;
            }
            steps.push(ScriptStep::Remove { magnet: m.clone(), t_ms: p1 });
            t = p1 + rng.gen_range(0..1500u64);
        }
    }
    for _ in 0..rng.gen_range(0..4) {
        let t0 = rng.gen_range(0..end.max(1));
        steps.push(ScriptStep::Handoff {
            at: pick(rng, &hot),
            t0_ms: t0,
            t1_ms: t0 + rng.gen_range(100..2000u64),
        });
    }
    GestureScript {
        rate_hz: params.rate_hz,
        end_ms: Some(end),
        steps,
    }
}

/// Cell positions on the storyboard, ordered so that a magnet gliding in from
/// the registration strip never passes an occupied cell.
fn storyboard_cells() -> Vec<Point> {
    let mut cells = Vec::new();
    for col in 0..4 {
        for row in 0..3 {
            cells.push(Point::new(0.1 + 0.2 * col as f64, 0.2 + 0.3 * row as f64));
        }
    }
    cells
}

struct Placed {
    magnet: MagnetId,
    cell: Point,
    side: Side,
    on_board: bool,
}

/// Story-like script whose every duration and gap clears the recognizer and
/// mapper thresholds by a wide margin, so the 30 Hz and 60 Hz expansions yield
/// the same commands. Registers up to eight node-carriers through their slots,
/// then performs a random sequence of isolated gestures.
pub fn margin_script<R: Rng>(rng: &mut R, story: &StoryDocument, rate_hz: f64) -> GestureScript {
    let carriers: Vec<&MagnetId> = story
        .magnets
        .iter()
        .filter(|m| m.role == MagnetRole::NodeCarrier)
        .map(|m| &m.magnet_id)
        .collect();
    let widget = story.magnets.iter().find(|m| m.role == MagnetRole::Widget).map(|m| m.magnet_id.clone());
    let slots = &story.registration_slots;
    let k = rng.gen_range(3..=carriers.len().min(slots.len()).min(8));
    let cells = storyboard_cells();
    let mut steps = Vec::new();
    let mut placed: Vec<Placed> = Vec::new();
    let mut t = 100u64;
    for i in 0..k {
        let m = carriers[i].clone();
        steps.push(ScriptStep::Place {
            magnet: m.clone(),
            side: Side::A,
            at: slots[i].center,
            t_ms: t,
            rot_deg: 0.0,
        });
        steps.push(ScriptStep::Glide {
            magnet: m.clone(),
            from: None,
            to: cells[i],
            t0_ms: t + 900,
            t1_ms: t + 1700,
        });
        placed.push(Placed {
            magnet: m,
            cell: cells[i],
            side: Side::A,
            on_board: true,
        });
        t += 2600;
    }

    const GAP: u64 = 2600;
    let actions = rng.gen_range(6..=12);
    for _ in 0..actions {
        let ai = rng.gen_range(0..placed.len());
        let bi = if ai + 1 < placed.len() && (ai == 0 || rng.gen_bool(0.5)) { ai + 1 } else { ai - 1 };
        if !placed[ai].on_board {
            // Bring it back before doing anything else.
            let p = &mut placed[ai];
            steps.push(ScriptStep::Place {
                magnet: p.magnet.clone(),
                side: p.side,
                at: p.cell,
                t_ms: t,
                rot_deg: 0.0,
            });
            p.on_board = true;
            t += GAP;
            continue;
        }
        let a = placed[ai].magnet.clone();
        let b_ready = placed[bi].on_board;
        let b = placed[bi].magnet.clone();
        let end = match rng.gen_range(0..10) {
            0 if b_ready => {
                steps.push(ScriptStep::Touch { magnet: a, t0_ms: t, t1_ms: t + 150 });
                steps.push(ScriptStep::Touch {
                    magnet: b,
                    t0_ms: t + 900,
                    t1_ms: t + 1050,
                });
                t + 1050
            }
            1 => {
                steps.push(ScriptStep::Touch {
                    magnet: a,
                    t0_ms: t,
                    t1_ms: t + 1200,
                });
                t + 1200
            }
            2 if b_ready => {
                steps.push(ScriptStep::Touch {
                    magnet: a,
                    t0_ms: t,
                    t1_ms: t + 2600,
                });
                let delta = if rng.gen_bool(0.5) { 60.0 } else { -60.0 };
                steps.push(ScriptStep::Spin {
                    magnet: b,
                    delta_deg: delta,
                    t0_ms: t + 700,
                    t1_ms: t + 1400,
                });
                t + 2600
            }
            3 => {
                let delta = rng.gen_range(3..=15) as f64 * 10.0 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                steps.push(ScriptStep::Spin {
                    magnet: a,
                    delta_deg: delta,
                    t0_ms: t,
                    t1_ms: t + 1000,
                });
                t + 1000
            }
            4 => {
                let delta = if rng.gen_bool(0.5) { 400.0 } else { -400.0 };
                steps.push(ScriptStep::Spin {
                    magnet: a,
                    delta_deg: delta,
                    t0_ms: t,
                    t1_ms: t + 2000,
                });
                t + 2000
            }
            5 => {
                steps.push(ScriptStep::Flip { magnet: a, t_ms: t });
                placed[ai].side = placed[ai].side.flipped();
                t
            }
            6 => {
                steps.push(ScriptStep::Occlude {
                    magnet: a.clone(),
                    t0_ms: t,
                    t1_ms: t + 1200,
                });
                steps.push(ScriptStep::Hover {
                    magnet: a,
                    t0_ms: t,
                    t1_ms: t + 1200,
                });
                t + 1200
            }
            7 => {
                steps.push(ScriptStep::Hover {
                    magnet: a,
                    t0_ms: t,
                    t1_ms: t + 1300,
                });
                t + 1300
            }
            8 if b_ready => {
                let (pa, pb) = (placed[ai].cell, placed[bi].cell);
                let d = pa.dist(pb);
                let close = pb.lerp(pa, 0.05 / d).quantized();
                steps.push(ScriptStep::Glide {
                    magnet: a.clone(),
                    from: None,
                    to: close,
                    t0_ms: t,
                    t1_ms: t + 800,
                });
                steps.push(ScriptStep::Glide {
                    magnet: a,
                    from: None,
                    to: pa,
                    t0_ms: t + 1800,
                    t1_ms: t + 2600,
                });
                t + 2600
            }
            9 if widget.is_some() && rng.gen_bool(0.5) => {
                let w = widget.clone().unwrap();
                steps.push(ScriptStep::Place {
                    magnet: w.clone(),
                    side: Side::A,
                    at: placed[ai].cell,
                    t_ms: t,
                    rot_deg: 0.0,
                });
                steps.push(ScriptStep::Remove { magnet: w, t_ms: t + 1500 });
                t + 1500
            }
            9 => {
                steps.push(ScriptStep::Remove { magnet: a, t_ms: t });
                placed[ai].on_board = false;
                t
            }
            _ => {
                steps.push(ScriptStep::Hover {
                    magnet: a,
                    t0_ms: t,
                    t1_ms: t + 1300,
                });
                t + 1300
            }
        };
        t = end + GAP;
    }
    GestureScript {
        rate_hz,
        end_ms: Some(t),
        steps,
    }
}

/// Static scene: `count` node-carriers placed at spaced cells at time zero.
pub fn static_script(story: &StoryDocument, count: usize, duration_ms: u64, rate_hz: f64) -> GestureScript {
    let cells = storyboard_cells();
    let steps = story
        .magnets
        .iter()
        .filter(|m| m.role == MagnetRole::NodeCarrier)
        .take(count.min(cells.len()))
        .zip(cells)
        .map(|(m, at)| ScriptStep::Place {
            magnet: m.magnet_id.clone(),
            side: Side::A,
            at,
            t_ms: 0,
            rot_deg: 90.0,
        })
        .collect();
    GestureScript {
        rate_hz,
        end_ms: Some(duration_ms),
        steps,
    }
}

/// Drops each marker for random spans shorter than `max_dropout_ms`, starting
/// after `settle_ms`, and displaces every pose by less than `jitter` (and the
/// rotation by under half a degree).
pub fn perturb<R: Rng>(rng: &mut R, frames: &[ObservationFrame], settle_ms: u64, max_dropout_ms: u64, jitter: f64) -> Vec<ObservationFrame> {
    let Some(last) = frames.last() else { return vec![] };
    let mut ids: Vec<u32> = frames.iter().flat_map(|f| f.markers.iter().map(|m| m.fiducial_id)).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut dropouts: Vec<(u32, u64, u64)> = Vec::new();
    for &id in &ids {
        let mut t = settle_ms + rng.gen_range(0..1000u64);
        while t < last.t_ms {
            let len = rng.gen_range(1..max_dropout_ms);
            dropouts.push((id, t, t + len));
            t += len + rng.gen_range(50..2000u64);
        }
    }
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.markers.retain(|m| !dropouts.iter().any(|&(id, a, b)| id == m.fiducial_id && a <= f.t_ms && f.t_ms < b));
            for m in &mut f.markers {
                let r = rng.gen_range(0.0..jitter);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                m.center = m.center.offset(r * phi.cos(), r * phi.sin()).clamp_unit();
                m.rotation_deg += rng.gen_range(-0.5..0.5);
            }
            f.canonical()
        })
        .collect()
}

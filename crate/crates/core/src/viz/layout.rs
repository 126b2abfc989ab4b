//! Deterministic scene placement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{primary_position, q, VizError, VizState};
use crate::geom::{convex_hull, Point};
use crate::ids::{GroupId, MagnetId, NodeId};
use crate::story::{NodeKind, StoryDocument};

const GOLDEN_ANGLE_DEG: f64 = 137.507_764_050_037_85;
const RING_FACTOR: f64 = 2.5;
const HULL_PAD: f64 = 0.02;
const HULL_SAMPLES: usize = 16;
const NUDGE_STEPS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlacement {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildBubble {
    pub center: Point,
    pub radius: f64,
    pub nodes: BTreeMap<String, Point>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub nodes: BTreeMap<NodeId, NodePlacement>,
    pub groups: BTreeMap<GroupId, Vec<Point>>,
    pub children: BTreeMap<NodeId, ChildBubble>,
}

fn overlaps(c: Point, r: f64, placed: &BTreeMap<NodeId, NodePlacement>) -> bool {
    placed.values().any(|p| p.center.dist(c) < p.radius + r)
}

/// Places every visible node. Primary nodes follow their magnet; a visible
/// primary without a live pose falls back to its last projected position.
pub fn layout(
    state: &VizState,
    story: &StoryDocument,
    magnet_poses: &BTreeMap<MagnetId, Point>,
) -> Result<SceneLayout, VizError> {
    let base = story.node_radius();
    let mut out = SceneLayout::default();
    let radius_of = |id: &NodeId| {
        let spec = story.node(id).expect("state nodes come from the story");
        base * spec.base_scale * state.nodes[id].scale
    };

    for spec in story.primary_nodes() {
        let id = &spec.node_id;
        if !state.node_visible(id) {
            continue;
        }
        let pose = state.magnet_for_node(id).and_then(|m| magnet_poses.get(m));
        let center = match (pose, state.nodes[id].position) {
            (Some(p), _) => primary_position(*p, base),
            (None, Some(p)) => p,
            (None, None) => return Err(VizError::MissingPose(id.clone())),
        };
        out.nodes.insert(
            id.clone(),
            NodePlacement {
                center,
                radius: radius_of(id),
            },
        );
    }

    let mut secondaries: Vec<&NodeId> = story
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Secondary && state.node_visible(&n.node_id))
        .map(|n| &n.node_id)
        .collect();
    secondaries.sort();
    for (j, id) in secondaries.into_iter().enumerate() {
        let spec = story.node(id).expect("present");
        let anchors: Vec<Point> = spec
            .anchors
            .iter()
            .filter_map(|a| out.nodes.get(a).map(|p| p.center))
            .collect();
        let centroid = if anchors.is_empty() {
            Point::new(0.5, 0.5)
        } else {
            let k = anchors.len() as f64;
            Point::new(
                anchors.iter().map(|p| p.x).sum::<f64>() / k,
                anchors.iter().map(|p| p.y).sum::<f64>() / k,
            )
        };
        let r = radius_of(id);
        let theta = (j as f64 * GOLDEN_ANGLE_DEG).to_radians();
        let mut rho = RING_FACTOR * base;
        let mut center = centroid;
        for _ in 0..NUDGE_STEPS {
            center = Point::new(centroid.x + rho * theta.cos(), centroid.y + rho * theta.sin()).clamp_inset(r).quantized();
            if !overlaps(center, r, &out.nodes) {
                break;
            }
            rho += 0.5 * base;
        }
        out.nodes.insert(
            id.clone(),
            NodePlacement {
                center,
                radius: r,
            },
        );
    }

    for (g, members) in &state.groups {
        let mut pts = Vec::new();
        for m in members {
            let Some(p) = out.nodes.get(m) else { continue };
            let rr = p.radius + HULL_PAD;
            for k in 0..HULL_SAMPLES {
                let a = std::f64::consts::TAU * k as f64 / HULL_SAMPLES as f64;
                pts.push(Point::new(q(p.center.x + rr * a.cos()), q(p.center.y + rr * a.sin())));
            }
        }
        out.groups.insert(g.clone(), convex_hull(&pts));
    }

    for (id, view) in &state.nodes {
        if !view.child_visible {
            continue;
        }
        let Some(parent) = out.nodes.get(id) else { continue };
        let spec = story.node(id).expect("present");
        let Some(child) = spec.child_network.as_ref().and_then(|c| story.child_network(c)) else {
            continue;
        };
        let radius = 1.5 * base;
        let center = parent.center.offset(3.0 * base, 0.0).clamp_inset(radius).quantized();
        let k = child.nodes.len().max(1) as f64;
        let nodes = child
            .nodes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let a = std::f64::consts::TAU * i as f64 / k;
                (
                    c.id.clone(),
                    Point::new(q(center.x + 0.6 * radius * a.cos()), q(center.y + 0.6 * radius * a.sin())),
                )
            })
            .collect();
        out.children.insert(id.clone(), ChildBubble { center, radius, nodes });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{CommandKind, InteractionCommand};
    use crate::samples::{minimal_story, wwi_magnet, wwi_story};

    fn apply(s: &mut VizState, story: &StoryDocument, kind: CommandKind) {
        s.apply_command(story, &InteractionCommand::new(0, kind)).unwrap();
    }

    #[test]
    fn single_node_sits_above_its_magnet() {
        let mut story = minimal_story();
        for m in &mut story.magnets {
            m.diameter = 1.0 / 30.0;
        }
        let mut s = VizState::initial(&story);
        let node = NodeId::new("n1");
        let magnet = story.magnets[0].magnet_id.clone();
        apply(&mut s, &story, CommandKind::Register { magnet: magnet.clone(), node: node.clone() });
        apply(&mut s, &story, CommandKind::ShowNode { node: node.clone() });
        let poses = BTreeMap::from([(magnet, Point::new(0.5, 0.5))]);
        let l = layout(&s, &story, &poses).unwrap();
        let c = l.nodes[&node].center;
        assert!((c.x - 0.5).abs() < 1e-9 && (c.y - 0.475).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn empty_state_has_empty_layout() {
        let story = wwi_story();
        let l = layout(&VizState::initial(&story), &story, &BTreeMap::new()).unwrap();
        assert!(l.nodes.is_empty() && l.groups.is_empty());
    }

    #[test]
    fn missing_pose_is_reported() {
        let story = wwi_story();
        let mut s = VizState::initial(&story);
        apply(&mut s, &story, CommandKind::ShowNode { node: "uk".into() });
        assert!(matches!(layout(&s, &story, &BTreeMap::new()), Err(VizError::MissingPose(_))));
    }

    #[test]
    fn secondaries_take_distinct_slots() {
        let story = wwi_story();
        let mut s = VizState::initial(&story);
        let mut poses = BTreeMap::new();
        for (node, at) in [("uk", (0.3, 0.5)), ("france", (0.4, 0.5)), ("serbia", (0.7, 0.6))] {
            let m = wwi_magnet(node);
            apply(&mut s, &story, CommandKind::Register { magnet: m.clone(), node: node.into() });
            apply(&mut s, &story, CommandKind::ShowNode { node: node.into() });
            poses.insert(m, Point::new(at.0, at.1));
        }
        let a = layout(&s, &story, &poses).unwrap();
        assert_eq!(a, layout(&s, &story, &poses).unwrap());
        assert!(a.nodes.contains_key(&NodeId::new("belgium")));
        assert!(a.nodes.contains_key(&NodeId::new("montenegro")));
        let placed: Vec<_> = a.nodes.values().collect();
        for (i, p) in placed.iter().enumerate() {
            for o in &placed[i + 1..] {
                assert!(p.center.dist(o.center) >= p.radius + o.radius - 1e-9, "{p:?} {o:?}");
            }
        }
    }
}

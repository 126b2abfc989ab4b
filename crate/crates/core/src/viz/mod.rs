//! Event-sourced visualization state.
//!
//! [`VizState`] is only ever changed through [`VizState::apply_command`],
//! which either applies a command completely (one revision step, one
//! [`StateDiff`]) or rejects it and leaves the state untouched.

mod layout;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{quantize, Point, COORD_DECIMALS};
use crate::ids::{GroupId, LinkId, MagnetId, NodeId};
use crate::mapper::{CommandKind, InteractionCommand};
use crate::story::{AnchorMode, LinkDirection, NodeKind, Reveal, StoryDocument};

pub use layout::{layout, ChildBubble, NodePlacement, SceneLayout};

pub const SCALE_MIN: f64 = 0.5;
pub const SCALE_MAX: f64 = 2.0;
pub const WIDTH_MIN: f64 = 0.25;
pub const WIDTH_MAX: f64 = 4.0;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("illegal {command}: {reason}")]
    IllegalCommand { command: &'static str, reason: String },
    #[error("no magnet pose for visible node {0}")]
    MissingPose(NodeId),
    #[error("diff does not apply: {0}")]
    Diff(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
#[error("command {index}: {source}")]
pub struct ReplayError {
    pub index: usize,
    #[source]
    pub source: VizError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeView {
    pub visible: bool,
    /// Projected position of a primary node; secondaries are placed by [`layout`].
    pub position: Option<Point>,
    pub scale: f64,
    pub state_index: usize,
    pub highlighted: bool,
    pub annotation_visible: bool,
    pub child_visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkView {
    pub visible: bool,
    pub type_index: usize,
    pub direction: LinkDirection,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VizState {
    pub story_id: String,
    pub revision: u64,
    pub nodes: BTreeMap<NodeId, NodeView>,
    pub links: BTreeMap<LinkId, LinkView>,
    pub groups: BTreeMap<GroupId, BTreeSet<NodeId>>,
    pub bindings: BTreeMap<MagnetId, NodeId>,
    pub command_log: Vec<InteractionCommand>,
}

/// Everything one applied command changed. Nodes and links are reported with
/// their full new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDiff {
    pub revision: u64,
    pub command: InteractionCommand,
    pub nodes: BTreeMap<NodeId, NodeView>,
    pub links: BTreeMap<LinkId, LinkView>,
    pub groups_added: BTreeMap<GroupId, BTreeSet<NodeId>>,
    pub groups_changed: BTreeMap<GroupId, BTreeSet<NodeId>>,
    pub groups_removed: Vec<GroupId>,
    pub bindings: BTreeMap<MagnetId, Option<NodeId>>,
}

fn illegal(command: &'static str, reason: impl Into<String>) -> VizError {
    VizError::IllegalCommand {
        command,
        reason: reason.into(),
    }
}

/// Position of a primary node projected next to its magnet.
pub fn primary_position(magnet_center: Point, radius: f64) -> Point {
    magnet_center.offset(0.0, -1.5 * radius).clamp_unit().quantized()
}

impl VizState {
    pub fn initial(story: &StoryDocument) -> Self {
        let nodes = story
            .nodes
            .iter()
            .map(|n| {
                (
                    n.node_id.clone(),
                    NodeView {
                        visible: false,
                        position: None,
                        scale: 1.0,
                        state_index: n.initial_state_index,
                        highlighted: false,
                        annotation_visible: false,
                        child_visible: false,
                    },
                )
            })
            .collect();
        let links = story
            .links
            .iter()
            .map(|l| {
                (
                    l.link_id.clone(),
                    LinkView {
                        visible: false,
                        type_index: l.initial_type_index,
                        direction: l.directed,
                        width: 1.0,
                    },
                )
            })
            .collect();
        VizState {
            story_id: story.story_id.clone(),
            revision: 0,
            nodes,
            links,
            groups: BTreeMap::new(),
            bindings: BTreeMap::new(),
            command_log: Vec::new(),
        }
    }

    pub fn node_visible(&self, id: &NodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.visible)
    }

    pub fn link_visible(&self, id: &LinkId) -> bool {
        self.links.get(id).is_some_and(|l| l.visible)
    }

    pub fn group_of(&self, node: &NodeId) -> Option<&GroupId> {
        self.groups.iter().find(|(_, m)| m.contains(node)).map(|(g, _)| g)
    }

    pub fn node_for_magnet(&self, magnet: &MagnetId) -> Option<&NodeId> {
        self.bindings.get(magnet)
    }

    pub fn magnet_for_node(&self, node: &NodeId) -> Option<&MagnetId> {
        self.bindings.iter().find(|(_, n)| *n == node).map(|(m, _)| m)
    }

    /// Applies one command. On error the state is unchanged.
    pub fn apply_command(&mut self, story: &StoryDocument, cmd: &InteractionCommand) -> Result<StateDiff, VizError> {
        let mut next = Working {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            groups: self.groups.clone(),
            bindings: self.bindings.clone(),
        };
        next.apply(story, &cmd.kind)?;
        next.auto_reveal(story);

        let diff = StateDiff {
            revision: self.revision + 1,
            command: cmd.clone(),
            nodes: changed(&self.nodes, &next.nodes),
            links: changed(&self.links, &next.links),
            groups_added: next
                .groups
                .iter()
                .filter(|(g, _)| !self.groups.contains_key(*g))
                .map(|(g, m)| (g.clone(), m.clone()))
                .collect(),
            groups_changed: next
                .groups
                .iter()
                .filter(|(g, m)| self.groups.get(*g).is_some_and(|old| old != *m))
                .map(|(g, m)| (g.clone(), m.clone()))
                .collect(),
            groups_removed: self.groups.keys().filter(|g| !next.groups.contains_key(*g)).cloned().collect(),
            bindings: self
                .bindings
                .keys()
                .chain(next.bindings.keys())
                .filter(|m| self.bindings.get(*m) != next.bindings.get(*m))
                .map(|m| (m.clone(), next.bindings.get(m).cloned()))
                .collect(),
        };
        self.nodes = next.nodes;
        self.links = next.links;
        self.groups = next.groups;
        self.bindings = next.bindings;
        self.revision += 1;
        self.command_log.push(cmd.clone());
        Ok(diff)
    }

    /// Runs the reveal pass on its own. Returns true when anything changed.
    /// States produced by [`VizState::apply_command`] are already at the fixpoint.
    pub fn auto_reveal(&mut self, story: &StoryDocument) -> bool {
        let mut w = Working {
            nodes: std::mem::take(&mut self.nodes),
            links: std::mem::take(&mut self.links),
            groups: std::mem::take(&mut self.groups),
            bindings: std::mem::take(&mut self.bindings),
        };
        let changed = w.auto_reveal(story);
        self.nodes = w.nodes;
        self.links = w.links;
        self.groups = w.groups;
        self.bindings = w.bindings;
        changed
    }

    /// Applies a diff produced against this state's revision.
    pub fn apply_diff(&mut self, diff: &StateDiff) -> Result<(), VizError> {
        if diff.revision != self.revision + 1 {
            return Err(VizError::Diff(format!(
                "diff revision {} on state revision {}",
                diff.revision, self.revision
            )));
        }
        for id in diff.nodes.keys() {
            if !self.nodes.contains_key(id) {
                return Err(VizError::Diff(format!("unknown node {id}")));
            }
        }
        for id in diff.links.keys() {
            if !self.links.contains_key(id) {
                return Err(VizError::Diff(format!("unknown link {id}")));
            }
        }
        for (id, v) in &diff.nodes {
            self.nodes.insert(id.clone(), v.clone());
        }
        for (id, v) in &diff.links {
            self.links.insert(id.clone(), v.clone());
        }
        for g in &diff.groups_removed {
            self.groups.remove(g);
        }
        for (g, m) in diff.groups_added.iter().chain(&diff.groups_changed) {
            self.groups.insert(g.clone(), m.clone());
        }
        for (m, n) in &diff.bindings {
            match n {
                Some(n) => self.bindings.insert(m.clone(), n.clone()),
                None => self.bindings.remove(m),
            };
        }
        self.revision = diff.revision;
        self.command_log.push(diff.command.clone());
        Ok(())
    }

    /// Canonical serialization: compact JSON with sorted object keys.
    pub fn snapshot(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("state serializes");
        serde_json::to_vec(&value).expect("value serializes")
    }

    pub fn parse_snapshot(bytes: &[u8]) -> Result<VizState, VizError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Checks every state invariant against the story. Returns all violations.
    pub fn validate(&self, story: &StoryDocument) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.revision != self.command_log.len() as u64 {
            errs.push(format!(
                "revision {} but {} logged commands",
                self.revision,
                self.command_log.len()
            ));
        }
        if self.nodes.len() != story.nodes.len() || self.links.len() != story.links.len() {
            errs.push("node or link set differs from story".into());
        }
        for spec in &story.nodes {
            let Some(v) = self.nodes.get(&spec.node_id) else {
                errs.push(format!("node {} missing", spec.node_id));
                continue;
            };
            let id = &spec.node_id;
            if !(SCALE_MIN..=SCALE_MAX).contains(&v.scale) {
                errs.push(format!("node {id} scale {} out of range", v.scale));
            }
            if v.state_index >= spec.states.len() {
                errs.push(format!("node {id} state index {} out of range", v.state_index));
            }
            if v.annotation_visible && (!v.visible || spec.annotation.is_none()) {
                errs.push(format!("node {id} shows an annotation it cannot show"));
            }
            if v.child_visible && (!v.visible || spec.child_network.is_none()) {
                errs.push(format!("node {id} shows a child network it cannot show"));
            }
            if v.highlighted && !v.visible {
                errs.push(format!("hidden node {id} highlighted"));
            }
            if spec.kind == NodeKind::Secondary && v.visible != anchor_predicate(spec, &self.nodes) {
                errs.push(format!("secondary {id} visibility disagrees with its anchors"));
            }
        }
        for spec in &story.links {
            let Some(v) = self.links.get(&spec.link_id) else {
                errs.push(format!("link {} missing", spec.link_id));
                continue;
            };
            let id = &spec.link_id;
            let ends = self.node_visible(&spec.source) && self.node_visible(&spec.target);
            if v.visible && !ends {
                errs.push(format!("link {id} visible with a hidden endpoint"));
            }
            if spec.reveal == Reveal::Auto && v.visible != ends {
                errs.push(format!("auto link {id} visibility disagrees with its endpoints"));
            }
            if !(WIDTH_MIN..=WIDTH_MAX).contains(&v.width) {
                errs.push(format!("link {id} width {} out of range", v.width));
            }
            if v.type_index >= spec.types.len() {
                errs.push(format!("link {id} type index {} out of range", v.type_index));
            }
        }
        let mut seen = BTreeSet::new();
        for (g, members) in &self.groups {
            if members.len() < 2 {
                errs.push(format!("group {g} has {} members", members.len()));
            }
            for m in members {
                if !self.node_visible(m) {
                    errs.push(format!("group {g} member {m} not visible"));
                }
                if !seen.insert(m) {
                    errs.push(format!("node {m} in more than one group"));
                }
            }
        }
        let mut bound = BTreeSet::new();
        for (m, n) in &self.bindings {
            if story.magnet(m).is_none() || story.node(n).is_none_or(|s| s.kind != NodeKind::Primary) {
                errs.push(format!("binding {m} -> {n} does not resolve to a primary node"));
            }
            if !bound.insert(n) {
                errs.push(format!("node {n} bound twice"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// Folds a command trace from the initial state.
pub fn replay(story: &StoryDocument, trace: &[InteractionCommand]) -> Result<VizState, ReplayError> {
    let mut state = VizState::initial(story);
    for (index, cmd) in trace.iter().enumerate() {
        state
            .apply_command(story, cmd)
            .map_err(|source| ReplayError { index, source })?;
    }
    Ok(state)
}

/// Visibility a secondary node must have given the current node views.
pub fn anchor_predicate(spec: &crate::story::NodeSpec, nodes: &BTreeMap<NodeId, NodeView>) -> bool {
    let vis = |a: &NodeId| nodes.get(a).is_some_and(|v| v.visible);
    match spec.anchor_mode {
        AnchorMode::All => !spec.anchors.is_empty() && spec.anchors.iter().all(vis),
        AnchorMode::Any => spec.anchors.iter().any(vis),
    }
}

fn changed<K: Ord + Clone, V: PartialEq + Clone>(old: &BTreeMap<K, V>, new: &BTreeMap<K, V>) -> BTreeMap<K, V> {
    new.iter()
        .filter(|(k, v)| old.get(*k) != Some(*v))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

fn clamp_mul(v: f64, factor: f64, lo: f64, hi: f64) -> f64 {
    quantize((v * factor).clamp(lo, hi), 9)
}

struct Working {
    nodes: BTreeMap<NodeId, NodeView>,
    links: BTreeMap<LinkId, LinkView>,
    groups: BTreeMap<GroupId, BTreeSet<NodeId>>,
    bindings: BTreeMap<MagnetId, NodeId>,
}

impl Working {
    fn visible_node(&mut self, story: &StoryDocument, id: &NodeId, cmd: &'static str) -> Result<&mut NodeView, VizError> {
        if story.node(id).is_none() {
            return Err(VizError::UnknownTarget(format!("node {id}")));
        }
        let v = self.nodes.get_mut(id).ok_or_else(|| VizError::UnknownTarget(format!("node {id}")))?;
        if !v.visible {
            return Err(illegal(cmd, format!("node {id} is hidden")));
        }
        Ok(v)
    }

    fn link_between(&self, story: &StoryDocument, a: &NodeId, b: &NodeId) -> Result<LinkId, VizError> {
        story
            .link_between(a, b)
            .map(|l| l.link_id.clone())
            .ok_or_else(|| VizError::UnknownTarget(format!("link {a}-{b}")))
    }

    fn visible_link(&mut self, story: &StoryDocument, a: &NodeId, b: &NodeId, cmd: &'static str) -> Result<&mut LinkView, VizError> {
        let id = self.link_between(story, a, b)?;
        let v = self.links.get_mut(&id).expect("story links present in state");
        if !v.visible {
            return Err(illegal(cmd, format!("link {id} is hidden")));
        }
        Ok(v)
    }

    fn apply(&mut self, story: &StoryDocument, kind: &CommandKind) -> Result<(), VizError> {
        let name = kind.name();
        for n in kind.nodes() {
            if story.node(n).is_none() {
                return Err(VizError::UnknownTarget(format!("node {n}")));
            }
        }
        match kind {
            CommandKind::ShowNode { node } => {
                let spec = story.node(node).expect("checked");
                if spec.kind != NodeKind::Primary {
                    return Err(illegal(name, format!("{node} is a secondary node")));
                }
                let v = self.nodes.get_mut(node).expect("checked");
                if v.visible {
                    return Err(illegal(name, format!("{node} already visible")));
                }
                v.visible = true;
            }
            CommandKind::HideNode { node } => {
                let spec = story.node(node).expect("checked");
                if spec.kind != NodeKind::Primary {
                    return Err(illegal(name, format!("{node} is a secondary node")));
                }
                self.visible_node(story, node, name)?;
                self.hide(story, node);
            }
            CommandKind::RepositionNode { node, at } => {
                if !at.in_unit_square() {
                    return Err(illegal(name, "position outside the board"));
                }
                if story.node(node).is_some_and(|s| s.kind != NodeKind::Primary) {
                    return Err(illegal(name, format!("{node} is a secondary node")));
                }
                let r = story.node_radius();
                self.visible_node(story, node, name)?.position = Some(primary_position(*at, r));
            }
            CommandKind::ScaleNode { node, factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(illegal(name, format!("factor {factor}")));
                }
                let v = self.visible_node(story, node, name)?;
                v.scale = clamp_mul(v.scale, *factor, SCALE_MIN, SCALE_MAX);
            }
            CommandKind::ChangeNodeState { node } => {
                let n = story.node(node).expect("checked").states.len();
                let v = self.visible_node(story, node, name)?;
                v.state_index = (v.state_index + 1) % n;
            }
            CommandKind::HighlightNode { node, on } => {
                self.visible_node(story, node, name)?.highlighted = *on;
            }
            CommandKind::ShowLink { a, b } | CommandKind::HideLink { a, b } => {
                let show = matches!(kind, CommandKind::ShowLink { .. });
                let id = self.link_between(story, a, b)?;
                if story.link(&id).expect("found").reveal != Reveal::Manual {
                    return Err(illegal(name, format!("link {id} is revealed automatically")));
                }
                if show && !(self.nodes[a].visible && self.nodes[b].visible) {
                    return Err(illegal(name, format!("link {id} has a hidden endpoint")));
                }
                let v = self.links.get_mut(&id).expect("present");
                if v.visible == show {
                    return Err(illegal(name, format!("link {id} already {}", if show { "visible" } else { "hidden" })));
                }
                v.visible = show;
            }
            CommandKind::ChangeLinkType { a, b } => {
                let n = story.link_between(a, b).map_or(1, |l| l.types.len());
                let v = self.visible_link(story, a, b, name)?;
                v.type_index = (v.type_index + 1) % n;
            }
            CommandKind::ChangeLinkDirection { from, to } => {
                let forward = story.link_between(from, to).is_some_and(|l| &l.source == from);
                self.visible_link(story, from, to, name)?.direction = if forward {
                    LinkDirection::SourceToTarget
                } else {
                    LinkDirection::TargetToSource
                };
            }
            CommandKind::ScaleLink { a, b, factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(illegal(name, format!("factor {factor}")));
                }
                let v = self.visible_link(story, a, b, name)?;
                v.width = clamp_mul(v.width, *factor, WIDTH_MIN, WIDTH_MAX);
            }
            CommandKind::ShowOrExtendGroup { a, b } => {
                if a == b {
                    return Err(illegal(name, "a node cannot group with itself"));
                }
                self.visible_node(story, a, name)?;
                self.visible_node(story, b, name)?;
                let ga = self.group_of(a);
                let gb = self.group_of(b);
                match (ga, gb) {
                    (Some(x), Some(y)) if x == y => {
                        return Err(illegal(name, format!("{a} and {b} already share group {x}")));
                    }
                    (Some(x), Some(y)) => {
                        let moved = self.groups.remove(&y).expect("present");
                        self.groups.get_mut(&x).expect("present").extend(moved);
                    }
                    (Some(x), None) => {
                        self.groups.get_mut(&x).expect("present").insert(b.clone());
                    }
                    (None, Some(y)) => {
                        self.groups.get_mut(&y).expect("present").insert(a.clone());
                    }
                    (None, None) => {
                        let id = self.fresh_group_id(story);
                        self.groups.insert(id, BTreeSet::from([a.clone(), b.clone()]));
                    }
                }
            }
            CommandKind::HideOrShrinkGroup { node } => {
                self.visible_node(story, node, name)?;
                let g = self
                    .group_of(node)
                    .ok_or_else(|| illegal(name, format!("{node} is not grouped")))?;
                self.leave_group(&g, node);
            }
            CommandKind::ToggleAnnotation { node } => {
                if story.node(node).expect("checked").annotation.is_none() {
                    return Err(illegal(name, format!("{node} has no annotation")));
                }
                let v = self.visible_node(story, node, name)?;
                v.annotation_visible = !v.annotation_visible;
            }
            CommandKind::ToggleChildNetwork { node } => {
                if story.node(node).expect("checked").child_network.is_none() {
                    return Err(illegal(name, format!("{node} has no child network")));
                }
                let v = self.visible_node(story, node, name)?;
                v.child_visible = !v.child_visible;
            }
            CommandKind::Register { magnet, node } => {
                if story.magnet(magnet).is_none() {
                    return Err(VizError::UnknownTarget(format!("magnet {magnet}")));
                }
                if story.node(node).expect("checked").kind != NodeKind::Primary {
                    return Err(illegal(name, format!("{node} is a secondary node")));
                }
                if let Some((other, _)) = self.bindings.iter().find(|(_, n)| *n == node) {
                    return Err(illegal(name, format!("{node} already bound to {other}")));
                }
                self.bindings.insert(magnet.clone(), node.clone());
            }
        }
        Ok(())
    }

    fn group_of(&self, node: &NodeId) -> Option<GroupId> {
        self.groups.iter().find(|(_, m)| m.contains(node)).map(|(g, _)| g.clone())
    }

    fn fresh_group_id(&self, story: &StoryDocument) -> GroupId {
        story
            .group_styles
            .iter()
            .map(|s| s.group_id.clone())
            .find(|g| !self.groups.contains_key(g))
            .unwrap_or_else(|| {
                (1..)
                    .map(|k| GroupId::new(format!("group-{k}")))
                    .find(|g| !self.groups.contains_key(g))
                    .expect("unbounded")
            })
    }

    fn leave_group(&mut self, g: &GroupId, node: &NodeId) {
        let members = self.groups.get_mut(g).expect("present");
        members.remove(node);
        if members.len() < 2 {
            self.groups.remove(g);
        }
    }

    fn hide(&mut self, story: &StoryDocument, node: &NodeId) {
        let v = self.nodes.get_mut(node).expect("present");
        v.visible = false;
        v.highlighted = false;
        v.annotation_visible = false;
        v.child_visible = false;
        if let Some(g) = self.group_of(node) {
            self.leave_group(&g, node);
        }
        for l in story.links.iter().filter(|l| l.touches(node)) {
            self.links.get_mut(&l.link_id).expect("present").visible = false;
        }
    }

    /// Fixpoint of the reveal rules. Anchors are primary nodes, so the loop
    /// settles after at most two rounds.
    fn auto_reveal(&mut self, story: &StoryDocument) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            for spec in story.secondary_nodes() {
                let want = anchor_predicate(spec, &self.nodes);
                let v = &self.nodes[&spec.node_id];
                if v.visible != want {
                    changed = true;
                    if want {
                        self.nodes.get_mut(&spec.node_id).expect("present").visible = true;
                    } else {
                        self.hide(story, &spec.node_id);
                    }
                }
            }
            for spec in &story.links {
                let ends = self.nodes[&spec.source].visible && self.nodes[&spec.target].visible;
                let v = self.links.get_mut(&spec.link_id).expect("present");
                let want = match spec.reveal {
                    Reveal::Auto => ends,
                    Reveal::Manual => v.visible && ends,
                };
                if v.visible != want {
                    v.visible = want;
                    changed = true;
                }
            }
            if !changed {
                return any;
            }
            any = true;
        }
    }
}

/// Rounds a layout coordinate to wire precision.
pub(crate) fn q(v: f64) -> f64 {
    quantize(v, COORD_DECIMALS)
}

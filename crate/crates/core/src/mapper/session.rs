use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use super::{
    ActionPattern, AnnotationTrigger, BindingReq, CommandKind, CommandSet, CommandTemplate, ContextReq,
    InteractionCommand, MappingRule, RotateSemantics, TapPairSemantics, ZoneReq,
};
use crate::geom::Point;
use crate::ids::{MagnetId, NodeId};
use crate::mapper::rotation_factor;
use crate::recognizer::{ActionKind, Direction, UserActionEvent};
use crate::story::{Reveal, StoryDocument, Zones};
use crate::viz::VizState;

/// Magnet to node bindings, kept bijective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionBindings {
    magnet_to_node: BTreeMap<MagnetId, NodeId>,
    node_to_magnet: BTreeMap<NodeId, MagnetId>,
    pub zones: Zones,
}

impl SessionBindings {
    pub fn new(zones: Zones) -> Self {
        SessionBindings {
            magnet_to_node: BTreeMap::new(),
            node_to_magnet: BTreeMap::new(),
            zones,
        }
    }

    pub fn node_of(&self, m: &MagnetId) -> Option<&NodeId> {
        self.magnet_to_node.get(m)
    }

    pub fn magnet_of(&self, n: &NodeId) -> Option<&MagnetId> {
        self.node_to_magnet.get(n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MagnetId, &NodeId)> {
        self.magnet_to_node.iter()
    }

    /// Binds `m` to `n`, releasing any previous node of `m`. The caller
    /// guarantees `n` is unbound.
    fn bind(&mut self, m: &MagnetId, n: &NodeId) {
        if let Some(old) = self.magnet_to_node.insert(m.clone(), n.clone()) {
            self.node_to_magnet.remove(&old);
        }
        let prev = self.node_to_magnet.insert(n.clone(), m.clone());
        debug_assert!(prev.is_none(), "node {n} was already bound");
    }

    pub fn is_bijective(&self) -> bool {
        self.magnet_to_node.len() == self.node_to_magnet.len()
            && self
                .magnet_to_node
                .iter()
                .all(|(m, n)| self.node_to_magnet.get(n) == Some(m))
    }

    fn zone_of(&self, p: Point) -> ZoneReq {
        if self.zones.registration.contains(p) {
            ZoneReq::Registration
        } else if self.zones.storyboard.contains(p) {
            ZoneReq::Storyboard
        } else {
            ZoneReq::Any
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldRecord {
    pub begin_ms: u64,
    /// Another magnet acted while the hold was open.
    pub tainted: bool,
    /// The hold took part in a simultaneous link-type change.
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRegistration {
    pub node: NodeId,
    pub since_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PendingIntent {
    pub first_tap: Option<(MagnetId, u64)>,
    pub holds: BTreeMap<MagnetId, HoldRecord>,
    /// Solo holds that ended and qualify for an annotation toggle.
    pub completed_holds: Vec<(MagnetId, u64)>,
    pub registrations: BTreeMap<MagnetId, PendingRegistration>,
}

impl PendingIntent {
    pub fn is_empty(&self) -> bool {
        self.first_tap.is_none() && self.holds.is_empty() && self.completed_holds.is_empty() && self.registrations.is_empty()
    }
}

/// Per-session mapping state.
#[derive(Debug, Clone)]
pub struct Mapper {
    set: CommandSet,
    bindings: SessionBindings,
    pending: PendingIntent,
    positions: BTreeMap<MagnetId, Point>,
    last_now: u64,
}

impl Mapper {
    pub fn new(set: CommandSet, story: &StoryDocument) -> Self {
        Mapper {
            set,
            bindings: SessionBindings::new(story.zones()),
            pending: PendingIntent::default(),
            positions: BTreeMap::new(),
            last_now: 0,
        }
    }

    pub fn command_set(&self) -> &CommandSet {
        &self.set
    }

    pub fn bindings(&self) -> &SessionBindings {
        &self.bindings
    }

    pub fn pending(&self) -> &PendingIntent {
        &self.pending
    }

    fn subjects(kind: &ActionKind) -> Vec<&MagnetId> {
        match kind {
            ActionKind::Stack { base, .. } | ActionKind::Unstack { base, .. } => vec![base],
            other => other.magnets(),
        }
    }

    fn hold_on_other(&self, subjects: &[&MagnetId]) -> Option<&MagnetId> {
        self.pending
            .holds
            .keys()
            .find(|m| !subjects.contains(m) && self.bindings.node_of(m).is_some())
    }

    fn matches(&self, rule: &MappingRule, ev: &UserActionEvent) -> bool {
        let subjects = Self::subjects(&ev.kind);
        let binding_ok = match rule.binding {
            BindingReq::Any => true,
            BindingReq::Bound => subjects.iter().all(|m| self.bindings.node_of(m).is_some()),
            BindingReq::Unbound => subjects.iter().all(|m| self.bindings.node_of(m).is_none()),
        };
        let zone_ok = rule.zone == ZoneReq::Any || {
            let p = match &ev.kind {
                ActionKind::Attach { at, .. } => Some(*at),
                ActionKind::SlideEnd { to, .. } => Some(*to),
                ActionKind::Detach { last, .. } => Some(*last),
                _ => self.positions.get(subjects[0]).copied(),
            };
            p.is_some_and(|p| self.bindings.zone_of(p) == rule.zone)
        };
        let held = self.hold_on_other(&subjects).is_some();
        let context_ok = match rule.context {
            ContextReq::Any => true,
            ContextReq::HoldOnOther => held,
            ContextReq::NoHoldOnOther => !held,
        };
        binding_ok && zone_ok && context_ok
    }

    /// Maps one action. `viz` is the state the returned commands will be
    /// applied to, in order.
    pub fn map_action(&mut self, story: &StoryDocument, viz: &VizState, ev: &UserActionEvent) -> Vec<InteractionCommand> {
        let t = ev.t_ms;
        let involved = ev.kind.magnets();
        for (m, h) in self.pending.holds.iter_mut() {
            if !involved.contains(&m) {
                h.tainted = true;
            }
        }
        match &ev.kind {
            ActionKind::Attach { magnet, at } => {
                self.positions.insert(magnet.clone(), *at);
            }
            ActionKind::SlideEnd { magnet, to, .. } => {
                self.positions.insert(magnet.clone(), *to);
                self.pending.registrations.remove(magnet);
            }
            ActionKind::Detach { magnet, .. } => {
                self.positions.remove(magnet);
                self.pending.registrations.remove(magnet);
            }
            ActionKind::HoldBegin { magnet } => {
                self.pending.holds.insert(
                    magnet.clone(),
                    HoldRecord {
                        begin_ms: t,
                        tainted: false,
                        suppressed: false,
                    },
                );
            }
            _ => {}
        }
        let ended_hold = match &ev.kind {
            ActionKind::HoldEnd { magnet, .. } => self.pending.holds.remove(magnet),
            _ => None,
        };

        let action = ActionPattern::of(&ev.kind);
        let rule = self.set.rules_for(action).find(|r| self.matches(r, ev)).cloned();
        let Some(rule) = rule else {
            debug!("no rule for {} at {t}", ev.kind.name());
            return Vec::new();
        };
        let out = self.run(story, viz, ev, rule.command, ended_hold);
        debug_assert!(self.bindings.is_bijective());
        out.into_iter().map(|k| InteractionCommand::new(t, k)).collect()
    }

    fn node_of(&self, m: &MagnetId) -> Option<NodeId> {
        self.bindings.node_of(m).cloned()
    }

    fn run(
        &mut self,
        story: &StoryDocument,
        viz: &VizState,
        ev: &UserActionEvent,
        template: CommandTemplate,
        ended_hold: Option<HoldRecord>,
    ) -> Vec<CommandKind> {
        let t = ev.t_ms;
        let subject = Self::subjects(&ev.kind)[0].clone();
        let node = self.node_of(&subject);
        let visible = |n: &Option<NodeId>| n.as_ref().is_some_and(|n| viz.node_visible(n));
        let mut out = Vec::new();
        match template {
            CommandTemplate::Register => {
                let p = match &ev.kind {
                    ActionKind::Attach { at, .. } => *at,
                    ActionKind::SlideEnd { to, .. } => *to,
                    _ => return out,
                };
                if let Some(slot) = story.slot_at(p) {
                    if self.may_register(viz, &subject, &slot.node_id) {
                        self.pending.registrations.insert(
                            subject,
                            PendingRegistration {
                                node: slot.node_id.clone(),
                                since_ms: t,
                            },
                        );
                    }
                }
            }
            CommandTemplate::ShowAndReposition => {
                let (Some(n), Some(at)) = (node, self.positions.get(&subject)) else {
                    return out;
                };
                if !viz.node_visible(&n) {
                    out.push(CommandKind::ShowNode { node: n.clone() });
                }
                out.push(CommandKind::RepositionNode { node: n, at: *at });
            }
            CommandTemplate::HideNode => {
                if visible(&node) {
                    out.push(CommandKind::HideNode { node: node.unwrap() });
                }
            }
            CommandTemplate::Rotate => {
                if !visible(&node) {
                    return out;
                }
                let n = node.unwrap();
                match (&ev.kind, self.set.rotate_semantics) {
                    (ActionKind::RotateDelta { .. }, RotateSemantics::RevolutionOnly) => {}
                    (ActionKind::RotateDelta { deg, .. }, _) => out.push(CommandKind::ScaleNode {
                        node: n,
                        factor: rotation_factor(*deg),
                    }),
                    (ActionKind::FullRevolution { direction, .. }, RotateSemantics::ScaleOnly) => {
                        let deg = if *direction == Direction::Cw { 360.0 } else { -360.0 };
                        out.push(CommandKind::ScaleNode {
                            node: n,
                            factor: rotation_factor(deg),
                        });
                    }
                    (ActionKind::FullRevolution { .. }, _) if story.node(&n).is_some_and(|s| s.child_network.is_some()) => {
                        out.push(CommandKind::ToggleChildNetwork { node: n });
                    }
                    _ => {}
                }
            }
            CommandTemplate::ScaleLink => {
                let ActionKind::RotateDelta { deg, .. } = &ev.kind else {
                    return out;
                };
                let Some(held) = self.hold_on_other(&[&subject]).and_then(|m| self.node_of(m)) else {
                    return out;
                };
                if let Some(n) = node.filter(|n| viz.node_visible(n)) {
                    if link_visible(story, viz, &held, &n) {
                        out.push(CommandKind::ScaleLink {
                            a: held,
                            b: n,
                            factor: rotation_factor(*deg),
                        });
                    }
                }
            }
            CommandTemplate::ChangeNodeState => {
                if visible(&node) {
                    out.push(CommandKind::ChangeNodeState { node: node.unwrap() });
                }
            }
            CommandTemplate::HighlightOn | CommandTemplate::HighlightOff => {
                if visible(&node) {
                    out.push(CommandKind::HighlightNode {
                        node: node.unwrap(),
                        on: template == CommandTemplate::HighlightOn,
                    });
                }
            }
            CommandTemplate::TapSequence => {
                let first = self.pending.first_tap.take();
                match first {
                    Some((m0, t0)) if m0 != subject && t - t0 <= self.set.w_seq_ms => {
                        if let (Some(a), Some(b)) = (self.node_of(&m0), node) {
                            out.extend(self.tap_pair(story, viz, a, b));
                        }
                    }
                    _ => self.pending.first_tap = Some((subject, t)),
                }
            }
            CommandTemplate::HoldLinkType => {
                let Some(n) = node.filter(|n| viz.node_visible(n)) else {
                    return out;
                };
                let partner = self
                    .pending
                    .holds
                    .iter()
                    .filter(|(m, h)| **m != subject && !h.suppressed && t - h.begin_ms <= self.set.w_sim_ms)
                    .filter_map(|(m, _)| self.node_of(m).map(|o| (m.clone(), o)))
                    .find(|(_, o)| link_visible(story, viz, o, &n));
                if let Some((m, o)) = partner {
                    for key in [&m, &subject] {
                        if let Some(h) = self.pending.holds.get_mut(key) {
                            h.suppressed = true;
                        }
                    }
                    out.push(CommandKind::ChangeLinkType { a: o, b: n });
                }
            }
            CommandTemplate::Annotation => {
                let trigger = self.set.annotation_trigger;
                match &ev.kind {
                    ActionKind::HoldEnd { .. } => {
                        let solo = ended_hold.is_some_and(|h| !h.tainted && !h.suppressed);
                        if solo && trigger != AnnotationTrigger::PointDwell {
                            self.pending.completed_holds.push((subject, t));
                        }
                    }
                    ActionKind::PointDwell { .. } if trigger == AnnotationTrigger::Hold => {}
                    _ => {
                        if let Some(n) = node.filter(|n| can_annotate(story, viz, n)) {
                            out.push(CommandKind::ToggleAnnotation { node: n });
                        }
                    }
                }
            }
            CommandTemplate::GroupExtend => {
                let magnets = ev.kind.magnets();
                let (Some(a), Some(b)) = (self.node_of(magnets[0]), self.node_of(magnets[1])) else {
                    return out;
                };
                let same = viz.group_of(&a).is_some() && viz.group_of(&a) == viz.group_of(&b);
                if viz.node_visible(&a) && viz.node_visible(&b) && !same {
                    out.push(CommandKind::ShowOrExtendGroup { a, b });
                }
            }
            CommandTemplate::GroupShrink => {
                for m in ev.kind.magnets() {
                    if let Some(n) = self.node_of(m) {
                        if viz.node_visible(&n) && viz.group_of(&n).is_some() {
                            out.push(CommandKind::HideOrShrinkGroup { node: n });
                            break;
                        }
                    }
                }
            }
        }
        out
    }

    fn may_register(&self, viz: &VizState, m: &MagnetId, n: &NodeId) -> bool {
        if self.bindings.magnet_of(n).is_some() {
            return false;
        }
        self.bindings.node_of(m).is_none_or(|old| !viz.node_visible(old))
    }

    fn tap_pair(&self, story: &StoryDocument, viz: &VizState, a: NodeId, b: NodeId) -> Vec<CommandKind> {
        let Some(link) = story.link_between(&a, &b) else {
            return Vec::new();
        };
        if !(viz.node_visible(&a) && viz.node_visible(&b)) {
            return Vec::new();
        }
        let shown = viz.link_visible(&link.link_id);
        let manual = link.reveal == Reveal::Manual;
        match self.set.tap_pair_semantics {
            TapPairSemantics::ToggleVisibility if manual && shown => vec![CommandKind::HideLink { a, b }],
            TapPairSemantics::ToggleVisibility if manual => vec![CommandKind::ShowLink { a, b }],
            TapPairSemantics::ToggleVisibility => Vec::new(),
            TapPairSemantics::SetDirection => {
                let mut out = Vec::new();
                if !shown {
                    if !manual {
                        return out;
                    }
                    out.push(CommandKind::ShowLink {
                        a: a.clone(),
                        b: b.clone(),
                    });
                }
                out.push(CommandKind::ChangeLinkDirection { from: a, to: b });
                out
            }
        }
    }

    /// Expires stale intents and completes the ones whose time has come.
    pub fn resolve_pending(&mut self, story: &StoryDocument, viz: &VizState, now: u64) -> Vec<InteractionCommand> {
        debug_assert!(now >= self.last_now, "resolve_pending time went backwards");
        self.last_now = now;
        let mut out = Vec::new();
        if let Some((_, t0)) = &self.pending.first_tap {
            if now - t0 > self.set.w_seq_ms {
                self.pending.first_tap = None;
            }
        }
        for (m, t) in std::mem::take(&mut self.pending.completed_holds) {
            if let Some(n) = self.node_of(&m).filter(|n| can_annotate(story, viz, n)) {
                out.push(InteractionCommand::new(now.max(t), CommandKind::ToggleAnnotation { node: n }));
            }
        }
        let due: Vec<MagnetId> = self
            .pending
            .registrations
            .iter()
            .filter(|(_, r)| now - r.since_ms >= self.set.slot_dwell_ms)
            .map(|(m, _)| m.clone())
            .collect();
        for m in due {
            let reg = self.pending.registrations.remove(&m).expect("listed");
            if self.may_register(viz, &m, &reg.node) {
                self.bindings.bind(&m, &reg.node);
                out.push(InteractionCommand::new(
                    now,
                    CommandKind::Register {
                        magnet: m,
                        node: reg.node,
                    },
                ));
            }
        }
        debug_assert!(self.bindings.is_bijective());
        out
    }
}

fn link_visible(story: &StoryDocument, viz: &VizState, a: &NodeId, b: &NodeId) -> bool {
    story.link_between(a, b).is_some_and(|l| viz.link_visible(&l.link_id))
}

fn can_annotate(story: &StoryDocument, viz: &VizState, n: &NodeId) -> bool {
    viz.node_visible(n) && story.node(n).is_some_and(|s| s.annotation.is_some())
}

//! Pre-registered network stories and the physical magnet roster.
//!
//! A story file is pretty-printed JSON with a `schema_version` field. Parsing
//! rejects anything that would violate a document invariant; building a
//! [`StoryDocument`] in code and calling [`validate_story`] reports every
//! violation at once instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{Point, Rect};
use crate::ids::{ChildId, FiducialId, GroupId, LinkId, MagnetId, NodeId};

pub const STORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StoryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {message}")]
    Schema { message: String },
    #[error("referential error [{code}] on '{id}': {message}")]
    Referential {
        code: ViolationCode,
        id: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MagnetRole {
    NodeCarrier,
    Widget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetSpec {
    pub magnet_id: MagnetId,
    pub side_a_marker: FiducialId,
    pub side_b_marker: FiducialId,
    /// Fraction of board width.
    pub diameter: f64,
    pub role: MagnetRole,
}

impl MagnetSpec {
    /// Builds a spec from a physical diameter, normalizing by the board's long edge.
    pub fn from_physical(
        magnet_id: impl Into<MagnetId>,
        markers: (FiducialId, FiducialId),
        diameter_cm: f64,
        board: &Board,
        role: MagnetRole,
    ) -> Self {
        MagnetSpec {
            magnet_id: magnet_id.into(),
            side_a_marker: markers.0,
            side_b_marker: markers.1,
            diameter: diameter_cm / board.width_cm,
            role,
        }
    }

    pub fn marker(&self, side: Side) -> FiducialId {
        match side {
            Side::A => self.side_a_marker,
            Side::B => self.side_b_marker,
        }
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    #[default]
    All,
    Any,
}

impl AnchorMode {
    fn is_default(&self) -> bool {
        *self == AnchorMode::All
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeState {
    pub label: String,
    pub fill: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub label: String,
    pub kind: NodeKind,
    pub states: Vec<NodeState>,
    pub initial_state_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child_network: Option<ChildId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "AnchorMode::is_default")]
    pub anchor_mode: AnchorMode,
    pub base_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reveal {
    Manual,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkDirection {
    #[default]
    None,
    SourceToTarget,
    TargetToSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkStyle {
    pub label: String,
    pub stroke: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub link_id: LinkId,
    pub source: NodeId,
    pub target: NodeId,
    pub reveal: Reveal,
    pub types: Vec<LinkStyle>,
    pub initial_type_index: usize,
    pub directed: LinkDirection,
    pub base_width: f64,
}

impl LinkSpec {
    pub fn joins(&self, a: &NodeId, b: &NodeId) -> bool {
        (&self.source == a && &self.target == b) || (&self.source == b && &self.target == a)
    }

    pub fn touches(&self, n: &NodeId) -> bool {
        &self.source == n || &self.target == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildNode {
    pub id: String,
    pub label: String,
    pub style: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildLink {
    pub source: String,
    pub target: String,
    pub style: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildNetwork {
    pub child_id: ChildId,
    pub nodes: Vec<ChildNode>,
    pub links: Vec<ChildLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupStyle {
    pub group_id: GroupId,
    pub label: String,
    pub fill: String,
    pub border: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationSlot {
    pub node_id: NodeId,
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Board {
    pub width_cm: f64,
    pub height_cm: f64,
}

/// Board partition into the registration strip and the storyboard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zones {
    pub registration: Rect,
    pub storyboard: Rect,
}

impl Default for Zones {
    fn default() -> Self {
        Zones {
            registration: Rect::new(0.85, 0.0, 1.0, 1.0),
            storyboard: Rect::new(0.0, 0.0, 0.85, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryDocument {
    pub schema_version: u32,
    pub story_id: String,
    pub board: Board,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<Zones>,
    pub magnets: Vec<MagnetSpec>,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub child_networks: Vec<ChildNetwork>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub group_styles: Vec<GroupStyle>,
    pub command_set_ref: String,
    pub registration_slots: Vec<RegistrationSlot>,
}

impl StoryDocument {
    pub fn zones(&self) -> Zones {
        self.zones.unwrap_or_default()
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.node_id == id)
    }

    pub fn link(&self, id: &LinkId) -> Option<&LinkSpec> {
        self.links.iter().find(|l| &l.link_id == id)
    }

    pub fn link_between(&self, a: &NodeId, b: &NodeId) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.joins(a, b))
    }

    pub fn magnet(&self, id: &MagnetId) -> Option<&MagnetSpec> {
        self.magnets.iter().find(|m| &m.magnet_id == id)
    }

    pub fn child_network(&self, id: &ChildId) -> Option<&ChildNetwork> {
        self.child_networks.iter().find(|c| &c.child_id == id)
    }

    pub fn slot_for(&self, node: &NodeId) -> Option<&RegistrationSlot> {
        self.registration_slots.iter().find(|s| &s.node_id == node)
    }

    /// The slot whose disc contains `p`, nearest center first.
    pub fn slot_at(&self, p: Point) -> Option<&RegistrationSlot> {
        self.registration_slots
            .iter()
            .filter(|s| s.center.dist(p) <= s.radius)
            .min_by(|a, b| {
                a.center
                    .dist(p)
                    .total_cmp(&b.center.dist(p))
                    .then_with(|| a.node_id.cmp(&b.node_id))
            })
    }

    pub fn primary_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Primary)
    }

    pub fn secondary_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Secondary)
    }

    /// Radius used for node discs: the largest node-carrier magnet radius.
    pub fn node_radius(&self) -> f64 {
        self.magnets
            .iter()
            .filter(|m| m.role == MagnetRole::NodeCarrier)
            .map(MagnetSpec::radius)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
            .or_else(|| self.magnets.iter().map(MagnetSpec::radius).reduce(f64::max))
            .unwrap_or(0.02)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnsupportedSchemaVersion,
    BadBoard,
    BadZones,
    ZonesOverlap,
    DupMagnetId,
    SameSideFiducial,
    DupFiducial,
    BadDiameter,
    DupNodeId,
    EmptyStates,
    BadInitialState,
    BadBaseScale,
    PrimaryHasAnchors,
    SecondaryNoAnchors,
    AnchorUnknown,
    AnchorNotPrimary,
    ChildUnknown,
    DupLinkId,
    LinkUnknownNode,
    LinkSelfLoop,
    LinkEmptyTypes,
    BadInitialType,
    DupLinkPair,
    BadBaseWidth,
    DupChildId,
    ChildLinkUnknownNode,
    DupGroupStyle,
    SlotUnknownNode,
    SlotNotPrimary,
    DupSlotNode,
    PrimaryNoSlot,
    BadSlotGeometry,
    SlotOutsideRegistration,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            UnsupportedSchemaVersion => "UNSUPPORTED_SCHEMA_VERSION",
            BadBoard => "BAD_BOARD",
            BadZones => "BAD_ZONES",
            ZonesOverlap => "ZONES_OVERLAP",
            DupMagnetId => "DUP_MAGNET_ID",
            SameSideFiducial => "SAME_SIDE_FIDUCIAL",
            DupFiducial => "DUP_FIDUCIAL",
            BadDiameter => "BAD_DIAMETER",
            DupNodeId => "DUP_NODE_ID",
            EmptyStates => "EMPTY_STATES",
            BadInitialState => "BAD_INITIAL_STATE",
            BadBaseScale => "BAD_BASE_SCALE",
            PrimaryHasAnchors => "PRIMARY_HAS_ANCHORS",
            SecondaryNoAnchors => "SECONDARY_NO_ANCHORS",
            AnchorUnknown => "ANCHOR_UNKNOWN",
            AnchorNotPrimary => "ANCHOR_NOT_PRIMARY",
            ChildUnknown => "CHILD_UNKNOWN",
            DupLinkId => "DUP_LINK_ID",
            LinkUnknownNode => "LINK_UNKNOWN_NODE",
            LinkSelfLoop => "LINK_SELF_LOOP",
            LinkEmptyTypes => "LINK_EMPTY_TYPES",
            BadInitialType => "BAD_INITIAL_TYPE",
            DupLinkPair => "DUP_LINK_PAIR",
            BadBaseWidth => "BAD_BASE_WIDTH",
            DupChildId => "DUP_CHILD_ID",
            ChildLinkUnknownNode => "CHILD_LINK_UNKNOWN_NODE",
            DupGroupStyle => "DUP_GROUP_STYLE",
            SlotUnknownNode => "SLOT_UNKNOWN_NODE",
            SlotNotPrimary => "SLOT_NOT_PRIMARY",
            DupSlotNode => "DUP_SLOT_NODE",
            PrimaryNoSlot => "PRIMARY_NO_SLOT",
            BadSlotGeometry => "BAD_SLOT_GEOMETRY",
            SlotOutsideRegistration => "SLOT_OUTSIDE_REGISTRATION",
        }
    }

    /// Dangling ids, duplicates and misplaced references, as opposed to
    /// out-of-range values.
    pub fn is_referential(self) -> bool {
        use ViolationCode::*;
        matches!(
            self,
            DupMagnetId
                | SameSideFiducial
                | DupFiducial
                | DupNodeId
                | PrimaryHasAnchors
                | SecondaryNoAnchors
                | AnchorUnknown
                | AnchorNotPrimary
                | ChildUnknown
                | DupLinkId
                | LinkUnknownNode
                | LinkSelfLoop
                | DupLinkPair
                | DupChildId
                | ChildLinkUnknownNode
                | DupGroupStyle
                | SlotUnknownNode
                | SlotNotPrimary
                | DupSlotNode
                | PrimaryNoSlot
        )
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    fn push(&mut self, code: ViolationCode, subject: impl fmt::Display, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            subject: subject.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "story is valid");
        }
        for v in &self.violations {
            writeln!(f, "{} {}: {}", v.code, v.subject, v.message)?;
        }
        Ok(())
    }
}

pub fn parse_story(bytes: &[u8]) -> Result<StoryDocument, StoryError> {
    let doc: StoryDocument = serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => StoryError::Schema {
            message: e.to_string(),
        },
        _ => StoryError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    let report = validate_story(&doc);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(if v.code.is_referential() {
            StoryError::Referential {
                code: v.code,
                id: v.subject,
                message: v.message,
            }
        } else {
            StoryError::Schema {
                message: format!("{} {}: {}", v.code, v.subject, v.message),
            }
        });
    }
    Ok(doc)
}

/// Canonical bytes: pretty JSON, keys sorted, trailing newline.
pub fn serialize_story(doc: &StoryDocument) -> Vec<u8> {
    let value = serde_json::to_value(doc).expect("story documents always serialize");
    let mut out = serde_json::to_vec_pretty(&value).expect("values always serialize");
    out.push(b'\n');
    out
}

pub fn validate_story(doc: &StoryDocument) -> ValidationReport {
    use ViolationCode::*;
    let mut r = ValidationReport::default();

    if doc.schema_version != STORY_SCHEMA_VERSION {
        r.push(
            UnsupportedSchemaVersion,
            doc.schema_version,
            format!("expected schema_version {STORY_SCHEMA_VERSION}"),
        );
    }
    let b = doc.board;
    if !(b.width_cm.is_finite() && b.height_cm.is_finite() && b.width_cm > 0.0 && b.height_cm > 0.0) {
        r.push(BadBoard, &doc.story_id, "board dimensions must be positive");
    }
    let zones = doc.zones();
    if !zones.registration.is_well_formed() || !zones.storyboard.is_well_formed() {
        r.push(BadZones, &doc.story_id, "zones must be non-empty rectangles inside the board");
    } else if zones.registration.overlaps(&zones.storyboard) {
        r.push(ZonesOverlap, &doc.story_id, "registration and storyboard zones overlap");
    }

    let mut magnet_ids = BTreeSet::new();
    let mut fiducial_owner: BTreeMap<FiducialId, &MagnetId> = BTreeMap::new();
    for m in &doc.magnets {
        if !magnet_ids.insert(&m.magnet_id) {
            r.push(DupMagnetId, &m.magnet_id, "magnet id declared twice");
        }
        if m.side_a_marker == m.side_b_marker {
            r.push(SameSideFiducial, &m.magnet_id, format!("both sides use fiducial {}", m.side_a_marker));
        }
        let mut sides = vec![m.side_a_marker];
        if m.side_b_marker != m.side_a_marker {
            sides.push(m.side_b_marker);
        }
        for f in sides {
            match fiducial_owner.get(&f) {
                Some(owner) if *owner != &m.magnet_id => r.push(
                    DupFiducial,
                    &m.magnet_id,
                    format!("fiducial {f} already used by magnet {owner}"),
                ),
                _ => {
                    fiducial_owner.insert(f, &m.magnet_id);
                }
            }
        }
        if !(m.diameter > 0.0 && m.diameter < 0.25) {
            r.push(BadDiameter, &m.magnet_id, format!("diameter {} outside (0, 0.25)", m.diameter));
        }
    }

    let mut kinds: BTreeMap<&NodeId, NodeKind> = BTreeMap::new();
    for n in &doc.nodes {
        if kinds.insert(&n.node_id, n.kind).is_some() {
            r.push(DupNodeId, &n.node_id, "node id declared twice");
        }
    }
    let child_ids: BTreeSet<&ChildId> = doc.child_networks.iter().map(|c| &c.child_id).collect();
    for n in &doc.nodes {
        if n.states.is_empty() {
            r.push(EmptyStates, &n.node_id, "node needs at least one visual state");
        } else if n.initial_state_index >= n.states.len() {
            r.push(
                BadInitialState,
                &n.node_id,
                format!("initial_state_index {} >= {}", n.initial_state_index, n.states.len()),
            );
        }
        if !(n.base_scale > 0.0 && n.base_scale.is_finite()) {
            r.push(BadBaseScale, &n.node_id, "base_scale must be positive");
        }
        match n.kind {
            NodeKind::Primary if !n.anchors.is_empty() => {
                r.push(PrimaryHasAnchors, &n.node_id, "primary nodes cannot have anchors")
            }
            NodeKind::Secondary if n.anchors.is_empty() => {
                r.push(SecondaryNoAnchors, &n.node_id, "secondary nodes need at least one anchor")
            }
            _ => {}
        }
        for a in &n.anchors {
            match kinds.get(a) {
                None => r.push(AnchorUnknown, &n.node_id, format!("anchor {a} does not exist")),
                Some(NodeKind::Secondary) => r.push(
                    AnchorNotPrimary,
                    &n.node_id,
                    format!("anchor {a} is a secondary node"),
                ),
                Some(NodeKind::Primary) => {}
            }
        }
        if let Some(c) = &n.child_network {
            if !child_ids.contains(c) {
                r.push(ChildUnknown, &n.node_id, format!("child network {c} does not exist"));
            }
        }
    }

    let mut link_ids = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    for l in &doc.links {
        if !link_ids.insert(&l.link_id) {
            r.push(DupLinkId, &l.link_id, "link id declared twice");
        }
        for end in [&l.source, &l.target] {
            if !kinds.contains_key(end) {
                r.push(LinkUnknownNode, &l.link_id, format!("endpoint {end} does not exist"));
            }
        }
        if l.source == l.target {
            r.push(LinkSelfLoop, &l.link_id, "source equals target");
        } else {
            let key = if l.source < l.target {
                (&l.source, &l.target)
            } else {
                (&l.target, &l.source)
            };
            if !pairs.insert(key) {
                r.push(DupLinkPair, &l.link_id, format!("second link between {} and {}", key.0, key.1));
            }
        }
        if l.types.is_empty() {
            r.push(LinkEmptyTypes, &l.link_id, "link needs at least one type");
        } else if l.initial_type_index >= l.types.len() {
            r.push(
                BadInitialType,
                &l.link_id,
                format!("initial_type_index {} >= {}", l.initial_type_index, l.types.len()),
            );
        }
        if !(l.base_width > 0.0 && l.base_width.is_finite()) {
            r.push(BadBaseWidth, &l.link_id, "base_width must be positive");
        }
    }

    let mut seen_children = BTreeSet::new();
    for c in &doc.child_networks {
        if !seen_children.insert(&c.child_id) {
            r.push(DupChildId, &c.child_id, "child network declared twice");
        }
        let ids: BTreeSet<&str> = c.nodes.iter().map(|n| n.id.as_str()).collect();
        for l in &c.links {
            for end in [&l.source, &l.target] {
                if !ids.contains(end.as_str()) {
                    r.push(
                        ChildLinkUnknownNode,
                        &c.child_id,
                        format!("child link endpoint {end} does not exist"),
                    );
                }
            }
        }
    }

    let mut styles = BTreeSet::new();
    for g in &doc.group_styles {
        if !styles.insert(&g.group_id) {
            r.push(DupGroupStyle, &g.group_id, "group style declared twice");
        }
    }

    let mut slotted = BTreeSet::new();
    for s in &doc.registration_slots {
        match kinds.get(&s.node_id) {
            None => r.push(SlotUnknownNode, &s.node_id, "slot references an unknown node"),
            Some(NodeKind::Secondary) => {
                r.push(SlotNotPrimary, &s.node_id, "slot references a secondary node")
            }
            Some(NodeKind::Primary) => {
                if !slotted.insert(&s.node_id) {
                    r.push(DupSlotNode, &s.node_id, "node has more than one slot");
                }
            }
        }
        if !s.center.in_unit_square() || !(s.radius > 0.0 && s.radius < 0.5) {
            r.push(BadSlotGeometry, &s.node_id, "slot center must be in [0,1]² and radius in (0, 0.5)");
        } else if zones.registration.is_well_formed() && !zones.registration.contains(s.center) {
            r.push(SlotOutsideRegistration, &s.node_id, "slot center lies outside the registration zone");
        }
    }
    for n in doc.primary_nodes() {
        if !slotted.contains(&n.node_id) {
            r.push(PrimaryNoSlot, &n.node_id, "primary node has no registration slot");
        }
    }
    r
}

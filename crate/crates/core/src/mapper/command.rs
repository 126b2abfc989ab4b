use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::ids::{MagnetId, NodeId};

/// Visualization commands. Link commands name the two endpoint nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandKind {
    ShowNode { node: NodeId },
    HideNode { node: NodeId },
    /// `at` is the resting point of the carrying magnet.
    RepositionNode { node: NodeId, at: Point },
    ScaleNode { node: NodeId, factor: f64 },
    ChangeNodeState { node: NodeId },
    HighlightNode { node: NodeId, on: bool },
    ShowLink { a: NodeId, b: NodeId },
    HideLink { a: NodeId, b: NodeId },
    ChangeLinkType { a: NodeId, b: NodeId },
    /// Points the link from `from` to `to`.
    ChangeLinkDirection { from: NodeId, to: NodeId },
    ScaleLink { a: NodeId, b: NodeId, factor: f64 },
    ShowOrExtendGroup { a: NodeId, b: NodeId },
    HideOrShrinkGroup { node: NodeId },
    ToggleAnnotation { node: NodeId },
    ToggleChildNetwork { node: NodeId },
    Register { magnet: MagnetId, node: NodeId },
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::ShowNode { .. } => "show-node",
            CommandKind::HideNode { .. } => "hide-node",
            CommandKind::RepositionNode { .. } => "reposition-node",
            CommandKind::ScaleNode { .. } => "scale-node",
            CommandKind::ChangeNodeState { .. } => "change-node-state",
            CommandKind::HighlightNode { .. } => "highlight-node",
            CommandKind::ShowLink { .. } => "show-link",
            CommandKind::HideLink { .. } => "hide-link",
            CommandKind::ChangeLinkType { .. } => "change-link-type",
            CommandKind::ChangeLinkDirection { .. } => "change-link-direction",
            CommandKind::ScaleLink { .. } => "scale-link",
            CommandKind::ShowOrExtendGroup { .. } => "show-or-extend-group",
            CommandKind::HideOrShrinkGroup { .. } => "hide-or-shrink-group",
            CommandKind::ToggleAnnotation { .. } => "toggle-annotation",
            CommandKind::ToggleChildNetwork { .. } => "toggle-child-network",
            CommandKind::Register { .. } => "register",
        }
    }

    /// Every node the command refers to.
    pub fn nodes(&self) -> Vec<&NodeId> {
        match self {
            CommandKind::ShowNode { node }
            | CommandKind::HideNode { node }
            | CommandKind::RepositionNode { node, .. }
            | CommandKind::ScaleNode { node, .. }
            | CommandKind::ChangeNodeState { node }
            | CommandKind::HighlightNode { node, .. }
            | CommandKind::HideOrShrinkGroup { node }
            | CommandKind::ToggleAnnotation { node }
            | CommandKind::ToggleChildNetwork { node }
            | CommandKind::Register { node, .. } => vec![node],
            CommandKind::ShowLink { a, b }
            | CommandKind::HideLink { a, b }
            | CommandKind::ChangeLinkType { a, b }
            | CommandKind::ScaleLink { a, b, .. }
            | CommandKind::ShowOrExtendGroup { a, b } => vec![a, b],
            CommandKind::ChangeLinkDirection { from, to } => vec![from, to],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCommand {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: CommandKind,
}

impl InteractionCommand {
    pub fn new(t_ms: u64, kind: CommandKind) -> Self {
        InteractionCommand { t_ms, kind }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("commands serialize")
    }
}

/// Scale factor for a signed rotation: one full clockwise turn doubles.
pub fn rotation_factor(deg: f64) -> f64 {
    (deg / 360.0).exp2()
}

pub fn serialize_command_trace(commands: &[InteractionCommand]) -> String {
    let mut out = String::new();
    for c in commands {
        out.push_str(&c.to_line());
        out.push('\n');
    }
    out
}

/// Parses a line-per-command trace; errors carry the 1-based line number.
pub fn parse_command_trace(text: &str) -> Result<Vec<InteractionCommand>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

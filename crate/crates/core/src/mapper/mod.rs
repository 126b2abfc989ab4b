//! Action-to-command mapping.
//!
//! A [`CommandSet`] is a table of rules, each matching an action kind under
//! binding, zone and hold-context requirements and naming the command
//! template to run. [`Mapper`] holds the per-session bindings and pending
//! intents and turns recognized actions into [`InteractionCommand`]s.

mod command;
mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use command::{parse_command_trace, rotation_factor, serialize_command_trace, CommandKind, InteractionCommand};
pub use session::{HoldRecord, Mapper, PendingIntent, PendingRegistration, SessionBindings};

#[derive(Debug, Error)]
pub enum CommandSetError {
    #[error("command set schema: {0}")]
    Schema(String),
    #[error("ambiguous command set: `{first}` and `{second}` match the same action context")]
    Ambiguity { first: String, second: String },
    #[error("unknown command set `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionPattern {
    Attach,
    Detach,
    Flip,
    Stack,
    Unstack,
    CoverBegin,
    CoverEnd,
    SlideEnd,
    RotateDelta,
    FullRevolution,
    Tap,
    HoldBegin,
    HoldEnd,
    PointDwell,
    BringCloser,
    MovedApart,
}

impl ActionPattern {
    pub fn of(kind: &crate::recognizer::ActionKind) -> Self {
        use crate::recognizer::ActionKind as K;
        match kind {
            K::Attach { .. } => Self::Attach,
            K::Detach { .. } => Self::Detach,
            K::Flip { .. } => Self::Flip,
            K::Stack { .. } => Self::Stack,
            K::Unstack { .. } => Self::Unstack,
            K::CoverBegin { .. } => Self::CoverBegin,
            K::CoverEnd { .. } => Self::CoverEnd,
            K::SlideEnd { .. } => Self::SlideEnd,
            K::RotateDelta { .. } => Self::RotateDelta,
            K::FullRevolution { .. } => Self::FullRevolution,
            K::Tap { .. } => Self::Tap,
            K::HoldBegin { .. } => Self::HoldBegin,
            K::HoldEnd { .. } => Self::HoldEnd,
            K::PointDwell { .. } => Self::PointDwell,
            K::BringCloser { .. } => Self::BringCloser,
            K::MovedApart { .. } => Self::MovedApart,
        }
    }

    fn is_pair(self) -> bool {
        matches!(self, Self::BringCloser | Self::MovedApart)
    }
}

/// Binding requirement on the node-bearing magnet(s) of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingReq {
    #[default]
    Any,
    Bound,
    Unbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZoneReq {
    #[default]
    Any,
    Registration,
    Storyboard,
}

/// Whether another bound magnet is currently held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextReq {
    #[default]
    Any,
    HoldOnOther,
    NoHoldOnOther,
}

macro_rules! overlap {
    ($a:expr, $b:expr, $any:path) => {
        $a == $any || $b == $any || $a == $b
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandTemplate {
    /// Starts a slot registration that completes after the slot dwell.
    Register,
    /// Shows a hidden node, then moves it to the magnet's resting point.
    ShowAndReposition,
    HideNode,
    /// Node scaling, or child-network toggling, per `rotate_semantics`.
    Rotate,
    ScaleLink,
    ChangeNodeState,
    HighlightOn,
    HighlightOff,
    /// Sequential tap pairing per `tap_pair_semantics`.
    TapSequence,
    /// Simultaneous holds on a linked pair cycle the link type.
    HoldLinkType,
    /// Annotation toggle per `annotation_trigger`.
    Annotation,
    GroupExtend,
    GroupShrink,
}

impl CommandTemplate {
    fn accepts(self, a: ActionPattern) -> bool {
        use ActionPattern as A;
        match self {
            Self::Register | Self::ShowAndReposition => matches!(a, A::Attach | A::SlideEnd),
            Self::HideNode => matches!(a, A::Detach | A::CoverBegin),
            Self::Rotate => matches!(a, A::RotateDelta | A::FullRevolution),
            Self::ScaleLink => a == A::RotateDelta,
            Self::ChangeNodeState => matches!(a, A::Flip | A::Tap | A::HoldBegin | A::PointDwell),
            Self::HighlightOn | Self::HighlightOff => matches!(a, A::Stack | A::Unstack),
            Self::TapSequence => a == A::Tap,
            Self::HoldLinkType => a == A::HoldBegin,
            Self::Annotation => matches!(a, A::HoldEnd | A::PointDwell | A::Tap | A::Flip),
            Self::GroupExtend => a == A::BringCloser,
            Self::GroupShrink => matches!(a, A::CoverBegin | A::MovedApart),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRule {
    pub action: ActionPattern,
    #[serde(default)]
    pub binding: BindingReq,
    #[serde(default)]
    pub zone: ZoneReq,
    #[serde(default)]
    pub context: ContextReq,
    pub command: CommandTemplate,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl MappingRule {
    fn new(action: ActionPattern, binding: BindingReq, zone: ZoneReq, context: ContextReq, command: CommandTemplate) -> Self {
        MappingRule {
            action,
            binding,
            zone,
            context,
            command,
            enabled: true,
        }
    }

    fn intersects(&self, other: &MappingRule) -> bool {
        self.action == other.action
            && overlap!(self.binding, other.binding, BindingReq::Any)
            && overlap!(self.zone, other.zone, ZoneReq::Any)
            && overlap!(self.context, other.context, ContextReq::Any)
    }

    pub fn describe(&self) -> String {
        format!(
            "{}[{}, {}, {}] -> {}",
            kebab(&self.action),
            kebab(&self.binding),
            kebab(&self.zone),
            kebab(&self.context),
            kebab(&self.command)
        )
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapPairSemantics {
    ToggleVisibility,
    SetDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotateSemantics {
    ScaleWithRevolutionToggle,
    ScaleOnly,
    RevolutionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationTrigger {
    PointDwell,
    Hold,
    Either,
}

fn default_w_seq() -> u64 {
    2000
}
fn default_w_sim() -> u64 {
    500
}
fn default_slot_dwell() -> u64 {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSet {
    pub set_id: String,
    #[serde(default = "default_w_seq")]
    pub w_seq_ms: u64,
    #[serde(default = "default_w_sim")]
    pub w_sim_ms: u64,
    #[serde(default = "default_slot_dwell")]
    pub slot_dwell_ms: u64,
    pub tap_pair_semantics: TapPairSemantics,
    pub rotate_semantics: RotateSemantics,
    pub annotation_trigger: AnnotationTrigger,
    pub rules: Vec<MappingRule>,
}

pub const BUILTIN_SETS: [&str; 2] = ["default", "directional"];

fn standard_rules() -> Vec<MappingRule> {
    use ActionPattern as A;
    use BindingReq::*;
    use CommandTemplate as T;
    use ContextReq as C;
    use ZoneReq as Z;
    let r = MappingRule::new;
    vec![
        r(A::Attach, Any, Z::Registration, C::Any, T::Register),
        r(A::SlideEnd, Any, Z::Registration, C::Any, T::Register),
        r(A::Attach, Bound, Z::Storyboard, C::Any, T::ShowAndReposition),
        r(A::SlideEnd, Bound, Z::Storyboard, C::Any, T::ShowAndReposition),
        r(A::Detach, Bound, Z::Any, C::Any, T::HideNode),
        r(A::Flip, Bound, Z::Any, C::Any, T::ChangeNodeState),
        r(A::Stack, Bound, Z::Any, C::Any, T::HighlightOn),
        r(A::Unstack, Bound, Z::Any, C::Any, T::HighlightOff),
        r(A::CoverBegin, Bound, Z::Any, C::Any, T::GroupShrink),
        r(A::RotateDelta, Bound, Z::Any, C::NoHoldOnOther, T::Rotate),
        r(A::RotateDelta, Bound, Z::Any, C::HoldOnOther, T::ScaleLink),
        r(A::FullRevolution, Bound, Z::Any, C::Any, T::Rotate),
        r(A::Tap, Bound, Z::Any, C::Any, T::TapSequence),
        r(A::HoldBegin, Bound, Z::Any, C::Any, T::HoldLinkType),
        r(A::HoldEnd, Bound, Z::Any, C::Any, T::Annotation),
        r(A::PointDwell, Bound, Z::Any, C::Any, T::Annotation),
        r(A::BringCloser, Bound, Z::Any, C::Any, T::GroupExtend),
    ]
}

impl CommandSet {
    pub fn builtin(id: &str) -> Result<CommandSet, CommandSetError> {
        let (tap, rotate, annotation) = match id {
            "default" => (
                TapPairSemantics::ToggleVisibility,
                RotateSemantics::ScaleWithRevolutionToggle,
                AnnotationTrigger::Either,
            ),
            "directional" => (
                TapPairSemantics::SetDirection,
                RotateSemantics::ScaleOnly,
                AnnotationTrigger::PointDwell,
            ),
            other => return Err(CommandSetError::Unknown(other.to_string())),
        };
        Ok(CommandSet {
            set_id: id.to_string(),
            w_seq_ms: default_w_seq(),
            w_sim_ms: default_w_sim(),
            slot_dwell_ms: default_slot_dwell(),
            tap_pair_semantics: tap,
            rotate_semantics: rotate,
            annotation_trigger: annotation,
            rules: standard_rules(),
        })
    }

    /// Parses and checks a command-set document.
    pub fn load(bytes: &[u8]) -> Result<CommandSet, CommandSetError> {
        let set: CommandSet = serde_json::from_slice(bytes).map_err(|e| CommandSetError::Schema(e.to_string()))?;
        set.check()?;
        Ok(set)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("command sets serialize");
        s.push('\n');
        s
    }

    pub fn check(&self) -> Result<(), CommandSetError> {
        if self.set_id.trim().is_empty() {
            return Err(CommandSetError::Schema("set_id must not be empty".into()));
        }
        if self.w_seq_ms == 0 || self.w_sim_ms == 0 {
            return Err(CommandSetError::Schema("windows must be positive".into()));
        }
        let rules: Vec<&MappingRule> = self.rules.iter().filter(|r| r.enabled).collect();
        for r in &rules {
            if !r.command.accepts(r.action) {
                return Err(CommandSetError::Schema(format!(
                    "template does not apply to its action: {}",
                    r.describe()
                )));
            }
            if r.action.is_pair() && r.zone != ZoneReq::Any {
                return Err(CommandSetError::Schema(format!("pair actions take no zone: {}", r.describe())));
            }
        }
        for (i, a) in rules.iter().enumerate() {
            for b in &rules[i + 1..] {
                if a.intersects(b) {
                    return Err(CommandSetError::Ambiguity {
                        first: a.describe(),
                        second: b.describe(),
                    });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn rules_for(&self, action: ActionPattern) -> impl Iterator<Item = &MappingRule> {
        self.rules.iter().filter(move |r| r.enabled && r.action == action)
    }
}

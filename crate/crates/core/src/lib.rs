//! Core engine for tangible network presentations.
//!
//! Magnet poses and fingertip observations flow through four stages:
//! [`tracking`] frames are turned into discrete user actions by the
//! [`recognizer`], the [`mapper`] translates actions into visualization
//! commands under the active command set, and [`viz`] applies those commands
//! to an event-sourced visualization state. [`pipeline`] wires the stages
//! together for live sessions and offline replays.

pub mod geom;
pub mod ids;
pub mod mapper;
pub mod pipeline;
pub mod recognizer;
pub mod samples;
pub mod story;
pub mod tracking;
pub mod viz;

pub use geom::Point;
pub use ids::{ChildId, FiducialId, GroupId, LinkId, MagnetId, NodeId};
pub use story::{StoryDocument, StoryError};

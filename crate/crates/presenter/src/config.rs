//! Loading of session inputs from disk.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use magboard_core::mapper::{CommandSet, CommandSetError, BUILTIN_SETS};
use magboard_core::recognizer::RecognizerConfig;
use magboard_core::story::{parse_story, StoryDocument, StoryError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("story {path}: {source}")]
    Story { path: PathBuf, source: StoryError },
    #[error(transparent)]
    CommandSet(#[from] CommandSetError),
    #[error("recognizer config {path}: {message}")]
    Recognizer { path: PathBuf, message: String },
}

pub fn read(path: &Path) -> Result<Vec<u8>, ConfigError> {
    std::fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_story(path: &Path) -> Result<StoryDocument, ConfigError> {
    parse_story(&read(path)?).map_err(|source| ConfigError::Story {
        path: path.to_path_buf(),
        source,
    })
}

/// A built-in id, or else a path to a command-set file.
pub fn load_command_set(id_or_path: &str) -> Result<CommandSet, ConfigError> {
    if BUILTIN_SETS.contains(&id_or_path) {
        return Ok(CommandSet::builtin(id_or_path)?);
    }
    let path = Path::new(id_or_path);
    if !path.exists() {
        return Err(CommandSetError::Unknown(id_or_path.to_string()).into());
    }
    Ok(CommandSet::load(&read(path)?)?)
}

/// Recognizer thresholds from a TOML file; absent keys keep their defaults.
pub fn load_recognizer_config(path: Option<&Path>) -> Result<RecognizerConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(RecognizerConfig::default());
    };
    let err = |message: String| ConfigError::Recognizer {
        path: path.to_path_buf(),
        message,
    };
    let text = String::from_utf8(read(path)?).map_err(|e| err(e.to_string()))?;
    let cfg: RecognizerConfig = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
    cfg.validate().map_err(|e| err(e.to_string()))?;
    Ok(cfg)
}

/// Where the frames of a run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionMode {
    Live { listen: SocketAddr },
    Replay { input: ReplayInput },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayInput {
    Frames(PathBuf),
    Script(PathBuf),
    /// A session log written by a live run.
    Log(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub story: PathBuf,
    pub command_set: String,
    pub recognizer: Option<PathBuf>,
    pub mode: SessionMode,
    pub log: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

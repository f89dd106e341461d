//! Walk files and preset walks.
//!
//! A walk file is a JSON object with `interior` (rows `s = -1, 0, 1`,
//! columns `t = -1, 0, 1`), `horizontal` and `vertical`. An optional
//! `switch` object replaces all three arrays with the switch construction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::walk::{from_switch, SwitchError, SwitchParams, ValidatedWalk, WalkSpec, WalkViolation};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizontal: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<SwitchParams>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed walk file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("walk file lacks `{0}` and has no `switch` object")]
    Missing(&'static str),
    #[error("invalid switch parameters: {0}")]
    Switch(#[from] SwitchError),
    #[error("walk violates {} invariant(s)", .0.len())]
    Invalid(Vec<WalkViolation>),
}

impl WalkFile {
    pub fn into_walk(self) -> Result<ValidatedWalk, LoadError> {
        if let Some(params) = self.switch {
            return Ok(from_switch(params)?);
        }
        let spec = WalkSpec {
            interior: self.interior.ok_or(LoadError::Missing("interior"))?,
            horizontal: self.horizontal.ok_or(LoadError::Missing("horizontal"))?,
            vertical: self.vertical.ok_or(LoadError::Missing("vertical"))?,
        };
        spec.validate().map_err(LoadError::Invalid)
    }
}

pub fn parse_walk(text: &str) -> Result<ValidatedWalk, LoadError> {
    serde_json::from_str::<WalkFile>(text)?.into_walk()
}

pub fn load_walk(path: &Path) -> Result<ValidatedWalk, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_walk(&text)
}

/// The walks shipped in `presets/`.
pub mod presets {
    use super::parse_walk;
    use crate::walk::ValidatedWalk;

    pub const FIG2A: &str = include_str!("../presets/fig2a.json");
    pub const FIG2B: &str = include_str!("../presets/fig2b.json");
    pub const FIG2C: &str = include_str!("../presets/fig2c.json");
    pub const FIG2D: &str = include_str!("../presets/fig2d.json");
    pub const SWITCH_FIG7: &str = include_str!("../presets/switch_fig7.json");

    pub const ALL: [(&str, &str); 5] = [
        ("fig2a", FIG2A),
        ("fig2b", FIG2B),
        ("fig2c", FIG2C),
        ("fig2d", FIG2D),
        ("switch_fig7", SWITCH_FIG7),
    ];

    fn load(text: &str) -> ValidatedWalk {
        parse_walk(text).expect("shipped preset is valid")
    }

    /// `p_{1,0} = p_{0,1} = 1/5`, `p_{-1,-1} = 3/5`.
    pub fn fig2a() -> ValidatedWalk {
        load(FIG2A)
    }

    /// `p_{1,0} = 1/5`, `p_{0,-1} = p_{-1,1} = 2/5`; zero vertical drift.
    pub fn fig2b() -> ValidatedWalk {
        load(FIG2B)
    }

    /// `p_{1,1} = 1/62`, `p_{-1,1} = p_{1,-1} = 10/31`, `p_{-1,-1} = 21/62`.
    pub fn fig2c() -> ValidatedWalk {
        load(FIG2C)
    }

    /// `p_{-1,1} = p_{1,-1} = 1/4`, `p_{-1,-1} = 1/2`.
    pub fn fig2d() -> ValidatedWalk {
        load(FIG2D)
    }

    pub fn switch_fig7() -> ValidatedWalk {
        load(SWITCH_FIG7)
    }

    /// The four kernel-curve examples.
    pub fn fig2() -> [ValidatedWalk; 4] {
        [fig2a(), fig2b(), fig2c(), fig2d()]
    }
}

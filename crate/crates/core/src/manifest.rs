//! Run manifest: every parameter that determines a run, stored as TOML next
//! to every output.
//!
//! ```toml
//! format_version = 1
//! tool_version = "0.1.0"
//! full_enumeration = false
//!
//! [cell]
//! scale = 10
//! # margin = 1   # defaults to the largest view shift
//!
//! [view]
//! grid_k = 3
//! shift_step = 1
//!
//! [glass]
//! thickness_um = 510.0
//! n0 = 1.0
//! n1 = 1.46
//! # pixel_pitch_um = 2.0   # required for angles
//!
//! [levels]
//! low = 0.2
//! high = 0.5
//!
//! [solver]          # restarts, [solver.wnmf], [solver.anneal]
//! [paths]           # stack, out
//! [bounds]          # max_combo_rms, max_view_ber
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::factorization::SolverConfig;
use crate::imaging::Levels;
use crate::marker::{CellSpec, ViewSpec};
use crate::optics::GlassSpec;
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    pub scale: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewParams {
    pub grid_k: usize,
    #[serde(default = "one")]
    pub shift_step: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Acceptance bounds checked by `solve` and `decode`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_combo_rms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_view_ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    /// Solve every combo of the grid instead of only those in the stack.
    #[serde(default)]
    pub full_enumeration: bool,
    pub cell: CellParams,
    pub view: ViewParams,
    #[serde(default)]
    pub glass: GlassSpec,
    #[serde(default)]
    pub levels: Levels,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub bounds: Bounds,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            full_enumeration: false,
            cell: CellParams {
                scale: 10,
                margin: None,
            },
            view: ViewParams {
                grid_k: 3,
                shift_step: 1,
            },
            glass: GlassSpec::default(),
            levels: Levels::default(),
            solver: SolverConfig::default(),
            paths: Paths::default(),
            bounds: Bounds::default(),
        }
    }
}

impl RunManifest {
    pub fn view_spec(&self) -> Result<ViewSpec> {
        ViewSpec::new(self.view.grid_k, self.view.shift_step)
    }

    pub fn cell_spec(&self) -> Result<CellSpec> {
        let view = self.view_spec()?;
        let cell = CellSpec::new(
            self.cell.scale,
            self.cell.margin.unwrap_or(view.max_shift()),
        )?;
        view.check_margin(&cell)?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest format_version {} is not supported (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        self.cell_spec()?;
        self.glass.validate()?;
        Levels::new(self.levels.low, self.levels.high)?;
        self.solver.wnmf.validate()?;
        self.solver.anneal.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::formats::write_bytes(path, self.to_toml()?.as_bytes())
    }
}

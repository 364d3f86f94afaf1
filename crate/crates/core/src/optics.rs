//! Refraction through the wafer: viewing angle <-> relative layer offset.
//!
//! A ray entering the front face at angle `theta` refracts to
//! `beta = asin(n0 * sin(theta) / n1)` and crosses the wafer thickness `d`,
//! landing `x = d * tan(beta)` away from the point straight below. Angles are
//! degrees at the interface and radians internally.

use serde::{Deserialize, Serialize};

use crate::marker::ViewSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlassSpec {
    pub thickness_um: f64,
    pub n0: f64,
    pub n1: f64,
    /// High-resolution pixel pitch in micrometers. Fabrication dependent,
    /// so there is no default.
    pub pixel_pitch_um: Option<f64>,
}

impl Default for GlassSpec {
    fn default() -> Self {
        Self {
            thickness_um: 510.0,
            n0: 1.0,
            n1: 1.46,
            pixel_pitch_um: None,
        }
    }
}

impl GlassSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness_um > 0.0) {
            return Err(Error::InvalidParameter(
                "glass thickness must be > 0".into(),
            ));
        }
        if !(self.n0 >= 1.0 && self.n1 > self.n0) {
            return Err(Error::InvalidParameter(format!(
                "refractive indices must satisfy n1 > n0 >= 1 (n0={}, n1={})",
                self.n0, self.n1
            )));
        }
        if let Some(p) = self.pixel_pitch_um {
            if !(p > 0.0) {
                return Err(Error::InvalidParameter("pixel pitch must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Offset reached at grazing incidence; no angle maps beyond it.
    pub fn max_offset_um(&self) -> f64 {
        self.thickness_um * (self.n0 / self.n1).asin().tan()
    }

    pub fn require_pitch(&self) -> Result<f64> {
        self.pixel_pitch_um.ok_or_else(|| {
            Error::InvalidParameter("pixel_pitch_um is required to compute viewing angles".into())
        })
    }
}

pub fn offset_for_angle(glass: &GlassSpec, theta_deg: f64) -> Result<f64> {
    if !(theta_deg.abs() < 90.0) {
        return Err(Error::AngleDomain { theta_deg });
    }
    let beta = (glass.n0 * theta_deg.to_radians().sin() / glass.n1).asin();
    Ok(glass.thickness_um * beta.tan())
}

pub fn angle_for_offset(glass: &GlassSpec, offset_um: f64) -> Result<f64> {
    let max_um = glass.max_offset_um();
    if !(offset_um.abs() < max_um) {
        return Err(Error::OffsetDomain { offset_um, max_um });
    }
    let beta = (offset_um / glass.thickness_um).atan();
    Ok((glass.n1 * beta.sin() / glass.n0).asin().to_degrees())
}

/// Fill `view.angles` with the physical angle pair of every view shift.
/// Each axis is converted independently.
pub fn annotate_view_angles(glass: &GlassSpec, view: &ViewSpec) -> Result<ViewSpec> {
    glass.validate()?;
    let pitch = glass.require_pitch()?;
    let angles = view
        .offsets
        .iter()
        .map(|&(u, v)| {
            Ok((
                angle_for_offset(glass, u as f64 * pitch)?,
                angle_for_offset(glass, v as f64 * pitch)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewSpec {
        angles: Some(angles),
        ..view.clone()
    })
}

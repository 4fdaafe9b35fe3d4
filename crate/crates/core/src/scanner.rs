//! Circular cone-beam geometry and per-pixel rays.
//!
//! Convention (angles in radians, rotation about +z):
//!
//! ```text
//! source          S = Rz(θ) (0, -dso, 0)
//! detector centre C = Rz(θ) (0, dsd - dso, 0)
//! column axis     û = Rz(θ) (1, 0, 0) · du
//! row axis        v̂ = (0, 0, 1) · dv
//! pixel (v, u)    P = C + (u - (n_u-1)/2 + offset_u) û + (v - (n_v-1)/2 + offset_v) v̂
//! ```
//!
//! The ray of a pixel runs from `S` (t = 0) to `P` (t = 1).

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Ray;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub dso: f64,
    pub dsd: f64,
    pub n_u: usize,
    pub n_v: usize,
    pub du: f64,
    pub dv: f64,
    pub offset_u: f64,
    pub offset_v: f64,
    pub angles: Vec<f64>,
}

/// On-disk geometry description: `angles` may be given explicitly or as a
/// count of equidistant angles over a full turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dso: f64,
    pub dsd: f64,
    pub n_u: usize,
    pub n_v: usize,
    pub du: f64,
    pub dv: f64,
    #[serde(default)]
    pub offset_u: f64,
    #[serde(default)]
    pub offset_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_angles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
}

impl ScanGeometry {
    /// Equidistant angles `2πk / n_angles`, centred detector.
    pub fn circular(
        n_angles: usize,
        dso: f64,
        dsd: f64,
        n_u: usize,
        n_v: usize,
        du: f64,
        dv: f64,
    ) -> Result<Self> {
        if n_angles == 0 {
            return Err(Error::ParamOutOfRange("n_angles must be >= 1".into()));
        }
        let angles = (0..n_angles)
            .map(|k| TAU * k as f64 / n_angles as f64)
            .collect();
        let scan = ScanGeometry {
            dso,
            dsd,
            n_u,
            n_v,
            du,
            dv,
            offset_u: 0.0,
            offset_v: 0.0,
            angles,
        };
        scan.check()?;
        Ok(scan)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ParamOutOfRange(m.into()));
        if !(self.dso > 0.0 && self.dsd > self.dso) {
            return bad("geometry needs dsd > dso > 0");
        }
        if !(self.du > 0.0 && self.dv > 0.0) {
            return bad("pixel pitches must be positive");
        }
        if self.n_u == 0 || self.n_v == 0 || self.angles.is_empty() {
            return bad("detector size and angle count must be >= 1");
        }
        if !(self.offset_u.is_finite() && self.offset_v.is_finite())
            || !self.angles.iter().all(|a| a.is_finite())
        {
            return bad("offsets and angles must be finite");
        }
        Ok(())
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn pixels_per_angle(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn ray_count(&self) -> usize {
        self.n_angles() * self.pixels_per_angle()
    }

    pub fn source(&self, angle: usize) -> Vec3 {
        let (s, c) = self.angles[angle].sin_cos();
        Vec3::new(self.dso * s, -self.dso * c, 0.0)
    }

    /// Ray from the source to the centre of detector pixel `(v, u)`.
    pub fn pixel_ray(&self, angle: usize, v: usize, u: usize) -> Result<Ray> {
        if angle >= self.n_angles() || v >= self.n_v || u >= self.n_u {
            return Err(Error::ParamOutOfRange(format!(
                "pixel ({angle}, {v}, {u}) outside ({}, {}, {})",
                self.n_angles(),
                self.n_v,
                self.n_u
            )));
        }
        Ok(self.ray_unchecked(angle, v, u))
    }

    /// Ray for flat pixel index `angle * n_v * n_u + v * n_u + u`.
    #[inline]
    pub fn ray_at(&self, index: usize) -> Ray {
        let per = self.pixels_per_angle();
        let a = index / per;
        let rem = index % per;
        self.ray_unchecked(a, rem / self.n_u, rem % self.n_u)
    }

    fn ray_unchecked(&self, angle: usize, v: usize, u: usize) -> Ray {
        let (s, c) = self.angles[angle].sin_cos();
        let rot = |x: f64, y: f64| Vec3::new(x * c - y * s, x * s + y * c, 0.0);
        let source = rot(0.0, -self.dso);
        let centre = rot(0.0, self.dsd - self.dso);
        let u_axis = rot(1.0, 0.0) * self.du;
        let v_axis = Vec3::new(0.0, 0.0, self.dv);
        let cu = u as f64 - (self.n_u as f64 - 1.0) / 2.0 + self.offset_u;
        let cv = v as f64 - (self.n_v as f64 - 1.0) / 2.0 + self.offset_v;
        let pixel = centre + u_axis * cu + v_axis * cv;
        Ray::new(source, pixel).expect("dsd > 0 keeps source and pixel apart")
    }

    pub fn to_config(&self) -> GeometryConfig {
        GeometryConfig {
            dso: self.dso,
            dsd: self.dsd,
            n_u: self.n_u,
            n_v: self.n_v,
            du: self.du,
            dv: self.dv,
            offset_u: self.offset_u,
            offset_v: self.offset_v,
            n_angles: None,
            angles: Some(self.angles.clone()),
        }
    }

    pub fn from_config(cfg: &GeometryConfig) -> Result<Self> {
        let angles = match (&cfg.angles, cfg.n_angles) {
            (Some(a), None) => a.clone(),
            (None, Some(n)) => {
                return ScanGeometry::circular(n, cfg.dso, cfg.dsd, cfg.n_u, cfg.n_v, cfg.du, cfg.dv)
                    .and_then(|mut g| {
                        g.offset_u = cfg.offset_u;
                        g.offset_v = cfg.offset_v;
                        g.check().map(|_| g)
                    });
            }
            (Some(a), Some(n)) if a.len() == n => a.clone(),
            (Some(_), Some(_)) => {
                return Err(Error::ParamOutOfRange(
                    "n_angles disagrees with the angles array".into(),
                ))
            }
            (None, None) => {
                return Err(Error::ParamOutOfRange(
                    "geometry needs n_angles or angles".into(),
                ))
            }
        };
        let scan = ScanGeometry {
            dso: cfg.dso,
            dsd: cfg.dsd,
            n_u: cfg.n_u,
            n_v: cfg.n_v,
            du: cfg.du,
            dv: cfg.dv,
            offset_u: cfg.offset_u,
            offset_v: cfg.offset_v,
            angles,
        };
        scan.check()?;
        Ok(scan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: GeometryConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_config(&cfg)
    }
}

//! Projection stacks on disk: `<prefix>.proj` holds raw little-endian f32
//! in `[angle][v][u]` order, `<prefix>.json` describes it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tetraproj::io::{read_f32_raw, write_f32_raw};
use tetraproj::{Diagnostics, GeometryConfig, ProjectionStack, ScanGeometry};

pub const FORMAT: &str = "f32le";
pub const LAYOUT: &str = "angle,v,u";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjSidecar {
    pub format: String,
    pub layout: String,
    /// `[n_angles, n_v, n_u]`.
    pub dims: [usize; 3],
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

impl ProjSidecar {
    pub fn new(scan: &ScanGeometry, diagnostics: Option<Diagnostics>) -> Self {
        ProjSidecar {
            format: FORMAT.into(),
            layout: LAYOUT.into(),
            dims: [scan.n_angles(), scan.n_v, scan.n_u],
            geometry: scan.to_config(),
            diagnostics,
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// `(<prefix>.proj, <prefix>.json)`. A trailing `.proj` or `.json` on the
/// argument is ignored.
pub fn proj_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let base = match prefix.extension().and_then(|e| e.to_str()) {
        Some("proj") | Some("json") => prefix.with_extension(""),
        _ => prefix.to_path_buf(),
    };
    (with_suffix(&base, ".proj"), with_suffix(&base, ".json"))
}

pub fn write_proj(prefix: &Path, stack: &ProjectionStack, sidecar: &ProjSidecar) -> anyhow::Result<()> {
    let (raw, json) = proj_paths(prefix);
    if sidecar.dims != [stack.n_angles, stack.n_v, stack.n_u] {
        bail!("sidecar dims {:?} do not match the stack", sidecar.dims);
    }
    write_f32_raw(&raw, &stack.data)?;
    let text = serde_json::to_string_pretty(sidecar)? + "\n";
    std::fs::write(&json, text).with_context(|| format!("writing {}", json.display()))?;
    Ok(())
}

pub fn read_proj(prefix: &Path) -> anyhow::Result<(ProjectionStack, ScanGeometry, ProjSidecar)> {
    let (raw, json) = proj_paths(prefix);
    let text = std::fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
    let sidecar: ProjSidecar =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
    if sidecar.format != FORMAT || sidecar.layout != LAYOUT {
        bail!(
            "{}: unsupported format {:?} / layout {:?}",
            json.display(),
            sidecar.format,
            sidecar.layout
        );
    }
    let scan = ScanGeometry::from_config(&sidecar.geometry)
        .with_context(|| format!("geometry in {}", json.display()))?;
    let [a, v, u] = sidecar.dims;
    if [scan.n_angles(), scan.n_v, scan.n_u] != sidecar.dims {
        bail!("{}: dims {:?} disagree with the geometry", json.display(), sidecar.dims);
    }
    let data = read_f32_raw(&raw, Some(a * v * u))?;
    let stack = ProjectionStack::new(data, a, v, u)?;
    Ok((stack, scan, sidecar))
}

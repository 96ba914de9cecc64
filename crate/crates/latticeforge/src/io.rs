//! File formats and report emitters: the JSON lattice document, Wavefront
//! OBJ polyline export, the sweep CSV and the properties report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::geom::{Frame, UnitCell, Vec3};
use crate::homogenize::ElasticProperties;
use crate::validity::ThresholdSweep;

/// On-disk representation of one unit cell. Unknown fields are rejected;
/// numbers round-trip exactly (serde_json emits shortest-roundtrip
/// decimals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDocument {
    pub name: String,
    pub cell_size: f64,
    pub frame_center: [f64; 3],
    pub vertices: Vec<[f64; 3]>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strut_radius: Option<f64>,
}

impl LatticeDocument {
    pub fn from_cell(cell: &UnitCell, frame: &Frame, strut_radius: Option<f64>) -> Self {
        LatticeDocument {
            name: cell.name.clone().unwrap_or_else(|| "unnamed".to_string()),
            cell_size: frame.side,
            frame_center: frame.center.to_array(),
            vertices: cell.vertices.iter().map(Vec3::to_array).collect(),
            edges: cell.edges.iter().map(|&(i, j)| [i, j]).collect(),
            strut_radius,
        }
    }

    pub fn to_cell(&self) -> Result<(UnitCell, Frame, Option<f64>)> {
        if !(self.cell_size > 0.0) {
            return Err(LatticeError::Document(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        let n = self.vertices.len();
        for &[i, j] in &self.edges {
            if i >= n || j >= n {
                return Err(LatticeError::EdgeOutOfRange { i, j, n });
            }
        }
        let mut cell = UnitCell::new(
            self.vertices.iter().map(|&a| Vec3::from_array(a)).collect(),
            self.edges.iter().map(|&[i, j]| (i.min(j), i.max(j))).collect(),
        );
        cell.name = Some(self.name.clone());
        cell.validate()?;
        let frame = Frame::new(Vec3::from_array(self.frame_center), self.cell_size);
        Ok((cell, frame, self.strut_radius))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LatticeError::Document(e.to_string()))
    }
}

pub fn write_lattice(
    cell: &UnitCell,
    frame: &Frame,
    strut_radius: Option<f64>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let doc = LatticeDocument::from_cell(cell, frame, strut_radius);
    std::fs::write(path, doc.to_json())?;
    Ok(())
}

pub fn read_lattice(path: impl AsRef<Path>) -> Result<(UnitCell, Frame, Option<f64>)> {
    let text = std::fs::read_to_string(path)?;
    LatticeDocument::from_json(&text)?.to_cell()
}

/// Wavefront OBJ polyline export: one `v` line per vertex, one `l` line
/// per edge (1-based indices), LF endings, six decimals. `tile > 1`
/// replicates the cell on a tile^3 grid translated by the frame side.
pub fn export_obj(cell: &UnitCell, frame: &Frame, tile: usize) -> String {
    let tile = tile.max(1);
    let side = frame.side;
    let nv = cell.vertices.len();
    let mut out = String::new();
    let mut offsets = Vec::new();
    for tz in 0..tile {
        for ty in 0..tile {
            for tx in 0..tile {
                offsets.push(Vec3::new(
                    tx as f64 * side,
                    ty as f64 * side,
                    tz as f64 * side,
                ));
            }
        }
    }
    for offset in &offsets {
        for v in &cell.vertices {
            let p = *v + *offset;
            out.push_str(&format!("v {:.6} {:.6} {:.6}\n", p.x, p.y, p.z));
        }
    }
    for (copy, _) in offsets.iter().enumerate() {
        let base = copy * nv;
        for &(i, j) in &cell.edges {
            out.push_str(&format!("l {} {}\n", base + i + 1, base + j + 1));
        }
    }
    out
}

pub fn write_obj(
    cell: &UnitCell,
    frame: &Frame,
    tile: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, export_obj(cell, frame, tile))?;
    Ok(())
}

/// Sweep report as CSV: header `threshold,intra_pct,inter_pct,n`, LF
/// endings, '.' decimals, no trailing whitespace.
pub fn sweep_to_csv(sweep: &ThresholdSweep) -> String {
    let mut out = String::from("threshold,intra_pct,inter_pct,n\n");
    for row in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.threshold, row.intra_pct, row.inter_pct, row.n
        ));
    }
    out
}

/// Flat key-value properties document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertiesDocument {
    #[serde(rename = "E_x")]
    pub e_x: f64,
    #[serde(rename = "E_y")]
    pub e_y: f64,
    #[serde(rename = "E_z")]
    pub e_z: f64,
    #[serde(rename = "G_yz")]
    pub g_yz: f64,
    #[serde(rename = "G_xz")]
    pub g_xz: f64,
    #[serde(rename = "G_xy")]
    pub g_xy: f64,
    pub nu_yz: f64,
    pub nu_xz: f64,
    pub nu_xy: f64,
    #[serde(default)]
    pub rel_density: Option<f64>,
}

impl PropertiesDocument {
    pub fn from_properties(p: &ElasticProperties) -> Self {
        PropertiesDocument {
            e_x: p.e_x,
            e_y: p.e_y,
            e_z: p.e_z,
            g_yz: p.g_yz,
            g_xz: p.g_xz,
            g_xy: p.g_xy,
            nu_yz: p.nu_yz,
            nu_xz: p.nu_xz,
            nu_xy: p.nu_xy,
            rel_density: Some(p.rel_density),
        }
    }

    pub fn to_property_vector(&self) -> crate::symmetry::PropertyVector {
        [
            self.e_x, self.e_y, self.e_z, self.g_yz, self.g_xz, self.g_xy, self.nu_yz,
            self.nu_xz, self.nu_xy,
        ]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("properties serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LatticeError::Document(e.to_string()))
    }
}

//! End-to-end solve and the files it produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, Vec2};
use crate::irls::{run, IrlsConfig, MatchSet, SolveReport};
use crate::program::PlMap;
use crate::triangulation::{EpipolarTriangulation, GridConfig, ImageRect};

/// Triangulates the source image and fits the map.
pub fn solve(
    image: ImageRect,
    f: &FundamentalMatrix,
    matches: &MatchSet,
    grid: &GridConfig,
    cfg: &IrlsConfig,
) -> Result<(EpipolarTriangulation, SolveReport)> {
    grid.validate()?;
    let t = EpipolarTriangulation::build(image, f, grid)?;
    let report = run(&t, f, matches, cfg)?;
    Ok((t, report))
}

/// Everything needed to re-evaluate a solve: the mesh is rebuilt from the
/// image, F and grid, which is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveFile {
    pub image: ImageRect,
    pub grid: GridConfig,
    pub fundamental: [[f64; 3]; 3],
    pub config: IrlsConfig,
    pub report: SolveReport,
}

impl SolveFile {
    pub fn new(
        image: ImageRect,
        grid: GridConfig,
        f: &FundamentalMatrix,
        config: IrlsConfig,
        report: SolveReport,
    ) -> Self {
        SolveFile {
            image,
            grid,
            fundamental: f.rows(),
            config,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The mesh and map, checked for consistency.
    pub fn rebuild(&self) -> Result<(EpipolarTriangulation, PlMap)> {
        let f = FundamentalMatrix::from_rows(self.fundamental)?;
        let t = EpipolarTriangulation::build(self.image, &f, &self.grid)?;
        if t.vertices.len() != self.report.map.vertices.len() {
            return Err(Error::Parse(format!(
                "map has {} vertices but the mesh has {}",
                self.report.map.vertices.len(),
                t.vertices.len()
            )));
        }
        Ok((t, self.report.map.clone()))
    }
}

/// Standalone description of a piecewise-linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlMapFile {
    pub source: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
    pub faces: Vec<[usize; 3]>,
}

impl PlMapFile {
    pub fn new(t: &EpipolarTriangulation, phi: &PlMap) -> Self {
        let pt = |v: &Vec2| [v.x, v.y];
        PlMapFile {
            source: t.vertices.iter().map(pt).collect(),
            target: phi.vertices.iter().map(pt).collect(),
            faces: t.faces.iter().map(|f| f.vertices).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

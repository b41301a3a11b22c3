//! Epipolar bounded-distortion stereo matching.
//!
//! A piecewise-linear map from a source to a target image is fitted to
//! candidate correspondences. Each triangle of an epipolar mesh maps its
//! epipolar line onto the corresponding target line with bounded
//! conformal distortion. The fit uses a robust loss minimized by IRLS over
//! convex second-order cone programs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod distortion;
pub mod error;
pub mod geometry;
pub mod io;
pub mod irls;
pub mod matching;
pub mod pipeline;
pub mod program;
pub mod synth;
pub mod triangulation;

pub use conic::{ConicProblem, SolveStatus, SolverResult, SolverSettings};
pub use distortion::{AffineDecomposition, AffineMap, DistortionBound};
pub use error::{Error, Result};
pub use geometry::{Chirality, DirectedLine, Epipole, FundamentalMatrix, Vec2};
pub use irls::{ChiralityMode, IrlsConfig, MatchSet, SolveReport};
pub use matching::{FeatureSet, MatchParams, RansacParams, RansacResult};
pub use pipeline::{solve, PlMapFile, SolveFile};
pub use program::PlMap;
pub use synth::{EvalReport, GroundTruth, SceneSpec};
pub use triangulation::{EpipolarTriangulation, GridConfig, ImageRect};

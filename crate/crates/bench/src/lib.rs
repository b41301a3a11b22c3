//! Shared fixtures for the benchmarks.

use ebd_core::program::{build_iteration_program, EbdConstraints, EbdProgram, MatchTerm};
use ebd_core::synth::generate;
use ebd_core::{solve, EpipolarTriangulation, GridConfig, GroundTruth, IrlsConfig, PlMap, SceneSpec};

pub struct Fixture {
    pub gt: GroundTruth,
    pub grid: GridConfig,
    pub config: IrlsConfig,
    pub mesh: EpipolarTriangulation,
}

/// The default synthetic scene meshed at edge length `eta`.
pub fn fixture(eta: f64) -> Fixture {
    let spec = SceneSpec::default();
    let gt = generate(&spec).expect("default scene generates");
    let grid = GridConfig::new(eta).expect("valid grid");
    let mesh = EpipolarTriangulation::build(spec.source_image().unwrap(), &gt.f, &grid).expect("mesh builds");
    Fixture { gt, grid, config: IrlsConfig::default(), mesh }
}

impl Fixture {
    /// One unit-weight iteration program over every candidate in the mesh,
    /// with the orientation picked by a full solve.
    pub fn iteration_program(&self) -> (EbdProgram, PlMap) {
        let (_, report) = solve(self.mesh.image, &self.gt.f, &self.gt.matches, &self.grid, &self.config)
            .expect("fixture solves");
        let bound = self.config.validate(self.mesh.image.diameter()).unwrap();
        let cons = EbdConstraints::build(&self.mesh, &self.gt.f, bound, report.chirality).unwrap();
        let terms: Vec<MatchTerm> = self
            .gt
            .matches
            .pairs
            .iter()
            .filter_map(|(p, q)| {
                let face = self.mesh.locate(p)?;
                let bary = self.mesh.barycentric(face, p).ok()?;
                Some(MatchTerm { face, bary, target: *q, weight: 1.0 })
            })
            .collect();
        let program = build_iteration_program(&self.mesh, &cons, &terms).unwrap();
        (program, report.map)
    }
}

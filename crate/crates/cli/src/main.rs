use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ebd_core::io::{
    format_features, format_fundamental, format_matches, parse_features, parse_fundamental, parse_matches, read_text,
    write_atomic,
};
use ebd_core::matching::{epipolar_match, estimate_fundamental, global_match};
use ebd_core::synth::{default_thresholds, emit_plots, evaluate, format_eval_table, generate};
use ebd_core::{
    solve, ChiralityMode, Error, GridConfig, GroundTruth, ImageRect, IrlsConfig, MatchParams, PlMapFile, RansacParams,
    Result, SceneSpec, SolveFile, SolverSettings,
};
use rayon::prelude::*;

/// Epipolar bounded-distortion matching between two views.
#[derive(Parser, Debug)]
#[command(name = "ebd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene: F, features, candidate matches and
    /// ground truth.
    Gen(GenArgs),
    /// Band-restricted descriptor matching; estimates F when none is given.
    Match(MatchArgs),
    /// Fit the map to candidate matches.
    Solve(SolveArgs),
    /// Score a solve against ground truth.
    Eval(EvalArgs),
    /// Plot the cumulative error curve of a solve.
    Plot(EvalArgs),
    /// Generate, solve and evaluate several scene specs in parallel.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Scene spec (TOML); the built-in default scene when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Descriptor dimension of the feature files.
    #[arg(long, default_value_t = 8)]
    dim: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Direction {
    /// Features of the first file are sources.
    Forward,
    /// Features of the second file are sources; F is transposed.
    Backward,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[arg(long)]
    features1: PathBuf,
    #[arg(long)]
    features2: PathBuf,
    /// Known fundamental matrix; estimated by RANSAC when omitted.
    #[arg(long)]
    fundamental: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    ratio: f64,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Direction::Forward)]
    direction: Direction,
    /// Output directory for matches.csv (and fundamental.txt when estimated).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChiralityArg {
    Auto,
    Canonical,
    Reversed,
}

#[derive(Args, Debug, Clone)]
struct Tuning {
    #[arg(long, default_value_t = 0.6)]
    mu: f64,
    /// Mesh edge length in pixels.
    #[arg(long, default_value_t = 25.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.001)]
    p: f64,
    #[arg(long = "eps-final", default_value_t = 1.0)]
    eps_final: f64,
    /// Conic solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = ChiralityArg::Auto)]
    chirality: ChiralityArg,
}

impl Tuning {
    fn config(&self, diameter: f64) -> Result<(IrlsConfig, GridConfig)> {
        if self.tol.is_nan() || self.tol <= 0.0 || self.tol.is_infinite() {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        let cfg = IrlsConfig {
            mu: self.mu,
            p: self.p,
            eps_final: self.eps_final,
            solver: SolverSettings { tol: self.tol, ..SolverSettings::default() },
            chirality: match self.chirality {
                ChiralityArg::Auto => ChiralityMode::Auto,
                ChiralityArg::Canonical => ChiralityMode::Canonical,
                ChiralityArg::Reversed => ChiralityMode::Reversed,
            },
            ..IrlsConfig::default()
        };
        let grid = GridConfig::new(self.eta).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate(diameter)?;
        Ok((cfg, grid))
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    fundamental: PathBuf,
    #[arg(long)]
    matches: PathBuf,
    /// Source image width in pixels.
    #[arg(long)]
    width: f64,
    /// Source image height in pixels.
    #[arg(long)]
    height: f64,
    #[command(flatten)]
    tuning: Tuning,
    /// Output directory for solve.json and plmap.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// solve.json written by `ebd solve`.
    #[arg(long)]
    solve: PathBuf,
    #[arg(long = "ground-truth")]
    ground_truth: PathBuf,
    /// Output path; `eval` writes the table there, `plot` writes
    /// `<out>.svg` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scene specs (TOML).
    #[arg(required = true)]
    specs: Vec<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
    /// Overrides every spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Input(_) | Error::Parse(_) | Error::InvalidFundamental(_) | Error::OutOfDomain { .. } => 3,
        Error::Io { .. } => 5,
        _ => 4,
    }
}

fn output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })
}

fn load_spec(path: Option<&Path>, seed: Option<u64>) -> Result<SceneSpec> {
    let mut spec = match path {
        Some(p) => SceneSpec::from_toml(&read_text(p)?)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                e => e,
            })?,
        None => SceneSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_scene(gt: &GroundTruth, dir: &Path, dim: usize) -> Result<Vec<PathBuf>> {
    output_dir(dir)?;
    let (fa, fb) = gt.features(dim);
    let files = [
        ("fundamental.txt", format_fundamental(&gt.f)),
        ("matches.csv", format_matches(&gt.matches)),
        ("features1.txt", format_features(&fa)),
        ("features2.txt", format_features(&fb)),
        ("ground_truth.toml", gt.to_toml()?),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    if a.dim == 0 {
        return Err(Error::Config("descriptor dimension must be positive".into()));
    }
    let spec = load_spec(a.spec.as_deref(), a.seed)?;
    let gt = generate(&spec)?;
    for f in write_scene(&gt, &a.out, a.dim)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_match(a: &MatchArgs) -> Result<()> {
    let params = MatchParams { delta: a.delta, ratio: a.ratio };
    params.validate()?;
    let f1 = parse_features(&read_text(&a.features1)?)?;
    let f2 = parse_features(&read_text(&a.features2)?)?;
    let (src, dst) = match a.direction {
        Direction::Forward => (f1, f2),
        Direction::Backward => (f2, f1),
    };
    output_dir(&a.out)?;
    let f = match &a.fundamental {
        Some(p) => {
            let f = parse_fundamental(&read_text(p)?)?;
            match a.direction {
                Direction::Forward => f,
                Direction::Backward => f.transpose(),
            }
        }
        None => {
            let putative = global_match(&src, &dst, params.ratio)?;
            let r = estimate_fundamental(&putative, &RansacParams { seed: a.seed, ..Default::default() })?;
            if r.planar_degenerate {
                eprintln!("warning: the RANSAC consensus is explained by a homography; F is poorly determined");
            }
            eprintln!("estimated F from {} of {} putative pairs", r.inlier_count(), putative.len());
            write_atomic(&a.out.join("fundamental.txt"), format_fundamental(&r.f).as_bytes())?;
            r.f
        }
    };
    let m = epipolar_match(&src, &dst, &f, &params)?;
    let path = a.out.join("matches.csv");
    write_atomic(&path, format_matches(&m).as_bytes())?;
    println!("{} ({} pairs)", path.display(), m.len());
    Ok(())
}

fn solve_to_dir(
    f: &ebd_core::FundamentalMatrix,
    matches: &ebd_core::MatchSet,
    image: ImageRect,
    tuning: &Tuning,
    out: &Path,
) -> Result<SolveFile> {
    let (mut cfg, grid) = tuning.config(image.diameter())?;
    output_dir(out)?;
    cfg.failure_dump = Some(out.join("failed_program.txt"));
    let (t, report) = solve(image, f, matches, &grid, &cfg)?;
    let file = SolveFile::new(image, grid, f, cfg, report);
    write_atomic(&out.join("solve.json"), file.to_json()?.as_bytes())?;
    write_atomic(&out.join("plmap.json"), PlMapFile::new(&t, &file.report.map).to_json()?.as_bytes())?;
    Ok(file)
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let image = ImageRect::new(a.width, a.height).map_err(|e| Error::Config(e.to_string()))?;
    a.tuning.config(image.diameter())?;
    let f = parse_fundamental(&read_text(&a.fundamental)?)?;
    let matches = parse_matches(&read_text(&a.matches)?)?;
    let file = solve_to_dir(&f, &matches, image, &a.tuning, &a.out)?;
    let r = &file.report;
    println!(
        "{} inliers of {} matches ({} outside the image), {} solves, {} inaccurate",
        r.inliers.iter().filter(|&&b| b).count(),
        r.kept.len() + r.dropped,
        r.dropped,
        r.solves,
        r.inaccurate_solves
    );
    Ok(())
}

fn load_eval(a: &EvalArgs) -> Result<ebd_core::EvalReport> {
    let file = SolveFile::from_json(&read_text(&a.solve)?)?;
    let gt = GroundTruth::from_toml(&read_text(&a.ground_truth)?)?;
    let (t, phi) = file.rebuild()?;
    evaluate(&phi, &t, &gt, &default_thresholds())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let report = load_eval(a)?;
    write_atomic(&a.out, format_eval_table(&report).as_bytes())?;
    println!("fraction within 1 px: {}", report.within_one_px);
    Ok(())
}

fn cmd_plot(a: &EvalArgs) -> Result<()> {
    let report = load_eval(a)?;
    for f in emit_plots(&report, &a.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn run_one(spec_path: &Path, a: &RunArgs) -> Result<(f64, usize)> {
    let spec = load_spec(Some(spec_path), a.seed)?;
    let gt = generate(&spec)?;
    let name = spec_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into());
    let dir = a.out.join(name);
    write_scene(&gt, &dir, 8)?;
    let file = solve_to_dir(&gt.f, &gt.matches, spec.source_image()?, &a.tuning, &dir)?;
    let (t, phi) = file.rebuild()?;
    let report = evaluate(&phi, &t, &gt, &default_thresholds())?;
    write_atomic(&dir.join("eval.csv"), format_eval_table(&report).as_bytes())?;
    emit_plots(&report, &dir.join("curve"))?;
    Ok((report.within_one_px, file.report.inliers.iter().filter(|&&b| b).count()))
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    output_dir(&a.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(f64, usize)>> = pool.install(|| a.specs.par_iter().map(|s| run_one(s, a)).collect());
    let mut summary = String::from("spec,within_1px,inliers,status\n");
    let mut first_error = None;
    for (spec, r) in a.specs.iter().zip(results) {
        match r {
            Ok((w, n)) => summary.push_str(&format!("{},{w},{n},ok\n", spec.display())),
            Err(e) => {
                eprintln!("error: {}: {e}", spec.display());
                summary.push_str(&format!("{},,,{}\n", spec.display(), exit_code(&e)));
                first_error.get_or_insert(e);
            }
        }
    }
    let path = a.out.join("summary.csv");
    write_atomic(&path, summary.as_bytes())?;
    println!("{}", path.display());
    first_error.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Match(a) => cmd_match(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

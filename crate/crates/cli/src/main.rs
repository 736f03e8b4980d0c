//! Command-line driver: geometry reports, direct-vs-factorized evolution
//! runs, and convergence sweeps, emitted as byte-stable JSON/CSV artifacts.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use adiamag_core::adiabatic::{self, StateMoments};
use adiamag_core::dynamics::{self, Frame, PhaseSpaceState, SystemParams};
use adiamag_core::geometry::{self, FieldPath};
use adiamag_core::magtrans;
use adiamag_core::quadrature::linspace;
use adiamag_core::report;
use adiamag_core::wavepacket;

#[derive(Parser)]
#[command(name = "adiamag", version, about = "Adiabatic evolution in a rotating magnetic field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transport the frame along the configured path and report the
    /// geometric quantities (frames, rotation rates, displacement, solid
    /// angle and holonomy for closed paths).
    Geometry(RunArgs),
    /// Integrate the exact evolution, build the factorized propagator, and
    /// report the comparison together with the phase determinations and the
    /// quantum wavepacket check.
    Evolve(RunArgs),
    /// Repeat the evolve comparison over a sweep of durations and fit the
    /// convergence orders.
    Converge(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report artifacts (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Seed for the randomized consistency checks (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    params: ParamsConfig,
    path: PathConfig,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    sweep: Option<SweepConfig>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsConfig {
    omega_c: f64,
    omega: f64,
    a: f64,
    t_total: f64,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum PathConfig {
    Latitude { theta0: f64, turns: i32 },
    Slerp { waypoints: Vec<[f64; 3]>, closed: bool },
    Table { file: PathBuf },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Tolerances {
    ode_tol: f64,
    quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ode_tol: 1e-10, quad_tol: 1e-10 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    t_values: Vec<f64>,
}

/// Errors split by exit code: configuration problems exit 2, numerical
/// failures exit 3.
enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

/// Core-library errors at this layer stem from the numerics; configuration
/// validity was already established at load time.
impl From<adiamag_core::Error> for CliError {
    fn from(e: adiamag_core::Error) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("io error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

/// Validated, materialized configuration.
struct Run {
    params: SystemParams,
    path: FieldPath,
    ode_tol: f64,
    quad_tol: f64,
    sweep: Option<Vec<f64>>,
    seed: u64,
}

fn load_config(args: &RunArgs) -> CliResult<Run> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    for (name, tol) in [("ode_tol", cfg.tolerances.ode_tol), ("quad_tol", cfg.tolerances.quad_tol)]
    {
        if !(tol > 0.0 && tol <= 1e-2) {
            return Err(CliError::Config(format!("{name} = {tol} outside (0, 1e-2]")));
        }
    }
    let params = SystemParams::new(
        cfg.params.omega_c,
        cfg.params.omega,
        cfg.params.a,
        cfg.params.t_total,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let config_dir = args.config.parent().unwrap_or(Path::new("."));
    let path = build_path(&cfg.path, config_dir).map_err(|e| CliError::Config(e))?;
    let sweep = match cfg.sweep {
        None => None,
        Some(s) => {
            let mut ts = s.t_values;
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if ts.len() < 3 {
                return Err(CliError::Config("sweep needs at least 3 T values".into()));
            }
            if ts.windows(2).any(|w| w[0] == w[1]) {
                return Err(CliError::Config("sweep T values must be distinct".into()));
            }
            if ts.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
                return Err(CliError::Config("sweep T values must be positive".into()));
            }
            Some(ts)
        }
    };
    Ok(Run {
        params,
        path,
        ode_tol: cfg.tolerances.ode_tol,
        quad_tol: cfg.tolerances.quad_tol,
        sweep,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
    })
}

fn build_path(cfg: &PathConfig, config_dir: &Path) -> Result<FieldPath, String> {
    match cfg {
        PathConfig::Latitude { theta0, turns } => {
            FieldPath::latitude(*theta0, *turns).map_err(|e| e.to_string())
        }
        PathConfig::Slerp { waypoints, closed } => {
            let pts = waypoints.iter().map(|w| Vector3::new(w[0], w[1], w[2])).collect();
            FieldPath::slerp(pts, *closed).map_err(|e| e.to_string())
        }
        PathConfig::Table { file } => {
            let full = if file.is_absolute() { file.clone() } else { config_dir.join(file) };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| format!("cannot read {}: {e}", full.display()))?;
            let mut samples = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != 4 {
                    return Err(format!("table line {}: expected s,nx,ny,nz", i + 1));
                }
                let nums: Result<Vec<f64>, _> =
                    fields.iter().map(|f| f.parse::<f64>()).collect();
                let nums = nums.map_err(|e| format!("table line {}: {e}", i + 1))?;
                samples.push((nums[0], Vector3::new(nums[1], nums[2], nums[3])));
            }
            FieldPath::table(samples).map_err(|e| e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Report schemas (field order is the emitted key order)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GeometrySummary {
    closed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    solid_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    holonomy_angle: Option<f64>,
    displacement: [f64; 2],
    displacement_norm: f64,
}

#[derive(Serialize)]
struct EvolveSummary {
    omega_c: f64,
    omega: f64,
    a: f64,
    t_total: f64,
    closed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    solid_angle: Option<f64>,
    displacement: [f64; 2],
    phi_p: f64,
    alpha: f64,
    alpha_minus_phi_p: f64,
    alpha_state_spread: f64,
    map_error: f64,
    offset_error: f64,
    relative_map_error: f64,
    relative_offset_error: f64,
    symplectic_defect: f64,
    overlap_magnitude: f64,
    overlap_arg: f64,
    seed: u64,
}

#[derive(Serialize)]
struct SweepEntry {
    t_total: f64,
    map_error: f64,
    offset_error: f64,
    phi_p: f64,
    alpha: f64,
    alpha_relative_deviation: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    entries: Vec<SweepEntry>,
    map_error_order: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_deviation_order: Option<f64>,
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

const GEOMETRY_GRID: usize = 401;
const TRAJECTORY_GRID: usize = 1001;

fn cmd_geometry(run: &Run, out: &Path) -> CliResult<()> {
    let grid = linspace(0.0, 1.0, GEOMETRY_GRID);
    let frames = geometry::transport_frame(&run.path, &grid, run.ode_tol)?;
    let d_curve = geometry::displacement(&run.path, 1.0, run.params.a, run.quad_tol)?;
    let f0 = &frames[0];

    let mut rows = Vec::with_capacity(grid.len());
    for f in &frames {
        let (s1, s2) = geometry::sigma_from_frame(&run.path, f);
        let d = d_curve.at(f.s);
        // E_ij(s) = e_i(0) . e_j(s).
        let e0 = [f0.e1, f0.e2, f0.e3];
        let es = [f.e1, f.e2, f.e3];
        let mut row = vec![f.s];
        for e in &es {
            row.extend_from_slice(&[e.x, e.y, e.z]);
        }
        for a in &e0 {
            for b in &es {
                row.push(a.dot(b));
            }
        }
        row.extend_from_slice(&[s1, s2, d.x, d.y]);
        rows.push(row);
    }
    let header = [
        "s", "e1x", "e1y", "e1z", "e2x", "e2y", "e2z", "e3x", "e3y", "e3z", "E11", "E12", "E13",
        "E21", "E22", "E23", "E31", "E32", "E33", "sigma1", "sigma2", "d1", "d2",
    ];
    report::write_csv(&out.join("frames.csv"), &header, rows)?;

    let closed = run.path.is_closed();
    let d_final = d_curve.final_displacement();
    let summary = GeometrySummary {
        closed,
        solid_angle: closed.then(|| geometry::solid_angle(&run.path)).transpose()?,
        holonomy_angle: closed
            .then(|| geometry::frame_matrix(&run.path, 1.0, run.ode_tol))
            .transpose()?
            .map(|e| e.holonomy_angle()),
        displacement: [d_final.x, d_final.y],
        displacement_norm: d_final.norm(),
    };
    report::write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}

fn cmd_evolve(run: &Run, out: &Path) -> CliResult<()> {
    let p = &run.params;
    let path = &run.path;

    // Direct vs factorized propagators.
    let direct = dynamics::integrate_propagator(p, path, Frame::Lab, run.ode_tol)?;
    let fact = adiabatic::build_factorized(p, path, 1.0, run.ode_tol)?;
    let errors = adiabatic::compare(&direct, &fact);
    let phi_p = magtrans::phi_p(path, p.a, &p.flux(), 1.0, run.quad_tol)?;

    // Phase determination, plus a seeded spread over distinct valid states.
    let base = StateMoments::ground(p);
    let alpha = adiabatic::berry_alpha(p, path, &base, run.quad_tol)?.final_value();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut spread = 0.0f64;
    for _ in 0..2 {
        let mut m = base.clone();
        let scale = rng.gen_range(0.5..2.0);
        m.cov *= scale;
        let i = rng.gen_range(0..3);
        let j = rng.gen_range(3..6);
        let c = rng.gen_range(-0.01..0.01);
        m.cov[(i, j)] += c;
        m.cov[(j, i)] += c;
        let other = adiabatic::berry_alpha(p, path, &m, run.quad_tol)?.final_value();
        spread = spread.max((other - alpha).abs());
    }

    // Quantum wavepacket verification on the ground state.
    let n0 = path.direction(0.0);
    let g = wavepacket::ground_state(p, &n0);
    let predicted = wavepacket::apply_factorized(p, path, &fact, 1.0, &g)?;
    let exact = wavepacket::propagate(&g, p, path, run.ode_tol)?;
    let overlap = wavepacket::overlap(&predicted, &exact)?;

    // Dense trajectory from the adiabatic equilibrium start.
    let z0 = PhaseSpaceState::new(
        g.mean_position(),
        g.mean_momentum(),
    );
    let t_grid = linspace(0.0, p.t_total, TRAJECTORY_GRID);
    let states = dynamics::integrate_lab(p, path, &z0, &t_grid, run.ode_tol)?;
    let frames = geometry::transport_frame(
        path,
        &t_grid.iter().map(|t| t / p.t_total).collect::<Vec<_>>(),
        run.ode_tol,
    )?;
    let rows = t_grid.iter().zip(&states).zip(&frames).map(|((&t, z), f)| {
        let xt = f.components(&z.x);
        vec![
            t, z.x.x, z.x.y, z.x.z, z.p.x, z.p.y, z.p.z, xt.x, xt.y, xt.z,
            dynamics::energy(z, &f.e3, p),
        ]
    });
    let header =
        ["t", "x1", "x2", "x3", "P1", "P2", "P3", "xt1", "xt2", "xt3", "energy"];
    report::write_csv(&out.join("trajectory.csv"), &header, rows)?;

    let closed = path.is_closed();
    let summary = EvolveSummary {
        omega_c: p.omega_c,
        omega: p.omega,
        a: p.a,
        t_total: p.t_total,
        closed,
        solid_angle: closed.then(|| geometry::solid_angle(path)).transpose()?,
        displacement: [fact.displacement.x, fact.displacement.y],
        phi_p,
        alpha,
        alpha_minus_phi_p: alpha - phi_p,
        alpha_state_spread: spread,
        map_error: errors.map_error,
        offset_error: errors.offset_error,
        relative_map_error: errors.relative_map_error,
        relative_offset_error: errors.relative_offset_error,
        symplectic_defect: direct.symplectic_defect(),
        overlap_magnitude: overlap.norm(),
        overlap_arg: overlap.arg(),
        seed: run.seed,
    };
    report::write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}

fn cmd_converge(run: &Run, out: &Path) -> CliResult<()> {
    let ts = run
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("converge requires a sweep block".into()))?;
    let mut entries = Vec::with_capacity(ts.len());
    for &t in ts {
        let p = SystemParams::new(run.params.omega_c, run.params.omega, run.params.a, t)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let direct = dynamics::integrate_propagator(&p, &run.path, Frame::Lab, run.ode_tol)?;
        let fact = adiabatic::build_factorized(&p, &run.path, 1.0, run.ode_tol)?;
        let errors = adiabatic::compare(&direct, &fact);
        let phi_p = magtrans::phi_p(&run.path, p.a, &p.flux(), 1.0, run.quad_tol)?;
        let alpha =
            adiabatic::berry_alpha(&p, &run.path, &StateMoments::ground(&p), run.quad_tol)?
                .final_value();
        let rel = if phi_p.abs() > 0.0 { (alpha - phi_p).abs() / phi_p.abs() } else { 0.0 };
        entries.push(SweepEntry {
            t_total: t,
            map_error: errors.map_error,
            offset_error: errors.offset_error,
            phi_p,
            alpha,
            alpha_relative_deviation: rel,
        });
    }
    let slope = |ys: &[f64]| -> f64 {
        let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let n = lx.len() as f64;
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        -num / den
    };
    let map_errs: Vec<f64> = entries.iter().map(|e| e.map_error).collect();
    let alpha_devs: Vec<f64> =
        entries.iter().map(|e| (e.alpha - e.phi_p).abs()).collect();
    // The phase-deviation fit is meaningless when the deviation is at the
    // numerical floor (a = 0 makes both phases identically zero).
    let alpha_order =
        (alpha_devs.iter().all(|&d| d > 1e-12)).then(|| slope(&alpha_devs));
    let summary = SweepSummary {
        entries,
        map_error_order: slope(&map_errs),
        alpha_deviation_order: alpha_order,
    };
    report::write_json(&out.join("sweep.json"), &summary)?;
    Ok(())
}

fn execute(cmd: &Command) -> CliResult<()> {
    let args = match cmd {
        Command::Geometry(a) | Command::Evolve(a) | Command::Converge(a) => a,
    };
    let run = load_config(args)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.out.display())))?;
    match cmd {
        Command::Geometry(_) => cmd_geometry(&run, &args.out),
        Command::Evolve(_) => cmd_evolve(&run, &args.out),
        Command::Converge(_) => cmd_converge(&run, &args.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dirac_core::output;
use dirac_core::scenario::fixtures::s1;
use dirac_core::*;

#[derive(Parser)]
#[command(name = "dirac", version, about = "Small-mutation limits of finite-trait selection-mutation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML). Defaults to the built-in two-trait chemostat S1.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV output; created if missing.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Single mutation scale; replaces the configured list.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt_out: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the finite system for every eps.
    Sim(Common),
    /// Solve the limit value function and log its events.
    Hj(Common),
    /// Backward dynamic programming on a time grid.
    Dp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Reconstruct the optimal path ending at this trait label at t_max.
        #[arg(long = "trait")]
        trait_label: Option<String>,
    },
    /// Steady states of every subsystem, printed as CSV.
    Eq(Common),
    /// Feynman-Kac estimate of u(t, i) against the ODE reference.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long = "trait")]
        trait_label: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
    /// Continuous-trait logistic model on [-L, L].
    Pde {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        dt_out: f64,
        #[arg(long, default_value_t = 2e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.02)]
        dx: f64,
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        /// Curvature k of the initial exponent h(x) = k x^2.
        #[arg(long, default_value_t = 0.075)]
        curvature: f64,
    },
    /// Sup error of eps ln u against the limit over the eps list.
    Study(Common),
}

enum Failure {
    Check(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<OdeError> for Failure {
    fn from(e: OdeError) -> Self {
        match e.class() {
            ErrorClass::Input => Failure::Input(e.to_string()),
            ErrorClass::Numerical => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<HjError> for Failure {
    fn from(e: HjError) -> Self {
        match e {
            HjError::InvalidArgument(_) | HjError::Hypothesis(EquilibriumError::EnumerationCap { .. }) => {
                Failure::Input(e.to_string())
            }
            HjError::Hypothesis(EquilibriumError::NonHyperbolic { .. })
            | HjError::Hypothesis(EquilibriumError::NoAdmissible { .. })
            | HjError::Hypothesis(EquilibriumError::MultipleAdmissible { .. }) => Failure::Check(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<MonteCarloError> for Failure {
    fn from(e: MonteCarloError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<PdeError> for Failure {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::MassEscape { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load(common: &Common) -> Result<Config, Failure> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => Config {
            scenario: s1(),
            run: RunParams::default(),
        },
    };
    if let Some(eps) = common.eps {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Failure::Input(format!("--eps must be positive, got {eps}")));
        }
        cfg.run.eps_list = vec![eps];
    }
    if let Some(t) = common.t_max {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Input(format!("--t-max must be positive, got {t}")));
        }
        cfg.run.t_max = t;
    }
    if let Some(dt) = common.dt_out {
        if !(dt > 0.0 && dt <= cfg.run.t_max) {
            return Err(Failure::Input(format!("--dt-out must lie in (0, t_max], got {dt}")));
        }
        cfg.run.dt_out = dt;
    }
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn trait_index(s: &Scenario, label: &str) -> Result<usize, Failure> {
    s.traits
        .index_of(label)
        .ok_or_else(|| Failure::Input(format!("unknown trait `{label}`; known: {}", s.traits.labels().join(", "))))
}

fn sim(common: &Common) -> Outcome {
    let Config { scenario: s, run } = load(common)?;
    let mut failed = Vec::new();
    for &eps in &run.eps_list {
        let traj = simulate_finite(&s, eps, run.t_max, run.dt_out)?;
        output::write_trajectory(create(&common.out_dir, &format!("trajectory_eps{eps}.csv"))?, &traj, &s)?;
        let bounds = check_mass_bounds(&traj, &s);
        println!("eps {eps}: mass window {}", if bounds.passed() { "holds" } else { "violated" });
        if !bounds.passed() {
            failed.push(eps);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("mass window violated at eps {failed:?}")))
    }
}

fn hj(common: &Common) -> Outcome {
    let Config { scenario: s, run } = load(common)?;
    let (vf, log) = evolve_hj(&s, run.t_max)?;
    let times = output_grid(run.t_max, run.dt_out);
    output::write_value_function(create(&common.out_dir, "value_function.csv")?, &vf, &times, &s)?;
    output::write_breakpoints(create(&common.out_dir, "breakpoints.csv")?, &log, &s)?;
    let rep = check_structure(&vf, &s);
    println!("{} events; structure checks {}", log.len(), if rep.passed() { "pass" } else { "fail" });
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("structure checks failed: {rep:?}")))
    }
}

fn dp(common: &Common, dt: f64, trait_label: Option<&str>) -> Outcome {
    let Config { scenario: s, run } = load(common)?;
    let grid = dp_solve(&s, run.t_max, dt)?;
    let stride = ((run.dt_out / dt).round() as usize).max(1);
    output::write_dp_grid(create(&common.out_dir, "dp_grid.csv")?, &grid, &s, stride)?;
    if let Some(label) = trait_label {
        let i = trait_index(&s, label)?;
        let path = optimal_path(&grid, grid.t_max(), i)
            .ok_or_else(|| Failure::Check(format!("trait `{label}` is unreachable at t = {}", grid.t_max())))?;
        output::write_path(create(&common.out_dir, "path.csv")?, &path, &s)?;
        println!("path to {label}: {} jumps, objective {}", path.n_jumps(), path_objective(&grid, &s, &path));
    }
    Ok(())
}

fn eq(common: &Common) -> Outcome {
    let Config { scenario: s, .. } = load(common)?;
    let mut reports = Vec::new();
    let mut problems = Vec::new();
    for set in Subset::full(s.n()).subsets().filter(|a| !a.is_empty()) {
        let a = Subsystem::new(&s, set).map_err(|e| Failure::Input(e.to_string()))?;
        match check_hypothesis_h(&s, a) {
            Ok(rep) => reports.push(rep),
            Err(e @ EquilibriumError::EnumerationCap { .. }) => return Err(Failure::Input(e.to_string())),
            Err(e) => problems.push(format!("{}: {e}", set.display_with(s.traits.labels()))),
        }
    }
    let stdout = io::stdout();
    output::write_equilibria(stdout.lock(), &reports, &s)?;
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(problems.join("; ")))
    }
}

fn mc(common: &Common, trait_label: &str, t: f64, n: usize) -> Outcome {
    let Config { scenario: s, run } = load(common)?;
    let i = trait_index(&s, trait_label)?;
    let eps = *run.eps_list.last().expect("eps list is non-empty");
    let dt = run.dt_out.min(1e-3);
    let traj = simulate_finite(&s, eps, t, dt)?;
    let schedule = ResourceSchedule::from_trajectory(&traj);
    let est = fk_estimate(&s, &schedule, eps, t, i, n, run.seed)?;
    let reference = traj.u[traj.times.len() - 1][i];
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    out.write_record(["eps", "t", "trait", "n", "estimate", "std_err", "reference"])?;
    out.write_record([
        eps.to_string(),
        t.to_string(),
        trait_label.to_string(),
        n.to_string(),
        est.estimate.to_string(),
        est.std_err.to_string(),
        reference.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn pde(out_dir: &Path, eps: f64, t_max: f64, dt_out: f64, dt: f64, dx: f64, half_width: f64, curvature: f64) -> Outcome {
    let p = logistic_problem(half_width, dx, curvature)?;
    let hist = simulate_pde(
        &p,
        PdeOptions {
            eps,
            t_max,
            dt,
            dt_out,
            diffusion: true,
        },
    )?;
    let wkb = wkb_extract(&hist);
    output::write_pde_snapshots(create(out_dir, "pde_snapshots.csv")?, &hist)?;
    output::write_pde_diagnostics(create(out_dir, "pde_diagnostics.csv")?, &hist, &wkb)?;
    let rep = check_pde_bounds(&hist, &p);
    match rep.first_violation() {
        None => {
            println!("a priori bounds hold at {} snapshots", rep.times.len());
            Ok(())
        }
        Some(v) => Err(Failure::Check(format!(
            "{} = {} outside [{}, {}] at t = {}",
            v.quantity, v.value, v.lower, v.upper, v.time
        ))),
    }
}

fn study(common: &Common) -> Outcome {
    let Config { scenario: s, run } = load(common)?;
    let id = common
        .config
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or("S1".to_string(), |p| p.to_string_lossy().into_owned());
    let result = run_study(&s, &id, &run.eps_list, run.t_max, run.dt_out);
    output::write_study(create(&common.out_dir, "study.csv")?, &result)?;
    if let Some(e) = &result.hj_failure {
        return Err(Failure::Numerical(format!("limit solve failed: {e}")));
    }
    for row in &result.rows {
        match (&row.error, &row.failure) {
            (Some(e), _) => println!("eps {}: error {e:.6} ({:.3} s)", row.eps, row.runtime_s),
            (None, Some(f)) => println!("eps {}: failed: {f}", row.eps),
            (None, None) => println!("eps {}: no error computed", row.eps),
        }
    }
    println!("errors {}", result.monotonicity_note());
    if result.passed() {
        Ok(())
    } else {
        Err(Failure::Check("study checks failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sim(c) => sim(c),
        Command::Hj(c) => hj(c),
        Command::Dp {
            common,
            dt,
            trait_label,
        } => dp(common, *dt, trait_label.as_deref()),
        Command::Eq(c) => eq(c),
        Command::Mc {
            common,
            trait_label,
            t,
            n,
        } => mc(common, trait_label, *t, *n),
        Command::Pde {
            out_dir,
            eps,
            t_max,
            dt_out,
            dt,
            dx,
            half_width,
            curvature,
        } => pde(out_dir, *eps, *t_max, *dt_out, *dt, *dx, *half_width, *curvature),
        Command::Study(c) => study(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

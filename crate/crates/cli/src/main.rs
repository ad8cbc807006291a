//! `ltvcert` — certify and simulate piecewise-smooth linear time-varying
//! systems with jumps.
//!
//! Exit codes: 0 success/feasible, 1 infeasible or golden mismatch,
//! 2 invalid input, 3 monitor violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use ltv_stability::certify::{
    self, lambda_bound, schedule_to_trajectory, switched_condition, Schedule,
};
use ltv_stability::config::SystemConfig;
use ltv_stability::lyapunov::{constants_formula, constants_spectral, estimate_c, ConstantsMode};
use ltv_stability::presets;
use ltv_stability::report::{fmt_f64, trace_csv, CertifyReport, IssInfo};
use ltv_stability::simulate::{self, PerturbationModel};
use ltv_stability::trajectory::MatrixTrajectory;
use ltv_stability::variation;

const EXIT_OK: u8 = 0;
const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ltvcert",
    version,
    about = "Stability certification for linear time-varying systems with jumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a system definition and print its regularity bounds
    Validate { config: PathBuf },
    /// Evaluate the affine-budget criterion and emit a certificate report
    Certify {
        config: PathBuf,
        /// Stability margin for the frozen-time dynamics (overrides the config)
        #[arg(long)]
        kappa: Option<f64>,
        /// Budget slope (overrides the config; scanned when absent)
        #[arg(long)]
        lambda: Option<f64>,
        /// Budget offset (overrides the config; minimized when absent)
        #[arg(long)]
        rho: Option<f64>,
        /// Constants route: spectral (default) or formula
        #[arg(long, value_parser = ["spectral", "formula"])]
        mode: Option<String>,
        /// Write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Integrate the system; optionally check a certificate along the way
    Simulate {
        config: PathBuf,
        /// Initial state, comma separated ("1,1")
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// End time (defaults to the configured horizon, two periods, or
        /// the defined horizon)
        #[arg(long)]
        tf: Option<f64>,
        /// Nominal step (defaults to (tf - t0) / 10000)
        #[arg(long)]
        step: Option<f64>,
        /// Write the trace CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Certificate JSON to verify the run against
        #[arg(long, value_name = "CERT_JSON")]
        check_iss: Option<PathBuf>,
    },
    /// Re-run a bundled example and diff it against its golden numbers
    Reproduce {
        /// One of: paper-sec5, remark-counterexample, switched-demo
        example: String,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LTVCERT_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => ltv_stability::configure_threads(n),
            _ => {
                eprintln!("error: LTVCERT_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(EXIT_INVALID);
            }
        }
    }
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Certify { config, kappa, lambda, rho, mode, json } => {
            cmd_certify(&config, kappa, lambda, rho, mode.as_deref(), json.as_deref())
        }
        Command::Simulate { config, x0, t0, tf, step, csv, check_iss } => {
            cmd_simulate(&config, &x0, t0, tf, step, csv.as_deref(), check_iss.as_deref())
        }
        Command::Reproduce { example } => cmd_reproduce(&example),
    };
    ExitCode::from(code)
}

fn invalid(err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    EXIT_INVALID
}

struct BuiltSystem {
    config: SystemConfig,
    traj: MatrixTrajectory,
    pert: PerturbationModel,
}

fn build(config_path: &Path) -> Result<BuiltSystem, u8> {
    let config = SystemConfig::from_path(config_path).map_err(invalid)?;
    let traj = config.build_trajectory().map_err(invalid)?;
    let pert = config.build_perturbation().map_err(invalid)?;
    Ok(BuiltSystem { config, traj, pert })
}

fn cmd_validate(config_path: &Path) -> u8 {
    let sys = match build(config_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let grid_step = sys.config.grid_step(&sys.traj);
    let report = match sys.traj.check_regularity(grid_step) {
        Ok(r) => r,
        Err(e) => return invalid(e),
    };
    println!("dimension:            {}", sys.traj.dim());
    match sys.traj.period() {
        Some(p) => println!("period:               {p}"),
        None => println!("horizon:              [0, {})", report.horizon),
    }
    println!("norm_bound:           {:.6}", report.l_bound);
    println!("alpha_max:            {:.6}", report.alpha_max);
    println!("jumps_per_window:     {}", report.jump_count_per_window);
    println!("assumption24_suspect: {}", report.assumption24_suspect);
    EXIT_OK
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    config_path: &Path,
    kappa_flag: Option<f64>,
    lambda_flag: Option<f64>,
    rho_flag: Option<f64>,
    mode_flag: Option<&str>,
    json_out: Option<&Path>,
) -> u8 {
    let sys = match build(config_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let kappa = kappa_flag.unwrap_or(sys.config.analysis.kappa);
    if !(kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    let lambda = lambda_flag.or(sys.config.analysis.lambda);
    let rho = rho_flag.or(sys.config.analysis.rho);
    let mode = match mode_flag {
        Some("formula") => ConstantsMode::Formula,
        Some(_) => ConstantsMode::Spectral,
        None => sys.config.constants_mode(),
    };
    let beta = sys.config.beta();
    let grid_step = sys.config.grid_step(&sys.traj);

    let regularity = match sys.traj.check_regularity(grid_step) {
        Ok(r) => r,
        Err(e) => return invalid(e),
    };
    if regularity.assumption24_suspect {
        return invalid(
            "the abscissa of the path looks non-absolutely-continuous (variation keeps \
             growing under grid refinement); certification requires a regular system",
        );
    }

    let mut constants = match mode {
        ConstantsMode::Spectral => match constants_spectral(&sys.traj, kappa, grid_step) {
            Ok(c) => c,
            Err(e) => return invalid(e),
        },
        ConstantsMode::Formula => {
            let c = match estimate_c(&sys.traj, kappa, beta, sys.config.s_max(), grid_step) {
                Ok(c) => c,
                Err(e) => return invalid(e),
            };
            match constants_formula(regularity.l_bound, regularity.alpha_max, kappa, beta, c) {
                Ok(c) => c,
                Err(e) => return invalid(e),
            }
        }
    };
    constants.beta = beta;

    let cert = match certify::certify(
        &sys.traj,
        &sys.pert,
        kappa,
        &constants,
        lambda,
        rho,
        sys.config.analysis.horizon,
    ) {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };

    // the report window: one period (periodic) or the certified horizon
    let window_end = sys.traj.period().unwrap_or(cert.horizon.1);
    let int_phi = match certify::excess_integral(&sys.traj, kappa, 0.0, window_end) {
        Ok(v) => v,
        Err(e) => return invalid(e),
    };
    let int_gamma = match certify::gamma_integral(&sys.pert, 0.0, window_end) {
        Ok(v) => v,
        Err(e) => return invalid(e),
    };
    let (tv_a, tv_phi, tv_tilde) = match (
        variation::tv_matrix(&sys.traj, 0.0, window_end),
        variation::tv_excess(&sys.traj, kappa, 0.0, window_end),
        variation::tv_shifted(&sys.traj, kappa, 0.0, window_end),
    ) {
        (Ok(a), Ok(p), Ok(t)) => (a, p, t),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return invalid(e),
    };

    let report = CertifyReport::assemble(
        sys.traj.dim(),
        sys.traj.period(),
        &regularity,
        &cert,
        lambda,
        rho,
        sys.config.grid_points(),
        (0.0, window_end),
        int_phi,
        int_gamma,
        &tv_a,
        &tv_phi,
        &tv_tilde,
    );

    println!("constants_mode: {}", constants.mode.as_str());
    println!("c1:             {:.6}", constants.c1);
    println!("c2:             {:.6}", constants.c2);
    println!("lambda_bound:   {:.6}", lambda_bound(&constants));
    println!("lambda:         {:.6}", cert.params.lambda);
    println!("int_phi:        {:.6}", int_phi);
    println!("int_gamma:      {:.6}", int_gamma);
    println!("tv_tilde:       {:.6}", tv_tilde.total);
    println!("lhs:            {:.6}", report.criterion.lhs);
    println!("rhs:            {:.6}", report.criterion.rhs);
    match report.criterion.min_rho {
        Some(r) => println!("min_rho:        {r:.6}"),
        None => println!("min_rho:        infeasible"),
    }
    println!("feasible:       {}", cert.feasible);
    if let Some(iss) = &report.iss {
        println!("iss: a={:.6} b={:.6} k1={:.6} k2={:.6} k3={:.6}", iss.a, iss.b, iss.k1, iss.k2, iss.k3);
    }

    let json = report.to_json();
    let json_path = json_out
        .map(Path::to_path_buf)
        .or_else(|| sys.config.output.as_ref().and_then(|o| o.report.clone().map(PathBuf::from)));
    if let Some(path) = json_path {
        if let Err(e) = std::fs::write(&path, &json) {
            return invalid(format!("cannot write {}: {e}", path.display()));
        }
        println!("report:         {}", path.display());
    }

    if cert.feasible {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

fn parse_x0(text: &str, dim: usize) -> Result<DVector<f64>, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != dim {
        return Err(format!("x0 has {} components, the system needs {dim}", parts.len()));
    }
    let mut x = DVector::zeros(dim);
    for (i, p) in parts.iter().enumerate() {
        x[i] = p
            .parse::<f64>()
            .map_err(|_| format!("x0 component {} is not a number: `{p}`", i + 1))?;
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    config_path: &Path,
    x0_text: &str,
    t0: f64,
    tf_flag: Option<f64>,
    step_flag: Option<f64>,
    csv_out: Option<&Path>,
    check_iss: Option<&Path>,
) -> u8 {
    let sys = match build(config_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let x0 = match parse_x0(x0_text, sys.traj.dim()) {
        Ok(x) => x,
        Err(e) => return invalid(e),
    };
    let tf = tf_flag.or(sys.config.analysis.horizon).unwrap_or_else(|| match sys.traj.period() {
        Some(p) => t0 + 2.0 * p,
        None => sys.traj.domain_end(),
    });
    if !(tf > t0) {
        return invalid(format!("tf = {tf} must exceed t0 = {t0}"));
    }
    let step = step_flag.unwrap_or((tf - t0) / 10_000.0);
    let kappa = sys.config.analysis.kappa;
    let kinks = match simulate::kink_breakpoints(&sys.traj, kappa, t0, tf) {
        Ok(k) => k,
        Err(e) => return invalid(e),
    };

    let trace = match simulate::integrate(&sys.traj, &sys.pert, &x0, t0, tf, step, &kinks) {
        Ok(t) => t,
        Err(e @ simulate::SimError::BlowUp { .. })
        | Err(e @ simulate::SimError::EnvelopeViolated { .. }) => {
            eprintln!("violation: {e}");
            return EXIT_VIOLATION;
        }
        Err(e) => return invalid(e),
    };
    if trace.nominal && sys.pert.g_explicit.is_none() {
        println!("note: no explicit perturbation map; simulating the nominal system (g = 0)");
    }

    let mut monitor = None;
    let mut iss_report = None;
    let mut violation_exit = None;
    if let Some(cert_path) = check_iss {
        let text = match std::fs::read_to_string(cert_path) {
            Ok(t) => t,
            Err(e) => return invalid(format!("cannot read {}: {e}", cert_path.display())),
        };
        let report = match CertifyReport::from_json(&text) {
            Ok(r) => r,
            Err(e) => return invalid(e),
        };
        if !report.criterion.feasible {
            return invalid("the supplied certificate is infeasible; nothing to check");
        }
        let Some(IssInfo { a, b, k1, k2, k3 }) = report.iss else {
            return invalid("the supplied certificate carries no decay constants");
        };
        let params = report.params();
        let mon = match simulate::monitor_w(&trace, &sys.traj, &sys.pert, &params) {
            Ok(m) => m,
            Err(e) => return invalid(e),
        };
        if let Some(v) = &mon.violation {
            eprintln!("monitor violation at t = {}: {:?}", v.t, v.kind);
            violation_exit = Some(EXIT_VIOLATION);
        }
        let iss = certify::IssConstants { a, b, k1, k2, k3 };
        let rep = match simulate::verify_iss(&trace, &iss, &sys.pert) {
            Ok(r) => r,
            Err(e) => return invalid(e),
        };
        if let Some((t, norm, env)) = rep.first_violation {
            eprintln!(
                "envelope violation at t = {t}: |x| = {norm:.6e} above envelope {env:.6e}; \
                 either the certificate computation or the integrator tolerance is at fault"
            );
            violation_exit = Some(EXIT_VIOLATION);
        } else {
            println!(
                "iss_margin:     {:.6e} (at t = {:.6})",
                rep.min_margin, rep.min_margin_t
            );
        }
        monitor = Some(mon);
        iss_report = Some(rep);
    }

    let csv_path = csv_out
        .map(Path::to_path_buf)
        .or_else(|| sys.config.output.as_ref().and_then(|o| o.trace.clone().map(PathBuf::from)));
    if let Some(path) = csv_path {
        let csv = trace_csv(&trace, monitor.as_ref(), iss_report.as_ref());
        if let Err(e) = std::fs::write(&path, csv) {
            return invalid(format!("cannot write {}: {e}", path.display()));
        }
        println!("trace:          {}", path.display());
    }
    println!("samples:        {}", trace.samples.len());
    println!("final_norm:     {:.6e}", trace.samples.last().unwrap().norm_x);

    violation_exit.unwrap_or(EXIT_OK)
}

struct GoldenCheck {
    name: &'static str,
    got: f64,
    expect: f64,
    tol: f64,
}

impl GoldenCheck {
    fn ok(&self) -> bool {
        (self.got - self.expect).abs() <= self.tol
    }
}

fn print_golden(checks: &[GoldenCheck]) -> bool {
    let mut all_ok = true;
    for c in checks {
        let status = if c.ok() { "ok" } else { "MISMATCH" };
        println!(
            "{:<12} got {} expect {} ± {:.0e}  [{status}]",
            c.name,
            fmt_f64(c.got),
            fmt_f64(c.expect),
            c.tol
        );
        all_ok &= c.ok();
    }
    all_ok
}

fn cmd_reproduce(example: &str) -> u8 {
    match example {
        "paper-sec5" => reproduce_paper_example(),
        "remark-counterexample" => reproduce_remark(),
        "switched-demo" => reproduce_switched(),
        other => invalid(format!(
            "unknown example `{other}`; available: {}",
            presets::IDS.join(", ")
        )),
    }
}

fn reproduce_paper_example() -> u8 {
    let cfg = match presets::load("paper-sec5").unwrap() {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let traj = cfg.build_trajectory().expect("bundled config is valid");
    let pert = cfg.build_perturbation().expect("bundled config is valid");
    let kappa = cfg.analysis.kappa;
    let lambda = cfg.analysis.lambda.expect("bundled config pins lambda");
    let grid_step = cfg.grid_step(&traj);
    let period = traj.period().unwrap();

    let constants = match constants_spectral(&traj, kappa, grid_step) {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let int_phi = certify::excess_integral(&traj, kappa, 0.0, period).unwrap();
    let int_gamma = certify::gamma_integral(&pert, 0.0, period).unwrap();
    let tv_tilde = variation::tv_shifted(&traj, kappa, 0.0, period).unwrap();
    let lhs_value = constants.c1 * int_phi
        + constants.c2 * int_gamma
        + constants.c2 * constants.c2 * tv_tilde.total;
    let rhs_value = lambda * period;
    let cert = certify::certify(&traj, &pert, kappa, &constants, Some(lambda), None, None)
        .unwrap();

    let tol = 1e-3;
    let all_ok = print_golden(&[
        GoldenCheck { name: "c1", got: constants.c1, expect: 0.2381, tol },
        GoldenCheck { name: "c2", got: constants.c2, expect: 0.5, tol },
        GoldenCheck { name: "int_phi", got: int_phi, expect: 2.2, tol },
        GoldenCheck { name: "int_gamma", got: int_gamma, expect: 0.8, tol },
        GoldenCheck { name: "tv_tilde", got: tv_tilde.total, expect: 2.2, tol },
        GoldenCheck { name: "lhs", got: lhs_value, expect: 1.4738, tol },
        GoldenCheck { name: "rhs", got: rhs_value, expect: 1.4954, tol },
    ]);
    println!("feasible     {}", cert.feasible);
    if all_ok && cert.feasible {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

fn reproduce_remark() -> u8 {
    let cfg = match presets::load("remark-counterexample").unwrap() {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let traj = cfg.build_trajectory().expect("bundled config is valid");
    let report = match traj.check_regularity(cfg.grid_step(&traj)) {
        Ok(r) => r,
        Err(e) => return invalid(e),
    };
    println!("assumption24_suspect: {}", report.assumption24_suspect);
    if report.assumption24_suspect {
        EXIT_OK
    } else {
        eprintln!("expected the absolute-continuity checker to flag this system");
        EXIT_INFEASIBLE
    }
}

fn reproduce_switched() -> u8 {
    let cfg = match presets::load("switched-demo").unwrap() {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let traj = cfg.build_trajectory().expect("bundled config is valid");
    let kappa_s = cfg.analysis.kappa; // stable margin doubles as the clip level
    let kappa_u = 0.35;
    let modes = vec![
        nalgebra::DMatrix::from_row_slice(2, 2, &[-1.5, 2.0, -2.0, -1.5]),
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.3, 2.0, -2.0, 0.3]),
    ];
    let schedule = Schedule::new(vec![(0.0, 0), (3.0, 1), (3.5, 0)], 4.0).unwrap();
    // the schedule rebuilt as a trajectory must match the bundled segments
    let rebuilt = schedule_to_trajectory(&modes, &schedule, true).unwrap();
    assert_eq!(rebuilt.segments().len(), traj.segments().len());

    let grid_step = cfg.grid_step(&traj);
    let constants = match constants_spectral(&traj, kappa_s, grid_step) {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let general =
        certify::lhs(&traj, &PerturbationModel::zero(), kappa_s, &constants, 0.0, 4.0).unwrap();
    let (lambda, rho) = (0.2, 0.0);
    let check = switched_condition(
        &modes, &schedule, kappa_s, kappa_u, &constants, lambda, rho, 0.0, 4.0,
    )
    .unwrap();
    let cert = certify::certify(
        &traj,
        &PerturbationModel::zero(),
        kappa_s,
        &constants,
        None,
        None,
        None,
    )
    .unwrap();

    println!("general_lhs   {}", fmt_f64(general));
    println!("switched_lhs  {}", fmt_f64(check.lhs));
    println!("switched_rhs  {}", fmt_f64(check.rhs));
    println!("dominates     {}", check.lhs >= general - 1e-9);
    println!("holds         {}", check.holds);
    println!("feasible      {}", cert.feasible);
    if check.lhs >= general - 1e-9 && check.holds && cert.feasible {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

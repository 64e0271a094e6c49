mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use phi_sasaki::bundle::System;
use phi_sasaki::catalog::FamilyStatus;
use phi_sasaki::frenet::{self, constancy_check};
use phi_sasaki::geometry::CheckReport;
use phi_sasaki::integrate::{integrate, IntegrateError, IntegratorConfig, Trajectory};
use phi_sasaki::verify::{self, Claim, Options};
use phi_sasaki::Error;

use output::{CheckRecord, ClaimRecord, FrenetSummary};
use scenario::{CheckKind, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "phi-sasaki",
    version,
    about = "Geodesics of phi-Sasaki metrics on tangent bundles of para-Kähler-Norden manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random sample points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integration step.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Integration interval as `t0,t1`.
    #[arg(long, global = true, value_parser = parse_tspan, allow_hyphen_values = true)]
    tspan: Option<(f64, f64)>,
    /// Flip the sign of the unit-bundle constraint force (self-test of the verification battery).
    #[arg(long, global = true, hide = true)]
    mutation: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Norden, involution, parallel-phi and curvature-purity conditions.
    Check,
    /// Integrate the scenario's system and write trajectory.csv and monitors.csv.
    Integrate,
    /// Integrate, then compute Frenet curvatures of the projected curve.
    Frenet,
    /// Run verification claims: a battery id, `all`, or the scenario's own claims.
    Verify {
        #[arg(default_value = "all")]
        target: String,
    },
}

fn parse_tspan(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `t0,t1`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// How a command failed: bad input (exit 2) or a failed run (exit 1).
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

type CmdResult = Result<bool, Failure>;

fn run_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Run(e.into())
}

impl Cli {
    fn load(&self) -> Result<Scenario, Failure> {
        let path = self.scenario.as_ref().ok_or_else(|| anyhow!("this command needs --scenario <path>"))?;
        let mut sc = Scenario::load(path)?;
        if let Some(seed) = self.seed {
            sc.sampling.seed = seed;
        }
        if let Some(h) = self.step {
            sc.step = h;
        }
        if let Some(span) = self.tspan {
            sc.t_span = span;
        }
        Ok(sc)
    }

    fn out_dir(&self, sc: Option<&Scenario>) -> Option<PathBuf> {
        self.out.clone().or_else(|| sc.and_then(|s| s.out_dir.clone()))
    }

    fn system(&self, sc: &Scenario) -> Result<System, Failure> {
        let s = sc.system()?.clone();
        Ok(if self.mutation && sc.is_unit_geodesic() { s.with_flipped_kappa_sign() } else { s })
    }
}

fn run_checks(sc: &Scenario) -> Vec<CheckReport> {
    let m = &sc.structure;
    let points = m.sample_points(sc.sampling);
    sc.checks
        .iter()
        .map(|k| match k {
            CheckKind::Norden => m.check_norden(&points, 1e-8),
            CheckKind::Involution => m.check_involution(&points, 1e-8),
            CheckKind::ParallelPhi => m.check_parallel_phi(&points, m.default_tolerance()),
            CheckKind::CurvaturePurity => m.check_curvature_purity(&points, m.default_tolerance()),
        })
        .collect()
}

fn cmd_check(cli: &Cli) -> CmdResult {
    let sc = cli.load()?;
    let reports = run_checks(&sc);
    output::print_checks(&sc.label, &reports);
    if let Some(dir) = cli.out_dir(Some(&sc)) {
        let records: Vec<CheckRecord> = reports.iter().map(CheckRecord::from).collect();
        output::write_json(&dir, "check.json", &records).map_err(run_err)?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

/// Integrate the scenario; a zero-length span yields an empty trajectory.
fn integrate_scenario(cli: &Cli, sc: &Scenario, partial_dir: Option<&Path>) -> Result<Trajectory, Failure> {
    let system = cli.system(sc)?;
    let init = sc.initial_state()?;
    if init.dim() != sc.structure.dim() {
        return Err(anyhow!("initial state has dimension {}, manifold has {}", init.dim(), sc.structure.dim()).into());
    }
    let (t0, t1) = sc.t_span;
    if t0 == t1 {
        return Ok(Trajectory { times: Vec::new(), states: Vec::new(), monitors: Vec::new() });
    }
    let cfg = IntegratorConfig::new(sc.step, t0, t1).with_method(sc.method).with_monitor_every(sc.monitor_every);
    match integrate(&system, &sc.structure, &init, &cfg) {
        Ok(traj) => Ok(traj),
        Err(e @ (IntegrateError::InvalidConfig(_) | IntegrateError::Init(_))) => Err(Failure::Config(e.into())),
        Err(e) => {
            if let (Some(partial), Some(dir)) = (e.partial(), partial_dir) {
                output::write_trajectory(dir, sc.structure.dim(), partial).map_err(run_err)?;
                eprintln!("partial trajectory written to {}", dir.display());
            }
            Err(run_err(e))
        }
    }
}

fn default_dir(cli: &Cli, sc: &Scenario) -> PathBuf {
    cli.out_dir(Some(sc)).unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_integrate(cli: &Cli) -> CmdResult {
    let sc = cli.load()?;
    let dir = default_dir(cli, &sc);
    let traj = integrate_scenario(cli, &sc, Some(&dir))?;
    let (tpath, mpath) = output::write_trajectory(&dir, sc.structure.dim(), &traj).map_err(run_err)?;
    println!("{} samples on [{}, {}] ({})", traj.len(), sc.t_span.0, sc.t_span.1, sc.label);
    if !traj.is_empty() {
        let d = traj.drift();
        println!(
            "drift: unit_norm {:.3e}  rho_sq {:.3e}  speed_sq {:.3e}  normal_velocity {:.3e}",
            d.unit_norm, d.rho_sq, d.speed_sq, d.normal_velocity
        );
    }
    println!("wrote {} and {}", tpath.display(), mpath.display());
    Ok(true)
}

fn cmd_frenet(cli: &Cli) -> CmdResult {
    let sc = cli.load()?;
    let traj = integrate_scenario(cli, &sc, cli.out_dir(Some(&sc)).as_deref())?;
    if traj.is_empty() {
        return Err(anyhow!("Frenet analysis needs a non-empty t-span").into());
    }
    let (arc, result) = match frenet::analyze(&sc.structure, &traj, sc.jet_method(), sc.curvature) {
        Ok(r) => r,
        Err(e @ (Error::VerticalCurve { .. } | Error::Signature { .. })) => return Err(run_err(e)),
        Err(e) => return Err(Failure::Config(e.into())),
    };
    let report = constancy_check(&result, sc.frenet_tolerance);
    let summary = FrenetSummary {
        frame_rank: result.frame_rank,
        samples: result.times.len(),
        arc_length: arc.s.last().copied().unwrap_or(0.0),
        speed_deviation: arc.speed_deviation(),
        mean_curvatures: (0..result.frame_rank).map(|i| result.mean_curvature(i)).collect(),
        constancy: report.deviations.clone(),
        tolerance: report.tolerance,
        constant: report.passed.clone(),
        degenerate_samples: result.degenerate_samples,
    };
    println!(
        "frame rank {} over {} samples, arc length {:.6}",
        summary.frame_rank, summary.samples, summary.arc_length
    );
    for (i, k) in summary.mean_curvatures.iter().enumerate() {
        println!("k{} = {:.12}  (deviation {:.3e})", i + 1, k, summary.constancy.get(i).copied().unwrap_or(0.0));
    }
    let dir = default_dir(cli, &sc);
    let csv = output::write_frenet_csv(&dir, &arc, &result).map_err(run_err)?;
    let json = output::write_json(&dir, "frenet.json", &summary).map_err(run_err)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(true)
}

fn claim(id: &str, description: String, measured: f64, threshold: f64) -> Claim {
    Claim { id: id.into(), description, measured, threshold, passed: measured < threshold }
}

/// Structure checks plus, when the scenario names a closed-form family, its residual and integration error.
fn scenario_claims(cli: &Cli, sc: &Scenario) -> Result<Vec<Claim>, Failure> {
    let mut claims: Vec<Claim> = run_checks(sc)
        .iter()
        .map(|r| Claim {
            id: "check".into(),
            description: r.check.to_string(),
            measured: r.max_residual,
            threshold: r.tolerance,
            passed: r.passed,
        })
        .collect();
    if let Some(f) = &sc.family {
        if f.status == FamilyStatus::Exact {
            let res = f.residual(&sc.structure, 201).map_err(|e| Failure::Config(e.into()))?;
            claims.push(claim("family", format!("{} residual", f.name), res.max, 1e-8));
        }
        match integrate_scenario(cli, sc, None) {
            Ok(traj) if !traj.is_empty() => {
                if f.status == FamilyStatus::Exact {
                    let err = f.max_error(&traj.times, &traj.states).map_err(|e| Failure::Config(e.into()))?;
                    claims.push(claim("integrate", format!("{} integrated vs closed form", f.name), err, 1e-6));
                }
                if sc.is_unit_geodesic() {
                    claims.push(claim("drift", "unit-bundle invariant drift".into(), traj.drift().max(), 1e-9));
                }
            }
            Ok(_) => {}
            Err(Failure::Run(e)) => claims.push(Claim {
                id: "integrate".into(),
                description: format!("integration failed: {e}"),
                measured: f64::NAN,
                threshold: f64::NAN,
                passed: false,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(claims)
}

fn cmd_verify(cli: &Cli, target: &str) -> CmdResult {
    let (claims, dir) = if cli.scenario.is_some() {
        let sc = cli.load()?;
        (scenario_claims(cli, &sc)?, cli.out_dir(Some(&sc)))
    } else {
        let opts = Options { seed: cli.seed.unwrap_or(Options::default().seed), mutate: cli.mutation };
        let claims = match verify::run(target, &opts) {
            Ok(c) => c,
            Err(Error::UnknownEntry(name)) => {
                return Err(anyhow!(
                    "unknown verification target `{name}` (expected all or one of {})",
                    verify::battery_ids().join(", ")
                )
                .into())
            }
            Err(e) => return Err(run_err(e)),
        };
        (claims, cli.out_dir(None))
    };
    output::print_claims(&claims);
    if let Some(dir) = dir {
        let records: Vec<ClaimRecord> = claims.iter().map(ClaimRecord::from).collect();
        output::write_json(&dir, "verify.json", &records).map_err(run_err)?;
    }
    Ok(claims.iter().all(|c| c.passed))
}

fn validate_globals(cli: &Cli) -> anyhow::Result<()> {
    if let Some(h) = cli.step {
        if !(h > 0.0 && h.is_finite()) {
            bail!("--step must be positive and finite, got {h}");
        }
    }
    if let Some((a, b)) = cli.tspan {
        if !(a.is_finite() && b.is_finite() && b >= a) {
            bail!("--tspan needs finite t0 <= t1, got {a},{b}");
        }
    }
    if let Some(p) = &cli.scenario {
        if !Path::new(p).exists() {
            bail!("scenario file {} does not exist", p.display());
        }
    }
    Ok(())
}

/// Print an error chain, skipping causes already quoted by their parent's message.
fn report(e: &anyhow::Error) {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    eprintln!("error: {msg}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = validate_globals(&cli).context("invalid arguments").map_err(Failure::Config).and_then(|()| match &cli
        .command
    {
        Command::Check => cmd_check(&cli),
        Command::Integrate => cmd_integrate(&cli),
        Command::Frenet => cmd_frenet(&cli),
        Command::Verify { target } => cmd_verify(&cli, target),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            report(&e);
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            report(&e);
            ExitCode::from(2)
        }
    }
}

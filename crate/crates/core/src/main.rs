use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use morsehomology::complex::Coefficients;
use morsehomology::flow::set_default_max_time;
use morsehomology::pipeline::{run_scenario, PipelineError};
use morsehomology::report::{dump_flowlines, report_json, report_text};
use morsehomology::scenario::{builtin, load_scenario_file, Scenario};

/// Morse homology of a level-set manifold: critical points, signed flow-line
/// counts, homology over Z and Z/2, and the standard verification checks.
#[derive(Parser, Debug)]
#[command(name = "morsehomology", disable_help_subcommand = true)]
struct Cli {
    /// Built-in scenario name (sphere_quadratic, sphere_two_peaks,
    /// torus_tilted, torus_tilted(0.4), torus_untilted, rp2).
    #[arg(long, conflicts_with = "file")]
    scenario: Option<String>,

    /// Scenario TOML file.
    #[arg(long)]
    file: Option<PathBuf>,

    /// Orientation seed, overriding the scenario's.
    #[arg(long)]
    or_seed: Option<u64>,

    /// Comma-separated coefficient rings: z, z2.
    #[arg(long, default_value = "z,z2")]
    coefficients: String,

    /// Second built-in scenario to compute the continuation chain map to.
    #[arg(long)]
    continue_to: Option<String>,

    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Report format.
    #[arg(long, default_value = "text", value_parser = ["json", "text"])]
    format: String,

    /// Write every connecting-orbit trajectory as CSV.
    #[arg(long)]
    dump_flowlines: Option<PathBuf>,

    /// Integration time budget per trajectory.
    #[arg(long)]
    max_time: Option<f64>,
}

fn parse_coefficients(s: &str) -> Result<Vec<Coefficients>, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.trim() {
            "z" => out.push(Coefficients::Integers),
            "z2" => out.push(Coefficients::ModTwo),
            other => return Err(format!("unknown coefficient ring `{other}` (use z, z2)")),
        }
    }
    if out.is_empty() {
        return Err("at least one coefficient ring is required".into());
    }
    out.dedup();
    Ok(out)
}

fn load(cli: &Cli) -> Result<Scenario, String> {
    let mut sc = match (&cli.scenario, &cli.file) {
        (Some(name), None) => builtin(name).map_err(|e| e.to_string())?,
        (None, Some(path)) => load_scenario_file(path).map_err(|e| e.to_string())?,
        _ => return Err("exactly one of --scenario or --file is required".into()),
    };
    if let Some(seed) = cli.or_seed {
        sc.or_seed = seed;
    }
    if let Some(mt) = cli.max_time {
        if !(mt.is_finite() && mt > 0.0) {
            return Err("--max-time must be positive".into());
        }
        sc.max_time = Some(mt);
    }
    if let Some(t) = &cli.continue_to {
        sc.continue_to = Some(t.clone());
    }
    Ok(sc)
}

fn run(cli: &Cli) -> Result<ExitCode, (i32, String)> {
    let coeffs = parse_coefficients(&cli.coefficients).map_err(|m| (3, m))?;
    let sc = load(cli).map_err(|m| (3, m))?;
    if let Some(mt) = sc.max_time {
        set_default_max_time(mt);
    }
    let target = match &sc.continue_to {
        Some(name) => Some(builtin(name).map_err(|e| (3, e.to_string()))?),
        None => None,
    };

    let outcome = run_scenario(&sc, &coeffs, target.as_ref())
        .map_err(|e: PipelineError| (e.exit_code(), e.to_string()))?;

    let rendered = match cli.format.as_str() {
        "json" => report_json(&outcome.report),
        _ => report_text(&outcome.report),
    };
    match &cli.report {
        Some(path) => std::fs::write(path, &rendered)
            .map_err(|e| (3, format!("cannot write {}: {e}", path.display())))?,
        None => print!("{rendered}"),
    }

    if let Some(path) = &cli.dump_flowlines {
        dump_flowlines(path, &sc.spec, &outcome.orbits)
            .map_err(|e| (3, format!("cannot write {}: {e}", path.display())))?;
    }

    if outcome.all_checks_pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        for (name, c) in &outcome.report.checks {
            if !c.pass {
                eprintln!("check failed: {name}: {}", c.details);
            }
        }
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(3);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}

//! `multicruise` command-line tool: single runs, paired comparisons, seed
//! sweeps and scenario generation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use multicruise::report::{batch, compare, fuel_rate_csv, BatchParams, ComparisonReport};
use multicruise::scenario::{gen_highway, gen_simple_overtake, load_scenario, run_scenario, Density, Profile, ScenarioError};
use multicruise::sim::{RunStatus, Summary};
use multicruise::{Controller, Scenario, SimTrace};

#[derive(Parser)]
#[command(name = "multicruise", version, about = "Energy-aware lane selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// multi-cruise or lane-following; defaults to the scenario's ego controller.
        #[arg(long)]
        controller: Option<Controller>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both controllers on one scenario and write report.json.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparisons over generated highways.
    Batch {
        #[arg(long, default_value_t = 12.0)]
        length_km: f64,
        #[arg(long, default_value = "moderate")]
        density: Density,
        #[arg(long, default_value = "rolling")]
        profile: Profile,
        /// A seed count `N` (seeds 1..=N) or a comma-separated seed list.
        #[arg(long, default_value = "20")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MULTICRUISE_WORKERS")]
        workers: Option<usize>,
    },
    /// Write a generated scenario file.
    Generate {
        #[command(subcommand)]
        kind: Generate,
    },
}

#[derive(Subcommand)]
enum Generate {
    /// The single-lead overtake on a 1600 m road.
    SimpleOvertake {
        #[arg(long)]
        out: PathBuf,
    },
    /// A randomized highway with ambient traffic.
    Highway {
        #[arg(long, default_value_t = 12.0)]
        length_km: f64,
        #[arg(long, default_value = "moderate")]
        density: Density,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "rolling")]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_COLLISION: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Completed => 0,
        RunStatus::Collision => EXIT_COLLISION,
        RunStatus::Timeout => EXIT_TIMEOUT,
    }
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if spec.contains(',') {
        return spec.split(',').map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`"))).collect();
    }
    let n: u64 = spec.trim().parse().with_context(|| format!("bad seed count `{spec}`"))?;
    anyhow::ensure!(n >= 1, "at least one seed is required");
    Ok((1..=n).collect())
}

fn write(path: &Path, body: &str) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_run(dir: &Path, trace: &SimTrace) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&trace.summary)?)
}

fn describe(s: &Summary) -> String {
    format!(
        "{}: {} in {:.2} s, {:.1} m, {:.3} g fuel, {} lane changes",
        s.controller, s.status, s.trip_time_s, s.distance_m, s.consumed_fuel_g, s.lane_changes
    )
}

fn load(path: &Path) -> Result<Scenario, u8> {
    load_scenario(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_VALIDATION
    })
}

fn cmd_run(scenario: &Path, controller: Option<Controller>, out: &Path) -> anyhow::Result<u8> {
    let s = match load(scenario) {
        Ok(s) => s,
        Err(code) => return Ok(code),
    };
    let controller = controller.unwrap_or(s.ego.controller);
    if controller == Controller::AmbientTraffic {
        eprintln!("error: the ego controller must be multi-cruise or lane-following");
        return Ok(EXIT_VALIDATION);
    }
    let trace = run_scenario(&s, controller).map_err(anyhow::Error::from)?;
    write_run(out, &trace)?;
    println!("{}", describe(&trace.summary));
    if let Some(c) = &trace.collision {
        eprintln!(
            "error: collision at {:.2} s in lane {} between vehicles {} and {} ({:.3} m overlap)",
            c.time, c.lane, c.vehicles.0 .0, c.vehicles.1 .0, c.overlap
        );
    } else if trace.summary.status == RunStatus::Timeout {
        eprintln!("error: trip not finished within {:.1} s", trace.summary.trip_time_s);
    }
    Ok(status_code(trace.summary.status))
}

fn cmd_compare(scenario: &Path, out: &Path) -> anyhow::Result<u8> {
    let s = match load(scenario) {
        Ok(s) => s,
        Err(code) => return Ok(code),
    };
    let c = compare(&s)?;
    write_run(&out.join("multi-cruise"), &c.multicruise)?;
    write_run(&out.join("lane-following"), &c.lane_following)?;
    write(&out.join("fuel_rate.csv"), &fuel_rate_csv(&c.multicruise, &c.lane_following))?;
    write(&out.join("report.json"), &serde_json::to_string_pretty(&c.report)?)?;
    print_report(&c.report);
    let codes = [status_code(c.report.multicruise.status), status_code(c.report.lane_following.status)];
    Ok(if codes.contains(&EXIT_COLLISION) { EXIT_COLLISION } else { codes.into_iter().max().unwrap_or(0) })
}

fn print_report(r: &ComparisonReport) {
    println!("{}", describe(&r.multicruise));
    println!("{}", describe(&r.lane_following));
    match r.relative_fuel {
        Some(x) => println!("relative fuel: {x:.4}"),
        None => println!("relative fuel: n/a (a run did not complete)"),
    }
}

fn cmd_batch(params: BatchParams, seeds: &str, out: &Path, workers: Option<usize>) -> anyhow::Result<u8> {
    let seeds = parse_seeds(seeds)?;
    anyhow::ensure!(params.length_km > 0.0, "--length-km must be positive");
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = batch(params, &seeds, workers);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    println!("{:>8} {:>10} {:>10} {:>12} {:>12} {:>8}", "seed", "mc_fuel_g", "lf_fuel_g", "relative", "mc_time_s", "changes");
    for r in &report.rows {
        let rel = r.relative_fuel.map_or("failed".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:>8} {:>10.1} {:>10.1} {:>12} {:>12.1} {:>8}",
            r.seed, r.multicruise.consumed_fuel_g, r.lane_following.consumed_fuel_g, rel, r.multicruise.trip_time_s, r.multicruise.lane_changes
        );
    }
    let a = report.aggregate;
    let f = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "completed {} failed {} | relative fuel mean {} min {} max {} | share <= 1: {}",
        a.completed,
        a.failed,
        f(a.mean_relative_fuel),
        f(a.min_relative_fuel),
        f(a.max_relative_fuel),
        f(a.share_not_worse)
    );
    Ok(0)
}

fn cmd_generate(kind: Generate) -> anyhow::Result<u8> {
    let (scenario, out): (Scenario, PathBuf) = match kind {
        Generate::SimpleOvertake { out } => (gen_simple_overtake(), out),
        Generate::Highway { length_km, density, seed, profile, out } => {
            anyhow::ensure!(length_km > 0.0, "--length-km must be positive");
            (gen_highway(length_km, density, seed, profile), out)
        }
    };
    let body = if out.extension().is_some_and(|e| e == "json") { scenario.to_json() } else { scenario.to_toml() };
    write(&out, &body)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, controller, out } => cmd_run(&scenario, controller, &out),
        Command::Compare { scenario, out } => cmd_compare(&scenario, &out),
        Command::Batch { length_km, density, profile, seeds, out, workers } => {
            cmd_batch(BatchParams { length_km, density, profile }, &seeds, &out, workers)
        }
        Command::Generate { kind } => cmd_generate(kind),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<ScenarioError>() {
                Some(_) => ExitCode::from(EXIT_VALIDATION),
                None => ExitCode::FAILURE,
            }
        }
    }
}

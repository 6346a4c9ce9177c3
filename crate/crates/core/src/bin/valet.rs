//! Command-line front end: generate a world, build and store a map, localize
//! against it, score trajectories, sweep feature dropout.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use valet_slam::eval::config::{read_json, write_json};
use valet_slam::eval::{self, ate, nees, recall_study, run_localization, run_mapping, EvalError, RunConfig, RunReport};
use valet_slam::map_store;
use valet_slam::sim::trajectory::path_length;
use valet_slam::sim::{generate_world, RouteSpec, WorldModel, WorldSpec};

#[derive(Parser)]
#[command(name = "valet", version, about = "Semantic mapping and localization on a synthetic parking lot")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a lot from a world spec and write it as JSON.
    GenWorld {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the lot's default loop route.
        #[arg(long)]
        route_out: Option<PathBuf>,
    },
    /// Drive the route, build the map and store it.
    Map {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        route: PathBuf,
        /// Run configuration JSON; defaults apply when omitted.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optimized trajectory CSV.
        #[arg(long)]
        traj: Option<PathBuf>,
        /// Ground-truth trajectory CSV.
        #[arg(long)]
        gt_out: Option<PathBuf>,
    },
    /// Localize a second drive against a stored map.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        gt_out: Option<PathBuf>,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Localize once per dropout probability.
    RecallStudy {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        world: PathBuf,
        /// Defaults to the lot's loop route.
        #[arg(long)]
        route: Option<PathBuf>,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4")]
        drop_sweep: Vec<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("valet: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(path: Option<&Path>) -> Result<RunConfig, EvalError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply_env()?;
            Ok(cfg)
        }
    }
}

fn world(path: &Path) -> Result<WorldModel, EvalError> {
    let w: WorldModel = read_json(path)?;
    if !w.within_extent() {
        return Err(EvalError::Sim(valet_slam::sim::SimError::MalformedSpec(format!(
            "{}: geometry leaves the world extent",
            path.display()
        ))));
    }
    Ok(w)
}

fn load_map(path: &Path, cfg: &RunConfig) -> Result<valet_slam::mapping::GlobalMap, EvalError> {
    let map = map_store::load(path)?;
    if map.digest != cfg.map_digest() {
        eprintln!("valet: warning: {} was built with different mapping settings", path.display());
    }
    Ok(map)
}

fn finish(report: &RunReport, path: Option<&PathBuf>) -> Result<(), EvalError> {
    match path {
        Some(p) => write_json(p, report),
        None => {
            println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            Ok(())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), EvalError> {
    match cmd {
        Cmd::GenWorld {
            spec,
            seed,
            out,
            route_out,
        } => {
            let mut spec: WorldSpec = read_json(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let w = generate_world(&spec)?;
            write_json(&out, &w)?;
            if let Some(r) = route_out {
                write_json(&r, &RouteSpec::from_points(&w.loop_waypoints()))?;
            }
        }
        Cmd::Map {
            world: wp,
            route,
            noise,
            out,
            report,
            traj,
            gt_out,
        } => {
            let cfg = config(noise.as_deref())?;
            let w = world(&wp)?;
            let route: RouteSpec = read_json(&route)?;
            let run = run_mapping(&w, &route, &cfg)?;
            map_store::save(&run.output.map, &out)?;
            if let Some(p) = traj {
                eval::write_trajectory(&p, &run.output.trajectory)?;
            }
            if let Some(p) = gt_out {
                eval::write_trajectory(&p, &run.truth)?;
            }
            finish(&run.report, report.as_ref())?;
        }
        Cmd::Localize {
            map,
            world: wp,
            route,
            noise,
            traj,
            report,
            gt_out,
        } => {
            let cfg = config(noise.as_deref())?;
            let m = load_map(&map, &cfg)?;
            let w = world(&wp)?;
            let route: RouteSpec = read_json(&route)?;
            let run = run_localization(&m, &w, &route, &cfg)?;
            if let Some(p) = traj {
                eval::write_trajectory(&p, &run.estimate)?;
            }
            if let Some(p) = gt_out {
                eval::write_trajectory(&p, &run.truth)?;
            }
            finish(&run.report, report.as_ref())?;
        }
        Cmd::Eval { est, gt, report } => {
            let e = eval::read_trajectory(&est)?;
            let g = eval::read_trajectory(&gt)?;
            let (rmse, max_err) = ate(&e, &g)?;
            let length = path_length(&g);
            let r = RunReport {
                command: "eval".into(),
                frames: Some(eval::associate(&e, &g).len()),
                path_length: Some(length),
                rmse: Some(rmse),
                max_err: Some(max_err),
                nees: Some(nees(rmse, length)?),
                ..RunReport::default()
            };
            finish(&r, report.as_ref())?;
        }
        Cmd::RecallStudy {
            map,
            world: wp,
            route,
            noise,
            drop_sweep,
            report,
        } => {
            if let Some(p) = drop_sweep.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(EvalError::Sim(valet_slam::sim::SimError::MalformedSpec(format!(
                    "dropout probability {p} is outside [0, 1]"
                ))));
            }
            let cfg = config(noise.as_deref())?;
            let m = load_map(&map, &cfg)?;
            let w = world(&wp)?;
            let route = match route {
                Some(p) => read_json(&p)?,
                None => RouteSpec::from_points(&w.loop_waypoints()),
            };
            finish(&recall_study(&m, &w, &route, &cfg, &drop_sweep)?, report.as_ref())?;
        }
    }
    Ok(())
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pumptrack::config::{merge_assignments, ScenarioConfig, BOUNDS_KEYS};
use pumptrack::format::sig;
use pumptrack::mocap::{extract_bounds, BoundsReport, ScalarSeries};
use pumptrack::ocp::{self, bound_contacts, lap_comparison, OcpProblem, RunSummary, Side};
use pumptrack::simulate::{coast_time_to, rollout};
use pumptrack::{Error, Scenario};

/// Tolerance used when reporting bound contacts of the optimal link length.
const CONTACT_TOL: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "pumptrack", version, about = "Pumping a bike through banked pump-track curves")]
struct Cli {
    /// Scenario file (`key = value`); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (simulate) or directory (optimize).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a control sequence and write the trajectory CSV.
    Simulate {
        /// CSV with a `u` column holding one control per step.
        #[arg(long)]
        controls: PathBuf,
    },
    /// Solve the optimal pumping problem.
    Optimize {
        /// Initial guess (CSV with a `u` column); zeros when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Time for the unpumped system at fixed link length to reach a target azimuth.
    Coast(CoastArgs),
    /// Extract link and acceleration bounds from measured series.
    Bounds {
        /// `t,l` link-length series.
        l_series: PathBuf,
        /// `t,a` acceleration series.
        a_series: PathBuf,
        /// Merge the bounds into this scenario file (created if missing).
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CoastArgs {
    /// Fixed link length [m].
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    l: Option<f64>,
    /// Evaluate l_min, the midpoint and l_max.
    #[arg(long)]
    sweep: bool,
    /// Target azimuth [rad]; one lap past x0 when omitted.
    #[arg(long)]
    target: Option<f64>,
}

enum Failure {
    Input(Error),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged) => {
            eprintln!("error: solver did not converge; artifacts are flagged `converged = false`");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bounds { l_series, a_series, write_config } => bounds(l_series, a_series, write_config.as_deref()),
        cmd => {
            let cfg = match &cli.config {
                Some(p) => ScenarioConfig::load(p)?,
                None => ScenarioConfig::default(),
            };
            match cmd {
                Command::Simulate { controls } => simulate(&cfg, controls, cli.out.as_deref()),
                Command::Optimize { init } => optimize(&cfg, init.as_deref(), cli.out.as_deref()),
                Command::Coast(args) => coast(&cfg.scenario, args),
                Command::Bounds { .. } => unreachable!(),
            }
        }
    }
}

fn simulate(cfg: &ScenarioConfig, controls: &Path, out: Option<&Path>) -> Outcome {
    let sc = &cfg.scenario;
    let u = read_controls(controls)?;
    if u.len() != sc.steps() {
        return Err(Error::invalid(format!("{} has {} controls, scenario needs N = {}", controls.display(), u.len(), sc.steps())).into());
    }
    let traj = rollout(sc, &u)?;
    let out = out.unwrap_or(Path::new("trajectory.csv"));
    traj.write_csv(io::BufWriter::new(fs::File::create(out)?))?;
    info!("wrote {}", out.display());

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "terminal_phi = {}", sig(traj.terminal().phi))?;
    match ocp::curve_one_gain(sc, &traj) {
        Ok(dv) => writeln!(stdout, "delta_v_curve_one = {}", sig(dv))?,
        Err(_) => writeln!(stdout, "delta_v_curve_one = unreached")?,
    }
    writeln!(stdout, "energy_drift = {}", sig(traj.energy_drift()))?;
    Ok(())
}

fn optimize(cfg: &ScenarioConfig, init: Option<&Path>, out: Option<&Path>) -> Outcome {
    let sc = &cfg.scenario;
    let problem = OcpProblem::new(sc.clone())?;
    let sol = match init {
        Some(p) => ocp::solve_from(&problem, &cfg.solver, &read_controls(p)?)?,
        None => ocp::solve(&problem, &cfg.solver)?,
    };

    let dir = out.unwrap_or(Path::new("out"));
    fs::create_dir_all(dir)?;
    let mut w = io::BufWriter::new(fs::File::create(dir.join("u_star.csv"))?);
    writeln!(w, "t,u")?;
    for (k, u) in sol.controls.iter().enumerate() {
        writeln!(w, "{},{}", sig(sc.time(k)), sig(*u))?;
    }
    w.flush()?;
    sol.trajectory.write_csv(io::BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?))?;

    let mut summary = RunSummary::new(sc, &sol).to_string();
    summary.push_str(&format!("outer_iterations = {}\n", sol.outer_iterations));
    match lap_comparison(sc, &sol.trajectory, sc.bounds.l_max) {
        Ok(c) => {
            summary.push_str(&format!("coast_time_l_max_s = {}\n", sig(c.coast_time)));
            summary.push_str(&format!("lap_time_reduction = {}\n", sig(c.reduction)));
        }
        Err(e) => summary.push_str(&format!("coast_time_l_max_s = unavailable ({e})\n")),
    }
    for c in bound_contacts(&sol.trajectory, &sc.bounds, CONTACT_TOL) {
        let side = match c.side {
            Side::Lower => "l_min",
            Side::Upper => "l_max",
        };
        summary.push_str(&format!(
            "contact = {side} phi {}..{} t {}..{}\n",
            sig(c.phi_start),
            sig(c.phi_end),
            sig(sc.time(c.first)),
            sig(sc.time(c.last))
        ));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");

    if sol.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn coast(sc: &Scenario, args: &CoastArgs) -> Outcome {
    sc.validate()?;
    let target = args.target.unwrap_or(sc.x0.phi + 2.0 * std::f64::consts::PI);
    if !target.is_finite() {
        return Err(Error::invalid("target must be finite").into());
    }
    let b = &sc.bounds;
    let entries: Vec<(&str, f64)> = if args.sweep {
        vec![("l_min", b.l_min), ("mid", b.l_mid()), ("l_max", b.l_max)]
    } else {
        vec![("l", args.l.expect("clap enforces --l or --sweep"))]
    };
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "label,l,target_phi,time_s")?;
    for (label, l) in entries {
        match coast_time_to(sc, target, l) {
            Ok(t) => writeln!(stdout, "{label},{},{},{}", sig(l), sig(target), sig(t))?,
            Err(e) => {
                warn!("{label}: {e}");
                writeln!(stdout, "{label},{},{},horizon_exceeded", sig(l), sig(target))?
            }
        }
    }
    Ok(())
}

fn bounds(l_path: &Path, a_path: &Path, write_config: Option<&Path>) -> Outcome {
    let l = ScalarSeries::read_csv(l_path)?;
    let a = ScalarSeries::read_csv(a_path)?;
    let b = extract_bounds(&l, &a)?;
    print!("{}", BoundsReport(&b));
    if let Some(p) = write_config {
        let existing = if p.exists() { fs::read_to_string(p)? } else { String::new() };
        // shortest round-trip form, like the rest of the scenario file
        let values = [b.l_min, b.l_max, b.u_min, b.u_max];
        let updates: Vec<(&str, String)> = BOUNDS_KEYS.iter().zip(values).map(|(k, v)| (*k, v.to_string())).collect();
        let merged = merge_assignments(&existing, &updates);
        if let Err(e) = ScenarioConfig::parse(&merged, p) {
            warn!("merged scenario does not validate: {e}");
        }
        fs::write(p, merged)?;
        info!("updated {}", p.display());
    }
    Ok(())
}

/// Column `u` of a CSV file with a header row.
fn read_controls(path: &Path) -> Result<Vec<f64>, Error> {
    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line: line as usize, msg };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(fs::File::open(path)?);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = header.iter().position(|h| h == "u").ok_or_else(|| parse_err(1, "no `u` column".into()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = rec.get(col).ok_or_else(|| parse_err(line, "missing `u` field".into()))?;
        let v: f64 = cell.parse().map_err(|_| parse_err(line, format!("cannot parse `{cell}`")))?;
        if !v.is_finite() {
            return Err(parse_err(line, "non-finite control".into()));
        }
        out.push(v);
    }
    Ok(out)
}

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use crosslight::aggregation::{format_time_pattern, AggregateRow};
use crosslight::fixtures::{verify_fixtures, FixtureSet, VerifyOptions};
use crosslight::plot::{emit_plot_data, PlotInput, PlotKind};
use crosslight::scenario::{load_scenario, Scenario};
use crosslight::simulator::{
    cycle_sweep, run, write_decisions_csv, write_event_log, write_metrics_csv, ControlSpec, SimOutput, SweepRow,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_FIXTURES: u8 = 3;

/// Run crossroad scenarios and check the bundled reference data.
#[derive(Debug, Parser)]
#[command(name = "crosslight", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the simulated duration in seconds.
    #[arg(long, value_name = "S")]
    duration: Option<f64>,
    /// Output directory; defaults to the scenario's `[output] dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Checks the bundled fixtures and exits 3 on any mismatch.
    #[arg(long)]
    verify_fixtures: bool,
    /// Verifies fixture files from this directory instead of the bundled ones.
    #[arg(long, value_name = "DIR", requires = "verify_fixtures")]
    fixtures: Option<PathBuf>,
    /// Rejects one-sided cells in the conflict matrix instead of repairing them.
    #[arg(long, requires = "verify_fixtures")]
    no_symmetrize: bool,
    /// Fixed-time sweep over these green lengths, e.g. "10,30,60".
    #[arg(long, value_name = "LIST")]
    sweep: Option<String>,
    /// Also writes plot data: queue_timeseries, speed_vs_cycle or wait_histogram.
    #[arg(long, value_name = "KIND")]
    emit: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if cli.config.is_none() && !cli.verify_fixtures {
        return Err(fail(EXIT_VALIDATION, "nothing to do: pass --config PATH or --verify-fixtures"));
    }
    if cli.verify_fixtures {
        verify(cli)?;
    }
    if let Some(path) = &cli.config {
        run_scenario(cli, path)?;
    }
    Ok(())
}

fn verify(cli: &Cli) -> Result<(), Failure> {
    let set = match &cli.fixtures {
        Some(dir) => FixtureSet::load(dir)
            .map_err(|e| fail(EXIT_VALIDATION, format!("cannot read fixtures from {}: {e}", dir.display())))?,
        None => FixtureSet::bundled(),
    };
    let report = verify_fixtures(&set, VerifyOptions { symmetrize_grid: !cli.no_symmetrize });
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(fail(EXIT_FIXTURES, "fixture mismatch"))
    }
}

fn parse_sweep(list: &str) -> Result<Vec<f64>, Failure> {
    let greens: Vec<f64> = list
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|g| *g > 0.0 && g.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| fail(EXIT_VALIDATION, format!("--sweep expects positive seconds like \"10,30,60\", got `{list}`")))?;
    if greens.is_empty() {
        return Err(fail(EXIT_VALIDATION, "--sweep needs at least one green length"));
    }
    Ok(greens)
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario, Failure> {
    let mut scenario = load_scenario(path).map_err(|e| {
        let at = if e.line > 0 { format!("{}:{}", path.display(), e.line) } else { path.display().to_string() };
        fail(EXIT_VALIDATION, format!("{at}: {}", e.message))
    })?;
    let cfg = &mut scenario.config;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(d) = cli.duration {
        if !(d > 0.0) || !d.is_finite() {
            return Err(fail(EXIT_VALIDATION, format!("--duration must be positive, got {d}")));
        }
        cfg.duration_s = d;
    }
    if let Some(out) = &cli.out {
        scenario.output.dir = out.clone();
    }
    for k in &cli.emit {
        let kind = k.parse::<PlotKind>().map_err(|e| fail(EXIT_VALIDATION, e.to_string()))?;
        if !scenario.output.emit.contains(&kind) {
            scenario.output.emit.push(kind);
        }
    }
    Ok(scenario)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| fail(EXIT_RUNTIME, format!("cannot write {}: {e}", path.display())))?;
    log::info!("writing {}", path.display());
    Ok((path, BufWriter::new(file)))
}

fn write_err(path: &Path) -> impl Fn(String) -> Failure + '_ {
    move |e| fail(EXIT_RUNTIME, format!("cannot write {}: {e}", path.display()))
}

fn run_scenario(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let scenario = load(cli, path)?;
    let sweep_greens = cli.sweep.as_deref().map(parse_sweep).transpose()?;
    if scenario.output.emit.contains(&PlotKind::SpeedVsCycle) && sweep_greens.is_none() {
        return Err(fail(EXIT_VALIDATION, "speed_vs_cycle plot data needs --sweep"));
    }
    let cfg = &scenario.config;
    let out = run(cfg).map_err(|e| fail(EXIT_RUNTIME, format!("simulation aborted: {e}")))?;
    let sweep = match &sweep_greens {
        Some(g) => Some(cycle_sweep(cfg, g).map_err(|e| fail(EXIT_RUNTIME, format!("sweep aborted: {e}")))?),
        None => None,
    };

    let dir = &scenario.output.dir;
    fs::create_dir_all(dir).map_err(|e| fail(EXIT_RUNTIME, format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();

    let (p, w) = create(dir, &scenario.output.metrics)?;
    write_metrics_csv(w, &out.events, std::slice::from_ref(&out.metrics)).map_err(|e| write_err(&p)(e.to_string()))?;
    written.push(p);

    let (p, w) = create(dir, &scenario.output.decisions)?;
    write_decisions_csv(w, &out.events, &out.decisions).map_err(|e| write_err(&p)(e.to_string()))?;
    written.push(p);

    let (p, w) = create(dir, &scenario.output.aggregates)?;
    write_aggregates(w, &out, scenario.output.epoch_s).map_err(|e| write_err(&p)(e.to_string()))?;
    written.push(p);

    if let Some(name) = &scenario.output.log {
        let (p, w) = create(dir, name)?;
        write_event_log(w, &out.log).map_err(|e| write_err(&p)(e.to_string()))?;
        written.push(p);
    }
    if let Some(rows) = &sweep {
        let (p, w) = create(dir, "sweep.csv")?;
        emit_plot_data(w, PlotKind::SpeedVsCycle, PlotInput { run: None, sweep: Some(rows) })
            .map_err(|e| write_err(&p)(e.to_string()))?;
        written.push(p);
    }
    for kind in &scenario.output.emit {
        let (p, w) = create(dir, &format!("plot_{kind}.csv"))?;
        emit_plot_data(w, *kind, PlotInput { run: Some(&out), sweep: sweep.as_deref() })
            .map_err(|e| write_err(&p)(e.to_string()))?;
        written.push(p);
    }

    print!("{}", summary(path, &scenario, &out, sweep.as_deref(), &written));
    Ok(())
}

/// Table-style rows for every lane, stamped on the scenario epoch.
fn write_aggregates<W: io::Write>(w: W, out: &SimOutput, epoch_s: f64) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["lane", "window_start", "time_pattern", "light", "cars", "avg_speed_mps", "queue_m", "vehicles_present"])?;
    for a in &out.aggregates {
        let row = AggregateRow::from_aggregate(a, epoch_s);
        w.write_record([
            out.events.label(a.lane),
            format_time_pattern(epoch_s, a.window_start_s),
            row.time_pattern,
            row.light,
            row.cars.to_string(),
            row.avg_speed_mps.map(|v| format!("{v:.3}")).unwrap_or_default(),
            format!("{:.1}", row.queue_m),
            a.vehicles_present.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn summary(path: &Path, scenario: &Scenario, out: &SimOutput, sweep: Option<&[SweepRow]>, written: &[PathBuf]) -> String {
    let cfg = &scenario.config;
    let m = &out.metrics;
    let mut s = String::new();
    let controller = match &cfg.control {
        ControlSpec::Adaptive { .. } => "adaptive".to_string(),
        ControlSpec::FixedTime { green_s, .. } => format!("fixed-time {green_s} s"),
    };
    let _ = writeln!(s, "{}  seed {}  {} s  {controller}", path.display(), m.seed, m.duration_s);
    let _ = writeln!(
        s,
        "vehicles     {} arrived, {} departed, avg speed {:.2} m/s, mean delay {:.1} s",
        m.arrivals, m.throughput, m.avg_intersection_speed_mps, m.mean_vehicle_wait_s
    );
    let _ = writeln!(
        s,
        "pedestrians  {} served, {} turned away, mean wait {:.1} s",
        m.pedestrians_served, m.pedestrians_turned_away, m.pedestrian_mean_wait_s
    );
    let _ = writeln!(
        s,
        "controller   {} decisions, {} congestion events, {} jams, {} rejected messages",
        m.decisions,
        out.congestion_events.len(),
        out.jams.len(),
        m.rejected_messages
    );
    let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10} {:>10}", "event", "mean wait", "max wait", "max red", "max queue");
    for (i, label) in out.events.labels().iter().enumerate() {
        let _ = writeln!(
            s,
            "{label:<10} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
            m.mean_wait_s[i], m.max_wait_s[i], m.max_red_s[i], m.max_queue_m[i]
        );
    }
    if let Some(rows) = sweep {
        for r in rows {
            let _ = writeln!(s, "sweep        green {:>5} s: avg speed {:.3} m/s, {} departed", r.green_s, r.avg_intersection_speed_mps, r.throughput);
        }
    }
    let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    let _ = writeln!(s, "wrote        {}", names.join(", "));
    s
}

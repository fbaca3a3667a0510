//! Command-line front end: delay scans, the analytic model, trace
//! analysis, presets and convergence checks.

mod progress;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Arg, ArgAction, ArgMatches, Command};

use attoscope::analysis::{self, AnalysisOptions};
use attoscope::analytic::{self, OverlapOptions, OverlapTable, SpectralFilterOverlap};
use attoscope::config::{self, RunConfig, SECTIONS};
use attoscope::pulse::synthesize_field;
use attoscope::scan::{self, Refinement, ScanOptions};
use attoscope::{units, Error, IonizationTrace, Overlap, TwoStateParams};

use progress::Ledger;

/// Worker thread count for scans.
const WORKERS_ENV: &str = "ATTOSCOPE_WORKERS";

fn all_keys() -> Vec<&'static str> {
    SECTIONS.iter().flat_map(|s| config::section_keys(s).unwrap().iter().copied()).collect()
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Config file, shorthand and one flag per config key.
fn config_args(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(Arg::new("config").long("config").short('c').value_name("FILE").help("TOML run configuration"))
        .arg(Arg::new("tau").long("tau").value_name("START:STOP:STEP").help("delay range in fs"));
    for key in all_keys() {
        let section = config::key_section(key).unwrap();
        cmd = cmd.arg(
            Arg::new(key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help(format!("overrides {section}.{key}"))
                .help_heading("Config overrides"),
        );
    }
    cmd
}

fn cli() -> Command {
    Command::new("attoscope")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Pump-probe electronic coherence simulator")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("verbose").short('v').long("verbose").action(ArgAction::Count).global(true).help("more log output"))
        .subcommand(
            config_args(Command::new("scan").about("TDSE delay scan"))
                .arg(Arg::new("resume").long("resume").action(ArgAction::SetTrue).help("skip points recorded in the progress ledger"))
                .arg(Arg::new("workers").long("workers").value_parser(clap::value_parser!(usize)).help(format!("worker threads (default: ${WORKERS_ENV} or all cores)"))),
        )
        .subcommand(
            config_args(Command::new("analytic").about("Perturbative two-state model on the scan grid"))
                .arg(Arg::new("overlap-only").long("overlap-only").action(ArgAction::SetTrue).help("only write the vibrational overlap"))
                .arg(
                    Arg::new("overlap")
                        .long("overlap")
                        .value_parser(["spectral-filter", "franck-condon"])
                        .default_value("spectral-filter")
                        .help("overlap model"),
                ),
        )
        .subcommand(
            Command::new("analyze")
                .about("Phase cycling and spectral analysis of a trace")
                .arg(Arg::new("trace").required(true).value_name("TRACE_CSV"))
                .arg(Arg::new("out").long("out").short('o').value_name("DIR").help("output directory (default: next to the trace)"))
                .arg(Arg::new("carrier-thz").long("carrier-thz").value_parser(clap::value_parser!(f64)).help("expected carrier frequency"))
                .arg(Arg::new("downsample").long("downsample").value_parser(clap::value_parser!(usize)).default_value("1").help("keep every n-th point in plot files")),
        )
        .subcommand(
            Command::new("preset")
                .about("Built-in configurations")
                .subcommand_required(true)
                .subcommand(Command::new("list").about("list presets"))
                .subcommand(Command::new("show").about("print a preset as TOML").arg(Arg::new("name").required(true))),
        )
        .subcommand(
            config_args(Command::new("convergence").about("dt, grid and continuum refinement check on a short scan"))
                .arg(Arg::new("workers").long("workers").value_parser(clap::value_parser!(usize))),
        )
}

fn resolve_config(m: &ArgMatches, default_tau: Option<&str>) -> attoscope::Result<RunConfig> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };
    let tau = m.get_one::<String>("tau").map(String::as_str).or(if m.get_one::<String>("config").is_none() { default_tau } else { None });
    if let Some(t) = tau {
        let (a, b, c) = config::parse_range(t)?;
        cfg.set("delay_start_fs", &a.to_string())?;
        cfg.set("delay_stop_fs", &b.to_string())?;
        cfg.set("delay_step_fs", &c.to_string())?;
    }
    for key in all_keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("--{}: {msg}", flag_name(key))),
                other => other,
            })?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(m: &ArgMatches) -> attoscope::Result<Option<usize>> {
    if let Some(&n) = m.get_one::<usize>("workers") {
        return Ok(Some(n));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn output_dir(cfg: &RunConfig) -> attoscope::Result<PathBuf> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_scan(m: &ArgMatches) -> attoscope::Result<()> {
    let cfg = resolve_config(m, None)?;
    let spec = cfg.scan_spec()?;
    let dir = output_dir(&cfg)?;
    let csv = dir.join(format!("{}.csv", cfg.output.stem));
    let ledger_path = dir.join(format!("{}.progress", cfg.output.stem));
    for w in spec.warnings() {
        log::warn!("{w}");
    }
    let (mut ledger, completed) = if m.get_flag("resume") {
        Ledger::resume(&ledger_path, &spec)?
    } else {
        (Ledger::create(&ledger_path, &spec)?, Default::default())
    };
    let total = spec.n_points();
    let mut done = completed.len();
    let mut write_error = None;
    let opts = ScanOptions {
        workers: workers(m)?,
        completed,
        on_point: Some(Box::new(|p| {
            done += 1;
            if let Err(e) = ledger.record(p) {
                write_error.get_or_insert(e);
            }
            if done % 100 == 0 || done == total {
                log::info!("{done}/{total} points");
            }
        })),
    };
    let started = std::time::Instant::now();
    let mut trace = scan::run_delay_scan_with(&spec, opts)?;
    if let Some(e) = write_error {
        return Err(e);
    }
    trace.metadata.config = Some(cfg.to_json());
    trace.write(&csv)?;
    if cfg.output.write_field {
        let seq = spec.pulses.with_delay(spec.delays_fs[0]);
        let field = synthesize_field(&seq, &seq.time_grid(spec.numerics.dt_fs, 0.0)?)?;
        fs::write(dir.join(format!("{}_field.csv", cfg.output.stem)), field.to_csv())?;
    }
    log::info!("ledger {}", ledger.path().display());
    println!(
        "wrote {} ({} points, {:.1} s)",
        csv.display(),
        total,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_analytic(m: &ArgMatches) -> attoscope::Result<()> {
    let cfg = resolve_config(m, None)?;
    let model = cfg.system_model()?;
    let pulses = cfg.pulses()?;
    let delays = cfg.delays()?;
    let phases = cfg.phases()?;
    let dir = output_dir(&cfg)?;
    let stem = &cfg.output.stem;
    let opts = OverlapOptions { grid: cfg.numerics()?.grid, ..OverlapOptions::default() };

    if m.get_flag("overlap-only") {
        if delays[0] < 0.0 {
            return Err(Error::Config("overlap needs non-negative delays".into()));
        }
        let table = OverlapTable::compute(&model, *delays.last().unwrap(), &opts)?;
        let mut s = format!("{}\ndelay_fs,re_overlap,im_overlap,abs_overlap\n", analytic::COHERENCE_SCHEMA);
        for &t in &delays {
            let z = table.at(t);
            s.push_str(&format!("{t:.16e},{:.16e},{:.16e},{:.16e}\n", z.re, z.im, z.norm()));
        }
        let path = dir.join(format!("{stem}_overlap.csv"));
        fs::write(&path, s)?;
        println!("wrote {}", path.display());
        return Ok(());
    }

    let overlap = match m.get_one::<String>("overlap").map(String::as_str) {
        Some("franck-condon") => Overlap::Table(Arc::new(OverlapTable::compute(&model, delays.last().unwrap().max(0.0), &opts)?)),
        _ => Overlap::SpectralFilter(Arc::new(SpectralFilterOverlap::new(&model, &pulses.pump, &pulses.probe, 40)?)),
    };
    let params = TwoStateParams::from_pulse_area(&model, &pulses.pump, overlap)?;
    let mut trace = analytic::signal_trace(&params, &delays, &phases)?;
    trace.metadata.config = Some(cfg.to_json());
    let csv = dir.join(format!("{stem}.csv"));
    trace.write(&csv)?;
    let coh = analytic::CoherenceTrace::compute(&params, &delays);
    fs::write(dir.join(format!("{stem}_coherence.csv")), coh.to_csv())?;
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_analyze(m: &ArgMatches) -> attoscope::Result<()> {
    let path = PathBuf::from(m.get_one::<String>("trace").unwrap());
    let trace = IonizationTrace::read(&path)?;
    let (diff, sum) = analysis::phase_cycle(&trace)?;
    let dir = match m.get_one::<String>("out") {
        Some(d) => PathBuf::from(d),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&dir)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
    let mut opts = AnalysisOptions::default();
    opts.expected_carrier_thz = m.get_one::<f64>("carrier-thz").copied().or_else(|| {
        trace.metadata.spec.as_ref().map(|s| s.model.vertical_gap_thz())
    });
    if let Some(f) = opts.expected_carrier_thz {
        opts.spectrum.max_frequency_thz = Some(f);
    }
    let result = analysis::analyze(&diff, Some(&sum), &opts)?;
    fs::write(dir.join(format!("{stem}_diff.csv")), diff.to_csv("diff"))?;
    fs::write(dir.join(format!("{stem}_sum.csv")), sum.to_csv("sum"))?;
    if result.envelope_period_fs.is_finite() {
        let env = analysis::demodulate(&diff, units::thz_to_angular(result.carrier_frequency_thz), &opts.demodulation)?;
        fs::write(dir.join(format!("{stem}_envelope.csv")), env.to_csv())?;
        let spectrum = analysis::beat_spectrum(&diff, &opts.spectrum)?;
        fs::write(dir.join(format!("{stem}_spectrum.csv")), spectrum.to_csv())?;
    }
    let downsample = *m.get_one::<usize>("downsample").unwrap();
    analysis::write_zoom_plots(&diff, &dir, &format!("{stem}_plot"), downsample)?;
    let json = serde_json::to_string_pretty(&result)?;
    let out = dir.join(format!("{stem}_analysis.json"));
    fs::write(&out, json.clone() + "\n")?;
    println!("{json}");
    Ok(())
}

fn cmd_preset(m: &ArgMatches) -> attoscope::Result<()> {
    match m.subcommand() {
        Some(("list", _)) => {
            for (name, about) in config::PRESETS {
                println!("{name:<12} {about}");
            }
        }
        Some(("show", s)) => {
            let cfg = RunConfig::preset(s.get_one::<String>("name").unwrap())?;
            print!("{}", cfg.to_toml());
        }
        _ => unreachable!("clap requires a subcommand"),
    }
    Ok(())
}

fn cmd_convergence(m: &ArgMatches) -> attoscope::Result<bool> {
    let cfg = resolve_config(m, Some("100:101.9:0.1"))?;
    let spec = cfg.scan_spec()?;
    if let Some(n) = workers(m)? {
        // the check runs several scans; size the global pool once
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let report = scan::convergence_check(&spec, &Refinement::ALL)?;
    let dir = output_dir(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(dir.join(format!("{}_convergence.json", cfg.output.stem)), json.clone() + "\n")?;
    println!("{json}");
    Ok(report.passed)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Schema(_) | Error::GridMismatch(_) | Error::Json(_) => 2,
        Error::ScanPoint { .. } | Error::Unitarity { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match matches.subcommand() {
        Some(("scan", m)) => cmd_scan(m).map(|_| true),
        Some(("analytic", m)) => cmd_analytic(m).map(|_| true),
        Some(("analyze", m)) => cmd_analyze(m).map(|_| true),
        Some(("preset", m)) => cmd_preset(m).map(|_| true),
        Some(("convergence", m)) => cmd_convergence(m),
        _ => unreachable!("clap requires a subcommand"),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("convergence check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use clap::{Args, Parser, Subcommand, ValueEnum};
use cyclephase::baselines::PredictorKind;
use cyclephase::filtering::BandSpec;
use cyclephase::report::{
    self, file_label, phase_dump_csv, prepare, prepare_ibi, run_baseline, to_json, RunConfig,
};
use cyclephase::synth::{gen_events, gen_series, gen_sleep_series, SynthConfig};
use cyclephase::{analytic, circstats, events, io, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Event phase-locking analysis for wearable time series.
#[derive(Debug, Parser)]
#[command(name = "cyclephase", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Welch PSD of the prepared signal: psd.csv and psd_params.json.
    Psd(RunArgs),
    /// Phase-locking statistics for every band: bandscan.json, phases_*.csv, rose_*.{csv,svg}.
    Bandscan(RunArgs),
    /// Event phases per band, optionally with the per-sample phase series.
    Phasemap {
        #[command(flatten)]
        run: RunArgs,
        /// Also write phase_samples_<band>.csv with every sample's phase.
        #[arg(long)]
        dump_phase: bool,
    },
    /// Single-predictor logistic baseline scored by AUC.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        predictor: Predictor,
    },
    /// Generate a synthetic dataset in the ingestion formats.
    Synth {
        /// Synthetic dataset description (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "cyclephase-synth")]
        out: PathBuf,
    },
    /// Full analysis: PSD, band scan, baselines and run manifest.
    Report(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Predictor {
    Clock,
    Phase,
    Sleep,
}

impl From<Predictor> for PredictorKind {
    fn from(p: Predictor) -> Self {
        match p {
            Predictor::Clock => PredictorKind::ClockTime,
            Predictor::Phase => PredictorKind::CircadianPhase,
            Predictor::Sleep => PredictorKind::SleepScore,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// Run configuration JSON (or a previous run_manifest.json); replaces the flags below except --out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ibi: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    sleep: Option<PathBuf>,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    tz_offset_minutes: i64,
    #[arg(long, default_value_t = 60)]
    step_minutes: i64,
    #[arg(long, default_value_t = 6)]
    ibi_max_gap_hours: usize,
    #[arg(long, default_value_t = 2)]
    sleep_max_gap_days: usize,
    /// Period band in days as lo:hi; repeat for several. Defaults to the standard seven.
    #[arg(long = "band")]
    bands: Vec<String>,
    /// Butterworth prototype order (per pass).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Maximum event-to-sample distance; defaults to half a grid step.
    #[arg(long)]
    tolerance_minutes: Option<i64>,
    #[arg(long, default_value_t = 12)]
    rose_bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws for the simulated Rayleigh p (0 disables).
    #[arg(long, default_value_t = 100_000)]
    montecarlo_draws: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                RunConfig::from_json(&text)?
            }
            None => {
                let mut c = RunConfig::new(
                    self.ibi.clone().unwrap_or_default(),
                    self.events.clone().unwrap_or_default(),
                );
                c.sleep_path = self.sleep.clone();
                c.timezone_offset_minutes = self.tz_offset_minutes;
                c.step_minutes = self.step_minutes;
                c.ibi_max_gap_hours = self.ibi_max_gap_hours;
                c.sleep_max_gap_days = self.sleep_max_gap_days;
                if !self.bands.is_empty() {
                    c.bands = self
                        .bands
                        .iter()
                        .map(|b| BandSpec::parse(b))
                        .collect::<Result<_, _>>()?;
                }
                c.filter_order = self.order;
                c.mapping_tolerance_minutes = self.tolerance_minutes;
                c.rose_bins = self.rose_bins;
                c.seed = self.seed;
                c.montecarlo_draws = self.montecarlo_draws;
                c
            }
        };
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn make_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Psd(args) => {
            let config = args.to_config()?;
            let ibi = prepare_ibi(&config)?;
            let data = report::PreparedData {
                ibi,
                events: events::EventSet::new(vec![], "none")?,
                sleep: None,
            };
            let mut outputs = Vec::new();
            let psd = report::write_psd(&data, &config, &mut outputs)?;
            if let Ok((period, power)) = cyclephase::spectral::dominant_period(&psd, (0.5, 2.0)) {
                println!("dominant period in 0.5-2 days: {period:.4} days (power {power:.4e})");
            }
            println!("wrote {}", config.output_dir.join("psd.csv").display());
        }
        Command::Bandscan(args) => {
            let config = args.to_config()?;
            let data = prepare(&config)?;
            let mut outputs = Vec::new();
            let reports = report::write_bandscan(&data, &config, &mut outputs)?;
            println!("band        n      R       p         p_fdr");
            for r in &reports {
                println!(
                    "{:<10} {:>3} {:>7} {:>10} {:>10}",
                    r.band,
                    r.n,
                    r.resultant_length.map_or("-".into(), |v| format!("{v:.3}")),
                    r.p.map_or("-".into(), |v| format!("{v:.3e}")),
                    r.p_fdr.map_or("-".into(), |v| format!("{v:.3e}")),
                );
            }
        }
        Command::Phasemap { run, dump_phase } => {
            let config = run.to_config()?;
            let data = prepare(&config)?;
            make_dir(&config.output_dir)?;
            let tolerance = config.scan_config().tolerance_for(data.ibi.step());
            for band in &config.bands {
                let phases = analytic::band_phases(&data.ibi, band, config.filter_order)?;
                let mapping = events::map_events_to_phase(&data.events, &phases, tolerance);
                let scan = circstats::BandScan {
                    result: circstats::BandResult {
                        band: band.clone(),
                        n: mapping.mapped.len(),
                        resultant_length: None,
                        circular_mean: None,
                        rayleigh_p: None,
                        fdr_adjusted_p: None,
                        n_edge_flagged: mapping.n_edge_flagged(),
                        n_excluded: mapping.excluded.len(),
                        n_segments: phases.len(),
                    },
                    mapping,
                    analytic: phases,
                };
                let label = file_label(&band.label);
                write(
                    &config.output_dir.join(format!("phases_{label}.csv")),
                    &report::phases_csv(&scan),
                )?;
                if dump_phase {
                    write(
                        &config.output_dir.join(format!("phase_samples_{label}.csv")),
                        &phase_dump_csv(&scan.analytic),
                    )?;
                }
                println!(
                    "{}: {} mapped, {} excluded, {} edge-flagged",
                    band.label, scan.result.n, scan.result.n_excluded, scan.result.n_edge_flagged
                );
            }
        }
        Command::Baseline { run, predictor } => {
            let config = run.to_config()?;
            let data = prepare(&config)?;
            let result = run_baseline(&data, &config, predictor.into())?;
            let json = serde_json::json!({
                "coefficients": result.coefficients,
                "auc": result.auc,
                "n_rows": result.n_rows,
                "n_positive": result.n_positive,
                "converged": result.converged,
            });
            let text = to_json(&json)?;
            make_dir(&config.output_dir)?;
            let name = format!(
                "baseline_{}.json",
                predictor.to_possible_value().unwrap().get_name()
            );
            write(&config.output_dir.join(name), &text)?;
            print!("{text}");
        }
        Command::Synth { config, out } => {
            let synth: SynthConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    serde_json::from_str(&text).map_err(|e| {
                        Error::Data(format!("{}: invalid synth config: {e}", path.display()))
                    })?
                }
                None => SynthConfig::default(),
            };
            make_dir(&out)?;
            io::write_series_csv(&out.join("ibi.csv"), &gen_series(&synth)?)?;
            io::write_events_csv(&out.join("events.csv"), &gen_events(&synth)?)?;
            io::write_series_csv(&out.join("sleep.csv"), &gen_sleep_series(&synth)?)?;
            let mut run_config = RunConfig::new(out.join("ibi.csv"), out.join("events.csv"));
            run_config.sleep_path = Some(out.join("sleep.csv"));
            run_config.seed = synth.seed;
            run_config.output_dir = out.join("report");
            write(&out.join("run_config.json"), &to_json(&run_config)?)?;
            write(&out.join("synth_config.json"), &to_json(&synth)?)?;
            println!("wrote synthetic dataset to {}", out.display());
        }
        Command::Report(args) => {
            let config = args.to_config()?;
            let summary = report::run_report(&config)?;
            for name in &summary.outputs {
                println!("{}", config.output_dir.join(name).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

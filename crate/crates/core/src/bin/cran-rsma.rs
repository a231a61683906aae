use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cran_rsma::harness::{
    apply_override, check_suite, generate, multicast_gain, parse_schemes, parse_seeds, run_sweep, summarize,
    write_gain, write_summary, write_sweep_csv, Manifest, Preset, SweepSpec,
};
use cran_rsma::scenario::ScenarioConfig;
use cran_rsma::solver::{build_network, evaluate, evaluation_samples, prepare, run_scheme, WmmseOptions};
use cran_rsma::{Error, Result};

#[derive(Parser)]
#[command(name = "cran-rsma", version, about = "Max-min fair rate-splitting beamforming for cache-aided C-RAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig3a, fig5, fig6 or fig8.
    #[arg(long)]
    preset: Option<String>,
    /// Field override KEY=VALUE, repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn preset(&self) -> Result<Option<Preset>> {
        self.preset.as_deref().map(str::parse).transpose()
    }

    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, self.preset()?) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(p)) => p.config(),
            (None, None) => ScenarioConfig::default(),
        };
        for o in &self.overrides {
            cfg = apply_override(&cfg, o)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario, statistics, cache placement and clusters of one seed.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one seed and write result JSON plus trace CSV per scheme.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "rs_cmd")]
        scheme: String,
        #[arg(long)]
        out: PathBuf,
        /// Fresh samples for out-of-sample evaluation; 0 skips it.
        #[arg(long, default_value_t = 0)]
        eval_samples: usize,
        #[arg(long)]
        no_timing: bool,
    },
    /// Sweep one configuration field over values, schemes and seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Swept field; defaults to the preset axis.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values; defaults to the preset axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long, default_value = "all")]
        scheme: String,
        /// Output CSV; the manifest goes next to it as `<out>.manifest.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        no_timing: bool,
    },
    /// Run the quick invariant suite.
    Check,
    /// Mean and 95% interval per (param_value, scheme) of a sweep CSV.
    Summarize {
        csv: PathBuf,
        /// Sweep of the same grid with singleton groups; prints multicast gains.
        #[arg(long)]
        gain_baseline: Option<PathBuf>,
    },
}

fn options(no_timing: bool) -> WmmseOptions {
    WmmseOptions {
        timing: !no_timing,
        ..WmmseOptions::default()
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { cfg, seed, out } => {
            let mut config = cfg.load()?;
            config.rng_seed = seed;
            generate(&config, &out)?;
        }
        Command::Solve {
            cfg,
            seed,
            scheme,
            out,
            eval_samples,
            no_timing,
        } => {
            let mut config = cfg.load()?;
            config.rng_seed = seed;
            let schemes = parse_schemes(&scheme)?;
            std::fs::create_dir_all(&out)?;
            let inst = prepare(&config)?;
            for line in inst.clusters.log_lines() {
                println!("cluster {line}");
            }
            let fresh = if eval_samples > 0 { Some(evaluation_samples(&inst, eval_samples)?) } else { None };
            for scheme in schemes {
                let res = run_scheme(&inst, scheme, &options(no_timing))?;
                res.write_trace_csv(std::fs::File::create(out.join(format!("trace_{}.csv", scheme.name())))?)?;
                let evaluation = match &fresh {
                    Some(f) => {
                        let net = build_network(&inst, scheme)?;
                        Some(evaluate(&net, &res.w, &inst.samples, f)?)
                    }
                    None => None,
                };
                let c = &res.constraints;
                let summary = serde_json::json!({
                    "scheme": scheme.name(),
                    "seed": seed,
                    "status": res.status.name(),
                    "message": res.message,
                    "mmf_rate_bps": res.mmf_rate(),
                    "iterations": res.iterations,
                    "private_rates_bps": res.rates.private,
                    "common_rates_bps": res.rates.common,
                    "power_violation": c.power,
                    "fronthaul_violation": c.fronthaul,
                    "dropped_streams": res.dropped_streams.len(),
                    "reduced_accuracy_steps": res.reduced_accuracy_steps,
                    "evaluation": evaluation,
                });
                std::fs::write(
                    out.join(format!("result_{}.json", scheme.name())),
                    serde_json::to_string_pretty(&summary)? + "\n",
                )?;
                println!(
                    "{} status={} mmf_rate_bps={} iterations={}",
                    scheme.name(),
                    res.status.name(),
                    res.mmf_rate(),
                    res.iterations
                );
            }
        }
        Command::Sweep {
            cfg,
            param,
            values,
            seeds,
            scheme,
            out,
            threads,
            no_timing,
        } => {
            let preset_axis = cfg.preset()?.map(Preset::axis);
            let (param, values) = match (param, preset_axis) {
                (Some(p), _) => (p, values),
                (None, Some((p, v))) => (p.to_string(), if values.is_empty() { v } else { values }),
                (None, None) => return Err(Error::Domain("sweep needs --param or --preset".into())),
            };
            let spec = SweepSpec {
                base: cfg.load()?,
                param,
                values,
                schemes: parse_schemes(&scheme)?,
                seeds: parse_seeds(&seeds)?,
            };
            let rows = run_sweep(&spec, threads, &options(no_timing))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_sweep_csv(&rows, std::fs::File::create(&out)?)?;
            let mut manifest_path = out.clone().into_os_string();
            manifest_path.push(".manifest.json");
            Manifest::new(&spec, rows.len(), !no_timing)?.write(manifest_path.as_ref())?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
        Command::Check => {
            let outcomes = check_suite()?;
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            return Ok(outcomes.iter().all(|o| o.passed));
        }
        Command::Summarize { csv, gain_baseline } => {
            let rows = summarize(std::fs::File::open(&csv)?)?;
            match gain_baseline {
                Some(base) => {
                    let singleton = summarize(std::fs::File::open(&base)?)?;
                    write_gain(&multicast_gain(&rows, &singleton), std::io::stdout())?;
                }
                None => write_summary(&rows, std::io::stdout())?,
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

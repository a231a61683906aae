//! Experiment plumbing behind the command line: presets, parameter sweeps,
//! run manifests and CSV aggregation.
//!
//! Sweep CSV columns: `param_value, scheme, seed, mmf_rate_bps, iterations,
//! wall_ms, dropped_streams, status`. A cell whose pipeline errors is still
//! written, with `mmf_rate_bps = NaN` and `status = error`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::clustering::StreamKind;
use crate::error::{Error, Result};
use crate::network::Beamformers;
use crate::rng::{self, Purpose};
use crate::scenario::{ScenarioConfig, Scheme};
use crate::solver::{build_network, initialize, prepare, run_scheme, RunStatus, WmmseOptions};
use crate::wmmse::rate_identity_check;

pub const SWEEP_COLUMNS: [&str; 8] = [
    "param_value",
    "scheme",
    "seed",
    "mmf_rate_bps",
    "iterations",
    "wall_ms",
    "dropped_streams",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig3a,
    Fig5,
    Fig6,
    Fig8,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3a" => Ok(Preset::Fig3a),
            "fig5" => Ok(Preset::Fig5),
            "fig6" => Ok(Preset::Fig6),
            "fig8" => Ok(Preset::Fig8),
            other => Err(Error::Domain(format!("unknown preset '{other}'"))),
        }
    }
}

impl Preset {
    /// Base configuration of the experiment.
    pub fn config(self) -> ScenarioConfig {
        let base = ScenarioConfig::default();
        match self {
            Preset::Fig3a | Preset::Fig6 => base,
            Preset::Fig5 => ScenarioConfig {
                c_max_bps: 20e6,
                ..base
            },
            Preset::Fig8 => ScenarioConfig {
                c_max_bps: 30e6,
                cache_size_files: 10,
                ..base
            },
        }
    }

    /// Swept field and its values.
    pub fn axis(self) -> (&'static str, Vec<f64>) {
        match self {
            Preset::Fig3a => ("c_max_bps", (2..=7).map(|c| c as f64 * 10e6).collect()),
            Preset::Fig5 => ("cache_size_files", (0..=5).map(|c| c as f64 * 5.0).collect()),
            Preset::Fig6 => ("n_antennas", (1..=5).map(|l| l as f64).collect()),
            Preset::Fig8 => ("n_users", vec![8.0, 12.0, 16.0, 20.0]),
        }
    }
}

/// Parses `a..b` (exclusive) or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Domain(format!("bad seed range '{text}', expected a..b or a single integer"));
    match text.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b <= a {
                return Err(bad());
            }
            Ok((a..b).collect())
        }
        None => Ok(vec![text.trim().parse().map_err(|_| bad())?]),
    }
}

pub fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    if text == "all" {
        Ok(Scheme::ALL.to_vec())
    } else {
        Ok(vec![text.parse()?])
    }
}

/// Sets a configuration field by name. `value` is JSON, so enum fields take
/// their string tags and numbers are given plainly.
pub fn set_field(config: &ScenarioConfig, name: &str, value: Value) -> Result<ScenarioConfig> {
    let mut tree = serde_json::to_value(config)?;
    let slot = tree
        .get_mut(name)
        .ok_or_else(|| Error::Domain(format!("unknown configuration field '{name}'")))?;
    let value = match value {
        Value::Number(n) if slot.is_u64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if x < 0.0 || x.fract() != 0.0 {
                return Err(Error::Domain(format!("field '{name}' needs a nonnegative integer, got {x}")));
            }
            Value::from(x as u64)
        }
        other => other,
    };
    *slot = value;
    let out: ScenarioConfig = serde_json::from_value(tree)?;
    Ok(out)
}

/// `KEY=VALUE` override; VALUE is parsed as JSON and falls back to a string.
pub fn apply_override(config: &ScenarioConfig, assignment: &str) -> Result<ScenarioConfig> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Domain(format!("override '{assignment}' is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_field(config, key.trim(), value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub param: String,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Domain("sweep value list is empty".into()));
        }
        if self.schemes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Domain("sweep needs at least one scheme and one seed".into()));
        }
        for &v in &self.values {
            self.config_at(v, self.seeds[0])?.validate()?;
        }
        Ok(())
    }

    pub fn config_at(&self, value: f64, seed: u64) -> Result<ScenarioConfig> {
        let mut cfg = set_field(&self.base, &self.param, Value::from(value))?;
        cfg.rng_seed = seed;
        Ok(cfg)
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() * self.schemes.len() * self.seeds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub scheme: String,
    pub seed: u64,
    pub mmf_rate_bps: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub dropped_streams: usize,
    pub status: String,
}

/// Solves one (configuration, scheme) cell.
pub fn run_cell(config: &ScenarioConfig, scheme: Scheme, opts: &WmmseOptions) -> Result<SweepRow> {
    let start = std::time::Instant::now();
    let inst = prepare(config)?;
    let result = run_scheme(&inst, scheme, opts)?;
    let dropped = result
        .dropped_streams
        .iter()
        .filter(|(_, kind)| scheme == Scheme::RsCmd || *kind == StreamKind::Private)
        .count();
    Ok(SweepRow {
        param_value: f64::NAN,
        scheme: scheme.name().into(),
        seed: config.rng_seed,
        mmf_rate_bps: result.mmf_rate(),
        iterations: result.iterations,
        wall_ms: if opts.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        dropped_streams: dropped,
        status: result.status.name().into(),
    })
}

/// Runs every (value, scheme, seed) cell on a pool of `threads` workers and
/// returns the rows in grid order.
pub fn run_sweep(spec: &SweepSpec, threads: usize, opts: &WmmseOptions) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.n_cells());
    for &v in &spec.values {
        for &scheme in &spec.schemes {
            for &seed in &spec.seeds {
                cells.push((v, scheme, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, scheme, seed)| {
                let row = spec
                    .config_at(v, seed)
                    .and_then(|cfg| run_cell(&cfg, scheme, opts));
                match row {
                    Ok(row) => SweepRow { param_value: v, ..row },
                    Err(_) => SweepRow {
                        param_value: v,
                        scheme: scheme.name().into(),
                        seed,
                        mmf_rate_bps: f64::NAN,
                        iterations: 0,
                        wall_ms: 0.0,
                        dropped_streams: 0,
                        status: "error".into(),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    if rows.is_empty() {
        wtr.write_record(SWEEP_COLUMNS)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Hex SHA-256 of the JSON form of `config`.
pub fn config_hash(config: &ScenarioConfig) -> Result<String> {
    let text = serde_json::to_string(config)?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub param: String,
    pub values: Vec<f64>,
    pub schemes: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: usize,
    pub timing: bool,
}

impl Manifest {
    pub fn new(spec: &SweepSpec, rows: usize, timing: bool) -> Result<Self> {
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(&spec.base)?,
            config: spec.base.clone(),
            param: spec.param.clone(),
            values: spec.values.clone(),
            schemes: spec.schemes.iter().map(|s| s.name().to_string()).collect(),
            seeds: spec.seeds.clone(),
            rows,
            timing,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param_value: String,
    pub scheme: String,
    pub n: usize,
    pub mean: f64,
    /// Half-width of the normal 95% interval; `None` below two seeds.
    pub ci95: Option<f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Domain(format!("missing column '{name}'")))
}

/// Mean and 95% interval of `mmf_rate_bps` per (param_value, scheme), in
/// order of first appearance. Non-finite rates are skipped.
pub fn summarize<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let (ip, is, ir) = (
        column(&headers, "param_value")?,
        column(&headers, "scheme")?,
        column(&headers, "mmf_rate_bps")?,
    );
    let mut order: Vec<(String, String)> = Vec::new();
    let mut values: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key = (rec[ip].to_string(), rec[is].to_string());
        let x: f64 = rec[ir]
            .parse()
            .map_err(|_| Error::Domain(format!("mmf_rate_bps '{}' is not a number", &rec[ir])))?;
        let slot = values.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if x.is_finite() {
            slot.push(x);
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let xs = &values[&key];
            let n = xs.len();
            let mean = if n > 0 { xs.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let ci95 = (n > 1).then(|| {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            });
            SummaryRow {
                param_value: key.0,
                scheme: key.1,
                n,
                mean,
                ci95,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["param_value", "scheme", "n", "mean_mmf_bps", "ci95_bps"])?;
    for r in rows {
        wtr.write_record([
            r.param_value.clone(),
            r.scheme.clone(),
            r.n.to_string(),
            r.mean.to_string(),
            r.ci95.map_or("n/a".into(), |c| c.to_string()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainRow {
    pub param_value: String,
    pub scheme: String,
    pub multicast_mmf: f64,
    pub unicast_mmf: f64,
    pub gain_pct: f64,
}

/// Multicast gain `100 (MMF_{G<=K} - MMF_{G=K}) / MMF_{G=K}` for every key
/// present in both summaries.
pub fn multicast_gain(grouped: &[SummaryRow], singleton: &[SummaryRow]) -> Vec<GainRow> {
    grouped
        .iter()
        .filter_map(|a| {
            let b = singleton
                .iter()
                .find(|b| b.param_value == a.param_value && b.scheme == a.scheme)?;
            Some(GainRow {
                param_value: a.param_value.clone(),
                scheme: a.scheme.clone(),
                multicast_mmf: a.mean,
                unicast_mmf: b.mean,
                gain_pct: 100.0 * (a.mean - b.mean) / b.mean,
            })
        })
        .collect()
}

pub fn write_gain<W: Write>(rows: &[GainRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["param_value", "scheme", "mmf_g_le_k_bps", "mmf_g_eq_k_bps", "gain_pct"])?;
    for r in rows {
        wtr.write_record([
            r.param_value.clone(),
            r.scheme.clone(),
            r.multicast_mmf.to_string(),
            r.unicast_mmf.to_string(),
            format!("{:.2}", r.gain_pct),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes geometry, statistics, placement and clustering of one seed.
pub fn generate(config: &ScenarioConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let inst = prepare(config)?;
    std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&inst.scenario)? + "\n")?;
    inst.stats.write_csv(std::fs::File::create(dir.join("statistics.csv"))?)?;
    let mut wtr = csv::Writer::from_path(dir.join("placement.csv"))?;
    wtr.write_record(["file", "bs"])?;
    for f in 0..inst.placement.n_files() {
        for n in 0..inst.placement.n_bs() {
            if inst.placement.cached(f, n) {
                wtr.write_record([f.to_string(), n.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    let mut log = std::fs::File::create(dir.join("structure.txt"))?;
    writeln!(log, "groups")?;
    for g in &inst.groups {
        writeln!(log, "{}: file={} members={:?}", g.id, g.file, g.members)?;
    }
    writeln!(log, "decode orders")?;
    for line in inst.receiver.log_lines() {
        writeln!(log, "{line}")?;
    }
    writeln!(log, "clusters")?;
    for line in inst.clusters.log_lines() {
        writeln!(log, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_bs: 3,
        n_users: 6,
        n_files: 3,
        cache_size_files: 1,
        m_samples: 20,
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

/// Quick invariant suite: clustering structure, the rate identity at random
/// precoders, and constraint satisfaction plus ascent of short solves.
pub fn check_suite() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let mut bad = Vec::new();
    for seed in 0..20 {
        let cfg = ScenarioConfig {
            rng_seed: seed,
            m_samples: 1,
            ..ScenarioConfig::default()
        };
        let a = prepare(&cfg)?;
        let b = prepare(&cfg)?;
        bad.extend(a.clusters.violations(cfg.a_max_streams));
        bad.extend(a.receiver.violations(true));
        if a.clusters != b.clusters {
            bad.push(format!("seed {seed}: clustering not deterministic"));
        }
    }
    out.push(CheckOutcome {
        name: "clustering",
        passed: bad.is_empty(),
        detail: bad.first().cloned().unwrap_or_else(|| "20 seeds".into()),
    });

    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let inst = prepare(&small_config(seed))?;
        for scheme in Scheme::ALL {
            let net = build_network(&inst, scheme)?;
            let w: Beamformers = initialize(&net, &mut rng::stream(seed, Purpose::Init));
            for (s, k) in net.rate_keys() {
                for m in 0..inst.samples.len() {
                    let (lhs, rhs) = rate_identity_check(&net, k, s, inst.samples.channel(m, k), &w)?;
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    out.push(CheckOutcome {
        name: "rate identity",
        passed: worst < 1e-9,
        detail: format!("max deviation {worst:e}"),
    });

    let opts = WmmseOptions {
        timing: false,
        ..WmmseOptions::default()
    };
    let mut failures = Vec::new();
    for seed in 0..3 {
        let inst = prepare(&small_config(seed))?;
        for scheme in Scheme::ALL {
            let res = run_scheme(&inst, scheme, &opts)?;
            if res.status == RunStatus::SolverFailure {
                failures.push(format!("seed {seed} {}: {}", scheme.name(), res.message.unwrap_or_default()));
            }
            if !res.constraints.satisfied(1e-6) {
                failures.push(format!("seed {seed} {}: constraints violated", scheme.name()));
            }
            let dip = res
                .trace
                .windows(2)
                .map(|p| p[0].r_bar_bps - p[1].r_bar_bps)
                .fold(0.0, f64::max);
            if dip / inst.config.bandwidth_hz > 1e-6 {
                failures.push(format!("seed {seed} {}: objective dipped by {dip:e} bit/s", scheme.name()));
            }
        }
    }
    out.push(CheckOutcome {
        name: "solves",
        passed: failures.is_empty(),
        detail: failures.first().cloned().unwrap_or_else(|| "3 seeds x 3 schemes".into()),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn set_field_types() {
        let base = ScenarioConfig::default();
        let cfg = set_field(&base, "n_users", Value::from(8.0)).unwrap();
        assert_eq!(cfg.n_users, 8);
        let cfg = set_field(&base, "c_max_bps", Value::from(2e7)).unwrap();
        assert_eq!(cfg.c_max_bps, 2e7);
        assert!(set_field(&base, "n_users", Value::from(2.5)).is_err());
        assert!(set_field(&base, "nope", Value::from(1)).is_err());
        let cfg = apply_override(&base, "group_mode=g_eq_k").unwrap();
        assert_eq!(cfg.group_mode, crate::scenario::GroupMode::GEqK);
    }

    #[test]
    fn presets_are_valid() {
        for p in [Preset::Fig3a, Preset::Fig5, Preset::Fig6, Preset::Fig8] {
            let (param, values) = p.axis();
            let spec = SweepSpec {
                base: p.config(),
                param: param.into(),
                values,
                schemes: Scheme::ALL.to_vec(),
                seeds: vec![0],
            };
            spec.validate().unwrap();
        }
    }

    #[test]
    fn summary_ci() {
        let csv = "param_value,scheme,mmf_rate_bps\n1,tin,2\n1,tin,4\n2,tin,5\n";
        let rows = summarize(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean, 3.0);
        assert!((rows[0].ci95.unwrap() - 1.96).abs() < 1e-12);
        assert_eq!(rows[1].ci95, None);
        let err = summarize("param_value,scheme\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("mmf_rate_bps"));
    }

    #[test]
    fn gain_formula() {
        let row = |m| SummaryRow {
            param_value: "8".into(),
            scheme: "rs_cmd".into(),
            n: 1,
            mean: m,
            ci95: None,
        };
        let g = multicast_gain(&[row(3.0)], &[row(2.0)]);
        assert!((g[0].gain_pct - 50.0).abs() < 1e-12);
    }
}

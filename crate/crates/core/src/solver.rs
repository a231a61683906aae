//! The outer SAA + WMMSE loop, feasible initialization and the three scheme
//! variants.
//!
//! All schemes of one seed share the same geometry, demands, cache placement,
//! private-stream clusters and channel samples:
//!
//! * `rs_cmd`: one common stream per group, decoded by the users in `M_g`,
//!   served by the common cluster of the clustering step.
//! * `tin`: private streams only.
//! * `scm_rsma`: a single common stream decoded first by every user, served
//!   by every BS, never cacheable, whose rate is split into per-group shares.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_statistics, draw_samples, ChannelStatistics, SampleSet};
use crate::clustering::{candidate_clusters, private_candidates, run_clustering, ClusterAssignment, StreamKind};
use crate::conic::{build_subproblem, independent_violation, solve, SolveOptions, SubproblemStatus};
use crate::error::Result;
use crate::grouping::{build_receiver_structure, draw_requests, form_groups, DemandProfile, MulticastGroup, ReceiverStructure};
use crate::network::{Beamformers, Network, RateAllocation, Stream};
use crate::rng::{self, Purpose};
use crate::scenario::{build_scenario, place_cache, CachePlacement, Scenario, ScenarioConfig, Scheme};
use crate::wmmse::{check_constraints, stream_rates, update_aux, ConstraintReport};

/// Everything drawn for one seed before any optimization.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub stats: ChannelStatistics,
    pub demands: DemandProfile,
    pub groups: Vec<MulticastGroup>,
    pub placement: CachePlacement,
    /// Receiver structure of `rs_cmd`, with dropped commons removed.
    pub receiver: ReceiverStructure,
    pub clusters: ClusterAssignment,
    pub samples: SampleSet,
}

/// Draws the scenario of `config.rng_seed` and runs grouping, receiver
/// construction and clustering.
pub fn prepare(config: &ScenarioConfig) -> Result<Instance> {
    config.validate()?;
    let seed = config.rng_seed;
    let scenario = build_scenario(config, &mut rng::stream(seed, Purpose::Geometry))?;
    let stats = build_statistics(
        &scenario,
        config.shadow_sigma_db,
        config.antenna_gain_db,
        &mut rng::stream(seed, Purpose::Shadowing),
    )?;
    let demands = draw_requests(config, &mut rng::stream(seed, Purpose::Demands))?;
    let groups = form_groups(&demands.requests, config.group_mode);
    let placement = place_cache(
        &demands.popularity,
        config.cache_policy,
        config.n_bs,
        config.cache_size_files,
        &mut rng::stream(seed, Purpose::Cache),
    )?;
    let hint = private_candidates(&groups, &stats, config.mu_db);
    let mut receiver = build_receiver_structure(&groups, &stats, &hint, config.d_max_common)?;
    let candidates = candidate_clusters(&groups, &receiver, &stats, config.mu_db)?;
    let clusters = run_clustering(&candidates, config.n_bs, config.a_max_streams);
    for &(g, kind) in &clusters.dropped_streams {
        if kind == StreamKind::Common {
            receiver.remove_common(g);
        }
    }
    let samples = draw_samples(
        &stats,
        config.m_samples,
        config.csit_mode,
        &mut rng::stream(seed, Purpose::Samples),
    )?;
    Ok(Instance {
        config: config.clone(),
        scenario,
        stats,
        demands,
        groups,
        placement,
        receiver,
        clusters,
        samples,
    })
}

fn mask(cluster: &[usize], n_bs: usize) -> Vec<bool> {
    let mut m = vec![false; n_bs];
    for &n in cluster {
        m[n] = true;
    }
    m
}

/// The optimization instance of `scheme`.
pub fn build_network(inst: &Instance, scheme: Scheme) -> Result<Network> {
    let cfg = &inst.config;
    let n_bs = cfg.n_bs;
    let n_groups = inst.groups.len();
    let user_group = (0..cfg.n_users).map(|k| inst.receiver.group_of(k)).collect::<Vec<_>>();
    let private_support: Vec<Vec<bool>> = inst.clusters.n_g_p.iter().map(|c| mask(c, n_bs)).collect();
    let (receiver, common_support, common_file, common_credit, common_shared) = match scheme {
        Scheme::RsCmd => (
            inst.receiver.clone(),
            inst.clusters.n_g_c.iter().map(|c| mask(c, n_bs)).collect(),
            inst.groups.iter().map(|g| Some(g.file)).collect(),
            (0..n_groups).map(|g| vec![g]).collect(),
            vec![false; n_groups],
        ),
        Scheme::Tin => (
            ReceiverStructure::private_only(user_group),
            Vec::new(),
            Vec::new(),
            vec![Vec::new(); n_groups],
            Vec::new(),
        ),
        Scheme::ScmRsma => (
            ReceiverStructure::single_common(user_group),
            vec![vec![true; n_bs]],
            vec![None],
            vec![vec![0]; n_groups],
            vec![true],
        ),
    };
    let net = Network {
        n_bs,
        n_antennas: cfg.n_antennas,
        bandwidth_hz: cfg.bandwidth_hz,
        noise_power_w: inst.scenario.noise_power_w,
        p_max_w: vec![cfg.p_max_w(); n_bs],
        c_max_bps: vec![cfg.c_max_bps; n_bs],
        groups: inst.groups.clone(),
        receiver,
        private_support,
        common_support,
        common_file,
        common_credit,
        common_shared,
        placement: inst.placement.clone(),
    };
    net.validate()?;
    Ok(net)
}

/// Share of a BS budget given to each private stream; commons get the rest
/// of the pair budget.
const PRIVATE_SHARE: f64 = 0.8;
const HEADROOM: f64 = 0.9;

/// Feasible starting precoders: each BS splits `0.9 P_n` over the streams it
/// serves with weights 0.8 (private) and 0.2 (common); each block points
/// along a unit direction with random phases.
pub fn initialize<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Beamformers {
    let l = net.n_antennas;
    let mut w = Beamformers::for_network(net);
    let streams: Vec<(Stream, f64)> = (0..net.n_groups())
        .map(|g| (Stream::private(g), PRIVATE_SHARE))
        .chain(
            (0..net.n_commons())
                .filter(|&i| net.common_active(i))
                .map(|i| (Stream::common(i), 1.0 - PRIVATE_SHARE)),
        )
        .collect();
    for n in 0..net.n_bs {
        let served: Vec<(Stream, f64)> = streams.iter().copied().filter(|(s, _)| net.support(*s)[n]).collect();
        let total: f64 = served.iter().map(|(_, share)| share).sum();
        if total == 0.0 || net.p_max_w[n] <= 0.0 {
            continue;
        }
        for (s, share) in served {
            let amp = (HEADROOM * net.p_max_w[n] * share / total / l as f64).sqrt();
            let block = &mut w.stream_mut(s)[n * l..(n + 1) * l];
            for z in block {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                *z = Complex64::from_polar(amp, phase);
            }
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub confirmations: usize,
    pub conic: SolveOptions,
    /// Record wall-clock time in the trace; disable for reproducible output.
    pub timing: bool,
}

impl Default for WmmseOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-4,
            confirmations: 3,
            conic: SolveOptions::default(),
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub r_bar_bps: f64,
    pub group_rates_bps: Vec<f64>,
    pub max_violation: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    /// A group lost its private stream in clustering; its rate is zero.
    DroppedPrivate,
    SolverFailure,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::DroppedPrivate => "dropped_private",
            RunStatus::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub scheme: Scheme,
    pub w: Beamformers,
    pub rates: RateAllocation,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub status: RunStatus,
    /// Diagnostic of the failing subproblem when `status` is `SolverFailure`.
    pub message: Option<String>,
    pub constraints: ConstraintReport,
    pub dropped_streams: Vec<(usize, StreamKind)>,
    /// Iterations whose subproblem stalled but whose point passed the
    /// independent feasibility check.
    pub reduced_accuracy_steps: usize,
    /// Streams switched off after their power and rate became negligible.
    pub pruned_streams: Vec<Stream>,
}

impl SolveResult {
    /// Optimized max-min rate `R̄` in bit/s.
    pub fn mmf_rate(&self) -> f64 {
        self.rates.r_bar
    }

    /// Writes the trace as CSV with one `rate_g<g>` column per group.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let n_groups = self.rates.private.len();
        let mut header = vec!["iteration".to_string(), "r_bar_bps".into()];
        header.extend((0..n_groups).map(|g| format!("rate_g{g}")));
        header.extend(["max_violation".into(), "wall_ms".into()]);
        wtr.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.iteration.to_string(), row.r_bar_bps.to_string()];
            rec.extend(row.group_rates_bps.iter().map(|r| r.to_string()));
            rec.extend([row.max_violation.to_string(), row.wall_ms.to_string()]);
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A stream whose optimized rate falls below this many bit/s/Hz is switched
/// off for the rest of the run.
const DEAD_RATE: f64 = 5e-7;
/// Looser threshold applied once when a subproblem fails.
const DYING_RATE: f64 = 1e-5;
/// Relative violation accepted for points of stalled subproblem solves.
const ACCEPT_TOL: f64 = 1e-7;
/// Tolerated objective decrease between iterations, in bit/s/Hz.
const ASCENT_SLACK: f64 = 1e-7;

/// Switches off every live stream of `net` whose rate is at most
/// `threshold` bit/s/Hz. Returns whether any stream was switched off.
fn prune_streams(net: &mut Network, rates: &mut RateAllocation, w: &mut Beamformers, threshold: f64, out: &mut Vec<Stream>) -> bool {
    let streams: Vec<Stream> = (0..net.n_groups())
        .map(Stream::private)
        .chain((0..net.n_commons()).map(Stream::common))
        .collect();
    let mut any = false;
    for s in streams {
        let live = net.support(s).contains(&true) && (s.kind == StreamKind::Private || net.common_active(s.index));
        if live && rates.rate(s) <= threshold * net.bandwidth_hz {
            match s.kind {
                StreamKind::Private => {
                    net.private_support[s.index].fill(false);
                    rates.private[s.index] = 0.0;
                }
                StreamKind::Common => {
                    net.common_support[s.index].fill(false);
                    rates.common[s.index] = 0.0;
                }
            }
            w.stream_mut(s).fill(Complex64::new(0.0, 0.0));
            out.push(s);
            any = true;
        }
    }
    any
}

fn max_violation(report: &ConstraintReport) -> f64 {
    report.power.max(report.fronthaul).max(report.min_rate_link).max(0.0)
}

/// Block coordinate ascent from `w0`: alternate closed-form receivers and
/// weights with the convex subproblem until the relative change of `R̄`
/// stays below `rel_tol` for `confirmations` consecutive iterations.
pub fn run_wmmse(net: &Network, samples: &SampleSet, w0: &Beamformers, scheme: Scheme, opts: &WmmseOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let mut w = w0.clone();
    w.apply_masks(net);
    let mut rates = RateAllocation::zeros(net);
    let mut result = SolveResult {
        scheme,
        w: w.clone(),
        rates: rates.clone(),
        trace: Vec::new(),
        iterations: 0,
        status: RunStatus::MaxIterations,
        message: None,
        constraints: check_constraints(net, &w, &rates),
        dropped_streams: Vec::new(),
        reduced_accuracy_steps: 0,
        pruned_streams: Vec::new(),
    };
    if net.private_support.iter().any(|s| !s.contains(&true)) {
        result.status = RunStatus::DroppedPrivate;
        return Ok(result);
    }

    let mut pruned = net.clone();
    let net = &mut pruned;
    let mut previous: Option<f64> = None;
    let mut hits = 0;
    'outer: for iteration in 1..=opts.max_iters {
        if iteration > 1 {
            prune_streams(net, &mut rates, &mut w, DEAD_RATE, &mut result.pruned_streams);
        }
        let floor = previous.unwrap_or(0.0) - ASCENT_SLACK * net.bandwidth_hz;
        let mut retried = false;
        let sol = loop {
            let (_, aux) = update_aux(net, &w, samples)?;
            let problem = build_subproblem(net, &aux)?;
            let sol = solve(&problem, opts.conic)?;
            if sol.status == SubproblemStatus::Optimal && (!retried || sol.objective >= floor) {
                break sol;
            }
            // a stalled solve is still usable when its point is verifiably
            // feasible and does not lose objective
            let violation = independent_violation(net, &aux, &sol.w, &sol.rates)?;
            if violation <= ACCEPT_TOL && sol.objective >= floor {
                if sol.status != SubproblemStatus::Optimal {
                    result.reduced_accuracy_steps += 1;
                }
                break sol;
            }
            if !retried && iteration > 1 && prune_streams(net, &mut rates, &mut w, DYING_RATE, &mut result.pruned_streams) {
                retried = true;
                continue;
            }
            result.status = RunStatus::SolverFailure;
            result.message = Some(format!(
                "subproblem at iteration {iteration} returned {:?} (primal {:e}, dual {:e}, gap {:e}, violation {:e})",
                sol.status, sol.kkt_residuals.primal, sol.kkt_residuals.dual, sol.kkt_residuals.gap, violation
            ));
            break 'outer;
        };
        let net = &*net;
        w = sol.w;
        w.apply_masks(net);
        rates = sol.rates;
        let report = check_constraints(net, &w, &rates);
        let r = rates.r_bar;
        result.trace.push(TraceRow {
            iteration,
            r_bar_bps: r,
            group_rates_bps: (0..net.n_groups()).map(|g| rates.group_rate(net, g)).collect(),
            max_violation: max_violation(&report),
            wall_ms: if opts.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        });
        result.w = w.clone();
        result.rates = rates.clone();
        result.constraints = report;
        result.iterations = iteration;
        if let Some(prev) = previous {
            if (r - prev).abs() / r.max(1.0) < opts.rel_tol {
                hits += 1;
            } else {
                hits = 0;
            }
        }
        if hits >= opts.confirmations {
            result.status = RunStatus::Converged;
            break;
        }
        previous = Some(r);
    }
    Ok(result)
}

/// Runs `scheme` on a prepared instance from the seeded initialization.
pub fn run_scheme(inst: &Instance, scheme: Scheme, opts: &WmmseOptions) -> Result<SolveResult> {
    let net = build_network(inst, scheme)?;
    let w0 = initialize(&net, &mut rng::stream(inst.config.rng_seed, Purpose::Init));
    let mut result = run_wmmse(&net, &inst.samples, &w0, scheme, opts)?;
    result.dropped_streams = inst.clusters.dropped_streams.clone();
    Ok(result)
}

/// Runs `rs_cmd` starting from the precoders of a converged `tin` result.
pub fn run_warm_started(inst: &Instance, tin: &SolveResult, opts: &WmmseOptions) -> Result<SolveResult> {
    let net = build_network(inst, Scheme::RsCmd)?;
    let mut w0 = Beamformers::for_network(&net);
    w0.private.clone_from(&tin.w.private);
    let mut result = run_wmmse(&net, &inst.samples, &w0, Scheme::RsCmd, opts)?;
    result.dropped_streams = inst.clusters.dropped_streams.clone();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Sample-average MMF rate on the optimization samples.
    pub optimized_mmf_bps: f64,
    /// Sample-average MMF rate on the fresh samples.
    pub evaluated_mmf_bps: f64,
    /// `|optimized − evaluated| / evaluated`, zero when both vanish.
    pub relative_gap: f64,
}

/// Out-of-sample check of fixed precoders.
pub fn evaluate(net: &Network, w: &Beamformers, optimization: &SampleSet, fresh: &SampleSet) -> Result<Evaluation> {
    let opt = stream_rates(net, w, optimization)?.mmf(net);
    let eval = stream_rates(net, w, fresh)?.mmf(net);
    let gap = if eval > 0.0 {
        (opt - eval).abs() / eval
    } else if opt == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Evaluation {
        optimized_mmf_bps: opt,
        evaluated_mmf_bps: eval,
        relative_gap: gap,
    })
}

/// Fresh samples for [`evaluate`], drawn from the evaluation stream.
pub fn evaluation_samples(inst: &Instance, m_samples: usize) -> Result<SampleSet> {
    draw_samples(
        &inst.stats,
        m_samples,
        inst.config.csit_mode,
        &mut rng::stream(inst.config.rng_seed, Purpose::Evaluation),
    )
}

//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line; exits nonzero if any fails.
//! Pass a substring argument to run only matching criteria.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use cran_rsma::channel::{draw_samples, ChannelStatistics};
use cran_rsma::clustering::{candidate_clusters, run_clustering, ClusterAssignment, StreamKind};
use cran_rsma::grouping::{MulticastGroup, ReceiverStructure};
use cran_rsma::harness::Preset;
use cran_rsma::network::{Beamformers, Network};
use cran_rsma::rng::{self, Purpose};
use cran_rsma::scenario::{CsitMode, GroupMode, ScenarioConfig, Scheme};
use cran_rsma::solver::{build_network, prepare, run_scheme, run_warm_started, Instance, RunStatus, SolveResult, WmmseOptions};
use cran_rsma::wmmse::{check_constraints, mmse_receiver, mse, rate_identity_check, received_power_oracle, stream_rates};

/// Relative tolerance of every "nondecreasing in the mean" check: the
/// convergence tolerance of the outer loop.
const TREND_TOL: f64 = 1e-4;

struct Audit {
    solves: usize,
    worst_power: f64,
    worst_fronthaul: f64,
    failures: Vec<String>,
}

impl Audit {
    fn new() -> Self {
        Self {
            solves: 0,
            worst_power: f64::NEG_INFINITY,
            worst_fronthaul: f64::NEG_INFINITY,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, inst: &Instance, res: &SolveResult) {
        let net = build_network(inst, res.scheme).expect("network");
        let report = check_constraints(&net, &res.w, &res.rates);
        self.solves += 1;
        self.worst_power = self.worst_power.max(report.power);
        self.worst_fronthaul = self.worst_fronthaul.max(report.fronthaul);
        if report.power > 1e-6 || report.fronthaul > 1e-6 || !report.masks_respected {
            self.failures.push(format!(
                "seed {} {}: power {:e} fronthaul {:e} masks {}",
                inst.config.rng_seed,
                res.scheme.name(),
                report.power,
                report.fronthaul,
                report.masks_respected
            ));
        }
    }
}

fn opts() -> WmmseOptions {
    WmmseOptions {
        timing: false,
        ..WmmseOptions::default()
    }
}

fn solve(inst: &Instance, scheme: Scheme, audit: &mut Audit) -> SolveResult {
    let res = run_scheme(inst, scheme, &opts()).expect("solve");
    audit.record(inst, &res);
    res
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn nondecreasing(means: &[f64]) -> bool {
    means.windows(2).all(|p| p[1] >= p[0] - TREND_TOL * p[0].abs())
}

/// Random small instance used by the per-sample checks.
fn random_instance(seed: u64) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(0xACCE_0000 + seed);
    let n_files = r.random_range(1..=4);
    let cfg = ScenarioConfig {
        n_bs: r.random_range(1..=4),
        n_users: r.random_range(1..=6),
        n_antennas: r.random_range(1..=3),
        n_files,
        cache_size_files: r.random_range(0..=n_files),
        m_samples: 1,
        rng_seed: seed,
        ..ScenarioConfig::default()
    };
    prepare(&cfg).expect("instance")
}

fn random_beamformers<R: Rng>(net: &Network, rng: &mut R) -> Beamformers {
    let mut w = Beamformers::for_network(net);
    let amp = (net.p_max_w[0] / (net.n_groups() + net.n_commons()) as f64 / net.n_antennas as f64).sqrt();
    for v in w.private.iter_mut().chain(w.common.iter_mut()) {
        for z in v.iter_mut() {
            let scale: f64 = rng.random_range(0.0..1.0);
            *z = Complex64::from_polar(amp * scale, rng.random_range(0.0..std::f64::consts::TAU));
        }
    }
    w.apply_masks(net);
    w
}

fn lemma_identity(_: &mut Audit) -> (bool, String) {
    let mut worst: f64 = 0.0;
    let (mut draws, mut private, mut common) = (0, 0, 0);
    for seed in 0..50 {
        let inst = random_instance(seed);
        let mut rng = rng::stream(seed, Purpose::Oracle);
        for draw in 0..10 {
            let scheme = if draw % 2 == 0 { Scheme::RsCmd } else { Scheme::ScmRsma };
            let net = build_network(&inst, scheme).unwrap();
            let w = random_beamformers(&net, &mut rng);
            draws += 1;
            for (s, k) in net.rate_keys() {
                let (lhs, rhs) = rate_identity_check(&net, k, s, inst.samples.channel(0, k), &w).unwrap();
                worst = worst.max((lhs - rhs).abs());
                match s.kind {
                    StreamKind::Private => private += 1,
                    StreamKind::Common => common += 1,
                }
            }
        }
    }
    (
        worst < 1e-9 && draws == 500 && private > 0 && common > 0,
        format!("{draws} draws, {private} private and {common} common pairs, max deviation {worst:.2e}"),
    )
}

fn mmse_stationarity(_: &mut Audit) -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut seed = 0;
    while instances < 200 {
        let inst = random_instance(1000 + seed);
        let mut rng = rng::stream(seed, Purpose::Oracle);
        seed += 1;
        let net = build_network(&inst, Scheme::RsCmd).unwrap();
        let w = random_beamformers(&net, &mut rng);
        let keys = net.rate_keys();
        let (s, k) = keys[rng.random_range(0..keys.len())];
        let h = inst.samples.channel(0, k);
        let (u, e) = mmse_receiver(&net, k, s, h, &w).unwrap();
        // derivative with respect to u·√T, with T = 1 / (ε at u = 0)
        let (t, _) = cran_rsma::wmmse::power_terms(&net, k, s, h, &w).unwrap();
        let step = 1e-3 / t.sqrt();
        let f = |du: Complex64| mse(&net, k, s, h, &w, u + du).unwrap();
        let d_re = (f(Complex64::new(step, 0.0)) - f(Complex64::new(-step, 0.0))) / (2.0 * step);
        let d_im = (f(Complex64::new(0.0, step)) - f(Complex64::new(0.0, -step))) / (2.0 * step);
        let grad = d_re.hypot(d_im) / t.sqrt();
        assert!((f(Complex64::new(0.0, 0.0)) - e).abs() < 1e-12);
        worst = worst.max(grad);
        instances += 1;
    }
    (worst < 1e-6, format!("{instances} instances, max scaled gradient {worst:.2e}"))
}

fn signal_oracle(_: &mut Audit) -> (bool, String) {
    let mut stages = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let inst = random_instance(2000 + seed);
        let mut rng = rng::stream(seed, Purpose::Oracle);
        let scheme = if seed % 2 == 0 { Scheme::RsCmd } else { Scheme::ScmRsma };
        let net = build_network(&inst, scheme).unwrap();
        let w = random_beamformers(&net, &mut rng);
        let k = rng.random_range(0..net.n_users());
        let out = received_power_oracle(&net, k, inst.samples.channel(0, k), &w, 1_000_000, &mut rng).unwrap();
        for st in out {
            stages += 1;
            worst = worst.max((st.analytic - st.empirical).abs() / st.std_error);
        }
    }
    (worst <= 3.0, format!("20 instances, {stages} stages, max |analytic - empirical| = {worst:.2} SE"))
}

fn monotone_ascent(audit: &mut Audit) -> (bool, String) {
    let mut worst_dip: f64 = 0.0;
    let mut converged = 0;
    for seed in 0..20 {
        let cfg = ScenarioConfig {
            n_bs: 3,
            n_users: 6,
            n_antennas: 2,
            n_files: 3,
            cache_size_files: 1,
            m_samples: 50,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let inst = prepare(&cfg).unwrap();
        assert!(inst.groups.len() <= 3);
        let res = solve(&inst, Scheme::RsCmd, audit);
        for p in res.trace.windows(2) {
            let change = (p[1].r_bar_bps - p[0].r_bar_bps) / cfg.bandwidth_hz;
            worst_dip = worst_dip.min(change);
        }
        if res.status == RunStatus::Converged && res.iterations <= 100 {
            converged += 1;
        }
    }
    (
        worst_dip >= -1e-6 && converged >= 19,
        format!("min change {worst_dip:.2e} bit/s/Hz, converged {converged}/20"),
    )
}

fn closed_form(audit: &mut Audit) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let cfg = ScenarioConfig {
            n_bs: 1,
            n_users: 1,
            n_antennas: 1,
            n_files: 1,
            cache_size_files: 0,
            c_max_bps: 1e12,
            csit_mode: CsitMode::Full,
            m_samples: 1,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let inst = prepare(&cfg).unwrap();
        let h = inst.samples.channel(0, 0)[0];
        let snr = cfg.p_max_w() * h.norm_sqr() / cfg.noise_power_w();
        let target = cfg.bandwidth_hz * (1.0 + snr).log2();
        for scheme in [Scheme::RsCmd, Scheme::Tin] {
            let res = solve(&inst, scheme, audit);
            worst = worst.max((res.mmf_rate() - target).abs() / target);
        }
    }
    (worst < 1e-4, format!("3 channels x 2 schemes, max relative error {worst:.2e}"))
}

fn desk(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_bs: 4,
        n_users: 8,
        m_samples: 200,
        rng_seed: seed,
        ..Preset::Fig3a.config()
    }
}

fn tin_dominance(audit: &mut Audit) -> (bool, String) {
    let mut worst: f64 = f64::INFINITY;
    for seed in 0..10 {
        let inst = prepare(&desk(seed)).unwrap();
        let tin = solve(&inst, Scheme::Tin, audit);
        let rs = run_warm_started(&inst, &tin, &opts()).unwrap();
        audit.record(&inst, &rs);
        worst = worst.min((rs.mmf_rate() - tin.mmf_rate()) / inst.config.bandwidth_hz);
    }
    (worst >= -1e-6, format!("10 seeds, min (warm RS-CMD - TIN) = {worst:.2e} bit/s/Hz"))
}

fn scheme_ordering(audit: &mut Audit) -> (bool, String) {
    let capacities = [20e6, 40e6, 60e6];
    let mut means = vec![[0.0; 3]; capacities.len()];
    for (ci, &c) in capacities.iter().enumerate() {
        let mut per_scheme = vec![Vec::new(); 3];
        for seed in 0..10 {
            let inst = prepare(&ScenarioConfig { c_max_bps: c, ..desk(seed) }).unwrap();
            for (si, scheme) in [Scheme::RsCmd, Scheme::ScmRsma, Scheme::Tin].into_iter().enumerate() {
                per_scheme[si].push(solve(&inst, scheme, audit).mmf_rate());
            }
        }
        for si in 0..3 {
            means[ci][si] = mean(&per_scheme[si]);
        }
    }
    let ordered = means.iter().all(|m| m[0] >= m[1] && m[1] >= m[2]);
    let monotone = (0..3).all(|si| nondecreasing(&means.iter().map(|m| m[si]).collect::<Vec<_>>()));
    let table: Vec<String> = capacities
        .iter()
        .zip(&means)
        .map(|(c, m)| format!("{:.0} Mbps: rs_cmd {:.3} scm {:.3} tin {:.3}", c / 1e6, m[0] / 1e6, m[1] / 1e6, m[2] / 1e6))
        .collect();
    (
        ordered && monotone,
        format!("ordering {ordered}, fronthaul monotone {monotone}; mean Mbps {}", table.join("; ")),
    )
}

fn cache_trends(audit: &mut Audit) -> (bool, String) {
    let caches = [0, 5, 10];
    let capacities = [20e6, 60e6];
    let mut means = [[0.0; 3]; 2];
    for (ci, &c) in capacities.iter().enumerate() {
        for (fi, &f) in caches.iter().enumerate() {
            let rates: Vec<f64> = (0..10)
                .map(|seed| {
                    let cfg = ScenarioConfig {
                        c_max_bps: c,
                        cache_size_files: f,
                        ..desk(seed)
                    };
                    solve(&prepare(&cfg).unwrap(), Scheme::RsCmd, audit).mmf_rate()
                })
                .collect();
            means[ci][fi] = mean(&rates);
        }
    }
    let monotone = nondecreasing(&means[0]);
    let gap_low = means[0][2] - means[0][0];
    let gap_high = means[1][2] - means[1][0];
    (
        monotone && gap_low > gap_high,
        format!(
            "20 Mbps means {:.3?} Mbps, cache gap {:.3} Mbps at 20 vs {:.3} Mbps at 60",
            means[0].map(|x| x / 1e6),
            gap_low / 1e6,
            gap_high / 1e6
        ),
    )
}

fn multicast_gain(audit: &mut Audit) -> (bool, String) {
    let mut gains = Vec::new();
    let mut ok = true;
    for k in [8, 16] {
        let mut m = [0.0; 2];
        for (mi, mode) in [GroupMode::GLeK, GroupMode::GEqK].into_iter().enumerate() {
            let rates: Vec<f64> = (0..10)
                .map(|seed| {
                    let cfg = ScenarioConfig {
                        n_users: k,
                        group_mode: mode,
                        m_samples: 200,
                        rng_seed: seed,
                        ..Preset::Fig8.config()
                    };
                    solve(&prepare(&cfg).unwrap(), Scheme::RsCmd, audit).mmf_rate()
                })
                .collect();
            m[mi] = mean(&rates);
        }
        ok &= m[0] >= m[1];
        gains.push(100.0 * (m[0] - m[1]) / m[1]);
    }
    (
        ok && gains[1] > gains[0],
        format!("gain {:.2}% at K=8, {:.2}% at K=16", gains[0], gains[1]),
    )
}

fn saa_consistency(audit: &mut Audit) -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut better = 0;
    for seed in 0..10 {
        let cfg = ScenarioConfig {
            n_bs: 3,
            n_users: 6,
            n_files: 3,
            cache_size_files: 1,
            m_samples: 50,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let inst = prepare(&cfg).unwrap();
        let res = solve(&inst, Scheme::RsCmd, audit);
        let net = build_network(&inst, Scheme::RsCmd).unwrap();
        let mmf = |m: usize, seed: u64, purpose: Purpose| {
            let s = draw_samples(&inst.stats, m, cfg.csit_mode, &mut rng::stream(seed, purpose)).unwrap();
            stream_rates(&net, &res.w, &s).unwrap().mmf(&net)
        };
        let reference = mmf(100_000, seed, Purpose::Oracle);
        let dev_mid = (mmf(10_000, seed, Purpose::Evaluation) - reference).abs();
        let dev_small = (mmf(100, seed + (1 << 32), Purpose::Evaluation) - reference).abs();
        worst = worst.max(dev_mid / reference);
        if dev_mid < dev_small {
            better += 1;
        }
    }
    (
        worst < 0.02 && better >= 9,
        format!("max relative deviation at 1e4 samples {:.3}%, closer than 1e2 on {better}/10", 100.0 * worst),
    )
}

fn clustering_invariants(_: &mut Audit) -> (bool, String) {
    let mut bad = Vec::new();
    let mut dropped_free = 0;
    for seed in 0..100 {
        let cfg = ScenarioConfig {
            m_samples: 1,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let a = prepare(&cfg).unwrap();
        let b = prepare(&cfg).unwrap();
        bad.extend(a.clusters.violations(cfg.a_max_streams));
        if a.clusters != b.clusters {
            bad.push(format!("seed {seed} not deterministic"));
        }
        if a.clusters.dropped_streams.is_empty() {
            dropped_free += 1;
        }
    }

    let amp = |db: f64| 10f64.powf(db / 20.0);
    let one = MulticastGroup { id: 0, file: 0, members: vec![0] };
    let rx = ReceiverStructure::from_orders(1, vec![0], vec![vec![0]]).unwrap();
    let stats = ChannelStatistics::from_gains(2, 1, 1, vec![amp(-100.0), amp(-104.0)]).unwrap();
    let a = run_clustering(&candidate_clusters(&[one.clone()], &rx, &stats, 50.0).unwrap(), 2, 8);
    if a.n_g_p[0] != [0, 1] || a.n_g_c[0] != [0, 1] || !a.dropped_streams.is_empty() {
        bad.push("two-BS full service example".into());
    }

    let stats = ChannelStatistics::from_gains(1, 2, 1, vec![1.0, 0.1]).unwrap();
    let groups = vec![one, MulticastGroup { id: 1, file: 1, members: vec![1] }];
    let rx = ReceiverStructure::private_only(vec![0, 1]);
    let a = run_clustering(&candidate_clusters(&groups, &rx, &stats, 10.0).unwrap(), 1, 1);
    if a.g_n_p[0] != [0] || !a.dropped_streams.contains(&(1, StreamKind::Private)) || a.load(0) != 1 {
        bad.push("overload example".into());
    }

    let stats = ChannelStatistics::from_gains(2, 2, 1, vec![1.0; 4]).unwrap();
    let groups: Vec<_> = (0..2).map(|g| MulticastGroup { id: g, file: g, members: vec![g] }).collect();
    let rx = ReceiverStructure::from_orders(2, vec![0, 1], vec![vec![0], vec![1]]).unwrap();
    let a = run_clustering(&candidate_clusters(&groups, &rx, &stats, 0.0).unwrap(), 2, 4);
    if a != (ClusterAssignment { steps: 8, ..ClusterAssignment::everywhere(2, 2, true) }) {
        bad.push("unbinding caps example".into());
    }
    (
        bad.is_empty(),
        format!(
            "100 seeds, {} violations, {dropped_free}/100 seeds without drops{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

type Check = fn(&mut Audit) -> (bool, String);

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(usize, &str, Check, Duration); 11] = [
        (1, "rate identity", lemma_identity, Duration::from_secs(5)),
        (2, "mmse stationarity", mmse_stationarity, Duration::from_secs(5)),
        (3, "signal model oracle", signal_oracle, Duration::from_secs(60)),
        (4, "monotone ascent", monotone_ascent, Duration::from_secs(600)),
        (5, "closed form", closed_form, Duration::from_secs(5)),
        (7, "tin dominance", tin_dominance, Duration::from_secs(600)),
        (8, "scheme ordering", scheme_ordering, Duration::from_secs(3600)),
        (9, "cache trends", cache_trends, Duration::from_secs(3600)),
        (10, "multicast gain", multicast_gain, Duration::from_secs(3600)),
        (11, "saa consistency", saa_consistency, Duration::from_secs(600)),
        (12, "clustering invariants", clustering_invariants, Duration::from_secs(5)),
    ];
    let mut audit = Audit::new();
    let mut lines = Vec::new();
    for (id, name, check, budget) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check(&mut audit);
        let elapsed = start.elapsed();
        let pass = ok && elapsed <= budget;
        let line = format!(
            "criterion {id:>2} {name}: {} ({detail}; {:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        println!("{line}");
        lines.push((id, pass, line));
    }
    if audit.solves > 0 {
        let pass = audit.failures.is_empty();
        let line = format!(
            "criterion  6 constraint satisfaction: {} ({} solves, worst power {:.2e}, worst fronthaul {:.2e}{})",
            if pass { "PASS" } else { "FAIL" },
            audit.solves,
            audit.worst_power,
            audit.worst_fronthaul,
            audit.failures.first().map(|f| format!(", first failure {f}")).unwrap_or_default()
        );
        println!("{line}");
        lines.push((6, pass, line));
    }
    lines.sort_by_key(|l| l.0);
    println!("\nsummary");
    for (_, _, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

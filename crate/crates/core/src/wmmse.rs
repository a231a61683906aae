//! Closed-form per-sample math of the WMMSE reformulation.
//!
//! Received powers, SINRs, MSEs, MMSE receivers and weights, the rate/WMMSE
//! identity, the sample-average rate estimator, fronthaul accounting and the
//! sample-averaged statistics `t̄, z̄, f̄, Ȳ` that parameterize the convex
//! subproblem. Rates are in bit/s; the surrogate uses natural logarithms and
//! converts with `1 / ln 2`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::SampleSet;
use crate::clustering::StreamKind;
use crate::error::{Error, Result};
use crate::network::{Beamformers, Network, RateAllocation, Stream};

/// `h^H w`.
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Inner products `h^H w_s` for every private and common stream.
struct Projections {
    private: Vec<Complex64>,
    common: Vec<Complex64>,
}

impl Projections {
    fn new(h: &[Complex64], w: &Beamformers) -> Self {
        Self {
            private: w.private.iter().map(|x| inner(h, x)).collect(),
            common: w.common.iter().map(|x| inner(h, x)).collect(),
        }
    }

    fn get(&self, s: Stream) -> Complex64 {
        match s.kind {
            StreamKind::Private => self.private[s.index],
            StreamKind::Common => self.common[s.index],
        }
    }

    /// `(T, I)` for stream `s` at user `k`.
    fn terms(&self, net: &Network, s: Stream, k: usize) -> Result<(f64, f64)> {
        let residual = net.residual_commons(s, k)?;
        let privates: f64 = self.private.iter().map(|z| z.norm_sqr()).sum();
        let commons: f64 = residual.iter().map(|&i| self.common[i].norm_sqr()).sum();
        let total = privates + commons + net.noise_power_w;
        let interference = total - self.get(s).norm_sqr();
        Ok((total, interference))
    }
}

/// Received power `T` and interference-plus-noise `I` when user `k` decodes
/// stream `s`. Commons must belong to `Φ_k`.
pub fn power_terms(net: &Network, k: usize, s: Stream, h: &[Complex64], w: &Beamformers) -> Result<(f64, f64)> {
    Projections::new(h, w).terms(net, s, k)
}

pub fn sinr(net: &Network, k: usize, s: Stream, h: &[Complex64], w: &Beamformers) -> Result<f64> {
    let (t, i) = power_terms(net, k, s, h, w)?;
    Ok((t - i) / i)
}

/// `|u|² T − 2 Re{u h^H w_s} + 1`.
pub fn mse(net: &Network, k: usize, s: Stream, h: &[Complex64], w: &Beamformers, u: Complex64) -> Result<f64> {
    let p = Projections::new(h, w);
    let (t, _) = p.terms(net, s, k)?;
    Ok(u.norm_sqr() * t - 2.0 * (u * p.get(s)).re + 1.0)
}

/// MMSE receiver `u = w_s^H h / T`, returned with the induced MSE `I / T`.
pub fn mmse_receiver(net: &Network, k: usize, s: Stream, h: &[Complex64], w: &Beamformers) -> Result<(Complex64, f64)> {
    let p = Projections::new(h, w);
    let (t, i) = p.terms(net, s, k)?;
    Ok((p.get(s).conj() / t, i / t))
}

/// `ρ = 1 / e_mmse`.
pub fn optimal_weight(e_mmse: f64) -> Result<f64> {
    if !(e_mmse > 0.0) || !e_mmse.is_finite() {
        return Err(Error::Numerical(format!("MMSE must be positive, got {e_mmse}")));
    }
    Ok(1.0 / e_mmse)
}

/// Both sides of the rate/WMMSE identity: `log2(1 + γ)` and
/// `(ln ρ* − ρ* e(u*) + 1) / ln 2`.
pub fn rate_identity_check(net: &Network, k: usize, s: Stream, h: &[Complex64], w: &Beamformers) -> Result<(f64, f64)> {
    let lhs = (1.0 + sinr(net, k, s, h, w)?).log2();
    let (u, e_mmse) = mmse_receiver(net, k, s, h, w)?;
    let rho = optimal_weight(e_mmse)?;
    let e = mse(net, k, s, h, w, u)?;
    Ok((lhs, (rho.ln() - rho * e + 1.0) / LN_2))
}

/// Sample-average achievable rate `(B/M) Σ_m log2(1 + γ(m))` of stream `s`
/// for every user bounding it.
pub fn sample_average_rate(net: &Network, s: Stream, w: &Beamformers, samples: &SampleSet) -> Result<Vec<(usize, f64)>> {
    let users = net.rate_users(s);
    let mut acc = vec![0.0; users.len()];
    for m in 0..samples.len() {
        for (slot, &k) in users.iter().enumerate() {
            let p = Projections::new(samples.channel(m, k), w);
            let (t, i) = p.terms(net, s, k)?;
            acc[slot] += (t / i).log2();
        }
    }
    let scale = net.bandwidth_hz / samples.len() as f64;
    Ok(users.into_iter().zip(acc).map(|(k, a)| (k, a * scale)).collect())
}

/// Binding sample-average rate of every stream: the minimum over its users.
/// Inactive commons report zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRates {
    pub private: Vec<f64>,
    pub common: Vec<f64>,
}

impl StreamRates {
    /// Min over groups of `R_g^p + Σ credited commons`, with the pooled rate
    /// of shared commons split to maximize the minimum.
    pub fn mmf(&self, net: &Network) -> f64 {
        let base: Vec<f64> = (0..net.n_groups())
            .map(|g| {
                self.private[g]
                    + net.common_credit[g]
                        .iter()
                        .filter(|&&i| !net.common_shared[i])
                        .map(|&i| self.common[i])
                        .sum::<f64>()
            })
            .collect();
        let pooled: f64 = (0..net.n_commons())
            .filter(|&i| net.common_shared[i])
            .map(|i| self.common[i])
            .sum();
        water_level(&base, pooled)
    }
}

/// Largest `t` with `Σ_g max(0, t − base_g) ≤ budget`.
pub fn water_level(base: &[f64], budget: f64) -> f64 {
    let mut sorted = base.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut acc = budget;
    for j in 0..sorted.len() {
        acc += sorted[j];
        let level = acc / (j + 1) as f64;
        if j + 1 == sorted.len() || level <= sorted[j + 1] {
            return level;
        }
    }
    f64::INFINITY
}

pub fn stream_rates(net: &Network, w: &Beamformers, samples: &SampleSet) -> Result<StreamRates> {
    let keys = net.rate_keys();
    let mut acc = vec![0.0; keys.len()];
    let by_user = keys_by_user(&keys, net.n_users());
    for m in 0..samples.len() {
        for (k, key_ids) in by_user.iter().enumerate() {
            if key_ids.is_empty() {
                continue;
            }
            let p = Projections::new(samples.channel(m, k), w);
            for &id in key_ids {
                let (t, i) = p.terms(net, keys[id].0, k)?;
                acc[id] += (t / i).log2();
            }
        }
    }
    let scale = net.bandwidth_hz / samples.len() as f64;
    let mut out = StreamRates {
        private: vec![f64::INFINITY; net.n_groups()],
        common: vec![f64::INFINITY; net.n_commons()],
    };
    for ((s, _), a) in keys.iter().zip(acc) {
        let slot = match s.kind {
            StreamKind::Private => &mut out.private[s.index],
            StreamKind::Common => &mut out.common[s.index],
        };
        *slot = slot.min(a * scale);
    }
    for r in out.private.iter_mut().chain(out.common.iter_mut()) {
        if r.is_infinite() {
            *r = 0.0;
        }
    }
    Ok(out)
}

fn keys_by_user(keys: &[(Stream, usize)], n_users: usize) -> Vec<Vec<usize>> {
    let mut by_user = vec![Vec::new(); n_users];
    for (id, &(_, k)) in keys.iter().enumerate() {
        by_user[k].push(id);
    }
    by_user
}

/// Per-sample receivers and weights, indexed `[key][m]` with keys from
/// [`Network::rate_keys`].
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub keys: Vec<(Stream, usize)>,
    pub u: Vec<Vec<Complex64>>,
    pub rho: Vec<Vec<f64>>,
}

/// Sample-averaged statistics per rate key.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryStats {
    pub keys: Vec<(Stream, usize)>,
    pub t_bar: Vec<f64>,
    pub z_bar: Vec<f64>,
    pub f_bar: Vec<Vec<Complex64>>,
    pub y_bar: Vec<DMatrix<Complex64>>,
}

impl AuxiliaryStats {
    pub fn position(&self, s: Stream, k: usize) -> Option<usize> {
        self.keys.iter().position(|&key| key == (s, k))
    }
}

/// Recomputes MMSE receivers and optimal weights on every sample and
/// averages them into `t̄ = E[ρ|u|²]`, `z̄ = E[1 − ρ + ln ρ]`,
/// `f̄ = E[ρ h u^*]` and `Ȳ = E[ρ|u|² h h^H]`.
pub fn update_aux(net: &Network, w: &Beamformers, samples: &SampleSet) -> Result<(WmmseState, AuxiliaryStats)> {
    let keys = net.rate_keys();
    let by_user = keys_by_user(&keys, net.n_users());
    let n_keys = keys.len();
    let m_total = samples.len();
    let dim = samples.dim();

    let mut u = vec![Vec::with_capacity(m_total); n_keys];
    let mut rho = vec![Vec::with_capacity(m_total); n_keys];
    let mut t_bar = vec![0.0; n_keys];
    let mut z_bar = vec![0.0; n_keys];
    let mut f_bar = vec![vec![Complex64::new(0.0, 0.0); dim]; n_keys];
    let mut y_bar = vec![DMatrix::<Complex64>::zeros(dim, dim); n_keys];

    for m in 0..m_total {
        for (k, key_ids) in by_user.iter().enumerate() {
            if key_ids.is_empty() {
                continue;
            }
            let h = samples.channel(m, k);
            let p = Projections::new(h, w);
            for &id in key_ids {
                let s = keys[id].0;
                let (t, i) = p.terms(net, s, k)?;
                let uk = p.get(s).conj() / t;
                let r = optimal_weight(i / t)?;
                let weight = r * uk.norm_sqr();
                t_bar[id] += weight;
                z_bar[id] += 1.0 - r + r.ln();
                let fu = uk.conj() * r;
                for (f, hv) in f_bar[id].iter_mut().zip(h) {
                    *f += hv * fu;
                }
                if weight > 0.0 {
                    let y = &mut y_bar[id];
                    for b in 0..dim {
                        let hb = h[b].conj() * weight;
                        for a in 0..dim {
                            y[(a, b)] += h[a] * hb;
                        }
                    }
                }
                u[id].push(uk);
                rho[id].push(r);
            }
        }
    }

    let inv = 1.0 / m_total as f64;
    for id in 0..n_keys {
        t_bar[id] *= inv;
        z_bar[id] *= inv;
        f_bar[id].iter_mut().for_each(|f| *f *= inv);
        y_bar[id] *= Complex64::new(inv, 0.0);
    }
    Ok((
        WmmseState {
            keys: keys.clone(),
            u,
            rho,
        },
        AuxiliaryStats {
            keys,
            t_bar,
            z_bar,
            f_bar,
            y_bar,
        },
    ))
}

/// Left-hand side of the deterministic surrogate rate constraint of key
/// `id`, evaluated directly in complex arithmetic; feasible when `<= 0`.
/// Returns `(value, magnitude)` where `magnitude` sums the absolute values of
/// the individual terms, for relative tolerance checks.
pub fn surrogate_constraint(net: &Network, aux: &AuxiliaryStats, id: usize, w: &Beamformers, rate_bps: f64) -> Result<(f64, f64)> {
    let (s, k) = aux.keys[id];
    let y = &aux.y_bar[id];
    let quad = |x: &[Complex64]| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for b in 0..x.len() {
            if x[b].norm_sqr() == 0.0 {
                continue;
            }
            for a in 0..x.len() {
                acc += x[a].conj() * y[(a, b)] * x[b];
            }
        }
        acc.re
    };
    let mut quadratic = 0.0;
    for x in &w.private {
        quadratic += quad(x);
    }
    for i in net.residual_commons(s, k)? {
        quadratic += quad(&w.common[i]);
    }
    let linear = 2.0 * inner(&aux.f_bar[id], w.stream(s)).re;
    let rate_term = LN_2 / net.bandwidth_hz * rate_bps;
    let noise_term = net.noise_power_w * aux.t_bar[id];
    let value = quadratic - linear + rate_term + noise_term - aux.z_bar[id];
    let magnitude = quadratic.abs() + linear.abs() + rate_term.abs() + noise_term.abs() + aux.z_bar[id].abs();
    Ok((value, magnitude))
}

/// Fronthaul traffic of BS `n` in bit/s.
pub fn fronthaul_load(net: &Network, n: usize, rates: &RateAllocation) -> f64 {
    let private: f64 = (0..net.n_groups())
        .map(|g| net.fronthaul_coefficient(Stream::private(g), n) * rates.private[g])
        .sum();
    let common: f64 = (0..net.n_commons())
        .map(|i| net.fronthaul_coefficient(Stream::common(i), n) * rates.common[i])
        .sum();
    private + common
}

/// Worst violations of the network constraints, measured independently of
/// the conic solver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintReport {
    /// `max_n (‖w_n‖² − P_n) / P_n`, absolute when `P_n = 0`.
    pub power: f64,
    /// `max_n (load_n − C_n) / C_n`.
    pub fronthaul: f64,
    /// `max_g (R̄ − R̄_g) / max(R̄, 1 bit/s)`.
    pub min_rate_link: f64,
    /// Most negative rate, as a positive number.
    pub negativity: f64,
    pub masks_respected: bool,
}

impl ConstraintReport {
    pub fn satisfied(&self, rel_tol: f64) -> bool {
        self.masks_respected
            && self.power <= rel_tol
            && self.fronthaul <= rel_tol
            && self.min_rate_link <= rel_tol
            && self.negativity <= rel_tol
    }
}

pub fn check_constraints(net: &Network, w: &Beamformers, rates: &RateAllocation) -> ConstraintReport {
    let rel = |excess: f64, cap: f64| if cap > 0.0 { excess / cap } else { excess };
    let power = (0..net.n_bs)
        .map(|n| rel(w.bs_power(n) - net.p_max_w[n], net.p_max_w[n]))
        .fold(f64::NEG_INFINITY, f64::max);
    let fronthaul = (0..net.n_bs)
        .map(|n| rel(fronthaul_load(net, n, rates) - net.c_max_bps[n], net.c_max_bps[n]))
        .fold(f64::NEG_INFINITY, f64::max);
    let min_rate_link = (0..net.n_groups())
        .map(|g| (rates.r_bar - rates.group_rate(net, g)) / rates.r_bar.max(1.0))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(rates.share_excess(net) / rates.r_bar.max(1.0));
    let negativity = std::iter::once(rates.r_bar)
        .chain(rates.private.iter().copied())
        .chain(rates.common.iter().copied())
        .map(|r| (-r).max(0.0) / net.bandwidth_hz)
        .fold(0.0, f64::max);
    ConstraintReport {
        power,
        fronthaul,
        min_rate_link,
        negativity,
        masks_respected: w.respects_masks(net),
    }
}

/// Analytic and simulated received power at one decoding stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePower {
    pub stream: Stream,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
}

/// Simulates `y_k` with unit-power circular Gaussian symbols on every stream
/// plus noise, applies ideal SIC along `π_k`, and measures the mean power of
/// the residual signal at each decoding stage (commons in order, then the
/// own private stream).
pub fn received_power_oracle<R: Rng + ?Sized>(
    net: &Network,
    k: usize,
    h: &[Complex64],
    w: &Beamformers,
    n_symbols: usize,
    rng: &mut R,
) -> Result<Vec<StagePower>> {
    if n_symbols == 0 {
        return Err(Error::Domain("need at least one symbol".into()));
    }
    let p = Projections::new(h, w);
    let mut stages: Vec<Stream> = net.receiver.phi(k).iter().map(|&i| Stream::common(i)).collect();
    stages.push(Stream::private(net.receiver.group_of(k)));
    let decoded: Vec<Complex64> = net.receiver.phi(k).iter().map(|&i| p.common[i]).collect();

    let mut sum = vec![0.0; stages.len()];
    let mut sum_sq = vec![0.0; stages.len()];
    let cgauss = |rng: &mut R, var: f64| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * (var / 2.0).sqrt()
    };
    let mut symbols = vec![Complex64::new(0.0, 0.0); decoded.len()];
    for _ in 0..n_symbols {
        let mut y = cgauss(rng, net.noise_power_w);
        for a in &p.private {
            y += a * cgauss(rng, 1.0);
        }
        for (i, a) in p.common.iter().enumerate() {
            let s = cgauss(rng, 1.0);
            if let Some(pos) = net.receiver.phi(k).iter().position(|&c| c == i) {
                symbols[pos] = s;
            }
            y += a * s;
        }
        let mut residual = y;
        for stage in 0..stages.len() {
            let pw = residual.norm_sqr();
            sum[stage] += pw;
            sum_sq[stage] += pw * pw;
            if stage < decoded.len() {
                residual -= decoded[stage] * symbols[stage];
            }
        }
    }
    let nf = n_symbols as f64;
    stages
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mean = sum[i] / nf;
            let var = (sum_sq[i] / nf - mean * mean).max(0.0);
            Ok(StagePower {
                stream: s,
                analytic: p.terms(net, s, k)?.0,
                empirical: mean,
                std_error: (var / nf).sqrt(),
            })
        })
        .collect()
}

//! Network configuration, geometry and cache placement.
//!
//! All quantities are stored in SI units internally (watts, bit/s, meters).
//! Decibel and dBm values only appear in [`ScenarioConfig`] and in reports.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsitMode {
    Full,
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RsCmd,
    Tin,
    ScmRsma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::RsCmd, Scheme::ScmRsma, Scheme::Tin];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RsCmd => "rs_cmd",
            Scheme::Tin => "tin",
            Scheme::ScmRsma => "scm_rsma",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rs_cmd" => Ok(Scheme::RsCmd),
            "tin" => Ok(Scheme::Tin),
            "scm_rsma" => Ok(Scheme::ScmRsma),
            other => Err(Error::Domain(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMode {
    /// One multicast group per distinct requested file.
    GLeK,
    /// One singleton group per user.
    GEqK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    MostPopular,
    UniformRandom,
}

/// Every constant of a network instance.
///
/// Deserializes from JSON with every field optional; missing fields take the
/// defaults of [`ScenarioConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_files: usize,
    pub n_antennas: usize,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub p_max_dbm: f64,
    pub c_max_bps: f64,
    pub cache_size_files: usize,
    pub a_max_streams: usize,
    pub mu_db: f64,
    pub d_max_common: usize,
    pub zipf_exponent: f64,
    pub area_half_width_m: f64,
    pub m_samples: usize,
    pub csit_mode: CsitMode,
    pub scheme: Scheme,
    pub group_mode: GroupMode,
    pub cache_policy: CachePolicy,
    pub shadow_sigma_db: f64,
    pub antenna_gain_db: f64,
    pub min_distance_m: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs: 7,
            n_users: 15,
            n_files: 50,
            n_antennas: 2,
            bandwidth_hz: 10e6,
            noise_density_dbm_hz: -168.0,
            p_max_dbm: 28.0,
            c_max_bps: 40e6,
            cache_size_files: 5,
            a_max_streams: 8,
            mu_db: 10.0,
            d_max_common: 2,
            zipf_exponent: 1.0,
            area_half_width_m: 400.0,
            m_samples: 1000,
            csit_mode: CsitMode::Statistical,
            scheme: Scheme::RsCmd,
            group_mode: GroupMode::GLeK,
            cache_policy: CachePolicy::MostPopular,
            shadow_sigma_db: 8.0,
            antenna_gain_db: 0.0,
            min_distance_m: 10.0,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Per-BS transmit power cap in watts.
    pub fn p_max_w(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    /// Noise power over the whole band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    /// Lists every violated bound; empty when the configuration is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        need(self.n_bs >= 1, "n_bs must be >= 1");
        need(self.n_users >= 1, "n_users must be >= 1");
        need(self.n_files >= 1, "n_files must be >= 1");
        need(self.n_antennas >= 1, "n_antennas (L) must be >= 1");
        need(self.m_samples >= 1, "m_samples must be >= 1");
        need(
            self.cache_size_files <= self.n_files,
            "cache_size_files must be <= n_files",
        );
        need(self.a_max_streams >= 1, "a_max_streams must be >= 1");
        need(self.mu_db >= 0.0, "mu_db must be >= 0");
        need(self.zipf_exponent >= 0.0, "zipf_exponent must be >= 0");
        need(
            self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite(),
            "bandwidth_hz must be > 0",
        );
        need(self.p_max_dbm.is_finite(), "p_max_dbm must be finite");
        need(self.c_max_bps > 0.0, "c_max_bps must be > 0");
        need(
            self.noise_density_dbm_hz.is_finite(),
            "noise_density_dbm_hz must be finite",
        );
        need(
            self.area_half_width_m > 0.0 && self.area_half_width_m.is_finite(),
            "area_half_width_m must be > 0",
        );
        need(self.shadow_sigma_db >= 0.0, "shadow_sigma_db must be >= 0");
        need(self.min_distance_m > 0.0, "min_distance_m must be > 0");
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub noise_power_w: f64,
}

impl Scenario {
    /// Distance between BS `n` and user `k` in meters, clamped below by
    /// `min_distance_m`.
    pub fn distance_m(&self, n: usize, k: usize) -> f64 {
        let [bx, by] = self.bs_positions[n];
        let [ux, uy] = self.user_positions[k];
        (bx - ux).hypot(by - uy).max(self.config.min_distance_m)
    }
}

/// Drops BSs and users uniformly over the square area.
pub fn build_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    config.validate()?;
    let a = config.area_half_width_m;
    let point = |rng: &mut R| [rng.random_range(-a..=a), rng.random_range(-a..=a)];
    let bs_positions = (0..config.n_bs).map(|_| point(rng)).collect();
    let user_positions = (0..config.n_users).map(|_| point(rng)).collect();
    Ok(Scenario {
        config: config.clone(),
        bs_positions,
        user_positions,
        noise_power_w: config.noise_power_w(),
    })
}

/// Binary F x N placement, `cached(f, n)` is true when BS `n` stores file `f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachePlacement {
    n_files: usize,
    n_bs: usize,
    bits: Vec<bool>,
}

impl CachePlacement {
    pub fn empty(n_files: usize, n_bs: usize) -> Self {
        Self {
            n_files,
            n_bs,
            bits: vec![false; n_files * n_bs],
        }
    }

    pub fn full(n_files: usize, n_bs: usize) -> Self {
        Self {
            n_files,
            n_bs,
            bits: vec![true; n_files * n_bs],
        }
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn cached(&self, file: usize, bs: usize) -> bool {
        self.bits[file * self.n_bs + bs]
    }

    pub fn set(&mut self, file: usize, bs: usize, value: bool) {
        self.bits[file * self.n_bs + bs] = value;
    }

    /// Fronthaul coefficient `1 - c_{f,n}`.
    pub fn miss(&self, file: usize, bs: usize) -> f64 {
        if self.cached(file, bs) {
            0.0
        } else {
            1.0
        }
    }

    pub fn column_sum(&self, bs: usize) -> usize {
        (0..self.n_files).filter(|&f| self.cached(f, bs)).count()
    }

    /// True when every file cached here is also cached in `other`.
    pub fn is_subset_of(&self, other: &CachePlacement) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

pub fn place_cache<R: Rng + ?Sized>(
    popularity: &[f64],
    policy: CachePolicy,
    n_bs: usize,
    cache_size: usize,
    rng: &mut R,
) -> Result<CachePlacement> {
    let n_files = popularity.len();
    if cache_size > n_files {
        return Err(Error::InvalidConfig(vec![format!(
            "cache size {cache_size} exceeds library size {n_files}"
        )]));
    }
    let total: f64 = popularity.iter().sum();
    if popularity.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(
            "popularity must be a probability vector".into(),
        ));
    }

    let mut placement = CachePlacement::empty(n_files, n_bs);
    match policy {
        CachePolicy::MostPopular => {
            let mut order: Vec<usize> = (0..n_files).collect();
            // stable sort keeps lower file index first on ties
            order.sort_by(|&a, &b| popularity[b].total_cmp(&popularity[a]));
            for n in 0..n_bs {
                for &f in &order[..cache_size] {
                    placement.set(f, n, true);
                }
            }
        }
        CachePolicy::UniformRandom => {
            for n in 0..n_bs {
                for f in index::sample(rng, n_files, cache_size) {
                    placement.set(f, n, true);
                }
            }
        }
    }
    Ok(placement)
}

/// Report-only validation of a scenario together with its cache placement.
pub fn validate_scenario(scenario: &Scenario, placement: &CachePlacement) -> Vec<String> {
    let cfg = &scenario.config;
    let mut report = cfg.violations();
    let a = cfg.area_half_width_m;
    let inside = |p: &[f64; 2]| p.iter().all(|c| c.abs() <= a);
    if scenario.bs_positions.len() != cfg.n_bs {
        report.push("Scenario: BS position count differs from n_bs".into());
    }
    if scenario.user_positions.len() != cfg.n_users {
        report.push("Scenario: user position count differs from n_users".into());
    }
    if !scenario.bs_positions.iter().all(inside) || !scenario.user_positions.iter().all(inside) {
        report.push("Scenario: position outside the square area".into());
    }
    if !(scenario.noise_power_w > 0.0) {
        report.push("Scenario: noise power must be > 0".into());
    }
    if placement.n_files() != cfg.n_files || placement.n_bs() != cfg.n_bs {
        report.push(format!(
            "CachePlacement: shape {}x{} does not match F x N = {}x{}",
            placement.n_files(),
            placement.n_bs(),
            cfg.n_files,
            cfg.n_bs
        ));
    } else {
        for n in 0..placement.n_bs() {
            let used = placement.column_sum(n);
            if used > cfg.cache_size_files {
                report.push(format!(
                    "CachePlacement: BS {n} caches {used} files, exceeds cache size {}",
                    cfg.cache_size_files
                ));
            }
        }
    }
    report
}

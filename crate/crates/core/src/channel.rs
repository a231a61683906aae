//! Large-scale channel statistics and Monte-Carlo channel realizations.
//!
//! Links follow `h_{n,k} = D_{n,k} e_{n,k}` with `e ~ CN(0, I_L)`, so the
//! per-link covariance is `D^2 I_L`. The aggregate channel of user `k` stacks
//! the per-BS blocks: entry `n * L + l` is antenna `l` of BS `n`.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::scenario::{CsitMode, Scenario};

/// Path loss in dB for a distance in km.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance_km} km"
        )));
    }
    Ok(148.1 + 37.6 * distance_km.log10())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    n_bs: usize,
    n_users: usize,
    n_antennas: usize,
    /// `D_{n,k}` stored row-major by BS.
    gain: Vec<f64>,
}

impl ChannelStatistics {
    pub fn from_gains(n_bs: usize, n_users: usize, n_antennas: usize, gain: Vec<f64>) -> Result<Self> {
        if gain.len() != n_bs * n_users {
            return Err(Error::Domain("gain matrix must be N x K".into()));
        }
        if gain.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Domain("large-scale gains must be finite and >= 0".into()));
        }
        Ok(Self {
            n_bs,
            n_users,
            n_antennas,
            gain,
        })
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// Amplitude gain `D_{n,k}`.
    pub fn gain(&self, n: usize, k: usize) -> f64 {
        self.gain[n * self.n_users + k]
    }

    /// `Q_{n,k} = D_{n,k}^2 I_L`.
    pub fn covariance(&self, n: usize, k: usize) -> DMatrix<Complex64> {
        let d2 = self.gain(n, k).powi(2);
        DMatrix::from_diagonal_element(self.n_antennas, self.n_antennas, Complex64::new(d2, 0.0))
    }

    /// `tr(Q_{n,k}) / L`, the per-antenna average link power.
    pub fn per_antenna_power(&self, n: usize, k: usize) -> f64 {
        self.gain(n, k).powi(2)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bs", "user", "gain"])?;
        for n in 0..self.n_bs {
            for k in 0..self.n_users {
                w.write_record(&[n.to_string(), k.to_string(), format!("{:e}", self.gain(n, k))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Computes `D_{n,k} = 10^(-PL/20) sqrt(g s)` with one log-normal shadowing
/// draw per link and a fixed antenna gain.
pub fn build_statistics<R: Rng + ?Sized>(
    scenario: &Scenario,
    shadow_sigma_db: f64,
    antenna_gain_db: f64,
    rng: &mut R,
) -> Result<ChannelStatistics> {
    let cfg = &scenario.config;
    if !(shadow_sigma_db >= 0.0) {
        return Err(Error::Domain("shadowing std must be >= 0".into()));
    }
    let shadow = Normal::new(0.0, shadow_sigma_db).map_err(|e| Error::Domain(e.to_string()))?;
    let antenna = 10f64.powf(antenna_gain_db / 10.0);
    let mut gain = Vec::with_capacity(cfg.n_bs * cfg.n_users);
    for n in 0..cfg.n_bs {
        for k in 0..cfg.n_users {
            let pl = path_loss_db(scenario.distance_m(n, k) / 1000.0)?;
            let g = 10f64.powf(shadow.sample(rng) / 10.0);
            gain.push(10f64.powf(-pl / 20.0) * (g * antenna).sqrt());
        }
    }
    ChannelStatistics::from_gains(cfg.n_bs, cfg.n_users, cfg.n_antennas, gain)
}

/// `M` aggregate channel realizations for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n_users: usize,
    dim: usize,
    mode: CsitMode,
    data: Vec<Complex64>,
}

impl SampleSet {
    /// Builds a sample set from explicit channels, indexed `[m][k]`.
    pub fn from_channels(mode: CsitMode, channels: Vec<Vec<Vec<Complex64>>>) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::Domain("a sample set needs at least one sample".into()));
        }
        if mode == CsitMode::Full && m != 1 {
            return Err(Error::Domain("full CSIT carries exactly one sample".into()));
        }
        let n_users = channels[0].len();
        let dim = channels[0].first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * n_users * dim);
        for per_user in channels {
            if per_user.len() != n_users || per_user.iter().any(|h| h.len() != dim) {
                return Err(Error::Domain("ragged channel samples".into()));
            }
            data.extend(per_user.into_iter().flatten());
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical("non-finite channel sample".into()));
        }
        Ok(Self {
            n_users,
            dim,
            mode,
            data,
        })
    }

    pub fn len(&self) -> usize {
        if self.n_users * self.dim == 0 {
            0
        } else {
            self.data.len() / (self.n_users * self.dim)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> CsitMode {
        self.mode
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Length `N L` of each aggregate channel.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Aggregate channel `h_k^m`.
    pub fn channel(&self, m: usize, k: usize) -> &[Complex64] {
        let start = (m * self.n_users + k) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Multiplies every sample by a real constant.
    pub fn scaled(&self, factor: f64) -> SampleSet {
        SampleSet {
            data: self.data.iter().map(|z| z * factor).collect(),
            ..self.clone()
        }
    }

    /// One row per (sample, user, BS) link; columns are the L antenna
    /// coefficients with real and imaginary parts interleaved.
    pub fn write_csv<W: Write>(&self, n_antennas: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample".to_string(), "user".to_string(), "bs".to_string()];
        for l in 0..n_antennas {
            header.push(format!("re{l}"));
            header.push(format!("im{l}"));
        }
        w.write_record(&header)?;
        for m in 0..self.len() {
            for k in 0..self.n_users {
                for (n, block) in self.channel(m, k).chunks(n_antennas).enumerate() {
                    let mut row = vec![m.to_string(), k.to_string(), n.to_string()];
                    for z in block {
                        row.push(format!("{:e}", z.re));
                        row.push(format!("{:e}", z.im));
                    }
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws channel realizations. Statistical CSIT yields `m_samples` i.i.d.
/// draws; full CSIT yields a single draw that stands for the true channel.
///
/// Each sample uses its own ChaCha stream keyed by the sample index so the
/// draw is independent of evaluation order.
pub fn draw_samples<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    m_samples: usize,
    mode: CsitMode,
    rng: &mut R,
) -> Result<SampleSet> {
    if m_samples == 0 {
        return Err(Error::Domain("m_samples must be >= 1".into()));
    }
    let m_total = match mode {
        CsitMode::Full => 1,
        CsitMode::Statistical => m_samples,
    };
    let (n_bs, n_users, l) = (stats.n_bs, stats.n_users, stats.n_antennas);
    let dim = n_bs * l;
    let base: u64 = rng.random();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = Vec::with_capacity(m_total * n_users * dim);
    for m in 0..m_total {
        let mut sub = ChaCha8Rng::seed_from_u64(base);
        sub.set_stream(m as u64);
        for k in 0..n_users {
            for n in 0..n_bs {
                let d = stats.gain(n, k) * scale;
                for _ in 0..l {
                    let re: f64 = StandardNormal.sample(&mut sub);
                    let im: f64 = StandardNormal.sample(&mut sub);
                    data.push(Complex64::new(d * re, d * im));
                }
            }
        }
    }
    Ok(SampleSet {
        n_users,
        dim,
        mode,
        data,
    })
}

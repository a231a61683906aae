//! A fully specified optimization instance: streams, decoders, serving
//! supports, cache coefficients and budgets.
//!
//! Private stream `g` carries group `g`'s private part. Common streams are
//! listed separately; `common_credit[g]` names the commons whose rate counts
//! towards group `g` in the min-rate links, and `common_file[i]` gives the
//! file that decides fronthaul cache hits (`None` is never cacheable).
//!
//! A shared common carries split parts of several groups' messages: its rate
//! is divided into per-group shares, and only a group's share counts towards
//! that group. A non-shared common counts in full for every credited group.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clustering::StreamKind;
use crate::error::{Error, Result};
use crate::grouping::{MulticastGroup, ReceiverStructure};
use crate::scenario::CachePlacement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream {
    pub kind: StreamKind,
    pub index: usize,
}

impl Stream {
    pub fn private(g: usize) -> Self {
        Self {
            kind: StreamKind::Private,
            index: g,
        }
    }

    pub fn common(i: usize) -> Self {
        Self {
            kind: StreamKind::Common,
            index: i,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub p_max_w: Vec<f64>,
    pub c_max_bps: Vec<f64>,
    pub groups: Vec<MulticastGroup>,
    pub receiver: ReceiverStructure,
    /// `[g][n]`: BS `n` serves private stream `g`.
    pub private_support: Vec<Vec<bool>>,
    /// `[i][n]`: BS `n` serves common stream `i`.
    pub common_support: Vec<Vec<bool>>,
    pub common_file: Vec<Option<usize>>,
    pub common_credit: Vec<Vec<usize>>,
    pub common_shared: Vec<bool>,
    pub placement: CachePlacement,
}

impl Network {
    pub fn dim(&self) -> usize {
        self.n_bs * self.n_antennas
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_commons(&self) -> usize {
        self.receiver.n_commons()
    }

    pub fn n_users(&self) -> usize {
        self.receiver.n_users()
    }

    pub fn support(&self, s: Stream) -> &[bool] {
        match s.kind {
            StreamKind::Private => &self.private_support[s.index],
            StreamKind::Common => &self.common_support[s.index],
        }
    }

    /// Fronthaul coefficient of stream `s` at BS `n`: zero when `n` does not
    /// serve it or caches its file.
    pub fn fronthaul_coefficient(&self, s: Stream, n: usize) -> f64 {
        if !self.support(s)[n] {
            return 0.0;
        }
        match s.kind {
            StreamKind::Private => self.placement.miss(self.groups[s.index].file, n),
            StreamKind::Common => match self.common_file[s.index] {
                Some(f) => self.placement.miss(f, n),
                None => 1.0,
            },
        }
    }

    /// A common stream is active when it has both decoders and a serving BS.
    pub fn common_active(&self, i: usize) -> bool {
        !self.receiver.decoders(i).is_empty() && self.common_support[i].iter().any(|&b| b)
    }

    /// Users whose rate bounds stream `s`: `G_g` or `M_i`.
    pub fn rate_users(&self, s: Stream) -> Vec<usize> {
        match s.kind {
            StreamKind::Private => self.groups[s.index].members.clone(),
            StreamKind::Common => self.receiver.decoders(s.index).to_vec(),
        }
    }

    /// Every (stream, user) pair carrying a rate constraint, privates first.
    pub fn rate_keys(&self) -> Vec<(Stream, usize)> {
        let mut keys = Vec::new();
        for g in &self.groups {
            for &k in &g.members {
                keys.push((Stream::private(g.id), k));
            }
        }
        for i in 0..self.n_commons() {
            if self.common_active(i) {
                for &k in self.receiver.decoders(i) {
                    keys.push((Stream::common(i), k));
                }
            }
        }
        keys
    }

    /// Common streams that interfere with stream `s` at user `k` (besides
    /// all privates): `Ω_k` for privates, `Ω_k ∪ Ψ_{i,k} ∪ {i}` for commons.
    pub fn residual_commons(&self, s: Stream, k: usize) -> Result<Vec<usize>> {
        let mut out = self.receiver.omega(k);
        if s.kind == StreamKind::Common {
            if !self.receiver.decodes(k, s.index) {
                return Err(Error::Domain(format!(
                    "user {k} does not decode common stream {}",
                    s.index
                )));
            }
            out.extend(self.receiver.psi(s.index, k));
            out.push(s.index);
            out.sort_unstable();
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let (g, c, n) = (self.n_groups(), self.n_commons(), self.n_bs);
        let ok = self.private_support.len() == g
            && self.private_support.iter().all(|v| v.len() == n)
            && self.common_support.len() == c
            && self.common_support.iter().all(|v| v.len() == n)
            && self.common_file.len() == c
            && self.common_shared.len() == c
            && self.common_credit.len() == g
            && self.common_credit.iter().flatten().all(|&i| i < c)
            && self.p_max_w.len() == n
            && self.c_max_bps.len() == n
            && self.groups.iter().enumerate().all(|(i, grp)| grp.id == i);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain("inconsistent network dimensions".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformers {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub private: Vec<Vec<Complex64>>,
    pub common: Vec<Vec<Complex64>>,
}

impl Beamformers {
    pub fn zeros(n_bs: usize, n_antennas: usize, n_groups: usize, n_commons: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n_bs * n_antennas];
        Self {
            n_bs,
            n_antennas,
            private: vec![z.clone(); n_groups],
            common: vec![z; n_commons],
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::zeros(net.n_bs, net.n_antennas, net.n_groups(), net.n_commons())
    }

    pub fn stream(&self, s: Stream) -> &[Complex64] {
        match s.kind {
            StreamKind::Private => &self.private[s.index],
            StreamKind::Common => &self.common[s.index],
        }
    }

    pub fn stream_mut(&mut self, s: Stream) -> &mut [Complex64] {
        match s.kind {
            StreamKind::Private => &mut self.private[s.index],
            StreamKind::Common => &mut self.common[s.index],
        }
    }

    /// Block `w_{n,s}`.
    pub fn block(&self, s: Stream, n: usize) -> &[Complex64] {
        let l = self.n_antennas;
        &self.stream(s)[n * l..(n + 1) * l]
    }

    /// Zeroes every block outside the serving supports.
    pub fn apply_masks(&mut self, net: &Network) {
        let l = self.n_antennas;
        for (w, mask) in self.private.iter_mut().zip(&net.private_support) {
            zero_unsupported(w, mask, l);
        }
        for (w, mask) in self.common.iter_mut().zip(&net.common_support) {
            zero_unsupported(w, mask, l);
        }
    }

    pub fn respects_masks(&self, net: &Network) -> bool {
        let l = self.n_antennas;
        let clean = |w: &Vec<Complex64>, mask: &Vec<bool>| {
            mask.iter()
                .enumerate()
                .all(|(n, &on)| on || w[n * l..(n + 1) * l].iter().all(|z| z.norm_sqr() == 0.0))
        };
        self.private.iter().zip(&net.private_support).all(|(w, m)| clean(w, m))
            && self.common.iter().zip(&net.common_support).all(|(w, m)| clean(w, m))
    }

    /// Transmit power `Σ_s ‖w_{n,s}‖²` of BS `n`.
    pub fn bs_power(&self, n: usize) -> f64 {
        let l = self.n_antennas;
        self.private
            .iter()
            .chain(&self.common)
            .map(|w| w[n * l..(n + 1) * l].iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Beamformers {
        let scale = |v: &Vec<Complex64>| v.iter().map(|z| z * factor).collect();
        Beamformers {
            n_bs: self.n_bs,
            n_antennas: self.n_antennas,
            private: self.private.iter().map(scale).collect(),
            common: self.common.iter().map(scale).collect(),
        }
    }
}

fn zero_unsupported(w: &mut [Complex64], mask: &[bool], l: usize) {
    for (n, &on) in mask.iter().enumerate() {
        if !on {
            w[n * l..(n + 1) * l].fill(Complex64::new(0.0, 0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub r_bar: f64,
    pub private: Vec<f64>,
    pub common: Vec<f64>,
    /// `[i][g]`: share of shared common `i` credited to group `g`; empty for
    /// commons that are not shared or not active.
    pub shares: Vec<Vec<f64>>,
}

impl RateAllocation {
    pub fn zeros(net: &Network) -> Self {
        Self {
            r_bar: 0.0,
            private: vec![0.0; net.n_groups()],
            common: vec![0.0; net.n_commons()],
            shares: net
                .common_shared
                .iter()
                .map(|&shared| if shared { vec![0.0; net.n_groups()] } else { Vec::new() })
                .collect(),
        }
    }

    pub fn rate(&self, s: Stream) -> f64 {
        match s.kind {
            StreamKind::Private => self.private[s.index],
            StreamKind::Common => self.common[s.index],
        }
    }

    /// `R̄_g^p + Σ credited commons`, counting shares of shared commons.
    pub fn group_rate(&self, net: &Network, g: usize) -> f64 {
        self.private[g]
            + net.common_credit[g]
                .iter()
                .map(|&i| if net.common_shared[i] { self.shares[i].get(g).copied().unwrap_or(0.0) } else { self.common[i] })
                .sum::<f64>()
    }

    /// Largest excess of a shared common's shares over its rate.
    pub fn share_excess(&self, net: &Network) -> f64 {
        (0..net.n_commons())
            .filter(|&i| net.common_shared[i])
            .map(|i| self.shares[i].iter().sum::<f64>() - self.common[i])
            .fold(0.0, f64::max)
    }
}

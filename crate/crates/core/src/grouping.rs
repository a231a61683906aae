//! Demands, multicast groups and the per-user successive decoding structure.
//!
//! Common streams are indexed separately from groups. Under rate-splitting
//! with common message decoding, common stream `i` belongs to group `i`; the
//! single-common-stream baseline has one network-wide common stream and the
//! interference-as-noise baseline has none.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelStatistics;
use crate::error::{Error, Result};
use crate::scenario::{GroupMode, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub popularity: Vec<f64>,
    /// File index requested by each user.
    pub requests: Vec<usize>,
}

/// Zipf law `p_f ∝ f^-γ` over files `1..=F`.
pub fn zipf_popularity(n_files: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n_files).map(|f| (f as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

pub fn draw_requests<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<DemandProfile> {
    if config.n_files == 0 {
        return Err(Error::Domain("library must hold at least one file".into()));
    }
    let popularity = zipf_popularity(config.n_files, config.zipf_exponent);
    let pick = WeightedIndex::new(&popularity).map_err(|e| Error::Domain(e.to_string()))?;
    let requests = (0..config.n_users).map(|_| pick.sample(rng)).collect();
    Ok(DemandProfile {
        popularity,
        requests,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticastGroup {
    pub id: usize,
    pub file: usize,
    pub members: Vec<usize>,
}

/// Groups are numbered in order of their first requesting user.
pub fn form_groups(requests: &[usize], mode: GroupMode) -> Vec<MulticastGroup> {
    match mode {
        GroupMode::GEqK => requests
            .iter()
            .enumerate()
            .map(|(k, &file)| MulticastGroup {
                id: k,
                file,
                members: vec![k],
            })
            .collect(),
        GroupMode::GLeK => {
            let mut groups: Vec<MulticastGroup> = Vec::new();
            for (k, &file) in requests.iter().enumerate() {
                match groups.iter_mut().find(|g| g.file == file) {
                    Some(g) => g.members.push(k),
                    None => groups.push(MulticastGroup {
                        id: groups.len(),
                        file,
                        members: vec![k],
                    }),
                }
            }
            groups
        }
    }
}

/// Group index of every user; users outside all groups map to `None`.
pub fn user_groups(groups: &[MulticastGroup], n_users: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; n_users];
    for g in groups {
        for &k in &g.members {
            out[k] = Some(g.id);
        }
    }
    out
}

/// Mean per-antenna link power in dB from the BSs of `cluster` to user `k`.
pub fn interferer_strength(k: usize, stats: &ChannelStatistics, cluster: &[usize]) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::EmptySet(format!("candidate cluster for user {k}")));
    }
    let sum: f64 = cluster
        .iter()
        .map(|&n| 10.0 * stats.per_antenna_power(n, k).log10())
        .sum();
    Ok(sum / cluster.len() as f64)
}

/// Which common streams each user decodes, and in which order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverStructure {
    n_commons: usize,
    user_group: Vec<usize>,
    /// `M_i`, ascending user indices.
    decoders: Vec<Vec<usize>>,
    /// `Φ_k` listed in decoding order, i.e. `order[k][π_k(i) - 1] = i`.
    order: Vec<Vec<usize>>,
}

impl ReceiverStructure {
    /// Builds the structure from per-user decoding orders.
    pub fn from_orders(n_commons: usize, user_group: Vec<usize>, order: Vec<Vec<usize>>) -> Result<Self> {
        if order.len() != user_group.len() {
            return Err(Error::Domain("one decoding order per user required".into()));
        }
        let mut decoders = vec![Vec::new(); n_commons];
        for (k, phi) in order.iter().enumerate() {
            for (pos, &i) in phi.iter().enumerate() {
                if i >= n_commons {
                    return Err(Error::Domain(format!("user {k} decodes unknown common {i}")));
                }
                if phi[..pos].contains(&i) {
                    return Err(Error::Domain(format!("user {k} decodes common {i} twice")));
                }
                decoders[i].push(k);
            }
        }
        Ok(Self {
            n_commons,
            user_group,
            decoders,
            order,
        })
    }

    /// No common streams at all.
    pub fn private_only(user_group: Vec<usize>) -> Self {
        let n = user_group.len();
        Self::from_orders(0, user_group, vec![Vec::new(); n]).expect("valid by construction")
    }

    /// One common stream decoded first by every user.
    pub fn single_common(user_group: Vec<usize>) -> Self {
        let n = user_group.len();
        Self::from_orders(1, user_group, vec![vec![0]; n]).expect("valid by construction")
    }

    pub fn n_users(&self) -> usize {
        self.user_group.len()
    }

    pub fn n_commons(&self) -> usize {
        self.n_commons
    }

    /// Group `g(k)` of user `k`.
    pub fn group_of(&self, k: usize) -> usize {
        self.user_group[k]
    }

    /// `M_i`.
    pub fn decoders(&self, i: usize) -> &[usize] {
        &self.decoders[i]
    }

    /// `Φ_k` in decoding order.
    pub fn phi(&self, k: usize) -> &[usize] {
        &self.order[k]
    }

    pub fn decodes(&self, k: usize, i: usize) -> bool {
        self.order[k].contains(&i)
    }

    /// 1-based decoding step `π_k(i)`.
    pub fn position(&self, k: usize, i: usize) -> Option<usize> {
        self.order[k].iter().position(|&c| c == i).map(|p| p + 1)
    }

    /// `Ω_k`: commons user `k` does not decode.
    pub fn omega(&self, k: usize) -> Vec<usize> {
        (0..self.n_commons).filter(|&i| !self.decodes(k, i)).collect()
    }

    /// `Ψ_{i,k}`: commons decoded after `i` at user `k`.
    pub fn psi(&self, i: usize, k: usize) -> Vec<usize> {
        match self.position(k, i) {
            Some(p) => self.order[k][p..].to_vec(),
            None => Vec::new(),
        }
    }

    /// `Ψ̃_{i,k}`: commons decoded before `i` at user `k`.
    pub fn psi_tilde(&self, i: usize, k: usize) -> Vec<usize> {
        match self.position(k, i) {
            Some(p) => self.order[k][..p - 1].to_vec(),
            None => Vec::new(),
        }
    }

    /// Stops every user from decoding common `i`.
    pub fn remove_common(&mut self, i: usize) {
        for phi in &mut self.order {
            phi.retain(|&c| c != i);
        }
        self.decoders[i].clear();
    }

    /// Per-user decode-order lines `k: [a, b, ...]` for run logs.
    pub fn log_lines(&self) -> Vec<String> {
        self.order
            .iter()
            .enumerate()
            .map(|(k, phi)| {
                let items: Vec<String> = phi.iter().map(|i| i.to_string()).collect();
                format!("{k}: [{}]", items.join(", "))
            })
            .collect()
    }

    /// Lists violated structural invariants; `own_common` asserts that user
    /// `k` decodes common `g(k)` (rate-splitting with per-group commons).
    pub fn violations(&self, own_common: bool) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.n_users() {
            for i in 0..self.n_commons {
                if self.decoders[i].contains(&k) != self.decodes(k, i) {
                    out.push(format!("M_{i} and Phi_{k} disagree"));
                }
            }
            let omega = self.omega(k);
            if omega.len() + self.phi(k).len() != self.n_commons {
                out.push(format!("Omega_{k} is not the complement of Phi_{k}"));
            }
            for &i in self.phi(k) {
                let mut all = self.psi(i, k);
                all.extend(self.psi_tilde(i, k));
                all.push(i);
                all.sort_unstable();
                let mut phi = self.phi(k).to_vec();
                phi.sort_unstable();
                if all != phi {
                    out.push(format!("Psi/Psi~ do not partition Phi_{k} at {i}"));
                }
            }
            if own_common && self.phi(k).last() != Some(&self.group_of(k)) {
                out.push(format!("user {k} does not decode its own common last"));
            }
        }
        out
    }
}

/// Builds `Φ_k` as the own group plus up to `d_max_common` strongest foreign
/// groups, ranked by [`interferer_strength`] over each group's candidate
/// private cluster. Foreign commons are decoded weakest first and the own
/// common is decoded last.
pub fn build_receiver_structure(
    groups: &[MulticastGroup],
    stats: &ChannelStatistics,
    clusters_hint: &[Vec<usize>],
    d_max_common: usize,
) -> Result<ReceiverStructure> {
    let n_users = stats.n_users();
    let membership = user_groups(groups, n_users);
    let user_group: Vec<usize> = membership
        .iter()
        .enumerate()
        .map(|(k, g)| g.ok_or_else(|| Error::Domain(format!("user {k} belongs to no group"))))
        .collect::<Result<_>>()?;

    let mut order = Vec::with_capacity(n_users);
    for (k, &own) in user_group.iter().enumerate() {
        let mut foreign: Vec<(usize, f64)> = groups
            .iter()
            .filter(|g| g.id != own)
            .map(|g| Ok((g.id, interferer_strength(k, stats, &clusters_hint[g.id])?)))
            .collect::<Result<_>>()?;
        foreign.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        foreign.truncate(d_max_common);
        foreign.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut phi: Vec<usize> = foreign.into_iter().map(|(g, _)| g).collect();
        phi.push(own);
        order.push(phi);
    }
    ReceiverStructure::from_orders(groups.len(), user_group, order)
}

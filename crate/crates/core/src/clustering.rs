//! Group-based serving-cluster selection under per-BS stream caps.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStatistics;
use crate::error::{Error, Result};
use crate::grouping::{MulticastGroup, ReceiverStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Private,
    Common,
}

/// `q_{n,k}` in dB.
pub fn channel_quality(n: usize, k: usize, stats: &ChannelStatistics) -> f64 {
    10.0 * stats.per_antenna_power(n, k).log10()
}

fn mean_quality(n: usize, users: &[usize], stats: &ChannelStatistics) -> Option<f64> {
    if users.is_empty() {
        return None;
    }
    Some(users.iter().map(|&k| channel_quality(n, k, stats)).sum::<f64>() / users.len() as f64)
}

/// Collective qualities `(q̃^p, q̃^c)` of BS `n` towards group `g`: the mean
/// dB quality over the group members and over the decoders of its common.
pub fn collective_quality(
    n: usize,
    group: &MulticastGroup,
    receiver: &ReceiverStructure,
    stats: &ChannelStatistics,
) -> Result<(f64, f64)> {
    let p = mean_quality(n, &group.members, stats)
        .ok_or_else(|| Error::EmptySet(format!("members of group {}", group.id)))?;
    let c = mean_quality(n, receiver.decoders(group.id), stats)
        .ok_or_else(|| Error::EmptySet(format!("decoders of common {}", group.id)))?;
    Ok((p, c))
}

/// BSs within `mu_db` of the best collective quality.
pub fn threshold_set(quality: &[f64], mu_db: f64) -> Vec<usize> {
    let best = quality.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..quality.len()).filter(|&n| best - quality[n] <= mu_db).collect()
}

/// Candidate clusters `N_g^p` for the private streams only.
pub fn private_candidates(groups: &[MulticastGroup], stats: &ChannelStatistics, mu_db: f64) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|g| {
            let q: Vec<f64> = (0..stats.n_bs())
                .map(|n| mean_quality(n, &g.members, stats).unwrap_or(f64::NEG_INFINITY))
                .collect();
            threshold_set(&q, mu_db)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub private: Vec<Vec<usize>>,
    pub common: Vec<Vec<usize>>,
    /// Collective qualities indexed `[g][n]`.
    pub q_private: Vec<Vec<f64>>,
    pub q_common: Vec<Vec<f64>>,
}

impl Candidates {
    fn quality(&self, kind: StreamKind) -> &[Vec<f64>] {
        match kind {
            StreamKind::Private => &self.q_private,
            StreamKind::Common => &self.q_common,
        }
    }
}

/// Candidate clusters `N_g^p`, `N_g^c`. A group whose common stream has no
/// decoders gets an empty common candidate set.
pub fn candidate_clusters(
    groups: &[MulticastGroup],
    receiver: &ReceiverStructure,
    stats: &ChannelStatistics,
    mu_db: f64,
) -> Result<Candidates> {
    if !(mu_db >= 0.0) {
        return Err(Error::Domain("clustering threshold must be >= 0".into()));
    }
    let n_bs = stats.n_bs();
    let mut out = Candidates {
        private: Vec::new(),
        common: Vec::new(),
        q_private: Vec::new(),
        q_common: Vec::new(),
    };
    for g in groups {
        let qp: Vec<f64> = (0..n_bs)
            .map(|n| mean_quality(n, &g.members, stats))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::EmptySet(format!("members of group {}", g.id)))?;
        let decoders: &[usize] = if g.id < receiver.n_commons() {
            receiver.decoders(g.id)
        } else {
            &[]
        };
        let qc: Vec<f64> = (0..n_bs)
            .map(|n| mean_quality(n, decoders, stats).unwrap_or(f64::NEG_INFINITY))
            .collect();
        out.private.push(threshold_set(&qp, mu_db));
        out.common.push(if decoders.is_empty() {
            Vec::new()
        } else {
            threshold_set(&qc, mu_db)
        });
        out.q_private.push(qp);
        out.q_common.push(qc);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// `𝒢_n^p` per BS, ascending group ids.
    pub g_n_p: Vec<Vec<usize>>,
    /// `𝒢_n^c` per BS.
    pub g_n_c: Vec<Vec<usize>>,
    /// `N_g^p` per group, ascending BS ids.
    pub n_g_p: Vec<Vec<usize>>,
    /// `N_g^c` per group.
    pub n_g_c: Vec<Vec<usize>>,
    /// Streams left without any serving BS.
    pub dropped_streams: Vec<(usize, StreamKind)>,
    /// Number of BS-to-stream assignments made while running.
    pub steps: usize,
}

impl ClusterAssignment {
    /// Assignment where every listed stream is served by every BS.
    pub fn everywhere(n_bs: usize, n_groups: usize, with_commons: bool) -> Self {
        let all: Vec<usize> = (0..n_bs).collect();
        let groups: Vec<usize> = (0..n_groups).collect();
        Self {
            g_n_p: vec![groups.clone(); n_bs],
            g_n_c: vec![if with_commons { groups } else { Vec::new() }; n_bs],
            n_g_p: vec![all.clone(); n_groups],
            n_g_c: vec![if with_commons { all } else { Vec::new() }; n_groups],
            dropped_streams: Vec::new(),
            steps: 0,
        }
    }

    pub fn n_bs(&self) -> usize {
        self.g_n_p.len()
    }

    pub fn load(&self, n: usize) -> usize {
        self.g_n_p[n].len() + self.g_n_c[n].len()
    }

    pub fn serves(&self, n: usize, g: usize, kind: StreamKind) -> bool {
        match kind {
            StreamKind::Private => self.g_n_p[n].contains(&g),
            StreamKind::Common => self.g_n_c[n].contains(&g),
        }
    }

    pub fn private_dropped(&self) -> bool {
        self.dropped_streams.iter().any(|(_, k)| *k == StreamKind::Private)
    }

    /// Lists load-cap and inverse-map violations.
    pub fn violations(&self, a_max: usize) -> Vec<String> {
        let mut out = Vec::new();
        for n in 0..self.n_bs() {
            if self.load(n) > a_max {
                out.push(format!("BS {n} serves {} streams > {a_max}", self.load(n)));
            }
        }
        let pairs = [(&self.g_n_p, &self.n_g_p, "p"), (&self.g_n_c, &self.n_g_c, "c")];
        for (by_bs, by_group, tag) in pairs {
            for (n, gs) in by_bs.iter().enumerate() {
                for &g in gs {
                    if !by_group.get(g).is_some_and(|ns| ns.contains(&n)) {
                        out.push(format!("{tag}: g={g} in G_{n} but n not in N_{g}"));
                    }
                }
            }
            for (g, ns) in by_group.iter().enumerate() {
                for &n in ns {
                    if !by_bs[n].contains(&g) {
                        out.push(format!("{tag}: n={n} in N_{g} but g not in G_{n}"));
                    }
                }
            }
        }
        out
    }

    /// Per-BS lines `n: p=[..] c=[..]` for run logs.
    pub fn log_lines(&self) -> Vec<String> {
        let fmt = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        (0..self.n_bs())
            .map(|n| format!("{n}: p=[{}] c=[{}]", fmt(&self.g_n_p[n]), fmt(&self.g_n_c[n])))
            .collect()
    }
}

/// Runs the group-based clustering loop: every round hands each live stream
/// its strongest remaining candidate BS, then trims overloaded BSs back to
/// `a_max` by dropping their weakest streams and retires them.
pub fn run_clustering(candidates: &Candidates, n_bs: usize, a_max: usize) -> ClusterAssignment {
    let n_groups = candidates.private.len();
    let mut remaining = [candidates.private.clone(), candidates.common.clone()];
    let kinds = [StreamKind::Private, StreamKind::Common];
    let slot = |kind: StreamKind| match kind {
        StreamKind::Private => 0,
        StreamKind::Common => 1,
    };

    let mut serving: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); n_bs], vec![Vec::new(); n_bs]];
    let mut live: Vec<(usize, StreamKind)> = (0..n_groups)
        .flat_map(|g| kinds.into_iter().map(move |o| (g, o)))
        .collect();
    let mut bs_live = vec![true; n_bs];
    let mut steps = 0;

    while !live.is_empty() && bs_live.iter().any(|&b| b) {
        let mut next = Vec::with_capacity(live.len());
        for (g, o) in live {
            let cand = &mut remaining[slot(o)][g];
            if cand.is_empty() {
                continue;
            }
            let q = &candidates.quality(o)[g];
            let (pos, &n) = cand
                .iter()
                .enumerate()
                .max_by(|a, b| q[*a.1].total_cmp(&q[*b.1]).then(b.1.cmp(a.1)))
                .expect("nonempty");
            cand.remove(pos);
            serving[slot(o)][n].push(g);
            steps += 1;
            next.push((g, o));
        }
        live = next;

        for n in 0..n_bs {
            if !bs_live[n] {
                continue;
            }
            let load = serving[0][n].len() + serving[1][n].len();
            if load <= a_max {
                continue;
            }
            let mut assigned: Vec<(usize, StreamKind, f64)> = kinds
                .iter()
                .flat_map(|&o| serving[slot(o)][n].iter().map(move |&g| (g, o)))
                .map(|(g, o)| (g, o, candidates.quality(o)[g][n]))
                .collect();
            // weakest first; ties drop the higher group id, then the common
            assigned.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)).then(b.1.cmp(&a.1)));
            for &(g, o, _) in &assigned[..load - a_max] {
                serving[slot(o)][n].retain(|&x| x != g);
            }
            bs_live[n] = false;
            for sets in remaining.iter_mut() {
                for cand in sets.iter_mut() {
                    cand.retain(|&m| m != n);
                }
            }
        }
    }

    let [mut g_n_p, mut g_n_c] = serving;
    for v in g_n_p.iter_mut().chain(g_n_c.iter_mut()) {
        v.sort_unstable();
    }
    let invert = |by_bs: &[Vec<usize>]| {
        let mut by_group = vec![Vec::new(); n_groups];
        for (n, gs) in by_bs.iter().enumerate() {
            for &g in gs {
                by_group[g].push(n);
            }
        }
        by_group
    };
    let n_g_p = invert(&g_n_p);
    let n_g_c = invert(&g_n_c);
    let mut dropped = Vec::new();
    for g in 0..n_groups {
        if n_g_p[g].is_empty() {
            dropped.push((g, StreamKind::Private));
        }
        if n_g_c[g].is_empty() {
            dropped.push((g, StreamKind::Common));
        }
    }
    ClusterAssignment {
        g_n_p,
        g_n_c,
        n_g_p,
        n_g_c,
        dropped_streams: dropped,
        steps,
    }
}

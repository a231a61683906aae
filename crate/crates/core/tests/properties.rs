use proptest::prelude::*;

use cran_rsma::channel::{path_loss_db, ChannelStatistics};
use cran_rsma::clustering::{candidate_clusters, run_clustering, threshold_set};
use cran_rsma::grouping::{build_receiver_structure, form_groups, zipf_popularity};
use cran_rsma::clustering::private_candidates;
use cran_rsma::harness::summarize;
use cran_rsma::rng::{self, Purpose};
use cran_rsma::scenario::{place_cache, CachePolicy, GroupMode, ScenarioConfig, Scheme};
use cran_rsma::solver::{build_network, initialize, prepare};
use cran_rsma::wmmse::water_level;

fn small_config() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..=4, 1usize..=8, 1usize..=3, 1usize..=5, 1usize..=8, any::<u64>()).prop_map(
        |(n_bs, n_users, l, n_files, a_max, seed)| ScenarioConfig {
            n_bs,
            n_users,
            n_antennas: l,
            n_files,
            cache_size_files: n_files / 2,
            a_max_streams: a_max,
            m_samples: 2,
            rng_seed: seed,
            ..ScenarioConfig::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn water_level_spends_budget(base in prop::collection::vec(0.0f64..10.0, 1..6), budget in 0.0f64..20.0) {
        let t = water_level(&base, budget);
        let spent: f64 = base.iter().map(|b| (t - b).max(0.0)).sum();
        prop_assert!((spent - budget).abs() < 1e-9 * (1.0 + budget));
        prop_assert!(t >= base.iter().copied().fold(f64::INFINITY, f64::min) - 1e-12);
    }

    #[test]
    fn threshold_contains_argmax(q in prop::collection::vec(-150.0f64..-50.0, 1..8), mu in 0.0f64..20.0) {
        let set = threshold_set(&q, mu);
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(set.iter().any(|&n| q[n] == best));
        for n in 0..q.len() {
            prop_assert_eq!(set.contains(&n), best - q[n] <= mu);
        }
    }

    #[test]
    fn clustering_respects_caps(
        n_bs in 1usize..5,
        requests in prop::collection::vec(0usize..4, 1..9),
        gains_db in prop::collection::vec(-140.0f64..-60.0, 40),
        a_max in 1usize..6,
        mu in 0.0f64..30.0,
    ) {
        let k = requests.len();
        let gains = (0..n_bs * k).map(|i| 10f64.powf(gains_db[i % gains_db.len()] / 20.0)).collect();
        let stats = ChannelStatistics::from_gains(n_bs, k, 2, gains).unwrap();
        let groups = form_groups(&requests, GroupMode::GLeK);
        let hint = private_candidates(&groups, &stats, mu);
        let rx = build_receiver_structure(&groups, &stats, &hint, 2).unwrap();
        prop_assert!(rx.violations(true).is_empty());
        let cand = candidate_clusters(&groups, &rx, &stats, mu).unwrap();
        let a = run_clustering(&cand, n_bs, a_max);
        prop_assert!(a.violations(a_max).is_empty(), "{:?}", a.violations(a_max));
        prop_assert!(a.steps <= 2 * groups.len() * n_bs);
        prop_assert_eq!(a.clone(), run_clustering(&cand, n_bs, a_max));
        for (g, ns) in a.n_g_p.iter().enumerate() {
            prop_assert_eq!(ns.is_empty(), a.dropped_streams.contains(&(g, cran_rsma::clustering::StreamKind::Private)));
        }
    }

    #[test]
    fn initialization_is_feasible(cfg in small_config()) {
        let inst = prepare(&cfg).unwrap();
        for scheme in Scheme::ALL {
            let net = build_network(&inst, scheme).unwrap();
            let w = initialize(&net, &mut rng::stream(cfg.rng_seed, Purpose::Init));
            prop_assert!(w.respects_masks(&net));
            for n in 0..net.n_bs {
                prop_assert!(w.bs_power(n) <= 0.9 * net.p_max_w[n] * (1.0 + 1e-12));
            }
            if scheme == Scheme::Tin {
                prop_assert!(w.common.is_empty());
            }
        }
    }

    #[test]
    fn preparation_is_deterministic(cfg in small_config()) {
        let a = prepare(&cfg).unwrap();
        let b = prepare(&cfg).unwrap();
        prop_assert_eq!(&a.clusters, &b.clusters);
        prop_assert_eq!(&a.groups, &b.groups);
        prop_assert_eq!(a.samples.channel(0, 0), b.samples.channel(0, 0));
    }

    #[test]
    fn popularity_is_a_distribution(n in 1usize..100, gamma in 0.0f64..3.0) {
        let p = zipf_popularity(n, gamma);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cache_fills_exactly(n_files in 1usize..30, n_bs in 1usize..6, frac in 0.0f64..=1.0, seed: u64, random: bool) {
        let size = (frac * n_files as f64) as usize;
        let policy = if random { CachePolicy::UniformRandom } else { CachePolicy::MostPopular };
        let p = place_cache(&zipf_popularity(n_files, 1.0), policy, n_bs, size, &mut rng::stream(seed, Purpose::Cache)).unwrap();
        for n in 0..n_bs {
            prop_assert_eq!(p.column_sum(n), size);
        }
    }

    #[test]
    fn path_loss_increases(d in 0.001f64..2.0, factor in 1.01f64..10.0) {
        prop_assert!(path_loss_db(d * factor).unwrap() > path_loss_db(d).unwrap());
    }

    #[test]
    fn summary_of_constant_column(x in 0.0f64..1e9, n in 1usize..8) {
        let mut csv = String::from("param_value,scheme,mmf_rate_bps\n");
        for _ in 0..n {
            csv.push_str(&format!("1,tin,{x}\n"));
        }
        let rows = summarize(csv.as_bytes()).unwrap();
        prop_assert_eq!(rows.len(), 1);
        prop_assert!((rows[0].mean - x).abs() <= 1e-9 * x.max(1.0));
        prop_assert_eq!(rows[0].ci95.is_none(), n == 1);
    }
}

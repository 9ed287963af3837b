use std::sync::Arc;

use proptest::prelude::*;
use rwdre::analysis::{classify_positions, classify_until, run_replicas, ReplicaClass, ReplicaPlan};
use rwdre::config::preset;
use rwdre::env::{EnvironmentTrajectory, RatePair, TrackBuilder, Window};
use rwdre::graphical::{check_monotone_coupling, evolve_coupled, evolve_walk, sample_arrow_field, Arrow, ArrowField, Direction};
use rwdre::models::{sample_iid_sites, sample_ssep, ssep_snapshots, ChainSpec, ModelSpec, SsepModelSpec};
use rwdre::path::{WalkLimits, WalkPath, WalkStatus};
use rwdre::walk::{hitting_time, return_times, shifted_hitting, simulate_quenched, HitTime, SiteSet};

fn rate() -> impl Strategy<Value = RatePair> {
    (0u8..4, 0u8..4).prop_map(|(a, b)| RatePair::new(a as f64 * 0.5, b as f64 * 0.5))
}

fn chain() -> ChainSpec {
    ChainSpec::two_state(1.0, 2.0, [2.0, 1.0], [1.0, 2.0])
}

fn path_strategy() -> impl Strategy<Value = WalkPath> {
    (-3i64..3, prop::collection::vec((0.01f64..1.0, any::<bool>()), 0..40)).prop_map(|(start, steps)| {
        let mut t = 0.0;
        let mut x = start;
        let jumps: Vec<(f64, i64)> = steps
            .into_iter()
            .map(|(dt, right)| {
                t += dt;
                x += if right { 1 } else { -1 };
                (t, x)
            })
            .collect();
        WalkPath::from_jumps(start, &jumps, t + 1.0, WalkStatus::Completed).unwrap()
    })
}

fn site_set() -> impl Strategy<Value = SiteSet> {
    prop_oneof![
        prop::collection::vec(-4i64..5, 1..3).prop_map(SiteSet::Points),
        (-4i64..2, 0i64..3).prop_map(|(lo, w)| SiteSet::Interval(lo, lo + w)),
        (-4i64..2, 0i64..3).prop_map(|(lo, w)| SiteSet::Outside(lo, lo + w)),
    ]
}

fn random_field(seed: u64, half: i64, horizon: f64) -> ArrowField {
    let env = sample_iid_sites(&chain(), Window::centered(half, horizon).unwrap(), seed).unwrap();
    sample_arrow_field(Arc::new(env), seed ^ 0x5eed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tracks_tile_the_window(initial in rate(), changes in prop::collection::vec((0.01f64..1.0, rate()), 0..20)) {
        let mut b = TrackBuilder::new(0, initial);
        let mut t = 0.0;
        for (dt, r) in changes {
            t += dt;
            b.push(t, r);
        }
        let horizon = t + 1.0;
        let track = b.finish(horizon);
        let segs: Vec<_> = track.segments().collect();
        prop_assert_eq!(segs[0].t_start, 0.0);
        prop_assert_eq!(segs.last().unwrap().t_end, horizon);
        for w in segs.windows(2) {
            prop_assert_eq!(w[0].t_end, w[1].t_start);
            prop_assert!(w[0].rates() != w[1].rates());
        }
        let total: f64 = segs.iter().map(|s| s.len()).sum();
        prop_assert!((total - horizon).abs() < 1e-9 * horizon);
    }

    #[test]
    fn chain_environment_is_seed_deterministic(seed in any::<u64>()) {
        let w = Window::centered(3, 5.0).unwrap();
        let a = sample_iid_sites(&chain(), w, seed).unwrap();
        let b = sample_iid_sites(&chain(), w, seed).unwrap();
        prop_assert!(a.same_field(&b));
        prop_assert_eq!(a.to_text().unwrap(), b.to_text().unwrap());
    }

    #[test]
    fn environment_translations_compose(seed in any::<u64>(), z1 in -2i64..3, z2 in -2i64..3, s1 in 0u8..8, s2 in 0u8..8, probes in prop::collection::vec((-2i64..3, 0.0f64..1.0), 20)) {
        let env = sample_iid_sites(&chain(), Window::centered(8, 10.0).unwrap(), seed).unwrap();
        let (s1, s2) = (s1 as f64 * 0.25, s2 as f64 * 0.25);
        let target = Window::new(-2, 2, 5.0).unwrap();
        let inner = Window::new(-4, 4, 7.5).unwrap();
        let two = env.translate_into(z1, s1, inner).unwrap().translate_into(z2, s2, target).unwrap();
        let one = env.translate_into(z1 + z2, s1 + s2, target).unwrap();
        for (x, u) in probes {
            let t = u * 5.0;
            let near_change = env
                .rate_change_times(x + z1 + z2, 0.0, 10.0)
                .unwrap()
                .iter()
                .any(|&c| (c - (t + s1 + s2)).abs() < 1e-9);
            if !near_change {
                prop_assert_eq!(two.rates_at(x, t).unwrap(), one.rates_at(x, t).unwrap());
                prop_assert_eq!(one.rates_at(x, t).unwrap(), env.rates_at(x + z1 + z2, t + s1 + s2).unwrap());
            }
        }
    }

    #[test]
    fn ssep_rates_and_particles(seed in any::<u64>()) {
        let spec = SsepModelSpec::new(2.0, 1.0, 0.4, 6);
        let env = sample_ssep(&spec, 5.0, seed).unwrap();
        let window = env.window();
        let count = |t: f64| window.sites().filter(|&x| env.latent_at(x, t).unwrap() == Some(1)).count();
        let n0 = count(0.0);
        for k in 1..20 {
            prop_assert_eq!(count(k as f64 * 0.25), n0);
        }
        for x in window.sites() {
            for seg in env.track(x).unwrap().segments() {
                let r = seg.rates();
                prop_assert!(r == RatePair::new(2.0, 1.0) || r == RatePair::new(1.0, 2.0));
            }
        }
    }

    #[test]
    fn ssep_snapshots_match_recorded_history(seed in any::<u64>()) {
        let spec = SsepModelSpec::new(2.0, 1.0, 0.5, 5);
        let env = sample_ssep(&spec, 4.0, seed).unwrap();
        let times = [0.0, 1.0, 2.5, 3.999];
        let snaps = ssep_snapshots(&spec, &times, seed).unwrap();
        for (t, snap) in times.iter().zip(&snaps) {
            let recorded: Vec<bool> = env.window().sites().map(|x| env.latent_at(x, *t).unwrap() == Some(1)).collect();
            prop_assert_eq!(&recorded, snap);
        }
    }

    #[test]
    fn arrow_translations_compose(seed in any::<u64>(), z in -2i64..3, s in 0u8..8) {
        let field = random_field(seed, 8, 10.0);
        let s = s as f64 * 0.25;
        let target = Window::new(-2, 2, 4.0).unwrap();
        let inner = Window::new(-5, 5, 8.0).unwrap();
        let two = field.translate_into(z, s, inner).unwrap().translate_into(z, s, target).unwrap();
        let one = field.translate_into(2 * z, 2.0 * s, target).unwrap();
        for x in target.sites() {
            let a: Vec<(i64, f64)> = two.arrows_at(x).unwrap().iter().map(|a| (a.site, a.time)).collect();
            let b: Vec<(i64, f64)> = one.arrows_at(x).unwrap().iter().map(|a| (a.site, a.time)).collect();
            prop_assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(&b) {
                prop_assert_eq!(p.0, q.0);
                prop_assert!((p.1 - q.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulated_paths_are_nearest_neighbour(seed in any::<u64>()) {
        let env = sample_iid_sites(&chain(), Window::centered(60, 10.0).unwrap(), seed).unwrap();
        let limits = WalkLimits::new(10.0);
        let q = simulate_quenched(&env, 0, &limits, seed).unwrap();
        let g = evolve_walk(&sample_arrow_field(Arc::new(env), seed), 0, &limits).unwrap();
        for p in [q, g] {
            prop_assert!(p.positions().windows(2).all(|w| (w[0] - w[1]).abs() == 1));
            prop_assert!(p.times().windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(p.times()[0], 0.0);
            prop_assert!(*p.times().last().unwrap() < 10.0);
        }
    }

    #[test]
    fn coupled_walks_stay_ordered_and_coalesce_permanently(seed in any::<u64>(), gaps in prop::collection::vec(1i64..4, 1..5)) {
        let field = random_field(seed, 40, 8.0);
        let mut starts = vec![-6i64];
        for g in gaps {
            let next = starts.last().unwrap() + g;
            starts.push(next);
        }
        let limits = WalkLimits::new(8.0);
        let ens = evolve_coupled(&field, &starts, &limits).unwrap();
        prop_assert_eq!(ens.ordering_violations(), 0);
        let singles: Vec<WalkPath> = starts.iter().map(|&x| evolve_walk(&field, x, &limits).unwrap()).collect();
        let check = check_monotone_coupling(&singles);
        prop_assert!(check.passed(), "{:?}", check);
        for p in &singles {
            let q = ens.path(p.start()).unwrap();
            prop_assert_eq!(q.positions(), p.positions());
            prop_assert_eq!(q.times(), p.times());
        }
    }

    #[test]
    fn shifted_hitting_equals_rerooted_hitting(path in path_strategy(), target in site_set(), k in 0usize..40) {
        let k = k.min(path.times().len() - 1);
        let s = path.times()[k];
        let xs = path.positions()[k];
        let rerooted = path.reroot(s).unwrap();
        prop_assert_eq!(shifted_hitting(&path, HitTime::Finite(s), &target), hitting_time(&rerooted, &target.shifted(xs)));
        prop_assert_eq!(shifted_hitting(&path, HitTime::Finite(0.0), &target), hitting_time(&path, &target));
        prop_assert_eq!(shifted_hitting(&path, HitTime::Infinite, &target), HitTime::Infinite);
    }

    #[test]
    fn return_times_are_monotone(path in path_strategy(), target in site_set()) {
        let rec = return_times(&path, &target, 5).unwrap();
        let mut seen_unobserved = false;
        let mut last = 0.0;
        for r in &rec.returns {
            match *r {
                HitTime::Finite(t) => {
                    prop_assert!(!seen_unobserved);
                    prop_assert!(t > last);
                    last = t;
                }
                _ => seen_unobserved = true,
            }
        }
        if !target.contains(path.start()) {
            prop_assert_eq!(rec.returns[0], rec.h_time);
        }
        prop_assert_eq!(rec.returns[0], hitting_time(&path, &target));
    }

    #[test]
    fn recurrent_class_is_never_revoked(path in path_strategy(), level in 1i64..3, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let h = path.horizon();
        let (t1, t2) = if a < b { (a * h, b * h) } else { (b * h, a * h) };
        if classify_until(&path, level, t1) == ReplicaClass::Recurrent {
            prop_assert_eq!(classify_until(&path, level, t2), ReplicaClass::Recurrent);
        }
        let full = classify_positions(path.positions(), level);
        prop_assert_eq!(classify_until(&path, level, h), full);
    }

    #[test]
    fn mirrored_paths_swap_transient_classes(path in path_strategy(), level in 1i64..3) {
        let c = classify_positions(path.positions(), level);
        let m = classify_positions(path.mirrored().positions(), level);
        let expected = match c {
            ReplicaClass::Right => ReplicaClass::Left,
            ReplicaClass::Left => ReplicaClass::Right,
            other => other,
        };
        prop_assert_eq!(m, expected);
    }

    #[test]
    fn path_text_round_trip(path in path_strategy()) {
        let back = WalkPath::read_text(path.to_text().as_bytes()).unwrap();
        prop_assert_eq!(back, path);
    }

    #[test]
    fn arrow_text_round_trip(seed in any::<u64>()) {
        let field = random_field(seed, 3, 4.0);
        let back = ArrowField::read_text(field.to_text().unwrap().as_bytes()).unwrap();
        prop_assert!(back.same_arrows(&field));
    }
}

#[test]
fn replica_results_do_not_depend_on_thread_count() {
    let plan = ReplicaPlan::new(preset("chain-2state").unwrap().model, 30.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_replicas(64, 5, |s| Ok(plan.run(s)?.to_text())).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn environment_text_is_reproducible() {
    let model = preset("ssep-biased").unwrap().model;
    let ModelSpec::Ssep(mut spec) = model else { panic!("ssep preset") };
    spec.half_width = 10;
    let a = sample_ssep(&spec, 3.0, 9).unwrap().to_text().unwrap();
    let b = sample_ssep(&spec, 3.0, 9).unwrap().to_text().unwrap();
    assert_eq!(a, b);
    let back = EnvironmentTrajectory::read_text(a.as_bytes()).unwrap();
    assert_eq!(back.to_text().unwrap(), a);
}

#[test]
fn single_arrow_moves_walk_once() {
    let field = ArrowField::from_arrows(
        Window::centered(3, 5.0).unwrap(),
        [Arrow { site: 1, time: 1.0, direction: Direction::Right }],
    )
    .unwrap();
    let p = evolve_walk(&field, 1, &WalkLimits::new(5.0)).unwrap();
    assert_eq!(p.positions(), &[1, 2]);
    assert_eq!(p.times(), &[0.0, 1.0]);
}

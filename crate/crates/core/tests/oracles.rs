//! Statistical checks against values computed independently in this file.

use std::sync::Arc;

use rwdre::analysis::{
    classify_series, classify_trichotomy, exit_time_survey, run_replicas, spatial_ergodic_average,
    symmetry_recurrence_test, ReplicaPlan, Simulator, SpatialEvent, Verdict,
};
use rwdre::config::preset;
use rwdre::env::Window;
use rwdre::graphical::{sample_arrow_field, Direction};
use rwdre::models::{
    sample_iid_sites, sample_ssep, stationary_distribution, ChainSpec, ConstantModelSpec, ModelSpec, SsepModelSpec,
};
use rwdre::path::{WalkLimits, WalkStatus};
use rwdre::stats::{chi_square_gof, ks_two_sample};
use rwdre::walk::simulate_quenched;

fn constant(p: f64, q: f64) -> ModelSpec {
    ModelSpec::Constant(ConstantModelSpec { p, q })
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Birth rates 1, 2, 3 upwards and death rates 3, 2, 1 downwards.
fn birth_death() -> ChainSpec {
    let up = [1.0, 2.0, 3.0];
    let down = [3.0, 2.0, 1.0];
    let mut generator = vec![vec![0.0; 4]; 4];
    for i in 0..3 {
        generator[i][i + 1] = up[i];
        generator[i + 1][i] = down[i];
    }
    for (i, row) in generator.iter_mut().enumerate() {
        row[i] = -row.iter().sum::<f64>();
    }
    ChainSpec {
        states: (0..4).map(|i| i.to_string()).collect(),
        generator,
        alpha_plus: vec![0.5, 1.0, 1.5, 2.0],
        alpha_minus: vec![2.0, 1.5, 1.0, 0.5],
    }
}

fn birth_death_law() -> Vec<f64> {
    // Detailed balance: pi(k+1) / pi(k) = up(k) / down(k).
    let up = [1.0, 2.0, 3.0];
    let down = [3.0, 2.0, 1.0];
    let ratios = up.iter().zip(down).map(|(u, d)| u / d);
    let mut raw = vec![1.0];
    for r in ratios {
        raw.push(raw.last().unwrap() * r);
    }
    let z: f64 = raw.iter().sum();
    raw.iter().map(|r| r / z).collect()
}

#[test]
fn birth_death_law_matches_detailed_balance() {
    let pi = stationary_distribution(&birth_death()).unwrap();
    for (a, b) in pi.weights.iter().zip(birth_death_law()) {
        assert!((a - b).abs() < 1e-12, "{:?}", pi.weights);
    }
}

#[test]
fn long_run_occupation_matches_invariant_law() {
    let horizon = 7.0e5;
    let env = sample_iid_sites(&birth_death(), Window::new(0, 0, horizon).unwrap(), 11).unwrap();
    let latent = env.track(0).unwrap().latent().unwrap();
    assert!(latent.changes().count() > 1_000_000);
    for (k, w) in birth_death_law().into_iter().enumerate() {
        let frac = latent.occupation_time(k as u32, horizon) / horizon;
        assert!((frac - w).abs() < 0.01, "state {k}: {frac} vs {w}");
    }
}

#[test]
fn initial_states_follow_invariant_law() {
    let env = sample_iid_sites(&birth_death(), Window::centered(50_000, 1.0).unwrap(), 3).unwrap();
    let mut counts = [0u64; 4];
    for x in env.window().sites() {
        counts[env.latent_at(x, 0.0).unwrap().unwrap() as usize] += 1;
    }
    let n: u64 = counts.iter().sum();
    let expected: Vec<f64> = birth_death_law().iter().map(|w| w * n as f64).collect();
    let r = chi_square_gof(&counts, &expected, 0).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}");
}

#[test]
fn neighbouring_sites_are_uncorrelated() {
    let env = sample_iid_sites(&birth_death(), Window::centered(10_000, 10.0).unwrap(), 5).unwrap();
    let counts: Vec<f64> = env
        .window()
        .sites()
        .map(|x| env.track(x).unwrap().latent().unwrap().changes().count() as f64)
        .collect();
    let r = correlation(&counts[..counts.len() - 1], &counts[1..]);
    assert!(r.abs() < 4.0 / (counts.len() as f64).sqrt(), "r = {r}");
}

#[test]
fn exclusion_density_is_stationary() {
    let spec = SsepModelSpec::new(2.0, 1.0, 0.5, 500);
    let env = sample_ssep(&spec, 50.0, 21).unwrap();
    let n = env.window().site_count() as f64;
    for t in [0.0, 10.0, 49.0] {
        let occ = env.window().sites().filter(|&x| env.latent_at(x, t).unwrap() == Some(1)).count() as f64;
        let z = (occ - 0.5 * n) / (0.25 * n).sqrt();
        assert!(z.abs() < 4.0, "t = {t}: {occ} of {n}");
    }
    let x = 0;
    let occupied_time = env.track(x).unwrap().latent().unwrap().occupation_time(1, 50.0);
    assert!(occupied_time > 0.0 && occupied_time < 50.0);
}

#[test]
fn exclusion_rates_integrate_from_occupation() {
    let spec = SsepModelSpec::new(2.0, 1.0, 0.3, 40);
    let horizon = 30.0;
    let env = sample_ssep(&spec, horizon, 8).unwrap();
    for x in env.window().sites() {
        let track = env.track(x).unwrap();
        let occ = track.latent().unwrap().occupation_time(1, horizon);
        let vac = horizon - occ;
        let got = track.integrated_rates(0.0, horizon);
        assert!((got.plus - (2.0 * occ + 1.0 * vac)).abs() < 1e-9);
        assert!((got.minus - (1.0 * occ + 2.0 * vac)).abs() < 1e-9);
    }
}

fn arrow_count_z(env: rwdre::env::EnvironmentTrajectory, seed: u64) -> (f64, f64) {
    let horizon = env.window().horizon;
    let sites: Vec<i64> = env.window().sites().collect();
    let env = Arc::new(env);
    let field = sample_arrow_field(env.clone(), seed);
    let (mut right, mut left, mut mean_right, mut mean_left) = (0.0, 0.0, 0.0, 0.0);
    for x in sites {
        let arrows = field.site(x).unwrap();
        right += arrows.count(Direction::Right, 0.0, horizon) as f64;
        left += arrows.count(Direction::Left, 0.0, horizon) as f64;
        let m = env.track(x).unwrap().integrated_rates(0.0, horizon);
        mean_right += m.plus;
        mean_left += m.minus;
    }
    ((right - mean_right) / mean_right.sqrt(), (left - mean_left) / mean_left.sqrt())
}

#[test]
fn arrow_counts_match_integrated_rates() {
    let chain = sample_iid_sites(&birth_death(), Window::centered(200, 20.0).unwrap(), 4).unwrap();
    let (zr, zl) = arrow_count_z(chain, 9);
    assert!(zr.abs() < 4.0 && zl.abs() < 4.0, "chain: {zr} {zl}");
    let ssep = sample_ssep(&SsepModelSpec::new(2.0, 1.0, 0.7, 100), 20.0, 4).unwrap();
    let (zr, zl) = arrow_count_z(ssep, 9);
    assert!(zr.abs() < 4.0 && zl.abs() < 4.0, "ssep: {zr} {zl}");
}

fn finals(plan: &ReplicaPlan, replicas: usize, seed: u64) -> Vec<f64> {
    run_replicas(replicas, seed, |s| {
        let p = plan.run(s)?;
        Ok((p.status() == WalkStatus::Completed).then(|| p.final_position() as f64))
    })
    .unwrap()
    .into_iter()
    .flatten()
    .collect()
}

#[test]
fn simulators_agree_in_law() {
    let chain = ModelSpec::IidChain(birth_death());
    let ssep = ModelSpec::Ssep(SsepModelSpec::new(2.0, 1.0, 0.5, 40));
    for model in [chain, ssep.clone()] {
        let base = ReplicaPlan::new(model.clone(), 15.0);
        let q = finals(&base.clone().with_simulator(Simulator::Quenched), 3000, 1);
        let g = finals(&base.clone().with_simulator(Simulator::Graphical), 3000, 2);
        let r = ks_two_sample(&q, &g).unwrap();
        assert!(r.p_value > 1e-3, "{} graphical: {r:?}", model.kind());
    }
    let base = ReplicaPlan::new(ssep, 15.0);
    let q = finals(&base.clone().with_simulator(Simulator::Quenched), 3000, 3);
    let j = finals(&base.with_simulator(Simulator::Joint), 3000, 4);
    let r = ks_two_sample(&q, &j).unwrap();
    assert!(r.p_value > 1e-3, "ssep joint: {r:?}");
}

#[test]
fn constant_walk_restarts_afresh() {
    let env = rwdre::models::sample_constant(&ConstantModelSpec { p: 2.0, q: 1.0 }, Window::centered(200, 20.0).unwrap())
        .unwrap();
    let pairs = run_replicas(4000, 13, |s| {
        let p = simulate_quenched(&env, 0, &WalkLimits::new(20.0), s.seed())?;
        let mid = p.position_at(10.0).unwrap();
        Ok((mid as f64, (p.final_position() - mid) as f64))
    })
    .unwrap();
    let (first, second): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let r = ks_two_sample(&first, &second).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}");
    let c = correlation(&first, &second);
    assert!(c.abs() < 4.0 / (first.len() as f64).sqrt(), "r = {c}");
}

#[test]
fn unclassified_fraction_shrinks_with_time() {
    let config = preset("chain-2state").unwrap();
    let plan = config.plan();
    let series = classify_series(&plan, 20, &[50.0, 100.0, 200.0], 1000, 17).unwrap();
    let u: Vec<f64> = series.iter().map(|e| e.p_unclassified.estimate).collect();
    assert!(u.windows(2).all(|w| w[1] <= w[0]), "{u:?}");
    assert!(u[u.len() - 1] < u[0], "{u:?}");
}

#[test]
fn exit_from_single_site_box_is_exponential() {
    // Every state of the preset chain has total jump rate 3.
    let plan = preset("chain-2state").unwrap().plan();
    let plan = ReplicaPlan { horizon: 2.0, ..plan };
    let checkpoints = [0.1, 0.25, 0.5, 1.0];
    let n = 5000;
    let survey = exit_time_survey(&plan, 0, &checkpoints, n, 19).unwrap();
    for (t, f) in checkpoints.iter().zip(&survey.fraction_exited) {
        let expected = 1.0 - (-3.0 * t).exp();
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((f - expected).abs() < 4.0 * se, "t = {t}: {f} vs {expected}");
    }
}

#[test]
fn leftward_walk_leaves_its_start() {
    let plan = ReplicaPlan::new(constant(1.0, 2.0), 20.0);
    let r = spatial_ergodic_average(&plan, SpatialEvent::NeverLeftOfStart, 400, 400, 20, 23).unwrap();
    assert!(r.spatial.mean < 0.01 && r.annealed.mean < 0.01, "{r:?}");
}

#[test]
fn asymmetric_exclusion_fails_declared_symmetry() {
    let model = ModelSpec::Ssep(SsepModelSpec::new(2.0, 1.0, 0.7, 200));
    let plan = ReplicaPlan::new(model, 200.0).with_simulator(Simulator::Joint);
    assert!(symmetry_recurrence_test(&plan, 1, &[50.0, 100.0], 1000, 29).is_err());
}

#[test]
fn symmetric_constant_walk_is_recurrent() {
    let c = preset("const-symmetric").unwrap();
    let e = classify_trichotomy(&c.plan(), c.run.level, c.run.replicas, 31).unwrap();
    assert_eq!(e.verdict, Verdict::Recurrent, "{e:?}");
}

#[test]
fn leftward_constant_walk_is_left_transient() {
    let plan = ReplicaPlan::new(constant(1.0, 2.0), 200.0);
    let e = classify_trichotomy(&plan, 20, 2000, 37).unwrap();
    assert_eq!(e.verdict, Verdict::TransientLeft, "{e:?}");
}

//! Property suites run by `rwdre validate` and by the acceptance tests.
//!
//! Each suite draws its own replicas from `SeedTree::new(seed)` and returns a
//! [`SuiteReport`]; a failed statistical check is a report with
//! `passed == false`, not an error.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::{compare_simulators, exit_time_survey, run_replicas, ReplicaPlan};
use crate::config::ExperimentConfig;
use crate::env::Window;
use crate::error::Result;
use crate::graphical::{check_monotone_coupling, evolve_coupled, evolve_walk, Arrow, ArrowField, Direction};
use crate::models::{ssep_snapshots, stationary_distribution, ModelSpec};
use crate::rng::SeedTree;
use crate::stats::{chi_square_gof, poisson_gof};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Ordering,
    Coalescence,
    PoissonCounts,
    LawEquality,
    Stationarity,
    ExitSurvey,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Ordering,
        Suite::Coalescence,
        Suite::PoissonCounts,
        Suite::LawEquality,
        Suite::Stationarity,
        Suite::ExitSurvey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Ordering => "ordering",
            Suite::Coalescence => "coalescence",
            Suite::PoissonCounts => "poisson_counts",
            Suite::LawEquality => "law_equality",
            Suite::Stationarity => "stationarity",
            Suite::ExitSurvey => "exit_survey",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    /// Label of the model the suite ran on.
    pub model: String,
    pub passed: bool,
    pub statistics: BTreeMap<String, f64>,
    pub detail: String,
}

impl SuiteReport {
    fn new(suite: Suite, model: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            suite,
            model: model.to_string(),
            passed,
            statistics: BTreeMap::new(),
            detail: detail.into(),
        }
    }

    fn stat(mut self, key: &str, value: f64) -> Self {
        self.statistics.insert(key.to_string(), value);
        self
    }
}

/// Sizes of the suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub coupling_replicas: usize,
    pub coupling_horizon: f64,
    pub coupling_starts: Vec<i64>,
    pub poisson_seeds: usize,
    pub poisson_horizon: f64,
    pub ks_replicas: usize,
    pub ks_horizon: f64,
    pub stationarity_replicas: usize,
    /// Sites inspected per replica by the chain stationarity check.
    pub stationarity_sites: i64,
    pub exit_replicas: usize,
    /// Torus half-width used by the coupling, Poisson and law suites for
    /// exclusion models. These suites only look at a neighbourhood of the
    /// origin over a short horizon, and the exclusion process is stationary
    /// for every torus size.
    pub compact_half_width: i64,
    /// Run the middle start of the coupling suites on a field whose arrow
    /// directions are reversed. Used as a negative control.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            coupling_replicas: 1000,
            coupling_horizon: 50.0,
            coupling_starts: vec![-5, 0, 5],
            poisson_seeds: 10_000,
            poisson_horizon: 10.0,
            ks_replicas: 5000,
            ks_horizon: 50.0,
            stationarity_replicas: 20,
            stationarity_sites: 500,
            exit_replicas: 2000,
            compact_half_width: 100,
            inject_fault: false,
        }
    }
}

fn compact(model: &ModelSpec, half_width: i64) -> ModelSpec {
    match model {
        ModelSpec::Ssep(s) if s.half_width > half_width => {
            let mut s = *s;
            s.half_width = half_width;
            ModelSpec::Ssep(s)
        }
        other => other.clone(),
    }
}

/// Copy of `field` with every arrow direction reversed, materialised over
/// the whole window.
pub fn reversed_arrows(field: &ArrowField) -> Result<ArrowField> {
    let window = field.window();
    let mut arrows = Vec::new();
    for x in window.sites() {
        for a in field.arrows_at(x)? {
            arrows.push(Arrow {
                direction: match a.direction {
                    Direction::Right => Direction::Left,
                    Direction::Left => Direction::Right,
                },
                ..a
            });
        }
    }
    ArrowField::from_arrows(window, arrows)
}

#[derive(Default)]
struct CouplingTally {
    ordering: u64,
    permanence: u64,
    ensemble_ordering: u64,
    mismatched_paths: u64,
    coalesced_replicas: u64,
    pair_events: u64,
}

fn coupling_tally(model: &ModelSpec, opts: &SuiteOptions, seed: u64) -> Result<CouplingTally> {
    let plan = ReplicaPlan::new(compact(model, opts.compact_half_width), opts.coupling_horizon);
    plan.validate()?;
    let starts = &opts.coupling_starts;
    let (lo, hi) = (
        starts.iter().copied().min().unwrap_or(0),
        starts.iter().copied().max().unwrap_or(0),
    );
    let middle = starts.len() / 2;
    let limits = plan.limits();
    let per_replica = run_replicas(opts.coupling_replicas, seed, |seeds| {
        let env = plan.environment_around(lo, hi, seeds)?;
        let field = plan.arrow_field(env, seeds);
        let ensemble = evolve_coupled(&field, starts, &limits)?;
        let faulty = if opts.inject_fault { Some(reversed_arrows(&field)?) } else { None };
        let mut single = Vec::with_capacity(starts.len());
        for (i, &x) in starts.iter().enumerate() {
            let f = match (&faulty, i == middle) {
                (Some(bad), true) => bad,
                _ => &field,
            };
            single.push(evolve_walk(f, x, &limits)?);
        }
        let check = check_monotone_coupling(&single);
        let mismatched = single
            .iter()
            .filter(|p| ensemble.path(p.start()).is_none_or(|q| q.positions() != p.positions() || q.times() != p.times()))
            .count() as u64;
        Ok((check, ensemble.ordering_violations(), mismatched, !ensemble.coalescences().is_empty()))
    })?;
    let mut t = CouplingTally::default();
    for (check, ens, mismatched, coalesced) in per_replica {
        t.ordering += check.ordering_violations;
        t.permanence += check.permanence_violations;
        t.pair_events += check.events;
        t.ensemble_ordering += ens;
        t.mismatched_paths += mismatched;
        t.coalesced_replicas += coalesced as u64;
    }
    Ok(t)
}

/// Walks from several starts, each evolved separately through one arrow
/// field, never cross; the coupled ensemble agrees with them path by path.
pub fn ordering_suite(label: &str, model: &ModelSpec, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    let t = coupling_tally(model, opts, seed)?;
    let passed = t.ordering == 0 && t.ensemble_ordering == 0;
    Ok(SuiteReport::new(
        Suite::Ordering,
        label,
        passed,
        format!("{} ordering violations over {} pair events", t.ordering + t.ensemble_ordering, t.pair_events),
    )
    .stat("replicas", opts.coupling_replicas as f64)
    .stat("ordering_violations", t.ordering as f64)
    .stat("ensemble_ordering_violations", t.ensemble_ordering as f64)
    .stat("pair_events", t.pair_events as f64))
}

/// Walks that meet stay together, and the separately evolved walks match
/// the coalescing ensemble.
pub fn coalescence_suite(label: &str, model: &ModelSpec, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    let t = coupling_tally(model, opts, seed)?;
    let passed = t.permanence == 0 && t.mismatched_paths == 0;
    Ok(SuiteReport::new(
        Suite::Coalescence,
        label,
        passed,
        format!(
            "{} permanence violations, {} paths differing from the coupled ensemble, {} replicas with a coalescence",
            t.permanence, t.mismatched_paths, t.coalesced_replicas
        ),
    )
    .stat("replicas", opts.coupling_replicas as f64)
    .stat("permanence_violations", t.permanence as f64)
    .stat("mismatched_paths", t.mismatched_paths as f64)
    .stat("coalesced_replicas", t.coalesced_replicas as f64))
}

/// Arrow counts at the origin given the environment are Poisson with the
/// integrated rate as mean. Constant environments get a chi-square test per
/// direction; otherwise the standardised total count is checked.
pub fn poisson_suite(label: &str, model: &ModelSpec, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    const LEVEL: f64 = 1e-3;
    let model = compact(model, opts.compact_half_width);
    let h = opts.poisson_horizon;
    let plan = ReplicaPlan::new(model.clone(), h);
    plan.validate()?;
    let draws = run_replicas(opts.poisson_seeds, seed, |seeds| {
        let env = model.environment_on(Window::centered(1, h)?, seeds.child(crate::rng::tag::ENVIRONMENT).seed())?;
        let mean = env.track(0)?.integrated_rates(0.0, h);
        let field = plan.arrow_field(env, seeds);
        let site = field.site(0)?;
        Ok((
            site.count(Direction::Right, 0.0, h) as u64,
            site.count(Direction::Left, 0.0, h) as u64,
            mean.plus,
            mean.minus,
        ))
    })?;
    let report = |passed: bool, detail: String| SuiteReport::new(Suite::PoissonCounts, label, passed, detail);
    if let ModelSpec::Constant(s) = &model {
        let right: Vec<u64> = draws.iter().map(|d| d.0).collect();
        let left: Vec<u64> = draws.iter().map(|d| d.1).collect();
        let mut p_values = Vec::new();
        for (counts, rate) in [(&right, s.p), (&left, s.q)] {
            if rate > 0.0 {
                p_values.push(poisson_gof(counts, rate * h)?.p_value);
            } else {
                p_values.push(if counts.iter().all(|&c| c == 0) { 1.0 } else { 0.0 });
            }
        }
        let passed = p_values.iter().all(|&p| p > LEVEL);
        return Ok(report(
            passed,
            format!("chi-square p = {:.4} (right), {:.4} (left)", p_values[0], p_values[1]),
        )
        .stat("p_right", p_values[0])
        .stat("p_left", p_values[1])
        .stat("seeds", draws.len() as f64));
    }
    let mut z = [0.0; 2];
    for (k, zk) in z.iter_mut().enumerate() {
        let (count, mean) = draws.iter().fold((0.0, 0.0), |acc, d| {
            let (c, m) = if k == 0 { (d.0, d.2) } else { (d.1, d.3) };
            (acc.0 + c as f64, acc.1 + m)
        });
        *zk = if mean > 0.0 { (count - mean) / mean.sqrt() } else { count };
    }
    let passed = z.iter().all(|v| v.abs() < 4.0);
    Ok(report(passed, format!("standardised totals z = {:.3} (right), {:.3} (left)", z[0], z[1]))
        .stat("z_right", z[0])
        .stat("z_left", z[1])
        .stat("seeds", draws.len() as f64))
}

/// Two-sample KS test that the graphical construction and the quenched
/// simulator give the same law of the final position.
pub fn law_suite(label: &str, model: &ModelSpec, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    let plan = ReplicaPlan::new(compact(model, opts.compact_half_width), opts.ks_horizon);
    let r = compare_simulators(&plan, opts.ks_replicas, seed)?;
    Ok(SuiteReport::new(
        Suite::LawEquality,
        label,
        r.p_value > 1e-3,
        format!("KS D = {:.4}, p = {:.4}", r.statistic, r.p_value),
    )
    .stat("ks_statistic", r.statistic)
    .stat("p_value", r.p_value)
    .stat("replicas_per_side", opts.ks_replicas as f64))
}

/// Stationarity of the environment at the horizon: exclusion density
/// against `rho` with an exactly conserved particle count, and the state
/// law of i.i.d. chains against their invariant law.
pub fn stationarity_suite(
    label: &str,
    model: &ModelSpec,
    horizon: f64,
    opts: &SuiteOptions,
    seed: u64,
) -> Result<SuiteReport> {
    let report = |passed: bool, detail: String| SuiteReport::new(Suite::Stationarity, label, passed, detail);
    match model {
        ModelSpec::Constant(_) => Ok(report(true, "time-constant environment".into())),
        ModelSpec::Ssep(s) => {
            let times: Vec<f64> = (0..=16).map(|k| horizon * k as f64 / 16.0).collect();
            let per_replica = run_replicas(opts.stationarity_replicas, seed, |seeds| {
                let snaps = ssep_snapshots(s, &times, seeds.child(crate::rng::tag::ENVIRONMENT).seed())?;
                let counts: Vec<u64> = snaps.iter().map(|e| e.iter().filter(|&&b| b).count() as u64).collect();
                Ok((counts[16], counts.iter().all(|&c| c == counts[0])))
            })?;
            let sites = (2 * s.half_width + 1) as f64 * per_replica.len() as f64;
            let occupied: u64 = per_replica.iter().map(|r| r.0).sum();
            let density = occupied as f64 / sites;
            let sigma = (s.rho * (1.0 - s.rho) / sites).sqrt();
            let z = if sigma > 0.0 { (density - s.rho) / sigma } else { 0.0 };
            let broken = per_replica.iter().filter(|r| !r.1).count();
            let passed = z.abs() < 4.0 && broken == 0;
            Ok(report(
                passed,
                format!("density {density:.5} vs {} (z = {z:.3}); {broken} realisations lost particles", s.rho),
            )
            .stat("density", density)
            .stat("z", z)
            .stat("conservation_failures", broken as f64))
        }
        ModelSpec::IidChain(c) => {
            let pi = stationary_distribution(c)?.weights;
            let half = opts.stationarity_sites / 2;
            let per_replica = run_replicas(opts.stationarity_replicas, seed, |seeds| {
                let window = Window::centered(half, horizon)?;
                let env = model.environment_on(window, seeds.child(crate::rng::tag::ENVIRONMENT).seed())?;
                let mut counts = vec![0u64; pi.len()];
                for x in window.sites() {
                    if let Some(latent) = env.track(x)?.latent() {
                        counts[latent.state_at(horizon) as usize] += 1;
                    }
                }
                Ok(counts)
            })?;
            let mut observed = vec![0u64; pi.len()];
            for c in &per_replica {
                for (o, v) in observed.iter_mut().zip(c) {
                    *o += v;
                }
            }
            let n: u64 = observed.iter().sum();
            let expected: Vec<f64> = pi.iter().map(|w| w * n as f64).collect();
            let r = chi_square_gof(&observed, &expected, 0)?;
            Ok(report(
                r.p_value > 1e-3,
                format!("state law at the horizon: chi-square {:.3} on {} dof, p = {:.4}", r.statistic, r.dof, r.p_value),
            )
            .stat("chi_square", r.statistic)
            .stat("p_value", r.p_value)
            .stat("sites", n as f64))
        }
    }
}

/// Fraction of walks that have left `[-n, n]`, at a quarter, half and all
/// of the exit horizon; must be nondecreasing and at least 0.999 at the end.
pub fn exit_suite(label: &str, config: &ExperimentConfig, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    let plan = config.exit_plan();
    let h = plan.horizon;
    let checkpoints = [h / 4.0, h / 2.0, h];
    let survey = exit_time_survey(&plan, config.run.box_radius, &checkpoints, opts.exit_replicas, seed)?;
    let last = survey.final_fraction();
    let passed = survey.is_monotone() && last >= 0.999;
    let fractions: Vec<String> = survey.fraction_exited.iter().map(|f| format!("{f:.4}")).collect();
    Ok(SuiteReport::new(
        Suite::ExitSurvey,
        label,
        passed,
        format!("exited fractions [{}] at t = {:?}", fractions.join(", "), checkpoints),
    )
    .stat("final_fraction", last)
    .stat("exit_horizon", h)
    .stat("replicas", opts.exit_replicas as f64))
}

/// Runs one suite on one configuration.
pub fn run_suite(suite: Suite, label: &str, config: &ExperimentConfig, opts: &SuiteOptions, seed: u64) -> Result<SuiteReport> {
    let tree = SeedTree::new(seed).child(suite as u64 + 1);
    let seed = tree.seed();
    let model = &config.model;
    match suite {
        Suite::Ordering => ordering_suite(label, model, opts, seed),
        Suite::Coalescence => coalescence_suite(label, model, opts, seed),
        Suite::PoissonCounts => poisson_suite(label, model, opts, seed),
        Suite::LawEquality => law_suite(label, model, opts, seed),
        Suite::Stationarity => stationarity_suite(label, model, config.run.horizon, opts, seed),
        Suite::ExitSurvey => exit_suite(label, config, opts, seed),
    }
}

/// Runs every suite on every configuration, in order.
pub fn run_all(catalogue: &[(String, ExperimentConfig)], opts: &SuiteOptions, seed: u64) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();
    for suite in Suite::ALL {
        for (label, config) in catalogue {
            let report = run_suite(suite, label, config, opts, seed)?;
            log::info!("{} on {}: {} ({})", suite, label, if report.passed { "pass" } else { "FAIL" }, report.detail);
            out.push(report);
        }
    }
    Ok(out)
}

//! Monte Carlo estimators built on independent walk replicas.
//!
//! Replica `i` of a batch always draws from the stream tree
//! `SeedTree::new(seed).replica(i)`, so results depend only on the seed and
//! the replica count, never on how replicas are spread over threads.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentTrajectory, Window};
use crate::error::{invalid, Error, Result};
use crate::graphical::{evolve_coupled, evolve_walk, sample_arrow_field, ArrowField};
use crate::models::{simulate_ssep_walk, ModelSpec};
use crate::path::{WalkLimits, WalkPath, WalkStatus, DEFAULT_JUMP_CAP};
use crate::rng::{tag, SeedTree};
use crate::stats::{block_mean_se, ks_two_sample, mean_variance, wilson_interval, TestResult, Z99};
use crate::walk::{hitting_time, simulate_quenched, HitTime, SiteSet};

/// Which simulator produces replica paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Simulator {
    #[default]
    Quenched,
    Graphical,
    /// Environment evolved together with the walk. Only the exclusion
    /// model has a dedicated joint simulator; other models fall back to
    /// the quenched one.
    Joint,
}

/// Everything needed to run one replica from the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaPlan {
    pub model: ModelSpec,
    pub horizon: f64,
    pub jump_cap: u64,
    /// Torus margin for the exclusion model (default `L / 4`).
    pub margin: Option<i64>,
    /// Half-width of the sampled window for spatially lazy models.
    pub reach: Option<i64>,
    pub simulator: Simulator,
}

impl ReplicaPlan {
    pub fn new(model: ModelSpec, horizon: f64) -> Self {
        Self {
            model,
            horizon,
            jump_cap: DEFAULT_JUMP_CAP,
            margin: None,
            reach: None,
            simulator: Simulator::Quenched,
        }
    }

    pub fn with_simulator(mut self, simulator: Simulator) -> Self {
        self.simulator = simulator;
        self
    }

    pub fn with_jump_cap(mut self, cap: u64) -> Self {
        self.jump_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.limits().validate()?;
        if self.horizon <= 0.0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if let (Some(m), ModelSpec::Ssep(s)) = (self.margin, &self.model) {
            if m < 0 || m >= s.half_width {
                return Err(invalid("margin", format!("must lie in [0, {})", s.half_width)));
            }
        }
        Ok(())
    }

    pub fn limits(&self) -> WalkLimits {
        WalkLimits::new(self.horizon)
            .with_jump_cap(self.jump_cap)
            .with_safe_range(self.model.safe_range(self.margin))
    }

    fn reach(&self) -> i64 {
        self.reach.unwrap_or_else(|| self.model.default_reach(self.horizon))
    }

    /// Environment for a walk started at the origin.
    pub fn environment(&self, seeds: &SeedTree) -> Result<EnvironmentTrajectory> {
        self.model
            .environment(self.horizon, self.reach(), seeds.child(tag::ENVIRONMENT).seed())
    }

    /// Environment covering starts in `[lo, hi]`.
    pub fn environment_around(&self, lo: i64, hi: i64, seeds: &SeedTree) -> Result<EnvironmentTrajectory> {
        let r = self.reach();
        let window = Window::new(lo - r, hi + r, self.horizon)?;
        self.model.environment_on(window, seeds.child(tag::ENVIRONMENT).seed())
    }

    pub fn arrow_field(&self, env: EnvironmentTrajectory, seeds: &SeedTree) -> ArrowField {
        sample_arrow_field(Arc::new(env), seeds.child(tag::ARROWS).seed())
    }

    /// One path from the origin with fresh environment randomness.
    pub fn run(&self, seeds: &SeedTree) -> Result<WalkPath> {
        let limits = self.limits();
        if let (Simulator::Joint, ModelSpec::Ssep(s)) = (self.simulator, &self.model) {
            return simulate_ssep_walk(s, 0, &limits, seeds.child(tag::ENVIRONMENT).seed());
        }
        let env = self.environment(seeds)?;
        match self.simulator {
            Simulator::Quenched | Simulator::Joint => simulate_quenched(&env, 0, &limits, seeds.child(tag::QUENCHED).seed()),
            Simulator::Graphical => evolve_walk(&self.arrow_field(env, seeds), 0, &limits),
        }
    }
}

/// Runs `f` on replicas `0..count`, in parallel, returning results in
/// replica order.
pub fn run_replicas<T, F>(count: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SeedTree) -> Result<T> + Sync,
{
    let root = SeedTree::new(seed);
    (0..count as u64).into_par_iter().map(|i| f(&root.replica(i))).collect()
}

/// Per-replica outcome of the finite-horizon trichotomy surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaClass {
    Right,
    Left,
    Recurrent,
    Unclassified,
}

/// Classifies the positions of a path (start first, final value last):
/// recurrent if it reaches both `level` and `-level`; otherwise right if it
/// reaches `level`, never visits 0 afterwards and ends at or above `level`;
/// left symmetrically.
///
/// The recurrent test comes first because it can only switch on as the
/// horizon grows, which keeps the recurrent fraction monotone in the
/// horizon.
pub fn classify_positions(positions: &[i64], level: i64) -> ReplicaClass {
    let last = *positions.last().expect("nonempty path");
    let first_at = |target: i64| positions.iter().position(|&x| x == target);
    let up = first_at(level);
    let down = first_at(-level);
    let stays_away = |from: usize| positions[from..].iter().all(|&x| x != 0);
    if up.is_some() && down.is_some() {
        ReplicaClass::Recurrent
    } else if up.is_some_and(stays_away) && last >= level {
        ReplicaClass::Right
    } else if down.is_some_and(stays_away) && last <= -level {
        ReplicaClass::Left
    } else {
        ReplicaClass::Unclassified
    }
}

/// Classification of the path restricted to `[0, t]`.
pub fn classify_until(path: &WalkPath, level: i64, t: f64) -> ReplicaClass {
    classify_positions(&path.positions()[..=path.index_at(t)], level)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: u64,
    pub estimate: f64,
    /// 99% Wilson interval.
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn new(count: u64, n: u64) -> Self {
        let (lower, upper) = wilson_interval(count, n, Z99);
        let estimate = if n == 0 { f64::NAN } else { count as f64 / n as f64 };
        Self {
            count,
            estimate,
            lower,
            upper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TransientRight,
    TransientLeft,
    Recurrent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrichotomyEstimate {
    pub p_right: Proportion,
    pub p_left: Proportion,
    pub p_rec: Proportion,
    pub p_unclassified: Proportion,
    pub horizon: f64,
    pub level: i64,
    /// Replicas that entered the estimate.
    pub replicas: u64,
    pub discarded_window: u64,
    pub discarded_explosion: u64,
    pub verdict: Verdict,
}

/// Edge of the extreme bands `[0, BAND] and [1 - BAND, 1]`.
pub const BAND: f64 = 0.05;

impl TrichotomyEstimate {
    /// `counts` in the order right, left, recurrent, unclassified.
    pub fn from_counts(counts: [u64; 4], horizon: f64, level: i64, discarded_window: u64, discarded_explosion: u64) -> Self {
        let n: u64 = counts.iter().sum();
        let [r, l, c, u] = counts.map(|k| Proportion::new(k, n));
        let decisive = |own: Proportion| own.lower > 1.0 - BAND && Proportion::new(n - own.count, n).upper < BAND;
        let verdict = if decisive(r) {
            Verdict::TransientRight
        } else if decisive(l) {
            Verdict::TransientLeft
        } else if decisive(c) {
            Verdict::Recurrent
        } else {
            Verdict::Inconclusive
        };
        Self {
            p_right: r,
            p_left: l,
            p_rec: c,
            p_unclassified: u,
            horizon,
            level,
            replicas: n,
            discarded_window,
            discarded_explosion,
            verdict,
        }
    }

    /// Both directional estimates are within the extreme bands.
    pub fn in_zero_one_band(&self) -> bool {
        let extreme = |p: f64| p <= BAND || p >= 1.0 - BAND;
        extreme(self.p_right.estimate) && extreme(self.p_left.estimate)
    }
}

struct Outcome {
    status: WalkStatus,
    classes: Vec<ReplicaClass>,
    final_position: i64,
    hit_plus: HitTime,
    hit_minus: HitTime,
}

fn outcome(path: &WalkPath, level: i64, times: &[f64]) -> Outcome {
    Outcome {
        status: path.status(),
        classes: times.iter().map(|&t| classify_until(path, level, t)).collect(),
        final_position: path.final_position(),
        hit_plus: hitting_time(path, &SiteSet::point(1)),
        hit_minus: hitting_time(path, &SiteSet::point(-1)),
    }
}

fn check_checkpoints(checkpoints: &[f64], horizon: f64) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("checkpoints", "must be strictly increasing"));
    }
    if checkpoints.iter().any(|&t| !(t > 0.0 && t <= horizon)) {
        return Err(invalid("checkpoints", format!("must lie in (0, {horizon}]")));
    }
    Ok(())
}

fn with_horizon(checkpoints: &[f64], horizon: f64) -> Vec<f64> {
    let mut times = checkpoints.to_vec();
    if times.last() != Some(&horizon) {
        times.push(horizon);
    }
    times
}

fn run_outcomes(plan: &ReplicaPlan, level: i64, times: &[f64], replicas: usize, seed: u64) -> Result<Vec<Outcome>> {
    plan.validate()?;
    if level < 1 {
        return Err(invalid("level", "must be at least 1"));
    }
    if replicas == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    run_replicas(replicas, seed, |seeds| Ok(outcome(&plan.run(seeds)?, level, times)))
}

fn estimates(outcomes: &[Outcome], level: i64, times: &[f64]) -> Vec<TrichotomyEstimate> {
    let window = outcomes.iter().filter(|o| o.status == WalkStatus::WindowViolation).count() as u64;
    let explosion = outcomes.iter().filter(|o| o.status == WalkStatus::ExplodedCap).count() as u64;
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut counts = [0u64; 4];
            for o in outcomes.iter().filter(|o| o.status == WalkStatus::Completed) {
                counts[o.classes[k] as usize] += 1;
            }
            TrichotomyEstimate::from_counts(counts, t, level, window, explosion)
        })
        .collect()
}

/// Trichotomy estimate at the plan's horizon from `replicas` replicas.
/// Replicas that leave the safe range or hit the jump cap are discarded and
/// counted.
pub fn classify_trichotomy(plan: &ReplicaPlan, level: i64, replicas: usize, seed: u64) -> Result<TrichotomyEstimate> {
    Ok(classify_series(plan, level, &[], replicas, seed)?.pop().expect("horizon estimate"))
}

/// Estimates at each checkpoint and at the horizon (last), from one set of
/// replicas.
pub fn classify_series(
    plan: &ReplicaPlan,
    level: i64,
    checkpoints: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<TrichotomyEstimate>> {
    check_checkpoints(checkpoints, plan.horizon)?;
    let times = with_horizon(checkpoints, plan.horizon);
    let outcomes = run_outcomes(plan, level, &times, replicas, seed)?;
    Ok(estimates(&outcomes, level, &times))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: f64,
    pub estimate: TrichotomyEstimate,
    pub in_band: bool,
}

/// Classifies the model at every value of `parameter`. Points outside the
/// zero-one bands are flagged (and logged) rather than treated as errors:
/// they call for a longer horizon.
pub fn zero_one_sweep(
    plan: &ReplicaPlan,
    parameter: &str,
    values: &[f64],
    level: i64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(invalid("values", "sweep grid is empty"));
    }
    let root = SeedTree::new(seed).child(tag::SWEEP);
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let point = ReplicaPlan {
                model: plan.model.with_parameter(parameter, value)?,
                ..plan.clone()
            };
            let estimate = classify_trichotomy(&point, level, replicas, root.child(i as u64).seed())?;
            let in_band = estimate.in_zero_one_band();
            if !in_band {
                log::warn!(
                    "{parameter} = {value}: p_right {:.3}, p_left {:.3} outside the zero-one bands; rerun with a longer horizon",
                    estimate.p_right.estimate,
                    estimate.p_left.estimate
                );
            }
            Ok(SweepPoint {
                parameter: parameter.to_string(),
                value,
                estimate,
                in_band,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// Two-sample test of `X_T` (first half of the replicas) against `-X_T`
    /// (second half).
    pub symmetry: TestResult,
    pub estimate: TrichotomyEstimate,
    pub checkpoints: Vec<f64>,
    /// Fraction of replicas that hit `+1` by each checkpoint.
    pub hit_plus: Vec<f64>,
    pub hit_minus: Vec<f64>,
}

impl SymmetryReport {
    pub fn hits_monotone(&self) -> bool {
        let up = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
        up(&self.hit_plus) && up(&self.hit_minus)
    }
}

/// Significance below which a declared symmetry is rejected.
pub const SYMMETRY_LEVEL: f64 = 1e-3;

/// Checks a model declared reflection symmetric: `X_T` and `-X_T` must be
/// equidistributed (otherwise `Error::Model`), and the report carries the
/// trichotomy verdict and the hitting curves of `+1` and `-1`.
pub fn symmetry_recurrence_test(
    plan: &ReplicaPlan,
    level: i64,
    checkpoints: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<SymmetryReport> {
    if replicas < 4 {
        return Err(invalid("replicas", "need at least four replicas"));
    }
    check_checkpoints(checkpoints, plan.horizon)?;
    let times = with_horizon(checkpoints, plan.horizon);
    let outcomes = run_outcomes(plan, level, &times, replicas, seed)?;
    let estimate = estimates(&outcomes, level, &times).pop().expect("horizon estimate");
    let kept: Vec<&Outcome> = outcomes.iter().filter(|o| o.status == WalkStatus::Completed).collect();
    let half = kept.len() / 2;
    let a: Vec<f64> = kept[..half].iter().map(|o| o.final_position as f64).collect();
    let b: Vec<f64> = kept[half..].iter().map(|o| -o.final_position as f64).collect();
    let symmetry = ks_two_sample(&a, &b)?;
    if symmetry.p_value <= SYMMETRY_LEVEL {
        return Err(Error::Model(format!(
            "model declared reflection symmetric but X_T and -X_T differ (KS D = {:.4}, p = {:.2e})",
            symmetry.statistic, symmetry.p_value
        )));
    }
    let n = kept.len().max(1) as f64;
    let curve = |pick: fn(&Outcome) -> HitTime| -> Vec<f64> {
        times
            .iter()
            .map(|&t| kept.iter().filter(|o| pick(o).within(t)).count() as f64 / n)
            .collect()
    };
    Ok(SymmetryReport {
        symmetry,
        estimate,
        hit_plus: curve(|o| o.hit_plus),
        hit_minus: curve(|o| o.hit_minus),
        checkpoints: times,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSurvey {
    pub radius: i64,
    pub exit_times: Vec<HitTime>,
    pub checkpoints: Vec<f64>,
    pub fraction_exited: Vec<f64>,
}

impl ExitSurvey {
    pub fn is_monotone(&self) -> bool {
        self.fraction_exited.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn final_fraction(&self) -> f64 {
        *self.fraction_exited.last().unwrap_or(&0.0)
    }
}

/// Exit times of the box `[-radius, radius]` for walks from the origin. The
/// plan's horizon must cover the last checkpoint.
pub fn exit_time_survey(plan: &ReplicaPlan, radius: i64, checkpoints: &[f64], replicas: usize, seed: u64) -> Result<ExitSurvey> {
    plan.validate()?;
    if radius < 0 {
        return Err(invalid("radius", "must be nonnegative"));
    }
    if checkpoints.is_empty() {
        return Err(invalid("checkpoints", "need at least one checkpoint"));
    }
    check_checkpoints(checkpoints, plan.horizon)?;
    let outside = SiteSet::Outside(-radius, radius);
    let exit_times = run_replicas(replicas, seed, |seeds| Ok(hitting_time(&plan.run(seeds)?, &outside)))?;
    let n = exit_times.len().max(1) as f64;
    let fraction_exited = checkpoints
        .iter()
        .map(|&t| exit_times.iter().filter(|e| e.within(t)).count() as f64 / n)
        .collect();
    Ok(ExitSurvey {
        radius,
        exit_times,
        checkpoints: checkpoints.to_vec(),
        fraction_exited,
    })
}

/// Events whose spatial frequency is compared with their probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialEvent {
    /// No arrow of either direction at the site during `(0, length]`.
    NoArrowsInSlab { length: f64 },
    /// The walk from the site never goes left of it before the horizon.
    NeverLeftOfStart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub event: SpatialEvent,
    /// Average over consecutive sites of one realisation.
    pub spatial: MeanEstimate,
    /// Frequency at the origin over independent realisations.
    pub annealed: MeanEstimate,
    /// `(spatial - annealed) / joint standard error`.
    pub z_score: f64,
    /// Closed-form probability when one is known.
    pub reference: Option<f64>,
    /// Sites or replicas dropped because their walk did not complete.
    pub discarded: u64,
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Compares the average of an event over `sites` consecutive starts in one
/// realisation (coupled walks on one arrow field) with its probability
/// estimated from `replicas` independent realisations. Spatial standard
/// errors use blocks of `block` sites.
pub fn spatial_ergodic_average(
    plan: &ReplicaPlan,
    event: SpatialEvent,
    sites: usize,
    replicas: usize,
    block: usize,
    seed: u64,
) -> Result<ErgodicReport> {
    plan.validate()?;
    if sites < 2 * block.max(1) || replicas < 2 {
        return Err(invalid("sites", "need at least two blocks and two replicas"));
    }
    if let SpatialEvent::NoArrowsInSlab { length } = event {
        if !(length > 0.0 && length <= plan.horizon) {
            return Err(invalid("length", format!("slab length must lie in (0, {}]", plan.horizon)));
        }
    }
    let lo = -(sites as i64) / 2;
    let starts: Vec<i64> = (lo..lo + sites as i64).collect();
    let hi = *starts.last().unwrap();
    let root = SeedTree::new(seed);
    let one = root.child(tag::SPATIAL);
    let env = plan.environment_around(lo, hi, &one)?;
    let field = plan.arrow_field(env, &one);
    let limits = plan.limits();
    let mut discarded = 0u64;

    let spatial: Vec<f64> = match event {
        SpatialEvent::NoArrowsInSlab { length } => starts
            .iter()
            .map(|&x| Ok(indicator(field.site(x)?.next_after(0.0).is_none_or(|(t, _)| t > length))))
            .collect::<Result<_>>()?,
        SpatialEvent::NeverLeftOfStart => {
            let ens = evolve_coupled(&field, &starts, &limits)?;
            ens.paths()
                .iter()
                .filter_map(|p| {
                    if p.status() == WalkStatus::Completed {
                        Some(indicator(p.min_position() >= p.start()))
                    } else {
                        discarded += 1;
                        None
                    }
                })
                .collect()
        }
    };
    let (mean, se) = block_mean_se(&spatial, block)?;
    let spatial = MeanEstimate {
        mean,
        std_error: se,
        samples: spatial.len() as u64,
    };

    let annealed: Vec<Option<f64>> = run_replicas(replicas, root.child(tag::ANNEALED).seed(), |seeds| match event {
        SpatialEvent::NoArrowsInSlab { length } => {
            let field = plan.arrow_field(plan.environment(seeds)?, seeds);
            Ok(Some(indicator(field.site(0)?.next_after(0.0).is_none_or(|(t, _)| t > length))))
        }
        SpatialEvent::NeverLeftOfStart => {
            let p = plan.run(seeds)?;
            Ok((p.status() == WalkStatus::Completed).then(|| indicator(p.min_position() >= 0)))
        }
    })?;
    discarded += annealed.iter().filter(|a| a.is_none()).count() as u64;
    let annealed: Vec<f64> = annealed.into_iter().flatten().collect();
    let (a_mean, a_var) = mean_variance(&annealed);
    let annealed = MeanEstimate {
        mean: a_mean,
        std_error: (a_var / annealed.len() as f64).sqrt(),
        samples: annealed.len() as u64,
    };
    let joint = (spatial.std_error.powi(2) + annealed.std_error.powi(2)).sqrt();
    let z_score = if joint > 0.0 {
        (spatial.mean - annealed.mean) / joint
    } else if spatial.mean == annealed.mean {
        0.0
    } else {
        f64::INFINITY
    };
    let reference = match (&plan.model, event) {
        (ModelSpec::Constant(c), SpatialEvent::NoArrowsInSlab { length }) => Some((-(c.p + c.q) * length).exp()),
        _ => None,
    };
    Ok(ErgodicReport {
        event,
        spatial,
        annealed,
        z_score,
        reference,
        discarded,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplosionCensus {
    pub replicas: u64,
    pub exploded: u64,
    pub window_violations: u64,
    pub max_crossings: u64,
}

/// Counts replicas that reach the jump cap.
pub fn explosion_census(plan: &ReplicaPlan, replicas: usize, seed: u64) -> Result<ExplosionCensus> {
    plan.validate()?;
    let paths = run_replicas(replicas, seed, |seeds| {
        let p = plan.run(seeds)?;
        Ok((p.status(), p.arrows_crossed()))
    })?;
    Ok(ExplosionCensus {
        replicas: paths.len() as u64,
        exploded: paths.iter().filter(|p| p.0 == WalkStatus::ExplodedCap).count() as u64,
        window_violations: paths.iter().filter(|p| p.0 == WalkStatus::WindowViolation).count() as u64,
        max_crossings: paths.iter().map(|p| p.1).max().unwrap_or(0),
    })
}

/// Two-sample test of `X_T` under the graphical construction against the
/// direct quenched simulator, with independent randomness on each side.
pub fn compare_simulators(plan: &ReplicaPlan, replicas: usize, seed: u64) -> Result<TestResult> {
    let root = SeedTree::new(seed);
    let finals = |simulator: Simulator, seed: u64| -> Result<Vec<f64>> {
        let plan = ReplicaPlan {
            simulator,
            ..plan.clone()
        };
        plan.validate()?;
        let out = run_replicas(replicas, seed, |seeds| {
            let p = plan.run(seeds)?;
            Ok((p.status() == WalkStatus::Completed).then(|| p.final_position() as f64))
        })?;
        Ok(out.into_iter().flatten().collect())
    };
    let graphical = finals(Simulator::Graphical, root.child(1).seed())?;
    let quenched = finals(Simulator::Quenched, root.child(2).seed())?;
    ks_two_sample(&graphical, &quenched)
}

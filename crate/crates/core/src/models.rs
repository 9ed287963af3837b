//! Environment generators sampled from their stationary laws.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentTrajectory, RatePair, SiteRateTrack, TrackBuilder, TrackGenerator, Window};
use crate::error::{invalid, Error, Result};
use crate::path::{WalkLimits, WalkPath, WalkStatus};
use crate::rng::{tag, SeedTree};

/// Homogeneous field with right rate `p` and left rate `q` everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantModelSpec {
    pub p: f64,
    pub q: f64,
}

impl ConstantModelSpec {
    pub fn validate(&self) -> Result<()> {
        RatePair::new(self.p, self.q).validate()?;
        if self.p + self.q <= 0.0 {
            return Err(invalid("p", "p + q must be positive"));
        }
        Ok(())
    }
}

fn default_exchange_rate() -> f64 {
    1.0
}

/// Walk rates modulated by a simple symmetric exclusion process on the
/// torus `{-L, ..., L}`: an occupied site pushes right with rate `alpha`
/// and left with rate `beta`, a vacant site the other way round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsepModelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub half_width: i64,
    #[serde(default = "default_exchange_rate")]
    pub exchange_rate: f64,
}

impl SsepModelSpec {
    pub fn new(alpha: f64, beta: f64, rho: f64, half_width: i64) -> Self {
        Self {
            alpha,
            beta,
            rho,
            half_width,
            exchange_rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < self.alpha && self.alpha.is_finite()) {
            return Err(invalid(
                "beta",
                format!("require 0 < beta < alpha < inf, got alpha={} beta={}", self.alpha, self.beta),
            ));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(invalid("rho", format!("density must lie in (0, 1), got {}", self.rho)));
        }
        if self.half_width < 1 {
            return Err(invalid("half_width", format!("need L >= 1, got {}", self.half_width)));
        }
        if !(self.exchange_rate > 0.0 && self.exchange_rate.is_finite()) {
            return Err(invalid("exchange_rate", format!("must be positive, got {}", self.exchange_rate)));
        }
        Ok(())
    }

    /// Rates felt by the walk on a site with occupation `eta`.
    pub fn rates(&self, occupied: bool) -> RatePair {
        if occupied {
            RatePair::new(self.alpha, self.beta)
        } else {
            RatePair::new(self.beta, self.alpha)
        }
    }
}

/// Finite-state Markov chain run independently at every site; the walk's
/// rates are `alpha_plus[state]` and `alpha_minus[state]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub states: Vec<String>,
    /// Rate matrix; off-diagonal entries nonnegative, rows sum to zero.
    pub generator: Vec<Vec<f64>>,
    pub alpha_plus: Vec<f64>,
    pub alpha_minus: Vec<f64>,
}

impl ChainSpec {
    /// Two states with switching rates `a` (0 to 1) and `b` (1 to 0).
    pub fn two_state(a: f64, b: f64, alpha_plus: [f64; 2], alpha_minus: [f64; 2]) -> Self {
        Self {
            states: vec!["0".into(), "1".into()],
            generator: vec![vec![-a, a], vec![b, -b]],
            alpha_plus: alpha_plus.to_vec(),
            alpha_minus: alpha_minus.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(invalid("states", "state space is empty"));
        }
        if self.generator.len() != n || self.generator.iter().any(|row| row.len() != n) {
            return Err(invalid("generator", format!("must be {n}x{n}")));
        }
        if self.alpha_plus.len() != n || self.alpha_minus.len() != n {
            return Err(invalid("alpha_plus", format!("need one rate per state ({n})")));
        }
        for (i, row) in self.generator.iter().enumerate() {
            let mut off = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(invalid("generator", format!("entry ({i},{j}) is not finite")));
                }
                if i != j {
                    if v < 0.0 {
                        return Err(invalid("generator", format!("negative off-diagonal entry ({i},{j})")));
                    }
                    off += v;
                }
            }
            if (row[i] + off).abs() > 1e-9 * off.max(1.0) {
                return Err(invalid("generator", format!("row {i} does not sum to zero")));
            }
        }
        for (name, rates) in [("alpha_plus", &self.alpha_plus), ("alpha_minus", &self.alpha_minus)] {
            if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return Err(invalid(name, "rates must be strictly positive and finite"));
            }
        }
        if !self.is_irreducible() {
            return Err(Error::Model("generator is reducible".into()));
        }
        Ok(())
    }

    fn reachable(&self, from: usize, forward: bool) -> Vec<bool> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if forward { self.generator[i][j] } else { self.generator[j][i] };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    pub fn is_irreducible(&self) -> bool {
        !self.is_empty()
            && self.reachable(0, true).iter().all(|&s| s)
            && self.reachable(0, false).iter().all(|&s| s)
    }

    fn rates(&self, state: usize) -> RatePair {
        RatePair::new(self.alpha_plus[state], self.alpha_minus[state])
    }

    /// An involution `s` of the states with `Q[s i][s j] = Q[i][j]` and
    /// `alpha_plus[s i] = alpha_minus[i]`, if one exists.
    pub fn reflection_involution(&self) -> Option<Vec<usize>> {
        let n = self.len();
        if n > 9 {
            return None;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut found = None;
        permutations(&mut perm, 0, &mut |p| {
            let involutive = (0..n).all(|i| p[p[i]] == i);
            let swaps_rates = (0..n).all(|i| self.alpha_plus[p[i]] == self.alpha_minus[i]);
            let keeps_q = (0..n).all(|i| (0..n).all(|j| self.generator[p[i]][p[j]] == self.generator[i][j]));
            if involutive && swaps_rates && keeps_q {
                found = Some(p.to_vec());
                true
            } else {
                false
            }
        });
        found
    }
}

fn permutations(p: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == p.len() {
        return visit(p);
    }
    for i in k..p.len() {
        p.swap(k, i);
        if permutations(p, k + 1, visit) {
            return true;
        }
        p.swap(k, i);
    }
    false
}

/// Invariant law of a finite chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub weights: Vec<f64>,
}

/// Solves `pi Q = 0`, `sum pi = 1` directly.
pub fn stationary_distribution(spec: &ChainSpec) -> Result<StationaryDistribution> {
    if !spec.is_irreducible() {
        return Err(Error::Model("generator is reducible; no unique invariant law".into()));
    }
    let n = spec.len();
    // Transpose of Q with the last equation replaced by normalisation.
    let mut a = DMatrix::<f64>::from_fn(n, n, |i, j| spec.generator[j][i]);
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Model("singular system for the invariant law".into()))?;
    let mut weights: Vec<f64> = pi.iter().map(|&w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(StationaryDistribution { weights })
}

fn sample_index<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().unwrap();
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumulative(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    weights
        .into_iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

struct ChainTracks {
    spec: ChainSpec,
    initial: Vec<f64>,
    exit_rates: Vec<f64>,
    jumps: Vec<Vec<f64>>,
    seeds: SeedTree,
}

impl ChainTracks {
    fn new(spec: &ChainSpec, pi: &StationaryDistribution, seed: u64) -> Self {
        let n = spec.len();
        let exit_rates = (0..n).map(|i| -spec.generator[i][i]).collect();
        let jumps = (0..n)
            .map(|i| cumulative((0..n).map(|j| if i == j { 0.0 } else { spec.generator[i][j] })))
            .collect();
        Self {
            spec: spec.clone(),
            initial: cumulative(pi.weights.iter().copied()),
            exit_rates,
            jumps,
            seeds: SeedTree::new(seed).child(tag::ENVIRONMENT),
        }
    }
}

impl TrackGenerator for ChainTracks {
    fn generate(&self, site: i64, horizon: f64) -> SiteRateTrack {
        let mut rng = self.seeds.site_rng(site);
        let mut state = sample_index(&mut rng, &self.initial);
        let mut builder = TrackBuilder::new(site, self.spec.rates(state)).with_latent(state as u32);
        let mut t = 0.0;
        loop {
            let exit = self.exit_rates[state];
            if exit <= 0.0 {
                break;
            }
            let hold: f64 = Exp1.sample(&mut rng);
            t += hold / exit;
            if t >= horizon {
                break;
            }
            state = sample_index(&mut rng, &self.jumps[state]);
            builder.push_state(t, state as u32, self.spec.rates(state));
        }
        builder.finish(horizon)
    }
}

/// Homogeneous field `(p, q)` on `window`.
pub fn sample_constant(spec: &ConstantModelSpec, window: Window) -> Result<EnvironmentTrajectory> {
    spec.validate()?;
    EnvironmentTrajectory::constant(window, RatePair::new(spec.p, spec.q), "constant")
}

/// I.i.d. per-site chains started from their invariant law. Sites are
/// sampled lazily from independent streams keyed by `(seed, site)`.
pub fn sample_iid_sites(spec: &ChainSpec, window: Window, seed: u64) -> Result<EnvironmentTrajectory> {
    spec.validate()?;
    let pi = stationary_distribution(spec)?;
    let generator = Arc::new(ChainTracks::new(spec, &pi, seed));
    Ok(EnvironmentTrajectory::generated(window, "iid_chain", Some(seed), generator))
}

/// Exclusion-modulated field on the torus `{-L, ..., L}` over `[0, horizon)`.
///
/// The exclusion process is built with the stirring representation: every
/// bond carries a Poisson clock and a ring swaps the occupations of its two
/// endpoints. The initial configuration is product Bernoulli(`rho`).
pub fn sample_ssep(spec: &SsepModelSpec, horizon: f64, seed: u64) -> Result<EnvironmentTrajectory> {
    spec.validate()?;
    simulate_ssep(spec, horizon, seed)
}

fn simulate_ssep(spec: &SsepModelSpec, horizon: f64, seed: u64) -> Result<EnvironmentTrajectory> {
    let window = Window::centered(spec.half_width, horizon)?;
    let n = window.site_count();
    let tree = SeedTree::new(seed).child(tag::ENVIRONMENT);
    let mut init = tree.child(tag::INITIAL).stream(0);
    let mut eta: Vec<bool> = (0..n).map(|_| init.random::<f64>() < spec.rho).collect();
    let mut builders: Vec<TrackBuilder> = window
        .sites()
        .zip(&eta)
        .map(|(x, &e)| TrackBuilder::new(x, spec.rates(e)).with_latent(e as u32))
        .collect();

    let mut rng = tree.child(tag::DYNAMICS).stream(0);
    let total_rate = n as f64 * spec.exchange_rate;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / total_rate;
        if t >= horizon {
            break;
        }
        let i = rng.random_range(0..n);
        let j = if i + 1 == n { 0 } else { i + 1 };
        if eta[i] != eta[j] {
            eta.swap(i, j);
            builders[i].push_state(t, eta[i] as u32, spec.rates(eta[i]));
            builders[j].push_state(t, eta[j] as u32, spec.rates(eta[j]));
        }
    }
    let tracks = builders.into_iter().map(|b| b.finish(horizon)).collect();
    EnvironmentTrajectory::from_tracks(window, "ssep", Some(seed), tracks)
}

/// Occupation configurations at each of the nondecreasing `times`, from the
/// same randomness as [`sample_ssep`] (so they agree with its latent states)
/// but without recording the history.
pub fn ssep_snapshots(spec: &SsepModelSpec, times: &[f64], seed: u64) -> Result<Vec<Vec<bool>>> {
    spec.validate()?;
    if times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(invalid("times", "snapshot times must be finite, nonnegative and sorted"));
    }
    let n = Window::centered(spec.half_width, 1.0)?.site_count();
    let tree = SeedTree::new(seed).child(tag::ENVIRONMENT);
    let mut init = tree.child(tag::INITIAL).stream(0);
    let mut eta: Vec<bool> = (0..n).map(|_| init.random::<f64>() < spec.rho).collect();
    let mut rng = tree.child(tag::DYNAMICS).stream(0);
    let total_rate = n as f64 * spec.exchange_rate;
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut pending = times.iter().peekable();
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e / total_rate;
        while pending.next_if(|&&s| s < t).is_some() {
            out.push(eta.clone());
        }
        if pending.peek().is_none() {
            return Ok(out);
        }
        let i = rng.random_range(0..n);
        let j = if i + 1 == n { 0 } else { i + 1 };
        eta.swap(i, j);
    }
}

/// Walk from `x0` in an exclusion environment that is evolved jointly with
/// the walk and never stored. The initial configuration is the one
/// [`sample_ssep`] would draw for the same seed. The total jump rate of the
/// walk is always `alpha + beta`, so its jump times form a Poisson process
/// independent of the environment; between two jumps only the number and
/// order of bond rings matter, not their times.
pub fn simulate_ssep_walk(spec: &SsepModelSpec, x0: i64, limits: &WalkLimits, seed: u64) -> Result<WalkPath> {
    spec.validate()?;
    limits.validate()?;
    let window = Window::centered(spec.half_width, limits.horizon.max(f64::MIN_POSITIVE))?;
    let (lo, hi) = limits.clamp(window.x_min, window.x_max);
    if !(lo..=hi).contains(&x0) {
        return Err(window.violation(x0, 0.0));
    }
    let n = window.site_count();
    let tree = SeedTree::new(seed).child(tag::ENVIRONMENT);
    let mut init = tree.child(tag::INITIAL).stream(0);
    let mut eta: Vec<bool> = (0..n).map(|_| init.random::<f64>() < spec.rho).collect();
    let mut rng = tree.child(tag::QUENCHED).stream(0);

    let walk_rate = spec.alpha + spec.beta;
    let ring_rate = n as f64 * spec.exchange_rate;
    let mut path = WalkPath::start_at(x0, limits.horizon);
    let (mut x, mut t) = (x0, 0.0);
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        let dt = e / walk_rate;
        if t + dt >= limits.horizon {
            break;
        }
        t += dt;
        let mean = ring_rate * dt;
        let rings = if mean > 0.0 { Poisson::new(mean).expect("finite mean").sample(&mut rng) as u64 } else { 0 };
        for _ in 0..rings {
            let i = rng.random_range(0..n as u32) as usize;
            let j = if i + 1 == n { 0 } else { i + 1 };
            eta.swap(i, j);
        }
        let plus = spec.rates(eta[(x - window.x_min) as usize]).plus;
        x += if rng.random::<f64>() * walk_rate < plus { 1 } else { -1 };
        path.push(t, x);
        if !(lo..=hi).contains(&x) {
            path.stop(WalkStatus::WindowViolation);
            break;
        }
        if path.arrows_crossed() >= limits.jump_cap {
            path.stop(WalkStatus::ExplodedCap);
            break;
        }
    }
    Ok(path)
}

/// Any of the shipped environment models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Constant(ConstantModelSpec),
    Ssep(SsepModelSpec),
    IidChain(ChainSpec),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Constant(s) => s.validate(),
            ModelSpec::Ssep(s) => s.validate(),
            ModelSpec::IidChain(s) => s.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Constant(_) => "constant",
            ModelSpec::Ssep(_) => "ssep",
            ModelSpec::IidChain(_) => "iid_chain",
        }
    }

    /// Largest total jump rate the model can produce.
    pub fn max_total_rate(&self) -> f64 {
        match self {
            ModelSpec::Constant(s) => s.p + s.q,
            ModelSpec::Ssep(s) => s.alpha + s.beta,
            ModelSpec::IidChain(s) => s
                .alpha_plus
                .iter()
                .zip(&s.alpha_minus)
                .map(|(a, b)| a + b)
                .fold(0.0, f64::max),
        }
    }

    /// Half-width that a walk started at the origin exceeds before `horizon`
    /// only with negligible probability.
    pub fn default_reach(&self, horizon: f64) -> i64 {
        let m = self.max_total_rate() * horizon;
        (m + 10.0 * m.sqrt() + 20.0).ceil() as i64
    }

    /// Samples an environment for a walk started near the origin. `reach` is
    /// the half-width for spatially lazy models; the exclusion model always
    /// covers its whole torus.
    pub fn environment(&self, horizon: f64, reach: i64, seed: u64) -> Result<EnvironmentTrajectory> {
        self.environment_on(Window::centered(reach, horizon)?, seed)
    }

    /// Like [`environment`](Self::environment) with an explicit window
    /// (ignored by the exclusion model except for its horizon).
    pub fn environment_on(&self, window: Window, seed: u64) -> Result<EnvironmentTrajectory> {
        match self {
            ModelSpec::Constant(s) => sample_constant(s, window),
            ModelSpec::Ssep(s) => sample_ssep(s, window.horizon, seed),
            ModelSpec::IidChain(s) => sample_iid_sites(s, window, seed),
        }
    }

    /// Sites a walk may occupy before its replica is discarded. Only the
    /// torus model restricts walks, to `|x| <= L - margin` (default `L / 4`).
    pub fn safe_range(&self, margin: Option<i64>) -> Option<(i64, i64)> {
        match self {
            ModelSpec::Ssep(s) => {
                let m = margin.unwrap_or(s.half_width / 4);
                let r = s.half_width - m;
                Some((-r, r))
            }
            _ => None,
        }
    }

    /// True when the model is invariant under reflection through the origin.
    pub fn is_reflection_symmetric(&self) -> bool {
        match self {
            ModelSpec::Constant(s) => s.p == s.q,
            ModelSpec::Ssep(s) => s.rho == 0.5,
            ModelSpec::IidChain(s) => s.reflection_involution().is_some(),
        }
    }

    /// Sets a named numeric parameter, used by parameter sweeps.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::Constant(s) => match name {
                "p" => s.p = value,
                "q" => s.q = value,
                _ => return Err(Error::Config(format!("constant model has no parameter `{name}`"))),
            },
            ModelSpec::Ssep(s) => match name {
                "alpha" => s.alpha = value,
                "beta" => s.beta = value,
                "rho" => s.rho = value,
                "exchange_rate" => s.exchange_rate = value,
                "half_width" => s.half_width = value as i64,
                _ => return Err(Error::Config(format!("ssep model has no parameter `{name}`"))),
            },
            ModelSpec::IidChain(_) => {
                return Err(Error::Config("iid_chain models cannot be swept by a scalar parameter".into()))
            }
        }
        out.validate()?;
        Ok(out)
    }
}

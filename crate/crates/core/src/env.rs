//! Space-time rate fields.
//!
//! An environment assigns to every site of a finite window a pair of jump
//! rates `(rate_plus, rate_minus)` that is piecewise constant and
//! right-continuous in time. Tracks of generated models are materialised
//! lazily, one site at a time, from per-site random streams; once built a
//! track never changes, so the trajectory can be shared freely between
//! threads.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Finite space-time window `[x_min, x_max] x [0, horizon)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: i64,
    pub x_max: i64,
    pub horizon: f64,
}

impl Window {
    pub fn new(x_min: i64, x_max: i64, horizon: f64) -> Result<Self> {
        if x_min > x_max {
            return Err(invalid("window", format!("x_min {x_min} > x_max {x_max}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("window", format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(Self { x_min, x_max, horizon })
    }

    /// Symmetric window `[-half_width, half_width] x [0, horizon)`.
    pub fn centered(half_width: i64, horizon: f64) -> Result<Self> {
        Self::new(-half_width, half_width, horizon)
    }

    pub fn contains_site(&self, x: i64) -> bool {
        self.x_min <= x && x <= self.x_max
    }

    pub fn contains(&self, x: i64, t: f64) -> bool {
        self.contains_site(x) && (0.0..self.horizon).contains(&t)
    }

    pub fn site_count(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.x_min..=self.x_max
    }

    pub(crate) fn violation(&self, site: i64, time: f64) -> Error {
        Error::WindowViolation {
            site,
            time,
            x_min: self.x_min,
            x_max: self.x_max,
            horizon: self.horizon,
        }
    }
}

/// Rates of a right and a left jump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub plus: f64,
    pub minus: f64,
}

impl RatePair {
    pub const fn new(plus: f64, minus: f64) -> Self {
        Self { plus, minus }
    }

    pub fn total(&self) -> f64 {
        self.plus + self.minus
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (name, r) in [("rate_plus", self.plus), ("rate_minus", self.minus)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(name, format!("rates must be finite and nonnegative, got {r}")));
            }
        }
        Ok(())
    }
}

/// Maximal time interval of constant rates at one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub rate_plus: f64,
    pub rate_minus: f64,
}

impl RateSegment {
    pub fn rates(&self) -> RatePair {
        RatePair::new(self.rate_plus, self.rate_minus)
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Piecewise-constant path of a latent per-site state (an occupation
/// variable or the state of a finite chain).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrack {
    times: Vec<f64>,
    states: Vec<u32>,
}

impl LatentTrack {
    pub fn new(initial: u32) -> Self {
        Self {
            times: vec![0.0],
            states: vec![initial],
        }
    }

    /// Records a change of state at `t`; repeated states are ignored.
    pub fn push(&mut self, t: f64, state: u32) {
        if *self.states.last().unwrap() != state {
            self.times.push(t);
            self.states.push(state);
        }
    }

    pub fn state_at(&self, t: f64) -> u32 {
        let idx = self.times.partition_point(|&s| s <= t).max(1) - 1;
        self.states[idx]
    }

    pub fn changes(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }

    /// Total time spent in `state` during `[0, horizon)`.
    pub fn occupation_time(&self, state: u32, horizon: f64) -> f64 {
        let mut total = 0.0;
        for (k, (&t, &s)) in self.times.iter().zip(&self.states).enumerate() {
            let end = self.times.get(k + 1).copied().unwrap_or(horizon);
            if s == state {
                total += end - t;
            }
        }
        total
    }

    fn shifted(&self, s: f64, horizon: f64) -> Self {
        let mut out = LatentTrack::new(self.state_at(s));
        for (t, state) in self.changes() {
            if t > s && t < s + horizon {
                out.push(t - s, state);
            }
        }
        out
    }
}

/// Rate history of a single site over `[0, horizon)`.
///
/// Segments tile the horizon with no gaps, and consecutive segments always
/// carry distinct rate pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteRateTrack {
    site: i64,
    horizon: f64,
    starts: Vec<f64>,
    rates: Vec<RatePair>,
    latent: Option<LatentTrack>,
}

impl SiteRateTrack {
    pub fn constant(site: i64, horizon: f64, rates: RatePair) -> Self {
        TrackBuilder::new(site, rates).finish(horizon)
    }

    pub fn site(&self) -> i64 {
        self.site
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segment_count(&self) -> usize {
        self.starts.len()
    }

    pub fn latent(&self) -> Option<&LatentTrack> {
        self.latent.as_ref()
    }

    pub fn segment(&self, idx: usize) -> RateSegment {
        let t_end = self.starts.get(idx + 1).copied().unwrap_or(self.horizon);
        let r = self.rates[idx];
        RateSegment {
            t_start: self.starts[idx],
            t_end,
            rate_plus: r.plus,
            rate_minus: r.minus,
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = RateSegment> + '_ {
        (0..self.starts.len()).map(|k| self.segment(k))
    }

    /// Index of the segment with `t_start <= t < t_end`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t).max(1) - 1
    }

    pub fn segment_at(&self, t: f64) -> RateSegment {
        self.segment(self.segment_index(t))
    }

    /// Segment boundaries strictly inside `(t0, t1)`.
    pub fn change_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let from = self.starts.partition_point(|&s| s <= t0);
        self.starts[from..]
            .iter()
            .copied()
            .take_while(|&s| s < t1)
            .collect()
    }

    /// `integral of rate_plus over [a, b)` and likewise for `rate_minus`.
    pub fn integrated_rates(&self, a: f64, b: f64) -> RatePair {
        let mut acc = RatePair::new(0.0, 0.0);
        for seg in self.segments() {
            let lo = seg.t_start.max(a);
            let hi = seg.t_end.min(b);
            if hi > lo {
                acc.plus += seg.rate_plus * (hi - lo);
                acc.minus += seg.rate_minus * (hi - lo);
            }
        }
        acc
    }

    /// The track of `site` restricted to `[s, s + horizon)` and re-rooted to time zero.
    fn shifted(&self, site: i64, s: f64, horizon: f64) -> Self {
        let first = self.segment_index(s);
        let mut builder = TrackBuilder::new(site, self.rates[first]);
        for k in first + 1..self.starts.len() {
            let t = self.starts[k];
            if t >= s + horizon {
                break;
            }
            builder.push(t - s, self.rates[k]);
        }
        let mut track = builder.finish(horizon);
        track.latent = self.latent.as_ref().map(|l| l.shifted(s, horizon));
        track
    }

    fn check_tiling(&self) -> Result<()> {
        if self.starts.first() != Some(&0.0) {
            return Err(Error::Model(format!("track of site {} does not start at 0", self.site)));
        }
        for w in self.starts.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Model(format!("track of site {} is not strictly ordered", self.site)));
            }
        }
        if *self.starts.last().unwrap() >= self.horizon {
            return Err(Error::Model(format!("track of site {} overruns the horizon", self.site)));
        }
        Ok(())
    }
}

/// Incremental construction of a [`SiteRateTrack`], merging equal neighbours.
#[derive(Debug)]
pub struct TrackBuilder {
    site: i64,
    starts: Vec<f64>,
    rates: Vec<RatePair>,
    latent: Option<LatentTrack>,
}

impl TrackBuilder {
    pub fn new(site: i64, initial: RatePair) -> Self {
        Self {
            site,
            starts: vec![0.0],
            rates: vec![initial],
            latent: None,
        }
    }

    pub fn with_latent(mut self, initial_state: u32) -> Self {
        self.latent = Some(LatentTrack::new(initial_state));
        self
    }

    /// Rates switch to `rates` at time `t` (strictly after the previous change).
    pub fn push(&mut self, t: f64, rates: RatePair) {
        debug_assert!(t > *self.starts.last().unwrap());
        if *self.rates.last().unwrap() != rates {
            self.starts.push(t);
            self.rates.push(rates);
        }
    }

    pub fn push_state(&mut self, t: f64, state: u32, rates: RatePair) {
        if let Some(l) = self.latent.as_mut() {
            l.push(t, state);
        }
        self.push(t, rates);
    }

    pub fn finish(self, horizon: f64) -> SiteRateTrack {
        SiteRateTrack {
            site: self.site,
            horizon,
            starts: self.starts,
            rates: self.rates,
            latent: self.latent,
        }
    }
}

/// Produces the track of a site on demand. Implementations must be pure
/// functions of the site so that lazy materialisation is order independent.
pub trait TrackGenerator: Send + Sync {
    fn generate(&self, site: i64, horizon: f64) -> SiteRateTrack;
}

#[derive(Clone)]
enum Source {
    Materialized,
    Constant(RatePair),
    Generated(Arc<dyn TrackGenerator>),
}

/// A realised environment on a finite window.
#[derive(Clone)]
pub struct EnvironmentTrajectory {
    window: Window,
    model: String,
    seed: Option<u64>,
    source: Source,
    tracks: Vec<OnceLock<Box<SiteRateTrack>>>,
}

impl fmt::Debug for EnvironmentTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvironmentTrajectory")
            .field("window", &self.window)
            .field("model", &self.model)
            .field("seed", &self.seed)
            .field("materialized", &self.materialized_sites().count())
            .finish()
    }
}

impl EnvironmentTrajectory {
    /// Spatially and temporally constant field.
    pub fn constant(window: Window, rates: RatePair, model: impl Into<String>) -> Result<Self> {
        rates.validate()?;
        Ok(Self::with_source(window, model.into(), None, Source::Constant(rates)))
    }

    /// Field whose tracks are produced lazily by `generator`.
    pub fn generated(
        window: Window,
        model: impl Into<String>,
        seed: Option<u64>,
        generator: Arc<dyn TrackGenerator>,
    ) -> Self {
        Self::with_source(window, model.into(), seed, Source::Generated(generator))
    }

    /// Field from fully built tracks, one per site of the window in order.
    pub fn from_tracks(
        window: Window,
        model: impl Into<String>,
        seed: Option<u64>,
        tracks: Vec<SiteRateTrack>,
    ) -> Result<Self> {
        if tracks.len() != window.site_count() {
            return Err(Error::Model(format!(
                "expected {} tracks, got {}",
                window.site_count(),
                tracks.len()
            )));
        }
        let env = Self::with_source(window, model.into(), seed, Source::Materialized);
        for (x, (cell, track)) in window.sites().zip(env.tracks.iter().zip(tracks)) {
            if track.site != x {
                return Err(Error::Model(format!("track for site {} stored at {x}", track.site)));
            }
            if track.horizon != window.horizon {
                return Err(Error::Model(format!("track of site {x} has a different horizon")));
            }
            track.check_tiling()?;
            for seg in track.segments() {
                seg.rates().validate()?;
            }
            let _ = cell.set(Box::new(track));
        }
        Ok(env)
    }

    fn with_source(window: Window, model: String, seed: Option<u64>, source: Source) -> Self {
        let tracks = (0..window.site_count()).map(|_| OnceLock::new()).collect();
        Self {
            window,
            model,
            seed,
            source,
            tracks,
        }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn model_tag(&self) -> &str {
        &self.model
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The track of site `x`, building it on first access.
    pub fn track(&self, x: i64) -> Result<&SiteRateTrack> {
        if !self.window.contains_site(x) {
            return Err(self.window.violation(x, 0.0));
        }
        let cell = &self.tracks[(x - self.window.x_min) as usize];
        Ok(cell.get_or_init(|| {
            Box::new(match &self.source {
                Source::Constant(r) => SiteRateTrack::constant(x, self.window.horizon, *r),
                Source::Generated(g) => g.generate(x, self.window.horizon),
                Source::Materialized => unreachable!("materialized track missing for site {x}"),
            })
        }))
    }

    /// Sites whose track has been built so far, ascending.
    pub fn materialized_sites(&self) -> impl Iterator<Item = i64> + '_ {
        self.window
            .sites()
            .zip(&self.tracks)
            .filter(|(_, c)| c.get().is_some())
            .map(|(x, _)| x)
    }

    pub fn materialize_all(&self) {
        for x in self.window.sites() {
            let _ = self.track(x);
        }
    }

    fn check(&self, x: i64, t: f64) -> Result<()> {
        if self.window.contains(x, t) {
            Ok(())
        } else {
            Err(self.window.violation(x, t))
        }
    }

    /// Rates in force at `(x, t)`, right-continuous at segment boundaries.
    pub fn rates_at(&self, x: i64, t: f64) -> Result<RatePair> {
        Ok(self.segment_at(x, t)?.rates())
    }

    /// The segment of site `x` containing `t`.
    pub fn segment_at(&self, x: i64, t: f64) -> Result<RateSegment> {
        self.check(x, t)?;
        if let Source::Constant(r) = self.source {
            return Ok(RateSegment {
                t_start: 0.0,
                t_end: self.window.horizon,
                rate_plus: r.plus,
                rate_minus: r.minus,
            });
        }
        Ok(self.track(x)?.segment_at(t))
    }

    /// Latent state at `(x, t)` when the model records one.
    pub fn latent_at(&self, x: i64, t: f64) -> Result<Option<u32>> {
        self.check(x, t)?;
        Ok(self.track(x)?.latent().map(|l| l.state_at(t)))
    }

    /// Times in `(t0, t1)` at which the rates of site `x` change.
    pub fn rate_change_times(&self, x: i64, t0: f64, t1: f64) -> Result<Vec<f64>> {
        if !(0.0 <= t0 && t0 <= t1 && t1 <= self.window.horizon) {
            return Err(self.window.violation(x, if t0 < 0.0 { t0 } else { t1 }));
        }
        if !self.window.contains_site(x) {
            return Err(self.window.violation(x, t0));
        }
        Ok(self.track(x)?.change_times(t0, t1))
    }

    /// Space-time shift: `result(x, t) = self(x + z, t + s)` on the largest
    /// window the shift allows.
    pub fn translate(&self, z: i64, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s < self.window.horizon) {
            return Err(self.window.violation(self.window.x_min + z, s));
        }
        let target = Window {
            x_min: self.window.x_min - z,
            x_max: self.window.x_max - z,
            horizon: self.window.horizon - s,
        };
        self.translate_into(z, s, target)
    }

    /// Space-time shift onto an explicit target window, which must map inside
    /// the current window.
    pub fn translate_into(&self, z: i64, s: f64, target: Window) -> Result<Self> {
        let fits = s >= 0.0
            && self.window.contains_site(target.x_min + z)
            && self.window.contains_site(target.x_max + z)
            && target.horizon + s <= self.window.horizon;
        if !fits {
            return Err(self.window.violation(target.x_max + z, target.horizon + s));
        }
        let mut tracks = Vec::with_capacity(target.site_count());
        for x in target.sites() {
            tracks.push(self.track(x + z)?.shifted(x, s, target.horizon));
        }
        Self::from_tracks(target, self.model.clone(), self.seed, tracks)
    }

    /// The same field on a sub-window.
    pub fn restrict(&self, target: Window) -> Result<Self> {
        self.translate_into(0, 0.0, target)
    }

    /// True when both fields have the same window and identical tracks.
    pub fn same_field(&self, other: &Self) -> bool {
        self.window == other.window
            && self.window.sites().all(|x| match (self.track(x), other.track(x)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            })
    }

    /// Writes every track of the window, one segment per line
    /// (`site t_start t_end rate_plus rate_minus`), followed by latent state
    /// changes as `eta site time state` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let win = self.window;
        writeln!(w, "# rwdre-environment v1")?;
        writeln!(w, "# model {}", self.model)?;
        writeln!(w, "# window {} {} {}", win.x_min, win.x_max, win.horizon)?;
        match self.seed {
            Some(s) => writeln!(w, "# seed {s}")?,
            None => writeln!(w, "# seed none")?,
        }
        for x in win.sites() {
            let track = self.track(x)?;
            for seg in track.segments() {
                writeln!(w, "{x} {} {} {} {}", seg.t_start, seg.t_end, seg.rate_plus, seg.rate_minus)?;
            }
            if let Some(l) = track.latent() {
                for (t, s) in l.changes() {
                    writeln!(w, "eta {x} {t} {s}")?;
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_text(&mut buf)?;
        Ok(String::from_utf8(buf).expect("ascii output"))
    }

    /// Parses the format produced by [`write_text`](Self::write_text).
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut model = String::from("unknown");
        let mut seed = None;
        let mut window = None;
        let mut segs: Vec<(i64, f64, f64, RatePair)> = Vec::new();
        let mut latent: Vec<(i64, f64, u32)> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            let perr = |reason: String| Error::Parse { line: lineno, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields[0] == "#" {
                match fields.get(1).copied() {
                    Some("model") => model = fields[2..].join(" "),
                    Some("seed") => {
                        seed = match fields.get(2).copied() {
                            Some("none") | None => None,
                            Some(v) => Some(v.parse().map_err(|e| perr(format!("seed: {e}")))?),
                        }
                    }
                    Some("window") => {
                        if fields.len() != 5 {
                            return Err(perr("window needs x_min x_max horizon".into()));
                        }
                        let x_min = parse_num(fields[2], lineno)?;
                        let x_max = parse_num(fields[3], lineno)?;
                        let horizon = parse_num(fields[4], lineno)?;
                        window = Some(Window::new(x_min, x_max, horizon)?);
                    }
                    _ => {}
                }
                continue;
            }
            if fields[0] == "eta" {
                if fields.len() != 4 {
                    return Err(perr("expected `eta site time state`".into()));
                }
                latent.push((
                    parse_num(fields[1], lineno)?,
                    parse_num(fields[2], lineno)?,
                    parse_num(fields[3], lineno)?,
                ));
                continue;
            }
            if fields.len() != 5 {
                return Err(perr(format!("expected 5 fields, got {}", fields.len())));
            }
            segs.push((
                parse_num(fields[0], lineno)?,
                parse_num(fields[1], lineno)?,
                parse_num(fields[2], lineno)?,
                RatePair::new(parse_num(fields[3], lineno)?, parse_num(fields[4], lineno)?),
            ));
        }
        let window = window.ok_or(Error::Parse {
            line: 0,
            reason: "missing `# window` header".into(),
        })?;
        let mut builders: Vec<Option<(TrackBuilder, f64)>> = (0..window.site_count()).map(|_| None).collect();
        for (x, t0, t1, rates) in segs {
            if !window.contains_site(x) {
                return Err(window.violation(x, t0));
            }
            let slot = &mut builders[(x - window.x_min) as usize];
            match slot {
                None => {
                    if t0 != 0.0 {
                        return Err(Error::Model(format!("site {x}: first segment starts at {t0}")));
                    }
                    *slot = Some((TrackBuilder::new(x, rates), t1));
                }
                Some((b, end)) => {
                    if t0 != *end {
                        return Err(Error::Model(format!("site {x}: gap or overlap at {t0}")));
                    }
                    b.push(t0, rates);
                    *end = t1;
                }
            }
        }
        let mut latent_tracks: Vec<Option<LatentTrack>> = (0..window.site_count()).map(|_| None).collect();
        for (x, t, s) in latent {
            if !window.contains_site(x) {
                return Err(window.violation(x, t));
            }
            let slot = &mut latent_tracks[(x - window.x_min) as usize];
            match slot {
                None => *slot = Some(LatentTrack::new(s)),
                Some(l) => l.push(t, s),
            }
        }
        let mut tracks = Vec::with_capacity(window.site_count());
        for (x, (slot, lat)) in window.sites().zip(builders.into_iter().zip(latent_tracks)) {
            let (b, end) = slot.ok_or_else(|| Error::Model(format!("site {x} has no track")))?;
            if end != window.horizon {
                return Err(Error::Model(format!("site {x}: track ends at {end}, not at the horizon")));
            }
            let mut track = b.finish(window.horizon);
            track.latent = lat;
            tracks.push(track);
        }
        Self::from_tracks(window, model, seed, tracks)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Parse {
        line,
        reason: format!("`{s}`: {e}"),
    })
}

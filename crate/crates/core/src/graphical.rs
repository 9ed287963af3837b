//! Graphical construction of the walk.
//!
//! Right and left arrows are Poisson point processes on `Z x [0, T]` whose
//! intensity at `(x, t)` is the environment's `rate_plus` / `rate_minus`.
//! A walk moves up in time from its start and is carried across every
//! arrow it meets. All walks driven by the same arrow field form a monotone
//! coalescing coupling.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentTrajectory, Window};
use crate::error::{invalid, Error, Result};
use crate::path::{WalkLimits, WalkPath, WalkStatus};
use crate::rng::{tag, SeedTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    // Declaration order is the tie-break order: right before left.
    Right,
    Left,
}

impl Direction {
    pub fn step(self) -> i64 {
        match self {
            Direction::Right => 1,
            Direction::Left => -1,
        }
    }

    fn letter(self) -> char {
        match self {
            Direction::Right => 'R',
            Direction::Left => 'L',
        }
    }
}

/// A unit arrow from `site` to `site + direction.step()` at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrow {
    pub site: i64,
    pub time: f64,
    pub direction: Direction,
}

/// Arrows of one site sorted by `(time, direction)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SiteArrows {
    times: Vec<f64>,
    directions: Vec<Direction>,
}

impl SiteArrows {
    fn from_unsorted(mut arrows: Vec<(f64, Direction)>) -> Self {
        arrows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (times, directions) = arrows.into_iter().unzip();
        Self { times, directions }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Direction)> + '_ {
        self.times.iter().copied().zip(self.directions.iter().copied())
    }

    /// First arrow strictly after `t`.
    pub fn next_after(&self, t: f64) -> Option<(f64, Direction)> {
        let k = self.times.partition_point(|&s| s <= t);
        (k < self.times.len()).then(|| (self.times[k], self.directions[k]))
    }

    /// Number of arrows of `direction` with time in `(a, b]`.
    pub fn count(&self, direction: Direction, a: f64, b: f64) -> usize {
        let lo = self.times.partition_point(|&s| s <= a);
        let hi = self.times.partition_point(|&s| s <= b);
        self.directions[lo..hi].iter().filter(|&&d| d == direction).count()
    }
}

#[derive(Clone)]
enum FieldSource {
    Explicit,
    Sampled { env: Arc<EnvironmentTrajectory>, seeds: SeedTree },
}

/// Realised left and right arrows on a window. Sampled fields build the
/// arrows of a site the first time a walk touches it; each site and
/// direction has its own random stream, so the result does not depend on
/// which walk asks first.
#[derive(Clone)]
pub struct ArrowField {
    window: Window,
    source: FieldSource,
    sites: Vec<OnceLock<Box<SiteArrows>>>,
}

impl std::fmt::Debug for ArrowField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArrowField")
            .field("window", &self.window)
            .field("materialized_arrows", &self.materialized_count())
            .finish()
    }
}

/// Samples the arrow field of `env`: on every segment of constant rate `r`
/// and length `l` the number of arrows is Poisson(`r l`) and their times are
/// i.i.d. uniform on the segment.
pub fn sample_arrow_field(env: Arc<EnvironmentTrajectory>, seed: u64) -> ArrowField {
    let window = env.window();
    ArrowField {
        window,
        source: FieldSource::Sampled {
            env,
            seeds: SeedTree::new(seed).child(tag::ARROWS),
        },
        sites: empty_cells(window),
    }
}

fn empty_cells(window: Window) -> Vec<OnceLock<Box<SiteArrows>>> {
    (0..window.site_count()).map(|_| OnceLock::new()).collect()
}

fn generate_site(env: &EnvironmentTrajectory, seeds: &SeedTree, x: i64) -> Result<SiteArrows> {
    let track = env.track(x)?;
    let mut arrows = Vec::new();
    for (direction, dir_tag) in [(Direction::Right, tag::RIGHT), (Direction::Left, tag::LEFT)] {
        let mut rng = seeds.child(dir_tag).site_rng(x);
        for seg in track.segments() {
            let rate = match direction {
                Direction::Right => seg.rate_plus,
                Direction::Left => seg.rate_minus,
            };
            let mean = rate * seg.len();
            if mean <= 0.0 {
                continue;
            }
            let n = Poisson::new(mean).expect("finite positive mean").sample(&mut rng) as u64;
            for _ in 0..n {
                // (0, 1] keeps every arrow strictly after the segment start.
                let u = 1.0 - rng.random::<f64>();
                arrows.push((seg.t_start + seg.len() * u, direction));
            }
        }
    }
    Ok(SiteArrows::from_unsorted(arrows))
}

impl ArrowField {
    /// Field holding exactly `arrows`.
    pub fn from_arrows(window: Window, arrows: impl IntoIterator<Item = Arrow>) -> Result<Self> {
        let mut per_site: Vec<Vec<(f64, Direction)>> = vec![Vec::new(); window.site_count()];
        for a in arrows {
            if !window.contains_site(a.site) || !(a.time > 0.0 && a.time <= window.horizon) {
                return Err(window.violation(a.site, a.time));
            }
            per_site[(a.site - window.x_min) as usize].push((a.time, a.direction));
        }
        let sites = empty_cells(window);
        for (cell, arrows) in sites.iter().zip(per_site) {
            let _ = cell.set(Box::new(SiteArrows::from_unsorted(arrows)));
        }
        Ok(Self {
            window,
            source: FieldSource::Explicit,
            sites,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Arrows of site `x`, sampling them on first access.
    pub fn site(&self, x: i64) -> Result<&SiteArrows> {
        if !self.window.contains_site(x) {
            return Err(self.window.violation(x, 0.0));
        }
        let cell = &self.sites[(x - self.window.x_min) as usize];
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        match &self.source {
            FieldSource::Sampled { env, seeds } => {
                let built = generate_site(env, seeds, x)?;
                Ok(cell.get_or_init(|| Box::new(built)))
            }
            FieldSource::Explicit => Ok(cell.get_or_init(Default::default)),
        }
    }

    pub fn arrows_at(&self, x: i64) -> Result<Vec<Arrow>> {
        Ok(self
            .site(x)?
            .iter()
            .map(|(time, direction)| Arrow { site: x, time, direction })
            .collect())
    }

    pub fn materialized_sites(&self) -> impl Iterator<Item = i64> + '_ {
        self.window
            .sites()
            .zip(&self.sites)
            .filter(|(_, c)| c.get().is_some())
            .map(|(x, _)| x)
    }

    /// Arrows sampled so far.
    pub fn materialized_count(&self) -> usize {
        self.sites.iter().filter_map(|c| c.get()).map(|s| s.len()).sum()
    }

    /// Total number of arrows in the window (samples every site).
    pub fn total_count(&self) -> Result<usize> {
        let mut n = 0;
        for x in self.window.sites() {
            n += self.site(x)?.len();
        }
        Ok(n)
    }

    /// Space-time shift: an arrow sits at `(x, t)` in the result iff one
    /// sits at `(x + z, t + s)` here.
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

    pub fn translate_into(&self, z: i64, s: f64, target: Window) -> Result<Self> {
        let fits = s >= 0.0
            && self.window.contains_site(target.x_min + z)
            && self.window.contains_site(target.x_max + z)
            && target.horizon + s <= self.window.horizon;
        if !fits {
            return Err(self.window.violation(target.x_max + z, target.horizon + s));
        }
        let mut arrows = Vec::new();
        for x in target.sites() {
            for (t, d) in self.site(x + z)?.iter() {
                if t > s && t - s <= target.horizon {
                    arrows.push(Arrow {
                        site: x,
                        time: t - s,
                        direction: d,
                    });
                }
            }
        }
        Self::from_arrows(target, arrows)
    }

    pub fn restrict(&self, target: Window) -> Result<Self> {
        self.translate_into(0, 0.0, target)
    }

    /// Same window and the same arrows at every site.
    pub fn same_arrows(&self, other: &Self) -> bool {
        self.window == other.window
            && self.window.sites().all(|x| match (self.site(x), other.site(x)) {
                (Ok(a), Ok(b)) => a == b,
                _ => false,
            })
    }

    /// One `site time R|L` line per arrow, after a window header.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let win = self.window;
        writeln!(w, "# rwdre-arrows v1")?;
        writeln!(w, "# window {} {} {}", win.x_min, win.x_max, win.horizon)?;
        for x in win.sites() {
            for (t, d) in self.site(x)?.iter() {
                writeln!(w, "{x} {t} {}", d.letter())?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_text(&mut buf)?;
        Ok(String::from_utf8(buf).expect("ascii output"))
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut window = None;
        let mut arrows = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let perr = |reason: String| Error::Parse { line: n + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => {}
                ["#", "window", a, b, h] => {
                    let x_min = a.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
                    let x_max = b.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
                    let horizon = h.parse().map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?;
                    window = Some(Window::new(x_min, x_max, horizon)?);
                }
                ["#", ..] => {}
                [x, t, d] => {
                    let direction = match *d {
                        "R" => Direction::Right,
                        "L" => Direction::Left,
                        other => return Err(perr(format!("unknown direction `{other}`"))),
                    };
                    arrows.push(Arrow {
                        site: x.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
                        time: t.parse().map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?,
                        direction,
                    });
                }
                _ => return Err(perr("expected `site time R|L`".into())),
            }
        }
        let window = window.ok_or(Error::Parse {
            line: 0,
            reason: "missing `# window` header".into(),
        })?;
        Self::from_arrows(window, arrows)
    }
}

/// Follows the arrows from `(x0, 0)` up to `limits.horizon`.
pub fn evolve_walk(field: &ArrowField, x0: i64, limits: &WalkLimits) -> Result<WalkPath> {
    limits.validate()?;
    let win = field.window();
    if limits.horizon > win.horizon {
        return Err(invalid("horizon", format!("{} exceeds the field horizon {}", limits.horizon, win.horizon)));
    }
    let (lo, hi) = limits.clamp(win.x_min, win.x_max);
    if !(lo..=hi).contains(&x0) {
        return Err(win.violation(x0, 0.0));
    }
    let mut path = WalkPath::start_at(x0, limits.horizon);
    let (mut x, mut t) = (x0, 0.0);
    while let Some((s, d)) = field.site(x)?.next_after(t) {
        if s > limits.horizon {
            break;
        }
        x += d.step();
        t = s;
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

/// Lower bound on the explosion time carried by a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplosionTime {
    /// The path crossed finitely many arrows up to its horizon.
    Infinite,
    /// Observation stopped at this time without ruling out explosion.
    Censored(f64),
}

pub fn explosion_time(path: &WalkPath) -> ExplosionTime {
    match path.status() {
        WalkStatus::Completed => ExplosionTime::Infinite,
        _ => ExplosionTime::Censored(path.end_time()),
    }
}

/// Two coupled walks met and merged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coalescence {
    pub time: f64,
    pub site: i64,
    /// Start of the walk that jumped onto the other.
    pub absorbed: i64,
    /// Start of the walk that was already there.
    pub survivor: i64,
}

/// Walks from several starts driven by one arrow field.
#[derive(Clone, Debug)]
pub struct CoupledEnsemble {
    starts: Vec<i64>,
    paths: Vec<WalkPath>,
    coalescences: Vec<Coalescence>,
    ordering_violations: u64,
}

impl CoupledEnsemble {
    pub fn starts(&self) -> &[i64] {
        &self.starts
    }

    pub fn paths(&self) -> &[WalkPath] {
        &self.paths
    }

    pub fn path(&self, start: i64) -> Option<&WalkPath> {
        self.starts.binary_search(&start).ok().map(|k| &self.paths[k])
    }

    pub fn coalescences(&self) -> &[Coalescence] {
        &self.coalescences
    }

    /// Ordering violations detected while evolving (always zero for a
    /// genuine shared field).
    pub fn ordering_violations(&self) -> u64 {
        self.ordering_violations
    }
}

struct Class {
    pos: i64,
    t: f64,
    log: Vec<(f64, i64)>,
    crossings: u64,
    active: bool,
    status: WalkStatus,
    end_time: f64,
    absorbed_into: Option<(usize, f64)>,
}

#[derive(PartialEq)]
struct Event {
    time: f64,
    site: i64,
    direction: Direction,
    class: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.site.cmp(&other.site))
            .then(self.direction.cmp(&other.direction))
            .then(self.class.cmp(&other.class))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Evolves walks from every site in `starts` (strictly increasing) on the
/// same field. Events are processed in `(time, site, right-first)` order;
/// a walk that lands on another merges into it and from then on both are
/// advanced as one.
pub fn evolve_coupled(field: &ArrowField, starts: &[i64], limits: &WalkLimits) -> Result<CoupledEnsemble> {
    limits.validate()?;
    if starts.is_empty() {
        return Err(invalid("starts", "need at least one start"));
    }
    if starts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("starts", "starts must be strictly increasing"));
    }
    let win = field.window();
    if limits.horizon > win.horizon {
        return Err(invalid("horizon", format!("{} exceeds the field horizon {}", limits.horizon, win.horizon)));
    }
    let (lo, hi) = limits.clamp(win.x_min, win.x_max);
    if let Some(&x) = starts.iter().find(|&&x| !(lo..=hi).contains(&x)) {
        return Err(win.violation(x, 0.0));
    }

    let horizon = limits.horizon;
    let mut classes: Vec<Class> = starts
        .iter()
        .map(|&x| Class {
            pos: x,
            t: 0.0,
            log: vec![(0.0, x)],
            crossings: 0,
            active: true,
            status: WalkStatus::Completed,
            end_time: horizon,
            absorbed_into: None,
        })
        .collect();
    // Active classes sorted by position (equivalently by start).
    let mut order: Vec<usize> = (0..starts.len()).collect();
    let mut heap = BinaryHeap::new();
    let schedule = |heap: &mut BinaryHeap<Reverse<Event>>, c: usize, class: &Class| -> Result<()> {
        if let Some((time, direction)) = field.site(class.pos)?.next_after(class.t) {
            if time <= horizon {
                heap.push(Reverse(Event {
                    time,
                    site: class.pos,
                    direction,
                    class: c,
                }));
            }
        }
        Ok(())
    };
    for (c, class) in classes.iter().enumerate() {
        schedule(&mut heap, c, class)?;
    }

    let mut coalescences = Vec::new();
    let mut ordering_violations = 0;
    while let Some(Reverse(ev)) = heap.pop() {
        let c = ev.class;
        if !classes[c].active || classes[c].pos != ev.site || ev.time <= classes[c].t {
            continue;
        }
        let idx = order
            .binary_search_by(|&k| classes[k].pos.cmp(&ev.site))
            .expect("active class is in the order");
        let new_pos = ev.site + ev.direction.step();
        {
            let class = &mut classes[c];
            class.pos = new_pos;
            class.t = ev.time;
            class.log.push((ev.time, new_pos));
            class.crossings += 1;
        }
        if !(lo..=hi).contains(&new_pos) {
            halt(&mut classes[c], WalkStatus::WindowViolation, ev.time);
            order.remove(idx);
            continue;
        }
        let neighbour = match ev.direction {
            Direction::Right => order.get(idx + 1).copied(),
            Direction::Left => idx.checked_sub(1).map(|k| order[k]),
        };
        let mut absorbed_by = None;
        if let Some(nb) = neighbour {
            let gap = (classes[nb].pos - new_pos) * ev.direction.step();
            match gap.cmp(&0) {
                Ordering::Equal => absorbed_by = Some(nb),
                Ordering::Less => ordering_violations += 1,
                Ordering::Greater => {}
            }
        }
        if let Some(s) = absorbed_by {
            let crossings = classes[c].crossings;
            {
                let class = &mut classes[c];
                class.active = false;
                class.absorbed_into = Some((s, ev.time));
            }
            classes[s].crossings = classes[s].crossings.max(crossings);
            coalescences.push(Coalescence {
                time: ev.time,
                site: new_pos,
                absorbed: starts[c],
                survivor: starts[s],
            });
            order.remove(idx);
            if classes[s].crossings >= limits.jump_cap {
                let t = classes[s].t;
                halt(&mut classes[s], WalkStatus::ExplodedCap, t);
                order.retain(|&k| k != s);
            }
            continue;
        }
        if classes[c].crossings >= limits.jump_cap {
            halt(&mut classes[c], WalkStatus::ExplodedCap, ev.time);
            order.remove(idx);
            continue;
        }
        schedule(&mut heap, c, &classes[c])?;
    }

    let paths = (0..starts.len()).map(|i| assemble_path(&classes, i, starts[i], horizon)).collect();
    Ok(CoupledEnsemble {
        starts: starts.to_vec(),
        paths,
        coalescences,
        ordering_violations,
    })
}

fn halt(class: &mut Class, status: WalkStatus, t: f64) {
    class.active = false;
    class.status = status;
    class.end_time = t;
}

fn assemble_path(classes: &[Class], first: usize, start: i64, horizon: f64) -> WalkPath {
    let mut path = WalkPath::start_at(start, horizon);
    let mut c = first;
    let mut after = f64::NEG_INFINITY;
    loop {
        for &(t, x) in &classes[c].log[1..] {
            if t > after {
                path.push(t, x);
            }
        }
        match classes[c].absorbed_into {
            Some((s, t)) => {
                after = t;
                c = s;
            }
            None => {
                if classes[c].status != WalkStatus::Completed {
                    path.stop(classes[c].status);
                }
                return path;
            }
        }
    }
}

/// Result of checking a family of paths against the monotone coupling
/// properties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingCheck {
    pub pairs: u64,
    pub events: u64,
    /// Times at which a lower-started path sat strictly above a higher one.
    pub ordering_violations: u64,
    /// Times at which two paths differed after having met.
    pub permanence_violations: u64,
}

impl CouplingCheck {
    pub fn passed(&self) -> bool {
        self.ordering_violations == 0 && self.permanence_violations == 0
    }
}

/// Checks ordering and coalescence permanence for paths sorted by start,
/// at every jump time of each adjacent pair, up to the first abnormal end.
pub fn check_monotone_coupling(paths: &[WalkPath]) -> CouplingCheck {
    let mut sorted: Vec<&WalkPath> = paths.iter().collect();
    sorted.sort_by_key(|p| p.start());
    let mut check = CouplingCheck::default();
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        check.pairs += 1;
        let limit = [a, b]
            .iter()
            .filter(|p| p.status() != WalkStatus::Completed)
            .map(|p| p.end_time())
            .fold(f64::INFINITY, f64::min);
        let (ta, tb) = (a.times(), b.times());
        let (mut i, mut j) = (0, 0);
        let mut met = false;
        loop {
            // Advance to the next event time shared by the union of jump times.
            let t = match (ta.get(i + 1), tb.get(j + 1)) {
                (None, None) => break,
                (Some(&x), None) => x,
                (None, Some(&y)) => y,
                (Some(&x), Some(&y)) => x.min(y),
            };
            if t >= limit {
                break;
            }
            while ta.get(i + 1) == Some(&t) {
                i += 1;
            }
            while tb.get(j + 1) == Some(&t) {
                j += 1;
            }
            let (xa, xb) = (a.positions()[i], b.positions()[j]);
            check.events += 1;
            if xa > xb {
                check.ordering_violations += 1;
            }
            if met && xa != xb {
                check.permanence_violations += 1;
            }
            met |= xa == xb;
        }
        if a.start() > b.start() || (a.start() == b.start() && a.positions() != b.positions()) {
            check.ordering_violations += 1;
        }
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RatePair;

    fn arrow(site: i64, time: f64, direction: Direction) -> Arrow {
        Arrow { site, time, direction }
    }

    #[test]
    fn empty_field_keeps_walk_still() {
        let field = ArrowField::from_arrows(Window::centered(5, 10.0).unwrap(), []).unwrap();
        let path = evolve_walk(&field, 2, &WalkLimits::new(10.0)).unwrap();
        assert_eq!(path.positions(), &[2]);
        assert_eq!(path.arrows_crossed(), 0);
        assert_eq!(path.status(), WalkStatus::Completed);
    }

    #[test]
    fn single_arrow_single_jump() {
        let field =
            ArrowField::from_arrows(Window::centered(5, 10.0).unwrap(), [arrow(0, 1.0, Direction::Right)]).unwrap();
        let path = evolve_walk(&field, 0, &WalkLimits::new(10.0)).unwrap();
        assert_eq!(path.times(), &[0.0, 1.0]);
        assert_eq!(path.positions(), &[0, 1]);
    }

    #[test]
    fn arrows_after_horizon_are_ignored() {
        let field =
            ArrowField::from_arrows(Window::centered(5, 10.0).unwrap(), [arrow(0, 6.0, Direction::Left)]).unwrap();
        let path = evolve_walk(&field, 0, &WalkLimits::new(5.0)).unwrap();
        assert_eq!(path.final_position(), 0);
        let path = evolve_walk(&field, 0, &WalkLimits::new(6.0)).unwrap();
        assert_eq!(path.final_position(), -1);
    }

    #[test]
    fn jump_cap_reports_explosion() {
        let arrows = (1..=10).map(|k| arrow(0, k as f64 * 0.2, if k % 2 == 1 { Direction::Right } else { Direction::Left }));
        let arrows: Vec<Arrow> = arrows
            .enumerate()
            .map(|(k, mut a)| {
                a.site = if k % 2 == 0 { 0 } else { 1 };
                a
            })
            .collect();
        let field = ArrowField::from_arrows(Window::centered(5, 10.0).unwrap(), arrows).unwrap();
        let path = evolve_walk(&field, 0, &WalkLimits::new(10.0).with_jump_cap(5)).unwrap();
        assert_eq!(path.status(), WalkStatus::ExplodedCap);
        assert_eq!(path.arrows_crossed(), 5);
        assert_eq!(explosion_time(&path), ExplosionTime::Censored(1.0));
        let path = evolve_walk(&field, 0, &WalkLimits::new(10.0)).unwrap();
        assert_eq!(explosion_time(&path), ExplosionTime::Infinite);
    }

    #[test]
    fn leaving_safe_range_is_flagged() {
        let field = ArrowField::from_arrows(
            Window::centered(5, 10.0).unwrap(),
            [arrow(0, 1.0, Direction::Right), arrow(1, 2.0, Direction::Right)],
        )
        .unwrap();
        let limits = WalkLimits::new(10.0).with_safe_range(Some((-1, 1)));
        let path = evolve_walk(&field, 0, &limits).unwrap();
        assert_eq!(path.status(), WalkStatus::WindowViolation);
        assert_eq!(path.final_position(), 2);
        assert_eq!(path.end_time(), 2.0);
        assert!(evolve_walk(&field, 6, &WalkLimits::new(1.0)).is_err());
    }

    #[test]
    fn translate_field_definition() {
        let w = Window::centered(5, 10.0).unwrap();
        let field = ArrowField::from_arrows(w, [arrow(3, 2.0, Direction::Left)]).unwrap();
        let moved = field.translate(3, 1.0).unwrap();
        assert_eq!(moved.arrows_at(0).unwrap(), vec![arrow(0, 1.0, Direction::Left)]);
        assert!(field.translate(0, 0.0).unwrap().same_arrows(&field));
    }

    #[test]
    fn translate_field_composes() {
        let env = Arc::new(EnvironmentTrajectory::constant(Window::centered(8, 10.0).unwrap(), RatePair::new(1.0, 2.0), "c").unwrap());
        let field = sample_arrow_field(env, 4);
        let twice = field.translate(1, 0.5).unwrap().translate(1, 0.5).unwrap();
        let once = field.translate(2, 1.0).unwrap();
        assert!(twice.same_arrows(&once));
        assert!(field.translate(0, 12.0).is_err());
    }

    #[test]
    fn zero_rate_segment_has_no_arrows() {
        let env = Arc::new(EnvironmentTrajectory::constant(Window::centered(3, 50.0).unwrap(), RatePair::new(0.0, 1.0), "c").unwrap());
        let field = sample_arrow_field(env, 1);
        for x in -3..=3 {
            let s = field.site(x).unwrap();
            assert_eq!(s.count(Direction::Right, 0.0, 50.0), 0);
            assert!(s.count(Direction::Left, 0.0, 50.0) > 0);
        }
    }

    #[test]
    fn sampled_field_is_order_independent() {
        let env = Arc::new(EnvironmentTrajectory::constant(Window::centered(10, 5.0).unwrap(), RatePair::new(1.0, 1.0), "c").unwrap());
        let a = sample_arrow_field(env.clone(), 9);
        let b = sample_arrow_field(env, 9);
        let _ = a.site(5).unwrap();
        for x in (-10..=10).rev() {
            assert_eq!(a.site(x).unwrap(), b.site(x).unwrap());
        }
    }

    #[test]
    fn coupled_singleton_matches_single_walk() {
        let env = Arc::new(EnvironmentTrajectory::constant(Window::centered(60, 20.0).unwrap(), RatePair::new(1.0, 1.0), "c").unwrap());
        let field = sample_arrow_field(env, 2);
        let limits = WalkLimits::new(20.0);
        let single = evolve_walk(&field, 0, &limits).unwrap();
        let ens = evolve_coupled(&field, &[0], &limits).unwrap();
        assert_eq!(ens.paths()[0], single);
    }

    #[test]
    fn coupled_paths_equal_individual_paths() {
        let env = Arc::new(EnvironmentTrajectory::constant(Window::centered(80, 30.0).unwrap(), RatePair::new(1.0, 1.5), "c").unwrap());
        let field = sample_arrow_field(env, 5);
        let limits = WalkLimits::new(30.0);
        let starts = [-6, -2, 0, 1, 7];
        let ens = evolve_coupled(&field, &starts, &limits).unwrap();
        for (k, &x) in starts.iter().enumerate() {
            assert_eq!(ens.paths()[k], evolve_walk(&field, x, &limits).unwrap());
        }
        assert!(check_monotone_coupling(ens.paths()).passed());
        assert_eq!(ens.ordering_violations(), 0);
    }

    #[test]
    fn coupled_requires_increasing_starts() {
        let field = ArrowField::from_arrows(Window::centered(5, 10.0).unwrap(), []).unwrap();
        assert!(evolve_coupled(&field, &[1, 1], &WalkLimits::new(1.0)).is_err());
        assert!(evolve_coupled(&field, &[2, 1], &WalkLimits::new(1.0)).is_err());
    }

    #[test]
    fn checker_flags_crossing_paths() {
        let a = WalkPath::from_jumps(0, &[(1.0, 1), (2.0, 2)], 3.0, WalkStatus::Completed).unwrap();
        let b = WalkPath::from_jumps(1, &[(1.5, 0)], 3.0, WalkStatus::Completed).unwrap();
        let check = check_monotone_coupling(&[a, b]);
        assert!(check.ordering_violations > 0);
        assert!(check.permanence_violations > 0);
    }

    #[test]
    fn arrow_text_round_trip() {
        let w = Window::new(-2, 2, 4.0).unwrap();
        let field = ArrowField::from_arrows(
            w,
            [arrow(-2, 0.5, Direction::Right), arrow(1, 3.25, Direction::Left), arrow(1, 1.0, Direction::Right)],
        )
        .unwrap();
        let back = ArrowField::read_text(field.to_text().unwrap().as_bytes()).unwrap();
        assert!(back.same_arrows(&field));
        assert!(ArrowField::read_text("# window 0 1 2\n0 1.0 X\n".as_bytes()).is_err());
        assert!(ArrowField::read_text("# window 0 1 2\n5 1.0 R\n".as_bytes()).is_err());
    }
}

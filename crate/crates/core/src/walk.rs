//! Direct quenched simulation and hitting-time functionals of paths.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentTrajectory;
use crate::error::{invalid, Error, Result};
use crate::path::{WalkLimits, WalkPath, WalkStatus};
use crate::rng::{tag, SeedTree};

/// Simulates the walk in a fixed environment by competing exponential
/// clocks. Between rate changes at the current site the holding time is
/// exponential with the total rate; when a change comes first the clock is
/// simply redrawn at the change time.
pub fn simulate_quenched(env: &EnvironmentTrajectory, x0: i64, limits: &WalkLimits, seed: u64) -> Result<WalkPath> {
    limits.validate()?;
    let win = env.window();
    if limits.horizon > win.horizon {
        return Err(invalid("horizon", format!("{} exceeds the environment horizon {}", limits.horizon, win.horizon)));
    }
    let (lo, hi) = limits.clamp(win.x_min, win.x_max);
    if !(lo..=hi).contains(&x0) {
        return Err(win.violation(x0, 0.0));
    }
    let mut rng = SeedTree::new(seed).child(tag::QUENCHED).stream(0);
    let horizon = limits.horizon;
    let mut path = WalkPath::start_at(x0, horizon);
    let (mut x, mut t) = (x0, 0.0);
    while t < horizon {
        let seg = env.segment_at(x, t)?;
        let until = seg.t_end.min(horizon);
        let total = seg.rate_plus + seg.rate_minus;
        if total > 0.0 {
            let hold: f64 = Exp1.sample(&mut rng);
            let s = t + hold / total;
            if s < until {
                let right = rng.random::<f64>() * total < seg.rate_plus;
                x += if right { 1 } else { -1 };
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
                continue;
            }
        }
        t = until;
    }
    Ok(path)
}

/// A time functional observed on a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum HitTime {
    Finite(f64),
    /// Not observed before the path ended; the value is at least this much.
    Censored(f64),
    /// Infinite by definition (a shift by an infinite time).
    Infinite,
}

impl HitTime {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            HitTime::Finite(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, HitTime::Finite(_))
    }

    /// True when the time is known to be at most `t`.
    pub fn within(&self, t: f64) -> bool {
        self.finite().is_some_and(|s| s <= t)
    }

    fn plus(self, base: f64) -> Self {
        match self {
            HitTime::Finite(t) => HitTime::Finite(t + base),
            HitTime::Censored(t) => HitTime::Censored(t + base),
            HitTime::Infinite => HitTime::Infinite,
        }
    }
}

impl fmt::Display for HitTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HitTime::Finite(t) => write!(f, "finite {t}"),
            HitTime::Censored(t) => write!(f, "censored {t}"),
            HitTime::Infinite => write!(f, "infinite"),
        }
    }
}

impl FromStr for HitTime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut it = s.split_whitespace();
        let value = |v: Option<&str>| -> std::result::Result<f64, String> {
            v.ok_or("missing time")?.parse().map_err(|e: std::num::ParseFloatError| e.to_string())
        };
        let out = match it.next() {
            Some("finite") => HitTime::Finite(value(it.next())?),
            Some("censored") => HitTime::Censored(value(it.next())?),
            Some("infinite") => HitTime::Infinite,
            other => return Err(format!("unknown time kind {other:?}")),
        };
        match it.next() {
            None => Ok(out),
            Some(extra) => Err(format!("trailing `{extra}`")),
        }
    }
}

/// A set of lattice sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SiteSet {
    Points(Vec<i64>),
    /// `[lo, hi]`.
    Interval(i64, i64),
    /// Complement of `[lo, hi]`.
    Outside(i64, i64),
}

impl SiteSet {
    pub fn point(x: i64) -> Self {
        SiteSet::Points(vec![x])
    }

    pub fn contains(&self, x: i64) -> bool {
        match self {
            SiteSet::Points(p) => p.contains(&x),
            SiteSet::Interval(lo, hi) => (*lo..=*hi).contains(&x),
            SiteSet::Outside(lo, hi) => !(*lo..=*hi).contains(&x),
        }
    }

    /// `A - z`.
    pub fn shifted(&self, z: i64) -> Self {
        match self {
            SiteSet::Points(p) => SiteSet::Points(p.iter().map(|x| x - z).collect()),
            SiteSet::Interval(lo, hi) => SiteSet::Interval(lo - z, hi - z),
            SiteSet::Outside(lo, hi) => SiteSet::Outside(lo - z, hi - z),
        }
    }
}

impl fmt::Display for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SiteSet::Points(p) => {
                let list: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                write!(f, "points:{}", list.join(","))
            }
            SiteSet::Interval(lo, hi) => write!(f, "interval:{lo}:{hi}"),
            SiteSet::Outside(lo, hi) => write!(f, "outside:{lo}:{hi}"),
        }
    }
}

impl FromStr for SiteSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let int = |v: &str| v.parse::<i64>().map_err(|e| format!("bad site `{v}`: {e}"));
        let bounds = |rest: &str| -> std::result::Result<(i64, i64), String> {
            let (a, b) = rest.split_once(':').ok_or("expected `lo:hi`")?;
            Ok((int(a)?, int(b)?))
        };
        match s.split_once(':') {
            Some(("points", rest)) => Ok(SiteSet::Points(
                rest.split(',').filter(|v| !v.is_empty()).map(int).collect::<std::result::Result<_, _>>()?,
            )),
            Some(("interval", rest)) => bounds(rest).map(|(a, b)| SiteSet::Interval(a, b)),
            Some(("outside", rest)) => bounds(rest).map(|(a, b)| SiteSet::Outside(a, b)),
            _ => Err(format!("unknown site set `{s}`")),
        }
    }
}

impl From<SiteSet> for String {
    fn from(s: SiteSet) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SiteSet {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

// Index of the first jump strictly after `t` whose landing site satisfies `pred`.
fn first_jump_after(path: &WalkPath, t: f64, pred: impl Fn(i64) -> bool) -> Option<usize> {
    let start = path.times().partition_point(|&s| s <= t);
    (start..path.times().len()).find(|&k| pred(path.positions()[k]))
}

/// Absolute time of the first entry into `target` after `s`, exiting first
/// when the path sits in `target` at time `s`.
fn exit_then_enter(path: &WalkPath, s: f64, target: &SiteSet) -> HitTime {
    let censored = HitTime::Censored(path.end_time());
    let x_s = path.positions()[path.index_at(s)];
    let exit = if target.contains(x_s) {
        match first_jump_after(path, s, |x| !target.contains(x)) {
            Some(k) => path.times()[k],
            None => return censored,
        }
    } else {
        s
    };
    match first_jump_after(path, exit, |x| target.contains(x)) {
        Some(k) => HitTime::Finite(path.times()[k]),
        None => censored,
    }
}

/// First time after 0 at which the path is in `target`. A path that starts
/// in `target` must leave it and come back, so the value coincides with the
/// first return time.
pub fn hitting_time(path: &WalkPath, target: &SiteSet) -> HitTime {
    exit_then_enter(path, 0.0, target)
}

/// `inf { t > 0 : X(S + t) in target }`, infinite when `S` is, censored when
/// `S` or the hit lies beyond the observed part of the path.
pub fn shifted_hitting(path: &WalkPath, shift: HitTime, target: &SiteSet) -> HitTime {
    match shift {
        HitTime::Infinite => HitTime::Infinite,
        // Nothing is observed after an unobserved shift.
        HitTime::Censored(_) => HitTime::Censored(0.0),
        HitTime::Finite(s) if s > path.end_time() => HitTime::Censored(0.0),
        HitTime::Finite(s) => match exit_then_enter(path, s, target) {
            HitTime::Finite(t) => HitTime::Finite(t - s),
            HitTime::Censored(t) => HitTime::Censored(t - s),
            HitTime::Infinite => HitTime::Infinite,
        },
    }
}

/// Hitting and return times of a path to a site set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub target: SiteSet,
    pub h_time: HitTime,
    /// `returns[k - 1]` is the `k`-th return time.
    pub returns: Vec<HitTime>,
    pub shift_base: Option<HitTime>,
}

/// The first `count` return times: starting from time 0, each one exits
/// `target` (immediately when already outside) and then re-enters it.
pub fn return_times(path: &WalkPath, target: &SiteSet, count: usize) -> Result<HittingRecord> {
    if count == 0 {
        return Err(invalid("count", "need at least one return time"));
    }
    let mut returns = Vec::with_capacity(count);
    let mut current = HitTime::Finite(0.0);
    for _ in 0..count {
        current = match current {
            HitTime::Finite(t) => exit_then_enter(path, t, target),
            other => other,
        };
        returns.push(current);
    }
    Ok(HittingRecord {
        target: target.clone(),
        h_time: hitting_time(path, target),
        returns,
        shift_base: None,
    })
}

impl HittingRecord {
    /// Record of the shifted functionals: hitting time after `shift` and the
    /// return times of the path re-rooted at `shift`, expressed in absolute
    /// time.
    pub fn shifted(path: &WalkPath, shift: HitTime, target: &SiteSet, count: usize) -> Result<Self> {
        let h_time = shifted_hitting(path, shift, target);
        let returns = match shift {
            HitTime::Finite(s) if s <= path.end_time() => {
                let rerooted = path.reroot(s).expect("shift inside the path");
                let x_s = path.position_at(s).expect("shift inside the path");
                return_times(&rerooted, &target.shifted(x_s), count)?
                    .returns
                    .into_iter()
                    .map(|r| r.plus(s))
                    .collect()
            }
            other => vec![other; count],
        };
        Ok(Self {
            target: target.clone(),
            h_time,
            returns,
            shift_base: Some(shift),
        })
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# hitting target={}", self.target)?;
        match self.shift_base {
            Some(s) => writeln!(w, "shift {s}")?,
            None => writeln!(w, "shift none")?,
        }
        writeln!(w, "hit {}", self.h_time)?;
        for (k, r) in self.returns.iter().enumerate() {
            writeln!(w, "return {} {r}", k + 1)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut target = None;
        let mut shift_base = None;
        let mut h_time = None;
        let mut returns = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let perr = |reason: String| Error::Parse { line: n + 1, reason };
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# hitting target=") {
                target = Some(rest.parse::<SiteSet>().map_err(perr)?);
            } else if let Some(rest) = line.strip_prefix("shift ") {
                if rest != "none" {
                    shift_base = Some(rest.parse::<HitTime>().map_err(perr)?);
                }
            } else if let Some(rest) = line.strip_prefix("hit ") {
                h_time = Some(rest.parse::<HitTime>().map_err(perr)?);
            } else if let Some(rest) = line.strip_prefix("return ") {
                let (k, value) = rest.split_once(' ').ok_or_else(|| perr("expected `return k time`".into()))?;
                if k.parse::<usize>().ok() != Some(returns.len() + 1) {
                    return Err(perr(format!("return index {k} out of order")));
                }
                returns.push(value.parse::<HitTime>().map_err(perr)?);
            } else if !line.is_empty() {
                return Err(perr(format!("unexpected line `{line}`")));
            }
        }
        match (target, h_time) {
            (Some(target), Some(h_time)) => Ok(Self {
                target,
                h_time,
                returns,
                shift_base,
            }),
            _ => Err(Error::Parse {
                line: 0,
                reason: "missing target or hit line".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RatePair, Window};

    fn path(start: i64, jumps: &[(f64, i64)], horizon: f64) -> WalkPath {
        WalkPath::from_jumps(start, jumps, horizon, WalkStatus::Completed).unwrap()
    }

    #[test]
    fn hitting_examples() {
        let still = path(0, &[], 10.0);
        assert_eq!(hitting_time(&still, &SiteSet::point(0)), HitTime::Censored(10.0));
        let up = path(0, &[(2.0, 1)], 10.0);
        assert_eq!(hitting_time(&up, &SiteSet::point(1)), HitTime::Finite(2.0));
        let back = path(0, &[(1.0, 1), (2.0, 0)], 10.0);
        assert_eq!(hitting_time(&back, &SiteSet::point(-1)), HitTime::Censored(10.0));
        assert_eq!(hitting_time(&back, &SiteSet::point(0)), HitTime::Finite(2.0));
    }

    #[test]
    fn shifted_hitting_examples() {
        let p = path(0, &[(1.0, 1), (2.0, 0), (3.0, -1)], 10.0);
        let a = SiteSet::point(-1);
        assert_eq!(shifted_hitting(&p, HitTime::Infinite, &a), HitTime::Infinite);
        assert_eq!(shifted_hitting(&p, HitTime::Finite(0.0), &a), hitting_time(&p, &a));
        assert_eq!(shifted_hitting(&p, HitTime::Finite(1.5), &a), HitTime::Finite(1.5));
    }

    #[test]
    fn return_time_examples() {
        let p = path(0, &[(1.0, 1), (2.0, 0), (3.0, 1)], 10.0);
        let rec = return_times(&p, &SiteSet::point(1), 2).unwrap();
        assert_eq!(rec.returns, vec![HitTime::Finite(1.0), HitTime::Finite(3.0)]);
        assert_eq!(rec.returns[0], rec.h_time);
        let rec = return_times(&p, &SiteSet::point(5), 3).unwrap();
        assert!(rec.returns.iter().all(|r| *r == HitTime::Censored(10.0)));
        assert!(return_times(&p, &SiteSet::point(1), 0).is_err());
    }

    #[test]
    fn return_times_from_inside() {
        let p = path(0, &[(1.0, 1), (2.0, 0), (3.0, -1), (4.0, 0)], 10.0);
        let rec = return_times(&p, &SiteSet::point(0), 3).unwrap();
        assert_eq!(rec.returns, vec![HitTime::Finite(2.0), HitTime::Finite(4.0), HitTime::Censored(10.0)]);
    }

    #[test]
    fn record_text_round_trip() {
        let p = path(0, &[(1.0, 1), (2.0, 0), (3.0, 1)], 10.0);
        let rec = HittingRecord::shifted(&p, HitTime::Finite(0.5), &SiteSet::Interval(1, 2), 3).unwrap();
        let back = HittingRecord::read_text(rec.to_text().as_bytes()).unwrap();
        assert_eq!(back, rec);
        assert_eq!("outside:-5:5".parse::<SiteSet>().unwrap(), SiteSet::Outside(-5, 5));
        assert!("finite x".parse::<HitTime>().is_err());
    }

    #[test]
    fn zero_rates_freeze_the_walk() {
        let env = EnvironmentTrajectory::constant(Window::centered(3, 5.0).unwrap(), RatePair::new(0.0, 0.0), "c").unwrap();
        let p = simulate_quenched(&env, 0, &WalkLimits::new(5.0), 1).unwrap();
        assert_eq!(p.arrows_crossed(), 0);
        assert_eq!(p.status(), WalkStatus::Completed);
    }

    #[test]
    fn pure_right_rates_move_right() {
        let env = EnvironmentTrajectory::constant(Window::centered(200, 20.0).unwrap(), RatePair::new(2.0, 0.0), "c").unwrap();
        let p = simulate_quenched(&env, 0, &WalkLimits::new(20.0), 3).unwrap();
        assert!(p.positions().windows(2).all(|w| w[1] == w[0] + 1));
        assert!(p.final_position() > 10);
    }

    #[test]
    fn quenched_rejects_long_horizon() {
        let env = EnvironmentTrajectory::constant(Window::centered(3, 5.0).unwrap(), RatePair::new(1.0, 1.0), "c").unwrap();
        assert!(simulate_quenched(&env, 0, &WalkLimits::new(6.0), 1).is_err());
        assert!(simulate_quenched(&env, 4, &WalkLimits::new(1.0), 1).is_err());
    }
}

//! Piecewise-constant walk trajectories.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of crossings after which a path is reported as exploding.
pub const DEFAULT_JUMP_CAP: u64 = 10_000_000;

/// How a simulated path ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkStatus {
    /// Reached the horizon.
    Completed,
    /// Crossed `jump_cap` arrows before the horizon.
    ExplodedCap,
    /// Left the safe range of sites.
    WindowViolation,
}

impl WalkStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            WalkStatus::Completed => "completed",
            WalkStatus::ExplodedCap => "exploded_cap",
            WalkStatus::WindowViolation => "window_violation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "completed" => Some(WalkStatus::Completed),
            "exploded_cap" => Some(WalkStatus::ExplodedCap),
            "window_violation" => Some(WalkStatus::WindowViolation),
            _ => None,
        }
    }
}

/// Stopping rules shared by every walk simulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkLimits {
    pub horizon: f64,
    pub jump_cap: u64,
    /// Inclusive range of sites the walk may visit; `None` means the window
    /// of the underlying environment or arrow field.
    pub safe_range: Option<(i64, i64)>,
}

impl WalkLimits {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            jump_cap: DEFAULT_JUMP_CAP,
            safe_range: None,
        }
    }

    pub fn with_jump_cap(mut self, cap: u64) -> Self {
        self.jump_cap = cap;
        self
    }

    pub fn with_safe_range(mut self, range: Option<(i64, i64)>) -> Self {
        self.safe_range = range;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(invalid("horizon", format!("must be finite and nonnegative, got {}", self.horizon)));
        }
        if self.jump_cap == 0 {
            return Err(invalid("jump_cap", "must be at least 1"));
        }
        Ok(())
    }

    /// Safe range intersected with the sites `[x_min, x_max]`.
    pub(crate) fn clamp(&self, x_min: i64, x_max: i64) -> (i64, i64) {
        match self.safe_range {
            Some((lo, hi)) => (lo.max(x_min), hi.min(x_max)),
            None => (x_min, x_max),
        }
    }
}

/// A nearest-neighbour path observed on `[0, end_time]`.
///
/// `positions[k]` is held on `[times[k], times[k + 1])`; `times[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub(crate) times: Vec<f64>,
    pub(crate) positions: Vec<i64>,
    pub(crate) status: WalkStatus,
    pub(crate) end_time: f64,
    pub(crate) horizon: f64,
}

impl WalkPath {
    pub(crate) fn start_at(x0: i64, horizon: f64) -> Self {
        Self {
            times: vec![0.0],
            positions: vec![x0],
            status: WalkStatus::Completed,
            end_time: horizon,
            horizon,
        }
    }

    /// Builds a path from explicit jumps `(time, new_position)`.
    pub fn from_jumps(start: i64, jumps: &[(f64, i64)], horizon: f64, status: WalkStatus) -> Result<Self> {
        let mut path = Self::start_at(start, horizon);
        for &(t, x) in jumps {
            let (last_t, last_x) = (*path.times.last().unwrap(), *path.positions.last().unwrap());
            if !(t > last_t) || t > horizon {
                return Err(invalid("jumps", format!("jump time {t} is not increasing within the horizon")));
            }
            if (x - last_x).abs() != 1 {
                return Err(invalid("jumps", format!("jump {last_x} -> {x} is not nearest-neighbour")));
            }
            path.times.push(t);
            path.positions.push(x);
        }
        path.status = status;
        if status != WalkStatus::Completed {
            path.end_time = *path.times.last().unwrap();
        }
        Ok(path)
    }

    pub(crate) fn push(&mut self, t: f64, x: i64) {
        self.times.push(t);
        self.positions.push(x);
    }

    pub(crate) fn stop(&mut self, status: WalkStatus) {
        self.status = status;
        self.end_time = *self.times.last().unwrap();
    }

    pub fn start(&self) -> i64 {
        self.positions[0]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn status(&self) -> WalkStatus {
        self.status
    }

    /// Time up to which the path is known: the horizon for completed paths,
    /// the last jump otherwise.
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn arrows_crossed(&self) -> u64 {
        (self.positions.len() - 1) as u64
    }

    pub fn final_position(&self) -> i64 {
        *self.positions.last().unwrap()
    }

    /// Index of the last jump at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).max(1) - 1
    }

    /// Position at time `t`, if the path is observed there.
    pub fn position_at(&self, t: f64) -> Option<i64> {
        if t < 0.0 || t > self.end_time {
            return None;
        }
        Some(self.positions[self.index_at(t)])
    }

    pub fn min_position(&self) -> i64 {
        *self.positions.iter().min().unwrap()
    }

    pub fn max_position(&self) -> i64 {
        *self.positions.iter().max().unwrap()
    }

    /// The path seen from `(X_s, s)`: `result(t) = X(s + t) - X(s)`.
    pub fn reroot(&self, s: f64) -> Option<Self> {
        if !(0.0..=self.end_time).contains(&s) {
            return None;
        }
        let k = self.index_at(s);
        let origin = self.positions[k];
        let mut out = Self::start_at(0, self.horizon - s);
        for j in k + 1..self.times.len() {
            out.push(self.times[j] - s, self.positions[j] - origin);
        }
        out.status = self.status;
        out.end_time = self.end_time - s;
        Some(out)
    }

    /// The reflected path `-X`.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.positions.iter_mut().for_each(|x| *x = -*x);
        out
    }

    /// Header line followed by one `time position` line per jump (the first
    /// line is the start at time 0).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# path start={} status={} horizon={} end={} arrows_crossed={}",
            self.start(),
            self.status.as_str(),
            self.horizon,
            self.end_time,
            self.arrows_crossed()
        )?;
        for (t, x) in self.times.iter().zip(&self.positions) {
            writeln!(w, "{t} {x}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut status = None;
        let mut horizon = None;
        let mut points: Vec<(f64, i64)> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let perr = |reason: String| Error::Parse { line: n + 1, reason };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("status", v)) => {
                            status = Some(WalkStatus::parse(v).ok_or_else(|| perr(format!("unknown status `{v}`")))?)
                        }
                        Some(("horizon", v)) => horizon = Some(v.parse::<f64>().map_err(|e| perr(e.to_string()))?),
                        _ => {}
                    }
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(t), Some(x), None) = (it.next(), it.next(), it.next()) else {
                return Err(perr("expected `time position`".into()));
            };
            points.push((
                t.parse().map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?,
                x.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?,
            ));
        }
        let (Some(status), Some(horizon)) = (status, horizon) else {
            return Err(Error::Parse {
                line: 1,
                reason: "missing path header".into(),
            });
        };
        let Some(&(t0, x0)) = points.first() else {
            return Err(Error::Parse {
                line: 2,
                reason: "path has no start".into(),
            });
        };
        if t0 != 0.0 {
            return Err(Error::Parse {
                line: 2,
                reason: "path must start at time 0".into(),
            });
        }
        Self::from_jumps(x0, &points[1..], horizon, status)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_and_reroot() {
        let p = WalkPath::from_jumps(0, &[(1.0, 1), (2.0, 0), (3.0, 1)], 5.0, WalkStatus::Completed).unwrap();
        assert_eq!(p.position_at(0.5), Some(0));
        assert_eq!(p.position_at(1.0), Some(1));
        assert_eq!(p.position_at(5.0), Some(1));
        assert_eq!(p.position_at(5.1), None);
        let r = p.reroot(1.5).unwrap();
        assert_eq!(r.positions(), &[0, -1, 0]);
        assert_eq!(r.times(), &[0.0, 0.5, 1.5]);
        assert_eq!(r.end_time(), 3.5);
    }

    #[test]
    fn rejects_bad_jumps() {
        assert!(WalkPath::from_jumps(0, &[(1.0, 2)], 5.0, WalkStatus::Completed).is_err());
        assert!(WalkPath::from_jumps(0, &[(1.0, 1), (1.0, 2)], 5.0, WalkStatus::Completed).is_err());
        assert!(WalkPath::from_jumps(0, &[(6.0, 1)], 5.0, WalkStatus::Completed).is_err());
    }

    #[test]
    fn abnormal_paths_end_at_last_jump() {
        let p = WalkPath::from_jumps(3, &[(1.0, 4), (2.5, 5)], 10.0, WalkStatus::ExplodedCap).unwrap();
        assert_eq!(p.end_time(), 2.5);
        assert_eq!(p.arrows_crossed(), 2);
    }

    #[test]
    fn text_round_trip() {
        let p = WalkPath::from_jumps(-2, &[(0.125, -1), (2.0, -2), (3.75, -3)], 4.0, WalkStatus::WindowViolation).unwrap();
        let back = WalkPath::read_text(p.to_text().as_bytes()).unwrap();
        assert_eq!(back, p);
    }
}

//! Level traversal schedules.
//!
//! A schedule is a burn-in at level 0 followed by an ordered list of
//! `(level, chunk)` visits. Cyclic schedules repeat a period of levels, taking
//! `k` samples per visit, until fewer than `k` samples of the budget are
//! left. That remainder (less than one chunk) is not drawn.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// All samples of level 0, then level 1, and so on.
    Consecutive,
    /// `0, 1, …, L, L−1, …, 1` repeated, `k` samples per visit.
    VCycle(usize),
    /// Recursive multigrid W ordering repeated, `k` samples per visit.
    WCycle(usize),
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown schedule `{s}` (consecutive|vcycle:k|wcycle:k)"));
        if s == "consecutive" {
            return Ok(Self::Consecutive);
        }
        let (name, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        match name {
            "vcycle" => Ok(Self::VCycle(k)),
            "wcycle" => Ok(Self::WCycle(k)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Consecutive => write!(f, "consecutive"),
            Self::VCycle(k) => write!(f, "vcycle:{k}"),
            Self::WCycle(k) => write!(f, "wcycle:{k}"),
        }
    }
}

impl Serialize for ScheduleKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ScheduleKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleSchedule {
    /// Samples drawn (and discarded) at level 0 before any visit.
    pub burn_in: usize,
    /// Ordered `(level, chunk)` visits after burn-in; chunks are nonzero.
    pub visits: Vec<(usize, usize)>,
    /// Kept samples per level.
    pub totals: Vec<usize>,
    /// Extra samples discarded after each change of level.
    pub level_change_burn: usize,
}

impl SampleSchedule {
    pub fn n_levels(&self) -> usize {
        self.totals.len()
    }

    pub fn kept(&self) -> usize {
        self.totals.iter().sum()
    }

    pub fn with_level_change_burn(mut self, burn: usize) -> Self {
        self.level_change_burn = burn;
        self
    }

    /// Consecutive visits with the given per-level totals (allocation rules).
    pub fn from_totals(totals: Vec<usize>, burn_in: usize) -> Self {
        let visits = totals
            .iter()
            .enumerate()
            .filter(|(_, &h)| h > 0)
            .map(|(l, &h)| (l, h))
            .collect();
        Self {
            burn_in,
            visits,
            totals,
            level_change_burn: 0,
        }
    }

    /// Visits with consecutive same-level entries merged.
    fn from_visits(visits: Vec<(usize, usize)>, levels: usize, burn_in: usize) -> Self {
        let mut totals = vec![0; levels];
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (l, c) in visits {
            if c == 0 {
                continue;
            }
            totals[l] += c;
            match merged.last_mut() {
                Some(last) if last.0 == l => last.1 += c,
                _ => merged.push((l, c)),
            }
        }
        Self {
            burn_in,
            visits: merged,
            totals,
            level_change_burn: 0,
        }
    }
}

/// Level sequence of one V-cycle period.
pub fn v_cycle_period(levels: usize) -> Vec<usize> {
    let finest = levels - 1;
    let mut p: Vec<usize> = (0..=finest).collect();
    p.extend((1..finest).rev());
    p
}

/// Level sequence of one W-cycle period, starting at level 0.
pub fn w_cycle_period(levels: usize) -> Vec<usize> {
    fn cycle(l: usize, out: &mut Vec<usize>) {
        if l == 0 {
            out.push(0);
            return;
        }
        out.push(l);
        cycle(l - 1, out);
        cycle(l - 1, out);
        out.push(l);
    }
    let mut raw = Vec::new();
    cycle(levels - 1, &mut raw);
    raw.dedup();
    if levels > 1 {
        // the closing visit at the finest level is the next period's opening one
        raw.pop();
    }
    let start = raw.iter().position(|&l| l == 0).unwrap();
    raw.rotate_left(start);
    raw
}

/// Builds a schedule for `levels` levels and `h_total` samples, of which the
/// first `burn_in` are drawn at level 0 and discarded.
pub fn make_schedule(
    kind: ScheduleKind,
    levels: usize,
    h_total: usize,
    burn_in: usize,
) -> Result<SampleSchedule> {
    if levels == 0 {
        return Err(Error::Config("a schedule needs at least one level".into()));
    }
    if h_total <= burn_in {
        return Err(Error::Config(format!(
            "total samples {h_total} must exceed burn-in {burn_in}"
        )));
    }
    let h = h_total - burn_in;
    let (period, k) = match kind {
        ScheduleKind::Consecutive => {
            let base = h / levels;
            let extra = h % levels;
            let totals = (0..levels)
                .map(|l| base + usize::from(l < extra))
                .collect();
            return Ok(SampleSchedule::from_totals(totals, burn_in));
        }
        ScheduleKind::VCycle(k) => (v_cycle_period(levels), k),
        ScheduleKind::WCycle(k) => (w_cycle_period(levels), k),
    };
    if k == 0 {
        return Err(Error::Config("cycle chunk size must be at least 1".into()));
    }
    if k > h {
        return Err(Error::Config(format!(
            "chunk size {k} exceeds the {h} samples after burn-in"
        )));
    }
    let visits = period.iter().cycle().take(h / k).map(|&l| (l, k)).collect();
    Ok(SampleSchedule::from_visits(visits, levels, burn_in))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_two_levels() {
        let s = make_schedule(ScheduleKind::Consecutive, 2, 10, 0).unwrap();
        assert_eq!(s.visits, vec![(0, 5), (1, 5)]);
        let s = make_schedule(ScheduleKind::Consecutive, 3, 211, 200).unwrap();
        assert_eq!(s.totals, vec![4, 4, 3]);
        assert_eq!(s.burn_in, 200);
    }

    #[test]
    fn periods() {
        assert_eq!(v_cycle_period(1), vec![0]);
        assert_eq!(v_cycle_period(2), vec![0, 1]);
        assert_eq!(v_cycle_period(3), vec![0, 1, 2, 1]);
        assert_eq!(w_cycle_period(1), vec![0]);
        assert_eq!(w_cycle_period(2), vec![0, 1]);
        assert_eq!(w_cycle_period(3), vec![0, 1, 0, 1, 2, 1]);
    }

    #[test]
    fn table_rows_for_three_levels() {
        let t = |kind| make_schedule(kind, 3, 2200, 200).unwrap().totals;
        assert_eq!(t(ScheduleKind::VCycle(10)), vec![500, 1000, 500]);
        assert_eq!(t(ScheduleKind::VCycle(100)), vec![500, 1000, 500]);
        assert_eq!(t(ScheduleKind::WCycle(3)), vec![666, 999, 333]);
        assert_eq!(t(ScheduleKind::WCycle(10)), vec![670, 1000, 330]);
        assert_eq!(t(ScheduleKind::WCycle(30)), vec![660, 990, 330]);
        assert_eq!(t(ScheduleKind::WCycle(100)), vec![700, 1000, 300]);
    }

    #[test]
    fn partial_chunk_is_dropped() {
        let s = make_schedule(ScheduleKind::VCycle(3), 3, 2000, 0).unwrap();
        assert_eq!(s.totals, vec![501, 999, 498]);
        assert_eq!(s.visits.last(), Some(&(1, 3)));
        assert!(make_schedule(ScheduleKind::VCycle(30), 3, 20, 0).is_err());
    }

    #[test]
    fn visits_sum_to_totals() {
        for kind in [ScheduleKind::VCycle(7), ScheduleKind::WCycle(7), ScheduleKind::Consecutive] {
            for levels in 1..6 {
                let s = make_schedule(kind, levels, 1234, 34).unwrap();
                assert!(s.kept() <= 1200 && s.kept() > 1200 - 7);
                let mut t = vec![0; levels];
                for &(l, c) in &s.visits {
                    t[l] += c;
                }
                assert_eq!(t, s.totals);
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(make_schedule(ScheduleKind::VCycle(0), 3, 10, 0).is_err());
        assert!(make_schedule(ScheduleKind::Consecutive, 0, 10, 0).is_err());
        assert!(make_schedule(ScheduleKind::Consecutive, 2, 10, 10).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["consecutive", "vcycle:10", "wcycle:3"] {
            assert_eq!(s.parse::<ScheduleKind>().unwrap().to_string(), s);
        }
        assert!("vcycle".parse::<ScheduleKind>().is_err());
        assert!("xcycle:3".parse::<ScheduleKind>().is_err());
        assert!("vcycle:x".parse::<ScheduleKind>().is_err());
    }
}

//! Closeness of discontinuous trajectories in the B-topology.
//!
//! Two trajectories are ε-close on a window when they have the same number
//! of events there, matching event times differ by less than ε, and the
//! states differ by less than ε outside ε-collars around all event times.

use serde::{Deserialize, Serialize};

use super::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Window {
    pub fn new(t_lo: f64, t_hi: f64) -> Self {
        Window { t_lo, t_hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BDistance {
    Eps { eps: f64 },
    Incomparable { events_first: usize, events_second: usize },
}

impl BDistance {
    pub fn eps(&self) -> Option<f64> {
        match self {
            BDistance::Eps { eps } => Some(*eps),
            BDistance::Incomparable { .. } => None,
        }
    }
}

const SAMPLES: usize = 4000;

fn event_times(tr: &Trajectory, w: &Window) -> Vec<f64> {
    tr.events.iter().map(|e| e.theta).filter(|&t| t >= w.t_lo && t <= w.t_hi).collect()
}

/// Smallest ε for which `tr2` lies in the ε-neighbourhood of `tr1` on the
/// window. Both trajectories must cover the window.
pub fn b_distance(tr1: &Trajectory, tr2: &Trajectory, window: Window) -> BDistance {
    let th1 = event_times(tr1, &window);
    let th2 = event_times(tr2, &window);
    if th1.len() != th2.len() {
        return BDistance::Incomparable { events_first: th1.len(), events_second: th2.len() };
    }
    let eps_theta = th1.iter().zip(&th2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut times: Vec<f64> = (0..=SAMPLES)
        .map(|k| window.t_lo + (window.t_hi - window.t_lo) * k as f64 / SAMPLES as f64)
        .collect();
    for tr in [tr1, tr2] {
        for arc in &tr.arcs {
            for (t, _) in arc.nodes() {
                if t >= window.t_lo && t <= window.t_hi {
                    times.push(t);
                }
            }
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let all_events: Vec<f64> = th1.iter().chain(&th2).copied().collect();
    let samples: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| {
            let dist_to_event = all_events.iter().map(|e| (t - e).abs()).fold(f64::INFINITY, f64::min);
            let gap = (tr1.state_at(t) - tr2.state_at(t)).norm();
            (dist_to_event, gap)
        })
        .collect();
    // sup of the state gap outside ε-collars; nonincreasing in ε
    let gap = |eps: f64| samples.iter().filter(|(d, _)| *d >= eps).map(|(_, g)| *g).fold(0.0, f64::max);

    if gap(eps_theta) <= eps_theta {
        return BDistance::Eps { eps: eps_theta };
    }
    let mut lo = eps_theta;
    let mut hi = gap(eps_theta);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) <= mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    BDistance::Eps { eps: hi }
}

//! Dormand–Prince 5(4) with Hairer's fourth-order continuous extension.
//!
//! The driver hands every accepted step to a callback, which is where the
//! event logic lives. Steps may run backward in time (`t1 < t0`).

use crate::error::{Error, Result};
use crate::system::StateVec;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Underflow threshold relative to `max(1, |t|)`.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-11, atol: 1e-12, h_max: 0.05, h_min_rel: 1e-14, max_steps: 5_000_000 }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t_from: f64,
    pub t_to: f64,
    rcont: [StateVec; 5],
}

impl DenseStep {
    pub fn lo(&self) -> f64 {
        self.t_from.min(self.t_to)
    }

    pub fn hi(&self) -> f64 {
        self.t_from.max(self.t_to)
    }

    pub fn y_from(&self) -> StateVec {
        self.rcont[0].clone()
    }

    pub fn y_to(&self) -> StateVec {
        &self.rcont[0] + &self.rcont[1]
    }

    /// Interpolated state at the fraction `theta` of the step.
    pub fn eval_theta(&self, theta: f64) -> StateVec {
        let [r1, r2, r3, r4, r5] = &self.rcont;
        let th1 = 1.0 - theta;
        let inner = r4 + r5 * th1;
        let inner = r3 + inner * theta;
        let inner = r2 + inner * th1;
        r1 + inner * theta
    }

    pub fn eval(&self, t: f64) -> StateVec {
        if t == self.t_to {
            return self.y_to();
        }
        self.eval_theta(self.theta_of(t))
    }

    pub fn theta_of(&self, t: f64) -> f64 {
        (t - self.t_from) / (self.t_to - self.t_from)
    }

    pub fn time_of(&self, theta: f64) -> f64 {
        self.t_from + theta * (self.t_to - self.t_from)
    }
}

/// What the per-step callback asks the driver to do next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    Continue,
    Stop,
}

fn error_norm(err: &StateVec, y0: &StateVec, y1: &StateVec, ctl: &StepControl) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = ctl.atol + ctl.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &F, t0: f64, y0: &StateVec, k1: &StateVec, dir: f64, ctl: &StepControl) -> f64
where
    F: Fn(f64, &StateVec) -> StateVec,
{
    let sk = |y: &StateVec| y.map(|v| ctl.atol + ctl.rtol * v.abs());
    let sc = sk(y0);
    let n = y0.len().max(1) as f64;
    let d0 = (y0.component_div(&sc).norm_squared() / n).sqrt();
    let d1 = (k1.component_div(&sc).norm_squared() / n).sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(ctl.h_max);
    let y1 = y0 + k1 * (dir * h);
    let k2 = rhs(t0 + dir * h, &y1);
    let d2 = ((k2 - k1).component_div(&sc).norm_squared() / n).sqrt() / h;
    let der = d1.max(d2);
    let h1 = if der <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der).powf(0.2) };
    (100.0 * h).min(h1).min(ctl.h_max)
}

/// Integrate `y' = rhs(t, y)` from `t0` to `t1`, calling `on_step` after every
/// accepted step. Returns the time reached (`t1` unless the callback stopped).
pub fn integrate<F, C>(rhs: F, t0: f64, y0: &StateVec, t1: f64, ctl: &StepControl, mut on_step: C) -> Result<f64>
where
    F: Fn(f64, &StateVec) -> StateVec,
    C: FnMut(&DenseStep) -> Result<Flow>,
{
    if t1 == t0 {
        return Ok(t0);
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = rhs(t, &y);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "vector field".into(), point: y.iter().copied().collect() });
    }
    let mut h = initial_step(&rhs, t0, &y, &k1, dir, ctl);
    let mut reject = false;
    let mut steps = 0usize;

    loop {
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        let h_min = ctl.h_min_rel * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = dir * (t + dir * h - t1) >= 0.0;
        let hs = if last { t1 - t } else { dir * h };

        let k2 = rhs(t + C2 * hs, &(&y + &k1 * (hs * A21)));
        let k3 = rhs(t + C3 * hs, &(&y + (&k1 * A31 + &k2 * A32) * hs));
        let k4 = rhs(t + C4 * hs, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs));
        let k5 = rhs(t + C5 * hs, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs));
        let k6 = rhs(t + hs, &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs));
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hs;
        let t_new = if last { t1 } else { t + hs };
        let k7 = rhs(t_new, &y_new);

        let finite = y_new.iter().chain(k7.iter()).all(|v| v.is_finite());
        let err_est = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
        let err = if finite { error_norm(&err_est, &y, &y_new, ctl) } else { f64::INFINITY };

        if err <= 1.0 {
            let r2 = &y_new - &y;
            let r3 = &k1 * hs - &r2;
            let r4 = &r2 - &k7 * hs - &r3;
            let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * hs;
            let step = DenseStep { t_from: t, t_to: t_new, rcont: [y.clone(), r2, r3, r4, r5] };
            match on_step(&step)? {
                Flow::Stop => return Ok(t_new),
                Flow::Continue => {}
            }
            if last {
                return Ok(t1);
            }
            let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            let fac = if reject { fac.min(1.0) } else { fac };
            t = t_new;
            y = y_new;
            k1 = k7;
            h = (hs.abs() * fac).min(ctl.h_max);
            reject = false;
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 1.0) } else { 0.1 };
            h = hs.abs() * fac;
            reject = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let y0 = StateVec::from_vec(vec![1.0]);
        let mut last = y0.clone();
        let ctl = StepControl::default();
        integrate(|_, y| -y, 0.0, &y0, 2.0, &ctl, |s| {
            last = s.y_to();
            Ok(Flow::Continue)
        })
        .unwrap();
        assert!((last[0] - (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let y0 = StateVec::from_vec(vec![0.0, 1.0]);
        let ctl = StepControl { h_max: 0.5, ..StepControl::default() };
        let mut worst = 0.0f64;
        integrate(|_, y| StateVec::from_vec(vec![y[1], -y[0]]), 0.0, &y0, 3.0, &ctl, |s| {
            for k in 1..8 {
                let t = s.time_of(k as f64 / 8.0);
                let y = s.eval(t);
                worst = worst.max((y[0] - t.sin()).abs()).max((y[1] - t.cos()).abs());
            }
            Ok(Flow::Continue)
        })
        .unwrap();
        assert!(worst < 1e-9, "dense error {worst}");
    }

    #[test]
    fn backward_integration_retraces() {
        let y0 = StateVec::from_vec(vec![0.3, -0.2]);
        let ctl = StepControl::default();
        let rhs = |_: f64, y: &StateVec| StateVec::from_vec(vec![y[1], -y[0] - 0.1 * y[1]]);
        let mut fwd = y0.clone();
        integrate(rhs, 0.0, &y0, 1.5, &ctl, |s| {
            fwd = s.y_to();
            Ok(Flow::Continue)
        })
        .unwrap();
        let mut back = fwd.clone();
        integrate(rhs, 1.5, &fwd, 0.0, &ctl, |s| {
            assert!(s.t_to < s.t_from);
            back = s.y_to();
            Ok(Flow::Continue)
        })
        .unwrap();
        assert!((back - y0).norm() < 1e-9);
    }
}

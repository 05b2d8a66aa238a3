//! Explicit Runge–Kutta integrators for autonomous-in-form systems
//! `y' = f(t, y)`: classical RK4 with a fixed step, and the Dormand–Prince
//! 5(4) pair with step-size control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State magnitude treated as a blow-up.
pub const BLOW_UP_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepControl {
    /// Uniform step; the last step is shortened so the grid ends at `t_end`.
    Fixed { step: f64 },
    /// Dormand–Prince with mixed error tolerance `rel_tol·|y| + abs_tol`.
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Fixed { step: 1e-3 }
    }
}

impl StepControl {
    pub fn fixed(step: f64) -> Self {
        StepControl::Fixed { step }
    }

    pub fn adaptive(rel_tol: f64) -> Self {
        StepControl::Adaptive {
            rel_tol,
            abs_tol: rel_tol * 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepControl::Fixed { step } => step.is_finite() && step > 0.0,
            StepControl::Adaptive { rel_tol, abs_tol } => {
                rel_tol.is_finite() && rel_tol > 0.0 && abs_tol.is_finite() && abs_tol >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step control {self:?}")))
        }
    }
}

/// Solution samples at the accepted step times, `t_0 = 0` included.
#[derive(Clone, Debug)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn blown_up(y: &[f64]) -> bool {
    y.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_LIMIT)
}

/// Integrates `y' = f(t, y)` from `t = 0` to `t_end`.
pub fn integrate<F>(mut f: F, y0: &[f64], t_end: f64, control: StepControl) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    control.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if blown_up(y0) {
        return Err(Error::BlowUp { last_valid_t: 0.0 });
    }
    match control {
        StepControl::Fixed { step } => rk4(&mut f, y0, t_end, step),
        StepControl::Adaptive { rel_tol, abs_tol } => dopri5(&mut f, y0, t_end, rel_tol, abs_tol),
    }
}

fn rk4<F>(f: &mut F, y0: &[f64], t_end: f64, step: f64) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let steps = ((t_end / step) - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    times.push(0.0);
    states.push(y.clone());
    for i in 0..steps {
        let t = i as f64 * h;
        f(t, &y, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        f(t + h, &tmp, &mut k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if blown_up(&y) {
            return Err(Error::BlowUp { last_valid_t: t });
        }
        times.push(if i + 1 == steps { t_end } else { (i + 1) as f64 * h });
        states.push(y.clone());
    }
    Ok(Solution { times, states })
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri5<F>(f: &mut F, y0: &[f64], t_end: f64, rel_tol: f64, abs_tol: f64) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = (t_end * 1e-2).min(0.1 * rel_tol.powf(0.2));
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    f(t, &y, &mut k[0]);
    let mut rejections = 0usize;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        for s in 1..7 {
            for j in 0..n {
                let mut acc = y[j];
                for (r, a) in A[s].iter().take(s).enumerate() {
                    acc += h * a * k[r][j];
                }
                tmp[j] = acc;
            }
            f(t + C[s] * h, &tmp, &mut k[s]);
        }
        // tmp holds the 5th-order solution (FSAL stage input)
        let mut err = 0.0f64;
        for j in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += h * (B5[s] - B4[s]) * k[s][j];
            }
            let scale = abs_tol + rel_tol * y[j].abs().max(tmp[j].abs());
            let ratio = if scale > 0.0 { e / scale } else { e };
            err = err.max(ratio.abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            rejections += 1;
            if rejections > 200 || h < 1e-14 * t_end {
                return Err(Error::BlowUp { last_valid_t: t });
            }
            continue;
        }
        if err <= 1.0 {
            t = if t_end - (t + h) < 1e-14 * t_end { t_end } else { t + h };
            y.copy_from_slice(&tmp);
            if blown_up(&y) {
                return Err(Error::BlowUp {
                    last_valid_t: *times.last().unwrap(),
                });
            }
            times.push(t);
            states.push(y.clone());
            let last = k[6].clone();
            k[0] = last;
            rejections = 0;
        } else {
            rejections += 1;
            if rejections > 200 {
                return Err(Error::BlowUp { last_valid_t: t });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::BlowUp { last_valid_t: t });
        }
    }
    Ok(Solution { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let err = |h: f64| {
            let sol = integrate(|_, y, d| d[0] = y[0], &[1.0], 1.0, StepControl::fixed(h)).unwrap();
            (sol.states.last().unwrap()[0] - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
    }

    #[test]
    fn fixed_grid_hits_end_exactly() {
        let sol = integrate(|_, _, d| d[0] = 1.0, &[0.0], 1.0, StepControl::fixed(0.3)).unwrap();
        assert_eq!(*sol.times.last().unwrap(), 1.0);
        assert_eq!(sol.times.len(), 5);
        assert!((sol.states.last().unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_matches_oscillator() {
        let sol = integrate(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &[1.0, 0.0],
            3.0,
            StepControl::adaptive(1e-10),
        )
        .unwrap();
        let y = sol.states.last().unwrap();
        assert!((y[0] - 3f64.cos()).abs() < 1e-8);
        assert!((y[1] + 3f64.sin()).abs() < 1e-8);
        assert_eq!(*sol.times.last().unwrap(), 3.0);
    }

    #[test]
    fn blow_up_reports_last_valid_time() {
        // y' = y², y(0) = 1 explodes at t = 1
        let err = integrate(|_, y, d| d[0] = y[0] * y[0], &[1.0], 2.0, StepControl::fixed(1e-3)).unwrap_err();
        match err {
            Error::BlowUp { last_valid_t } => assert!(last_valid_t > 0.9 && last_valid_t < 1.01),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn invalid_controls_are_rejected() {
        assert!(integrate(|_, _, d| d[0] = 0.0, &[0.0], 1.0, StepControl::fixed(0.0)).is_err());
        assert!(integrate(|_, _, d| d[0] = 0.0, &[0.0], -1.0, StepControl::fixed(0.1)).is_err());
    }
}

//! Dormand–Prince 5(4) with FSAL, PI-free step control and hard
//! breakpoints. Steps never cross a sample time or a window edge; inside a
//! window the step is capped so that narrow pulses are resolved.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Tolerances {
    pub fn schrodinger() -> Self {
        Tolerances {
            atol: 1e-10,
            rtol: 1e-8,
        }
    }

    pub fn lindblad() -> Self {
        Tolerances {
            atol: 1e-10,
            rtol: 1e-8,
        }
    }

    /// Same absolute and relative tolerance.
    pub fn uniform(tol: f64) -> Self {
        Tolerances { atol: tol, rtol: tol }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atol > 0.0 && self.rtol >= 0.0 && self.atol.is_finite() && self.rtol.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad tolerances {self:?}")))
        }
    }
}

/// Interval where the step is capped at `max_step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub max_step: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub min_step: f64,
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 50_000_000;

struct Stages {
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    next: Vec<C64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Stages {
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            next: z,
        }
    }
}

/// `tmp = y + h Σ a_j k_j`, in a single pass.
fn combine(tmp: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    let mut s = [0.0; 6];
    let mut k: [&[C64]; 6] = [&[]; 6];
    let mut m = 0;
    for &(a, kv) in terms {
        if a != 0.0 {
            s[m] = h * a;
            k[m] = kv;
            m += 1;
        }
    }
    let (s, k) = (&s[..m], &k[..m]);
    for (i, (t, yv)) in tmp.iter_mut().zip(y).enumerate() {
        let mut acc = *yv;
        for (sj, kj) in s.iter().zip(k) {
            acc += kj[i] * *sj;
        }
        *t = acc;
    }
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1`, invoking `observe(j, t, y)`
/// at each of the sorted `samples` (which must lie in `[t0, t1]`).
pub fn integrate<F, O>(
    mut rhs: F,
    y: &mut [C64],
    t0: f64,
    t1: f64,
    samples: &[f64],
    windows: &[Window],
    tol: Tolerances,
    mut observe: O,
) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    tol.validate()?;
    let n = y.len();
    let mut stats = IntegrationStats {
        min_step: f64::INFINITY,
        ..Default::default()
    };
    let span = t1 - t0;
    let eps = 1e-12 * span.abs().max(1.0);

    let mut stops: Vec<f64> = samples.to_vec();
    for w in windows {
        stops.push(w.start);
        stops.push(w.end);
    }
    stops.push(t1);
    stops.retain(|s| *s > t0 + eps && *s <= t1 + eps);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup_by(|a, b| (*a - *b).abs() <= eps);

    let mut next_sample = 0;
    let mut emit = |t: f64, y: &[C64], next_sample: &mut usize| -> Result<()> {
        while *next_sample < samples.len() && samples[*next_sample] <= t + eps {
            observe(*next_sample, samples[*next_sample], y)?;
            *next_sample += 1;
        }
        Ok(())
    };
    emit(t0, y, &mut next_sample)?;
    if span <= 0.0 || n == 0 {
        emit(f64::INFINITY, y, &mut next_sample)?;
        return Ok(stats);
    }

    let cap_at = |t: f64| -> f64 {
        windows
            .iter()
            .filter(|w| t >= w.start - eps && t < w.end - eps)
            .map(|w| w.max_step)
            .fold(f64::INFINITY, f64::min)
    };

    let mut st = Stages::new(n);
    rhs(t0, y, &mut st.k[0]);
    stats.evaluations += 1;

    let mut t = t0;
    let mut h = {
        let y_norm = rms(y, |_| 1.0);
        let f_norm = rms(&st.k[0], |_| 1.0);
        let guess = if f_norm > 1e-12 {
            0.01 * (y_norm.max(tol.atol) / f_norm)
        } else {
            1e-3 * span
        };
        guess.min(span).max(1e-10 * span)
    };
    let h_floor = 1e-14 * span.abs().max(1.0);

    for &stop in &stops {
        while stop - t > eps {
            if stats.accepted + stats.rejected > MAX_STEPS {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let cap = cap_at(t);
            let mut step = h.min(cap);
            let last = stop - t <= step * 1.0001;
            if last {
                step = stop - t;
            }
            let err = dp_step(&mut rhs, y, t, step, &mut st, tol);
            stats.evaluations += 6;
            if !err.is_finite() {
                if step <= h_floor {
                    return Err(Error::NonFinite { t });
                }
                stats.rejected += 1;
                h = step * MIN_FACTOR;
                continue;
            }
            if err <= 1.0 {
                t = if last { stop } else { t + step };
                y.copy_from_slice(&st.next);
                st.k.swap(0, 6);
                stats.accepted += 1;
                stats.min_step = stats.min_step.min(step);
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // keep the trial step when a breakpoint truncated it
                h = if last { h.max(step * factor) } else { step * factor };
            } else {
                stats.rejected += 1;
                h = step * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                if h < h_floor {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        emit(t, y, &mut next_sample)?;
    }
    emit(f64::INFINITY, y, &mut next_sample)?;
    Ok(stats)
}

fn rms(v: &[C64], scale: impl Fn(usize) -> f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, z)| z.norm_sqr() / scale(i).powi(2))
        .sum();
    (s / v.len() as f64).sqrt()
}

/// One trial step; leaves the 5th-order solution in `st.next` and
/// `f(t+h, next)` in `st.k[6]`. Returns the scaled error norm.
fn dp_step<F>(rhs: &mut F, y: &[C64], t: f64, h: f64, st: &mut Stages, tol: Tolerances) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let [k1, k2, k3, k4, k5, k6, k7] = &mut st.k;
    let tmp = &mut st.tmp;
    combine(tmp, y, h, &[(A21, k1)]);
    rhs(t + C2 * h, tmp, k2);
    combine(tmp, y, h, &[(A31, k1), (A32, k2)]);
    rhs(t + C3 * h, tmp, k3);
    combine(tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
    rhs(t + C4 * h, tmp, k4);
    combine(tmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
    rhs(t + C5 * h, tmp, k5);
    combine(tmp, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
    rhs(t + h, tmp, k6);
    combine(&mut st.next, y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    rhs(t + h, &st.next, k7);

    let mut acc = 0.0;
    for i in 0..y.len() {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = tol.atol + tol.rtol * y[i].norm_sqr().max(st.next[i].norm_sqr()).sqrt();
        acc += e.norm_sqr() / (sc * sc);
    }
    (acc / y.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_phase() {
        // dy/dt = -i ω y
        let w = 3.0;
        let mut y = vec![C64::new(1.0, 0.0)];
        let samples: Vec<f64> = (0..=10).map(|k| k as f64 * 0.2).collect();
        let mut seen = Vec::new();
        let stats = integrate(
            |_, y, dy| dy[0] = C64::new(0.0, -w) * y[0],
            &mut y,
            0.0,
            2.0,
            &samples,
            &[],
            Tolerances::uniform(1e-11),
            |j, t, y| {
                seen.push((j, t, y[0]));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen.len(), samples.len());
        for (j, t, v) in seen {
            assert_eq!(t, samples[j]);
            assert!((v - C64::from_polar(1.0, -w * t)).norm() < 1e-9, "t={t}");
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn window_caps_the_step() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let stats = integrate(
            |_, _, dy| dy[0] = C64::new(0.0, 0.0),
            &mut y,
            0.0,
            1.0,
            &[],
            &[Window {
                start: 0.4,
                end: 0.5,
                max_step: 0.001,
            }],
            Tolerances::schrodinger(),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!(stats.accepted >= 100);
        assert!(stats.min_step <= 0.001 + 1e-15);
    }

    #[test]
    fn narrow_gaussian_kick_is_resolved() {
        // dy/dt = -i A g(t) y with a unit-area gaussian of width 1e-3
        let tau = 1e-3;
        let area = 0.8;
        let g = move |t: f64| {
            area / ((2.0 * std::f64::consts::PI).sqrt() * tau) * (-0.5 * ((t - 0.5) / tau).powi(2)).exp()
        };
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(
            |t, y, dy| dy[0] = C64::new(0.0, -g(t)) * y[0],
            &mut y,
            0.0,
            1.0,
            &[],
            &[Window {
                start: 0.5 - 8.0 * tau,
                end: 0.5 + 8.0 * tau,
                max_step: tau / 20.0,
            }],
            Tolerances::schrodinger(),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y[0] - C64::from_polar(1.0, -area)).norm() < 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0] * y[0].norm(),
            &mut y,
            0.0,
            2.0,
            &[],
            &[],
            Tolerances::schrodinger(),
            |_, _, _| Ok(()),
        );
        assert!(r.is_err());
    }
}

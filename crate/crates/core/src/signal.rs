//! Time-parameterized controls over a horizon [0, T].
//!
//! Values are divergence-free fields. Piecewise-constant signals carry exact
//! breakpoints; sampled signals interpolate linearly; ramped signals are the
//! closed-form C^1 smoothing of a piecewise-constant signal (quintic
//! smoothstep transitions over a fraction rho of each piece). Every variant
//! evaluates exactly at any time and integrates exactly over any interval,
//! which is what lets coarse re-approximations of absorbed controls stay
//! faithful.

use crate::fourier::TrigField;
use serde::{Deserialize, Serialize};

/// Anything that can be evaluated as a field path over [0, horizon].
pub trait TimeField {
    fn horizon(&self) -> f64;
    fn value(&self, t: f64) -> TrigField;
}

/// Piecewise-constant signal: `values[i]` on `[breakpoints[i], breakpoints[i+1])`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcSignal {
    pub breakpoints: Vec<f64>,
    pub values: Vec<TrigField>,
}

impl PcSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<TrigField>) -> Self {
        assert_eq!(breakpoints.len(), values.len() + 1, "one breakpoint per piece boundary");
        assert!(breakpoints.windows(2).all(|w| w[1] > w[0]), "breakpoints must increase");
        PcSignal { breakpoints, values }
    }

    pub fn constant(horizon: f64, value: TrigField) -> Self {
        PcSignal::new(vec![0.0, horizon], vec![value])
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn piece_index(&self, t: f64) -> usize {
        match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.values.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.values.len() - 1),
        }
    }

    pub fn at(&self, t: f64) -> &TrigField {
        &self.values[self.piece_index(t)]
    }

    /// Exact integral over [t0, t1].
    pub fn integral(&self, t0: f64, t1: f64) -> TrigField {
        let mut out = TrigField::zero();
        for i in 0..self.values.len() {
            let lo = self.breakpoints[i].max(t0);
            let hi = self.breakpoints[i + 1].min(t1);
            if hi > lo {
                out = out.add_scaled(&self.values[i], hi - lo);
            }
        }
        out
    }

    pub fn map_values(&self, f: impl Fn(&TrigField) -> TrigField) -> PcSignal {
        PcSignal {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

/// Linearly interpolated samples. `derivs`, when present, are the exact
/// derivative samples; otherwise derivatives come from centered differences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledSignal {
    pub times: Vec<f64>,
    pub values: Vec<TrigField>,
    pub derivs: Option<Vec<TrigField>>,
}

impl SampledSignal {
    pub fn new(times: Vec<f64>, values: Vec<TrigField>) -> Self {
        assert!(times.len() >= 2 && times.len() == values.len());
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        SampledSignal {
            times,
            values,
            derivs: None,
        }
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let i = match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, theta.clamp(0.0, 1.0))
    }

    pub fn at(&self, t: f64) -> TrigField {
        let (i, theta) = self.segment(t);
        self.values[i]
            .scaled(1.0 - theta)
            .add_scaled(&self.values[i + 1], theta)
    }

    /// Derivative samples via centered differences (one-sided at the ends),
    /// producing a signal with identical float values wherever it is evaluated.
    pub fn difference_derivs(&self) -> Vec<TrigField> {
        let n = self.times.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let dt = self.times[hi] - self.times[lo];
            out.push(self.values[hi].sub(&self.values[lo]).scaled(1.0 / dt));
        }
        out
    }
}

/// C^1 smoothing of a piecewise-constant signal: each piece ramps from the
/// previous value to its own over the leading fraction `rho` of the piece;
/// optional ramps from zero at t = 0 and back to zero in the trailing fraction
/// of the last piece.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RampedSignal {
    pub base: PcSignal,
    pub rho: f64,
    pub from_zero: bool,
    pub to_zero: bool,
}

fn smoothstep(theta: f64) -> f64 {
    let t = theta.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn smoothstep_deriv(theta: f64) -> f64 {
    if !(0.0..=1.0).contains(&theta) {
        return 0.0;
    }
    30.0 * theta * theta * (1.0 - theta) * (1.0 - theta)
}

/// Integral of the smoothstep from 0 to theta (clamped).
fn smoothstep_integral(theta: f64) -> f64 {
    let t = theta.clamp(0.0, 1.0);
    let t4 = t * t * t * t;
    let extra = (theta - 1.0).max(0.0);
    t4 * (2.5 - 3.0 * t + t * t) + extra
}

impl RampedSignal {
    pub fn new(base: PcSignal, rho: f64, from_zero: bool, to_zero: bool) -> Self {
        assert!(rho > 0.0 && rho < 0.5);
        RampedSignal {
            base,
            rho,
            from_zero,
            to_zero,
        }
    }

    fn prev_value(&self, i: usize) -> TrigField {
        if i == 0 {
            if self.from_zero {
                TrigField::zero()
            } else {
                self.base.values[0].clone()
            }
        } else {
            self.base.values[i - 1].clone()
        }
    }

    /// Start-of-piece ramp shape value and width for piece i at time t.
    fn ramp_theta(&self, i: usize, t: f64) -> (f64, f64) {
        let lo = self.base.breakpoints[i];
        let width = self.rho * (self.base.breakpoints[i + 1] - lo);
        ((t - lo) / width, width)
    }

    fn tail_window(&self) -> (f64, f64) {
        let n = self.base.values.len();
        let hi = self.base.breakpoints[n];
        let width = self.rho * (hi - self.base.breakpoints[n - 1]);
        (hi - width, width)
    }

    pub fn at(&self, t: f64) -> TrigField {
        let i = self.base.piece_index(t);
        let prev = self.prev_value(i);
        let (theta, _) = self.ramp_theta(i, t);
        let mut v = prev.add_scaled(&self.base.values[i].sub(&prev), smoothstep(theta));
        if self.to_zero {
            let (start, width) = self.tail_window();
            if t >= start {
                let s = smoothstep((t - start) / width);
                v = v.scaled(1.0 - s);
            }
        }
        v
    }

    pub fn deriv(&self, t: f64) -> TrigField {
        let i = self.base.piece_index(t);
        let prev = self.prev_value(i);
        let (theta, width) = self.ramp_theta(i, t);
        let step = self.base.values[i].sub(&prev);
        let mut d = step.scaled(smoothstep_deriv(theta) / width);
        if self.to_zero {
            let (start, twidth) = self.tail_window();
            if t >= start {
                let s = smoothstep((t - start) / twidth);
                let ds = smoothstep_deriv((t - start) / twidth) / twidth;
                // d/dt [ v(t) (1 - s) ] = v'(t)(1 - s) - v(t) s'
                let v = prev.add_scaled(&step, smoothstep(theta));
                d = d.scaled(1.0 - s).add_scaled(&v, -ds);
            }
        }
        d
    }

    /// Exact integral of the ramped signal over [t0, t1] within one piece
    /// without the tail window (helper for `integral`).
    fn piece_integral(&self, i: usize, t0: f64, t1: f64) -> TrigField {
        let prev = self.prev_value(i);
        let step = self.base.values[i].sub(&prev);
        let (theta0, width) = self.ramp_theta(i, t0);
        let (theta1, _) = self.ramp_theta(i, t1);
        let s_int = width * (smoothstep_integral(theta1) - smoothstep_integral(theta0));
        prev.scaled(t1 - t0).add_scaled(&step, s_int)
    }

    pub fn integral(&self, t0: f64, t1: f64) -> TrigField {
        let mut out = TrigField::zero();
        let n = self.base.values.len();
        let tail = if self.to_zero {
            Some(self.tail_window())
        } else {
            None
        };
        for i in 0..n {
            let lo = self.base.breakpoints[i].max(t0);
            let hi = self.base.breakpoints[i + 1].min(t1);
            if hi <= lo {
                continue;
            }
            match tail {
                Some((start, _)) if hi > start => {
                    // Numerically integrate the tail segment; it is one short
                    // smooth window.
                    let a = lo.max(start.min(hi));
                    if a > lo {
                        out = out.add(&self.piece_integral(i, lo, a));
                    }
                    out = out.add(&quad_integral(|t| self.at(t), a, hi));
                }
                _ => {
                    out = out.add(&self.piece_integral(i, lo, hi));
                }
            }
        }
        out
    }
}

/// 5-node Gauss-Legendre quadrature of a field path (exact to degree 9, used
/// only on the short smooth tail window of ramped signals).
fn quad_integral(f: impl Fn(f64) -> TrigField, a: f64, b: f64) -> TrigField {
    const X: [f64; 5] = [
        -0.906179845938664,
        -0.538469310105683,
        0.0,
        0.538469310105683,
        0.906179845938664,
    ];
    const W: [f64; 5] = [
        0.236926885056189,
        0.478628670499366,
        0.568888888888889,
        0.478628670499366,
        0.236926885056189,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = TrigField::zero();
    for (x, w) in X.iter().zip(W) {
        out = out.add_scaled(&f(mid + half * x), w * half);
    }
    out
}

/// A time-parameterized control over [0, T].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ControlSignal {
    Zero { horizon: f64 },
    PiecewiseConstant(PcSignal),
    Sampled(SampledSignal),
    Ramped(RampedSignal),
    /// The time derivative of a ramped signal (the absorbed-shift part of a
    /// synthesized control).
    RampDeriv(RampedSignal),
    Sum(Vec<ControlSignal>),
}

impl ControlSignal {
    pub fn zero(horizon: f64) -> Self {
        ControlSignal::Zero { horizon }
    }

    pub fn constant(horizon: f64, value: TrigField) -> Self {
        ControlSignal::PiecewiseConstant(PcSignal::constant(horizon, value))
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ControlSignal::Zero { horizon } => *horizon,
            ControlSignal::PiecewiseConstant(p) => p.horizon(),
            ControlSignal::Sampled(s) => *s.times.last().unwrap(),
            ControlSignal::Ramped(r) | ControlSignal::RampDeriv(r) => r.base.horizon(),
            ControlSignal::Sum(parts) => parts
                .iter()
                .map(|p| p.horizon())
                .fold(0.0, f64::max),
        }
    }

    pub fn eval(&self, t: f64) -> TrigField {
        match self {
            ControlSignal::Zero { .. } => TrigField::zero(),
            ControlSignal::PiecewiseConstant(p) => p.at(t).clone(),
            ControlSignal::Sampled(s) => s.at(t),
            ControlSignal::Ramped(r) => r.at(t),
            ControlSignal::RampDeriv(r) => r.deriv(t),
            ControlSignal::Sum(parts) => {
                let mut out = TrigField::zero();
                for p in parts {
                    out = out.add(&p.eval(t));
                }
                out
            }
        }
    }

    /// Time derivative as a signal with exactly reproducible float values,
    /// when the variant supports one.
    pub fn derivative(&self) -> Option<ControlSignal> {
        match self {
            ControlSignal::Zero { horizon } => Some(ControlSignal::zero(*horizon)),
            // Constant within pieces; jumps are handled as state jumps by the
            // solver, not as derivative impulses.
            ControlSignal::PiecewiseConstant(p) => Some(ControlSignal::zero(p.horizon())),
            ControlSignal::Sampled(s) => {
                let derivs = s
                    .derivs
                    .clone()
                    .unwrap_or_else(|| s.difference_derivs());
                Some(ControlSignal::Sampled(SampledSignal {
                    times: s.times.clone(),
                    values: derivs,
                    derivs: None,
                }))
            }
            ControlSignal::Ramped(r) => Some(ControlSignal::RampDeriv(r.clone())),
            ControlSignal::RampDeriv(_) => None,
            ControlSignal::Sum(parts) => {
                let d: Option<Vec<_>> = parts.iter().map(|p| p.derivative()).collect();
                d.map(ControlSignal::Sum)
            }
        }
    }

    /// Exact integral over [t0, t1] (trapezoid on sampled signals, which is
    /// exact for the piecewise-linear interpolant).
    pub fn integral(&self, t0: f64, t1: f64) -> TrigField {
        match self {
            ControlSignal::Zero { .. } => TrigField::zero(),
            ControlSignal::PiecewiseConstant(p) => p.integral(t0, t1),
            ControlSignal::Sampled(s) => {
                let mut out = TrigField::zero();
                let mut prev_t = t0;
                let mut prev_v = s.at(t0);
                for (&t, _) in s.times.iter().zip(&s.values) {
                    if t <= t0 || t >= t1 {
                        continue;
                    }
                    let v = s.at(t);
                    out = out.add(&prev_v.add(&v).scaled(0.5 * (t - prev_t)));
                    prev_t = t;
                    prev_v = v;
                }
                let v1 = s.at(t1);
                out.add(&prev_v.add(&v1).scaled(0.5 * (t1 - prev_t)))
            }
            ControlSignal::Ramped(r) => r.integral(t0, t1),
            ControlSignal::RampDeriv(r) => r.at(t1).sub(&r.at(t0)),
            ControlSignal::Sum(parts) => {
                let mut out = TrigField::zero();
                for p in parts {
                    out = out.add(&p.integral(t0, t1));
                }
                out
            }
        }
    }

    /// Piecewise-constant re-approximation on the given grid by exact
    /// per-piece averaging.
    pub fn pc_average(&self, grid: &[f64]) -> PcSignal {
        let mut values = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            values.push(self.integral(w[0], w[1]).scaled(1.0 / (w[1] - w[0])));
        }
        PcSignal::new(grid.to_vec(), values)
    }

    /// All times at which the signal's value or derivative is discontinuous
    /// or kinked; the solver aligns its step grid with these.
    pub fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            ControlSignal::Zero { .. } => {}
            ControlSignal::PiecewiseConstant(p) => out.extend_from_slice(&p.breakpoints),
            ControlSignal::Sampled(s) => out.extend_from_slice(&s.times),
            ControlSignal::Ramped(r) | ControlSignal::RampDeriv(r) => {
                let n = r.base.values.len();
                for i in 0..n {
                    let lo = r.base.breakpoints[i];
                    let hi = r.base.breakpoints[i + 1];
                    out.push(lo);
                    out.push(lo + r.rho * (hi - lo));
                }
                if r.to_zero {
                    let hi = r.base.breakpoints[n];
                    out.push(hi - r.rho * (hi - r.base.breakpoints[n - 1]));
                }
                out.push(r.base.horizon());
            }
            ControlSignal::Sum(parts) => {
                for p in parts {
                    p.breakpoints(out);
                }
            }
        }
    }

    /// Value-jump of the signal at time `t` (only piecewise-constant parts
    /// jump); used by the solver's shifted-state stepping.
    pub fn jump_at(&self, t: f64) -> TrigField {
        match self {
            ControlSignal::PiecewiseConstant(p) => {
                for i in 1..p.values.len() {
                    if (p.breakpoints[i] - t).abs() < 1e-12 {
                        return p.values[i].sub(&p.values[i - 1]);
                    }
                }
                TrigField::zero()
            }
            ControlSignal::Sum(parts) => {
                let mut out = TrigField::zero();
                for p in parts {
                    out = out.add(&p.jump_at(t));
                }
                out
            }
            _ => TrigField::zero(),
        }
    }

    /// Uniform samples of the signal (n+1 points including both endpoints).
    pub fn sample_uniform(&self, n: usize) -> Vec<(f64, TrigField)> {
        let horizon = self.horizon();
        (0..=n)
            .map(|i| {
                let t = horizon * i as f64 / n as f64;
                (t, self.eval(t))
            })
            .collect()
    }

    /// Largest span residual of the signal's defining values with respect to a
    /// mode space (piece values, sample values, ramp plateau values).
    pub fn max_span_residual(&self, space: &crate::space::ModeSpace) -> f64 {
        match self {
            ControlSignal::Zero { .. } => 0.0,
            ControlSignal::PiecewiseConstant(p) => p
                .values
                .iter()
                .map(|v| space.span_residual(v))
                .fold(0.0, f64::max),
            ControlSignal::Sampled(s) => s
                .values
                .iter()
                .map(|v| space.span_residual(v))
                .fold(0.0, f64::max),
            ControlSignal::Ramped(r) | ControlSignal::RampDeriv(r) => r
                .base
                .values
                .iter()
                .map(|v| space.span_residual(v))
                .fold(0.0, f64::max),
            ControlSignal::Sum(parts) => parts
                .iter()
                .map(|p| p.max_span_residual(space))
                .fold(0.0, f64::max),
        }
    }
}

impl TimeField for ControlSignal {
    fn horizon(&self) -> f64 {
        ControlSignal::horizon(self)
    }

    fn value(&self, t: f64) -> TrigField {
        self.eval(t)
    }
}

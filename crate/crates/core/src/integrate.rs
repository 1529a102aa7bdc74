//! Fixed-step RK4 and adaptive Dormand–Prince 5(4) over flat state vectors,
//! sampled at equally spaced times by cubic Hermite interpolation.

use std::fmt::Display;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extremal::ExtremalState;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rk45,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Rk45 => "rk45",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub sample_count: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            dt: DEFAULT_DT,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            t_end: 1.0,
            sample_count: 101,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_end: f64, sample_count: usize) -> Self {
        Self { method: Method::Rk4, dt, t_end, sample_count, ..Self::default() }
    }

    pub fn rk45(rel_tol: f64, abs_tol: f64, t_end: f64, sample_count: usize) -> Self {
        Self { method: Method::Rk45, rel_tol, abs_tol, t_end, sample_count, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: &str| Err(IntegrateError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if self.sample_count < 2 {
            return bad("sample_count must be at least 2");
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.sample_count;
        (0..n)
            .map(|k| if k + 1 == n { self.t_end } else { self.t_end * k as f64 / (n - 1) as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("right-hand side failed at t = {t}: {msg}")]
    Rhs { t: f64, msg: String },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

impl IntegrateError {
    /// Last time at which the state was known to be good.
    pub fn last_good_time(&self) -> Option<f64> {
        match self {
            Self::InvalidConfig(_) => None,
            Self::StepUnderflow { t, .. } | Self::Rhs { t, .. } | Self::NonFinite { t } => Some(*t),
        }
    }
}

/// Samples of a flat ODE solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub method: String,
    pub dt: f64,
    pub config_hash: String,
}

/// Time-stamped extremal states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ExtremalState>,
    pub metadata: TrajectoryMeta,
}

impl Trajectory {
    pub fn from_solution(sol: &Solution, m: usize, n: usize, metadata: TrajectoryMeta) -> Self {
        Self {
            times: sol.times.clone(),
            states: sol.states.iter().map(|y| ExtremalState::from_flat(y, m, n)).collect(),
            metadata,
        }
    }
}

fn hermite(t0: f64, h: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

struct Sampler {
    times: Vec<f64>,
    next: usize,
    out: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(times: Vec<f64>) -> Self {
        let cap = times.len();
        Self { times, next: 0, out: Vec::with_capacity(cap) }
    }

    /// Emit every pending sample inside `[t0, t0 + h]`, interpolating with `dense`.
    fn step(&mut self, t0: f64, h: f64, y0: &[f64], y1: &[f64], last: bool, dense: impl Fn(f64) -> Vec<f64>) {
        let t1 = t0 + h;
        while self.next < self.times.len() {
            let ts = self.times[self.next];
            if ts > t1 && !last {
                break;
            }
            let y = if ts == t0 {
                y0.to_vec()
            } else if ts >= t1 {
                y1.to_vec()
            } else {
                dense(ts)
            };
            self.out.push(y);
            self.next += 1;
        }
    }
}

/// Evaluates the right-hand side; failures report `good`, the last accepted time.
fn call<F, E>(f: &mut F, good: f64, t: f64, y: &[f64]) -> Result<Vec<f64>, IntegrateError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let d = f(t, y).map_err(|e| IntegrateError::Rhs { t: good, msg: e.to_string() })?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFinite { t: good });
    }
    Ok(d)
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += h * c * v;
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t = 0` to `cfg.t_end`.
pub fn integrate<F, E>(mut f: F, y0: &[f64], cfg: &IntegratorConfig) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    cfg.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFinite { t: 0.0 });
    }
    match cfg.method {
        Method::Rk4 => rk4(&mut f, y0, cfg),
        Method::Rk45 => dopri(&mut f, y0, cfg),
    }
}

fn rk4<F, E>(f: &mut F, y0: &[f64], cfg: &IntegratorConfig) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let mut sampler = Sampler::new(cfg.sample_times());
    let nsteps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut fy = call(f, t, t, &y)?;
    for step in 0..nsteps {
        let last = step + 1 == nsteps;
        let t1 = if last { cfg.t_end } else { (step + 1) as f64 * cfg.dt };
        let h = t1 - t;
        let k1 = &fy;
        let k2 = call(f, t, t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, k1)]))?;
        let k3 = call(f, t, t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k2)]))?;
        let k4 = call(f, t, t1, &axpy(&y, h, &[(1.0, &k3)]))?;
        let y1 = axpy(&y, h / 6.0, &[(1.0, k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
        if y1.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { t });
        }
        let f1 = call(f, t, t1, &y1)?;
        sampler.step(t, h, &y, &y1, last, |ts| hermite(t, h, &y, &fy, &y1, &f1, ts));
        t = t1;
        y = y1;
        fy = f1;
    }
    Ok(Solution { times: sampler.times, states: sampler.out, steps: nsteps, rejected: 0 })
}

// Dormand–Prince 5(4) tableau.
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
// difference between 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension of order 4
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Dormand-Prince dense output at fraction `th` of the step; `k = [k1, k3, k4, k5, k6, k7]`.
fn dopri_dense(y0: &[f64], y1: &[f64], k: &[&Vec<f64>; 6], h: f64, th: f64) -> Vec<f64> {
    let th1 = 1.0 - th;
    (0..y0.len())
        .map(|i| {
            let dy = y1[i] - y0[i];
            let bspl = h * k[0][i] - dy;
            let r4 = dy - h * k[5][i] - bspl;
            let r5 = h * (D1 * k[0][i] + D3 * k[1][i] + D4 * k[2][i] + D5 * k[3][i] + D6 * k[4][i] + D7 * k[5][i]);
            y0[i] + th * (dy + th1 * (bspl + th * (r4 + th1 * r5)))
        })
        .collect()
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn err_norm(y: &[f64], y1: &[f64], e: &[f64], cfg: &IntegratorConfig) -> f64 {
    let s: f64 = (0..y.len())
        .map(|i| {
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
            (e[i] / sc).powi(2)
        })
        .sum();
    (s / y.len().max(1) as f64).sqrt()
}

fn initial_step<F, E>(f: &mut F, y0: &[f64], f0: &[f64], cfg: &IntegratorConfig) -> Result<f64, IntegrateError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let sc: Vec<f64> = y0.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(cfg.t_end);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = call(f, 0.0, h0, &y1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(cfg.t_end))
}

fn dopri<F, E>(f: &mut F, y0: &[f64], cfg: &IntegratorConfig) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Display,
{
    let mut sampler = Sampler::new(cfg.sample_times());
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = call(f, t, t, &y)?;
    let mut h = initial_step(f, &y, &k1, cfg)?;
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0;
    let mut rejected = 0;
    let mut last_rejected = false;
    loop {
        let remaining = cfg.t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < MIN_STEP {
            return Err(IntegrateError::StepUnderflow { t, dt: h });
        }
        let k2 = call(f, t, t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = call(f, t, t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = call(f, t, t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = call(f, t, t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = call(f, t, t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y1 = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let t1 = if last { cfg.t_end } else { t + h };
        let k7 = if y1.iter().all(|v| v.is_finite()) { Some(call(f, t, t1, &y1)) } else { None };
        let (k7, err) = match k7 {
            Some(Ok(k7)) => {
                let e: Vec<f64> = (0..y.len())
                    .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
                    .collect();
                let err = err_norm(&y, &y1, &e, cfg);
                (Some(k7), err)
            }
            // a failed trial stage is treated as a rejected step
            _ => (None, f64::INFINITY),
        };
        if err <= 1.0 {
            let k7 = k7.expect("accepted step has a final stage");
            let hs = t1 - t;
            sampler.step(t, hs, &y, &y1, last, |ts| {
                dopri_dense(&y, &y1, &[&k1, &k3, &k4, &k5, &k6, &k7], hs, (ts - t) / hs)
            });
            steps += 1;
            if last {
                break;
            }
            let mut fac = SAFETY * err.max(1e-10).powf(-ALPHA) * err_prev.powf(BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_prev = err.max(1e-4);
            t = t1;
            y = y1;
            k1 = k7;
            h *= fac;
            last_rejected = false;
        } else {
            rejected += 1;
            let fac = if err.is_finite() { (SAFETY * err.powf(-ALPHA)).max(FAC_MIN) } else { FAC_MIN };
            h *= fac.min(1.0);
            last_rejected = true;
        }
    }
    Ok(Solution { times: sampler.times, states: sampler.out, steps, rejected })
}

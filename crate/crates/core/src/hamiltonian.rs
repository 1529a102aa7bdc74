//! Coordinate Hamiltonian oracle `H = ½ G_D^{ij} ⟨p, X_i⟩⟨p, X_j⟩`.
//! Uses only frame coefficients and Gram entries, never the connection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::extremal::{rhs_limit, speed, ExtremalState};
use crate::geometry::{FramedGeometry, GeometryError};
use crate::integrate::{integrate, IntegrateError, IntegratorConfig, Solution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CotangentState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl CotangentState {
    pub fn to_flat(&self) -> Vec<f64> {
        self.x.iter().chain(&self.p).copied().collect()
    }
    pub fn from_flat(y: &[f64]) -> Self {
        let m = y.len() / 2;
        Self { x: y[..m].to_vec(), p: y[m..].to_vec() }
    }
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("trajectories sampled on different time grids")]
    GridMismatch,
}

fn check(s: &CotangentState, g: &FramedGeometry) -> Result<(), GeometryError> {
    if s.x.len() != g.dim() || s.p.len() != g.dim() {
        return Err(GeometryError::Invalid("cotangent state length does not match geometry".into()));
    }
    Ok(())
}

/// `P_i = ⟨p, X_i⟩`.
fn frame_momenta(x: &DMatrix<f64>, p: &[f64]) -> DVector<f64> {
    x.transpose() * DVector::from_column_slice(p)
}

pub fn hamiltonian(s: &CotangentState, g: &FramedGeometry) -> Result<f64, GeometryError> {
    check(s, g)?;
    let xm = g.horizontal_matrix(&s.x)?;
    let big_p = frame_momenta(&xm, &s.p);
    let ginv = g
        .gram_d_at(&s.x)?
        .try_inverse()
        .ok_or(GeometryError::GramNotPositive { which: "horizontal", point: s.x.clone() })?;
    Ok(0.5 * big_p.dot(&(ginv * &big_p)))
}

/// `ẋ = ∂H/∂p`, `ṗ = −∂H/∂x` with exact partials from dual-number evaluation.
pub fn rhs_hamilton(s: &CotangentState, g: &FramedGeometry) -> Result<CotangentState, GeometryError> {
    check(s, g)?;
    let m = g.dim();
    let n = g.rank_d();
    let xm = g.horizontal_matrix(&s.x)?;
    let big_p = frame_momenta(&xm, &s.p);
    let gd = g.gram_d_at(&s.x)?;
    let ginv = gd
        .try_inverse()
        .ok_or(GeometryError::GramNotPositive { which: "horizontal", point: s.x.clone() })?;
    let w = &ginv * &big_p; // G^{ij} P_j
    let xdot = &xm * &w;

    let dg = g.gram_d_gradient(&s.x)?;
    let jac: Vec<DMatrix<f64>> = g
        .x_frames()
        .iter()
        .map(|f| FramedGeometry::jacobian(f, &s.x))
        .collect::<Result<_, _>>()?;
    let p = DVector::from_column_slice(&s.p);
    let mut pdot = vec![0.0; m];
    for (d, out) in pdot.iter_mut().enumerate() {
        // ∂_d H = w^i ⟨p, ∂_d X_i⟩ − ½ w^T (∂_d G) w
        let mut v = 0.0;
        for i in 0..n {
            let dxi = jac[i].column(d);
            v += w[i] * p.dot(&dxi);
        }
        v -= 0.5 * w.dot(&(&dg[d] * &w));
        *out = -v;
    }
    Ok(CotangentState { x: xdot.iter().copied().collect(), p: pdot })
}

/// Momentum with `⟨p, X_i⟩ = G_D{ij} α^j` and `⟨p, Z_a⟩ = ν_a`.
pub fn initial_momentum(g: &FramedGeometry, s: &ExtremalState) -> Result<CotangentState, GeometryError> {
    s.check(g)?;
    let (n, l) = (g.rank_d(), g.rank_q());
    let e = g.frame_matrix(&s.x)?;
    let gd = g.gram_d_at(&s.x)?;
    let lowered = &gd * DVector::from_column_slice(&s.alpha);
    let mut rhs = DVector::zeros(n + l);
    for i in 0..n {
        rhs[i] = lowered[i];
    }
    for a in 0..l {
        rhs[n + a] = s.nu[a];
    }
    let p = e
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(GeometryError::SingularFrame { point: s.x.clone(), rcond: 0.0 })?;
    Ok(CotangentState { x: s.x.clone(), p: p.iter().copied().collect() })
}

/// Integrates the coordinate Hamiltonian flow.
pub fn integrate_hamilton(
    g: &FramedGeometry,
    s0: &CotangentState,
    cfg: &IntegratorConfig,
) -> Result<Solution, IntegrateError> {
    integrate(
        |_, y: &[f64]| rhs_hamilton(&CotangentState::from_flat(y), g).map(|d| d.to_flat()),
        &s0.to_flat(),
        cfg,
    )
}

/// Integrates the frame system at `δ = 0`.
pub fn integrate_frame(g: &FramedGeometry, s0: &ExtremalState, cfg: &IntegratorConfig) -> Result<Solution, IntegrateError> {
    let (m, n) = (g.dim(), g.rank_d());
    integrate(
        |_, y: &[f64]| rhs_limit(&ExtremalState::from_flat(y, m, n), g).map(|d| d.to_flat()),
        &s0.to_flat(),
        cfg,
    )
}

/// Pointwise Euclidean distance between the first `m` components of two sampled runs.
pub fn deviations(a: &Solution, b: &Solution, m: usize) -> Result<Vec<f64>, CompareError> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12 * (1.0 + t.abs())) {
        return Err(CompareError::GridMismatch);
    }
    Ok(a.states
        .iter()
        .zip(&b.states)
        .map(|(u, v)| (0..m).map(|k| (u[k] - v[k]).powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Sup over samples of the coordinate distance.
pub fn compare(a: &Solution, b: &Solution, m: usize) -> Result<f64, CompareError> {
    Ok(deviations(a, b, m)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub max_deviation: f64,
    pub times: Vec<f64>,
    pub deviations: Vec<f64>,
    pub speed_drift: f64,
    pub energy_drift: f64,
}

/// Frame system against the Hamiltonian flow from matching initial data.
pub fn compare_run(g: &FramedGeometry, s0: &ExtremalState, cfg: &IntegratorConfig) -> Result<CompareReport, CompareError> {
    let (m, n) = (g.dim(), g.rank_d());
    let frame = integrate_frame(g, s0, cfg)?;
    let c0 = initial_momentum(g, s0)?;
    let ham = integrate_hamilton(g, &c0, cfg)?;
    let devs = deviations(&frame, &ham, m)?;
    let v0 = speed(s0, g)?;
    let mut speed_drift: f64 = 0.0;
    for y in &frame.states {
        speed_drift = speed_drift.max((speed(&ExtremalState::from_flat(y, m, n), g)? - v0).abs());
    }
    let h0 = hamiltonian(&c0, g)?;
    let mut energy_drift: f64 = 0.0;
    for y in &ham.states {
        energy_drift = energy_drift.max((hamiltonian(&CotangentState::from_flat(y), g)? - h0).abs());
    }
    Ok(CompareReport {
        max_deviation: devs.iter().copied().fold(0.0, f64::max),
        times: frame.times.clone(),
        deviations: devs,
        speed_drift,
        energy_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn heis() -> FramedGeometry {
        let f = |s: &[&str]| s.iter().map(|e| parse(e, 3).unwrap()).collect::<Vec<_>>();
        FramedGeometry::new("h", vec![f(&["1", "0", "-x2"]), f(&["0", "1", "0"])], vec![f(&["0", "0", "1"])]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = heis();
        let s = CotangentState { x: vec![0.0; 3], p: vec![1.0, 2.0, 3.0] };
        assert_eq!(hamiltonian(&s, &g).unwrap(), 2.5);
        let z = CotangentState { x: vec![0.4, 0.1, 0.0], p: vec![0.0; 3] };
        assert_eq!(hamiltonian(&z, &g).unwrap(), 0.0);
        // annihilates D at the origin
        let nu = CotangentState { x: vec![0.0; 3], p: vec![0.0, 0.0, 1.0] };
        assert_eq!(hamiltonian(&nu, &g).unwrap(), 0.0);
        let r = rhs_hamilton(&nu, &g).unwrap();
        assert!(r.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn momentum_bridge() {
        let g = heis();
        let s = ExtremalState::new(vec![0.3, -0.5, 0.2], vec![0.6, 0.8], vec![1.5]);
        let c = initial_momentum(&g, &s).unwrap();
        let xm = g.horizontal_matrix(&s.x).unwrap();
        let pm = frame_momenta(&xm, &c.p);
        assert!((pm[0] - 0.6).abs() < 1e-15 && (pm[1] - 0.8).abs() < 1e-15);
        assert!((c.p[2] - 1.5).abs() < 1e-15);
    }
}

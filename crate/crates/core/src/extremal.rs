//! Right-hand sides of the normal-extremal system in frame variables
//! `(x, α, ν)` and of its penalized family indexed by `δ ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::connection::{torsion_data, TorsionData};
use crate::geometry::{FramedGeometry, GeometryError, PointFrameData};

/// `u = α^i X_i`; `ν_a` are covector components against the complement frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalState {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
}

impl ExtremalState {
    pub fn new(x: Vec<f64>, alpha: Vec<f64>, nu: Vec<f64>) -> Self {
        Self { x, alpha, nu }
    }

    pub fn zeros(m: usize, n: usize, l: usize) -> Self {
        Self { x: vec![0.0; m], alpha: vec![0.0; n], nu: vec![0.0; l] }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.alpha.len() + self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.nu);
        v
    }

    pub fn from_flat(y: &[f64], m: usize, n: usize) -> Self {
        Self { x: y[..m].to_vec(), alpha: y[m..m + n].to_vec(), nu: y[m + n..].to_vec() }
    }

    /// Checks vector lengths against a geometry.
    pub fn check(&self, g: &FramedGeometry) -> Result<(), GeometryError> {
        if self.x.len() != g.dim() || self.alpha.len() != g.rank_d() || self.nu.len() != g.rank_q() {
            return Err(GeometryError::Invalid(format!(
                "state lengths ({}, {}, {}) do not match geometry ({}, {}, {})",
                self.x.len(),
                self.alpha.len(),
                self.nu.len(),
                g.dim(),
                g.rank_d(),
                g.rank_q()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RhsSpec<'a> {
    pub geometry: &'a FramedGeometry,
    pub delta: f64,
}

impl<'a> RhsSpec<'a> {
    pub fn new(geometry: &'a FramedGeometry, delta: f64) -> Result<Self, GeometryError> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(GeometryError::Invalid(format!("delta must be finite and >= 0, got {delta}")));
        }
        Ok(Self { geometry, delta })
    }
}

fn xdot(data: &PointFrameData, alpha: &[f64], znu: Option<&[f64]>) -> Vec<f64> {
    let (n, m) = (data.n, data.dim());
    (0..m)
        .map(|k| {
            let mut s: f64 = (0..n).map(|i| data.frame[(k, i)] * alpha[i]).sum();
            if let Some(w) = znu {
                s += w.iter().enumerate().map(|(a, v)| data.frame[(k, n + a)] * v).sum::<f64>();
            }
            s
        })
        .collect()
}

/// Limit system assembled from the connection data at one point.
pub fn rhs_limit_at(data: &PointFrameData, td: &TorsionData, s: &ExtremalState) -> ExtremalState {
    let (n, l) = (data.n, data.l);
    let (al, nu) = (&s.alpha, &s.nu);

    // G_D-lowered Levi contraction: w_j = ν_a L^a_{ji} α^i
    let w: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for a in 0..l {
                for i in 0..n {
                    acc += nu[a] * td.levi[[a, j, i]] * al[i];
                }
            }
            acc
        })
        .collect();
    let alpha_dot: Vec<f64> = (0..n)
        .map(|k| {
            let mut v = 0.0;
            for i in 0..n {
                for j in 0..n {
                    v -= td.gamma_d[[k, i, j]] * al[i] * al[j];
                }
            }
            for j in 0..n {
                v -= data.gram_d_inv[(k, j)] * w[j];
            }
            v
        })
        .collect();

    let nu_dot: Vec<f64> = (0..l)
        .map(|a| {
            let mut v = 0.0;
            for i in 0..n {
                for b in 0..l {
                    v += al[i] * td.gamma_q[[b, i, a]] * nu[b];
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let gij = data.gram_d[(i, j)];
                    if gij == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        v -= gij * al[i] * td.t_mix_d[[j, a, k]] * al[k];
                    }
                }
            }
            for b in 0..l {
                for k in 0..n {
                    v -= nu[b] * td.t_mix_q[[b, a, k]] * al[k];
                }
            }
            v
        })
        .collect();

    ExtremalState { x: xdot(data, al, None), alpha: alpha_dot, nu: nu_dot }
}

/// `δ = 0` right-hand side.
pub fn rhs_limit(s: &ExtremalState, g: &FramedGeometry) -> Result<ExtremalState, GeometryError> {
    s.check(g)?;
    let data = g.frame_data(&s.x)?;
    let td = torsion_data(&data);
    Ok(rhs_limit_at(&data, &td, s))
}

/// Penalized family at one point: geodesics of `G_D ⊕ δ⁻¹ G_Q` written through the
/// canonical connection, `⟨∇_u u, β⟩ = ⟨T(β, u), u⟩` for every frame vector `β`.
pub fn rhs_family_at(data: &PointFrameData, td: &TorsionData, s: &ExtremalState, delta: f64) -> ExtremalState {
    if delta == 0.0 {
        return rhs_limit_at(data, td, s);
    }
    let (n, l) = (data.n, data.l);
    let m = n + l;
    let (al, nu) = (&s.alpha, &s.nu);
    let nu_up: Vec<f64> = (0..l).map(|a| (0..l).map(|b| data.gram_q_inv[(a, b)] * nu[b]).sum()).collect();
    let mut u = vec![0.0; m];
    u[..n].copy_from_slice(al);
    for a in 0..l {
        u[n + a] = delta * nu_up[a];
    }
    let gam = &td.connection;
    let tor = &td.torsion;

    // ⟨T(β, u), u⟩_δ with β = E_A, the D⊥ pairing scaled by 1/δ absorbed into ν.
    let pair = |beta: usize| -> f64 {
        let mut s = 0.0;
        for b in 0..m {
            if u[b] == 0.0 {
                continue;
            }
            for j in 0..n {
                let tj = tor[[j, beta, b]];
                if tj != 0.0 {
                    s += (0..n).map(|l2| data.gram_d[(j, l2)] * al[l2]).sum::<f64>() * tj * u[b];
                }
            }
            for c in 0..l {
                s += nu[c] * tor[[n + c, beta, b]] * u[b];
            }
        }
        s
    };

    let mut alpha_dot = vec![0.0; n];
    {
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            rhs[k] = pair(k);
        }
        for j in 0..n {
            let mut q = 0.0;
            for a in 0..m {
                for b in 0..m {
                    q += gam[[j, a, b]] * u[a] * u[b];
                }
            }
            // G_D(α̇ + Γuu) = rhs
            let raised: f64 = (0..n).map(|k| data.gram_d_inv[(j, k)] * rhs[k]).sum();
            alpha_dot[j] = raised - q;
        }
    }

    // G_Q(ν̇^♯ + Γ^c_{ia}α^iν^a + δΓ^c_{ad}ν^aν^d) = ⟨T(Z_b, u), u⟩_δ
    let mut nu_up_dot = vec![0.0; l];
    {
        let rhs: Vec<f64> = (0..l).map(|b| pair(n + b)).collect();
        for c in 0..l {
            let mut q = 0.0;
            for i in 0..n {
                for a in 0..l {
                    q += gam[[n + c, i, n + a]] * al[i] * nu_up[a];
                }
            }
            for a in 0..l {
                for e in 0..l {
                    q += delta * gam[[n + c, n + a, n + e]] * nu_up[a] * nu_up[e];
                }
            }
            let raised: f64 = (0..l).map(|b| data.gram_q_inv[(c, b)] * rhs[b]).sum();
            nu_up_dot[c] = raised - q;
        }
    }
    // lower back: ν̇_b = G_Q ν̇^♯ + u(G_Q) ν^♯
    let nu_dot: Vec<f64> = (0..l)
        .map(|b| {
            let mut v = 0.0;
            for c in 0..l {
                v += data.gram_q[(b, c)] * nu_up_dot[c];
                let mut dg = 0.0;
                for a in 0..m {
                    if u[a] != 0.0 {
                        dg += u[a] * data.d_gram_q[a][(b, c)];
                    }
                }
                v += dg * nu_up[c];
            }
            v
        })
        .collect();

    let znu: Vec<f64> = nu_up.iter().map(|v| delta * v).collect();
    ExtremalState { x: xdot(data, al, Some(&znu)), alpha: alpha_dot, nu: nu_dot }
}

pub fn rhs_family(s: &ExtremalState, spec: &RhsSpec<'_>) -> Result<ExtremalState, GeometryError> {
    s.check(spec.geometry)?;
    let data = spec.geometry.frame_data(&s.x)?;
    let td = torsion_data(&data);
    Ok(rhs_family_at(&data, &td, s, spec.delta))
}

/// `‖u‖ = sqrt(G_D{ij} α^i α^j)` at `s.x`.
pub fn speed(s: &ExtremalState, g: &FramedGeometry) -> Result<f64, GeometryError> {
    s.check(g)?;
    let gd = g.gram_d_at(&s.x)?;
    let n = g.rank_d();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += gd[(i, j)] * s.alpha[i] * s.alpha[j];
        }
    }
    Ok(q.max(0.0).sqrt())
}

/// Component of a coordinate velocity outside `span{X_i}`, measured in the
/// complement frame coordinates.
pub fn horizontality_residual(g: &FramedGeometry, x: &[f64], xdot: &[f64]) -> Result<f64, GeometryError> {
    let data = g.frame_data(x)?;
    let v = nalgebra::DVector::from_column_slice(xdot);
    let comps = &data.frame_inv * v;
    Ok(comps.iter().skip(data.n).fold(0.0, |m: f64, c| m.max(c.abs())))
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
    fn heisenberg_rhs_matches_hand_equations() {
        let g = heis();
        let s = ExtremalState::new(vec![0.2, -0.7, 1.1], vec![0.6, -0.8], vec![1.3]);
        let r = rhs_limit(&s, &g).unwrap();
        assert_eq!(r.x, vec![0.6, -0.8, 0.7 * 0.6]);
        assert!((r.alpha[0] - (-1.3 * -0.8)).abs() < 1e-15);
        assert!((r.alpha[1] - 1.3 * 0.6).abs() < 1e-15);
        assert_eq!(r.nu, vec![0.0]);
    }

    #[test]
    fn zero_alpha_is_equilibrium() {
        let g = heis();
        let s = ExtremalState::new(vec![0.2, -0.7, 1.1], vec![0.0, 0.0], vec![4.0]);
        let r = rhs_limit(&s, &g).unwrap();
        assert!(r.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn speed_examples() {
        let g = heis();
        let s = ExtremalState::new(vec![0.0; 3], vec![3.0, 4.0], vec![0.0]);
        assert_eq!(speed(&s, &g).unwrap(), 5.0);
        let z = ExtremalState::new(vec![0.0; 3], vec![0.0, 0.0], vec![1.0]);
        assert_eq!(speed(&z, &g).unwrap(), 0.0);
    }

    #[test]
    fn negative_delta_rejected() {
        let g = heis();
        assert!(RhsSpec::new(&g, -1.0).is_err());
        assert!(RhsSpec::new(&g, f64::NAN).is_err());
    }
}

//! The canonical metric connection preserving `D` and `D⊥`, its frame
//! coefficients and torsion blocks at a point.
//!
//! Index layout (upper index first everywhere):
//! - `levi[[a, i, k]]`: `L^a_{ik}`, the `D⊥`-part of `[X_i, X_k]`;
//! - `t_mix_d[[j, a, k]]`: `X_j`-component of `T(X_k, Z_a)`;
//! - `t_mix_q[[b, a, k]]`: `Z_b`-component of `T(X_k, Z_a)`;
//! - `gamma_d[[k, i, j]]`: `∇_{X_i} X_j = Γ^k_{ij} X_k`;
//! - `gamma_q[[b, i, a]]`: `∇_{X_i} Z_a = Γ^b_{ia} Z_b`;
//! - `connection[[C, A, B]]`: `∇_{E_A} E_B = Γ^C_{AB} E_C` over the whole frame;
//! - `torsion[[C, A, B]]`: `T(E_A, E_B)^C` assembled block by block.
//!
//! With `T(X, Y) = ∇_X Y − ∇_Y X − [X, Y]` the `D⊥`-part of `T(X_i, X_k)` is `−L^a_{ik}`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::geometry::{levi_form, PointFrameData};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Serialize)]
pub struct TorsionData {
    pub levi: Tensor3,
    pub t_mix_d: Tensor3,
    pub t_mix_q: Tensor3,
    pub gamma_d: Tensor3,
    pub gamma_q: Tensor3,
    /// `T(Z_a, Z_b)^j = −[Z_a, Z_b]_D`, stored `[[j, a, b]]`.
    pub t_qq_d: Tensor3,
    pub connection: Tensor3,
    pub torsion: Tensor3,
}

/// `E_A(G)` for one Gram block, indexed by frame field.
fn d(dg: &[DMatrix<f64>], a: usize, i: usize, j: usize) -> f64 {
    dg[a][(i, j)]
}

/// Lowered `D⊥`-valued mixed torsion `τ_{ab,k} = ⟨T(X_k, Z_a), Z_b⟩`, stored `[[a, b, k]]`.
fn tau_q(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let c = &data.structure;
    let g = &data.gram_q;
    let mut tau = Tensor3::zeros(l, l, n);
    for k in 0..n {
        for a in 0..l {
            for b in 0..l {
                let mut s = d(&data.d_gram_q, k, a, b);
                for e in 0..l {
                    s -= g[(b, e)] * c[[n + e, k, n + a]] + g[(a, e)] * c[[n + e, k, n + b]];
                }
                tau[[a, b, k]] = 0.5 * s;
            }
        }
    }
    tau
}

/// Lowered `D`-valued mixed torsion `σ_{jl,a} = ⟨T(X_l, Z_a), X_j⟩`, stored `[[j, l, a]]`.
fn sigma_d(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let c = &data.structure;
    let g = &data.gram_d;
    let mut sig = Tensor3::zeros(n, n, l);
    for a in 0..l {
        for j in 0..n {
            for k in 0..n {
                let mut s = -d(&data.d_gram_d, n + a, j, k);
                for m in 0..n {
                    s += g[(k, m)] * c[[m, n + a, j]] + g[(j, m)] * c[[m, n + a, k]];
                }
                sig[[j, k, a]] = 0.5 * s;
            }
        }
    }
    sig
}

/// Mixed torsion with values in `D⊥`: `Z_b`-component of `T(X_k, Z_a)`, `[[b, a, k]]`.
pub fn mixed_torsion_q(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let tau = tau_q(data);
    let mut t = Tensor3::zeros(l, l, n);
    for b in 0..l {
        for a in 0..l {
            for k in 0..n {
                t[[b, a, k]] = (0..l).map(|c| data.gram_q_inv[(b, c)] * tau[[a, c, k]]).sum();
            }
        }
    }
    t
}

/// Mixed torsion with values in `D`: `X_j`-component of `T(X_k, Z_a)`, `[[j, a, k]]`.
pub fn mixed_torsion_d(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let sig = sigma_d(data);
    let mut t = Tensor3::zeros(n, l, n);
    for j in 0..n {
        for a in 0..l {
            for k in 0..n {
                t[[j, a, k]] = (0..n).map(|m| data.gram_d_inv[(j, m)] * sig[[m, k, a]]).sum();
            }
        }
    }
    t
}

/// Koszul formula restricted to one block of the frame (`off..off+r`), with
/// brackets projected onto that block.
fn koszul_block(data: &PointFrameData, off: usize, r: usize, g: &DMatrix<f64>, ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Tensor3 {
    let c = &data.structure;
    // lowered: low[[k, i, j]] = ⟨∇_i E_j, E_k⟩
    let mut low = Tensor3::zeros(r, r, r);
    let cl = |k: usize, a: usize, b: usize| -> f64 {
        // ⟨E_k, [E_a, E_b]⟩ within the block
        (0..r).map(|m| g[(k, m)] * c[[off + m, off + a, off + b]]).sum()
    };
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let v = d(dg, off + i, j, k) + d(dg, off + j, k, i) - d(dg, off + k, i, j)
                    + cl(k, i, j)
                    + cl(j, k, i)
                    - cl(i, j, k);
                low[[k, i, j]] = 0.5 * v;
            }
        }
    }
    let mut up = Tensor3::zeros(r, r, r);
    for k in 0..r {
        for i in 0..r {
            for j in 0..r {
                up[[k, i, j]] = (0..r).map(|m| ginv[(k, m)] * low[[m, i, j]]).sum();
            }
        }
    }
    up
}

/// `Γ^k_{ij}` with `∇_{X_i} X_j = Γ^k_{ij} X_k`.
pub fn gamma_d(data: &PointFrameData) -> Tensor3 {
    koszul_block(data, 0, data.n, &data.gram_d, &data.gram_d_inv, &data.d_gram_d)
}

/// `Γ^b_{ia}` with `∇_{X_i} Z_a = Γ^b_{ia} Z_b`.
pub fn gamma_q(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let t = mixed_torsion_q(data);
    let mut g = Tensor3::zeros(l, n, l);
    for b in 0..l {
        for i in 0..n {
            for a in 0..l {
                g[[b, i, a]] = t[[b, a, i]] + data.structure[[n + b, i, n + a]];
            }
        }
    }
    g
}

/// All blocks at once, plus the full connection table and torsion.
pub fn torsion_data(data: &PointFrameData) -> TorsionData {
    let (n, l) = (data.n, data.l);
    let m = n + l;
    let c = &data.structure;
    let levi = levi_form(data);
    let t_mix_d = mixed_torsion_d(data);
    let t_mix_q = mixed_torsion_q(data);
    let gd = gamma_d(data);
    let gq = gamma_q(data);
    let gzz = koszul_block(data, n, l, &data.gram_q, &data.gram_q_inv, &data.d_gram_q);

    let mut connection = Tensor3::zeros(m, m, m);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                connection[[k, i, j]] = gd[[k, i, j]];
            }
        }
        for a in 0..l {
            for b in 0..l {
                connection[[n + b, i, n + a]] = gq[[b, i, a]];
            }
        }
    }
    for a in 0..l {
        // ∇_{Z_a} X_j = T(Z_a, X_j)_D + [Z_a, X_j]_D
        for j in 0..n {
            for k in 0..n {
                connection[[k, n + a, j]] = -t_mix_d[[k, a, j]] + c[[k, n + a, j]];
            }
        }
        for b in 0..l {
            for e in 0..l {
                connection[[n + e, n + a, n + b]] = gzz[[e, a, b]];
            }
        }
    }

    let mut t_qq_d = Tensor3::zeros(n, l, l);
    let mut torsion = Tensor3::zeros(m, m, m);
    for i in 0..n {
        for k in 0..n {
            for a in 0..l {
                torsion[[n + a, i, k]] = -levi[[a, i, k]];
            }
        }
    }
    for a in 0..l {
        for k in 0..n {
            for j in 0..n {
                torsion[[j, k, n + a]] = t_mix_d[[j, a, k]];
                torsion[[j, n + a, k]] = -t_mix_d[[j, a, k]];
            }
            for b in 0..l {
                torsion[[n + b, k, n + a]] = t_mix_q[[b, a, k]];
                torsion[[n + b, n + a, k]] = -t_mix_q[[b, a, k]];
            }
        }
        for b in 0..l {
            for j in 0..n {
                t_qq_d[[j, a, b]] = -c[[j, n + a, n + b]];
                torsion[[j, n + a, n + b]] = -c[[j, n + a, n + b]];
            }
        }
    }

    TorsionData { levi, t_mix_d, t_mix_q, gamma_d: gd, gamma_q: gq, t_qq_d, connection, torsion }
}

/// `Γ^C_{AB} − Γ^C_{BA} − c^C_{AB}`: the torsion recomputed from the connection table.
pub fn torsion_from_connection(data: &PointFrameData, td: &TorsionData) -> Tensor3 {
    let m = data.dim();
    let mut t = Tensor3::zeros(m, m, m);
    for c in 0..m {
        for a in 0..m {
            for b in 0..m {
                t[[c, a, b]] = td.connection[[c, a, b]] - td.connection[[c, b, a]] - data.structure[[c, a, b]];
            }
        }
    }
    t
}

/// Largest asymmetry of the metric-lowered mixed torsions (both should be symmetric).
pub fn mixed_symmetry_defect(data: &PointFrameData, td: &TorsionData) -> f64 {
    let (n, l) = (data.n, data.l);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        // ⟨T(X_k, Z_a), Z_b⟩ symmetric in a, b
        for a in 0..l {
            for b in 0..l {
                let ab: f64 = (0..l).map(|e| data.gram_q[(b, e)] * td.t_mix_q[[e, a, k]]).sum();
                let ba: f64 = (0..l).map(|e| data.gram_q[(a, e)] * td.t_mix_q[[e, b, k]]).sum();
                worst = worst.max((ab - ba).abs());
            }
        }
    }
    for a in 0..l {
        // ⟨T(X_k, Z_a), X_j⟩ symmetric in j, k
        for j in 0..n {
            for k in 0..n {
                let jk: f64 = (0..n).map(|e| data.gram_d[(j, e)] * td.t_mix_d[[e, a, k]]).sum();
                let kj: f64 = (0..n).map(|e| data.gram_d[(k, e)] * td.t_mix_d[[e, a, j]]).sum();
                worst = worst.max((jk - kj).abs());
            }
        }
    }
    worst
}

/// Pointwise metric compatibility `E_A⟨E_B, E_C⟩ = ⟨∇_A E_B, E_C⟩ + ⟨E_B, ∇_A E_C⟩`
/// over pairs in the same block; returns the largest defect.
pub fn metric_defect(data: &PointFrameData, td: &TorsionData) -> f64 {
    let (n, l) = (data.n, data.l);
    let m = n + l;
    let mut worst: f64 = 0.0;
    let blocks = [(0usize, n, &data.gram_d, &data.d_gram_d), (n, l, &data.gram_q, &data.d_gram_q)];
    for a in 0..m {
        for &(off, r, g, dg) in &blocks {
            for b in 0..r {
                for c in 0..r {
                    let mut rhs = 0.0;
                    for e in 0..r {
                        rhs += td.connection[[off + e, a, off + b]] * g[(e, c)]
                            + td.connection[[off + e, a, off + c]] * g[(b, e)];
                    }
                    worst = worst.max((dg[a][(b, c)] - rhs).abs());
                }
            }
        }
    }
    worst
}

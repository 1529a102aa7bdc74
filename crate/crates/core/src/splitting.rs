//! Changing the complement `D⊥` and the torsion-normalized complement.
//!
//! A change is a map `f: Q → D`, stored as an `ℓ × n` matrix with
//! `f[(a, j)] = f^j_a`, acting by `Ẑ_a = Z_a + f^j_a X_j`. Everything is
//! pointwise; `f` enters the new frame as constants.
//!
//! Lowered tensors use the complement metric of the geometry:
//! `T_{bai} = ⟨T(X_i, Z_a), Z_b⟩` and `L_{bji} = ⟨[X_j, X_i], Z_b⟩`.
//! The canonical solver works on the geometry with the canonical `Q`-metric.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::connection::mixed_torsion_q;
use crate::expr::ExprNode;
use crate::geometry::{levi_form, levi_matrix, FramedGeometry, GeometryError, Gram, PointFrameData};
use crate::tensor::Tensor3;

/// Relative singular-value cutoff for ranks and kernels.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("splitting change has shape {got:?}, expected ({l}, {n})")]
    Shape { got: (usize, usize), l: usize, n: usize },
    #[error("not two-step generating at point {point:?}: Levi rank {rank} < {rank_q}")]
    NotTwoStep { point: Vec<f64>, rank: usize, rank_q: usize },
    #[error("torsion map is singular (kernel dimension {}); the free rank-3 distribution is the known obstruction", .report.kernel_dim)]
    NotInjective { report: InjectivityReport },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplittingChange {
    /// `f[(a, j)] = f^j_a`.
    #[serde(serialize_with = "rows_ser")]
    pub f: DMatrix<f64>,
}

fn rows_ser<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in m.row_iter() {
        seq.serialize_element(&r.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

impl SplittingChange {
    pub fn new(f: DMatrix<f64>) -> Self {
        Self { f }
    }

    pub fn zeros(l: usize, n: usize) -> Self {
        Self { f: DMatrix::zeros(l, n) }
    }

    /// Row-major `ℓ × n` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let l = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        Self { f: DMatrix::from_fn(l, n, |a, j| rows[a][j]) }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.f.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Flattened with index `a * n + j`.
    fn to_vec(&self) -> DVector<f64> {
        let (l, n) = self.f.shape();
        DVector::from_fn(l * n, |k, _| self.f[(k / n, k % n)])
    }

    fn from_vec(v: &DVector<f64>, l: usize, n: usize) -> Self {
        Self { f: DMatrix::from_fn(l, n, |a, j| v[a * n + j]) }
    }
}

fn check_shape(g: &FramedGeometry, f: &SplittingChange) -> Result<(), SplitError> {
    let (l, n) = (g.rank_q(), g.rank_d());
    if f.f.shape() != (l, n) {
        return Err(SplitError::Shape { got: f.f.shape(), l, n });
    }
    Ok(())
}

/// `Ẑ_a = Z_a + f^j_a X_j`; horizontal frame and both Gram declarations kept.
pub fn apply_change(g: &FramedGeometry, f: &SplittingChange) -> Result<FramedGeometry, SplitError> {
    check_shape(g, f)?;
    let z: Vec<Vec<ExprNode>> = g
        .z_frames()
        .iter()
        .enumerate()
        .map(|(a, za)| {
            (0..g.dim())
                .map(|c| {
                    g.x_frames().iter().enumerate().fold(za[c].clone(), |acc, (j, xj)| {
                        ExprNode::add(acc, ExprNode::mul(ExprNode::constant(f.f[(a, j)]), xj[c].clone()))
                    })
                })
                .collect()
        })
        .collect();
    Ok(g.clone().with_z_frames(z)?)
}

/// `T_{bai}` stored `[[b, a, i]]`.
pub fn lowered_mixed_torsion(data: &PointFrameData) -> Tensor3 {
    lower_q(data, &mixed_torsion_q(data))
}

/// `L_{bji}` stored `[[b, j, i]]`.
pub fn lowered_levi(data: &PointFrameData) -> Tensor3 {
    lower_q(data, &levi_form(data))
}

fn lower_q(data: &PointFrameData, t: &Tensor3) -> Tensor3 {
    let [l, p, q] = t.dims();
    let mut out = Tensor3::zeros(l, p, q);
    for b in 0..l {
        for i in 0..p {
            for k in 0..q {
                out[[b, i, k]] = (0..l).map(|c| data.gram_q[(b, c)] * t[[c, i, k]]).sum();
            }
        }
    }
    out
}

/// `T_{bai} ↦ T_{bai} + ½(f^j_a L_{bji} + f^j_b L_{aji})`.
pub fn torsion_change_law(t_low: &Tensor3, l_low: &Tensor3, f: &SplittingChange) -> Tensor3 {
    let [l, _, n] = t_low.dims();
    let mut out = t_low.clone();
    for b in 0..l {
        for a in 0..l {
            for i in 0..n {
                let s: f64 = (0..n).map(|j| f.f[(a, j)] * l_low[[b, j, i]] + f.f[(b, j)] * l_low[[a, j, i]]).sum();
                out[[b, a, i]] += 0.5 * s;
            }
        }
    }
    out
}

/// `U_{bj} = T_{bai} L^a_{jk} h^{ik}`, an `ℓ × n` matrix.
pub fn u_tensor(data: &PointFrameData) -> DMatrix<f64> {
    u_from(&lowered_mixed_torsion(data), &levi_form(data), &data.gram_d_inv)
}

fn u_from(t_low: &Tensor3, levi: &Tensor3, h: &DMatrix<f64>) -> DMatrix<f64> {
    let [l, _, n] = t_low.dims();
    let lh = levi_raised(levi, h);
    DMatrix::from_fn(l, n, |b, j| {
        let mut s = 0.0;
        for a in 0..l {
            for i in 0..n {
                s += t_low[[b, a, i]] * lh[[a, j, i]];
            }
        }
        s
    })
}

/// `(L h)^a_j{}^i = L^a_{jk} h^{ik}`, stored `[[a, j, i]]`.
fn levi_raised(levi: &Tensor3, h: &DMatrix<f64>) -> Tensor3 {
    let [l, n, _] = levi.dims();
    let mut out = Tensor3::zeros(l, n, n);
    for a in 0..l {
        for j in 0..n {
            for i in 0..n {
                out[[a, j, i]] = (0..n).map(|k| levi[[a, j, k]] * h[(i, k)]).sum();
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectivityReport {
    /// Row `(b, j)` and column `(a, l)` at `b * n + j` and `a * n + l`.
    pub matrix: Vec<Vec<f64>>,
    pub size: usize,
    pub rank: usize,
    pub kernel_dim: usize,
    /// Orthonormal kernel basis, each as an `ℓ × n` matrix of `f` values.
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub singular_values: Vec<f64>,
}

/// Rank of the Levi matrix `Λ` (ℓ × n(n−1)/2).
pub fn levi_rank(data: &PointFrameData) -> usize {
    let lam = levi_matrix(&levi_form(data));
    let tol = RANK_TOL * lam.amax().max(f64::MIN_POSITIVE);
    lam.svd(false, false).rank(tol)
}

fn injj_matrix(data: &PointFrameData) -> DMatrix<f64> {
    let (n, l) = (data.n, data.l);
    let lh = levi_raised(&levi_form(data), &data.gram_d_inv);
    let ll = lowered_levi(data);
    let mut mat = DMatrix::zeros(l * n, l * n);
    for b in 0..l {
        for j in 0..n {
            let row = b * n + j;
            for a in 0..l {
                for p in 0..n {
                    // f^p_a L_{bpi} (Lh)^a_j^i
                    let s: f64 = (0..n).map(|i| ll[[b, p, i]] * lh[[a, j, i]]).sum();
                    mat[(row, a * n + p)] += 0.5 * s;
                    // f^p_b L_{api} (Lh)^a_j^i
                    let s: f64 = (0..n).map(|i| ll[[a, p, i]] * lh[[a, j, i]]).sum();
                    mat[(row, b * n + p)] += 0.5 * s;
                }
            }
        }
    }
    mat
}

fn report(mat: &DMatrix<f64>, l: usize, n: usize) -> InjectivityReport {
    let size = mat.nrows();
    let svd = mat.clone().svd(true, true);
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let tol = RANK_TOL * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let vt = svd.v_t.expect("requested");
    let kernel = (0..size)
        .filter(|&k| svd.singular_values[k] <= tol)
        .map(|k| {
            let v = vt.row(k).transpose();
            SplittingChange::from_vec(&v, l, n).rows()
        })
        .collect::<Vec<_>>();
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    InjectivityReport {
        matrix: mat.row_iter().map(|r| r.iter().copied().collect()).collect(),
        size,
        rank,
        kernel_dim: size - rank,
        kernel,
        singular_values,
    }
}

fn two_step(data: &PointFrameData) -> Result<(), SplitError> {
    let rank = levi_rank(data);
    if rank < data.l {
        return Err(SplitError::NotTwoStep { point: data.point.clone(), rank, rank_q: data.l });
    }
    Ok(())
}

/// Same frames with the canonical metric on `Q`.
pub fn canonical_geometry(g: &FramedGeometry) -> Result<FramedGeometry, SplitError> {
    Ok(g.clone().with_gram_q(Gram::CanonicalQ)?)
}

fn canonical_data(g: &FramedGeometry, point: &[f64]) -> Result<PointFrameData, SplitError> {
    let data = g.frame_data(point)?;
    two_step(&data)?;
    Ok(canonical_geometry(g)?.frame_data(point)?)
}

/// Matrix of `f ↦ ½(f^l_a L_{bli} + f^l_b L_{ali}) L^a_{jk} h^{ik}` with rank and kernel.
pub fn build_injj_matrix(g: &FramedGeometry, point: &[f64]) -> Result<InjectivityReport, SplitError> {
    let data = canonical_data(g, point)?;
    Ok(report(&injj_matrix(&data), data.l, data.n))
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSolution {
    pub change: SplittingChange,
    pub report: InjectivityReport,
    pub u_before: f64,
    pub u_after: f64,
    pub torsion_norm: f64,
}

/// The complement with `T_{bai} L^a_{jk} h^{ik} = 0`, as a change from the current one.
pub fn solve_canonical_splitting(g: &FramedGeometry, point: &[f64]) -> Result<SplitSolution, SplitError> {
    let data = canonical_data(g, point)?;
    let (n, l) = (data.n, data.l);
    let mat = injj_matrix(&data);
    let rep = report(&mat, l, n);
    if rep.kernel_dim > 0 {
        return Err(SplitError::NotInjective { report: rep });
    }
    let u = u_tensor(&data);
    let rhs = -SplittingChange::new(u.clone()).to_vec();
    let x = mat
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SplitError::NotInjective { report: rep.clone() })?;
    let change = SplittingChange::from_vec(&x, l, n);
    let after = canonical_data(&apply_change(g, &change)?, point)?;
    let u_after = u_tensor(&after).norm();
    Ok(SplitSolution {
        change,
        report: rep,
        u_before: u.norm(),
        u_after,
        torsion_norm: lowered_mixed_torsion(&data).max_abs(),
    })
}

//! Framed structures `(M, g, D, D⊥)` given by coefficient expressions, and
//! their pointwise frame data: frame matrix, brackets, structure functions
//! and Gram matrices with their frame derivatives.
//!
//! Frame indices run over `0..m`: `0..n` are the horizontal fields `X_i`,
//! `n..m` the complement fields `Z_a`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{ExprError, ExprNode};
use crate::tensor::Tensor3;

/// Reciprocal condition below which a frame matrix is treated as singular.
pub const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("frame matrix singular at {point:?} (reciprocal condition {rcond:e})")]
    SingularFrame { point: Vec<f64>, rcond: f64 },
    #[error("{which} Gram matrix is not positive definite at {point:?}")]
    GramNotPositive { which: &'static str, point: Vec<f64> },
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("Levi form not surjective at {point:?} (rank {rank} < {rank_q}): not two-step generating at point")]
    NotTwoStep { point: Vec<f64>, rank: usize, rank_q: usize },
}

/// A vector field given by its `m` coordinate coefficient functions.
pub type FrameField = Vec<ExprNode>;

/// How the inner product on one of the two sub-bundles is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Gram {
    /// The frame is declared orthonormal.
    Identity,
    /// Symmetric matrix of coefficient functions in the frame.
    Expr(Vec<Vec<ExprNode>>),
    /// Canonical metric on `Q = TM/D` induced from the horizontal metric
    /// through the Levi form. Only valid for the complement.
    CanonicalQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedGeometry {
    name: String,
    coord_names: Vec<String>,
    x_frames: Vec<FrameField>,
    z_frames: Vec<FrameField>,
    gram_d: Gram,
    gram_q: Gram,
}

impl FramedGeometry {
    /// Frames with orthonormal declarations and default coordinate names.
    pub fn new(
        name: impl Into<String>,
        x_frames: Vec<FrameField>,
        z_frames: Vec<FrameField>,
    ) -> Result<Self, GeometryError> {
        let m = x_frames.len() + z_frames.len();
        let coord_names = (1..=m).map(|i| format!("x{i}")).collect();
        let g = Self {
            name: name.into(),
            coord_names,
            x_frames,
            z_frames,
            gram_d: Gram::Identity,
            gram_q: Gram::Identity,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let m = self.dim();
        if self.x_frames.is_empty() {
            return Err(GeometryError::Invalid("at least one horizontal field required".into()));
        }
        for (k, f) in self.x_frames.iter().chain(&self.z_frames).enumerate() {
            if f.len() != m {
                return Err(GeometryError::Invalid(format!(
                    "frame field {k} has {} coefficients, expected {m}",
                    f.len()
                )));
            }
            if let Some(bad) = f.iter().find(|e| e.min_dim() > m) {
                return Err(GeometryError::Invalid(format!(
                    "frame field {k} references x{} beyond dimension {m}",
                    bad.min_dim()
                )));
            }
        }
        check_gram_shape(&self.gram_d, self.rank_d(), m, "horizontal")?;
        if matches!(self.gram_d, Gram::CanonicalQ) {
            return Err(GeometryError::Invalid("canonical metric only applies to the complement".into()));
        }
        check_gram_shape(&self.gram_q, self.rank_q(), m, "complement")?;
        if self.coord_names.len() != m {
            return Err(GeometryError::Invalid("coordinate name count mismatch".into()));
        }
        Ok(())
    }

    pub fn with_gram_d(mut self, gram: Gram) -> Result<Self, GeometryError> {
        self.gram_d = gram;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gram_q(mut self, gram: Gram) -> Result<Self, GeometryError> {
        self.gram_q = gram;
        self.validate()?;
        Ok(self)
    }

    pub fn with_coord_names(mut self, names: Vec<String>) -> Result<Self, GeometryError> {
        self.coord_names = names;
        self.validate()?;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same frames with the complement metric multiplied by the constant `eps`.
    /// The canonical complement metric is not rescalable and is rejected.
    pub fn scaled_q(&self, eps: f64) -> Result<Self, GeometryError> {
        let l = self.rank_q();
        let entries = match &self.gram_q {
            Gram::Identity => (0..l)
                .map(|a| {
                    (0..l)
                        .map(|b| ExprNode::constant(if a == b { eps } else { 0.0 }))
                        .collect()
                })
                .collect(),
            Gram::Expr(g) => g
                .iter()
                .map(|row| row.iter().map(|e| ExprNode::mul(ExprNode::constant(eps), e.clone())).collect())
                .collect(),
            Gram::CanonicalQ => {
                return Err(GeometryError::Invalid("cannot rescale the canonical complement metric".into()))
            }
        };
        self.clone().with_gram_q(Gram::Expr(entries))
    }

    /// Replaces the complement frame, keeping everything else.
    pub fn with_z_frames(mut self, z_frames: Vec<FrameField>) -> Result<Self, GeometryError> {
        if z_frames.len() != self.z_frames.len() {
            return Err(GeometryError::Invalid("complement rank cannot change".into()));
        }
        self.z_frames = z_frames;
        self.validate()?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn coord_names(&self) -> &[String] {
        &self.coord_names
    }
    /// Coordinate dimension `m`.
    pub fn dim(&self) -> usize {
        self.x_frames.len() + self.z_frames.len()
    }
    /// Rank `n` of the distribution.
    pub fn rank_d(&self) -> usize {
        self.x_frames.len()
    }
    /// Rank `ℓ` of the complement.
    pub fn rank_q(&self) -> usize {
        self.z_frames.len()
    }
    pub fn x_frames(&self) -> &[FrameField] {
        &self.x_frames
    }
    pub fn z_frames(&self) -> &[FrameField] {
        &self.z_frames
    }
    pub fn gram_d(&self) -> &Gram {
        &self.gram_d
    }
    pub fn gram_q(&self) -> &Gram {
        &self.gram_q
    }

    /// Field `E_A` in the combined frame.
    pub fn field(&self, a: usize) -> &FrameField {
        let n = self.rank_d();
        if a < n {
            &self.x_frames[a]
        } else {
            &self.z_frames[a - n]
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<(), GeometryError> {
        if point.len() != self.dim() {
            return Err(ExprError::PointLength { got: point.len(), expected: self.dim() }.into());
        }
        Ok(())
    }

    /// Frame matrix `[X | Z]` at `point` (columns are the fields).
    pub fn frame_matrix(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.check_point(point)?;
        let m = self.dim();
        let mut e = DMatrix::zeros(m, m);
        for a in 0..m {
            for (k, c) in self.field(a).iter().enumerate() {
                e[(k, a)] = c.eval(point)?;
            }
        }
        Ok(e)
    }

    /// Horizontal fields evaluated at `point`, as an `m × n` matrix.
    pub fn horizontal_matrix(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.check_point(point)?;
        let (m, n) = (self.dim(), self.rank_d());
        let mut x = DMatrix::zeros(m, n);
        for i in 0..n {
            for (k, c) in self.x_frames[i].iter().enumerate() {
                x[(k, i)] = c.eval(point)?;
            }
        }
        Ok(x)
    }

    /// Horizontal Gram matrix value at `point`.
    pub fn gram_d_at(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        eval_gram(&self.gram_d, self.rank_d(), point)
    }

    /// Coordinate gradient (one matrix per coordinate) of the horizontal Gram matrix.
    pub fn gram_d_gradient(&self, point: &[f64]) -> Result<Vec<DMatrix<f64>>, GeometryError> {
        gram_gradient(&self.gram_d, self.rank_d(), point)
    }

    /// Frame Jacobian of a field: `J[(k, d)] = ∂_d V^k`.
    pub fn jacobian(field: &FrameField, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let m = point.len();
        let mut j = DMatrix::zeros(m, m);
        for (k, c) in field.iter().enumerate() {
            let g = c.gradient(point)?;
            for d in 0..m {
                j[(k, d)] = g[d];
            }
        }
        Ok(j)
    }

    /// Everything pointwise that the connection needs.
    pub fn frame_data(&self, point: &[f64]) -> Result<PointFrameData, GeometryError> {
        let raw = self.raw_frame(point)?;
        let (n, l) = (self.rank_d(), self.rank_q());
        let m = n + l;

        let gram_d = eval_gram(&self.gram_d, n, point)?;
        let d_gram_d = directional_gram(&self.gram_d, n, point, &raw.frame)?;
        let (gram_q, d_gram_q) = match &self.gram_q {
            Gram::CanonicalQ => {
                let h = canonical_q_from_raw(&raw, &gram_d, n, l)?;
                let mut dh = Vec::with_capacity(m);
                for a in 0..m {
                    let dir: Vec<f64> = raw.frame.column(a).iter().copied().collect();
                    dh.push(self.canonical_q_directional(point, &dir)?);
                }
                (h, dh)
            }
            g => (eval_gram(g, l, point)?, directional_gram(g, l, point, &raw.frame)?),
        };
        let gram_d_inv = spd_inverse(&gram_d, "horizontal", point)?;
        let gram_q_inv = spd_inverse(&gram_q, "complement", point)?;
        Ok(PointFrameData {
            point: point.to_vec(),
            n,
            l,
            frame: raw.frame,
            frame_inv: raw.frame_inv,
            rcond: raw.rcond,
            structure: raw.structure,
            gram_d,
            gram_d_inv,
            gram_q,
            gram_q_inv,
            d_gram_d,
            d_gram_q,
        })
    }

    /// Canonical complement metric at `point` (independent of the declared one).
    pub fn canonical_q_metric(&self, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let raw = self.raw_frame(point)?;
        let gd = eval_gram(&self.gram_d, self.rank_d(), point)?;
        canonical_q_from_raw(&raw, &gd, self.rank_d(), self.rank_q())
    }

    /// Derivative of the canonical complement metric along `dir`, by
    /// Richardson-extrapolated central differences along the straight line.
    fn canonical_q_directional(&self, point: &[f64], dir: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        const H: f64 = 1e-3;
        let at = |s: f64| -> Result<DMatrix<f64>, GeometryError> {
            let p: Vec<f64> = point.iter().zip(dir).map(|(x, v)| x + s * v).collect();
            self.canonical_q_metric(&p)
        };
        let d1 = (at(H)? - at(-H)?) / (2.0 * H);
        let d2 = (at(H / 2.0)? - at(-H / 2.0)?) / H;
        Ok((d2 * 4.0 - d1) / 3.0)
    }

    fn raw_frame(&self, point: &[f64]) -> Result<RawFrame, GeometryError> {
        self.check_point(point)?;
        let m = self.dim();
        let frame = self.frame_matrix(point)?;
        let (frame_inv, rcond) = invert_checked(&frame, point)?;
        let jac: Vec<DMatrix<f64>> = (0..m)
            .map(|a| Self::jacobian(self.field(a), point))
            .collect::<Result<_, _>>()?;
        let mut structure = Tensor3::zeros(m, m, m);
        for a in 0..m {
            for b in (a + 1)..m {
                let br = &jac[b] * frame.column(a) - &jac[a] * frame.column(b);
                let c = &frame_inv * br;
                for k in 0..m {
                    structure[[k, a, b]] = c[k];
                    structure[[k, b, a]] = -c[k];
                }
            }
        }
        Ok(RawFrame { frame, frame_inv, rcond, structure })
    }
}

fn check_gram_shape(g: &Gram, r: usize, m: usize, which: &str) -> Result<(), GeometryError> {
    if let Gram::Expr(rows) = g {
        if rows.len() != r || rows.iter().any(|row| row.len() != r) {
            return Err(GeometryError::Invalid(format!("{which} Gram matrix must be {r}×{r}")));
        }
        if rows.iter().flatten().any(|e| e.min_dim() > m) {
            return Err(GeometryError::Invalid(format!("{which} Gram matrix references a coordinate beyond {m}")));
        }
    }
    Ok(())
}

struct RawFrame {
    frame: DMatrix<f64>,
    frame_inv: DMatrix<f64>,
    rcond: f64,
    structure: Tensor3,
}

/// LU inverse with a 1-norm reciprocal condition estimate.
fn invert_checked(e: &DMatrix<f64>, point: &[f64]) -> Result<(DMatrix<f64>, f64), GeometryError> {
    let singular = |rcond| GeometryError::SingularFrame { point: point.to_vec(), rcond };
    let inv = e.clone().lu().try_inverse().ok_or_else(|| singular(0.0))?;
    let rcond = 1.0 / (norm1(e) * norm1(&inv));
    if !rcond.is_finite() || rcond < MIN_RCOND {
        return Err(singular(if rcond.is_finite() { rcond } else { 0.0 }));
    }
    Ok((inv, rcond))
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn spd_inverse(g: &DMatrix<f64>, which: &'static str, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    let bad = || GeometryError::GramNotPositive { which, point: point.to_vec() };
    if (g - g.transpose()).amax() > 1e-12 * (1.0 + g.amax()) {
        return Err(bad());
    }
    let chol = g.clone().cholesky().ok_or_else(bad)?;
    Ok(chol.inverse())
}

fn eval_gram(g: &Gram, r: usize, point: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    match g {
        Gram::Identity => Ok(DMatrix::identity(r, r)),
        Gram::Expr(rows) => {
            let mut out = DMatrix::zeros(r, r);
            for (i, row) in rows.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    out[(i, j)] = e.eval(point)?;
                }
            }
            Ok(out)
        }
        Gram::CanonicalQ => Err(GeometryError::Invalid("canonical metric needs frame data".into())),
    }
}

fn gram_gradient(g: &Gram, r: usize, point: &[f64]) -> Result<Vec<DMatrix<f64>>, GeometryError> {
    let m = point.len();
    let mut out = vec![DMatrix::zeros(r, r); m];
    if let Gram::Expr(rows) = g {
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                for (d, v) in e.gradient(point)?.into_iter().enumerate() {
                    out[d][(i, j)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// `E_A(G)` for every frame field, by the chain rule over coordinate gradients.
fn directional_gram(
    g: &Gram,
    r: usize,
    point: &[f64],
    frame: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>, GeometryError> {
    let m = point.len();
    let grad = gram_gradient(g, r, point)?;
    Ok((0..m)
        .map(|a| {
            let mut acc = DMatrix::zeros(r, r);
            for d in 0..m {
                let v = frame[(d, a)];
                if v != 0.0 {
                    acc += &grad[d] * v;
                }
            }
            acc
        })
        .collect())
}

/// Ordered pairs `i < k` of horizontal indices (lexicographic).
pub fn wedge_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |k| (i, k))).collect()
}

/// Levi matrix `Λ` (ℓ × n(n−1)/2): column `(i,k)` holds `L^a_{ik}`.
pub fn levi_matrix(levi: &Tensor3) -> DMatrix<f64> {
    let [l, n, _] = levi.dims();
    let pairs = wedge_pairs(n);
    DMatrix::from_fn(l, pairs.len(), |a, p| levi[[a, pairs[p].0, pairs[p].1]])
}

/// Gram matrix of the wedge basis `X_i ∧ X_k` induced by the horizontal metric.
pub fn wedge_gram(gram_d: &DMatrix<f64>) -> DMatrix<f64> {
    let pairs = wedge_pairs(gram_d.nrows());
    DMatrix::from_fn(pairs.len(), pairs.len(), |p, q| {
        let (i, k) = pairs[p];
        let (j, l) = pairs[q];
        gram_d[(i, j)] * gram_d[(k, l)] - gram_d[(i, l)] * gram_d[(k, j)]
    })
}

fn canonical_q_from_raw(
    raw: &RawFrame,
    gram_d: &DMatrix<f64>,
    n: usize,
    l: usize,
) -> Result<DMatrix<f64>, GeometryError> {
    let mut levi = Tensor3::zeros(l, n, n);
    for a in 0..l {
        for i in 0..n {
            for k in 0..n {
                levi[[a, i, k]] = raw.structure[[n + a, i, k]];
            }
        }
    }
    canonical_q_from_levi(&levi, gram_d)
}

/// The metric on `Q` making the Levi map an isometry from the orthogonal
/// complement of its kernel in `Λ²D`: `h_Q = (Λ W⁻¹ Λᵀ)⁻¹`.
pub fn canonical_q_from_levi(levi: &Tensor3, gram_d: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let lam = levi_matrix(levi);
    let l = lam.nrows();
    let w_inv = wedge_gram(gram_d)
        .try_inverse()
        .ok_or_else(|| GeometryError::Invalid("degenerate wedge metric".into()))?;
    let co = &lam * w_inv * lam.transpose();
    let rank = co.clone().svd(false, false).rank(1e-10 * co.amax().max(1e-300));
    if rank < l {
        return Err(GeometryError::NotTwoStep { point: vec![], rank, rank_q: l });
    }
    co.try_inverse()
        .ok_or(GeometryError::NotTwoStep { point: vec![], rank, rank_q: l })
}

/// Pointwise frame data. `structure[[C, A, B]]` is `c^C_{AB}` with
/// `[E_A, E_B] = c^C_{AB} E_C`; `d_gram_*[A]` is `E_A` applied to the Gram matrix.
#[derive(Debug, Clone)]
pub struct PointFrameData {
    pub point: Vec<f64>,
    pub n: usize,
    pub l: usize,
    pub frame: DMatrix<f64>,
    pub frame_inv: DMatrix<f64>,
    pub rcond: f64,
    pub structure: Tensor3,
    pub gram_d: DMatrix<f64>,
    pub gram_d_inv: DMatrix<f64>,
    pub gram_q: DMatrix<f64>,
    pub gram_q_inv: DMatrix<f64>,
    pub d_gram_d: Vec<DMatrix<f64>>,
    pub d_gram_q: Vec<DMatrix<f64>>,
}

impl PointFrameData {
    pub fn dim(&self) -> usize {
        self.n + self.l
    }

    /// Coordinate vector of `[E_A, E_B]` rebuilt from the structure functions.
    pub fn bracket_from_structure(&self, a: usize, b: usize) -> DVector<f64> {
        let m = self.dim();
        let c = DVector::from_fn(m, |k, _| self.structure[[k, a, b]]);
        &self.frame * c
    }

    /// Inner product of two frame vectors given by frame components, using
    /// the block metric `G_D ⊕ G_Q`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let (n, l) = (self.n, self.l);
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * self.gram_d[(i, j)] * v[j];
            }
        }
        for a in 0..l {
            for b in 0..l {
                s += u[n + a] * self.gram_q[(a, b)] * v[n + b];
            }
        }
        s
    }
}

/// `[V, W] = (∂W)·V − (∂V)·W` at `point`.
pub fn bracket(v: &FrameField, w: &FrameField, point: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let m = point.len();
    if v.len() != m || w.len() != m {
        return Err(GeometryError::Invalid("field length does not match point".into()));
    }
    let vv = DVector::from_iterator(m, v.iter().map(|e| e.eval(point)).collect::<Result<Vec<_>, _>>()?);
    let wv = DVector::from_iterator(m, w.iter().map(|e| e.eval(point)).collect::<Result<Vec<_>, _>>()?);
    let jv = FramedGeometry::jacobian(v, point)?;
    let jw = FramedGeometry::jacobian(w, point)?;
    Ok((jw * vv - jv * wv).iter().copied().collect())
}

/// Levi form `L^a_{ik}`: complement components of `[X_i, X_k]`, as `[[a, i, k]]`.
pub fn levi_form(data: &PointFrameData) -> Tensor3 {
    let (n, l) = (data.n, data.l);
    let mut levi = Tensor3::zeros(l, n, n);
    for a in 0..l {
        for i in 0..n {
            for k in 0..n {
                levi[[a, i, k]] = data.structure[[n + a, i, k]];
            }
        }
    }
    levi
}

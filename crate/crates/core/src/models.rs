//! Built-in framed geometries and reference solutions.
//!
//! All built-in frames are declared orthonormal. `heisenberg_b` and
//! `contact5` use `Z = 2∂z` so that the Levi form has unit entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_with_aliases, ExprError, ExprNode};
use crate::extremal::{rhs_limit, ExtremalState};
use crate::geometry::{wedge_pairs, FrameField, FramedGeometry, GeometryError, Gram};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model id `{0}`")]
    UnknownId(String),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("in {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("closed form needs K != 0 (straight lines otherwise)")]
    ZeroK,
    #[error("lambda vanishes at {0:?}")]
    LambdaZero(Vec<f64>),
}

/// Named λ choices for `contact5`.
pub const LAMBDA_PRESETS: &[(&str, &str)] = &[
    ("unit", "1"),
    ("exp_x1", "exp(x1)"),
    ("quadratic_x1", "1+x1^2"),
    ("exp_z", "exp(x5)"),
];

/// Resolves a preset name, otherwise returns the input unchanged.
pub fn lambda_source(s: &str) -> &str {
    LAMBDA_PRESETS.iter().find(|(k, _)| *k == s).map(|(_, v)| *v).unwrap_or(s)
}

/// Parses a λ expression over `(x1, x2, x3, x4, z)`; `z` and `x5` both name the last slot.
pub fn parse_lambda(src: &str) -> Result<ExprNode, ModelError> {
    parse_with_aliases(lambda_source(src), 5, &[("z", 4)])
        .map_err(|source| ModelError::Expr { field: "lambda".into(), source })
}

fn default_lambda() -> String {
    "1".into()
}

fn default_n() -> usize {
    2
}

/// Gram declaration in a custom model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GramSpec {
    /// `"identity"` or `"canonical"`.
    Named(String),
    Matrix(Vec<Vec<String>>),
}

/// A user geometry given by expression strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    #[serde(default)]
    pub name: Option<String>,
    /// Coordinate names; `x1..xm` are always accepted as well.
    #[serde(default)]
    pub coords: Option<Vec<String>>,
    pub x: Vec<Vec<String>>,
    pub z: Vec<Vec<String>>,
    #[serde(default)]
    pub gram_d: Option<GramSpec>,
    #[serde(default)]
    pub gram_q: Option<GramSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    HeisenbergA,
    HeisenbergB,
    FreeN {
        #[serde(default = "default_n")]
        n: usize,
    },
    Contact5 {
        #[serde(default = "default_lambda")]
        lambda: String,
    },
    Custom(CustomModel),
}

impl ModelSpec {
    /// Accepts `heisenberg_a`, `heisenberg_b`, `free_n`, `free_<n>`, `contact5`,
    /// `contact5:<lambda>`.
    pub fn from_id(id: &str) -> Result<Self, ModelError> {
        match id {
            "heisenberg_a" => return Ok(Self::HeisenbergA),
            "heisenberg_b" => return Ok(Self::HeisenbergB),
            "free_n" => return Ok(Self::FreeN { n: 2 }),
            "contact5" => return Ok(Self::Contact5 { lambda: default_lambda() }),
            _ => {}
        }
        if let Some(rest) = id.strip_prefix("free_") {
            let n = rest.parse().map_err(|_| ModelError::UnknownId(id.into()))?;
            return Ok(Self::FreeN { n });
        }
        if let Some(rest) = id.strip_prefix("contact5:") {
            return Ok(Self::Contact5 { lambda: rest.into() });
        }
        Err(ModelError::UnknownId(id.into()))
    }

    pub fn id(&self) -> String {
        match self {
            Self::HeisenbergA => "heisenberg_a".into(),
            Self::HeisenbergB => "heisenberg_b".into(),
            Self::FreeN { n } => format!("free_{n}"),
            Self::Contact5 { lambda } => format!("contact5:{lambda}"),
            Self::Custom(c) => c.name.clone().unwrap_or_else(|| "custom".into()),
        }
    }

    pub fn build(&self) -> Result<FramedGeometry, ModelError> {
        match self {
            Self::HeisenbergA => heisenberg_a(),
            Self::HeisenbergB => heisenberg_b(),
            Self::FreeN { n } => free_n(*n),
            Self::Contact5 { lambda } => contact5(&parse_lambda(lambda)?),
            Self::Custom(c) => build_custom(c),
        }
    }

    /// Unit horizontal velocity along `X_1`, `ν = 1`, at the origin.
    pub fn default_state(&self) -> Result<ExtremalState, ModelError> {
        let g = self.build()?;
        let mut s = ExtremalState::zeros(g.dim(), g.rank_d(), g.rank_q());
        s.alpha[0] = 1.0;
        s.nu.iter_mut().for_each(|v| *v = 1.0);
        Ok(s)
    }
}

fn c(v: f64) -> ExprNode {
    ExprNode::constant(v)
}

fn v(i: usize) -> ExprNode {
    ExprNode::var(i)
}

fn neg(e: ExprNode) -> ExprNode {
    ExprNode::mul(c(-1.0), e)
}

fn heis(name: &str, x2z: ExprNode, zscale: f64) -> Result<FramedGeometry, ModelError> {
    let x1 = vec![c(1.0), c(0.0), neg(v(1))];
    let x2 = vec![c(0.0), c(1.0), x2z];
    let z = vec![c(0.0), c(0.0), c(zscale)];
    Ok(FramedGeometry::new(name, vec![x1, x2], vec![z])?
        .with_coord_names(vec!["x1".into(), "x2".into(), "z".into()])?)
}

/// `X1 = ∂x1 − x2∂z`, `X2 = ∂x2`, `Z = ∂z`.
pub fn heisenberg_a() -> Result<FramedGeometry, ModelError> {
    heis("heisenberg_a", c(0.0), 1.0)
}

/// `X1 = ∂x1 − x2∂z`, `X2 = ∂x2 + x1∂z`, `Z = 2∂z`.
pub fn heisenberg_b() -> Result<FramedGeometry, ModelError> {
    heis("heisenberg_b", v(0), 2.0)
}

/// Free distribution of rank `n` on coordinates `(x1..xn, y12, y13, ...)`:
/// `X_i = ∂x^i − Σ_{j>i} x^j ∂y^{ij}`, `Z_{ij} = ∂y^{ij}`.
pub fn free_n(n: usize) -> Result<FramedGeometry, ModelError> {
    if n < 2 {
        return Err(ModelError::InvalidParameter(format!("free_n needs n >= 2, got {n}")));
    }
    let pairs = wedge_pairs(n);
    let m = n + pairs.len();
    let mut xs: Vec<FrameField> = (0..n)
        .map(|i| {
            let mut f = vec![c(0.0); m];
            f[i] = c(1.0);
            f
        })
        .collect();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        xs[i][n + p] = neg(v(j));
    }
    let zs = (0..pairs.len())
        .map(|p| {
            let mut f = vec![c(0.0); m];
            f[n + p] = c(1.0);
            f
        })
        .collect();
    let names = (1..=n)
        .map(|i| format!("x{i}"))
        .chain(pairs.iter().map(|(i, j)| format!("y{}{}", i + 1, j + 1)))
        .collect();
    Ok(FramedGeometry::new(format!("free_{n}"), xs, zs)?.with_coord_names(names)?)
}

/// `X1 = ∂x1 − x3∂z`, `X2 = λ(∂x2 − x4∂z)`, `X3 = ∂x3 + x1∂z`,
/// `X4 = λ(∂x4 + x2∂z)`, `Z = 2∂z`.
pub fn contact5(lambda: &ExprNode) -> Result<FramedGeometry, ModelError> {
    if lambda.min_dim() > 5 {
        return Err(ModelError::InvalidParameter("lambda references coordinates beyond 5".into()));
    }
    let lam = |e: ExprNode| ExprNode::mul(lambda.clone(), e);
    let x1 = vec![c(1.0), c(0.0), c(0.0), c(0.0), neg(v(2))];
    let x2 = vec![c(0.0), lam(c(1.0)), c(0.0), c(0.0), lam(neg(v(3)))];
    let x3 = vec![c(0.0), c(0.0), c(1.0), c(0.0), v(0)];
    let x4 = vec![c(0.0), c(0.0), c(0.0), lam(c(1.0)), lam(v(1))];
    let z = vec![c(0.0), c(0.0), c(0.0), c(0.0), c(2.0)];
    let names = ["x1", "x2", "x3", "x4", "z"].iter().map(|s| s.to_string()).collect();
    Ok(FramedGeometry::new(format!("contact5[{lambda}]"), vec![x1, x2, x3, x4], vec![z])?
        .with_coord_names(names)?)
}

fn build_custom(cm: &CustomModel) -> Result<FramedGeometry, ModelError> {
    let m = cm.x.len() + cm.z.len();
    if cm.x.is_empty() {
        return Err(ModelError::InvalidParameter("custom model needs at least one x field".into()));
    }
    let names: Vec<String> = match &cm.coords {
        Some(c) if c.len() != m => {
            return Err(ModelError::InvalidParameter(format!(
                "coords has {} names, frames imply dimension {m}",
                c.len()
            )))
        }
        Some(c) => c.clone(),
        None => (1..=m).map(|i| format!("x{i}")).collect(),
    };
    let aliases: Vec<(&str, usize)> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let p = |src: &str, field: String| {
        parse_with_aliases(src, m, &aliases).map_err(|source| ModelError::Expr { field, source })
    };
    let fields = |rows: &[Vec<String>], tag: &str| -> Result<Vec<FrameField>, ModelError> {
        rows.iter()
            .enumerate()
            .map(|(k, row)| {
                if row.len() != m {
                    return Err(ModelError::InvalidParameter(format!(
                        "{tag}[{k}] has {} entries, expected {m}",
                        row.len()
                    )));
                }
                row.iter().enumerate().map(|(j, s)| p(s, format!("{tag}[{k}][{j}]"))).collect()
            })
            .collect()
    };
    let gram = |spec: &Option<GramSpec>, tag: &str| -> Result<Gram, ModelError> {
        match spec {
            None => Ok(Gram::Identity),
            Some(GramSpec::Named(s)) if s == "identity" => Ok(Gram::Identity),
            Some(GramSpec::Named(s)) if s == "canonical" && tag == "gram_q" => Ok(Gram::CanonicalQ),
            Some(GramSpec::Named(s)) => Err(ModelError::InvalidParameter(format!("{tag}: unknown value `{s}`"))),
            Some(GramSpec::Matrix(rows)) => Ok(Gram::Expr(
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| r.iter().enumerate().map(|(j, s)| p(s, format!("{tag}[{i}][{j}]"))).collect())
                    .collect::<Result<_, _>>()?,
            )),
        }
    };
    let g = FramedGeometry::new(
        cm.name.clone().unwrap_or_else(|| "custom".into()),
        fields(&cm.x, "x")?,
        fields(&cm.z, "z")?,
    )?
    .with_coord_names(names.clone())?
    .with_gram_d(gram(&cm.gram_d, "gram_d")?)?
    .with_gram_q(gram(&cm.gram_q, "gram_q")?)?;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeisenbergFrame {
    A,
    B,
}

/// Explicit Heisenberg geodesics with parameters `K` (the constant `ν`) and `C1..C5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub frame: HeisenbergFrame,
    pub k: f64,
    pub c: [f64; 5],
}

impl ClosedForm {
    pub fn new(frame: HeisenbergFrame, k: f64, c: [f64; 5]) -> Result<Self, ModelError> {
        if k == 0.0 || !k.is_finite() {
            return Err(ModelError::ZeroK);
        }
        Ok(Self { frame, k, c })
    }

    /// Coordinates `(x1, x2, z)` at time `t`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let k = self.k;
        let [c1, c2, c3, c4, c5] = self.c;
        let th = k * t + c2;
        let x1 = c1 / k * th.cos() + c3;
        let x2 = c1 / k * th.sin() + c4;
        let z = match self.frame {
            HeisenbergFrame::A => {
                c1 * c1 / (2.0 * k) * t - c1 * c4 / k * th.cos() - c1 * c1 / (4.0 * k * k) * (2.0 * th).sin()
                    + c1 * c1 * c2 / (2.0 * k)
                    + c5
            }
            HeisenbergFrame::B => {
                c5 + c1 * c1 * c2 / k + c1 * c1 / k * t - c1 * c4 / k * th.cos() + c1 * c3 / k * th.sin()
            }
        };
        [x1, x2, z]
    }

    /// Frame state at `t` (velocity from the exact derivative).
    pub fn state(&self, t: f64) -> ExtremalState {
        let [c1, c2, ..] = self.c;
        let th = self.k * t + c2;
        ExtremalState::new(self.eval(t).to_vec(), vec![-c1 * th.sin(), c1 * th.cos()], vec![self.k])
    }

    pub fn geometry(&self) -> Result<FramedGeometry, ModelError> {
        match self.frame {
            HeisenbergFrame::A => heisenberg_a(),
            HeisenbergFrame::B => heisenberg_b(),
        }
    }
}

/// Convenience wrapper: closed-form coordinates at `t`.
pub fn closed_form_heisenberg(k: f64, c: [f64; 5], frame: HeisenbergFrame, t: f64) -> Result<[f64; 3], ModelError> {
    Ok(ClosedForm::new(frame, k, c)?.eval(t))
}

/// The ten-equation contact system written out by hand.
pub fn contact5_closed_rhs(lambda: &ExprNode, s: &ExtremalState) -> Result<ExtremalState, ModelError> {
    if s.x.len() != 5 || s.alpha.len() != 4 || s.nu.len() != 1 {
        return Err(ModelError::InvalidParameter("contact5 state has shape (5, 4, 1)".into()));
    }
    let x = &s.x;
    let err = |source| ModelError::Expr { field: "lambda".into(), source };
    let l = lambda.eval(x).map_err(err)?;
    if l == 0.0 {
        return Err(ModelError::LambdaZero(x.clone()));
    }
    let d = lambda.gradient(x).map_err(err)?;
    let (lx1, lx2, lx3, lx4, lz) = (d[0], d[1], d[2], d[3], d[4]);
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let [a1, a2, a3, a4] = [s.alpha[0], s.alpha[1], s.alpha[2], s.alpha[3]];
    let nu = s.nu[0];
    let p = (lx1 - x3 * lz) / l;
    let q = (lx3 + x1 * lz) / l;
    let r = lx4 + x2 * lz;
    let w = x4 * lz - lx2;
    let sq = a2 * a2 + a4 * a4;
    let xdot = vec![a1, l * a2, a3, l * a4, x1 * a3 - x3 * a1 + l * x2 * a4 - l * x4 * a2];
    let adot = vec![
        -p * sq - nu * a3,
        p * a1 * a2 + q * a2 * a3 + r * a2 * a4 + w * a4 * a4 - l * l * nu * a4,
        -q * sq + nu * a1,
        p * a1 * a4 + q * a3 * a4 - r * a2 * a2 - w * a2 * a4 + l * l * nu * a2,
    ];
    let nudot = vec![-2.0 * lz / l * sq];
    Ok(ExtremalState::new(xdot, adot, nudot))
}

/// Max abs difference between the hand-written system and the engine RHS.
pub fn contact5_system_check(lambda: &ExprNode, s: &ExtremalState) -> Result<f64, ModelError> {
    let hand = contact5_closed_rhs(lambda, s)?;
    let g = contact5(lambda)?;
    let eng = rhs_limit(s, &g)?;
    Ok(hand
        .to_flat()
        .iter()
        .zip(eng.to_flat())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

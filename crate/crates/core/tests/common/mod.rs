#![allow(dead_code)]

use nhgeo_core::models::ModelSpec;
use nhgeo_core::{ExtremalState, FramedGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(id: &str) -> FramedGeometry {
    ModelSpec::from_id(id).unwrap().build().unwrap()
}

/// The models used by the oracle comparisons.
pub const ORACLE_MODELS: &[&str] = &[
    "heisenberg_a",
    "heisenberg_b",
    "free_2",
    "free_3",
    "contact5:1",
    "contact5:1+x1^2",
];

pub fn point(rng: &mut impl Rng, m: usize, r: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(-r..r)).collect()
}

pub fn unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = point(rng, n, 1.0);
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s > 0.1 && s <= 1.0 {
            return v.iter().map(|x| x / s).collect();
        }
    }
}

/// `x` in a box of half-width `r`, `|α| = 1` in the frame metric when it is the identity, `|ν| ≤ nu_max`.
pub fn state(rng: &mut impl Rng, g: &FramedGeometry, r: f64, nu_max: f64) -> ExtremalState {
    let x = point(rng, g.dim(), r);
    let alpha = unit(rng, g.rank_d());
    let rad = rng.gen_range(0.0..nu_max);
    let nu = unit(rng, g.rank_q()).into_iter().map(|v| v * rad).collect();
    ExtremalState::new(x, alpha, nu)
}

pub fn sup_dist(a: &[Vec<f64>], b: &[Vec<f64>], m: usize) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (0..m).map(|k| (u[k] - v[k]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Rank-3 distribution in dimension 5 with a rank-2 complement and
/// non-constant Gram matrices on both blocks.
pub fn custom() -> FramedGeometry {
    use nhgeo_core::models::{CustomModel, GramSpec};
    let rows = |r: &[&[&str]]| r.iter().map(|v| v.iter().map(|s| s.to_string()).collect()).collect();
    let cm = CustomModel {
        name: Some("custom5".into()),
        coords: None,
        x: rows(&[
            &["1", "0", "0", "-x2", "0"],
            &["0", "1", "0", "x1", "-x3"],
            &["0", "0", "1+0.5*sin(x4)", "0", "x2"],
        ]),
        z: rows(&[&["0", "0", "0", "1", "0.2*x1"], &["0", "0", "0", "0.3*x3", "1"]]),
        gram_d: Some(GramSpec::Matrix(rows(&[
            &["1+x1^2", "0.3", "0"],
            &["0.3", "2+sin(x2)", "0.1*x5"],
            &["0", "0.1*x5", "1.5"],
        ]))),
        gram_q: Some(GramSpec::Matrix(rows(&[&["2", "0.5*cos(x1)"], &["0.5*cos(x1)", "1+x4^2"]]))),
    };
    ModelSpec::Custom(cm).build().unwrap()
}

/// Every built-in model plus the custom geometry.
pub fn all_models() -> Vec<FramedGeometry> {
    let mut v: Vec<FramedGeometry> = [
        "heisenberg_a",
        "heisenberg_b",
        "free_2",
        "free_3",
        "free_4",
        "contact5:1",
        "contact5:exp_x1",
        "contact5:1+x1^2",
        "contact5:exp_z",
    ]
    .iter()
    .map(|id| model(id))
    .collect();
    v.push(custom());
    v
}

//! Acceptance criteria 1-10. Each prints one PASS/FAIL line; the test fails
//! if any criterion fails.

mod common;

use std::f64::consts::PI;

use common::*;
use nhgeo_core::connection::torsion_data;
use nhgeo_core::extremal::{rhs_family, rhs_limit, RhsSpec};
use nhgeo_core::hamiltonian::compare_run;
use nhgeo_core::integrate::{integrate, Solution};
use nhgeo_core::models::{contact5_system_check, parse_lambda, ClosedForm, HeisenbergFrame};
use nhgeo_core::splitting::{
    apply_change, build_injj_matrix, lowered_levi, lowered_mixed_torsion, solve_canonical_splitting,
    torsion_change_law, SplittingChange,
};
use nhgeo_core::{ExtremalState, FramedGeometry, IntegratorConfig};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_limit(g: &FramedGeometry, s0: &ExtremalState, cfg: &IntegratorConfig) -> Solution {
    let (m, n) = (g.dim(), g.rank_d());
    integrate(|_, y: &[f64]| rhs_limit(&ExtremalState::from_flat(y, m, n), g).map(|d| d.to_flat()), &s0.to_flat(), cfg)
        .unwrap()
}

fn run_family(g: &FramedGeometry, s0: &ExtremalState, delta: f64, cfg: &IntegratorConfig) -> Solution {
    let (m, n) = (g.dim(), g.rank_d());
    let spec = RhsSpec::new(g, delta).unwrap();
    integrate(|_, y: &[f64]| rhs_family(&ExtremalState::from_flat(y, m, n), &spec).map(|d| d.to_flat()), &s0.to_flat(), cfg)
        .unwrap()
}

fn c1_heisenberg() -> Outcome {
    let cfg = IntegratorConfig::rk4(1e-4, 2.0 * PI, 629);
    let mut worst: f64 = 0.0;
    let mut helix: f64 = 0.0;
    let mut rate_err: f64 = 0.0;
    for frame in [HeisenbergFrame::A, HeisenbergFrame::B] {
        let cf = ClosedForm::new(frame, 1.0, [1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let g = cf.geometry().unwrap();
        let sol = run_limit(&g, &cf.state(0.0), &cfg);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            let want = cf.eval(*t);
            let d = (0..3).map(|k| (y[k] - want[k]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(d);
        }
        if frame == HeisenbergFrame::B {
            let (k, c1) = (cf.k, cf.c[0]);
            let z0 = sol.states[0][2];
            for (t, y) in sol.times.iter().zip(&sol.states) {
                helix = helix.max((y[2] - z0 - c1 * c1 / k * t).abs());
            }
            let last = sol.states.last().unwrap()[2];
            rate_err = ((last - z0) / (2.0 * PI) - c1 * c1 / k).abs();
        }
    }
    outcome(
        worst < 1e-6 && helix < 1e-6 && rate_err < 1e-6,
        format!("sup distance {worst:.3e} (< 1e-6), helix oscillation {helix:.3e}, drift rate error {rate_err:.3e}"),
    )
}

fn c2_c3_oracle() -> (Outcome, Outcome) {
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 1.0, 51);
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    let mut speed_worst: f64 = 0.0;
    for id in ORACLE_MODELS {
        let g = model(id);
        for _ in 0..20 {
            let s0 = state(&mut rng, &g, 1.0, 2.0);
            let rep = compare_run(&g, &s0, &cfg).unwrap();
            worst = worst.max(rep.max_deviation);
            speed_worst = speed_worst.max(rep.speed_drift);
        }
    }
    (
        outcome(worst < 1e-5, format!("max deviation {worst:.3e} (< 1e-5) over 6 models x 20 states")),
        outcome(speed_worst < 1e-8, format!("max speed drift {speed_worst:.3e} (< 1e-8)")),
    )
}

fn c4_free_nu() -> Outcome {
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 1.0, 101);
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let g = model(&format!("free_{n}"));
        for _ in 0..5 {
            let s0 = state(&mut rng, &g, 1.0, 2.0);
            let sol = run_limit(&g, &s0, &cfg);
            let off = g.dim() + g.rank_d();
            for y in &sol.states {
                for (a, nu) in s0.nu.iter().enumerate() {
                    worst = worst.max((y[off + a] - nu).abs());
                }
            }
        }
    }
    outcome(worst < 1e-10, format!("max |nu(t) - nu(0)| {worst:.3e} (< 1e-10)"))
}

fn c5_contact_nu() -> Outcome {
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 1.0, 101);
    let mut rng = rng(5);
    let g = model("contact5:1+x1^2");
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let s0 = state(&mut rng, &g, 1.0, 2.0);
        let sol = run_limit(&g, &s0, &cfg);
        for y in &sol.states {
            worst = worst.max((y[9] - s0.nu[0]).abs());
        }
    }
    outcome(worst < 1e-10, format!("max |nu(t) - nu(0)| {worst:.3e} (< 1e-10)"))
}

fn c6_eps_invariance() -> Outcome {
    let mut rng = rng(6);
    let mut worst: f64 = 0.0;
    let ids = ORACLE_MODELS.iter().chain(&["free_4", "contact5:exp_x1", "contact5:exp_z", "contact5:exp(x1*z)"]);
    for id in ids {
        let g = model(id);
        let scaled: Vec<FramedGeometry> = [0.1, 10.0].iter().map(|e| g.scaled_q(*e).unwrap()).collect();
        for _ in 0..100 {
            let p = point(&mut rng, g.dim(), 1.0);
            let base = torsion_data(&g.frame_data(&p).unwrap());
            for h in &scaled {
                let t = torsion_data(&h.frame_data(&p).unwrap());
                for (a, b) in [
                    (&base.levi, &t.levi),
                    (&base.t_mix_d, &t.t_mix_d),
                    (&base.t_mix_q, &t.t_mix_q),
                    (&base.gamma_d, &t.gamma_d),
                    (&base.gamma_q, &t.gamma_q),
                    (&base.connection, &t.connection),
                    (&base.torsion, &t.torsion),
                ] {
                    worst = worst.max(a.max_abs_diff(b));
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("max entry change {worst:.3e} (< 1e-12) under eps in {{0.1, 1, 10}}"))
}

fn c7_delta_sweep() -> Outcome {
    let cfg = IntegratorConfig::rk45(1e-12, 1e-14, 1.0, 101);
    let mut pass = true;
    let mut parts = vec![];
    for id in ["heisenberg_a", "free_2"] {
        let g = model(id);
        let mut s0 = ExtremalState::zeros(g.dim(), g.rank_d(), g.rank_q());
        s0.alpha[0] = 1.0;
        s0.nu[0] = 1.0;
        let base = run_limit(&g, &s0, &cfg);
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|d| sup_dist(&run_family(&g, &s0, *d, &cfg).states, &base.states, g.dim()))
            .collect();
        let ok = errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 1e-2 * errs[0];
        pass &= ok;
        parts.push(format!("{id}: {:.6e} {:.6e} {:.6e} ratio {:.15}", errs[0], errs[1], errs[2], errs[2] / errs[0]));
    }
    outcome(pass, format!("{} (ratio < 1e-2)", parts.join("; ")))
}

const CONTACT: &[&str] = &["heisenberg_a", "heisenberg_b", "contact5:1", "contact5:exp_x1", "contact5:1+x1^2", "contact5:exp_z"];

fn c8_splitting() -> Outcome {
    let mut rng = rng(8);
    let mut full = true;
    let mut u_worst: f64 = 0.0;
    let mut trip: f64 = 0.0;
    for id in CONTACT {
        let g = model(id);
        for _ in 0..5 {
            let p = point(&mut rng, g.dim(), 1.0);
            let sol = solve_canonical_splitting(&g, &p).unwrap();
            full &= sol.report.kernel_dim == 0;
            u_worst = u_worst.max(sol.u_after);
            let f0 = SplittingChange::from_rows(
                &(0..g.rank_q()).map(|_| point(&mut rng, g.rank_d(), 1.0)).collect::<Vec<_>>(),
            );
            let back = solve_canonical_splitting(&apply_change(&g, &f0).unwrap(), &p).unwrap();
            let want = &sol.change.f - &f0.f;
            trip = trip.max((&back.change.f - want).amax());
        }
    }
    let p3 = point(&mut rng, 6, 1.0);
    let k3 = build_injj_matrix(&model("free_3"), &p3).unwrap().kernel_dim;
    let p4 = point(&mut rng, 10, 1.0);
    let k4 = build_injj_matrix(&model("free_4"), &p4).unwrap().kernel_dim;
    let pass = full && u_worst < 1e-10 && trip < 1e-9 && k3 == 1 && k4 == 0;
    outcome(
        pass,
        format!(
            "(a) full rank {full}, |U| after {u_worst:.3e} (< 1e-10); (b) round trip {trip:.3e} (< 1e-9); (c) free_3 kernel {k3}; (d) free_4 kernel {k4}"
        ),
    )
}

fn c9_change_law() -> Outcome {
    let mut rng = rng(9);
    let ids = ["heisenberg_a", "heisenberg_b", "free_2", "free_3", "free_4", "contact5:exp_x1", "contact5:exp_z", "contact5:1+x1^2"];
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let g = model(ids[k % ids.len()]);
        let p = point(&mut rng, g.dim(), 1.0);
        let f = SplittingChange::from_rows(&(0..g.rank_q()).map(|_| point(&mut rng, g.rank_d(), 1.0)).collect::<Vec<_>>());
        let data = g.frame_data(&p).unwrap();
        let predicted = torsion_change_law(&lowered_mixed_torsion(&data), &lowered_levi(&data), &f);
        let h = apply_change(&g, &f).unwrap();
        let actual = lowered_mixed_torsion(&h.frame_data(&p).unwrap());
        worst = worst.max(predicted.max_abs_diff(&actual));
    }
    outcome(worst < 1e-9, format!("max prediction error {worst:.3e} (< 1e-9) over 50 cases"))
}

fn c10_transcription() -> Outcome {
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    for src in ["1", "exp(x1)", "1+x1^2"] {
        let lam = parse_lambda(src).unwrap();
        let g = model("contact5:1");
        for _ in 0..100 {
            let mut s = state(&mut rng, &g, 1.0, 2.0);
            s.alpha.iter_mut().for_each(|a| *a *= rng.gen_range(0.5..2.0));
            worst = worst.max(contact5_system_check(&lam, &s).unwrap());
        }
    }
    outcome(worst < 1e-10, format!("max residual {worst:.3e} (< 1e-10)"))
}

fn main() {
    let (c2, c3) = c2_c3_oracle();
    let results = [
        ("heisenberg closed forms", c1_heisenberg()),
        ("hamiltonian oracle equivalence", c2),
        ("constant speed", c3),
        ("free model nu conservation", c4_free_nu()),
        ("contact5 nu conservation", c5_contact_nu()),
        ("complement scaling invariance", c6_eps_invariance()),
        ("delta sweep convergence", c7_delta_sweep()),
        ("canonical splitting solver", c8_splitting()),
        ("torsion change law", c9_change_law()),
        ("contact5 transcription", c10_transcription()),
    ];
    for (k, (name, o)) in results.iter().enumerate() {
        println!("criterion {:>2} {}: {} | {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, (_, o))| !o.pass).map(|(k, _)| k + 1).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

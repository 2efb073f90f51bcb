#![allow(clippy::excessive_precision)]

//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use kroncov::design::{binary_correlation, rho_to_theta, DesignMatrix, FactorStructure, FactorizationSpec};
use kroncov::estimate::{
    fit, full_hessian, gaussian_loglik, md_estimate, score, FitOptions, Method, ReturnPanel, SampleStats, Weight,
};
use kroncov::infer::{extreme_log_eigs, jhat, mvp_log_variance, overid_test, spectral_params, JMatrix, VarianceMode};
use kroncov::matcore::{frechet_exp_kernel, frechet_log_kernel, spd_eigen, spd_log, sym_exp, SymMatrix};
use kroncov::portfolio::{mvp_weights, mvp_weights_dense};
use kroncov::select::{select_model, SelectOptions};
use kroncov::simlab::{run_experiment, Dgp, SimConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn random_spd(n: usize, r: &mut ChaCha8Rng) -> SymMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| normal(r));
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
    SymMatrix::symmetrize(&m).unwrap()
}

fn random_sym(n: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(r));
    (&a + a.transpose()) * 0.5
}

/// Rows are `N(0, Σ)` draws.
fn gaussian_panel(sigma: &DMatrix<f64>, t: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let l = sigma.clone().cholesky().expect("SPD").l();
    let z = DMatrix::from_fn(sigma.nrows(), t, |_, _| normal(r));
    (l * z).transpose()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

// ---------------------------------------------------------------- 1

fn design_exactness() -> Outcome {
    let d = DesignMatrix::new(FactorizationSpec::new(vec![2, 2, 2]).unwrap(), FactorStructure::Correlation).unwrap();
    let g = d.e_star().gram();
    #[rustfmt::skip]
    let expected = DMatrix::from_row_slice(6, 6, &[
        8., 0., 8., 0., 8., 0.,
        0., 4., 0., 0., 0., 0.,
        8., 0., 8., 0., 8., 0.,
        0., 0., 0., 4., 0., 0.,
        8., 0., 8., 0., 8., 0.,
        0., 0., 0., 0., 0., 4.,
    ]);
    let mut ok = g == expected;
    let mut eig: Vec<f64> = g.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let eig_err = eig.iter().zip([0.0, 0.0, 4.0, 4.0, 4.0, 24.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= eig_err < 1e-12;
    for v in 1..=8 {
        let d = DesignMatrix::binary(v).unwrap();
        let n = (1usize << v) as f64;
        let mut want = DMatrix::identity(v + 1, v + 1) * (n / 2.0);
        want[(0, 0)] = n;
        ok &= *d.gram() == want;
    }
    Outcome { pass: ok, detail: format!("E*'E* exact: {}, eigenvalue error {eig_err:.1e}", g == expected) }
}

// ---------------------------------------------------------------- 2

const GK_NODES: [f64; 8] = [
    0.991455371120812639,
    0.949107912342758525,
    0.864864423359769073,
    0.741531185599394440,
    0.586087235467691130,
    0.405845151377397167,
    0.207784955007898468,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529225,
    0.063092092629978553,
    0.104790010322250184,
    0.140653259715525919,
    0.169004726639267903,
    0.190350578064785410,
    0.204432940075298892,
    0.209482141084727828,
];
const GAUSS_WEIGHTS: [f64; 4] =
    [0.129484966168869693, 0.279705391489276668, 0.381830050505118945, 0.417959183673469388];

/// Adaptive Gauss-Kronrod (7, 15) on a matrix-valued integrand; `tol` is an
/// absolute max-entry error density per unit length.
fn quadrature(f: &dyn Fn(f64) -> DMatrix<f64>, a: f64, b: f64, tol: f64, depth: usize) -> DMatrix<f64> {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut kron = f(c) * GK_WEIGHTS[7];
    let mut gauss = f(c) * GAUSS_WEIGHTS[3];
    for i in 0..7 {
        let pair = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        if i % 2 == 1 {
            gauss += &pair * GAUSS_WEIGHTS[i / 2];
        }
        kron += pair * GK_WEIGHTS[i];
    }
    let (kron, gauss) = (kron * h, gauss * h);
    if depth == 0 || max_abs(&(&kron - &gauss)) <= tol * (b - a) {
        return kron;
    }
    quadrature(f, a, c, tol, depth - 1) + quadrature(f, c, b, tol, depth - 1)
}

fn calculus_oracles() -> Outcome {
    let mut r = rng(2);
    let (mut round, mut dlog, mut dexp, mut ident) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..50 {
        let n = [2, 4, 8, 16][k % 4];
        let theta = random_spd(n, &mut r);
        let log = spd_log(&theta).unwrap();
        let back = sym_exp(&log);
        round = round.max((back.matrix() - theta.matrix()).norm() / theta.matrix().norm());

        let x = random_sym(n, &mut r);
        // d log Θ [X] = ∫₀^∞ (Θ + tI)⁻¹ X (Θ + tI)⁻¹ dt, with t = s/(1 − s).
        let th = theta.matrix().clone();
        let integrand = |s: f64| {
            if s >= 1.0 {
                return DMatrix::zeros(n, n);
            }
            let t = s / (1.0 - s);
            let inv = (&th + DMatrix::identity(n, n) * t).try_inverse().unwrap();
            &inv * &x * &inv / ((1.0 - s) * (1.0 - s))
        };
        let oracle = quadrature(&integrand, 0.0, 1.0, 1e-11, 30);
        let h = frechet_log_kernel(&theta).unwrap().apply(&x);
        dlog = dlog.max(max_abs(&(&h - &oracle)) / max_abs(&oracle).max(1.0));

        // d exp Ω [X] = ∫₀¹ e^{sΩ} X e^{(1−s)Ω} ds.
        let lm = log.matrix().clone();
        let integrand = |s: f64| {
            let a = sym_exp(&SymMatrix::symmetrize(&(&lm * s)).unwrap());
            let b = sym_exp(&SymMatrix::symmetrize(&(&lm * (1.0 - s))).unwrap());
            a.matrix() * &x * b.matrix()
        };
        let oracle = quadrature(&integrand, 0.0, 1.0, 1e-11, 30);
        let e = frechet_exp_kernel(&log).apply(&x);
        dexp = dexp.max(max_abs(&(&e - &oracle)) / max_abs(&oracle).max(1.0));

        let comp =
            frechet_exp_kernel(&log).to_dense().unwrap() * frechet_log_kernel(&theta).unwrap().to_dense().unwrap();
        ident = ident.max(max_abs(&(comp - DMatrix::identity(n * n, n * n))));
    }
    Outcome {
        pass: round < 1e-9 && dlog < 1e-7 && dexp < 1e-7 && ident < 1e-8,
        detail: format!("round trip {round:.1e}, dlog {dlog:.1e}, dexp {dexp:.1e}, Ψ₁∘H − I {ident:.1e}"),
    }
}

// ---------------------------------------------------------------- 3

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-3)
}

fn derivative_consistency() -> Outcome {
    let mut r = rng(3);
    let configs: [(&[usize], FactorStructure); 5] = [
        (&[2], FactorStructure::Correlation),
        (&[2], FactorStructure::Covariance),
        (&[2, 2], FactorStructure::Correlation),
        (&[2, 2], FactorStructure::Covariance),
        (&[4], FactorStructure::Covariance),
    ];
    let (mut worst_s, mut worst_h) = (0.0f64, 0.0f64);
    for k in 0..20 {
        let (dims, st) = configs[k % configs.len()];
        let d = DesignMatrix::new(FactorizationSpec::new(dims.to_vec()).unwrap(), st).unwrap();
        let n = d.n();
        let t = 50 + r.random_range(0..200);
        let m = random_spd(n, &mut r);
        let stats = SampleStats::from_moment(m, t);
        let theta: Vec<f64> = (0..d.q()).map(|_| 0.3 * normal(&mut r)).collect();
        let g = score(&d, &theta, &stats).unwrap();
        let h = 1e-5;
        let fd = DVector::from_fn(d.q(), |i, _| {
            let (mut p, mut q) = (theta.clone(), theta.clone());
            p[i] += h;
            q[i] -= h;
            (gaussian_loglik(&d, &p, &stats).unwrap() - gaussian_loglik(&d, &q, &stats).unwrap()) / (2.0 * h)
        });
        worst_s = worst_s.max(rel(&g, &fd));
        let hess = full_hessian(&d, &theta, &stats).unwrap();
        for i in 0..d.q() {
            let (mut p, mut q) = (theta.clone(), theta.clone());
            p[i] += h;
            q[i] -= h;
            let col = (score(&d, &p, &stats).unwrap() - score(&d, &q, &stats).unwrap()) / (2.0 * h);
            worst_h = worst_h.max(rel(&hess.column(i).into_owned(), &col));
        }
    }
    Outcome {
        pass: worst_s < 1e-5 && worst_h < 1e-4,
        detail: format!("score rel {worst_s:.1e}, Hessian rel {worst_h:.1e}"),
    }
}

// ---------------------------------------------------------------- 4

fn exact_recovery() -> Outcome {
    let mut r = rng(4);
    let (mut err, mut inv) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let v = 1 + k % 5;
        let st = if k % 2 == 0 { FactorStructure::Correlation } else { FactorStructure::Covariance };
        let d = DesignMatrix::new(FactorizationSpec::binary(v).unwrap(), st).unwrap();
        let theta0: Vec<f64> = (0..d.q()).map(|_| 0.5 * normal(&mut r)).collect();
        let m = sym_exp(&d.omega(&theta0).unwrap());
        let est = md_estimate(&m, &d, &Weight::Identity).unwrap();
        err = err.max(est.theta.iter().zip(&theta0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        if k < 10 {
            let nn = d.n() * (d.n() + 1) / 2;
            let w = random_spd(nn, &mut r).into_matrix();
            let ew = md_estimate(&m, &d, &Weight::Matrix(w)).unwrap();
            inv = inv.max(ew.theta.iter().zip(&est.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    Outcome { pass: err < 1e-10 && inv < 1e-10, detail: format!("recovery {err:.1e}, weight invariance {inv:.1e}") }
}

// ---------------------------------------------------------------- 5, 6

fn kronecker_simulation() -> Outcome {
    let res = run_experiment(&SimConfig::new(Dgp::KroneckerTrue, 16, 300, 200, 5)).unwrap();
    let (p1, p2, vr) = (res.median_prial1.unwrap(), res.median_prial2.unwrap(), res.median_vr.unwrap());
    Outcome {
        pass: (0.81..=0.91).contains(&p1) && (0.84..=0.94).contains(&p2) && (0.96..=0.99).contains(&vr),
        detail: format!("PRIAL1 {p1:.3}, PRIAL2 {p2:.3}, VR {vr:.4} ({} failed reps)", res.skipped),
    }
}

fn lognormal_simulation() -> Outcome {
    let mut p1 = Vec::new();
    let mut p2_first = 0.0;
    for (i, a2) in [0.05, 0.5, 1.0].into_iter().enumerate() {
        let res = run_experiment(&SimConfig::new(Dgp::LognormalDiag { alpha2: a2 }, 64, 128, 200, 6)).unwrap();
        if i == 0 {
            p2_first = res.median_prial2.unwrap();
        }
        p1.push(res.median_prial1.unwrap());
    }
    let decreasing = p1[0] > p1[1] - 0.02 && p1[1] > p1[2] - 0.02;
    Outcome {
        pass: p2_first > 0.85 && decreasing,
        detail: format!("PRIAL2(0.05) {p2_first:.3}, PRIAL1 over α² {:.3} / {:.3} / {:.3}", p1[0], p1[1], p1[2]),
    }
}

// ---------------------------------------------------------------- 7

fn overid_rate(sigma: &DMatrix<f64>, design: &DesignMatrix, reps: usize, seed: u64) -> (f64, usize) {
    let out: Vec<(bool, usize)> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(seed);
            r.set_stream(k as u64);
            let x = gaussian_panel(sigma, 4000, &mut r);
            let res = overid_test(&ReturnPanel::standardized_known(x).unwrap(), design).unwrap();
            (res.test.p_value < 0.05, res.test.df)
        })
        .collect();
    (out.iter().filter(|o| o.0).count() as f64 / reps as f64, out[0].1)
}

fn overid_size_power() -> Outcome {
    let design = DesignMatrix::binary(3).unwrap();
    let truth = binary_correlation(&[0.5, 0.3, 0.6]).unwrap().materialize().unwrap().into_matrix();
    let (size, df) = overid_rate(&truth, &design, 500, 7);
    let mut alt = truth.clone();
    alt[(0, 1)] += 0.15;
    alt[(1, 0)] += 0.15;
    let (power, _) = overid_rate(&alt, &design, 200, 77);
    Outcome {
        pass: (0.02..=0.09).contains(&size) && df == 32 && power > 0.8,
        detail: format!("size {size:.3}, df {df}, power {power:.3}"),
    }
}

// ---------------------------------------------------------------- 8

fn clt_coverage() -> Outcome {
    let design = DesignMatrix::binary(4).unwrap();
    let rho = [0.4, 0.2, 0.5, 0.3];
    let truth = binary_correlation(&rho).unwrap().materialize().unwrap().into_matrix();
    let theta1 = rho_to_theta(&rho).unwrap()[0];
    let hits: Vec<bool> = (0..500)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(8);
            r.set_stream(k as u64);
            // Two-step pipeline: μ and D estimated, then θ by MD.
            let panel = ReturnPanel::new(gaussian_panel(&truth, 1000, &mut r), Vec::new()).unwrap();
            let f = fit(&panel, &design, &FitOptions::default()).unwrap();
            let j = jhat(&panel, &design, &Weight::Identity, VarianceMode::Empirical).unwrap();
            let sp = spectral_params(&f.estimate.theta, &j, panel.t()).unwrap();
            let (lo, hi) = sp.mean.interval(1.959963984540054);
            lo <= theta1 && theta1 <= hi
        })
        .collect();
    let cov = hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64;
    Outcome { pass: (0.90..=0.98).contains(&cov), detail: format!("coverage {cov:.3}") }
}

// ---------------------------------------------------------------- 9

fn functional_identities() -> Outcome {
    let mut r = rng(9);
    let (mut ext, mut mvp, mut w_err) = (0.0f64, 0.0f64, 0.0f64);
    for v in 1..=6 {
        let rho: Vec<f64> = (0..v).map(|_| r.random_range(-0.8..0.8)).collect();
        let theta = rho_to_theta(&rho).unwrap();
        let j = JMatrix { matrix: DMatrix::identity(v + 1, v + 1), mode: VarianceMode::Gaussian };
        let dense = binary_correlation(&rho).unwrap().materialize().unwrap();
        let eig = spd_eigen(&dense).unwrap();
        let e = extreme_log_eigs(&theta, &j, 100).unwrap();
        ext = ext.max((e.omega_max.value.exp() - eig.max_eigenvalue()).abs());
        ext = ext.max((e.omega_min.value.exp() - eig.min_eigenvalue()).abs());
        let ones = DVector::from_element(dense.dim(), 1.0);
        let inv_one = dense.matrix().clone().cholesky().unwrap().solve(&ones);
        let lv = mvp_log_variance(&theta, &j, 100).unwrap().value;
        mvp = mvp.max((lv.exp() - 1.0 / ones.dot(&inv_one)).abs());
    }
    let shapes: [&[usize]; 5] = [&[2, 2, 2, 2, 2, 2], &[4, 4, 4], &[3, 5], &[2, 3, 4], &[8, 8]];
    for dims in shapes {
        let factors: Vec<SymMatrix> = dims.iter().map(|&k| random_spd(k, &mut r)).collect();
        let n: usize = dims.iter().product();
        let d: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
        let kron = mvp_weights(&factors, &d).unwrap();
        let theta = kroncov::design::KroneckerCorrelation::new(factors).unwrap().materialize().unwrap();
        let sigma = theta.scale_by_diagonal_sqrt(&d);
        let dense = mvp_weights_dense(&sigma).unwrap();
        w_err = w_err.max((kron.weights - dense.weights).abs().max());
    }
    Outcome {
        pass: ext < 1e-10 && mvp < 1e-10 && w_err < 1e-10,
        detail: format!("extreme eig {ext:.1e}, MVP variance {mvp:.1e}, weights {w_err:.1e}"),
    }
}

// ---------------------------------------------------------------- 10

fn selection_consistency() -> Outcome {
    let truth = binary_correlation(&[0.5, 0.3, 0.6]).unwrap().materialize().unwrap();
    let scales = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5, 1.0, 0.8, 1.2, 3.0]);
    let sigma = truth.scale_by_diagonal_sqrt(scales.as_slice()).into_matrix();
    let candidates: Vec<FactorizationSpec> =
        [vec![8], vec![4, 2], vec![2, 2, 2]].into_iter().map(|d| FactorizationSpec::new(d).unwrap()).collect();
    let opts =
        SelectOptions { fit: FitOptions { method: Method::Qmle, ..FitOptions::default() }, ..SelectOptions::default() };
    let wins = (0..100)
        .into_par_iter()
        .filter(|&k| {
            let mut r = rng(10);
            r.set_stream(k as u64);
            let names = (0..8).map(|i| format!("s{i}")).collect();
            let panel = ReturnPanel::new(gaussian_panel(&sigma, 1000, &mut r), names).unwrap();
            let rep = select_model(&panel, &candidates, &opts).unwrap();
            rep.ranked.first().map(|c| c.spec.dims() == [2, 2, 2]).unwrap_or(false)
        })
        .count();
    Outcome { pass: wins >= 90, detail: format!("true spec chosen in {wins}/100") }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("design-matrix exactness", Duration::from_secs(1), design_exactness),
        ("matrix-calculus oracles", Duration::from_secs(30), calculus_oracles),
        ("derivative consistency", Duration::from_secs(60), derivative_consistency),
        ("exact MD recovery", Duration::from_secs(30), exact_recovery),
        ("Kronecker-DGP simulation (n=16)", Duration::from_secs(600), kronecker_simulation),
        ("log-normal diagonal simulation (n=64)", Duration::from_secs(600), lognormal_simulation),
        ("over-identification size and power", Duration::from_secs(900), overid_size_power),
        ("CLT coverage of spectral mean", Duration::from_secs(900), clt_coverage),
        ("functional identities", Duration::from_secs(10), functional_identities),
        ("BIC selection consistency", Duration::from_secs(300), selection_consistency),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} criteria failed", failed);
}

//! Shared fixtures and property checks. Each check returns a
//! `TestCaseError` so it can run inside `proptest!` and inside an explicit
//! `TestRunner` from the acceptance binary.
#![allow(dead_code)]

use std::ops::ControlFlow;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use saddle_scout::dimer::{
    dimer_search, dimer_step_with, kernel_adjacency, particle_dimer_search, CutoffMode,
    DimerConfig, GraphLaplacian, ParticleDimerConfig,
};
use saddle_scout::potentials::{
    by_name, LatticeSpec, Lj7, MorseParams, MorseVacancy, Potential, SharedPotential,
};
use saddle_scout::rng::stream_rng;
use saddle_scout::spectral::min_two_eigpairs;
use saddle_scout::sspd::{
    diagnostics_csv, em_step, ess, initial_tangents, jittered_positions, run_sspd,
    stratified_resample, Ensemble, SspdConfig,
};

pub type Check = Result<(), TestCaseError>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($arg)+)));
        }
    };
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `V = x^T A x / 2` with a symmetric 2x2 `A`.
pub struct Quadratic {
    pub a: [[f64; 2]; 2],
}

impl Potential for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let g = self.hvp_vec(x, x);
        0.5 * (x[0] * g[0] + x[1] * g[1])
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.hvp(x, x, grad);
    }

    fn hvp(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.a[0][0] * y[0] + self.a[0][1] * y[1];
        out[1] = self.a[1][0] * y[0] + self.a[1][1] * y[1];
    }
}

/// Rotation of `diag(l1, l2)` by `theta`: eigenvectors are
/// `(cos, sin)` for `l1` and `(-sin, cos)` for `l2`.
pub fn rotated_quadratic(l1: f64, l2: f64, theta: f64) -> Quadratic {
    let (s, c) = theta.sin_cos();
    Quadratic {
        a: [
            [l1 * c * c + l2 * s * s, (l1 - l2) * c * s],
            [(l1 - l2) * c * s, l1 * s * s + l2 * c * c],
        ],
    }
}

pub fn vacancy_small() -> MorseVacancy {
    MorseVacancy::new(
        LatticeSpec::triangular_vacancy(9, 2.0, MorseParams::default(), None).unwrap(),
    )
    .unwrap()
}

pub fn vacancy_small_cut() -> MorseVacancy {
    MorseVacancy::new(
        LatticeSpec::triangular_vacancy(9, 2.0, MorseParams::default(), Some(2.5)).unwrap(),
    )
    .unwrap()
}

/// Every registered potential plus the cut-off Morse variant, with a
/// centre and a box half-width for sampling test points.
pub fn sampled_potentials() -> Vec<(String, SharedPotential, Vec<f64>, f64)> {
    let mut out: Vec<(String, SharedPotential, Vec<f64>, f64)> = vec![
        (
            "double-well-flat".into(),
            by_name("double-well-flat", None).unwrap(),
            vec![0.0, 0.0],
            5.0,
        ),
        (
            "double-well-quartic".into(),
            by_name("double-well-quartic", None).unwrap(),
            vec![0.0, 0.0],
            2.0,
        ),
        (
            "mueller-brown".into(),
            by_name("mueller-brown", None).unwrap(),
            vec![-0.2, 0.8],
            1.2,
        ),
        (
            "challenge-2d".into(),
            by_name("challenge-2d", None).unwrap(),
            vec![2.5, 2.5],
            3.5,
        ),
        (
            "lj7".into(),
            by_name("lj7", None).unwrap(),
            Lj7::hexagon(2f64.powf(1.0 / 6.0)),
            0.12,
        ),
    ];
    let v = vacancy_small();
    out.push((
        "morse-vacancy".into(),
        std::sync::Arc::new(v.clone()),
        v.spec().reference_coordinates(),
        0.12,
    ));
    let c = vacancy_small_cut();
    out.push((
        "morse-vacancy-cutoff".into(),
        std::sync::Arc::new(c.clone()),
        c.spec().reference_coordinates(),
        0.12,
    ));
    out
}

/// Offsets in `[-1, 1]^d`, scaled by the caller's half-width.
pub fn offsets(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, d)
}

pub fn shifted(center: &[f64], off: &[f64], half: f64) -> Vec<f64> {
    center.iter().zip(off).map(|(c, o)| c + half * o).collect()
}

/// Central differences of `value` against `gradient`.
pub fn check_gradient_fd(pot: &dyn Potential, x: &[f64]) -> Check {
    let g = pot.gradient_vec(x);
    let mut fd = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let vp = pot.value(&xp);
        xp[i] = x[i] - h;
        let vm = pot.value(&xp);
        xp[i] = x[i];
        fd[i] = (vp - vm) / (2.0 * h);
    }
    let err = dist(&fd, &g) / norm(&g).max(1e-3);
    ensure!(
        err <= 1e-5,
        "{}: finite-difference gradient relative error {err:e} at {x:?}",
        pot.name()
    );
    Ok(())
}

pub fn check_hvp_matches_hessian(pot: &dyn Potential, x: &[f64], y: &[f64]) -> Check {
    let h = pot.hessian(x);
    let hv = pot.hvp_vec(x, y);
    let dense: Vec<f64> = (0..x.len())
        .map(|i| (0..x.len()).map(|j| h[(i, j)] * y[j]).sum())
        .collect();
    let err = dist(&hv, &dense) / norm(&dense).max(1e-300);
    ensure!(
        err <= 1e-10,
        "{}: hvp vs dense Hessian relative error {err:e}",
        pot.name()
    );
    let asym = (&h - h.transpose()).abs().max();
    ensure!(
        asym <= 1e-12 * h.abs().max().max(1.0),
        "{}: Hessian asymmetry {asym:e}",
        pot.name()
    );
    Ok(())
}

pub fn check_hvp_linear(
    pot: &dyn Potential,
    x: &[f64],
    y1: &[f64],
    y2: &[f64],
    a: f64,
    b: f64,
) -> Check {
    let comb: Vec<f64> = y1.iter().zip(y2).map(|(p, q)| a * p + b * q).collect();
    let lhs = pot.hvp_vec(x, &comb);
    let h1 = pot.hvp_vec(x, y1);
    let h2 = pot.hvp_vec(x, y2);
    let rhs: Vec<f64> = h1.iter().zip(&h2).map(|(p, q)| a * p + b * q).collect();
    let scale = (a.abs() * norm(&h1) + b.abs() * norm(&h2)).max(1e-300);
    let err = dist(&lhs, &rhs) / scale;
    ensure!(err <= 1e-12, "{}: hvp linearity error {err:e}", pot.name());
    Ok(())
}

pub fn check_ess_bounds(w: &[f64], scale: f64) -> Check {
    let e = ess(w).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let n = w.len() as f64;
    ensure!(
        e >= 1.0 - 1e-12 && e <= n * (1.0 + 1e-12),
        "ESS {e} outside [1, {n}]"
    );
    let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
    let es = ess(&scaled).map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure!(
        (es - e).abs() <= 1e-12 * e,
        "ESS not scale invariant: {e} vs {es}"
    );
    Ok(())
}

/// Largest |z| of the ancestor counts against `N w_i / sum w` over
/// `trials` independent stratified draws.
pub fn resampling_max_z(w: &[f64], trials: usize, seed: u64) -> f64 {
    let n = w.len();
    let total: f64 = w.iter().sum();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for t in 0..trials {
        let mut rng = stream_rng(seed, 0, t as u64);
        let j = stratified_resample(w, &mut rng).unwrap();
        let mut counts = vec![0.0; n];
        for a in j {
            counts[a] += 1.0;
        }
        for i in 0..n {
            sum[i] += counts[i];
            sum_sq[i] += counts[i] * counts[i];
        }
    }
    let tr = trials as f64;
    (0..n)
        .map(|i| {
            let mean = sum[i] / tr;
            let var = (sum_sq[i] / tr - mean * mean).max(0.0);
            let expected = n as f64 * w[i] / total;
            let se = (var / tr).sqrt();
            if se == 0.0 {
                if (mean - expected).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (mean - expected) / se
            }
        })
        .fold(0.0, |m: f64, z: f64| m.max(z.abs()))
}

pub fn check_resampling_unbiased(w: &[f64], seed: u64) -> Check {
    let z = resampling_max_z(w, 10_000, seed);
    ensure!(
        z <= 3.0,
        "ancestor counts deviate by {z:.2} standard errors for w = {w:?}"
    );
    Ok(())
}

/// Laplacian rows sum to zero (constant states are fixed) and the
/// adjacency is symmetric with an empty diagonal.
pub fn check_laplacian(
    points: &[f64],
    dim: usize,
    sigma: f64,
    r: f64,
    mode: CutoffMode,
    u: &[f64],
) -> Check {
    let adj = kernel_adjacency(points, dim, sigma, r, mode);
    let w = adj.to_dense();
    let m = w.len();
    for i in 0..m {
        ensure!(w[i][i] == 0.0, "nonzero diagonal at {i}");
        for j in 0..m {
            ensure!(w[i][j] == w[j][i], "asymmetric adjacency at ({i}, {j})");
            ensure!(w[i][j] >= 0.0, "negative weight at ({i}, {j})");
        }
    }
    let lap = GraphLaplacian::new(adj, dim);
    let mut out = vec![0.0; m * dim];
    let constant: Vec<f64> = (0..m).flat_map(|_| u[..dim].to_vec()).collect();
    lap.apply(&constant, &mut out);
    ensure!(
        out.iter().all(|v| v.abs() <= 1e-12 * (1.0 + norm(u))),
        "Laplacian does not annihilate constants"
    );
    // column sums vanish as well, so sum_i (Lambda u)_i = 0 for any u
    lap.apply(u, &mut out);
    for k in 0..dim {
        let s: f64 = (0..m).map(|i| out[i * dim + k]).sum();
        let scale: f64 = (0..m).map(|i| out[i * dim + k].abs()).sum::<f64>().max(1.0);
        ensure!(
            s.abs() <= 1e-12 * scale,
            "Laplacian component {k} sums to {s:e}"
        );
    }
    Ok(())
}

/// With `r = 0` in literal mode the particle dimer equals independent runs.
pub fn check_r0_reduction(pot: &dyn Potential, starts: &[f64], cfg: &DimerConfig) -> Check {
    let d = pot.dim();
    let pcfg = ParticleDimerConfig {
        dimer: cfg.clone(),
        m: starts.len() / d,
        r: 0.0,
        cutoff_mode: CutoffMode::LiteralBelow,
        freeze_convex: true,
        ..ParticleDimerConfig::default()
    };
    let joint = particle_dimer_search(pot, starts, &pcfg)
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure!(joint.n_edges == 0, "r = 0 produced {} edges", joint.n_edges);
    for (i, o) in joint.outcomes.iter().enumerate() {
        let solo = dimer_search(pot, &starts[i * d..(i + 1) * d], cfg);
        ensure!(
            o.status == solo.status,
            "particle {i}: status {:?} vs independent {:?}",
            o.status,
            solo.status
        );
        if o.is_success() {
            ensure!(
                dist(&o.point, &solo.point) <= 1e-12,
                "particle {i}: endpoints differ"
            );
        }
    }
    Ok(())
}

/// Dimer iterates on a rotated quadratic saddle with eigenvalues `-a < 0 < b`
/// against `u_k = (1 - delta a)^k (e_1 . u0) e_1 + (1 - delta b)^k (e_2 . u0) e_2`.
pub fn check_dimer_closed_form(
    a: f64,
    b: f64,
    theta: f64,
    delta: f64,
    u0: [f64; 2],
    steps: usize,
) -> Check {
    let q = rotated_quadratic(-a, b, theta);
    let (s, c) = theta.sin_cos();
    let e1 = [c, s];
    let e2 = [-s, c];
    let c1 = e1[0] * u0[0] + e1[1] * u0[1];
    let c2 = e2[0] * u0[0] + e2[1] * u0[1];
    let cfg = DimerConfig {
        delta,
        ..DimerConfig::default()
    };
    let mut u = u0.to_vec();
    for k in 1..=steps {
        u = saddle_scout::dimer::dimer_step(&q, &u, &cfg)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let f1 = (1.0 - delta * a).powi(k as i32) * c1;
        let f2 = (1.0 - delta * b).powi(k as i32) * c2;
        let exact = [f1 * e1[0] + f2 * e2[0], f1 * e1[1] + f2 * e2[1]];
        let err = dist(&u, &exact);
        ensure!(
            err <= 1e-12 * norm(&u0).max(1e-300),
            "dimer step {k}: error {err:e}"
        );
    }
    Ok(())
}

/// Zero-temperature tangent dynamics on a quadratic:
/// `Y_k = sum_i (1 - delta l_i)^k (e_i . Y0) e_i`.
pub fn check_tangent_closed_form(
    l1: f64,
    l2: f64,
    theta: f64,
    delta: f64,
    x0: [f64; 2],
    y0: [f64; 2],
    steps: usize,
) -> Check {
    let q = rotated_quadratic(l1, l2, theta);
    let (s, c) = theta.sin_cos();
    let e1 = [c, s];
    let e2 = [-s, c];
    let c1 = e1[0] * y0[0] + e1[1] * y0[1];
    let c2 = e2[0] * y0[0] + e2[1] * y0[1];
    let cfg = SspdConfig {
        delta,
        beta_inv: 0.0,
        rho_ess: 0.5,
        m: 1,
        n_particles: 1,
        max_iter: steps,
        seed: 0,
        resampling: false,
    };
    let mut ens = Ensemble::new(2, x0.to_vec(), y0.to_vec())
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    for k in 1..=steps {
        em_step(&mut ens, &q, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let f1 = (1.0 - delta * l1).powi(k as i32) * c1;
        let f2 = (1.0 - delta * l2).powi(k as i32) * c2;
        let exact = [f1 * e1[0] + f2 * e2[0], f1 * e1[1] + f2 * e2[1]];
        let err = dist(ens.tangent(0), &exact);
        ensure!(
            err <= 1e-12 * norm(&exact).max(norm(&y0)),
            "tangent step {k}: error {err:e}"
        );
    }
    Ok(())
}

/// The dimer step and the index classification do not depend on the sign
/// of the returned eigenvector.
pub fn check_sign_flip(pot: &dyn Potential, x: &[f64], delta: f64) -> Check {
    let cert = min_two_eigpairs(pot, x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let g = pot.gradient_vec(x);
    let flipped: Vec<f64> = cert.v1.iter().map(|v| -v).collect();
    let a = dimer_step_with(x, &g, &cert.v1, delta);
    let b = dimer_step_with(x, &g, &flipped, delta);
    let err = dist(&a, &b);
    ensure!(
        err <= 1e-14 * (norm(x) + delta * norm(&g)).max(1e-300),
        "sign flip changes the step by {err:e}"
    );
    let mut flipped_cert = cert.clone();
    flipped_cert.v1 = flipped;
    ensure!(
        flipped_cert.is_index1() == cert.is_index1(),
        "classification depends on the sign of v1"
    );
    Ok(())
}

/// Diagnostics CSV of a short noisy run.
pub fn sspd_fingerprint(
    pot: &dyn Potential,
    x0: &[f64],
    seed: u64,
    n: usize,
    iters: usize,
) -> String {
    let cfg = SspdConfig {
        delta: 1e-3,
        beta_inv: 0.5,
        rho_ess: 0.9,
        m: 10,
        n_particles: n,
        max_iter: iters,
        seed,
        resampling: true,
    };
    let d = pot.dim();
    let x = jittered_positions(x0, n, 0.05, seed);
    let y = initial_tangents(d, n, None);
    let run = run_sspd(pot, &cfg, x, y, |_, _| ControlFlow::Continue(())).unwrap();
    let mut s = diagnostics_csv(&run.diagnostics, d);
    for v in run.ensemble.x.iter().chain(&run.ensemble.y) {
        s.push_str(&format!("{:016x}\n", v.to_bits()));
    }
    s
}

/// Byte-identical reruns, and independence from the worker count.
pub fn check_seed_determinism(pot: &dyn Potential, x0: &[f64], seed: u64) -> Check {
    let a = sspd_fingerprint(pot, x0, seed, 64, 200);
    let b = sspd_fingerprint(pot, x0, seed, 64, 200);
    ensure!(a == b, "two runs with seed {seed} differ");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let c = pool.install(|| sspd_fingerprint(pot, x0, seed, 64, 200));
    ensure!(a == c, "run with 3 workers differs from the default pool");
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let d = single.install(|| sspd_fingerprint(pot, x0, seed, 64, 200));
    ensure!(a == d, "single-worker run differs");
    let e = sspd_fingerprint(pot, x0, seed + 1, 64, 200);
    ensure!(a != e, "different seeds gave identical runs");
    Ok(())
}

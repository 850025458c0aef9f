use saddle_scout::config::{CHALLENGE_M1, CHALLENGE_M2};
use saddle_scout::potentials::{
    by_name, Challenge2d, DoubleWellFlat, DoubleWellQuartic, LatticeSpec, Lj7, MorseParams,
    MorseVacancy, Potential, REGISTRY,
};
use saddle_scout::search::{gradient_descent, DescentConfig};
use saddle_scout::spectral::min_two_eigpairs;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Hessian by central differences of the analytic gradient.
fn fd_hessian(pot: &dyn Potential, x: &[f64]) -> [[f64; 2]; 2] {
    let mut h = [[0.0; 2]; 2];
    for j in 0..2 {
        let s = 1e-6 * (1.0 + x[j].abs());
        let mut p = x.to_vec();
        p[j] += s;
        let gp = pot.gradient_vec(&p);
        p[j] -= 2.0 * s;
        let gm = pot.gradient_vec(&p);
        for i in 0..2 {
            h[i][j] = (gp[i] - gm[i]) / (2.0 * s);
        }
    }
    h
}

/// Critical points of a 2d potential: coarse scan for local minima of
/// |grad V|, then Newton on the gradient with a finite-difference Jacobian.
fn scan_critical_points(pot: &dyn Potential, lo: f64, hi: f64, n: usize) -> Vec<[f64; 2]> {
    let h = (hi - lo) / n as f64;
    let gn = |i: usize, j: usize| norm(&pot.gradient_vec(&[lo + i as f64 * h, lo + j as f64 * h]));
    let mut found: Vec<[f64; 2]> = Vec::new();
    for i in 1..n {
        for j in 1..n {
            let c = gn(i, j);
            let is_local_min = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
                .iter()
                .all(|&(a, b)| gn(a, b) > c);
            if !is_local_min {
                continue;
            }
            let mut x = [lo + i as f64 * h, lo + j as f64 * h];
            for _ in 0..100 {
                let g = pot.gradient_vec(&x);
                let m = fd_hessian(pot, &x);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-300 {
                    break;
                }
                let dx = (m[1][1] * g[0] - m[0][1] * g[1]) / det;
                let dy = (m[0][0] * g[1] - m[1][0] * g[0]) / det;
                x = [x[0] - dx, x[1] - dy];
                if dx.hypot(dy) < 1e-13 {
                    break;
                }
            }
            if norm(&pot.gradient_vec(&x)) < 1e-10
                && !found
                    .iter()
                    .any(|f| (f[0] - x[0]).hypot(f[1] - x[1]) < 1e-6)
            {
                found.push(x);
            }
        }
    }
    found
}

#[test]
fn registry_builds_every_potential() {
    for (name, _) in REGISTRY {
        let p = by_name(name, None).unwrap();
        assert_eq!(p.name(), *name);
    }
    assert!(by_name("nope", None).is_err());
}

#[test]
fn flat_double_well_critical_points() {
    let p = DoubleWellFlat::default();
    assert_eq!(p.value(&[0.0, 0.0]), 0.0);
    assert_eq!(p.gradient_vec(&[0.0, 0.0]), vec![0.0, 0.0]);
    let c = min_two_eigpairs(&p, &[0.0, 0.0]).unwrap();
    assert!((c.lambda1 + 2.0 * 2e-4).abs() < 1e-15);
    assert!((c.lambda2 - 2.0 * 1e-3).abs() < 1e-15);
    // E (4 C x^3 - 2 x) = 0 away from the origin
    let xm = (2.0f64 * 0.045).powf(-0.5);
    assert!((xm - 3.3333).abs() < 1e-4);
    for s in [-1.0, 1.0] {
        assert!(norm(&p.gradient_vec(&[s * xm, 0.0])) < 1e-15);
    }
    assert!((p.minimum_x1() - xm).abs() < 1e-14);
}

#[test]
fn quartic_double_well_values() {
    let p = DoubleWellQuartic;
    assert_eq!(p.value(&[1.0, 0.0]), 0.0);
    assert_eq!(p.value(&[-1.0, 0.0]), 0.0);
    let h = p.hessian(&[0.0, 0.0]);
    assert_eq!((h[(0, 0)], h[(0, 1)], h[(1, 1)]), (-4.0, 0.0, 4.0));
    // lambda1 = 12 x^2 - 4 changes sign at 1/sqrt(3)
    let b = 1.0 / 3f64.sqrt();
    let l1 = |x: f64| min_two_eigpairs(&p, &[x, 0.0]).unwrap().lambda1;
    assert!(l1(b - 1e-6) < 0.0 && l1(b + 1e-6) > 0.0);
    assert!(l1(-b + 1e-6) < 0.0 && l1(-b - 1e-6) > 0.0);
}

#[test]
fn mueller_brown_reference_energies() {
    let p = by_name("mueller-brown", None).unwrap();
    assert!((p.value(&[-0.558, 1.442]) + 146.700).abs() < 1e-2);
    assert!((p.value(&[0.212, 0.293]) + 72.249).abs() < 1e-2);
    assert!((p.value(&[-0.822, 0.624]) + 40.665).abs() < 1e-2);
    // T2 refined from the rounded coordinates is a first-order saddle
    let crit = scan_critical_points(p.as_ref(), -1.5, 1.5, 120);
    let t2 = crit
        .iter()
        .find(|c| (c[0] - 0.212).hypot(c[1] - 0.293) < 1e-2)
        .expect("T2 located");
    let cert = min_two_eigpairs(p.as_ref(), t2).unwrap();
    assert!(cert.lambda1 < 0.0 && cert.lambda2 > 0.0);
    assert!((p.value(t2) + 72.249).abs() < 1e-2);
}

#[test]
fn challenge_value_and_critical_points() {
    let p = Challenge2d::default();
    let v1 = |x: f64, y: f64| (x * x + y * y).powi(2) + x * x - y * y - x + y;
    assert!((p.value(&[5.0, 5.0]) - (v1(5.0, 5.0) / 4e3 - 1.0)).abs() < 1e-12);

    let crit = scan_critical_points(&p, -2.0, 6.5, 170);
    let kinds: Vec<(f64, f64, [f64; 2])> = crit
        .iter()
        .map(|c| {
            let e = min_two_eigpairs(&p, c).unwrap();
            (e.lambda1, e.lambda2, *c)
        })
        .collect();
    let minima: Vec<[f64; 2]> = kinds.iter().filter(|k| k.0 > 0.0).map(|k| k.2).collect();
    let saddles: Vec<[f64; 2]> = kinds
        .iter()
        .filter(|k| k.0 < 0.0 && k.1 > 0.0)
        .map(|k| k.2)
        .collect();
    for fixture in [CHALLENGE_M1, CHALLENGE_M2] {
        assert!(
            minima
                .iter()
                .any(|m| (m[0] - fixture[0]).hypot(m[1] - fixture[1]) < 1e-8),
            "{fixture:?} not among scanned minima {minima:?}"
        );
    }
    // the added saddle sits between M1 and the local minimum near (5, 5)
    let t1 = saddles
        .iter()
        .find(|s| s[0] > 3.0 && s[1] > 3.0)
        .expect("saddle near the added well");
    assert!((t1[0] - 3.7236).abs() < 1e-3 && (t1[1] - 3.7529).abs() < 1e-3);
    assert!((p.value(t1) - 0.153845).abs() < 1e-5);
}

#[test]
fn morse_pair_at_equilibrium() {
    let spec = LatticeSpec {
        free_atoms: 2,
        free_reference: vec![[0.0, 0.0], [1.0, 0.0]],
        fixed_atoms: vec![],
        vacancy_site: [5, 5],
        spacing: 1.0,
        morse_params: MorseParams {
            depth: 1.7,
            alpha: 4.4,
            r0: 1.3,
        },
        cutoff: None,
    };
    let p = MorseVacancy::new(spec).unwrap();
    assert!((p.value(&[0.0, 0.0, 1.3, 0.0]) + 1.7).abs() < 1e-14);
    assert!(norm(&p.gradient_vec(&[0.0, 0.0, 0.0, 1.3])) < 1e-13);
    assert!(p.validate(&[0.0, 0.0, 0.0, 0.0]).is_err());
}

#[test]
fn vacancy_lattice_relaxes() {
    let spec = LatticeSpec::triangular_vacancy(23, 3.0, MorseParams::default(), None).unwrap();
    assert!(spec.validate().is_ok());
    let p = MorseVacancy::new(spec).unwrap();
    let x0 = p.spec().reference_coordinates();
    let m = gradient_descent(
        &p,
        &x0,
        &DescentConfig {
            step: 1e-3,
            tol: 1e-6,
            max_iter: 1_000_000,
        },
    )
    .unwrap();
    assert!(m.grad_norm <= 1e-6);
    assert!(norm(&p.gradient_vec(&m.position)) <= 1e-6);
    assert!(m.lambda1 > 0.0);
}

#[test]
fn lj7_hexagon_and_translations() {
    let p = Lj7::default();
    let x = Lj7::hexagon(2f64.powf(1.0 / 6.0));
    let m = gradient_descent(
        &p,
        &x,
        &DescentConfig {
            step: 2e-3,
            tol: 1e-8,
            max_iter: 1_000_000,
        },
    )
    .unwrap();
    assert!((m.energy + 12.535).abs() < 1e-3, "{}", m.energy);
    let basis = p.zero_mode_basis();
    assert_eq!(basis.len(), 2);
    let y = [
        0.3, -0.2, 0.1, 0.0, -0.4, 0.2, 0.0, 0.1, 0.2, 0.2, -0.1, 0.0, 0.05, -0.3,
    ];
    let xs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    for t in &basis {
        assert!(norm(&p.hvp_vec(&xs, t)) < 1e-10);
    }
    let mut bad = x.clone();
    bad[2] = bad[0];
    bad[3] = bad[1];
    assert!(p.validate(&bad).is_err());
}

#[test]
fn lj7_relaxed_minima_energies() {
    let p = Lj7::default();
    let graph_minima = saddle_scout::config::LJ7_MINIMA;
    let descent = DescentConfig {
        step: 2e-3,
        tol: 1e-8,
        max_iter: 2_000_000,
    };
    for (label, x) in graph_minima.iter() {
        let m = gradient_descent(&p, x, &descent).unwrap();
        let expected = saddle_scout::config::LJ7_ENERGIES
            .iter()
            .find(|(l, _)| l == label)
            .unwrap()
            .1;
        assert!(
            (m.energy - expected).abs() < 1e-2,
            "{label}: {} vs {expected}",
            m.energy
        );
    }
}

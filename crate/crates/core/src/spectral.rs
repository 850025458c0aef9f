//! Lowest Hessian eigenpairs and index-1 classification.
//!
//! Exact zero modes (and position dependent gauge modes) of the potential
//! are projected out before the spectrum is ranked. Eigenvalues whose
//! magnitude falls below the zero tolerance are skipped when picking the
//! two lowest ones.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SpectralError;
use crate::potentials::{dot, norm, Potential};

/// Largest dimension handled by dense eigendecomposition.
pub const DENSE_MAX_DIM: usize = 512;
pub const ITERATIVE_MAX_ITER: usize = 500;
pub const ITERATIVE_TOL: f64 = 1e-8;
const ZERO_TOL_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCertificate {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Unit eigenvector of `lambda1`.
    pub v1: Vec<f64>,
    /// Number of symmetry directions projected out.
    pub n_deflated: usize,
    /// Magnitude below which eigenvalues count as zero.
    pub zero_tol: f64,
}

impl SpectralCertificate {
    /// `lambda1 < 0 < lambda2` with the zero tolerance applied on both sides.
    pub fn is_index1(&self) -> bool {
        self.lambda1 < -self.zero_tol && self.lambda2 > self.zero_tol
    }

    /// Strictly positive lowest eigenvalue (outside the index-1 region in
    /// the sense used by the dimer stopping rule).
    pub fn is_convex(&self) -> bool {
        self.lambda1 > self.zero_tol
    }
}

/// Two lowest eigenpairs of the deflated Hessian. Uses the dense path up to
/// [`DENSE_MAX_DIM`] and LOBPCG on Hessian-vector products beyond.
pub fn min_two_eigpairs(
    pot: &dyn Potential,
    x: &[f64],
) -> Result<SpectralCertificate, SpectralError> {
    if pot.dim() <= DENSE_MAX_DIM {
        min_two_eigpairs_dense(pot, x)
    } else {
        min_two_eigpairs_iterative(pot, x, ITERATIVE_MAX_ITER, ITERATIVE_TOL)
    }
}

/// Classification into the index-1 region. Solver failures count as outside.
pub fn in_index1_region(pot: &dyn Potential, x: &[f64]) -> bool {
    min_two_eigpairs(pot, x)
        .map(|c| c.is_index1())
        .unwrap_or(false)
}

/// Orthonormal basis of the symmetry directions at `x`.
pub fn deflation_basis(pot: &dyn Potential, x: &[f64]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in pot.zero_mode_basis().into_iter().chain(pot.gauge_modes(x)) {
        let mut v = v;
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = norm(&v);
        if n > 1e-10 {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
    }
    basis
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
}

/// Picks the two lowest eigenvalues whose magnitude exceeds `tol`, falling
/// back to the raw order when fewer than two survive.
fn rank_with_tolerance(sorted: &[f64], tol: f64) -> (usize, usize) {
    let kept: Vec<usize> = (0..sorted.len())
        .filter(|&i| sorted[i].abs() >= tol)
        .collect();
    if kept.len() >= 2 {
        (kept[0], kept[1])
    } else {
        (0, 1)
    }
}

fn eig2(h: [f64; 3]) -> (f64, f64, [f64; 2]) {
    let (a, b, c) = (h[0], h[1], h[2]);
    let m = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = m - r;
    let l2 = m + r;
    let u = [l1 - c, b];
    let w = [b, l1 - a];
    let (nu, nw) = (u[0].hypot(u[1]), w[0].hypot(w[1]));
    let v = if nu.max(nw) == 0.0 {
        if a <= c {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else if nu >= nw {
        [u[0] / nu, u[1] / nu]
    } else {
        [w[0] / nw, w[1] / nw]
    };
    (l1, l2, v)
}

/// Dense symmetric eigendecomposition of the deflated Hessian.
pub fn min_two_eigpairs_dense(
    pot: &dyn Potential,
    x: &[f64],
) -> Result<SpectralCertificate, SpectralError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let d = pot.dim();
    let h = pot.hessian(x);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let diag_max = (0..d).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
    let zero_tol = ZERO_TOL_FACTOR * (1.0 + diag_max);
    let basis = deflation_basis(pot, x);
    let p = basis.len();
    if d < p + 2 {
        return Err(SpectralError::TooFewModes(d - p));
    }

    if p == 0 && d == 2 {
        // with two eigenvalues the tolerance rule always falls back to raw order
        let (lambda1, lambda2, v1) = eig2([h[(0, 0)], h[(0, 1)], h[(1, 1)]]);
        return Ok(SpectralCertificate {
            lambda1,
            lambda2,
            v1: v1.to_vec(),
            n_deflated: 0,
            zero_tol,
        });
    }

    // orthonormal basis of the complement of the deflated directions
    let comp: Option<DMatrix<f64>> = if p == 0 {
        None
    } else {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d - p);
        let mut all = basis.clone();
        for j in 0..d {
            if cols.len() == d - p {
                break;
            }
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            project_out(&mut e, &all);
            project_out(&mut e, &all);
            let n = norm(&e);
            if n > 1e-8 {
                e.iter_mut().for_each(|a| *a /= n);
                all.push(e.clone());
                cols.push(e);
            }
        }
        Some(DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]))
    };

    let reduced = match &comp {
        None => h,
        Some(b) => b.transpose() * &h * b,
    };
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let (i1, i2) = rank_with_tolerance(&sorted, zero_tol);
    let w = eig.eigenvectors.column(order[i1]).into_owned();
    let mut v1: Vec<f64> = match &comp {
        None => w.iter().copied().collect(),
        Some(b) => (b * w).iter().copied().collect(),
    };
    let n = norm(&v1);
    v1.iter_mut().for_each(|a| *a /= n);
    Ok(SpectralCertificate {
        lambda1: sorted[i1],
        lambda2: sorted[i2],
        v1,
        n_deflated: p,
        zero_tol,
    })
}

fn orthonormalize_into(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>, drop_tol: f64) -> bool {
    let n0 = norm(&v);
    if n0 == 0.0 || !n0.is_finite() {
        return false;
    }
    for _ in 0..2 {
        for q in basis.iter() {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
    let n = norm(&v);
    if n <= drop_tol * n0 || n < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|a| *a /= n);
    basis.push(v);
    true
}

/// LOBPCG on Hessian-vector products with explicit deflation. The block
/// holds two wanted vectors plus two guard vectors.
pub fn min_two_eigpairs_iterative(
    pot: &dyn Potential,
    x: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<SpectralCertificate, SpectralError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let d = pot.dim();
    let defl = deflation_basis(pot, x);
    let p = defl.len();
    if d < p + 2 {
        return Err(SpectralError::TooFewModes(d - p));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut w = v.to_vec();
        project_out(&mut w, &defl);
        pot.hvp(x, &w, out);
        project_out(out, &defl);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1ab0);
    // spectral radius estimate; bounds the largest diagonal entry
    let mut z: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut z, &defl);
    let mut radius = 0.0f64;
    let mut hz = vec![0.0; d];
    for _ in 0..30 {
        let n = norm(&z);
        if n == 0.0 {
            break;
        }
        z.iter_mut().for_each(|a| *a /= n);
        apply(&z, &mut hz);
        radius = radius.max(norm(&hz));
        std::mem::swap(&mut z, &mut hz);
    }
    if !radius.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let zero_tol = ZERO_TOL_FACTOR * (1.0 + radius);
    // absolute unless the spectrum is so wide that round-off forbids it
    let res_tol = tol.max(1e-13 * radius);

    let b = (d - p).min(4);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(b);
    while xs.len() < b {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        project_out(&mut v, &defl);
        orthonormalize_into(&mut xs, v, 1e-8);
    }
    let mut ps: Vec<Vec<f64>> = Vec::new();
    let mut theta = vec![0.0; b];
    let mut last_res = f64::INFINITY;

    for iter in 0..max_iter {
        // Rayleigh-Ritz on span [X, R, P]
        let mut ax: Vec<Vec<f64>> = xs
            .iter()
            .map(|v| {
                let mut o = vec![0.0; d];
                apply(v, &mut o);
                o
            })
            .collect();
        if iter == 0 {
            for j in 0..b {
                theta[j] = dot(&xs[j], &ax[j]);
            }
        }
        let res: Vec<Vec<f64>> = (0..b)
            .map(|j| {
                let th = dot(&xs[j], &ax[j]);
                let mut r = ax[j].clone();
                r.iter_mut().zip(&xs[j]).for_each(|(a, v)| *a -= th * v);
                project_out(&mut r, &defl);
                r
            })
            .collect();
        let rnorm: Vec<f64> = res.iter().map(|r| norm(r)).collect();

        if iter > 0 {
            let (i1, i2) = rank_with_tolerance(&theta, zero_tol);
            let needed = i2.max(i1);
            last_res = rnorm[..=needed].iter().copied().fold(0.0, f64::max);
            if last_res <= res_tol {
                let mut v1 = xs[i1].clone();
                let n = norm(&v1);
                v1.iter_mut().for_each(|a| *a /= n);
                return Ok(SpectralCertificate {
                    lambda1: theta[i1],
                    lambda2: theta[i2],
                    v1,
                    n_deflated: p,
                    zero_tol,
                });
            }
        }

        let mut basis: Vec<Vec<f64>> = xs.clone();
        let mut nx = basis.len();
        for (j, r) in res.into_iter().enumerate() {
            if rnorm[j] > res_tol * 1e-3 {
                orthonormalize_into(&mut basis, r, 1e-10);
            }
        }
        for pv in ps.drain(..) {
            orthonormalize_into(&mut basis, pv, 1e-10);
        }
        if nx > basis.len() {
            nx = basis.len();
        }
        let m = basis.len();
        let abasis: Vec<Vec<f64>> = basis
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if j < nx {
                    std::mem::take(&mut ax[j])
                } else {
                    let mut o = vec![0.0; d];
                    apply(v, &mut o);
                    o
                }
            })
            .collect();
        let t = DMatrix::from_fn(m, m, |i, j| {
            0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i]))
        });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[c]).unwrap());
        let mut new_x = Vec::with_capacity(b);
        let mut new_p = Vec::with_capacity(b);
        for &k in order.iter().take(b) {
            let c = eig.eigenvectors.column(k);
            let mut v = vec![0.0; d];
            let mut pv = vec![0.0; d];
            for (i, bv) in basis.iter().enumerate() {
                let ci = c[i];
                v.iter_mut().zip(bv).for_each(|(a, q)| *a += ci * q);
                if i >= nx {
                    pv.iter_mut().zip(bv).for_each(|(a, q)| *a += ci * q);
                }
            }
            new_x.push(v);
            new_p.push(pv);
        }
        for (j, &k) in order.iter().take(b).enumerate() {
            theta[j] = eig.eigenvalues[k];
        }
        // re-orthonormalize X to limit drift
        let mut ortho = Vec::with_capacity(b);
        for v in new_x {
            if !orthonormalize_into(&mut ortho, v, 1e-12) {
                let mut r: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
                project_out(&mut r, &defl);
                orthonormalize_into(&mut ortho, r, 1e-8);
            }
        }
        xs = ortho;
        ps = new_p;
    }
    Err(SpectralError::NotConverged {
        iterations: max_iter,
        residual: last_res,
    })
}

//! Stochastic saddle point dynamics.
//!
//! Each particle carries a position `X` following overdamped Langevin
//! dynamics and a tangent vector `Y` transported by the negative Hessian.
//! The tangent norms are importance weights; the ensemble is resampled
//! (stratified) whenever the effective sample size drops to
//! `rho_ess * N` or below. Resampled tangents are renormalized.

use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SspdError;
use crate::pde::{Grid2D, GridField};
use crate::potentials::{norm, Potential};
use crate::rng::{stream_rng, RESAMPLE_STREAM};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SspdConfig {
    /// Euler-Maruyama time step.
    pub delta: f64,
    /// Temperature.
    pub beta_inv: f64,
    /// Resampling threshold as a fraction of the particle count.
    pub rho_ess: f64,
    /// Local search period (iterations).
    pub m: usize,
    pub n_particles: usize,
    /// Number of iterations.
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub resampling: bool,
}

impl SspdConfig {
    pub fn validate(&self) -> Result<(), SspdError> {
        let bad = |m: &str| Err(SspdError::InvalidConfig(m.to_string()));
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return bad("delta must be positive");
        }
        if !(self.beta_inv >= 0.0) || !self.beta_inv.is_finite() {
            return bad("beta_inv must be non-negative");
        }
        if !(self.rho_ess > 0.0 && self.rho_ess < 1.0) {
            return bad("rho_ess must lie in (0, 1)");
        }
        if self.n_particles == 0 {
            return bad("need at least one particle");
        }
        if self.m == 0 {
            return bad("local search period m must be at least 1");
        }
        Ok(())
    }

    pub fn double_well() -> Self {
        Self {
            delta: 1e-4,
            beta_inv: 0.1,
            rho_ess: 0.99,
            m: 10,
            n_particles: 5000,
            max_iter: 10_000,
            seed: 0,
            resampling: true,
        }
    }

    pub fn mueller_brown() -> Self {
        Self {
            delta: 1e-3,
            beta_inv: 0.05,
            rho_ess: 0.95,
            m: 10,
            n_particles: 2000,
            max_iter: 10_000,
            seed: 0,
            resampling: true,
        }
    }

    pub fn challenge(beta_inv: f64) -> Self {
        Self {
            delta: 1e-3,
            beta_inv,
            rho_ess: 0.95,
            m: 10,
            n_particles: 2000,
            max_iter: 10_000,
            seed: 0,
            resampling: true,
        }
    }

    pub fn vacancy() -> Self {
        Self {
            delta: 1e-4,
            beta_inv: 0.1,
            rho_ess: 0.99,
            m: 100,
            n_particles: 2000,
            max_iter: 10_000,
            seed: 0,
            resampling: true,
        }
    }

    pub fn lj7() -> Self {
        Self {
            delta: 1e-4,
            beta_inv: 0.1,
            rho_ess: 0.99,
            m: 100,
            n_particles: 2000,
            max_iter: 10_000,
            seed: 0,
            resampling: true,
        }
    }
}

/// Particle positions, tangents and weights, stored row-major (`N x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub step: usize,
}

impl Ensemble {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self, SspdError> {
        if dim == 0 || x.is_empty() || !x.len().is_multiple_of(dim) {
            return Err(SspdError::Shape {
                expected: dim.max(1),
                got: x.len(),
            });
        }
        if y.len() != x.len() {
            return Err(SspdError::Shape {
                expected: x.len(),
                got: y.len(),
            });
        }
        let n = x.len() / dim;
        let mut e = Self {
            dim,
            x,
            y,
            w: vec![0.0; n],
            step: 0,
        };
        e.refresh_weights();
        e.check_finite()?;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn position(&self, n: usize) -> &[f64] {
        &self.x[n * self.dim..(n + 1) * self.dim]
    }

    pub fn tangent(&self, n: usize) -> &[f64] {
        &self.y[n * self.dim..(n + 1) * self.dim]
    }

    /// Multiplies every tangent by the same power of two when the largest
    /// weight leaves `[2^-200, 2^200]`. Only weight ratios enter the
    /// algorithm and the scaling is exact, so this only prevents underflow.
    pub fn rebalance(&mut self) {
        let m = self.w.iter().copied().fold(0.0, f64::max);
        if !(m > 0.0) || !m.is_finite() {
            return;
        }
        let e = m.log2().round();
        if e.abs() <= 200.0 {
            return;
        }
        let f = (-e).exp2();
        self.y.iter_mut().for_each(|v| *v *= f);
        self.w.iter_mut().for_each(|v| *v *= f);
    }

    /// `w_n = |Y_n|`.
    pub fn refresh_weights(&mut self) {
        let d = self.dim;
        for (w, y) in self.w.iter_mut().zip(self.y.chunks(d)) {
            *w = norm(y);
        }
    }

    pub fn check_finite(&self) -> Result<(), SspdError> {
        let d = self.dim;
        for n in 0..self.len() {
            let bad = self.x[n * d..(n + 1) * d]
                .iter()
                .chain(&self.y[n * d..(n + 1) * d])
                .any(|v| !v.is_finite())
                || !self.w[n].is_finite();
            if bad {
                return Err(SspdError::BlowUp {
                    particle: n,
                    step: self.step,
                });
            }
        }
        Ok(())
    }
}

/// `N` copies of `center` with independent Gaussian jitter of standard
/// deviation `jitter` (one step of noise, `sqrt(2 beta_inv delta)`, by default).
pub fn jittered_positions(center: &[f64], n: usize, jitter: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, RESAMPLE_STREAM - 1, 0);
    let mut x = Vec::with_capacity(n * center.len());
    for _ in 0..n {
        for &c in center {
            let g: f64 = if jitter > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            x.push(c + jitter * g);
        }
    }
    x
}

/// Positions drawn uniformly from the box `[lower, upper]`.
pub fn uniform_box_positions(lower: &[f64], upper: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, RESAMPLE_STREAM - 2, 0);
    let mut x = Vec::with_capacity(n * lower.len());
    for _ in 0..n {
        for (lo, hi) in lower.iter().zip(upper) {
            x.push(lo + (hi - lo) * rng.random::<f64>());
        }
    }
    x
}

/// `N` copies of `y0` (default: the normalized all-ones vector).
pub fn initial_tangents(dim: usize, n: usize, y0: Option<&[f64]>) -> Vec<f64> {
    let base: Vec<f64> = match y0 {
        Some(v) => v.to_vec(),
        None => vec![1.0 / (dim as f64).sqrt(); dim],
    };
    base.iter().copied().cycle().take(n * dim).collect()
}

fn check_weights(w: &[f64]) -> Result<f64, SspdError> {
    let mut s = 0.0;
    for (i, &v) in w.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(SspdError::InvalidWeight { index: i, value: v });
        }
        s += v;
    }
    if w.is_empty() || s <= 0.0 {
        return Err(SspdError::DegenerateWeights);
    }
    Ok(s)
}

/// Effective sample size `(sum w)^2 / sum w^2`, in `[1, N]`.
pub fn ess(w: &[f64]) -> Result<f64, SspdError> {
    let s = check_weights(w)?;
    // scale first to keep the squares representable
    let m = w.iter().copied().fold(0.0, f64::max);
    let s2: f64 = w.iter().map(|v| (v / m).powi(2)).sum();
    Ok((s / m).powi(2) / s2)
}

/// Stratified resampling: ancestor of slot `n` is the index whose normalized
/// cumulative-weight interval contains `(n + U_n) / N`. Indices are 0-based.
pub fn stratified_resample<R: Rng + ?Sized>(
    w: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>, SspdError> {
    let total = check_weights(w)?;
    let n = w.len();
    let last_positive = w.iter().rposition(|&v| v > 0.0).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    let mut cum = w[0] / total;
    for k in 0..n {
        let u = (k as f64 + rng.random::<f64>()) / n as f64;
        while cum <= u && i < last_positive {
            i += 1;
            cum += w[i] / total;
        }
        let mut j = i;
        // float round-off can land on a zero-weight slot at the tail
        while w[j] == 0.0 {
            j -= 1;
        }
        out.push(j);
    }
    Ok(out)
}

/// Replaces particle `n` by ancestor `J[n]` with its tangent normalized.
pub fn apply_resample(ens: &mut Ensemble, ancestors: &[usize]) -> Result<(), SspdError> {
    if ancestors.len() != ens.len() {
        return Err(SspdError::Shape {
            expected: ens.len(),
            got: ancestors.len(),
        });
    }
    let mut x = Vec::with_capacity(ens.x.len());
    let mut y = Vec::with_capacity(ens.y.len());
    for &a in ancestors {
        if a >= ens.len() {
            return Err(SspdError::Shape {
                expected: ens.len(),
                got: a,
            });
        }
        let wa = ens.w[a];
        if !(wa > 0.0) {
            return Err(SspdError::ZeroWeightAncestor(a));
        }
        x.extend_from_slice(ens.position(a));
        y.extend(ens.tangent(a).iter().map(|v| v / wa));
    }
    ens.x = x;
    ens.y = y;
    ens.refresh_weights();
    Ok(())
}

/// Resamples iff `ESS(w) <= rho_ess * N`. Returns whether it did.
pub fn maybe_resample(ens: &mut Ensemble, cfg: &SspdConfig) -> Result<bool, SspdError> {
    let e = ess(&ens.w)?;
    if e <= cfg.rho_ess * ens.len() as f64 {
        let mut rng = stream_rng(cfg.seed, RESAMPLE_STREAM, ens.step as u64);
        let j = stratified_resample(&ens.w, &mut rng)?;
        apply_resample(ens, &j)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// One Euler-Maruyama step of the augmented dynamics for every particle:
/// `X <- X - delta grad V(X) + sqrt(2 beta_inv delta) G`,
/// `Y <- Y - delta Hess V(X) Y`, then `w <- |Y|`.
pub fn em_step(ens: &mut Ensemble, pot: &dyn Potential, cfg: &SspdConfig) -> Result<(), SspdError> {
    let d = ens.dim;
    if pot.dim() != d {
        return Err(SspdError::Shape {
            expected: pot.dim(),
            got: d,
        });
    }
    let step = ens.step;
    let delta = cfg.delta;
    let amp = (2.0 * cfg.beta_inv * delta).sqrt();
    let seed = cfg.seed;
    ens.x
        .par_chunks_mut(d)
        .zip(ens.y.par_chunks_mut(d))
        .zip(ens.w.par_iter_mut())
        .enumerate()
        .for_each_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(g, hy), (n, ((x, y), w))| {
                pot.gradient_and_hvp(x, y, g, hy);
                if amp > 0.0 {
                    let mut rng = stream_rng(seed, n as u64, step as u64);
                    for k in 0..d {
                        let z: f64 = rng.sample(StandardNormal);
                        x[k] += -delta * g[k] + amp * z;
                    }
                } else {
                    for k in 0..d {
                        x[k] -= delta * g[k];
                    }
                }
                for k in 0..d {
                    y[k] -= delta * hy[k];
                }
                *w = norm(y);
            },
        );
    ens.step += 1;
    ens.check_finite()
}

/// `X_bar = sum w X / sum w` and `Y_bar = sum w Y / |sum w Y|`.
pub fn weighted_mean_direction(ens: &Ensemble) -> Result<(Vec<f64>, Vec<f64>), SspdError> {
    let d = ens.dim;
    let total = check_weights(&ens.w)?;
    let mut xb = vec![0.0; d];
    let mut yb = vec![0.0; d];
    for n in 0..ens.len() {
        let w = ens.w[n];
        for k in 0..d {
            xb[k] += w * ens.x[n * d + k];
            yb[k] += w * ens.y[n * d + k];
        }
    }
    xb.iter_mut().for_each(|v| *v /= total);
    let ny = norm(&yb);
    // |w_n Y_n| = w_n^2, so cancellation is measured against sum w^2
    let scale: f64 = ens.w.iter().map(|w| w * w).sum();
    if !(ny > 0.0) || ny <= 1e-12 * scale {
        return Err(SspdError::UndefinedDirection);
    }
    yb.iter_mut().for_each(|v| *v /= ny);
    Ok((xb, yb))
}

/// Bins `(1/N) sum Y_n delta_{X_n}` onto the control volumes of `grid`.
/// Returns the field and the number of particles that fell outside.
pub fn empirical_vector_field(
    ens: &Ensemble,
    grid: &Grid2D,
) -> Result<(GridField, usize), SspdError> {
    if ens.dim != 2 {
        return Err(SspdError::Shape {
            expected: 2,
            got: ens.dim,
        });
    }
    let mut f = GridField::zeros(*grid, 2);
    let nn = grid.len();
    let scale = 1.0 / (ens.len() as f64 * grid.cell_area());
    let mut overflow = 0;
    for n in 0..ens.len() {
        match grid.locate(ens.position(n)) {
            Some((i, j)) => {
                let k = grid.index(i, j);
                let y = ens.tangent(n);
                f.values[k] += y[0] * scale;
                f.values[nn + k] += y[1] * scale;
            }
            None => overflow += 1,
        }
    }
    Ok((f, overflow))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub k: usize,
    pub ess: f64,
    pub resampled: bool,
    pub x_bar: Vec<f64>,
    /// `None` when the weighted tangents cancel.
    pub y_bar: Option<Vec<f64>>,
    pub max_weight: f64,
}

#[derive(Debug, Clone)]
pub struct SspdRun {
    pub ensemble: Ensemble,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Set when the hook asked to stop before `max_iter`.
    pub stopped_at: Option<usize>,
}

impl SspdRun {
    pub fn resample_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.resampled).count()
    }
}

fn diagnostics_row(ens: &Ensemble, k: usize) -> Result<IterationDiagnostics, SspdError> {
    let e = ess(&ens.w)?;
    let (x_bar, y_bar) = match weighted_mean_direction(ens) {
        Ok((x, y)) => (x, Some(y)),
        Err(SspdError::UndefinedDirection) => {
            let total: f64 = ens.w.iter().sum();
            let mut xb = vec![0.0; ens.dim];
            for n in 0..ens.len() {
                for (a, b) in xb.iter_mut().zip(ens.position(n)) {
                    *a += ens.w[n] * b / total;
                }
            }
            (xb, None)
        }
        Err(e) => return Err(e),
    };
    Ok(IterationDiagnostics {
        k,
        ess: e,
        resampled: false,
        x_bar,
        y_bar,
        max_weight: ens.w.iter().copied().fold(0.0, f64::max),
    })
}

/// Runs `cfg.max_iter` iterations. Each iteration calls `hook(ensemble, k)`
/// on the current state, records diagnostics, resamples if the ESS test
/// fires and takes one Euler-Maruyama step. A final diagnostics row is
/// recorded for the state after the last step.
pub fn run_sspd<F>(
    pot: &dyn Potential,
    cfg: &SspdConfig,
    init_x: Vec<f64>,
    init_y: Vec<f64>,
    mut hook: F,
) -> Result<SspdRun, SspdError>
where
    F: FnMut(&Ensemble, usize) -> ControlFlow<()>,
{
    cfg.validate()?;
    let d = pot.dim();
    if init_x.len() != cfg.n_particles * d {
        return Err(SspdError::Shape {
            expected: cfg.n_particles * d,
            got: init_x.len(),
        });
    }
    let mut ens = Ensemble::new(d, init_x, init_y)?;
    let mut diagnostics = Vec::with_capacity(cfg.max_iter + 1);
    let mut stopped_at = None;
    for k in 0..cfg.max_iter {
        ens.refresh_weights();
        ens.rebalance();
        if hook(&ens, k).is_break() {
            stopped_at = Some(k);
            break;
        }
        let mut row = diagnostics_row(&ens, k)?;
        if cfg.resampling {
            row.resampled = maybe_resample(&mut ens, cfg)?;
        }
        diagnostics.push(row);
        em_step(&mut ens, pot, cfg)?;
    }
    if stopped_at.is_none() {
        diagnostics.push(diagnostics_row(&ens, cfg.max_iter)?);
    }
    Ok(SspdRun {
        ensemble: ens,
        diagnostics,
        stopped_at,
    })
}

/// CSV rendering of the diagnostics: `k, ess, resampled, x_bar_*, y_bar_*, max_weight`.
pub fn diagnostics_csv(rows: &[IterationDiagnostics], dim: usize) -> String {
    use std::fmt::Write;
    let mut s = String::from("k,ess,resampled");
    for i in 0..dim {
        let _ = write!(s, ",x_bar_{i}");
    }
    for i in 0..dim {
        let _ = write!(s, ",y_bar_{i}");
    }
    s.push_str(",max_weight\n");
    for r in rows {
        let _ = write!(s, "{},{:.17e},{}", r.k, r.ess, r.resampled as u8);
        for v in &r.x_bar {
            let _ = write!(s, ",{v:.17e}");
        }
        match &r.y_bar {
            Some(y) => {
                for v in y {
                    let _ = write!(s, ",{v:.17e}");
                }
            }
            None => {
                for _ in 0..dim {
                    s.push_str(",nan");
                }
            }
        }
        let _ = writeln!(s, ",{:.17e}", r.max_weight);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::DoubleWellQuartic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(delta: f64, beta_inv: f64) -> SspdConfig {
        SspdConfig {
            delta,
            beta_inv,
            rho_ess: 0.5,
            m: 10,
            n_particles: 1,
            max_iter: 1,
            seed: 1,
            resampling: true,
        }
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[2.5; 7]).unwrap() - 7.0).abs() < 1e-12);
        assert!((ess(&[0.0, 0.0, 0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((ess(&[1.0, 2.0]).unwrap() - 1.8).abs() < 1e-15);
        assert_eq!(ess(&[0.0, 0.0]), Err(SspdError::DegenerateWeights));
        assert!(matches!(
            ess(&[1.0, -1.0]),
            Err(SspdError::InvalidWeight { index: 1, .. })
        ));
    }

    #[test]
    fn stratified_single_atom_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            stratified_resample(&[1.0, 0.0, 0.0], &mut rng).unwrap(),
            vec![0, 0, 0]
        );
        assert_eq!(
            stratified_resample(&[0.0, 0.0, 5.0], &mut rng).unwrap(),
            vec![2, 2, 2]
        );
        for _ in 0..100 {
            assert_eq!(
                stratified_resample(&[1.0; 4], &mut rng).unwrap(),
                vec![0, 1, 2, 3]
            );
        }
        assert_eq!(
            stratified_resample(&[0.0; 3], &mut rng),
            Err(SspdError::DegenerateWeights)
        );
    }

    #[test]
    fn resample_identity_and_normalization() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y = vec![1.0, 0.0, 0.0, 1.0];
        let mut e = Ensemble::new(2, x.clone(), y.clone()).unwrap();
        apply_resample(&mut e, &[0, 1]).unwrap();
        assert_eq!(e.x, x);
        assert_eq!(e.y, y);

        let mut e = Ensemble::new(2, x, vec![3.0, 4.0, 0.0, 2.0]).unwrap();
        apply_resample(&mut e, &[1, 0]).unwrap();
        assert_eq!(e.x, vec![2.0, 3.0, 0.0, 1.0]);
        for w in &e.w {
            assert!((w - 1.0).abs() < 1e-15);
        }
        assert!((ess(&e.w).unwrap() - 2.0).abs() < 1e-12);

        let mut e = Ensemble::new(1, vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(
            apply_resample(&mut e, &[0, 1]),
            Err(SspdError::ZeroWeightAncestor(0))
        );
    }

    #[test]
    fn em_step_on_critical_point_without_noise() {
        let p = DoubleWellQuartic;
        let delta = 1e-2;
        let mut e = Ensemble::new(2, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        em_step(&mut e, &p, &cfg(delta, 0.0)).unwrap();
        assert_eq!(e.x, vec![0.0, 0.0]);
        assert!((e.w[0] - (1.0 + 4.0 * delta)).abs() < 1e-15);
        assert_eq!(e.step, 1);

        let mut e = Ensemble::new(2, vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        em_step(&mut e, &p, &cfg(delta, 0.0)).unwrap();
        assert!((e.w[0] - (1.0 - 4.0 * delta)).abs() < 1e-15);
    }

    #[test]
    fn em_step_blowup_reported() {
        let p = DoubleWellQuartic;
        let mut e = Ensemble::new(2, vec![1e100, 0.0], vec![1.0, 0.0]).unwrap();
        let err = em_step(&mut e, &p, &cfg(1.0, 0.0)).unwrap_err();
        assert_eq!(
            err,
            SspdError::BlowUp {
                particle: 0,
                step: 1
            }
        );
    }

    #[test]
    fn maybe_resample_threshold() {
        let mut c = cfg(1e-3, 0.0);
        c.rho_ess = 0.99;
        let mut e = Ensemble::new(1, vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert!(!maybe_resample(&mut e, &c).unwrap());

        let mut e = Ensemble::new(1, vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(maybe_resample(&mut e, &c).unwrap());
        assert_eq!(e.x, vec![0.0, 0.0, 0.0]);

        // ESS = 1.8 for weights (1, 2): boundary is inclusive
        c.rho_ess = 0.9;
        let mut e = Ensemble::new(1, vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert!(maybe_resample(&mut e, &c).unwrap());
    }

    #[test]
    fn weighted_mean_examples() {
        let e = Ensemble::new(2, vec![0.3, -0.2], vec![3.0, 4.0]).unwrap();
        let (xb, yb) = weighted_mean_direction(&e).unwrap();
        assert_eq!(xb, vec![0.3, -0.2]);
        assert!((yb[0] - 0.6).abs() < 1e-15 && (yb[1] - 0.8).abs() < 1e-15);

        let e = Ensemble::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 2.0, -1.0, -2.0]).unwrap();
        assert_eq!(
            weighted_mean_direction(&e),
            Err(SspdError::UndefinedDirection)
        );
    }

    #[test]
    fn run_with_zero_iterations_returns_initial_state() {
        let p = DoubleWellQuartic;
        let mut c = cfg(1e-3, 0.1);
        c.max_iter = 0;
        c.n_particles = 2;
        let x = vec![1.0, 0.0, -1.0, 0.0];
        let y = initial_tangents(2, 2, None);
        let run = run_sspd(&p, &c, x.clone(), y.clone(), |_, _| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(run.ensemble.x, x);
        assert_eq!(run.ensemble.y, y);
        assert_eq!(run.diagnostics.len(), 1);
    }

    #[test]
    fn single_particle_gradient_flow_reaches_minimum() {
        let p = DoubleWellQuartic;
        let mut c = cfg(1e-2, 0.0);
        c.max_iter = 2000;
        let run = run_sspd(&p, &c, vec![0.4, 0.7], vec![1.0, 1.0], |_, _| {
            ControlFlow::Continue(())
        })
        .unwrap();
        let x = run.ensemble.position(0);
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn vector_field_binning() {
        let g = Grid2D::new((-1.0, 1.0), (-1.0, 1.0), 21, 21).unwrap();
        let e = Ensemble::new(2, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let (f, over) = empirical_vector_field(&e, &g).unwrap();
        assert_eq!(over, 0);
        let k = g.index(10, 10);
        let a = g.cell_area();
        assert!((f.values[k] - 1.0 / a).abs() < 1e-12);
        assert_eq!(f.values.iter().filter(|v| **v != 0.0).count(), 1);

        let e = Ensemble::new(
            2,
            vec![0.5, 0.5, 3.0, 0.0, -0.31, 0.77],
            vec![1.0, 2.0, 5.0, 5.0, -0.5, 0.25],
        )
        .unwrap();
        let (f, over) = empirical_vector_field(&e, &g).unwrap();
        assert_eq!(over, 1);
        let s0: f64 = f.component(0).iter().sum::<f64>() * a;
        let s1: f64 = f.component(1).iter().sum::<f64>() * a;
        assert!((s0 - 0.5 / 3.0).abs() < 1e-12);
        assert!((s1 - 2.25 / 3.0).abs() < 1e-12);
    }
}

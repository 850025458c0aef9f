//! Minimum-mode following in the zero-length dimer limit, single and
//! coupled through a graph Laplacian.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SspdError;
use crate::potentials::{dot, norm, Potential};
use crate::spectral::{min_two_eigpairs, SpectralCertificate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimerConfig {
    pub delta: f64,
    /// Iteration budget.
    pub k_d: usize,
    /// Gradient norm tolerance.
    pub eps_d: f64,
    /// Record per-iteration gradient norms and eigenvalues.
    #[serde(default)]
    pub trace: bool,
}

impl Default for DimerConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            k_d: 1000,
            eps_d: 1e-6,
            trace: false,
        }
    }
}

impl DimerConfig {
    pub fn validate(&self) -> Result<(), SspdError> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(SspdError::InvalidConfig(
                "dimer delta must be positive".into(),
            ));
        }
        if self.k_d == 0 {
            return Err(SspdError::InvalidConfig(
                "dimer budget k_d must be at least 1".into(),
            ));
        }
        if !(self.eps_d > 0.0) {
            return Err(SspdError::InvalidConfig("eps_d must be positive".into()));
        }
        Ok(())
    }
}

/// Which kernel values become graph edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    /// `W_ij = K 1{K < r}`.
    #[default]
    LiteralBelow,
    /// `W_ij = K 1{K > r}`: only close particles interact.
    SimilarityAbove,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_r() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

fn default_m() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleDimerConfig {
    #[serde(flatten)]
    pub dimer: DimerConfig,
    /// Maximum number of coupled particles.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub cutoff_mode: CutoffMode,
    /// Stop updating particles whose lowest eigenvalue turns positive.
    #[serde(default = "default_true")]
    pub freeze_convex: bool,
}

impl Default for ParticleDimerConfig {
    fn default() -> Self {
        Self {
            dimer: DimerConfig::default(),
            m: default_m(),
            sigma: 1.0,
            r: 0.9,
            cutoff_mode: CutoffMode::LiteralBelow,
            freeze_convex: true,
        }
    }
}

impl ParticleDimerConfig {
    pub fn validate(&self) -> Result<(), SspdError> {
        self.dimer.validate()?;
        if self.m == 0 {
            return Err(SspdError::InvalidConfig(
                "particle dimer needs m >= 1".into(),
            ));
        }
        if !(self.sigma > 0.0) {
            return Err(SspdError::InvalidConfig(
                "kernel width sigma must be positive".into(),
            ));
        }
        if !(self.r >= 0.0) {
            return Err(SspdError::InvalidConfig(
                "cutoff r must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimerStatus {
    Success,
    /// Lowest eigenvalue became positive (or the eigensolver failed).
    FailureLeftRegion,
    FailureBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub particle: usize,
    pub grad_norm: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimerOutcome {
    pub status: DimerStatus,
    /// Last iterate (the saddle on success).
    pub point: Vec<f64>,
    /// Spectrum at `point`; absent when the eigensolver failed there.
    pub certificate: Option<SpectralCertificate>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub spectral_failure: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl DimerOutcome {
    pub fn is_success(&self) -> bool {
        self.status == DimerStatus::Success
    }
}

/// `-(I - 2 v v^T) g`, the reversed-along-`v` gradient force.
fn dimer_force(g: &[f64], v: &[f64], out: &mut [f64]) {
    let c = 2.0 * dot(v, g);
    for ((o, gi), vi) in out.iter_mut().zip(g).zip(v) {
        *o = -(gi - c * vi);
    }
}

/// One explicit step `u - delta (I - 2 v1 v1^T) grad V(u)`.
pub fn dimer_step(
    pot: &dyn Potential,
    u: &[f64],
    cfg: &DimerConfig,
) -> Result<Vec<f64>, crate::error::SpectralError> {
    let cert = min_two_eigpairs(pot, u)?;
    let g = pot.gradient_vec(u);
    Ok(dimer_step_with(u, &g, &cert.v1, cfg.delta))
}

/// Same as [`dimer_step`] with the gradient and lowest mode supplied.
pub fn dimer_step_with(u: &[f64], g: &[f64], v1: &[f64], delta: f64) -> Vec<f64> {
    let mut f = vec![0.0; u.len()];
    dimer_force(g, v1, &mut f);
    u.iter().zip(&f).map(|(a, b)| a + delta * b).collect()
}

enum Check {
    Success,
    Left,
    Continue,
}

struct Probe {
    cert: Option<SpectralCertificate>,
    grad: Vec<f64>,
    grad_norm: f64,
}

fn probe(pot: &dyn Potential, u: &[f64]) -> Probe {
    let grad = pot.gradient_vec(u);
    let grad_norm = norm(&grad);
    Probe {
        cert: min_two_eigpairs(pot, u).ok(),
        grad,
        grad_norm,
    }
}

fn classify(p: &Probe, eps_d: f64) -> Check {
    match &p.cert {
        None => Check::Left,
        Some(c) if c.is_index1() && p.grad_norm < eps_d => Check::Success,
        Some(c) if c.is_convex() => Check::Left,
        Some(_) => Check::Continue,
    }
}

fn trace_row(k: usize, n: usize, p: &Probe) -> TraceRow {
    let (l1, l2) = p
        .cert
        .as_ref()
        .map_or((f64::NAN, f64::NAN), |c| (c.lambda1, c.lambda2));
    TraceRow {
        iteration: k,
        particle: n,
        grad_norm: p.grad_norm,
        lambda1: l1,
        lambda2: l2,
    }
}

/// Runs the dimer dynamics from `u0`. Conditions are tested at the top of
/// every iteration: success first, then leaving the region, then the budget.
pub fn dimer_search(pot: &dyn Potential, u0: &[f64], cfg: &DimerConfig) -> DimerOutcome {
    let mut u = u0.to_vec();
    let mut trace = Vec::new();
    for k in 0..=cfg.k_d {
        let p = probe(pot, &u);
        if cfg.trace {
            trace.push(trace_row(k, 0, &p));
        }
        let status = match classify(&p, cfg.eps_d) {
            Check::Success => Some(DimerStatus::Success),
            Check::Left => Some(DimerStatus::FailureLeftRegion),
            Check::Continue if k == cfg.k_d => Some(DimerStatus::FailureBudget),
            Check::Continue => None,
        };
        if let Some(status) = status {
            return DimerOutcome {
                status,
                spectral_failure: p.cert.is_none(),
                point: u,
                certificate: p.cert,
                grad_norm: p.grad_norm,
                iterations: k,
                trace,
            };
        }
        let v1 = &p.cert.as_ref().unwrap().v1;
        u = dimer_step_with(&u, &p.grad, v1, cfg.delta);
    }
    unreachable!("loop returns at k == k_d")
}

/// Symmetric sparse adjacency with zero diagonal, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub m: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Adjacency {
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn n_edges(&self) -> usize {
        self.cols.len() / 2
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbours(i).map(|(_, w)| w).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.m]; self.m];
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in self.neighbours(i) {
                row[j] = v;
            }
        }
        w
    }

    /// Connected components, labelled in order of their smallest member.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.m];
        let mut next = 0;
        for s in 0..self.m {
            if label[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            label[s] = next;
            while let Some(i) = stack.pop() {
                for (j, _) in self.neighbours(i) {
                    if label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Gaussian similarity `exp(-|x - y|^2 / sigma)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / sigma).exp()
}

/// Thresholded kernel graph on the rows of `points` (`M x dim`).
pub fn kernel_adjacency(
    points: &[f64],
    dim: usize,
    sigma: f64,
    r: f64,
    mode: CutoffMode,
) -> Adjacency {
    let m = points.len() / dim;
    let rows: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = &points[i * dim..(i + 1) * dim];
            (0..m)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let k = gaussian_kernel(xi, &points[j * dim..(j + 1) * dim], sigma);
                    let keep = match mode {
                        CutoffMode::LiteralBelow => k < r,
                        CutoffMode::SimilarityAbove => k > r,
                    };
                    (keep && k > 0.0).then_some((j, k))
                })
                .collect()
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(m + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for row in rows {
        for (j, k) in row {
            cols.push(j);
            weights.push(k);
        }
        row_ptr.push(cols.len());
    }
    Adjacency {
        m,
        row_ptr,
        cols,
        weights,
    }
}

/// Matrix-free action of `I_d (x) (D - W)` on stacked particle states.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    pub adjacency: Adjacency,
    pub dim: usize,
}

impl GraphLaplacian {
    pub fn new(adjacency: Adjacency, dim: usize) -> Self {
        Self { adjacency, dim }
    }

    /// `(Lambda u)_i = sum_j W_ij (u_i - u_j)`, skipping rows and columns
    /// whose `mask` entry is false.
    pub fn apply_masked(&self, u: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
        let d = self.dim;
        let on = |i: usize| mask.is_none_or(|m| m[i]);
        out.par_chunks_mut(d).enumerate().for_each(|(i, oi)| {
            oi.iter_mut().for_each(|v| *v = 0.0);
            if !on(i) {
                return;
            }
            let ui = &u[i * d..(i + 1) * d];
            for (j, w) in self.adjacency.neighbours(i) {
                if !on(j) {
                    continue;
                }
                let uj = &u[j * d..(j + 1) * d];
                for k in 0..d {
                    oi[k] += w * (ui[k] - uj[k]);
                }
            }
        });
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        self.apply_masked(u, None, out)
    }

    /// Gershgorin bound on the largest eigenvalue, `2 max_i D_ii`.
    pub fn spectral_bound(&self) -> f64 {
        (0..self.adjacency.m)
            .map(|i| 2.0 * self.adjacency.degree(i))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleDimerResult {
    pub outcomes: Vec<DimerOutcome>,
    /// Every particle succeeded.
    pub success: bool,
    /// Stopped because every particle had a positive lowest eigenvalue.
    pub all_left_region: bool,
    pub iterations: usize,
    pub n_edges: usize,
    pub n_components: usize,
}

impl ParticleDimerResult {
    pub fn successes(&self) -> impl Iterator<Item = &DimerOutcome> {
        self.outcomes.iter().filter(|o| o.is_success())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Active,
    Done,
    Dropped,
}

/// Coupled dimers: `u <- u + delta (dimer force(u) - Lambda(u0) u)` with
/// the graph frozen at the starting points. A particle that satisfies the
/// saddle test stops moving and stays in the graph as an anchor. With
/// `freeze_convex`, a particle whose lowest eigenvalue turns positive stops
/// and leaves the graph. The run ends when every particle has succeeded,
/// when all lowest eigenvalues are positive, or when the budget runs out.
pub fn particle_dimer_search(
    pot: &dyn Potential,
    starts: &[f64],
    cfg: &ParticleDimerConfig,
) -> Result<ParticleDimerResult, SspdError> {
    cfg.validate()?;
    let d = pot.dim();
    if starts.is_empty() || !starts.len().is_multiple_of(d) {
        return Err(SspdError::Shape {
            expected: d,
            got: starts.len(),
        });
    }
    let m = starts.len() / d;
    let adjacency = kernel_adjacency(starts, d, cfg.sigma, cfg.r, cfg.cutoff_mode);
    let n_components = adjacency
        .components()
        .iter()
        .copied()
        .max()
        .map_or(0, |c| c + 1);
    let lap = GraphLaplacian::new(adjacency, d);
    let n_edges = lap.adjacency.n_edges();

    let mut u = starts.to_vec();
    let mut state = vec![State::Active; m];
    let mut outcomes: Vec<Option<DimerOutcome>> = vec![None; m];
    let mut traces: Vec<Vec<TraceRow>> = vec![Vec::new(); m];
    let mut consensus = vec![0.0; m * d];
    let mut last_probe: Vec<Option<Probe>> = (0..m).map(|_| None).collect();
    let mut k = 0;

    let all_left = loop {
        let probes: Vec<Option<Probe>> = u
            .par_chunks(d)
            .zip(state.par_iter())
            .map(|(ui, s)| (*s == State::Active).then(|| probe(pot, ui)))
            .collect();
        let mut any_active = false;
        let mut convex_all = true;
        for n in 0..m {
            let Some(p) = probes[n].as_ref() else {
                // finished particles keep their final eigenvalue for the collective test
                if let Some(c) = outcomes[n].as_ref().and_then(|o| o.certificate.as_ref()) {
                    convex_all &= c.is_convex();
                }
                continue;
            };
            if cfg.dimer.trace {
                traces[n].push(trace_row(k, n, p));
            }
            convex_all &= p.cert.as_ref().is_some_and(|c| c.is_convex());
            let verdict = match classify(p, cfg.dimer.eps_d) {
                Check::Success => Some((DimerStatus::Success, State::Done)),
                Check::Left if cfg.freeze_convex || p.cert.is_none() => {
                    Some((DimerStatus::FailureLeftRegion, State::Dropped))
                }
                _ => None,
            };
            if let Some((status, s)) = verdict {
                state[n] = s;
                outcomes[n] = Some(DimerOutcome {
                    status,
                    point: u[n * d..(n + 1) * d].to_vec(),
                    certificate: p.cert.clone(),
                    grad_norm: p.grad_norm,
                    iterations: k,
                    spectral_failure: p.cert.is_none(),
                    trace: Vec::new(),
                });
            } else {
                any_active = true;
            }
        }
        if convex_all || !any_active || k == cfg.dimer.k_d {
            for (slot, p) in last_probe.iter_mut().zip(probes) {
                if p.is_some() {
                    *slot = p;
                }
            }
            break convex_all;
        }

        // graph keeps successes as anchors and drops the rest of the finished particles
        let mask: Vec<bool> = state.iter().map(|s| *s != State::Dropped).collect();
        lap.apply_masked(&u, Some(&mask), &mut consensus);
        let delta = cfg.dimer.delta;
        u.par_chunks_mut(d)
            .zip(consensus.par_chunks(d))
            .zip(probes.par_iter().zip(state.par_iter()))
            .for_each(|((ui, ci), (p, s))| {
                if let (Some(p), State::Active) = (p, s) {
                    let v1 = &p.cert.as_ref().unwrap().v1;
                    let mut f = vec![0.0; d];
                    dimer_force(&p.grad, v1, &mut f);
                    for k in 0..d {
                        ui[k] += delta * (f[k] - ci[k]);
                    }
                }
            });
        for (slot, p) in last_probe.iter_mut().zip(probes) {
            if p.is_some() {
                *slot = p;
            }
        }
        k += 1;
    };

    let outcomes: Vec<DimerOutcome> = outcomes
        .into_iter()
        .zip(traces)
        .enumerate()
        .map(|(n, (o, trace))| {
            let mut o = o.unwrap_or_else(|| {
                let p = last_probe[n]
                    .as_ref()
                    .expect("every particle is probed at least once");
                DimerOutcome {
                    status: if all_left {
                        DimerStatus::FailureLeftRegion
                    } else {
                        DimerStatus::FailureBudget
                    },
                    point: u[n * d..(n + 1) * d].to_vec(),
                    certificate: p.cert.clone(),
                    grad_norm: p.grad_norm,
                    iterations: k,
                    spectral_failure: p.cert.is_none(),
                    trace: Vec::new(),
                }
            });
            o.trace = trace;
            o
        })
        .collect();
    let success = outcomes.iter().all(|o| o.is_success());
    Ok(ParticleDimerResult {
        outcomes,
        success,
        all_left_region: all_left,
        iterations: k,
        n_edges,
        n_components,
    })
}

/// CSV with columns `iteration, particle, grad_norm, lambda1, lambda2`.
pub fn trace_csv<'a>(outcomes: impl IntoIterator<Item = &'a DimerOutcome>) -> String {
    use std::fmt::Write;
    let mut s = String::from("iteration,particle,grad_norm,lambda1,lambda2\n");
    for o in outcomes {
        for r in &o.trace {
            let _ = writeln!(
                s,
                "{},{},{:.17e},{:.17e},{:.17e}",
                r.iteration, r.particle, r.grad_norm, r.lambda1, r.lambda2
            );
        }
    }
    s
}

//! Saddle search with periodic local refinement, minimum connection and
//! transition graph assembly.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimer::{dimer_search, particle_dimer_search, DimerOutcome, ParticleDimerConfig};
use crate::error::SearchError;
use crate::potentials::{norm, Potential};
use crate::spectral::{min_two_eigpairs, SpectralCertificate};
use crate::sspd::{
    initial_tangents, jittered_positions, run_sspd, Ensemble, IterationDiagnostics, SspdConfig,
};

/// Relative energy tolerance of the identity rule.
pub const ENERGY_TOL: f64 = 1e-4;
/// Absolute position tolerance of the identity rule.
pub const POSITION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleRecord {
    pub position: Vec<f64>,
    pub energy: f64,
    pub certificate: SpectralCertificate,
    pub grad_norm: f64,
    pub found_at_iteration: usize,
    /// Labels of the minima reached by descending on either side.
    #[serde(default)]
    pub connects: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumRecord {
    pub position: Vec<f64>,
    pub energy: f64,
    pub label: String,
    pub lambda1: f64,
    pub grad_norm: f64,
}

/// How two critical points are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityRule {
    /// Energies within `ENERGY_TOL * (1 + |E_a|)` or positions within
    /// `POSITION_TOL`. The energy test quotients out renumbering and rigid
    /// motions of identical atoms.
    EnergyOrPosition,
    /// Positions within `POSITION_TOL` only; used when symmetric copies are
    /// genuinely different states, such as the two wells of a double well.
    #[default]
    Position,
}

impl IdentityRule {
    pub fn for_potential(pot: &dyn Potential) -> Self {
        if pot.interchangeable_atoms() {
            Self::EnergyOrPosition
        } else {
            Self::Position
        }
    }
}

pub fn same_critical_point(
    rule: IdentityRule,
    pos_a: &[f64],
    e_a: f64,
    pos_b: &[f64],
    e_b: f64,
) -> bool {
    if rule == IdentityRule::EnergyOrPosition && (e_a - e_b).abs() <= ENERGY_TOL * (1.0 + e_a.abs())
    {
        return true;
    }
    pos_a.len() == pos_b.len()
        && pos_a
            .iter()
            .zip(pos_b)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            <= POSITION_TOL
}

pub fn saddle_identity(rule: IdentityRule, a: &SaddleRecord, b: &SaddleRecord) -> bool {
    same_critical_point(rule, &a.position, a.energy, &b.position, b.energy)
}

/// Appends `rec` unless an identical saddle is present. Returns whether it was added.
pub fn insert_saddle(rule: IdentityRule, set: &mut Vec<SaddleRecord>, rec: SaddleRecord) -> bool {
    if set.iter().any(|s| saddle_identity(rule, s, &rec)) {
        false
    } else {
        set.push(rec);
        true
    }
}

/// Particles currently in the index-1 region.
pub fn index1_members(ens: &Ensemble, pot: &dyn Potential) -> Vec<usize> {
    (0..ens.len())
        .into_par_iter()
        .filter(|&n| min_two_eigpairs(pot, ens.position(n)).is_ok_and(|c| c.is_index1()))
        .collect()
}

/// Up to `m` members of the index-1 region, heaviest first, ties by index.
pub fn select_starts(ens: &Ensemble, pot: &dyn Potential, m: usize) -> Vec<usize> {
    let mut s = index1_members(ens, pot);
    s.sort_by(|&a, &b| ens.w[b].total_cmp(&ens.w[a]).then(a.cmp(&b)));
    s.truncate(m);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LocalSearchKind {
    Single,
    #[default]
    Particle,
}

impl std::str::FromStr for LocalSearchKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(Self::Single),
            "particle" => Ok(Self::Particle),
            _ => Err(format!(
                "unknown local search kind '{s}' (expected single or particle)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-6,
            max_iter: 1_000_000,
        }
    }
}

fn default_gamma() -> f64 {
    0.01
}

fn default_max_minima() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub sspd: SspdConfig,
    pub dimer: ParticleDimerConfig,
    #[serde(default)]
    pub local_search: LocalSearchKind,
    #[serde(default)]
    pub descent: DescentConfig,
    /// Offset along the unstable mode for the two descents.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Budget of minima explored by the graph builder.
    #[serde(default = "default_max_minima")]
    pub max_minima: usize,
    /// Standard deviation of the initial cloud around each minimum.
    #[serde(default)]
    pub init_spread: Option<f64>,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        self.sspd.validate()?;
        self.dimer.validate()?;
        let bad = |m: &str| {
            Err(SearchError::Sspd(crate::error::SspdError::InvalidConfig(
                m.into(),
            )))
        };
        if !(self.descent.step > 0.0) || !(self.descent.tol > 0.0) || self.descent.max_iter == 0 {
            return bad("descent needs positive step, tol and max_iter");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if self.max_minima == 0 {
            return bad("max_minima must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaunchLog {
    pub iteration: usize,
    pub n_region: usize,
    pub n_starts: usize,
    pub n_success: usize,
    pub n_new: usize,
}

#[derive(Debug, Clone)]
pub struct SearchRun {
    pub saddles: Vec<SaddleRecord>,
    pub launches: Vec<LaunchLog>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub final_ensemble: Ensemble,
    /// Iteration at which the run was stopped by the caller.
    pub stopped_at: Option<usize>,
}

impl SearchRun {
    pub fn first_success_iteration(&self) -> Option<usize> {
        self.saddles.iter().map(|s| s.found_at_iteration).min()
    }
}

fn record_from(pot: &dyn Potential, o: &DimerOutcome, k: usize) -> Option<SaddleRecord> {
    let cert = o.certificate.clone()?;
    o.is_success().then(|| SaddleRecord {
        energy: pot.value(&o.point),
        position: o.point.clone(),
        certificate: cert,
        grad_norm: o.grad_norm,
        found_at_iteration: k,
        connects: None,
    })
}

/// Runs local searches from a snapshot of the ensemble. The ensemble itself
/// is left untouched.
pub fn local_search(
    pot: &dyn Potential,
    ens: &Ensemble,
    cfg: &SearchConfig,
    k: usize,
) -> (Vec<SaddleRecord>, LaunchLog) {
    let limit = match cfg.local_search {
        LocalSearchKind::Single => 1,
        LocalSearchKind::Particle => cfg.dimer.m,
    };
    let region = index1_members(ens, pot);
    let mut starts_idx = region.clone();
    starts_idx.sort_by(|&a, &b| ens.w[b].total_cmp(&ens.w[a]).then(a.cmp(&b)));
    starts_idx.truncate(limit);
    let mut log = LaunchLog {
        iteration: k,
        n_region: region.len(),
        n_starts: starts_idx.len(),
        n_success: 0,
        n_new: 0,
    };
    if starts_idx.is_empty() {
        return (Vec::new(), log);
    }
    let outcomes = match cfg.local_search {
        LocalSearchKind::Single => vec![dimer_search(
            pot,
            ens.position(starts_idx[0]),
            &cfg.dimer.dimer,
        )],
        LocalSearchKind::Particle => {
            let starts: Vec<f64> = starts_idx
                .iter()
                .flat_map(|&n| ens.position(n).iter().copied())
                .collect();
            match particle_dimer_search(pot, &starts, &cfg.dimer) {
                Ok(r) => r.outcomes,
                Err(_) => Vec::new(),
            }
        }
    };
    let rule = IdentityRule::for_potential(pot);
    let mut found = Vec::new();
    for o in &outcomes {
        if let Some(rec) = record_from(pot, o, k) {
            log.n_success += 1;
            insert_saddle(rule, &mut found, rec);
        }
    }
    (found, log)
}

/// SSPD with a local search every `m` iterations (from `k = m` on) from the heaviest members
/// of the index-1 region. `on_new` sees the catalog each time it grows and
/// may stop the run.
pub fn sspd_ls_with<F>(
    pot: &dyn Potential,
    cfg: &SearchConfig,
    init_x: Vec<f64>,
    init_y: Vec<f64>,
    mut on_new: F,
) -> Result<SearchRun, SearchError>
where
    F: FnMut(&[SaddleRecord]) -> ControlFlow<()>,
{
    cfg.validate()?;
    let rule = IdentityRule::for_potential(pot);
    let mut saddles: Vec<SaddleRecord> = Vec::new();
    let mut launches = Vec::new();
    let run = run_sspd(pot, &cfg.sspd, init_x, init_y, |ens, k| {
        if k == 0 || k % cfg.sspd.m != 0 {
            return ControlFlow::Continue(());
        }
        let (found, mut log) = local_search(pot, ens, cfg, k);
        for rec in found {
            if insert_saddle(rule, &mut saddles, rec) {
                log.n_new += 1;
            }
        }
        let grew = log.n_new > 0;
        if log.n_starts > 0 {
            launches.push(log);
        }
        if grew {
            on_new(&saddles)
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(SearchRun {
        saddles,
        launches,
        diagnostics: run.diagnostics,
        final_ensemble: run.ensemble,
        stopped_at: run.stopped_at,
    })
}

pub fn sspd_ls(
    pot: &dyn Potential,
    cfg: &SearchConfig,
    init_x: Vec<f64>,
    init_y: Vec<f64>,
) -> Result<SearchRun, SearchError> {
    sspd_ls_with(pot, cfg, init_x, init_y, |_| ControlFlow::Continue(()))
}

/// Initial ensemble around `x0`: Gaussian jitter of standard deviation
/// `spread` (one step of noise, `sqrt(2 beta_inv delta)`, when `None`),
/// tangents along the normalized all-ones vector.
pub fn default_init(x0: &[f64], cfg: &SspdConfig, spread: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let jitter = spread.unwrap_or_else(|| (2.0 * cfg.beta_inv * cfg.delta).sqrt());
    let x = jittered_positions(x0, cfg.n_particles, jitter, cfg.seed);
    let y = initial_tangents(x0.len(), cfg.n_particles, None);
    (x, y)
}

/// Fixed-step steepest descent. Ten consecutive energy increases halve the
/// step; the eighth halving gives up. The end point must be a minimum.
pub fn gradient_descent(
    pot: &dyn Potential,
    x0: &[f64],
    cfg: &DescentConfig,
) -> Result<MinimumRecord, SearchError> {
    const RISES_BEFORE_HALVING: usize = 10;
    const MAX_HALVINGS: usize = 8;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut step = cfg.step;
    let mut e = pot.value(&x);
    let mut rises = 0;
    let mut halvings = 0;
    let mut it = 0;
    loop {
        pot.gradient(&x, &mut g);
        let gn = norm(&g);
        if !gn.is_finite() || !e.is_finite() {
            return Err(SearchError::DescentDiverged { halvings });
        }
        if gn <= cfg.tol {
            break;
        }
        if it == cfg.max_iter {
            return Err(SearchError::DescentBudget {
                iterations: it,
                grad_norm: gn,
            });
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        let e_new = pot.value(&x);
        if e_new > e {
            rises += 1;
            if rises == RISES_BEFORE_HALVING {
                halvings += 1;
                if halvings == MAX_HALVINGS {
                    return Err(SearchError::DescentDiverged { halvings });
                }
                step *= 0.5;
                rises = 0;
            }
        } else {
            rises = 0;
        }
        e = e_new;
        it += 1;
    }
    let cert = min_two_eigpairs(pot, &x)?;
    if !cert.is_convex() {
        return Err(SearchError::NotAMinimum(cert.lambda1));
    }
    Ok(MinimumRecord {
        energy: pot.value(&x),
        grad_norm: norm(&g),
        position: x,
        label: String::new(),
        lambda1: cert.lambda1,
    })
}

/// Descents from `u_ts + gamma v1` and `u_ts - gamma v1`.
pub fn connect_minima(
    pot: &dyn Potential,
    saddle: &SaddleRecord,
    gamma: f64,
    descent: &DescentConfig,
) -> (
    Result<MinimumRecord, SearchError>,
    Result<MinimumRecord, SearchError>,
) {
    let v = &saddle.certificate.v1;
    let side = |s: f64| -> Vec<f64> {
        saddle
            .position
            .iter()
            .zip(v)
            .map(|(u, vi)| u + s * gamma * vi)
            .collect()
    };
    let (plus, minus) = rayon::join(
        || gradient_descent(pot, &side(1.0), descent),
        || gradient_descent(pot, &side(-1.0), descent),
    );
    (plus, minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub nodes: Vec<MinimumRecord>,
    /// Saddles with `connects` set to the endpoint labels.
    pub edges: Vec<SaddleRecord>,
    /// Saddles whose descents failed on at least one side.
    pub unconnected: Vec<SaddleRecord>,
    /// A budget stopped the exploration with minima still queued.
    pub incomplete: bool,
}

impl TransitionGraph {
    /// Graphviz rendering; edges carry the saddle energy.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("graph transitions {\n");
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  \"{}\" [label=\"{}\\n{:.4}\"];",
                n.label, n.label, n.energy
            );
        }
        for e in &self.edges {
            if let Some((a, b)) = &e.connects {
                let _ = writeln!(s, "  \"{a}\" -- \"{b}\" [label=\"{:.4}\"];", e.energy);
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Optional renaming of discovered minima: the first entry whose energy is
/// within `tol` of a minimum supplies its label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub entries: Vec<(String, f64)>,
    pub tol: f64,
}

impl LabelTable {
    fn lookup(&self, energy: f64) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, e)| (e - energy).abs() <= self.tol)
            .map(|(l, _)| l.as_str())
    }
}

struct Catalog<'a> {
    nodes: Vec<MinimumRecord>,
    labels: &'a LabelTable,
    rule: IdentityRule,
}

impl Catalog<'_> {
    /// Label of `m`, inserting it when new. The flag reports insertion.
    fn intern(&mut self, mut m: MinimumRecord) -> (String, bool) {
        if let Some(n) = self
            .nodes
            .iter()
            .find(|n| same_critical_point(self.rule, &n.position, n.energy, &m.position, m.energy))
        {
            return (n.label.clone(), false);
        }
        m.label = match self.labels.lookup(m.energy) {
            Some(l) if !self.nodes.iter().any(|n| n.label == l) => l.to_string(),
            _ => {
                let mut i = self.nodes.len();
                while self.nodes.iter().any(|n| n.label == format!("C{i}")) {
                    i += 1;
                }
                format!("C{i}")
            }
        };
        let l = m.label.clone();
        self.nodes.push(m);
        (l, true)
    }
}

impl Catalog<'_> {
    /// Descends the seeds and interns the minima reached; returns the labels
    /// that were new.
    fn seed(
        &mut self,
        pot: &dyn Potential,
        seeds: &[Vec<f64>],
        descent: &DescentConfig,
    ) -> Result<Vec<String>, SearchError> {
        let mut fresh = Vec::new();
        for s in seeds {
            let m = gradient_descent(pot, s, descent)?;
            let (label, new) = self.intern(m);
            if new {
                fresh.push(label);
            }
        }
        Ok(fresh)
    }

    /// Connects every saddle not already catalogued; returns the labels of
    /// minima seen for the first time.
    fn connect(
        &mut self,
        pot: &dyn Potential,
        saddles: Vec<SaddleRecord>,
        cfg: &SearchConfig,
        edges: &mut Vec<SaddleRecord>,
        unconnected: &mut Vec<SaddleRecord>,
    ) -> Vec<String> {
        let mut fresh = Vec::new();
        for s in saddles {
            if edges
                .iter()
                .chain(unconnected.iter())
                .any(|e| saddle_identity(self.rule, e, &s))
            {
                continue;
            }
            match connect_minima(pot, &s, cfg.gamma, &cfg.descent) {
                (Ok(a), Ok(b)) => {
                    let (la, na) = self.intern(a);
                    let (lb, nb) = self.intern(b);
                    if na {
                        fresh.push(la.clone());
                    }
                    if nb {
                        fresh.push(lb.clone());
                    }
                    edges.push(SaddleRecord {
                        connects: Some((la, lb)),
                        ..s
                    });
                }
                _ => unconnected.push(s),
            }
        }
        fresh
    }
}

/// Graph of the given saddles and the minima reached from them, without
/// further exploration. The seeds are descended first so they keep the
/// lowest labels.
pub fn connect_saddles(
    pot: &dyn Potential,
    seeds: &[Vec<f64>],
    saddles: Vec<SaddleRecord>,
    cfg: &SearchConfig,
    labels: &LabelTable,
) -> Result<TransitionGraph, SearchError> {
    let mut cat = Catalog {
        nodes: Vec::new(),
        labels,
        rule: IdentityRule::for_potential(pot),
    };
    cat.seed(pot, seeds, &cfg.descent)?;
    let (mut edges, mut unconnected) = (Vec::new(), Vec::new());
    cat.connect(pot, saddles, cfg, &mut edges, &mut unconnected);
    Ok(TransitionGraph {
        nodes: cat.nodes,
        edges,
        unconnected,
        incomplete: false,
    })
}

/// Worklist exploration: descend the seeds, then for each unexplored
/// minimum run the saddle search from it, connect every new saddle and
/// queue newly reached minima. `cfg.sspd.seed` is offset by the exploration
/// count so each minimum gets its own noise.
pub fn build_transition_graph(
    pot: &dyn Potential,
    seeds: &[Vec<f64>],
    cfg: &SearchConfig,
    labels: &LabelTable,
) -> Result<TransitionGraph, SearchError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(SearchError::NoSeeds);
    }
    let mut cat = Catalog {
        nodes: Vec::new(),
        labels,
        rule: IdentityRule::for_potential(pot),
    };
    let mut queue: VecDeque<String> = cat.seed(pot, seeds, &cfg.descent)?.into();
    let (mut edges, mut unconnected) = (Vec::new(), Vec::new());
    let mut explored = 0;
    while let Some(label) = queue.pop_front() {
        if explored == cfg.max_minima {
            queue.push_front(label);
            break;
        }
        let x0 = cat
            .nodes
            .iter()
            .find(|n| n.label == label)
            .unwrap()
            .position
            .clone();
        let mut local = cfg.clone();
        local.sspd.seed = cfg.sspd.seed.wrapping_add(explored as u64);
        let (x, y) = default_init(&x0, &local.sspd, cfg.init_spread);
        let run = sspd_ls(pot, &local, x, y)?;
        explored += 1;
        queue.extend(cat.connect(pot, run.saddles, cfg, &mut edges, &mut unconnected));
    }
    Ok(TransitionGraph {
        nodes: cat.nodes,
        edges,
        unconnected,
        incomplete: !queue.is_empty(),
    })
}

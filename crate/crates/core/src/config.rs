//! Run configuration: one JSON document per run, validated before any
//! computation, plus the shipped presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dimer::{CutoffMode, DimerConfig, ParticleDimerConfig};
use crate::error::Error;
use crate::pde::{Equation, Grid2D};
use crate::potentials::{self, LatticeSpec, Lj7, MorseParams, SharedPotential};
use crate::search::{DescentConfig, LocalSearchKind, SearchConfig};
use crate::sspd::SspdConfig;

/// Names accepted by [`preset`].
pub const PRESETS: &[(&str, &str)] = &[
    (
        "double-well",
        "SSPD on the quartic double well from a uniform box",
    ),
    ("mueller-brown", "SSPD-LS on Mueller-Brown seeded at C2"),
    (
        "challenge-2d",
        "SSPD-LS with the single dimer on the disconnected-region potential, seeded at M1",
    ),
    (
        "vacancy",
        "SSPD-LS on the Morse vacancy lattice, plus the scaling benchmark",
    ),
    ("lj7", "transition graph of the 2d LJ7 cluster seeded at C0"),
    (
        "fokker-planck",
        "Fokker-Planck evolution on the flat double well",
    ),
    ("witten", "Witten evolution on the flat double well"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    /// Only read by `morse-vacancy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
}

/// Initial ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// A named minimum of the potential (see [`named_points`]), relaxed by
    /// gradient descent before use.
    Minimum { name: String },
    /// Explicit coordinates; `descend` relaxes them first.
    Point {
        coordinates: Vec<f64>,
        #[serde(default)]
        descend: bool,
    },
    /// Particles drawn uniformly in a box.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub equations: Vec<Equation>,
    pub grid: Grid2D,
    pub beta_inv: f64,
    /// Time step; the explicit stability bound when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub coupling: bool,
    /// Initial bump `exp(-|x - center|^2 / sigma0)`.
    pub center: [f64; 2],
    pub sigma0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Free-atom counts; the dimension is twice the count.
    pub free_atoms: Vec<usize>,
    pub iterations: usize,
    pub n_particles: usize,
    /// Width of the fixed-atom shell around the free atoms.
    pub fixed_width: f64,
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// Timed repetitions per row; the minimum is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_true() -> bool {
    true
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    /// Copied into the SSPD configuration before the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub init: InitSpec,
    /// Initial tangent shared by all particles; normalized all-ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_tangent: Option<Vec<f64>>,
    pub search: SearchConfig,
    /// `search` builds the full transition graph instead of a single SSPD-LS run.
    #[serde(default)]
    pub graph: bool,
    /// Known minimum energies used to name graph nodes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<(String, f64)>,
    #[serde(default = "default_label_tol")]
    pub label_tol: f64,
    /// Ensemble snapshot period for `sspd`; 0 keeps only the first and last state.
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
}

fn default_label_tol() -> f64 {
    1e-2
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| cfg_err(format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Instantiates the potential named in the config.
    pub fn build_potential(&self) -> Result<SharedPotential, Error> {
        Ok(potentials::by_name(
            &self.potential.name,
            self.potential.lattice.as_ref(),
        )?)
    }

    /// Search configuration with the top-level seed applied.
    pub fn effective_search(&self) -> SearchConfig {
        let mut s = self.search.clone();
        s.sspd.seed = self.seed;
        s
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<(), Error> {
        let pot = self.build_potential()?;
        let d = pot.dim();
        self.effective_search()
            .validate()
            .map_err(|e| cfg_err(e.to_string()))?;
        let dim_check = |what: &str, v: &[f64]| {
            if v.len() == d {
                Ok(())
            } else {
                Err(cfg_err(format!(
                    "{what} has {} entries, potential '{}' has dimension {d}",
                    v.len(),
                    self.potential.name
                )))
            }
        };
        match &self.init {
            InitSpec::Minimum { name } => {
                let points = named_points(&self.potential)?;
                if !points.iter().any(|(n, _)| n == name) {
                    let known: Vec<String> = points.into_iter().map(|(n, _)| n).collect();
                    return Err(cfg_err(format!(
                        "unknown minimum '{name}' for '{}' (known: {})",
                        self.potential.name,
                        known.join(", ")
                    )));
                }
            }
            InitSpec::Point { coordinates, .. } => {
                dim_check("init.coordinates", coordinates)?;
                if coordinates.iter().any(|v| !v.is_finite()) {
                    return Err(cfg_err("init.coordinates must be finite"));
                }
            }
            InitSpec::Box { lower, upper } => {
                dim_check("init.lower", lower)?;
                dim_check("init.upper", upper)?;
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(cfg_err("init box needs lower < upper in every coordinate"));
                }
            }
        }
        if let Some(y) = &self.init_tangent {
            dim_check("init_tangent", y)?;
            if y.iter().all(|v| *v == 0.0) || y.iter().any(|v| !v.is_finite()) {
                return Err(cfg_err("init_tangent must be finite and non-zero"));
            }
        }
        if !(self.label_tol > 0.0) {
            return Err(cfg_err("label_tol must be positive"));
        }
        if let Some(p) = &self.pde {
            p.grid.validate().map_err(|e| cfg_err(e.to_string()))?;
            if d != 2 {
                return Err(cfg_err(format!(
                    "pde needs a 2d potential, '{}' has dimension {d}",
                    self.potential.name
                )));
            }
            if p.equations.is_empty() {
                return Err(cfg_err("pde.equations is empty"));
            }
            if !(p.beta_inv > 0.0) || !(p.t_final >= 0.0) || !(p.sigma0 > 0.0) {
                return Err(cfg_err(
                    "pde needs beta_inv > 0, t_final >= 0 and sigma0 > 0",
                ));
            }
            if let Some(dt) = p.dt {
                if !(dt > 0.0) {
                    return Err(cfg_err("pde.dt must be positive"));
                }
            }
        }
        if let Some(b) = &self.bench {
            if b.free_atoms.is_empty() || b.free_atoms.contains(&0) {
                return Err(cfg_err("bench.free_atoms must be non-empty and positive"));
            }
            if b.iterations == 0 || b.n_particles == 0 || b.repeats == 0 {
                return Err(cfg_err(
                    "bench needs positive iterations, n_particles and repeats",
                ));
            }
            if !(b.fixed_width >= 0.0) {
                return Err(cfg_err("bench.fixed_width must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Approximate minima by potential; runs relax them before use.
pub fn named_points(spec: &PotentialSpec) -> Result<Vec<(String, Vec<f64>)>, Error> {
    let v = |n: &str, x: &[f64]| (n.to_string(), x.to_vec());
    Ok(match spec.name.as_str() {
        "double-well-quartic" => vec![v("M1", &[-1.0, 0.0]), v("M2", &[1.0, 0.0])],
        "double-well-flat" => {
            let x1 = 1.0 / (2.0f64 * 0.045).sqrt();
            vec![v("M1", &[-x1, 0.0]), v("M2", &[x1, 0.0])]
        }
        "mueller-brown" => vec![
            v("C1", &[-0.558, 1.442]),
            v("C2", &[-0.050, 0.467]),
            v("C3", &[0.623, 0.028]),
        ],
        "challenge-2d" => vec![v("M1", &CHALLENGE_M1), v("M2", &CHALLENGE_M2)],
        "lj7" => {
            let mut out = vec![v("C0", &Lj7::hexagon(2f64.powf(1.0 / 6.0)))];
            out.extend(LJ7_MINIMA.iter().map(|(n, x)| v(n, x)));
            out
        }
        "morse-vacancy" => {
            let lattice = match &spec.lattice {
                Some(l) => l.clone(),
                None => default_lattice()?,
            };
            vec![v("reference", &lattice.reference_coordinates())]
        }
        _ => Vec::new(),
    })
}

fn default_lattice() -> Result<LatticeSpec, Error> {
    Ok(LatticeSpec::triangular_vacancy(
        23,
        3.0,
        MorseParams::default(),
        None,
    )?)
}

/// Minimum of the flat outer well of the challenge potential, and the
/// Gaussian well added at (5, 5).
pub const CHALLENGE_M1: [f64; 2] = [0.194022708, -0.866524183];
pub const CHALLENGE_M2: [f64; 2] = [4.879283931, 4.881483790];

/// Dimer step and SSPD budget of the challenge preset.
pub const CHALLENGE_DIMER_DELTA: f64 = 0.5;
pub const CHALLENGE_MAX_ITER: usize = 50_000;

fn base_search(sspd: SspdConfig) -> SearchConfig {
    SearchConfig {
        sspd,
        dimer: ParticleDimerConfig::default(),
        local_search: LocalSearchKind::Particle,
        descent: DescentConfig::default(),
        gamma: 0.01,
        max_minima: 16,
        init_spread: None,
    }
}

fn flat_double_well_pde(equation: Equation) -> PdeSection {
    PdeSection {
        equations: vec![equation],
        grid: Grid2D {
            x_min: -8.5,
            x_max: 8.5,
            y_min: -8.5,
            y_max: 8.5,
            nx: 256,
            ny: 256,
        },
        beta_inv: 1e-3,
        dt: None,
        t_final: 15_000.0,
        snapshot_times: vec![1_000.0, 5_000.0],
        coupling: true,
        center: [0.5, 0.5],
        sigma0: 1e-3,
    }
}

/// A shipped configuration by name.
pub fn preset(name: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig {
        potential: PotentialSpec {
            name: String::new(),
            lattice: None,
        },
        seed: 0,
        output: None,
        init: InitSpec::Minimum {
            name: String::new(),
        },
        init_tangent: None,
        search: base_search(SspdConfig::mueller_brown()),
        graph: false,
        labels: Vec::new(),
        label_tol: default_label_tol(),
        snapshot_stride: 0,
        pde: None,
        bench: None,
    };
    match name {
        "double-well" => {
            cfg.potential.name = "double-well-quartic".into();
            cfg.search = base_search(SspdConfig::double_well());
            cfg.init = InitSpec::Box {
                lower: vec![-1.5, -1.0],
                upper: vec![1.5, 1.0],
            };
            cfg.init_tangent = Some(vec![1.0, 1.0]);
            cfg.snapshot_stride = 200;
        }
        "mueller-brown" => {
            cfg.potential.name = "mueller-brown".into();
            cfg.init = InitSpec::Minimum { name: "C2".into() };
            cfg.search.init_spread = Some(0.2);
            cfg.search.dimer.cutoff_mode = CutoffMode::SimilarityAbove;
            // curvature near C1 is in the thousands
            cfg.search.descent.step = 1e-4;
        }
        "challenge-2d" => {
            cfg.potential.name = "challenge-2d".into();
            cfg.search = base_search(SspdConfig::challenge(0.1));
            cfg.search.sspd.max_iter = CHALLENGE_MAX_ITER;
            cfg.search.local_search = LocalSearchKind::Single;
            // curvatures at T1 are about 0.1, so the dimer contracts like (1 - 0.1 delta)^k
            cfg.search.dimer.dimer.delta = CHALLENGE_DIMER_DELTA;
            cfg.init = InitSpec::Minimum { name: "M1".into() };
        }
        "vacancy" => {
            cfg.potential.name = "morse-vacancy".into();
            cfg.search = base_search(SspdConfig::vacancy());
            cfg.search.dimer.m = 100;
            cfg.init = InitSpec::Minimum {
                name: "reference".into(),
            };
            cfg.bench = Some(BenchSection {
                free_atoms: vec![9, 23, 69, 101, 139],
                iterations: 100,
                n_particles: 200,
                fixed_width: 3.0,
                cutoff: Some(2.5),
                repeats: 3,
            });
        }
        "lj7" => {
            cfg.potential.name = "lj7".into();
            cfg.search = base_search(SspdConfig::lj7());
            cfg.search.dimer.m = 100;
            cfg.search.dimer.dimer = DimerConfig {
                delta: LJ7_DIMER_DELTA,
                k_d: LJ7_DIMER_BUDGET,
                ..DimerConfig::default()
            };
            cfg.search.descent.step = 2e-3;
            cfg.init = InitSpec::Minimum { name: "C0".into() };
            cfg.graph = true;
            cfg.labels = LJ7_ENERGIES
                .iter()
                .map(|(n, e)| (n.to_string(), *e))
                .collect();
        }
        "fokker-planck" | "witten" => {
            cfg.potential.name = "double-well-flat".into();
            cfg.init = InitSpec::Minimum { name: "M1".into() };
            let eq = if name == "witten" {
                Equation::Witten
            } else {
                Equation::FokkerPlanck
            };
            cfg.pde = Some(flat_double_well_pde(eq));
        }
        other => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            return Err(cfg_err(format!(
                "unknown preset '{other}' (known: {})",
                known.join(", ")
            )));
        }
    }
    Ok(cfg)
}

/// Reference energies of the four LJ7 minima, used as node labels.
pub const LJ7_ENERGIES: [(&str, f64); 4] = [
    ("C0", -12.535),
    ("C1", -11.501),
    ("C2", -11.477),
    ("C3", -11.403),
];

/// Dimer step and budget for LJ7. The SSPD step of 1e-4 with a budget of
/// 1000 moves a dimer too little to converge on this surface.
pub const LJ7_DIMER_DELTA: f64 = 1e-3;
pub const LJ7_DIMER_BUDGET: usize = 3000;

/// Relaxed LJ7 minima C1 to C3 up to rigid motion, rounded.
pub const LJ7_MINIMA: [(&str, [f64; 14]); 3] = [
    (
        "C1",
        [
            -0.280929, 0.327618, 0.728906, -0.146587, 0.635941, 0.968569, -0.384222, 1.437086,
            -1.203864, -0.296978, -0.194577, -0.785435, 0.817718, -1.261694,
        ],
    ),
    (
        "C2",
        [
            -0.278738, -0.097107, 0.788900, 0.228456, 1.029195, 1.320899, -0.040478, 0.989242,
            -1.348136, -0.409750, -0.536271, -1.185369, 0.536527, -0.861853,
        ],
    ),
    (
        "C3",
        [
            -0.644582, -0.201516, 1.288517, -0.086142, 1.217889, 1.031762, 0.284370, 0.415505,
            -1.574600, -0.823044, -0.571544, -1.321617, 0.357450, -0.702319,
        ],
    ),
];

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Grid2D, GridField};
use crate::error::PdeError;
use crate::potentials::Potential;

/// Gradient and Hessian of a two dimensional potential sampled at the nodes.
#[derive(Debug, Clone)]
pub struct GridPotential {
    pub grid: Grid2D,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub hxx: Vec<f64>,
    pub hxy: Vec<f64>,
    pub hyy: Vec<f64>,
}

impl GridPotential {
    pub fn sample(pot: &dyn Potential, grid: Grid2D) -> Result<Self, PdeError> {
        grid.validate()?;
        if pot.dim() != 2 {
            return Err(PdeError::Dimension(pot.dim()));
        }
        let n = grid.len();
        let rows: Vec<[f64; 5]> = (0..n)
            .into_par_iter()
            .map(|k| {
                let p = grid.node(k % grid.nx, k / grid.nx);
                let mut g = [0.0; 2];
                pot.gradient(&p, &mut g);
                let mut c0 = [0.0; 2];
                let mut c1 = [0.0; 2];
                pot.hvp(&p, &[1.0, 0.0], &mut c0);
                pot.hvp(&p, &[0.0, 1.0], &mut c1);
                [g[0], g[1], c0[0], 0.5 * (c0[1] + c1[0]), c1[1]]
            })
            .collect();
        Ok(Self {
            grid,
            vx: rows.iter().map(|r| r[0]).collect(),
            vy: rows.iter().map(|r| r[1]).collect(),
            hxx: rows.iter().map(|r| r[2]).collect(),
            hxy: rows.iter().map(|r| r[3]).collect(),
            hyy: rows.iter().map(|r| r[4]).collect(),
        })
    }

    /// A potential that is identically zero.
    pub fn flat(grid: Grid2D) -> Self {
        let z = vec![0.0; grid.len()];
        Self {
            grid,
            vx: z.clone(),
            vy: z.clone(),
            hxx: z.clone(),
            hxy: z.clone(),
            hyy: z,
        }
    }

    /// Largest explicit step: `0.9 h^2 / (4 beta_inv + max|grad V| h + max rho(Hess V) h^2)`
    /// with `h = min(hx, hy)`.
    pub fn stability_bound(&self, beta_inv: f64) -> f64 {
        let h = self.grid.hx().min(self.grid.hy());
        let gmax = self
            .vx
            .iter()
            .zip(&self.vy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max);
        let rmax = (0..self.grid.len())
            .map(|k| {
                let (a, b, c) = (self.hxx[k], self.hxy[k], self.hyy[k]);
                let m = 0.5 * (a + c);
                let r = (0.25 * (a - c).powi(2) + b * b).sqrt();
                (m + r).abs().max((m - r).abs())
            })
            .fold(0.0, f64::max);
        0.9 * h * h / (4.0 * beta_inv + gmax * h + rmax * h * h)
    }
}

/// `div(rho grad V) + beta_inv Lap rho` with centered differences and zero
/// values outside the grid.
pub fn apply_l_star(gp: &GridPotential, beta_inv: f64, rho: &[f64], out: &mut [f64]) {
    let g = gp.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx(), g.hy());
    let (ax, ay) = (1.0 / (2.0 * hx), 1.0 / (2.0 * hy));
    let (dx, dy) = (beta_inv / (hx * hx), beta_inv / (hy * hy));
    let zeros = vec![0.0; nx];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let r = |jj: usize| &rho[jj * nx..(jj + 1) * nx];
        let gy = |jj: usize| &gp.vy[jj * nx..(jj + 1) * nx];
        let (s, gs) = if j > 0 {
            (r(j - 1), gy(j - 1))
        } else {
            (&zeros[..], &zeros[..])
        };
        let (n, gn) = if j + 1 < ny {
            (r(j + 1), gy(j + 1))
        } else {
            (&zeros[..], &zeros[..])
        };
        let c = r(j);
        let gx = &gp.vx[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let (e, fe) = if i + 1 < nx {
                (c[i + 1], c[i + 1] * gx[i + 1])
            } else {
                (0.0, 0.0)
            };
            let (w, fw) = if i > 0 {
                (c[i - 1], c[i - 1] * gx[i - 1])
            } else {
                (0.0, 0.0)
            };
            let ci = c[i];
            row[i] = ax * (fe - fw)
                + ay * (n[i] * gn[i] - s[i] * gs[i])
                + dx * (e - 2.0 * ci + w)
                + dy * (n[i] - 2.0 * ci + s[i]);
        }
    });
}

/// Component-wise `L*` minus the pointwise Hessian product. `coupling =
/// false` drops the Hessian term.
pub fn apply_l_tilde_star(
    gp: &GridPotential,
    beta_inv: f64,
    phi: &[f64],
    out: &mut [f64],
    coupling: bool,
) {
    let n = gp.grid.len();
    let (p1, p2) = phi.split_at(n);
    let (o1, o2) = out.split_at_mut(n);
    apply_l_star(gp, beta_inv, p1, o1);
    apply_l_star(gp, beta_inv, p2, o2);
    if coupling {
        o1.par_iter_mut()
            .zip(o2.par_iter_mut())
            .enumerate()
            .for_each(|(k, (a, b))| {
                *a -= gp.hxx[k] * p1[k] + gp.hxy[k] * p2[k];
                *b -= gp.hxy[k] * p1[k] + gp.hyy[k] * p2[k];
            });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    FokkerPlanck,
    Witten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    pub beta_inv: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Times at which snapshots are kept (the final time is always kept).
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Hessian term of the Witten operator.
    #[serde(default = "default_true")]
    pub coupling: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: GridField,
}

#[derive(Debug, Clone)]
pub struct PdeRun {
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub dt: f64,
    /// Most negative value seen in a scalar run (undershoot of the scheme).
    pub min_value: f64,
}

impl PdeRun {
    pub fn final_field(&self) -> &GridField {
        &self
            .snapshots
            .last()
            .expect("final snapshot is always stored")
            .field
    }
}

/// Forward Euler in time. Rejects `dt` above [`GridPotential::stability_bound`]
/// before stepping; a non-finite value mid-run is reported as divergence.
pub fn solve(
    eq: Equation,
    gp: &GridPotential,
    init: &GridField,
    cfg: &PdeConfig,
) -> Result<PdeRun, PdeError> {
    let comps = match eq {
        Equation::FokkerPlanck => 1,
        Equation::Witten => 2,
    };
    if init.components != comps {
        return Err(PdeError::Components {
            expected: comps,
            got: init.components,
        });
    }
    if init.grid != gp.grid {
        return Err(PdeError::InvalidGrid(
            "initial field and potential use different grids".into(),
        ));
    }
    let bound = gp.stability_bound(cfg.beta_inv);
    if !(cfg.dt > 0.0) || cfg.dt > bound {
        return Err(PdeError::Unstable { dt: cfg.dt, bound });
    }
    if !(cfg.t_final >= 0.0) {
        return Err(PdeError::InvalidGrid(
            "final time must be non-negative".into(),
        ));
    }
    let steps = (cfg.t_final / cfg.dt).ceil() as usize;
    let dt = if steps == 0 {
        cfg.dt
    } else {
        cfg.t_final / steps as f64
    };
    let mut targets: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .filter(|t| **t >= 0.0 && **t < cfg.t_final)
        .map(|t| (t / dt).round() as usize)
        .collect();
    targets.sort_unstable();
    targets.dedup();

    let mut u = init.values.clone();
    let mut du = vec![0.0; u.len()];
    let mut snapshots = Vec::new();
    let mut next = 0;
    let mut min_value = u.iter().copied().fold(f64::INFINITY, f64::min);
    for s in 0..steps {
        while next < targets.len() && targets[next] == s {
            snapshots.push(Snapshot {
                time: s as f64 * dt,
                field: GridField {
                    values: u.clone(),
                    ..init.clone()
                },
            });
            next += 1;
        }
        match eq {
            Equation::FokkerPlanck => apply_l_star(gp, cfg.beta_inv, &u, &mut du),
            Equation::Witten => apply_l_tilde_star(gp, cfg.beta_inv, &u, &mut du, cfg.coupling),
        }
        u.par_iter_mut().zip(&du).for_each(|(a, b)| *a += dt * b);
        if s % 64 == 63 || s + 1 == steps {
            if u.iter().any(|v| !v.is_finite()) {
                return Err(PdeError::Diverged {
                    time: (s + 1) as f64 * dt,
                    bound,
                });
            }
            if eq == Equation::FokkerPlanck {
                min_value = min_value.min(u.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
    }
    snapshots.push(Snapshot {
        time: steps as f64 * dt,
        field: GridField {
            values: u,
            ..init.clone()
        },
    });
    Ok(PdeRun {
        snapshots,
        steps,
        dt,
        min_value,
    })
}

pub fn solve_fp(gp: &GridPotential, rho0: &GridField, cfg: &PdeConfig) -> Result<PdeRun, PdeError> {
    solve(Equation::FokkerPlanck, gp, rho0, cfg)
}

pub fn solve_witten(
    gp: &GridPotential,
    phi0: &GridField,
    cfg: &PdeConfig,
) -> Result<PdeRun, PdeError> {
    solve(Equation::Witten, gp, phi0, cfg)
}

/// `exp(-|x - c|^2 / sigma0)` copied into every component.
pub fn gaussian_bump(grid: Grid2D, components: usize, center: [f64; 2], sigma0: f64) -> GridField {
    GridField::from_fn(grid, components, |p| {
        let v = (-((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / sigma0).exp();
        vec![v; components]
    })
}

/// CSV rows `x, y, value_0[, value_1]`.
pub fn field_csv(f: &GridField) -> String {
    use std::fmt::Write;
    let g = f.grid;
    let n = g.len();
    let mut s = String::from("x,y");
    for c in 0..f.components {
        let _ = write!(s, ",value_{c}");
    }
    s.push('\n');
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = g.node(i, j);
            let k = g.index(i, j);
            let _ = write!(s, "{:.9e},{:.9e}", p[0], p[1]);
            for c in 0..f.components {
                let _ = write!(s, ",{:.9e}", f.values[c * n + k]);
            }
            s.push('\n');
        }
    }
    s
}

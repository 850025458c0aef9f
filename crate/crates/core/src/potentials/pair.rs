//! Pairwise-additive potentials of 2D atoms: the Morse vacancy lattice and
//! the 7-atom Lennard-Jones cluster.

use serde::{Deserialize, Serialize};

use super::Potential;
use crate::error::PotentialError;

/// Radial pair function returning `(phi, phi', phi'')`.
pub(crate) trait PairKernel: Send + Sync {
    fn eval(&self, r: f64) -> (f64, f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseParams {
    /// Well depth.
    pub depth: f64,
    /// Inverse width.
    pub alpha: f64,
    /// Equilibrium distance.
    pub r0: f64,
}

impl Default for MorseParams {
    fn default() -> Self {
        Self {
            depth: 1.0,
            alpha: 4.4,
            r0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Morse {
    p: MorseParams,
    /// Shifted-force truncation: (rc, phi(rc), phi'(rc)).
    shift: Option<(f64, f64, f64)>,
}

impl Morse {
    fn raw(p: &MorseParams, r: f64) -> (f64, f64, f64) {
        let e1 = (-p.alpha * (r - p.r0)).exp();
        let e2 = e1 * e1;
        let v = p.depth * (e2 - 2.0 * e1);
        let d1 = 2.0 * p.alpha * p.depth * (e1 - e2);
        let d2 = 2.0 * p.alpha * p.alpha * p.depth * (2.0 * e2 - e1);
        (v, d1, d2)
    }

    fn new(p: MorseParams, cutoff: Option<f64>) -> Self {
        let shift = cutoff.map(|rc| {
            let (v, d1, _) = Self::raw(&p, rc);
            (rc, v, d1)
        });
        Self { p, shift }
    }
}

impl PairKernel for Morse {
    #[inline]
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        let (v, d1, d2) = Self::raw(&self.p, r);
        match self.shift {
            None => (v, d1, d2),
            Some((rc, vc, dc)) => {
                if r >= rc {
                    (0.0, 0.0, 0.0)
                } else {
                    (v - vc - (r - rc) * dc, d1 - dc, d2)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LennardJones {
    epsilon: f64,
    sigma: f64,
}

impl PairKernel for LennardJones {
    #[inline]
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        let s = self.sigma / r;
        let s2 = s * s;
        let s6 = s2 * s2 * s2;
        let s12 = s6 * s6;
        let v = 4.0 * self.epsilon * (s12 - s6);
        let d1 = 4.0 * self.epsilon * (-12.0 * s12 + 6.0 * s6) / r;
        let d2 = 4.0 * self.epsilon * (156.0 * s12 - 42.0 * s6) / (r * r);
        (v, d1, d2)
    }
}

/// Uniform grid of square cells used to enumerate pairs within a cutoff.
#[derive(Debug, Clone)]
struct CellGrid {
    origin: [f64; 2],
    size: f64,
    nx: usize,
    ny: usize,
    /// CSR offsets of fixed atoms per cell.
    fixed_start: Vec<usize>,
    fixed_idx: Vec<usize>,
}

impl CellGrid {
    fn new(points: &[[f64; 2]], fixed: &[[f64; 2]], size: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points.iter().chain(fixed) {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let nx = (((hi[0] - lo[0]) / size).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / size).floor() as usize + 1).max(1);
        let mut grid = Self {
            origin: lo,
            size,
            nx,
            ny,
            fixed_start: Vec::new(),
            fixed_idx: Vec::new(),
        };
        let cells: Vec<usize> = fixed.iter().map(|p| grid.cell_of(p)).collect();
        let (start, idx) = csr(&cells, nx * ny);
        grid.fixed_start = start;
        grid.fixed_idx = idx;
        grid
    }

    /// Clamped cell coordinates; clamping keeps neighbours within one cell.
    #[inline]
    fn coords(&self, p: &[f64; 2]) -> (usize, usize) {
        let cx = ((p[0] - self.origin[0]) / self.size).floor();
        let cy = ((p[1] - self.origin[1]) / self.size).floor();
        let cx = if cx.is_nan() {
            0.0
        } else {
            cx.clamp(0.0, (self.nx - 1) as f64)
        };
        let cy = if cy.is_nan() {
            0.0
        } else {
            cy.clamp(0.0, (self.ny - 1) as f64)
        };
        (cx as usize, cy as usize)
    }

    #[inline]
    fn cell_of(&self, p: &[f64; 2]) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn neighbours(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let cx = (cell % self.nx) as isize;
        let cy = (cell / self.nx) as isize;
        (-1..=1).flat_map(move |dy| {
            (-1..=1).filter_map(move |dx| {
                let x = cx + dx;
                let y = cy + dy;
                if x < 0 || y < 0 || x >= self.nx as isize || y >= self.ny as isize {
                    None
                } else {
                    Some(y as usize * self.nx + x as usize)
                }
            })
        })
    }
}

fn csr(cells: &[usize], n_cells: usize) -> (Vec<usize>, Vec<usize>) {
    let mut start = vec![0usize; n_cells + 1];
    for &c in cells {
        start[c + 1] += 1;
    }
    for c in 0..n_cells {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut idx = vec![0usize; cells.len()];
    for (i, &c) in cells.iter().enumerate() {
        idx[fill[c]] = i;
        fill[c] += 1;
    }
    (start, idx)
}

/// Free atoms interacting with each other and with a set of fixed atoms.
#[derive(Debug, Clone)]
struct PairSystem<K> {
    n_free: usize,
    fixed: Vec<[f64; 2]>,
    kernel: K,
    cutoff: Option<(f64, CellGrid)>,
}

#[inline]
fn atom(x: &[f64], i: usize) -> [f64; 2] {
    [x[2 * i], x[2 * i + 1]]
}

impl<K: PairKernel> PairSystem<K> {
    /// Calls `f(i, j, d, r)` for every interacting pair, with `j = None` for
    /// fixed partners and `d = x_i - x_j`.
    #[inline]
    fn for_each_pair(&self, x: &[f64], mut f: impl FnMut(usize, Option<usize>, [f64; 2], f64)) {
        match &self.cutoff {
            None => {
                for i in 0..self.n_free {
                    let xi = atom(x, i);
                    for j in (i + 1)..self.n_free {
                        let xj = atom(x, j);
                        let d = [xi[0] - xj[0], xi[1] - xj[1]];
                        f(i, Some(j), d, (d[0] * d[0] + d[1] * d[1]).sqrt());
                    }
                    for xj in &self.fixed {
                        let d = [xi[0] - xj[0], xi[1] - xj[1]];
                        f(i, None, d, (d[0] * d[0] + d[1] * d[1]).sqrt());
                    }
                }
            }
            Some((rc, grid)) => {
                let rc2 = rc * rc;
                let cells: Vec<usize> = (0..self.n_free)
                    .map(|i| grid.cell_of(&atom(x, i)))
                    .collect();
                let (start, idx) = csr(&cells, grid.nx * grid.ny);
                for i in 0..self.n_free {
                    let xi = atom(x, i);
                    for nc in grid.neighbours(cells[i]) {
                        for &j in &idx[start[nc]..start[nc + 1]] {
                            if j <= i {
                                continue;
                            }
                            let xj = atom(x, j);
                            let d = [xi[0] - xj[0], xi[1] - xj[1]];
                            let r2 = d[0] * d[0] + d[1] * d[1];
                            if r2 < rc2 {
                                f(i, Some(j), d, r2.sqrt());
                            }
                        }
                        for &j in &grid.fixed_idx[grid.fixed_start[nc]..grid.fixed_start[nc + 1]] {
                            let xj = self.fixed[j];
                            let d = [xi[0] - xj[0], xi[1] - xj[1]];
                            let r2 = d[0] * d[0] + d[1] * d[1];
                            if r2 < rc2 {
                                f(i, None, d, r2.sqrt());
                            }
                        }
                    }
                }
            }
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut e = 0.0;
        self.for_each_pair(x, |_, _, _, r| e += self.kernel.eval(r).0);
        e
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_pair(x, |i, j, d, r| {
            let (_, d1, _) = self.kernel.eval(r);
            let s = d1 / r;
            g[2 * i] += s * d[0];
            g[2 * i + 1] += s * d[1];
            if let Some(j) = j {
                g[2 * j] -= s * d[0];
                g[2 * j + 1] -= s * d[1];
            }
        });
    }

    fn gradient_and_hvp(
        &self,
        x: &[f64],
        y: &[f64],
        g: &mut [f64],
        hy: &mut [f64],
        want_grad: bool,
    ) {
        if want_grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        hy.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_pair(x, |i, j, d, r| {
            let (_, d1, d2) = self.kernel.eval(r);
            let n = [d[0] / r, d[1] / r];
            let t = d1 / r;
            if want_grad {
                g[2 * i] += d1 * n[0];
                g[2 * i + 1] += d1 * n[1];
                if let Some(j) = j {
                    g[2 * j] -= d1 * n[0];
                    g[2 * j + 1] -= d1 * n[1];
                }
            }
            let dy = match j {
                Some(j) => [y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]],
                None => [y[2 * i], y[2 * i + 1]],
            };
            // B = phi'' n n^T + (phi'/r)(I - n n^T)
            let nd = n[0] * dy[0] + n[1] * dy[1];
            let b = [
                t * dy[0] + (d2 - t) * nd * n[0],
                t * dy[1] + (d2 - t) * nd * n[1],
            ];
            hy[2 * i] += b[0];
            hy[2 * i + 1] += b[1];
            if let Some(j) = j {
                hy[2 * j] -= b[0];
                hy[2 * j + 1] -= b[1];
            }
        });
    }

    fn check_distinct(&self, x: &[f64]) -> Result<(), PotentialError> {
        let n = self.n_free;
        for i in 0..n {
            let xi = atom(x, i);
            for j in (i + 1)..n {
                let xj = atom(x, j);
                if xi == xj {
                    return Err(PotentialError::CoincidentAtoms(i, j));
                }
            }
            for (k, xj) in self.fixed.iter().enumerate() {
                if xi == *xj {
                    return Err(PotentialError::CoincidentAtoms(i, n + k));
                }
            }
        }
        Ok(())
    }
}

/// Geometry and parameters of the vacancy lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub free_atoms: usize,
    /// Ideal lattice positions of the free atoms; the relaxed minimum is
    /// found by descending from here.
    pub free_reference: Vec<[f64; 2]>,
    pub fixed_atoms: Vec<[f64; 2]>,
    /// Lattice coordinates `(a, b)` of the empty site, position
    /// `spacing * (a + b/2, b sqrt(3)/2)`.
    pub vacancy_site: [i64; 2],
    pub spacing: f64,
    pub morse_params: MorseParams,
    /// Optional shifted-force cutoff radius. With a cutoff, pairs are found
    /// through a cell list and the cost per evaluation is linear in the
    /// number of free atoms.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

impl LatticeSpec {
    /// Triangular lattice with the vacancy at the origin. The `free_atoms`
    /// sites closest to the vacancy move; every other site within
    /// `fixed_width` of the outermost free atom is fixed.
    pub fn triangular_vacancy(
        free_atoms: usize,
        fixed_width: f64,
        morse_params: MorseParams,
        cutoff: Option<f64>,
    ) -> Result<Self, PotentialError> {
        if free_atoms == 0 {
            return Err(PotentialError::InvalidLattice(
                "need at least one free atom".into(),
            ));
        }
        let spacing = morse_params.r0;
        let h = 3f64.sqrt() / 2.0;
        let reach = ((free_atoms as f64).sqrt() * 1.2 + fixed_width + 3.0).ceil() as i64 + 2;
        let mut sites = Vec::new();
        for b in -reach..=reach {
            for a in -reach - b.abs()..=reach + b.abs() {
                if a == 0 && b == 0 {
                    continue;
                }
                let p = [
                    spacing * (a as f64 + b as f64 / 2.0),
                    spacing * (b as f64 * h),
                ];
                let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                let ang = p[1].atan2(p[0]);
                sites.push((r, ang, p));
            }
        }
        // radial order; angle breaks ties inside a shell
        sites.sort_by(|u, v| {
            let dr = u.0 - v.0;
            if dr.abs() > 1e-9 {
                dr.partial_cmp(&0.0).unwrap()
            } else {
                u.1.partial_cmp(&v.1).unwrap()
            }
        });
        let free: Vec<[f64; 2]> = sites.iter().take(free_atoms).map(|s| s.2).collect();
        let r_free = sites[free_atoms - 1].0;
        let fixed: Vec<[f64; 2]> = sites
            .iter()
            .skip(free_atoms)
            .filter(|s| s.0 <= r_free + fixed_width + 1e-9)
            .map(|s| s.2)
            .collect();
        let spec = Self {
            free_atoms,
            free_reference: free,
            fixed_atoms: fixed,
            vacancy_site: [0, 0],
            spacing,
            morse_params,
            cutoff,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vacancy_position(&self) -> [f64; 2] {
        let h = 3f64.sqrt() / 2.0;
        let [a, b] = self.vacancy_site;
        [
            self.spacing * (a as f64 + b as f64 / 2.0),
            self.spacing * b as f64 * h,
        ]
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if self.free_atoms == 0 {
            return Err(PotentialError::InvalidLattice(
                "need at least one free atom".into(),
            ));
        }
        if self.free_reference.len() != self.free_atoms {
            return Err(PotentialError::InvalidLattice(format!(
                "{} reference positions for {} free atoms",
                self.free_reference.len(),
                self.free_atoms
            )));
        }
        if !(self.spacing > 0.0)
            || !(self.morse_params.r0 > 0.0)
            || !(self.morse_params.alpha > 0.0)
        {
            return Err(PotentialError::InvalidLattice(
                "spacing and Morse parameters must be positive".into(),
            ));
        }
        if let Some(rc) = self.cutoff {
            if !(rc > 0.0) {
                return Err(PotentialError::InvalidLattice(
                    "cutoff must be positive".into(),
                ));
            }
        }
        let all: Vec<[f64; 2]> = self
            .free_reference
            .iter()
            .chain(&self.fixed_atoms)
            .copied()
            .collect();
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                let d = [all[i][0] - all[j][0], all[i][1] - all[j][1]];
                if d[0] * d[0] + d[1] * d[1] < 1e-24 {
                    return Err(PotentialError::CoincidentAtoms(i, j));
                }
            }
        }
        Ok(())
    }

    /// Flattened reference coordinates of the free atoms.
    pub fn reference_coordinates(&self) -> Vec<f64> {
        self.free_reference
            .iter()
            .flat_map(|p| [p[0], p[1]])
            .collect()
    }
}

/// Morse pair potential over free-free and free-fixed pairs of a lattice.
#[derive(Debug, Clone)]
pub struct MorseVacancy {
    spec: LatticeSpec,
    system: PairSystem<Morse>,
}

impl MorseVacancy {
    pub fn new(spec: LatticeSpec) -> Result<Self, PotentialError> {
        spec.validate()?;
        let kernel = Morse::new(spec.morse_params, spec.cutoff);
        let cutoff = spec.cutoff.map(|rc| {
            (
                rc,
                CellGrid::new(&spec.free_reference, &spec.fixed_atoms, rc),
            )
        });
        let system = PairSystem {
            n_free: spec.free_atoms,
            fixed: spec.fixed_atoms.clone(),
            kernel,
            cutoff,
        };
        Ok(Self { spec, system })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
}

impl Potential for MorseVacancy {
    fn name(&self) -> &str {
        "morse-vacancy"
    }

    fn dim(&self) -> usize {
        2 * self.spec.free_atoms
    }

    fn interchangeable_atoms(&self) -> bool {
        true
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.system.value(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.system.gradient(x, grad)
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.system.gradient_and_hvp(x, y, &mut [], out, false)
    }

    fn gradient_and_hvp(&self, x: &[f64], y: &[f64], grad: &mut [f64], hy: &mut [f64]) {
        self.system.gradient_and_hvp(x, y, grad, hy, true)
    }

    fn validate(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.dim() {
            return Err(PotentialError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.system.check_distinct(x)
    }
}

/// Seven Lennard-Jones atoms in the plane, sigma = epsilon = 1 by default.
#[derive(Debug, Clone)]
pub struct Lj7 {
    system: PairSystem<LennardJones>,
}

impl Default for Lj7 {
    fn default() -> Self {
        Self::new(1.0, 1.0)
    }
}

impl Lj7 {
    pub const ATOMS: usize = 7;

    pub fn new(epsilon: f64, sigma: f64) -> Self {
        Self {
            system: PairSystem {
                n_free: Self::ATOMS,
                fixed: Vec::new(),
                kernel: LennardJones { epsilon, sigma },
                cutoff: None,
            },
        }
    }

    /// Hexagon around a central atom with nearest-neighbour distance `a`.
    pub fn hexagon(a: f64) -> Vec<f64> {
        let mut x = vec![0.0, 0.0];
        for k in 0..6 {
            let t = k as f64 * std::f64::consts::PI / 3.0;
            x.push(a * t.cos());
            x.push(a * t.sin());
        }
        x
    }
}

impl Potential for Lj7 {
    fn name(&self) -> &str {
        "lj7"
    }

    fn dim(&self) -> usize {
        2 * Self::ATOMS
    }

    fn interchangeable_atoms(&self) -> bool {
        true
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.system.value(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.system.gradient(x, grad)
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.system.gradient_and_hvp(x, y, &mut [], out, false)
    }

    fn gradient_and_hvp(&self, x: &[f64], y: &[f64], grad: &mut [f64], hy: &mut [f64]) {
        self.system.gradient_and_hvp(x, y, grad, hy, true)
    }

    fn zero_mode_basis(&self) -> Vec<Vec<f64>> {
        let n = Self::ATOMS;
        let s = 1.0 / (n as f64).sqrt();
        (0..2)
            .map(|k| {
                let mut v = vec![0.0; 2 * n];
                for i in 0..n {
                    v[2 * i + k] = s;
                }
                v
            })
            .collect()
    }

    fn gauge_modes(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = Self::ATOMS;
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            cx += x[2 * i];
            cy += x[2 * i + 1];
        }
        cx /= n as f64;
        cy /= n as f64;
        let mut v = vec![0.0; 2 * n];
        for i in 0..n {
            v[2 * i] = -(x[2 * i + 1] - cy);
            v[2 * i + 1] = x[2 * i] - cx;
        }
        let nrm = super::norm(&v);
        if nrm > 0.0 && nrm.is_finite() {
            v.iter_mut().for_each(|a| *a /= nrm);
            vec![v]
        } else {
            Vec::new()
        }
    }

    fn validate(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.dim() {
            return Err(PotentialError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.system.check_distinct(x)
    }
}

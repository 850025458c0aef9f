//! Two-dimensional analytic test surfaces.

use super::Potential;

fn apply_sym2(h: [f64; 3], y: &[f64], out: &mut [f64]) {
    out[0] = h[0] * y[0] + h[1] * y[1];
    out[1] = h[1] * y[0] + h[2] * y[1];
}

/// Flat double well `E(C x1^4 - x1^2) + mu x2^2`.
///
/// Minima sit at `x1 = ±(2C)^{-1/2}`, the saddle at the origin.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWellFlat {
    pub e: f64,
    pub c: f64,
    pub mu: f64,
}

impl Default for DoubleWellFlat {
    fn default() -> Self {
        Self {
            e: 2e-4,
            c: 0.045,
            mu: 1e-3,
        }
    }
}

impl DoubleWellFlat {
    pub fn minimum_x1(&self) -> f64 {
        (2.0 * self.c).powf(-0.5)
    }

    /// Packed Hessian `[h11, h12, h22]`.
    pub fn hessian2(&self, x: &[f64]) -> [f64; 3] {
        [
            self.e * (12.0 * self.c * x[0] * x[0] - 2.0),
            0.0,
            2.0 * self.mu,
        ]
    }
}

impl Potential for DoubleWellFlat {
    fn name(&self) -> &str {
        "double-well-flat"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let x1 = x[0];
        self.e * (self.c * x1.powi(4) - x1 * x1) + self.mu * x[1] * x[1]
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = self.e * (4.0 * self.c * x[0].powi(3) - 2.0 * x[0]);
        grad[1] = 2.0 * self.mu * x[1];
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        apply_sym2(self.hessian2(x), y, out);
    }
}

/// Quartic double well `(1 - x^2)^2 + 2 y^2` with minima at `(±1, 0)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWellQuartic;

impl Potential for DoubleWellQuartic {
    fn name(&self) -> &str {
        "double-well-quartic"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = 1.0 - x[0] * x[0];
        a * a + 2.0 * x[1] * x[1]
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
        grad[1] = 4.0 * x[1];
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = (12.0 * x[0] * x[0] - 4.0) * y[0];
        out[1] = 4.0 * y[1];
    }
}

/// Mueller-Brown surface, a sum of four anisotropic Gaussians.
#[derive(Debug, Clone)]
pub struct MuellerBrown {
    pub a_amp: [f64; 4],
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 4],
    pub x0: [f64; 4],
    pub y0: [f64; 4],
}

impl Default for MuellerBrown {
    fn default() -> Self {
        Self {
            a_amp: [-200.0, -100.0, -170.0, 15.0],
            a: [-1.0, -1.0, -6.5, 0.7],
            b: [0.0, 0.0, 11.0, 0.6],
            c: [-10.0, -10.0, -6.5, 0.7],
            x0: [1.0, 0.0, -0.5, -1.0],
            y0: [0.0, 0.5, 1.5, 1.0],
        }
    }
}

impl MuellerBrown {
    /// Value, gradient and packed Hessian in one pass.
    pub fn eval_all(&self, x: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for k in 0..4 {
            let dx = x[0] - self.x0[k];
            let dy = x[1] - self.y0[k];
            let (a, b, c) = (self.a[k], self.b[k], self.c[k]);
            let e = self.a_amp[k] * (a * dx * dx + b * dx * dy + c * dy * dy).exp();
            let gx = 2.0 * a * dx + b * dy;
            let gy = b * dx + 2.0 * c * dy;
            v += e;
            g[0] += e * gx;
            g[1] += e * gy;
            h[0] += e * (gx * gx + 2.0 * a);
            h[1] += e * (gx * gy + b);
            h[2] += e * (gy * gy + 2.0 * c);
        }
        (v, g, h)
    }
}

impl Potential for MuellerBrown {
    fn name(&self) -> &str {
        "mueller-brown"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_all(x).0
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let (_, g, _) = self.eval_all(x);
        grad.copy_from_slice(&g);
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        apply_sym2(self.eval_all(x).2, y, out);
    }

    fn gradient_and_hvp(&self, x: &[f64], y: &[f64], grad: &mut [f64], hy: &mut [f64]) {
        let (_, g, h) = self.eval_all(x);
        grad.copy_from_slice(&g);
        apply_sym2(h, y, hy);
    }
}

/// `V1/Z - V2` where `V1 = (x^2+y^2)^2 + x^2 - y^2 - x + y` carries an
/// index-1 region without a saddle and `V2` is a Gaussian well at (5, 5).
#[derive(Debug, Clone, Copy)]
pub struct Challenge2d {
    pub z: f64,
    pub center: [f64; 2],
}

impl Default for Challenge2d {
    fn default() -> Self {
        Self {
            z: 4e3,
            center: [5.0, 5.0],
        }
    }
}

impl Challenge2d {
    pub fn eval_all(&self, x: &[f64]) -> (f64, [f64; 2], [f64; 3]) {
        let (px, py) = (x[0], x[1]);
        let r2 = px * px + py * py;
        let v1 = r2 * r2 + px * px - py * py - px + py;
        let g1 = [
            4.0 * px * r2 + 2.0 * px - 1.0,
            4.0 * py * r2 - 2.0 * py + 1.0,
        ];
        let h1 = [
            12.0 * px * px + 4.0 * py * py + 2.0,
            8.0 * px * py,
            4.0 * px * px + 12.0 * py * py - 2.0,
        ];

        let dx = px - self.center[0];
        let dy = py - self.center[1];
        let v2 = (-(dx * dx + dy * dy)).exp();
        let g2 = [-2.0 * dx * v2, -2.0 * dy * v2];
        let h2 = [
            v2 * (4.0 * dx * dx - 2.0),
            v2 * 4.0 * dx * dy,
            v2 * (4.0 * dy * dy - 2.0),
        ];
        let z = self.z;
        (
            v1 / z - v2,
            [g1[0] / z - g2[0], g1[1] / z - g2[1]],
            [h1[0] / z - h2[0], h1[1] / z - h2[1], h1[2] / z - h2[2]],
        )
    }
}

impl Potential for Challenge2d {
    fn name(&self) -> &str {
        "challenge-2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_all(x).0
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&self.eval_all(x).1);
    }

    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        apply_sym2(self.eval_all(x).2, y, out);
    }

    fn gradient_and_hvp(&self, x: &[f64], y: &[f64], grad: &mut [f64], hy: &mut [f64]) {
        let (_, g, h) = self.eval_all(x);
        grad.copy_from_slice(&g);
        apply_sym2(h, y, hy);
    }
}

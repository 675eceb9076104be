//! Deep-cut ellipsoid method over a small box of nonnegative multipliers.
//!
//! The ellipsoid is `{x : (x - c)^T P^{-1} (x - c) <= 1}`. A cut `(g, h)` keeps
//! the half-space `g^T (x - c) + h <= 0`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Ellipsoid {
    pub c: DVector<f64>,
    p: DMatrix<f64>,
}

/// Outcome of a single cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cut {
    Applied,
    /// The kept half-space misses the ellipsoid.
    Empty,
}

impl Ellipsoid {
    /// Axis-aligned ellipsoid circumscribing the box `[lo, hi]`.
    pub fn around_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let root_n = (n as f64).sqrt();
        let c = DVector::from_iterator(n, lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)));
        let p = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            lo.iter().zip(hi).map(|(a, b)| {
                let r = 0.5 * (b - a) * root_n;
                r * r
            }),
        ));
        Ellipsoid { c, p }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `sqrt(g^T P g)`: the spread of the linear functional `g` over the ellipsoid.
    pub fn width(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.p * g)).max(0.0).sqrt()
    }

    pub fn cut(&mut self, g: &DVector<f64>, depth: f64) -> Cut {
        let pg = &self.p * g;
        let gpg = g.dot(&pg);
        if !(gpg > 0.0) || !gpg.is_finite() {
            return Cut::Empty;
        }
        let w = gpg.sqrt();
        let alpha = (depth / w).max(-1.0 / self.dim() as f64);
        if alpha >= 1.0 {
            return Cut::Empty;
        }
        let b = pg / w;
        let n = self.dim() as f64;
        if self.dim() == 1 {
            self.c -= &b * (0.5 * (1.0 + alpha));
            self.p *= 0.25 * (1.0 - alpha) * (1.0 - alpha);
            return Cut::Applied;
        }
        let tau = (1.0 + n * alpha) / (n + 1.0);
        let sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha));
        let delta = n * n * (1.0 - alpha * alpha) / (n * n - 1.0);
        self.c -= &b * tau;
        self.p = (&self.p - (&b * b.transpose()) * sigma) * delta;
        self.p = (&self.p + self.p.transpose()) * 0.5;
        Cut::Applied
    }

    /// Cut away the first coordinate outside `[lo, hi]`, if any.
    pub fn box_cut(&mut self, lo: &[f64], hi: &[f64]) -> Option<Cut> {
        let n = self.dim();
        for i in 0..n {
            let mut g = DVector::zeros(n);
            if self.c[i] < lo[i] {
                g[i] = -1.0;
                return Some(self.cut(&g, lo[i] - self.c[i]));
            }
            if self.c[i] > hi[i] {
                g[i] = 1.0;
                return Some(self.cut(&g, self.c[i] - hi[i]));
            }
        }
        None
    }
}

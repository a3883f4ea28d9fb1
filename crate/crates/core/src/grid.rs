//! Finite-difference operators on 2-D pixel grids.
//!
//! The gradient uses forward differences with a zero last column (horizontal
//! component) and zero last row (vertical component). [`divergence`] is its
//! exact negative adjoint, so `<grad u, z> = -<u, div z>` holds for every
//! pair of grids.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Real-valued m×n pixel grid.
pub type Image = Array2<f64>;

/// Per-pixel 2-vector field: `h` holds horizontal differences, `v` vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub h: Image,
    pub v: Image,
}

impl GradientField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            h: Image::zeros((rows, cols)),
            v: Image::zeros((rows, cols)),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.h.dim()
    }

    /// `self - other`, componentwise.
    pub fn sub(&self, other: &GradientField) -> GradientField {
        GradientField {
            h: &self.h - &other.h,
            v: &self.v - &other.v,
        }
    }

    /// Euclidean inner product over both components.
    pub fn dot(&self, other: &GradientField) -> f64 {
        dot(&self.h, &other.h) + dot(&self.v, &other.v)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.h) && all_finite(&self.v)
    }
}

/// A parameter that is either one scalar or a per-pixel field.
#[derive(Debug, Clone, PartialEq)]
pub enum PixelParam {
    Uniform(f64),
    Field(Image),
}

impl PixelParam {
    /// Elementwise `op(x, p)` against an image of matching shape.
    pub fn combine(&self, x: &Image, op: impl Fn(f64, f64) -> f64) -> Image {
        match self {
            PixelParam::Uniform(p) => x.mapv(|x| op(x, *p)),
            PixelParam::Field(p) => Zip::from(x).and(p).map_collect(|&x, &p| op(x, p)),
        }
    }

    /// Apply `op` to the scalar or to every pixel.
    pub fn map(&self, op: impl Fn(f64) -> f64) -> PixelParam {
        match self {
            PixelParam::Uniform(p) => PixelParam::Uniform(op(*p)),
            PixelParam::Field(p) => PixelParam::Field(p.mapv(op)),
        }
    }

    /// (min, mean, max); all three coincide for a scalar.
    pub fn summary(&self) -> (f64, f64, f64) {
        match self {
            PixelParam::Uniform(p) => (*p, *p, *p),
            PixelParam::Field(p) => {
                let lo = p.iter().fold(f64::INFINITY, |a, &x| a.min(x));
                let hi = p.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
                (lo, mean(p), hi)
            }
        }
    }

    /// Representative value: the scalar, or the field mean.
    pub fn representative(&self) -> f64 {
        self.summary().1
    }

    pub fn is_positive(&self) -> bool {
        match self {
            PixelParam::Uniform(p) => *p > 0.0,
            PixelParam::Field(p) => p.iter().all(|&x| x > 0.0),
        }
    }
}

/// Sum of elementwise products.
pub fn dot(a: &Image, b: &Image) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Euclidean (Frobenius) norm.
pub fn norm(a: &Image) -> f64 {
    dot(a, a).sqrt()
}

/// Arithmetic mean of all pixels.
///
/// Every global average in the crate goes through this function so that
/// the global and whole-window local code paths reduce in the same order.
pub fn mean(a: &Image) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

pub fn all_finite(a: &Image) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn gradient(u: &Image) -> GradientField {
    let (m, n) = u.dim();
    let mut h = Image::zeros((m, n));
    let mut v = Image::zeros((m, n));
    for i in 0..m {
        for j in 0..n.saturating_sub(1) {
            h[[i, j]] = u[[i, j + 1]] - u[[i, j]];
        }
    }
    for i in 0..m.saturating_sub(1) {
        for j in 0..n {
            v[[i, j]] = u[[i + 1, j]] - u[[i, j]];
        }
    }
    GradientField { h, v }
}

/// Negative adjoint of [`gradient`].
pub fn divergence(z: &GradientField) -> Image {
    let (m, n) = z.dim();
    let mut d = Image::zeros((m, n));
    if n > 1 {
        for i in 0..m {
            d[[i, 0]] += z.h[[i, 0]];
            for j in 1..n - 1 {
                d[[i, j]] += z.h[[i, j]] - z.h[[i, j - 1]];
            }
            d[[i, n - 1]] -= z.h[[i, n - 2]];
        }
    }
    if m > 1 {
        for j in 0..n {
            d[[0, j]] += z.v[[0, j]];
        }
        for i in 1..m - 1 {
            for j in 0..n {
                d[[i, j]] += z.v[[i, j]] - z.v[[i - 1, j]];
            }
        }
        for j in 0..n {
            d[[m - 1, j]] -= z.v[[m - 2, j]];
        }
    }
    d
}

/// Isotropic total variation: sum of per-pixel gradient magnitudes.
pub fn tv_norm(u: &Image) -> f64 {
    let g = gradient(u);
    Zip::from(&g.h)
        .and(&g.v)
        .fold(0.0, |acc, &h, &v| acc + h.hypot(v))
}

/// Vector soft-threshold: `max(|v| - c, 0) v / |v|`, zero at the origin.
pub fn shrink(v: [f64; 2], c: f64) -> [f64; 2] {
    let mag = v[0].hypot(v[1]);
    if mag == 0.0 {
        return [0.0, 0.0];
    }
    let s = (mag - c).max(0.0) / mag;
    [v[0] * s, v[1] * s]
}

/// [`shrink`] applied at every pixel of a field.
pub fn shrink_field(w: &GradientField, c: f64) -> GradientField {
    let mut out = GradientField::zeros(w.dim().0, w.dim().1);
    Zip::from(&mut out.h)
        .and(&mut out.v)
        .and(&w.h)
        .and(&w.v)
        .for_each(|oh, ov, &h, &v| {
            let [a, b] = shrink([h, v], c);
            *oh = a;
            *ov = b;
        });
    out
}

/// Averaging window used by the local discrepancy machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// r×r box, r odd, symmetric padding at the borders.
    Box(usize),
    /// The whole image: every output pixel is the global mean.
    Whole,
}

impl Window {
    pub fn apply(self, x: &Image) -> Result<Image> {
        match self {
            Window::Box(r) => box_mean_filter(x, r),
            Window::Whole => Ok(Image::from_elem(x.dim(), mean(x))),
        }
    }
}

/// Mirror an out-of-range index back into `0..n` (edge sample repeated).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Mean over the r×r window centred at each pixel with symmetric padding.
pub fn box_mean_filter(x: &Image, r: usize) -> Result<Image> {
    let (m, n) = x.dim();
    if r.is_multiple_of(2) {
        return Err(Error::EvenWindow(r));
    }
    if r > m.min(n) {
        return Err(Error::WindowTooLarge { r, rows: m, cols: n });
    }
    let half = (r / 2) as isize;

    // Horizontal pass: running window sums along each row.
    let mut rows = Image::zeros((m, n));
    for i in 0..m {
        let mut s: f64 = (-half..=half).map(|d| x[[i, reflect(d, n)]]).sum();
        rows[[i, 0]] = s;
        for j in 1..n {
            let j = j as isize;
            s += x[[i, reflect(j + half, n)]] - x[[i, reflect(j - half - 1, n)]];
            rows[[i, j as usize]] = s;
        }
    }
    // Vertical pass on the row sums.
    let mut out = Image::zeros((m, n));
    let scale = 1.0 / (r * r) as f64;
    for j in 0..n {
        let mut s: f64 = (-half..=half).map(|d| rows[[reflect(d, m), j]]).sum();
        out[[0, j]] = s * scale;
        for i in 1..m {
            let i = i as isize;
            s += rows[[reflect(i + half, m), j]] - rows[[reflect(i - half - 1, m), j]];
            out[[i as usize, j]] = s * scale;
        }
    }
    // Rounding in the running sums can leave a mean an ulp outside the data
    // range; a window mean never lies outside it.
    let lo = x.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let hi = x.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    out.mapv_inplace(|v| v.clamp(lo, hi));
    Ok(out)
}

/// Largest eigenvalue of `u -> -div(grad u)` on an m×n grid by power iteration.
pub fn laplacian_norm_estimate(rows: usize, cols: usize, iterations: usize) -> f64 {
    // Checkerboard start: it has a large component along the top eigenvector.
    let mut u = Image::from_shape_fn((rows, cols), |(i, j)| {
        if (i + j) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    });
    u[[0, 0]] += 0.5;
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = divergence(&gradient(&u)).mapv(|x| -x);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        lambda = dot(&u, &w) / dot(&u, &u);
        u = w / nw;
    }
    lambda
}

//! Gamma speckle synthesis, the expected value of `eta - log eta`, and PSNR.
//!
//! Noise fields are drawn from a ChaCha8 stream seeded with
//! `seed_from_u64(seed)` and transformed by the Marsaglia–Tsang sampler in
//! `rand_distr::Gamma`. Pixels are filled in row-major order, so a given
//! (shape, seed, size) always produces the same field.

use ndarray::Zip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::digamma;

use crate::error::{check_same_shape, Error, Result};
use crate::grid::Image;

/// Value given to noisy pixels whose clean value is exactly zero.
pub const DEFAULT_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaNoiseSpec {
    /// Shape `M`; the noise has mean 1 and standard deviation `1/sqrt(M)`.
    pub shape: f64,
    pub seed: u64,
}

impl GammaNoiseSpec {
    pub fn new(shape: f64, seed: u64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidNoiseLevel(shape));
        }
        Ok(Self { shape, seed })
    }

    fn distribution(&self) -> Result<Gamma<f64>> {
        Gamma::new(self.shape, 1.0 / self.shape).map_err(|_| Error::InvalidNoiseLevel(self.shape))
    }
}

/// I.i.d. Gamma(M, 1/M) draws on an m×n grid.
pub fn sample_gamma_field(spec: GammaNoiseSpec, rows: usize, cols: usize) -> Result<Image> {
    let dist = spec.distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Image::zeros((rows, cols));
    for x in out.iter_mut() {
        *x = dist.sample(&mut rng);
    }
    Ok(out)
}

/// `f = u * eta`, with pixels of a zero clean value set to [`DEFAULT_FLOOR`].
pub fn apply_multiplicative_noise(u: &Image, spec: GammaNoiseSpec) -> Result<Image> {
    apply_multiplicative_noise_with_floor(u, spec, DEFAULT_FLOOR)
}

pub fn apply_multiplicative_noise_with_floor(
    u: &Image,
    spec: GammaNoiseSpec,
    floor: f64,
) -> Result<Image> {
    if let Some(((i, j), &value)) = u.indexed_iter().find(|(_, &x)| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::NegativeIntensity { value, index: (i, j) });
    }
    let (m, n) = u.dim();
    let eta = sample_gamma_field(spec, m, n)?;
    let mut f = u * &eta;
    Zip::from(&mut f).and(u).for_each(|fv, &uv| {
        if uv == 0.0 {
            *fv = floor;
        }
    });
    Ok(f)
}

/// Where the discrepancy constant `C` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CbarMode {
    /// `1 + 1/(2M) + 1/(12M^2) - 5/(2M^3)`, the default above M = 5.
    HighMSeries,
    /// `1 + 1/(2M) + 1/(12M^2) - 1/(2M^3)`, the variant used for small M.
    LowMSeries,
    /// `1 - digamma(M) + log M`, the exact mean of `eta - log eta`.
    DigammaExact,
    /// A fixed user-supplied constant.
    Custom(f64),
}

/// Target constant for the discrepancy equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyTarget {
    pub c_bar: f64,
    pub mode: CbarMode,
}

impl DiscrepancyTarget {
    pub fn new(mode: CbarMode, shape: f64) -> Self {
        let c_bar = match mode {
            CbarMode::HighMSeries => series_discrepancy(shape, 5.0),
            CbarMode::LowMSeries => series_discrepancy(shape, 1.0),
            CbarMode::DigammaExact => exact_discrepancy(shape),
            CbarMode::Custom(c) => c,
        };
        Self { c_bar, mode }
    }

    /// Low-M series for `M <= 5`, the longer series above.
    pub fn auto(shape: f64) -> Self {
        let mode = if shape <= 5.0 {
            CbarMode::LowMSeries
        } else {
            CbarMode::HighMSeries
        };
        Self::new(mode, shape)
    }
}

fn series_discrepancy(m: f64, cubic_numerator: f64) -> f64 {
    1.0 + 1.0 / (2.0 * m) + 1.0 / (12.0 * m * m) - cubic_numerator / (2.0 * m * m * m)
}

/// Series value with the `-5/(2M^3)` cubic term.
pub fn expected_discrepancy(shape: f64) -> f64 {
    series_discrepancy(shape, 5.0)
}

/// Series value with the `-1/(2M^3)` cubic term.
pub fn expected_discrepancy_low_m(shape: f64) -> f64 {
    series_discrepancy(shape, 1.0)
}

/// `E[eta - log eta] = 1 - digamma(M) + log M` for `eta ~ Gamma(M, 1/M)`.
pub fn exact_discrepancy(shape: f64) -> f64 {
    1.0 - digamma(shape) + shape.ln()
}

/// Monte-Carlo mean of `eta - log eta`.
pub fn empirical_discrepancy_mean(shape: f64, samples: usize, seed: u64) -> Result<f64> {
    let dist = GammaNoiseSpec::new(shape, seed)?.distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let eta: f64 = dist.sample(&mut rng);
        acc += eta - eta.ln();
    }
    Ok(acc / samples.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Decibels(f64),
    /// The two images are equal; the ratio is unbounded.
    Identical,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Decibels(v) => Some(v),
            Psnr::Identical => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Decibels(v) => write!(f, "{v:.2}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

/// Peak signal-to-noise ratio on the 0..255 scale.
pub fn psnr(u: &Image, reference: &Image) -> Result<Psnr> {
    check_same_shape(u.dim(), reference.dim())?;
    let sq: f64 = Zip::from(u)
        .and(reference)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    if sq == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Decibels(
        10.0 * (255.0 * 255.0 * u.len() as f64 / sq).log10(),
    ))
}

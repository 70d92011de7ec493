//! Seeded samplers for the Monte Carlo estimators.
//!
//! Every random draw in the crate goes through an [`RngStream`], a
//! `(seed, stream_id)` pair that maps onto an independent ChaCha8 stream.
//! Per-point streams are derived with [`RngStream::substream`] so results do
//! not depend on how a batch is partitioned.

use ndarray::{Array2, ArrayViewMut1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("shape parameter must be positive, got {0}")]
    NonPositiveShape(f64),
    #[error("rate parameter must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("dimension {d} unsupported (supported: {min}..={max})")]
    DimensionUnsupported { d: usize, min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream keyed by `tag`; children of distinct tags never collide
    /// with each other or with the parent in practice.
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

fn beta_one_draw<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let x = uniform_open(rng).powf(1.0 / a);
    if x >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else if x <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        x
    }
}

/// Beta(a, 1) by inverse CDF: `U^{1/a}`.
pub fn sample_beta_one<R: Rng + ?Sized>(a: f64, count: usize, rng: &mut R) -> Result<Vec<f64>, SamplingError> {
    if !(a > 0.0) {
        return Err(SamplingError::NonPositiveShape(a));
    }
    Ok((0..count).map(|_| beta_one_draw(a, rng)).collect())
}

/// Single Gamma(shape, 1) draw: Marsaglia-Tsang, boosted for `shape < 1`.
fn gamma_unit<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let x = gamma_unit(shape + 1.0, rng);
        return x * uniform_open(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = uniform_open(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Gamma(shape, rate) draws, mean `shape / rate`.
pub fn sample_gamma<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SamplingError> {
    if !(shape > 0.0) {
        return Err(SamplingError::NonPositiveShape(shape));
    }
    if !(rate > 0.0) {
        return Err(SamplingError::NonPositiveRate(rate));
    }
    Ok((0..count).map(|_| gamma_unit(shape, rng) / rate).collect())
}

fn fill_unit_direction<R: Rng + ?Sized>(mut row: ArrayViewMut1<f64>, rng: &mut R) {
    if row.len() == 1 {
        row[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut norm2 = 0.0;
        for v in row.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm2 += g * g;
        }
        if norm2 > 1e-300 {
            let inv = 1.0 / norm2.sqrt();
            row.mapv_inplace(|v| v * inv);
            return;
        }
    }
}

/// Uniform directions on `S^{d-1}`, one per row.
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((count, d));
    for row in out.rows_mut() {
        fill_unit_direction(row, rng);
    }
    out
}

/// Uniform points in the open unit ball, `‖x‖ < 1 - 1e-12`.
pub fn sample_ball<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((count, d));
    for mut row in out.rows_mut() {
        fill_unit_direction(row.view_mut(), rng);
        let radius = loop {
            let s = uniform_open(rng).powf(1.0 / d as f64);
            if s < 1.0 - 1e-12 {
                break s;
            }
        };
        row.mapv_inplace(|v| v * radius);
    }
    out
}

/// Low-discrepancy directions: Sobol points pushed through the normal
/// inverse CDF and normalised. The all-zero first Sobol point is never used;
/// `skip` counts further points discarded after it. Points that map to the
/// zero vector are passed over.
pub struct SobolSphere {
    d: usize,
    seq: Sobol<f64>,
    normal: Normal,
}

impl SobolSphere {
    pub fn max_dims() -> usize {
        JoeKuoD6::minimal().max_dims
    }

    pub fn new(d: usize, skip: usize) -> Result<Self, SamplingError> {
        let params = JoeKuoD6::minimal();
        if d < 2 || d > params.max_dims {
            return Err(SamplingError::DimensionUnsupported {
                d,
                min: 2,
                max: params.max_dims,
            });
        }
        let mut seq = Sobol::<f64>::new(d, &params);
        for _ in 0..=skip {
            seq.next();
        }
        Ok(Self {
            d,
            seq,
            normal: Normal::standard(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn next_block(&mut self, count: usize) -> Array2<f64> {
        let mut out = Array2::zeros((count, self.d));
        for mut row in out.rows_mut() {
            // the centre point (1/2, ..., 1/2) maps to the zero vector
            loop {
                let p = self.seq.next().expect("Sobol sequence exhausted");
                let mut norm2 = 0.0;
                for (dst, &u) in row.iter_mut().zip(&p) {
                    let g = self.normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
                    *dst = g;
                    norm2 += g * g;
                }
                if norm2 > 1e-24 {
                    let inv = 1.0 / norm2.sqrt();
                    row.mapv_inplace(|v| v * inv);
                    break;
                }
            }
        }
        out
    }
}

pub fn sobol_sphere(d: usize, count: usize, skip: usize) -> Result<Array2<f64>, SamplingError> {
    Ok(SobolSphere::new(d, skip)?.next_block(count))
}

/// Source of sphere directions for the spatial estimators.
#[allow(clippy::large_enum_variant)]
pub enum SphereSampler {
    Random(StreamRng),
    Sobol(SobolSphere),
}

impl SphereSampler {
    pub fn draw(&mut self, d: usize, count: usize) -> Array2<f64> {
        match self {
            SphereSampler::Random(rng) => sample_sphere(d, count, rng),
            SphereSampler::Sobol(s) => {
                debug_assert_eq!(s.dim(), d);
                s.next_block(count)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn beta_one_means() {
        let mut rng = RngStream::new(1).rng();
        let s = sample_beta_one(1.0, 100_000, &mut rng).unwrap();
        assert!((mean(&s) - 0.5).abs() < 0.01);
        let s = sample_beta_one(0.5, 100_000, &mut rng).unwrap();
        assert!((mean(&s) - 1.0 / 3.0).abs() < 0.01);
        assert!(s.iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(sample_beta_one(0.0, 3, &mut rng), Err(SamplingError::NonPositiveShape(0.0)));
    }

    #[test]
    fn beta_one_deterministic() {
        let a = sample_beta_one(0.5, 3, &mut RngStream::with_stream(7, 0).rng()).unwrap();
        let b = sample_beta_one(0.5, 3, &mut RngStream::with_stream(7, 0).rng()).unwrap();
        assert_eq!(a, b);
        let c = sample_beta_one(0.5, 3, &mut RngStream::with_stream(7, 1).rng()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RngStream::new(2).rng();
        let s = sample_gamma(1.0, 1.0, 100_000, &mut rng).unwrap();
        assert!((mean(&s) - 1.0).abs() < 0.01);
        let s = sample_gamma(0.5, 2.0, 100_000, &mut rng).unwrap();
        assert!((mean(&s) - 0.25).abs() < 0.01);
        let s = sample_gamma(1.5, 1.0, 100_000, &mut rng).unwrap();
        let m = mean(&s);
        let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        assert!((var - 1.5).abs() < 0.05 * 1.5);
        assert!(sample_gamma(1.0, 0.0, 1, &mut rng).is_err());
        assert!(sample_gamma(-1.0, 1.0, 1, &mut rng).is_err());
    }

    #[test]
    fn sphere_samples() {
        let mut rng = RngStream::new(3).rng();
        let s = sample_sphere(1, 100, &mut rng);
        assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
        let s = sample_sphere(100, 10_000, &mut rng);
        for row in s.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        let s = sample_sphere(3, 100_000, &mut rng);
        let m: f64 = s.column(0).iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((m - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn ball_samples() {
        let mut rng = RngStream::new(4).rng();
        let s = sample_ball(1, 100_000, &mut rng);
        assert!(s.column(0).mean().unwrap().abs() < 0.01);
        let s = sample_ball(2, 100_000, &mut rng);
        let mean_norm = s.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / 100_000.0;
        assert!((mean_norm - 2.0 / 3.0).abs() < 0.01);
        let s = sample_ball(10, 10_000, &mut rng);
        assert!(s.rows().into_iter().all(|r| r.dot(&r).sqrt() < 1.0));
    }

    #[test]
    fn sobol_directions() {
        let a = sobol_sphere(4, 8, 0).unwrap();
        let b = sobol_sphere(4, 8, 0).unwrap();
        assert_eq!(a, b);
        for row in a.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        let s = sobol_sphere(3, 1 << 14, 0).unwrap();
        let m: f64 = s.column(0).iter().map(|v| v * v).sum::<f64>() / (1 << 14) as f64;
        assert!((m - 1.0 / 3.0).abs() < 0.01);
        assert!(matches!(
            sobol_sphere(1, 4, 0),
            Err(SamplingError::DimensionUnsupported { .. })
        ));
        assert!(sobol_sphere(SobolSphere::max_dims() + 1, 4, 0).is_err());
    }

    #[test]
    fn substreams_differ() {
        let base = RngStream::new(9);
        let a: f64 = base.substream(0).rng().random();
        let b: f64 = base.substream(1).rng().random();
        let c: f64 = base.rng().random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(base.substream(5), base.substream(5));
    }
}

//! Exact synthesis of the nearest-neighbor stationary Gaussian field by
//! circulant embedding.
//!
//! The target covariance is `gamma(0) = 1`, `gamma(+-e_i) = -rho`, zero
//! otherwise. On a torus with extents `L_i >= shape_i + 2` the circulant
//! eigenvalues are available in closed form,
//! `lambda(j) = 1 - 2 rho sum_i cos(2 pi j_i / L_i)`,
//! which is nonnegative exactly when `rho <= 1/(2d)`. A complex white-noise
//! vector is colored by `sqrt(lambda)`, transformed by the inverse FFT, and
//! the real part is scaled and cropped; because the torus exceeds the window
//! by the covariance support on every axis, the crop carries the exact target
//! covariance (no wraparound aliasing).

use crate::error::{Error, Result};
use crate::field::Field;
use crate::index::MultiIndex;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::sync::Arc;

/// Rounds up to a 5-smooth length, where the FFT is cheap.
fn next_fast_len(mut n: usize) -> usize {
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Prepared embedding for one `(shape, rho)` pair; sampling reuses the plans.
pub struct CirculantEmbedding {
    shape: MultiIndex,
    torus: Vec<usize>,
    sqrt_eigs: Vec<f64>,
    ffts: Vec<Arc<dyn rustfft::Fft<f64>>>,
}

impl CirculantEmbedding {
    pub fn new(shape: &MultiIndex, rho: f64) -> Result<Self> {
        let d = shape.dim();
        if !(rho > 0.0 && rho <= 1.0 / (2.0 * d as f64)) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in (0, 1/(2d)] = (0, {}], got {rho}",
                1.0 / (2.0 * d as f64)
            )));
        }
        // covariance support radius is 1; two extra cells per axis kill wraparound
        let torus: Vec<usize> = shape
            .coords()
            .iter()
            .map(|&c| next_fast_len(c as usize + 2))
            .collect();
        let cells: usize = torus.iter().product();

        let mut sqrt_eigs = vec![0.0f64; cells];
        let mut idx = vec![0usize; d];
        for (flat, se) in sqrt_eigs.iter_mut().enumerate() {
            let mut rem = flat;
            for axis in (0..d).rev() {
                idx[axis] = rem % torus[axis];
                rem /= torus[axis];
            }
            let mut cos_sum = 0.0;
            for axis in 0..d {
                cos_sum +=
                    (2.0 * std::f64::consts::PI * idx[axis] as f64 / torus[axis] as f64).cos();
            }
            let lambda = 1.0 - 2.0 * rho * cos_sum;
            // cannot go negative for valid rho; fail loudly if it ever does
            assert!(
                lambda >= -1e-9,
                "circulant eigenvalue {lambda} < 0 at {idx:?} (rho={rho})"
            );
            *se = lambda.max(0.0).sqrt();
        }

        let mut planner = FftPlanner::new();
        let ffts = torus
            .iter()
            .map(|&len| planner.plan_fft_inverse(len))
            .collect();

        Ok(Self {
            shape: shape.clone(),
            torus,
            sqrt_eigs,
            ffts,
        })
    }

    pub fn torus_extents(&self) -> &[usize] {
        &self.torus
    }

    /// Draws one field on the full torus.
    pub fn sample_torus<R: RngCore>(&self, rng: &mut R) -> Field {
        let cells = self.sqrt_eigs.len();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut data: Vec<Complex64> = Vec::with_capacity(cells);
        for &se in &self.sqrt_eigs {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            data.push(Complex64::new(re * half * se, im * half * se));
        }
        self.inverse_fft(&mut data);
        let scale = (2.0 / cells as f64).sqrt();
        let values: Vec<f64> = data.iter().map(|z| z.re * scale).collect();
        let torus_shape =
            MultiIndex::new(self.torus.iter().map(|&c| c as u64).collect()).expect("torus shape");
        Field::new(torus_shape, values).expect("torus field")
    }

    /// Draws one field and crops it to the window shape.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> Field {
        let torus_field = self.sample_torus(rng);
        crop(&torus_field, &self.shape)
    }

    /// Unnormalized inverse FFT along every axis (C layout, last axis fastest).
    fn inverse_fft(&self, data: &mut [Complex64]) {
        let d = self.torus.len();
        let mut scratch: Vec<Complex64> = Vec::new();
        for axis in 0..d {
            let len = self.torus[axis];
            let fft = &self.ffts[axis];
            let stride: usize = self.torus[axis + 1..].iter().product();
            let block = len * stride;
            let nblocks = data.len() / block;
            if axis == d - 1 {
                for chunk in data.chunks_exact_mut(len) {
                    fft.process(chunk);
                }
            } else {
                scratch.resize(len, Complex64::new(0.0, 0.0));
                for b in 0..nblocks {
                    let base = b * block;
                    for off in 0..stride {
                        for (i, s) in scratch.iter_mut().enumerate() {
                            *s = data[base + off + i * stride];
                        }
                        fft.process(&mut scratch);
                        for (i, s) in scratch.iter().enumerate() {
                            data[base + off + i * stride] = *s;
                        }
                    }
                }
            }
        }
    }
}

/// Restriction of a field to the box `[1, window]`.
pub fn crop(field: &Field, window: &MultiIndex) -> Field {
    let mut values = Vec::with_capacity(window.cells() as usize);
    for idx in window.iter_box() {
        values.push(field.at(&idx));
    }
    Field::new(window.clone(), values).expect("crop")
}

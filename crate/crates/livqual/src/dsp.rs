//! Internal signal-processing helpers: 2-D FFT on row-major buffers, Sobel
//! gradients, Hann windows and separable Gaussian blur.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::image::GrayImage;

/// Row-major complex grid with an in-place 2-D FFT.
pub(crate) struct ComplexGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeroed(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    /// In-place 2-D FFT (rows then columns). `inverse` applies the backward
    /// transform without normalization; callers scale as needed.
    pub fn fft2(&mut self, inverse: bool) {
        let mut planner = FftPlanner::new();
        let row_fft = if inverse {
            planner.plan_fft_inverse(self.width)
        } else {
            planner.plan_fft_forward(self.width)
        };
        for row in self.data.chunks_exact_mut(self.width) {
            row_fft.process(row);
        }
        let col_fft = if inverse {
            planner.plan_fft_inverse(self.height)
        } else {
            planner.plan_fft_forward(self.height)
        };
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for x in 0..self.width {
            for (y, slot) in column.iter_mut().enumerate() {
                *slot = self.data[y * self.width + x];
            }
            col_fft.process(&mut column);
            for (y, value) in column.iter().enumerate() {
                self.data[y * self.width + x] = *value;
            }
        }
    }
}

/// Sobel gradient pair over the full image, replicate-clamped at borders.
pub(crate) fn sobel_gradients(image: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width(), image.height());
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| {
                image.get_clamped(x as isize + dx, y as isize + dy) as f64
            };
            gx[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

/// Hann window of length `n` (n >= 2).
pub(crate) fn hann(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos()))
        .collect()
}

/// Separable Gaussian blur on an f64 raster, replicate-clamped borders.
pub(crate) fn gaussian_blur(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let clamp = |v: isize, max: usize| v.clamp(0, max as isize - 1) as usize;
    let mut tmp = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + k as isize - radius, width);
                acc += kv * data[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - radius, height);
                acc += kv * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

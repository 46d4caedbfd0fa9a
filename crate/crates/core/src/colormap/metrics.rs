//! Full-reference image metrics.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and
//! a dynamic range of 1. Only window positions lying entirely inside the
//! image contribute; the per-channel means are averaged over RGB.

use super::{ColorError, Image};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const C1: f64 = K1 * K1;
const C2: f64 = K2 * K2;

pub(crate) fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filter keeping only fully-covered positions.
struct ValidFilter {
    kernel: [f64; SSIM_WINDOW],
    width: usize,
    height: usize,
}

impl ValidFilter {
    fn new(width: usize, height: usize) -> Self {
        Self {
            kernel: gaussian_kernel(),
            width,
            height,
        }
    }

    fn out_dims(&self) -> (usize, usize) {
        (self.width + 1 - SSIM_WINDOW, self.height + 1 - SSIM_WINDOW)
    }

    fn apply(&self, plane: &[f64]) -> Vec<f64> {
        let (ow, oh) = self.out_dims();
        let w = self.width;
        let mut tmp = vec![0.0; ow * self.height];
        for y in 0..self.height {
            let row = &plane[y * w..(y + 1) * w];
            for x in 0..ow {
                tmp[y * ow + x] = self
                    .kernel
                    .iter()
                    .zip(&row[x..x + SSIM_WINDOW])
                    .map(|(k, v)| k * v)
                    .sum();
            }
        }
        let mut out = vec![0.0; ow * oh];
        for y in 0..oh {
            for (i, k) in self.kernel.iter().enumerate() {
                let src = &tmp[(y + i) * ow..(y + i + 1) * ow];
                for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += k * v;
                }
            }
        }
        out
    }

    /// Transpose of [`apply`]: spreads a valid-grid map back over the image.
    fn adjoint(&self, map: &[f64]) -> Vec<f64> {
        let (ow, oh) = self.out_dims();
        let w = self.width;
        let mut tmp = vec![0.0; ow * self.height];
        for y in 0..oh {
            for (i, k) in self.kernel.iter().enumerate() {
                let dst = &mut tmp[(y + i) * ow..(y + i + 1) * ow];
                for (d, v) in dst.iter_mut().zip(&map[y * ow..(y + 1) * ow]) {
                    *d += k * v;
                }
            }
        }
        let mut out = vec![0.0; w * self.height];
        for y in 0..self.height {
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..ow {
                let v = tmp[y * ow + x];
                for (d, k) in dst[x..x + SSIM_WINDOW].iter_mut().zip(&self.kernel) {
                    *d += k * v;
                }
            }
        }
        out
    }
}

fn check_ssim_dims(a: &Image, b: &Image) -> Result<(), ColorError> {
    a.check_same_dims(b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(ColorError::ImageTooSmall {
            dims: a.dims(),
            min: SSIM_WINDOW,
        });
    }
    Ok(())
}

struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

fn moments(f: &ValidFilter, x: &[f64], y: &[f64]) -> Moments {
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = f.apply(x);
    let mu_y = f.apply(y);
    let exx = f.apply(&sq(x));
    let eyy = f.apply(&sq(y));
    let exy = f.apply(&xy);
    let var_x = exx.iter().zip(&mu_x).map(|(e, m)| e - m * m).collect();
    let var_y = eyy.iter().zip(&mu_y).map(|(e, m)| e - m * m).collect();
    let cov = exy
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (a, b))| e - a * b)
        .collect();
    Moments {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

fn ssim_channel(f: &ValidFilter, x: &[f64], y: &[f64]) -> f64 {
    let m = moments(f, x, y);
    let n = m.mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (m.mu_x[i], m.mu_y[i]);
            ((2.0 * mx * my + C1) * (2.0 * m.cov[i] + C2))
                / ((mx * mx + my * my + C1) * (m.var_x[i] + m.var_y[i] + C2))
        })
        .sum();
    total / n as f64
}

/// Mean structural similarity, averaged over the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, ColorError> {
    check_ssim_dims(a, b)?;
    let f = ValidFilter::new(a.width(), a.height());
    let sum: f64 = (0..3)
        .map(|c| ssim_channel(&f, &a.channel(c), &b.channel(c)))
        .sum();
    Ok(sum / 3.0)
}

/// SSIM of `reference` against `test` together with its gradient with
/// respect to every channel value of `test` (per pixel, RGB).
pub(crate) fn ssim_with_gradient(
    reference: &Image,
    test: &Image,
) -> Result<(f64, Vec<[f64; 3]>), ColorError> {
    check_ssim_dims(reference, test)?;
    let f = ValidFilter::new(reference.width(), reference.height());
    let mut grad = vec![[0.0; 3]; reference.pixels().len()];
    let mut total = 0.0;
    for c in 0..3 {
        let x = reference.channel(c);
        let y = test.channel(c);
        let m = moments(&f, &x, &y);
        let n = m.mu_x.len();
        let scale = 1.0 / (3.0 * n as f64);
        let mut d_mu = vec![0.0; n];
        let mut d_eyy = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        let mut sum = 0.0;
        for i in 0..n {
            let (mx, my) = (m.mu_x[i], m.mu_y[i]);
            let n1 = 2.0 * mx * my + C1;
            let n2 = 2.0 * m.cov[i] + C2;
            let d1 = mx * mx + my * my + C1;
            let d2 = m.var_x[i] + m.var_y[i] + C2;
            let s = n1 * n2 / (d1 * d2);
            sum += s;
            let ds_dmu = 2.0 * mx * n2 / (d1 * d2) - 2.0 * my * s / d1;
            let ds_dvar = -s / d2;
            let ds_dcov = 2.0 * n1 / (d1 * d2);
            // var_y = E[y^2] - mu_y^2 and cov = E[xy] - mu_x mu_y
            d_mu[i] = scale * (ds_dmu - 2.0 * my * ds_dvar - mx * ds_dcov);
            d_eyy[i] = scale * ds_dvar;
            d_exy[i] = scale * ds_dcov;
        }
        total += sum / n as f64;
        let g_mu = f.adjoint(&d_mu);
        let g_eyy = f.adjoint(&d_eyy);
        let g_exy = f.adjoint(&d_exy);
        for (q, g) in grad.iter_mut().enumerate() {
            g[c] = g_mu[q] + 2.0 * y[q] * g_eyy[q] + x[q] * g_exy[q];
        }
    }
    Ok((total / 3.0, grad))
}

/// Mean squared error over all channel values.
pub fn mse(a: &Image, b: &Image) -> Result<f64, ColorError> {
    a.check_same_dims(b)?;
    let n = a.pixels().len() * 3;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum();
    Ok(sum / n as f64)
}

/// Peak signal-to-noise ratio in dB for a peak value of 1.
/// Identical images yield `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ColorError> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / e).log10())
}

/// Mean absolute difference over all channel values.
pub fn mean_abs_error(a: &Image, b: &Image) -> Result<f64, ColorError> {
    a.check_same_dims(b)?;
    let n = a.pixels().len() * 3;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .sum();
    Ok(sum / n as f64)
}

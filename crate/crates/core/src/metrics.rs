//! Objective image-fusion metrics on `[0, 1]` planes.

use ndarray::{Array1, Array2, Zip};

use crate::error::{check_same_shape, CssaError, Result};
use crate::spectral::Plane;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// EN, average PSNR, average SSIM, SF and EI of one fused image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub en: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub sf: f64,
    pub ei: f64,
}

/// Shannon entropy (bits) of the 256-bin histogram of `round(255 v)`.
pub fn entropy(p: &Plane) -> f64 {
    let mut hist = [0usize; 256];
    for &v in p {
        hist[(255.0 * v).round().clamp(0.0, 255.0) as usize] += 1;
    }
    let total = p.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / total;
            q * (1.0 / q).log2()
        })
        .sum()
}

/// `10 log10(1 / MSE)` with peak 1; `+inf` for identical planes.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<f64> {
    check_same_shape("psnr", reference.dim(), test.dim())?;
    let mse = Zip::from(reference)
        .and(test)
        .fold(0.0, |acc, a, b| acc + (a - b) * (a - b))
        / reference.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

/// Mean PSNR of `fused` against each input, skipping infinite values unless all are infinite.
pub fn avg_psnr(fused: &Plane, inputs: &[Plane]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(CssaError::InvalidParameter("no input images to compare against".into()));
    }
    let values = inputs.iter().map(|p| psnr(p, fused)).collect::<Result<Vec<_>>>()?;
    let finite: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
    Ok(if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    })
}

fn gaussian_window() -> Array1<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g = Array1::from_shape_fn(SSIM_WINDOW, |i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s = g.sum();
    g / s
}

// Separable weighted sum over every valid window position.
fn filter_valid(p: &Array2<f64>, g: &Array1<f64>) -> Array2<f64> {
    let (h, w) = p.dim();
    let n = g.len();
    let rows = Array2::from_shape_fn((h, w - n + 1), |(i, j)| (0..n).map(|t| g[t] * p[[i, j + t]]).sum::<f64>());
    Array2::from_shape_fn((h - n + 1, w - n + 1), |(i, j)| (0..n).map(|t| g[t] * rows[[i + t, j]]).sum::<f64>())
}

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1),
/// averaged over valid window positions.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64> {
    check_same_shape("ssim", a.dim(), b.dim())?;
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(CssaError::InvalidParameter(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let mu_a = filter_valid(a, &g);
    let mu_b = filter_valid(b, &g);
    let aa = filter_valid(&(a * a), &g);
    let bb = filter_valid(&(b * b), &g);
    let ab = filter_valid(&(a * b), &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    Zip::from(&mu_a)
        .and(&mu_b)
        .and(&aa)
        .and(&bb)
        .and(&ab)
        .for_each(|&ma, &mb, &saa, &sbb, &sab| {
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        });
    Ok(total / mu_a.len() as f64)
}

/// Mean SSIM of `fused` against each input.
pub fn avg_ssim(fused: &Plane, inputs: &[Plane]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(CssaError::InvalidParameter("no input images to compare against".into()));
    }
    let values = inputs.iter().map(|p| ssim(p, fused)).collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `sqrt(RF^2 + CF^2)` from the RMS horizontal and vertical first differences.
pub fn spatial_frequency(p: &Plane) -> Result<f64> {
    let (h, w) = p.dim();
    if h < 2 || w < 2 {
        return Err(CssaError::InvalidParameter(format!(
            "spatial frequency needs at least 2x2 pixels, got {h}x{w}"
        )));
    }
    let mut row = 0.0;
    let mut col = 0.0;
    for i in 0..h {
        for j in 0..w {
            if j > 0 {
                row += (p[[i, j]] - p[[i, j - 1]]).powi(2);
            }
            if i > 0 {
                col += (p[[i, j]] - p[[i - 1, j]]).powi(2);
            }
        }
    }
    let rf = row / (h * (w - 1)) as f64;
    let cf = col / ((h - 1) * w) as f64;
    Ok((rf + cf).sqrt())
}

/// Mean Sobel gradient magnitude over interior pixels.
pub fn edge_intensity(p: &Plane) -> Result<f64> {
    let (h, w) = p.dim();
    if h < 3 || w < 3 {
        return Err(CssaError::InvalidParameter(format!(
            "edge intensity needs at least 3x3 pixels, got {h}x{w}"
        )));
    }
    let mut total = 0.0;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let v = |di: usize, dj: usize| p[[i + di - 1, j + dj - 1]];
            let gx = (v(0, 2) + 2.0 * v(1, 2) + v(2, 2)) - (v(0, 0) + 2.0 * v(1, 0) + v(2, 0));
            let gy = (v(2, 0) + 2.0 * v(2, 1) + v(2, 2)) - (v(0, 0) + 2.0 * v(0, 1) + v(0, 2));
            total += (gx * gx + gy * gy).sqrt();
        }
    }
    Ok(total / ((h - 2) * (w - 2)) as f64)
}

/// All five metrics of `fused` against `inputs`.
pub fn report(fused: &Plane, inputs: &[Plane]) -> Result<MetricReport> {
    Ok(MetricReport {
        en: entropy(fused),
        psnr: avg_psnr(fused, inputs)?,
        ssim: avg_ssim(fused, inputs)?,
        sf: spatial_frequency(fused)?,
        ei: edge_intensity(fused)?,
    })
}

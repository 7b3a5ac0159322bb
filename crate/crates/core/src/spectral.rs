//! Dense 2-D planes and their frequency-domain counterparts.
//!
//! All convolutions in this crate are circular (periodic boundary) so that the
//! convolutional least-squares problems diagonalize under the 2-D DFT. The
//! forward transform is unnormalized; the inverse applies the `1/(HW)` factor.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Zip};
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{check_same_shape, CssaError, Result};

/// One grayscale image or one coefficient map, row-major `H x W`.
pub type Plane = Array2<f64>;

/// Complex `H x W` DFT coefficients of a [`Plane`].
pub type Spectrum = Array2<Complex64>;

/// Square `q x q` convolution filter.
pub type Filter = Array2<f64>;

/// Cached row and column FFT plans for one grid size.
///
/// Cheap to clone; plans are shared through `Arc`.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty grid");
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub(crate) fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(buf.len(), h * w);
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(buf);
        if h == 1 {
            return;
        }
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        for i in 0..h {
            for j in 0..w {
                t[j * h + i] = buf[i * w + j];
            }
        }
        cols.process(&mut t);
        for j in 0..w {
            for i in 0..h {
                buf[i * w + j] = t[j * h + i];
            }
        }
    }

    /// Unnormalized forward DFT of a real plane.
    pub fn forward(&self, p: ArrayView2<f64>) -> Spectrum {
        let mut out = Spectrum::zeros((self.height, self.width));
        self.forward_into(p, &mut out);
        out
    }

    /// Forward DFT written into `out`.
    pub fn forward_into(&self, p: ArrayView2<f64>, out: &mut Spectrum) {
        assert_eq!(p.dim(), self.shape());
        assert_eq!(out.dim(), self.shape());
        Zip::from(&mut *out)
            .and(&p)
            .for_each(|o, &v| *o = Complex64::new(v, 0.0));
        self.transform(out.as_slice_mut().expect("standard layout"), false);
    }

    /// Inverse DFT of `s` in place (normalized by `1/(HW)`).
    pub fn inverse_in_place(&self, s: &mut Spectrum) {
        assert_eq!(s.dim(), self.shape());
        self.transform(s.as_slice_mut().expect("standard layout"), true);
        let scale = 1.0 / (self.height * self.width) as f64;
        s.mapv_inplace(|c| c * scale);
    }

    /// Inverse DFT keeping only the real part, without the symmetry check.
    pub fn inverse_real(&self, mut s: Spectrum) -> Plane {
        self.inverse_in_place(&mut s);
        s.mapv(|c| c.re)
    }

    /// Writes the real part of the inverse DFT of `s` into `out`; `s` is consumed as scratch.
    pub fn inverse_real_into(&self, s: &mut Spectrum, out: &mut ndarray::ArrayViewMut2<f64>) {
        self.inverse_in_place(s);
        Zip::from(out).and(&*s).for_each(|o, c| *o = c.re);
    }
}

/// Real-input 2-D FFT producing the non-redundant half spectrum.
///
/// The half spectrum keeps columns `0..=W/2` and is stored *column-major*
/// (`(W/2 + 1) x H`, one contiguous run per column) so the column transforms
/// run on contiguous memory. Bin `(r, c)` of the full DFT lives at
/// `c * H + r`. Only elementwise operations are ever applied to half spectra,
/// so the layout is otherwise irrelevant.
#[derive(Clone)]
pub struct RealFft2 {
    height: usize,
    width: usize,
    half_width: usize,
    row_fwd: Arc<dyn RealToComplex<f64>>,
    row_inv: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl RealFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty grid");
        let mut real = RealFftPlanner::<f64>::new();
        let mut complex = FftPlanner::new();
        Self {
            height,
            width,
            half_width: width / 2 + 1,
            row_fwd: real.plan_fft_forward(width),
            row_inv: real.plan_fft_inverse(width),
            col_fwd: complex.plan_fft_forward(height),
            col_inv: complex.plan_fft_inverse(height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of stored bins, `(W/2 + 1) * H`.
    pub fn bins(&self) -> usize {
        self.half_width * self.height
    }

    /// Forward transform of a row-major `H x W` buffer into `out` (length [`Self::bins`]).
    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        let (h, w, wc) = (self.height, self.width, self.half_width);
        debug_assert_eq!(input.len(), h * w);
        debug_assert_eq!(out.len(), wc * h);
        let mut row = self.row_fwd.make_input_vec();
        let mut spec = self.row_fwd.make_output_vec();
        let mut scratch = self.row_fwd.make_scratch_vec();
        for r in 0..h {
            row.copy_from_slice(&input[r * w..(r + 1) * w]);
            self.row_fwd
                .process_with_scratch(&mut row, &mut spec, &mut scratch)
                .expect("buffer sizes match the plan");
            for (c, v) in spec.iter().enumerate() {
                out[c * h + r] = *v;
            }
        }
        self.col_fwd.process(out);
    }

    /// Inverse transform (including `1/(HW)`) of a half spectrum into a row-major
    /// real buffer. `spec` is used as scratch and left unspecified.
    pub fn inverse(&self, spec: &mut [Complex64], out: &mut [f64]) {
        let (h, w, wc) = (self.height, self.width, self.half_width);
        debug_assert_eq!(spec.len(), wc * h);
        debug_assert_eq!(out.len(), h * w);
        self.col_inv.process(spec);
        let mut row = self.row_inv.make_input_vec();
        let mut scratch = self.row_inv.make_scratch_vec();
        let scale = 1.0 / (h * w) as f64;
        for r in 0..h {
            for (c, v) in row.iter_mut().enumerate() {
                *v = spec[c * h + r];
            }
            // rounding leaves tiny imaginary parts on the self-conjugate bins
            row[0].im = 0.0;
            if w % 2 == 0 {
                row[wc - 1].im = 0.0;
            }
            let dst = &mut out[r * w..(r + 1) * w];
            self.row_inv
                .process_with_scratch(&mut row, dst, &mut scratch)
                .expect("buffer sizes match the plan");
            dst.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Spatial-domain energy `||x||^2` of the signal whose half spectrum is `spec`.
    pub fn energy(&self, spec: &[Complex64]) -> f64 {
        let h = self.height;
        let mut total = 0.0;
        for (c, col) in spec.chunks_exact(h).enumerate() {
            // columns other than DC and (even-width) Nyquist stand for two conjugate columns
            let twice = c != 0 && !(self.width % 2 == 0 && c == self.half_width - 1);
            let e: f64 = col.iter().map(|v| v.norm_sqr()).sum();
            total += if twice { 2.0 * e } else { e };
        }
        total / (self.height * self.width) as f64
    }

    /// Converts a full `H x W` spectrum to the half-spectrum layout.
    pub fn half_of(&self, full: &Spectrum) -> Vec<Complex64> {
        let h = self.height;
        let mut out = vec![Complex64::new(0.0, 0.0); self.bins()];
        for c in 0..self.half_width {
            for r in 0..h {
                out[c * h + r] = full[[r, c]];
            }
        }
        out
    }
}

/// Unnormalized forward 2-D DFT.
pub fn dft2(p: &Plane) -> Spectrum {
    let (h, w) = p.dim();
    Fft2::new(h, w).forward(p.view())
}

/// Inverse 2-D DFT returning the real part.
///
/// Fails when the imaginary residual exceeds `1e-8` times the norm of the
/// result, which means the input was not the spectrum of a real plane.
pub fn idft2(s: &Spectrum) -> Result<Plane> {
    let (h, w) = s.dim();
    let mut buf = s.clone();
    Fft2::new(h, w).inverse_in_place(&mut buf);
    let norm = buf.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let residual = buf.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    if residual > 1e-8 * norm {
        return Err(CssaError::NonRealSpectrum { residual, norm });
    }
    Ok(buf.mapv(|c| c.re))
}

/// Embeds a `q x q` filter in the top-left corner of an `H x W` zero plane.
pub fn pad_filter(d: &Filter, height: usize, width: usize) -> Result<Plane> {
    let q = d.nrows();
    if d.ncols() != q {
        return Err(CssaError::InvalidParameter(format!(
            "filters must be square, got {}x{}",
            q,
            d.ncols()
        )));
    }
    if q > height.min(width) {
        return Err(CssaError::FilterTooLarge {
            side: q,
            height,
            width,
        });
    }
    let mut p = Plane::zeros((height, width));
    p.slice_mut(s![..q, ..q]).assign(d);
    Ok(p)
}

/// Top-left `q x q` block of a plane.
pub fn crop_filter(p: &Plane, q: usize) -> Result<Filter> {
    let (height, width) = p.dim();
    if q == 0 || q > height.min(width) {
        return Err(CssaError::FilterTooLarge {
            side: q,
            height,
            width,
        });
    }
    Ok(p.slice(s![..q, ..q]).to_owned())
}

/// Circular 2-D convolution of two equally sized planes.
pub fn circ_conv(a: &Plane, b: &Plane) -> Result<Plane> {
    check_same_shape("circ_conv", a.dim(), b.dim())?;
    let (h, w) = a.dim();
    let fft = Fft2::new(h, w);
    let mut prod = fft.forward(a.view());
    prod *= &fft.forward(b.view());
    Ok(fft.inverse_real(prod))
}

//! ADMM solver for convolutional simultaneous sparse approximation.
//!
//! Solves
//!
//! ```text
//! min_X  1/2 sum_n || sum_k D_k * X_k^(n) - s^(n) ||^2  +  R(X)
//! ```
//!
//! where `R` couples the `N` coefficient maps through their per-site rows
//! `[X_k^(1)(p) ... X_k^(N)(p)]` (see [`Structure`]). The splitting `X = Y`
//! gives three steps per iteration:
//!
//! * Y-update: `N` independent convolutional ridge regressions, solved
//!   exactly in the frequency domain with the Sherman-Morrison identity;
//! * X-update: the row-wise proximal operator of `R / rho`;
//! * U-update: `U += Y - X`.
//!
//! With one dictionary all signals share it; with `N` dictionaries signal
//! `n` is synthesized from dictionary `n`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, ArrayView2, ArrayView3, ArrayViewMut3, Axis, Zip};
use num_complex::Complex64;

use crate::dictionary::Dictionary;
use crate::error::{check_same_shape, CssaError, Result};
use crate::prox::{
    prox_l1_l2_in_place, prox_l2_in_place, prox_linf_in_place, shrink, shrink_in_place,
    ProxWeights,
};
use crate::spectral::{pad_filter, Plane, RealFft2, Spectrum};

/// Sparsity structure imposed on the coefficient rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    /// Independent elementwise l1 (no coupling between signals).
    L1,
    /// l2,1: whole rows are kept or zeroed, giving identical supports.
    L21,
    /// linf,1: rows are kept or zeroed, surviving rows are flattened.
    LInf1,
    /// l1 + l2,1: row sparsity with sparse surviving rows.
    L1L21,
}

impl Structure {
    pub const ALL: [Structure; 4] = [Self::L1, Self::L21, Self::LInf1, Self::L1L21];

    pub fn name(self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::L21 => "l21",
            Self::LInf1 => "linf1",
            Self::L1L21 => "l1l21",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = CssaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Self::L1),
            "l21" => Ok(Self::L21),
            "linf1" => Ok(Self::LInf1),
            "l1l21" | "l1_l21" => Ok(Self::L1L21),
            other => Err(CssaError::InvalidParameter(format!(
                "unknown structure '{other}' (expected l1, l21, linf1 or l1l21)"
            ))),
        }
    }
}

/// A sparsity structure with its weights. `lambda` drives `L1`, `L21` and
/// `LInf1`; `gamma1` (element) and `gamma2` (row) drive `L1L21`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    pub structure: Structure,
    pub lambda: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Regularizer {
    pub fn l1(lambda: f64) -> Self {
        Self::weighted(Structure::L1, lambda)
    }

    pub fn l21(lambda: f64) -> Self {
        Self::weighted(Structure::L21, lambda)
    }

    pub fn linf1(lambda: f64) -> Self {
        Self::weighted(Structure::LInf1, lambda)
    }

    pub fn l1_l21(gamma1: f64, gamma2: f64) -> Self {
        Self {
            structure: Structure::L1L21,
            lambda: 0.0,
            gamma1,
            gamma2,
        }
    }

    /// `L1L21` maps `lambda` to `gamma2` with `gamma1 = 0`.
    pub fn weighted(structure: Structure, lambda: f64) -> Self {
        match structure {
            Structure::L1L21 => Self::l1_l21(0.0, lambda),
            _ => Self {
                structure,
                lambda,
                gamma1: 0.0,
                gamma2: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let active: &[(&str, f64)] = match self.structure {
            Structure::L1L21 => &[("gamma1", self.gamma1), ("gamma2", self.gamma2)],
            _ => &[("lambda", self.lambda)],
        };
        for &(name, v) in active {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CssaError::InvalidParameter(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Value of the penalty term at `x`.
    pub fn penalty(&self, x: &CoefficientSet) -> f64 {
        let (n, k, h, w) = x.maps.dim();
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut linf = 0.0;
        for kk in 0..k {
            for i in 0..h {
                for j in 0..w {
                    let mut sq = 0.0;
                    let mut mx = 0.0f64;
                    for nn in 0..n {
                        let v = x.maps[[nn, kk, i, j]];
                        l1 += v.abs();
                        sq += v * v;
                        mx = mx.max(v.abs());
                    }
                    l2 += sq.sqrt();
                    linf += mx;
                }
            }
        }
        match self.structure {
            Structure::L1 => self.lambda * l1,
            Structure::L21 => self.lambda * l2,
            Structure::LInf1 => self.lambda * linf,
            Structure::L1L21 => self.gamma1 * l1 + self.gamma2 * l2,
        }
    }

    fn prox_row(&self, row: &mut [f64], rho: f64, scratch: &mut Vec<f64>) {
        match self.structure {
            Structure::L1 => shrink_in_place(row, self.lambda / rho),
            Structure::L21 => prox_l2_in_place(row, self.lambda / rho),
            Structure::LInf1 => prox_linf_in_place(row, self.lambda / rho, scratch),
            Structure::L1L21 => {
                prox_l1_l2_in_place(row, ProxWeights::new(self.gamma1 / rho, self.gamma2 / rho))
            }
        }
    }
}

/// `N x K` coefficient maps of size `H x W`, stored as one `(N, K, H, W)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    maps: Array4<f64>,
}

impl CoefficientSet {
    pub fn zeros(signals: usize, filters: usize, height: usize, width: usize) -> Self {
        Self {
            maps: Array4::zeros((signals, filters, height, width)),
        }
    }

    pub fn from_array(maps: Array4<f64>) -> Result<Self> {
        let (n, k, h, w) = maps.dim();
        if n == 0 || k == 0 || h == 0 || w == 0 {
            return Err(CssaError::InvalidParameter(format!(
                "coefficient set needs positive dimensions, got {:?}",
                maps.dim()
            )));
        }
        Ok(Self {
            maps: maps.as_standard_layout().into_owned(),
        })
    }

    pub fn signals(&self) -> usize {
        self.maps.dim().0
    }

    pub fn filters(&self) -> usize {
        self.maps.dim().1
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, _, h, w) = self.maps.dim();
        (h, w)
    }

    pub fn map(&self, n: usize, k: usize) -> ArrayView2<'_, f64> {
        self.maps.index_axis(Axis(0), n).index_axis_move(Axis(0), k)
    }

    pub fn map_mut(&mut self, n: usize, k: usize) -> ndarray::ArrayViewMut2<'_, f64> {
        self.maps
            .index_axis_mut(Axis(0), n)
            .index_axis_move(Axis(0), k)
    }

    /// All `K` maps of signal `n`.
    pub fn signal_maps(&self, n: usize) -> ArrayView3<'_, f64> {
        self.maps.index_axis(Axis(0), n)
    }

    pub fn signal_maps_mut(&mut self, n: usize) -> ArrayViewMut3<'_, f64> {
        self.maps.index_axis_mut(Axis(0), n)
    }

    pub fn as_array(&self) -> &Array4<f64> {
        &self.maps
    }

    pub fn into_array(self) -> Array4<f64> {
        self.maps
    }

    pub fn max_abs(&self) -> f64 {
        self.maps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// ADMM penalty, iteration cap and stopping tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rho: f64,
    pub max_iter: usize,
    /// Per-entry RMS tolerance on the primal residual `||Y - X||`.
    pub tol_primal: f64,
    /// Per-entry RMS tolerance on the dual residual `rho ||X - X_prev||`.
    pub tol_dual: f64,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 10.0,
            max_iter: 200,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            record_history: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(CssaError::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if self.max_iter == 0 {
            return Err(CssaError::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(CssaError::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Primal and dual residual norms after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

/// Iterates of one ADMM run.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub y: CoefficientSet,
    pub x: CoefficientSet,
    pub u: CoefficientSet,
    pub iter: usize,
    pub primal_res: Vec<f64>,
    pub dual_res: Vec<f64>,
    spectra: Vec<Complex64>,
}

impl AdmmState {
    /// Zero-initialized state.
    pub fn zeros(signals: usize, filters: usize, height: usize, width: usize) -> Self {
        let z = CoefficientSet::zeros(signals, filters, height, width);
        Self {
            y: z.clone(),
            x: z.clone(),
            u: z,
            iter: 0,
            primal_res: Vec::new(),
            dual_res: Vec::new(),
            spectra: Vec::new(),
        }
    }

    pub fn last_residuals(&self) -> Option<Residuals> {
        Some(Residuals {
            primal: *self.primal_res.last()?,
            dual: *self.dual_res.last()?,
        })
    }
}

/// Table-1 style diagnostics of one encode run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeDiagnostics {
    pub sparsity_ratio: f64,
    pub common_support_pct: f64,
    pub approx_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Encoding {
    pub coefficients: CoefficientSet,
    pub diagnostics: EncodeDiagnostics,
    /// Per-iteration residuals, filled only when `record_history` is set.
    pub history: Vec<Residuals>,
}

/// Half spectra of one dictionary's padded filters on the signal grid, with
/// `sum_k |D_k|^2` per bin. Layout follows [`RealFft2`].
#[derive(Debug, Clone)]
pub struct DictSpectra {
    spectra: Vec<Complex64>,
    energy: Vec<f64>,
    filters: usize,
}

impl DictSpectra {
    pub fn new(dict: &Dictionary, fft: &RealFft2) -> Result<Self> {
        let (h, w) = fft.shape();
        dict.fits(h, w)?;
        let bins = fft.bins();
        let mut spectra = vec![Complex64::new(0.0, 0.0); dict.len() * bins];
        for (f, dst) in dict.filters().iter().zip(spectra.chunks_exact_mut(bins)) {
            let padded = pad_filter(f, h, w)?;
            fft.forward(padded.as_slice().expect("standard layout"), dst);
        }
        Ok(Self::from_half(spectra, dict.len(), bins))
    }

    /// From full `H x W` filter spectra.
    pub fn from_spectra(list: &[Spectrum], fft: &RealFft2) -> Self {
        let bins = fft.bins();
        let spectra = list.iter().flat_map(|s| fft.half_of(s)).collect();
        Self::from_half(spectra, list.len(), bins)
    }

    fn from_half(spectra: Vec<Complex64>, filters: usize, bins: usize) -> Self {
        let mut energy = vec![0.0; bins];
        for chunk in spectra.chunks_exact(bins) {
            for (e, d) in energy.iter_mut().zip(chunk) {
                *e += d.norm_sqr();
            }
        }
        Self {
            spectra,
            energy,
            filters,
        }
    }

    pub fn filters(&self) -> usize {
        self.filters
    }
}

// Per-bin solve of (a a^H + rho I) y = b with a = conj(d), b = conj(d) s + rho z:
// y = (b - a (a^H b) / (rho + a^H a)) / rho. `z` holds z on entry and y on exit;
// `data` holds conj(d) s. Both are `K` consecutive half spectra.
fn solve_y_bins(dict: &DictSpectra, data: &[Complex64], z: &mut [Complex64], rho: f64) {
    let bins = dict.energy.len();
    let k = dict.filters;
    let d = &dict.spectra;
    let inv_rho = 1.0 / rho;
    let mut dot = vec![Complex64::new(0.0, 0.0); bins];
    for kk in 0..k {
        let off = kk * bins;
        let (zk, dk, sk) = (&mut z[off..off + bins], &d[off..off + bins], &data[off..off + bins]);
        for f in 0..bins {
            let b = sk[f] + zk[f] * rho;
            zk[f] = b;
            dot[f] += dk[f] * b;
        }
    }
    for (c, e) in dot.iter_mut().zip(&dict.energy) {
        *c /= rho + e;
    }
    for kk in 0..k {
        let off = kk * bins;
        let (zk, dk) = (&mut z[off..off + bins], &d[off..off + bins]);
        for f in 0..bins {
            zk[f] = (zk[f] - dk[f].conj() * dot[f]) * inv_rho;
        }
    }
}

fn data_term(fft: &RealFft2, dict: &DictSpectra, signal: &Plane) -> Vec<Complex64> {
    let bins = fft.bins();
    let mut shat = vec![Complex64::new(0.0, 0.0); bins];
    fft.forward(signal.as_standard_layout().as_slice().expect("standard layout"), &mut shat);
    dict.spectra
        .chunks_exact(bins)
        .flat_map(|dk| dk.iter().zip(&shat).map(|(d, s)| d.conj() * s))
        .collect()
}

/// Exact minimizer of `1/2 ||sum_k D_k * Y_k - s||^2 + rho/2 ||Y - Z||^2`.
///
/// `dict_spectra` are the DFTs of the zero-padded filters on the signal grid.
pub fn y_update(signal: &Plane, z: &[Plane], dict_spectra: &[Spectrum], rho: f64) -> Result<Vec<Plane>> {
    if z.len() != dict_spectra.len() || z.is_empty() {
        return Err(CssaError::Inconsistent(format!(
            "{} coefficient maps for {} filters",
            z.len(),
            dict_spectra.len()
        )));
    }
    if !(rho > 0.0) {
        return Err(CssaError::InvalidParameter("rho must be positive".into()));
    }
    let (h, w) = signal.dim();
    for (zk, dk) in z.iter().zip(dict_spectra) {
        check_same_shape("y_update", (h, w), zk.dim())?;
        check_same_shape("y_update", (h, w), dk.dim())?;
    }
    let fft = RealFft2::new(h, w);
    let bins = fft.bins();
    let dict = DictSpectra::from_spectra(dict_spectra, &fft);
    let data = data_term(&fft, &dict, signal);
    let mut zhat = vec![Complex64::new(0.0, 0.0); z.len() * bins];
    for (zk, dst) in z.iter().zip(zhat.chunks_exact_mut(bins)) {
        fft.forward(zk.as_standard_layout().as_slice().expect("standard layout"), dst);
    }
    solve_y_bins(&dict, &data, &mut zhat, rho);
    Ok(zhat
        .chunks_exact_mut(bins)
        .map(|s| {
            let mut out = Plane::zeros((h, w));
            fft.inverse(s, out.as_slice_mut().expect("standard layout"));
            out
        })
        .collect())
}

/// Row-wise proximal step: each `N`-vector `W[:, k, p]` is mapped through the
/// proximal operator of `reg / rho`.
pub fn x_update(w: &CoefficientSet, reg: &Regularizer, rho: f64) -> CoefficientSet {
    let mut x = w.clone();
    let n = w.signals();
    let stride = w.maps.len() / n.max(1);
    let data = x.maps.as_slice_mut().expect("standard layout");
    let mut row = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    for site in 0..stride {
        for (nn, r) in row.iter_mut().enumerate() {
            *r = data[nn * stride + site];
        }
        reg.prox_row(&mut row, rho, &mut scratch);
        for (nn, r) in row.iter().enumerate() {
            data[nn * stride + site] = *r;
        }
    }
    x
}

/// Precomputed frequency-domain data for repeatedly solving one CSSA problem.
#[derive(Debug, Clone)]
pub struct Encoder {
    fft: RealFft2,
    signals: Vec<Plane>,
    dicts: Vec<DictSpectra>,
    dict_of_signal: Vec<usize>,
    // conj(D_k) s_n, K half spectra per signal
    data: Vec<Vec<Complex64>>,
    filters: usize,
    reg: Regularizer,
    opts: SolverOptions,
}

impl Encoder {
    /// `dicts` holds either one dictionary shared by all signals or one per signal.
    pub fn new(signals: &[Plane], dicts: &[Dictionary], reg: Regularizer, opts: SolverOptions) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| CssaError::InvalidParameter("at least one signal is required".into()))?;
        let (h, w) = first.dim();
        for s in signals {
            check_same_shape("encode signals", (h, w), s.dim())?;
        }
        let n = signals.len();
        if dicts.len() != 1 && dicts.len() != n {
            return Err(CssaError::Inconsistent(format!(
                "expected 1 or {n} dictionaries, got {}",
                dicts.len()
            )));
        }
        let k = dicts[0].len();
        if dicts.iter().any(|d| d.len() != k || d.side() != dicts[0].side()) {
            return Err(CssaError::Inconsistent(
                "dictionaries must share filter count and size".into(),
            ));
        }
        reg.validate()?;
        opts.validate()?;
        let fft = RealFft2::new(h, w);
        let spectra = dicts
            .iter()
            .map(|d| DictSpectra::new(d, &fft))
            .collect::<Result<Vec<_>>>()?;
        let dict_of_signal = (0..n).map(|i| if dicts.len() == 1 { 0 } else { i }).collect();
        Ok(Self::assemble(fft, signals.to_vec(), spectra, dict_of_signal, reg, opts))
    }

    fn assemble(
        fft: RealFft2,
        signals: Vec<Plane>,
        dicts: Vec<DictSpectra>,
        dict_of_signal: Vec<usize>,
        reg: Regularizer,
        opts: SolverOptions,
    ) -> Self {
        let k = dicts[0].filters();
        let data = signals
            .iter()
            .zip(&dict_of_signal)
            .map(|(s, &d)| data_term(&fft, &dicts[d], s))
            .collect();
        Self {
            fft,
            signals,
            dicts,
            dict_of_signal,
            data,
            filters: k,
            reg,
            opts,
        }
    }

    pub fn signals(&self) -> &[Plane] {
        &self.signals
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn initial_state(&self) -> AdmmState {
        let (h, w) = self.fft.shape();
        AdmmState::zeros(self.signals.len(), self.filters, h, w)
    }

    fn entries(&self) -> usize {
        let (h, w) = self.fft.shape();
        self.signals.len() * self.filters * h * w
    }

    /// One ADMM iteration (Y-, X- and U-update) on `state`.
    pub fn iterate(&self, state: &mut AdmmState) -> Residuals {
        let n = self.signals.len();
        let k = self.filters;
        let (h, w) = self.fft.shape();
        let p = h * w;
        let bins = self.fft.bins();
        let rho = self.opts.rho;
        let fft = &self.fft;
        let x = state.x.maps.as_slice_mut().expect("standard layout");
        let u = state.u.maps.as_slice_mut().expect("standard layout");
        let y = state.y.maps.as_slice_mut().expect("standard layout");
        state.spectra.resize(k * bins, Complex64::new(0.0, 0.0));
        let spec = &mut state.spectra;
        let mut z = vec![0.0; p];

        for nn in 0..n {
            for kk in 0..k {
                let off = (nn * k + kk) * p;
                for ((zv, xv), uv) in z.iter_mut().zip(&x[off..off + p]).zip(&u[off..off + p]) {
                    *zv = xv - uv;
                }
                fft.forward(&z, &mut spec[kk * bins..(kk + 1) * bins]);
            }
            solve_y_bins(&self.dicts[self.dict_of_signal[nn]], &self.data[nn], spec, rho);
            for kk in 0..k {
                let off = (nn * k + kk) * p;
                fft.inverse(&mut spec[kk * bins..(kk + 1) * bins], &mut y[off..off + p]);
            }
        }

        let stride = k * p;
        let reg = self.reg;
        let mut row = vec![0.0; n];
        let mut scratch = Vec::with_capacity(n);
        let mut primal = 0.0;
        let mut dual = 0.0;
        for site in 0..stride {
            for (nn, r) in row.iter_mut().enumerate() {
                let i = nn * stride + site;
                *r = y[i] + u[i];
            }
            reg.prox_row(&mut row, rho, &mut scratch);
            for (nn, &xn) in row.iter().enumerate() {
                let i = nn * stride + site;
                let dx = xn - x[i];
                dual += dx * dx;
                x[i] = xn;
                let r = y[i] - xn;
                primal += r * r;
                u[i] += r;
            }
        }
        let res = Residuals {
            primal: primal.sqrt(),
            dual: rho * dual.sqrt(),
        };
        state.iter += 1;
        state.primal_res.push(res.primal);
        state.dual_res.push(res.dual);
        res
    }

    /// True when both residuals are below their tolerances scaled by `sqrt(NKP)`.
    pub fn converged(&self, res: Residuals) -> bool {
        let scale = (self.entries() as f64).sqrt();
        res.primal <= self.opts.tol_primal * scale && res.dual <= self.opts.tol_dual * scale
    }

    /// Iterates until convergence or `max_iter`; returns whether it converged.
    pub fn run(&self, state: &mut AdmmState) -> bool {
        for _ in 0..self.opts.max_iter {
            let res = self.iterate(state);
            if self.converged(res) {
                return true;
            }
        }
        false
    }

    /// `sum_k D_k * X_k^(n)` for every signal.
    pub fn reconstruct(&self, x: &CoefficientSet) -> Vec<Plane> {
        (0..x.signals())
            .map(|nn| {
                let d = &self.dicts[self.dict_of_signal[nn]];
                synthesize(&self.fft, d, x.signal_maps(nn))
            })
            .collect()
    }

    /// `sum_n ||sum_k D_k * X_k^(n) - s^(n)||^2`.
    pub fn approx_error(&self, x: &CoefficientSet) -> f64 {
        self.reconstruct(x)
            .iter()
            .zip(&self.signals)
            .map(|(r, s)| squared_distance(r, s))
            .sum()
    }

    /// Full objective `1/2 * approx_error + penalty`.
    pub fn objective(&self, x: &CoefficientSet) -> f64 {
        0.5 * self.approx_error(x) + self.reg.penalty(x)
    }

    pub fn diagnostics(&self, x: &CoefficientSet, iterations: usize, converged: bool) -> EncodeDiagnostics {
        let tol = default_zero_tol(x);
        EncodeDiagnostics {
            sparsity_ratio: sparsity_ratio(x, tol),
            common_support_pct: overlap_pct(x, tol),
            approx_error: self.approx_error(x),
            iterations,
            converged,
        }
    }

    /// Runs ADMM from `state` and packages the result.
    pub fn solve_from(&self, mut state: AdmmState) -> Encoding {
        let start = state.iter;
        let converged = self.run(&mut state);
        let history = if self.opts.record_history {
            state
                .primal_res
                .iter()
                .zip(&state.dual_res)
                .map(|(&primal, &dual)| Residuals { primal, dual })
                .collect()
        } else {
            Vec::new()
        };
        let diagnostics = self.diagnostics(&state.x, state.iter - start, converged);
        Encoding {
            coefficients: state.x,
            diagnostics,
            history,
        }
    }

    pub fn solve(&self) -> Encoding {
        self.solve_from(self.initial_state())
    }
}

fn synthesize(fft: &RealFft2, d: &DictSpectra, maps: ArrayView3<f64>) -> Plane {
    let (_, h, w) = maps.dim();
    let bins = fft.bins();
    let mut acc = vec![Complex64::new(0.0, 0.0); bins];
    let mut xhat = vec![Complex64::new(0.0, 0.0); bins];
    for (map, dk) in maps.outer_iter().zip(d.spectra.chunks_exact(bins)) {
        fft.forward(map.as_standard_layout().as_slice().expect("standard layout"), &mut xhat);
        for ((a, x), dv) in acc.iter_mut().zip(&xhat).zip(dk) {
            *a += x * dv;
        }
    }
    let mut out = Plane::zeros((h, w));
    fft.inverse(&mut acc, out.as_slice_mut().expect("standard layout"));
    out
}

fn squared_distance(a: &Plane, b: &Plane) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y))
}

/// Solves the CSSA problem for `signals` with ADMM from a zero start.
pub fn encode(signals: &[Plane], dicts: &[Dictionary], reg: Regularizer, opts: SolverOptions) -> Result<Encoding> {
    Ok(Encoder::new(signals, dicts, reg, opts)?.solve())
}

fn check_dicts_for(x: &CoefficientSet, dicts: &[Dictionary]) -> Result<()> {
    let n = x.signals();
    if dicts.is_empty() || (dicts.len() != 1 && dicts.len() != n) {
        return Err(CssaError::Inconsistent(format!(
            "expected 1 or {n} dictionaries, got {}",
            dicts.len()
        )));
    }
    for d in dicts {
        if d.len() != x.filters() {
            return Err(CssaError::Inconsistent(format!(
                "dictionary has {} filters, coefficients have {}",
                d.len(),
                x.filters()
            )));
        }
    }
    Ok(())
}

/// Per-signal sum of circular convolutions `sum_k D_k * X_k^(n)`.
pub fn reconstruct(x: &CoefficientSet, dicts: &[Dictionary]) -> Result<Vec<Plane>> {
    check_dicts_for(x, dicts)?;
    let (h, w) = x.grid();
    let fft = RealFft2::new(h, w);
    let spectra = dicts
        .iter()
        .map(|d| DictSpectra::new(d, &fft))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..x.signals())
        .map(|n| {
            let d = if spectra.len() == 1 { &spectra[0] } else { &spectra[n] };
            synthesize(&fft, d, x.signal_maps(n))
        })
        .collect())
}

/// `sum_n ||reconstruct(X)^(n) - s^(n)||^2`.
pub fn approx_error(signals: &[Plane], x: &CoefficientSet, dicts: &[Dictionary]) -> Result<f64> {
    if signals.len() != x.signals() {
        return Err(CssaError::Inconsistent(format!(
            "{} signals for {} coefficient sets",
            signals.len(),
            x.signals()
        )));
    }
    let recon = reconstruct(x, dicts)?;
    let mut total = 0.0;
    for (r, s) in recon.iter().zip(signals) {
        check_same_shape("approx_error", r.dim(), s.dim())?;
        total += squared_distance(r, s);
    }
    Ok(total)
}

/// Zero threshold used by the diagnostics: `1e-8 * max|X|`.
pub fn default_zero_tol(x: &CoefficientSet) -> f64 {
    1e-8 * x.max_abs()
}

/// Fraction of entries with `|x| > zero_tol`.
pub fn sparsity_ratio(x: &CoefficientSet, zero_tol: f64) -> f64 {
    let nnz = x.maps.iter().filter(|v| v.abs() > zero_tol).count();
    nnz as f64 / x.maps.len() as f64
}

fn overlap_pct(x: &CoefficientSet, zero_tol: f64) -> f64 {
    let (n, k, h, w) = x.maps.dim();
    let mut inter = 0usize;
    let mut union = 0usize;
    for kk in 0..k {
        for i in 0..h {
            for j in 0..w {
                let count = (0..n)
                    .filter(|&nn| x.maps[[nn, kk, i, j]].abs() > zero_tol)
                    .count();
                if count > 0 {
                    union += 1;
                }
                if count == n {
                    inter += 1;
                }
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        100.0 * inter as f64 / union as f64
    }
}

/// `100 * |intersection of supports| / |union of supports|` over all (k, p) sites.
pub fn support_overlap(x: &CoefficientSet, zero_tol: f64) -> Result<f64> {
    if x.signals() < 2 {
        return Err(CssaError::InvalidParameter(
            "support overlap needs at least two signals".into(),
        ));
    }
    Ok(overlap_pct(x, zero_tol))
}

/// Shrinks every entry of `w` independently; the `L1` X-update.
pub fn soft_threshold_all(w: &CoefficientSet, tau: f64) -> CoefficientSet {
    CoefficientSet {
        maps: w.maps.mapv(|v| shrink(v, tau)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Fft2;
    use ndarray::{array, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn impulse_dict() -> Dictionary {
        Dictionary::new(vec![array![[1.0]]]).unwrap()
    }

    fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane {
        Plane::from_shape_fn((h, w), |_| rng.random_range(-1.0..1.0))
    }

    fn random_dict(rng: &mut ChaCha8Rng, k: usize, q: usize) -> Dictionary {
        let filters = (0..k)
            .map(|_| {
                let f = Plane::from_shape_fn((q, q), |_| rng.random_range(-1.0..1.0));
                let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
                f / n
            })
            .collect();
        Dictionary::new(filters).unwrap()
    }

    #[test]
    fn structure_names_round_trip() {
        for s in Structure::ALL {
            assert_eq!(s.name().parse::<Structure>().unwrap(), s);
        }
        assert!("l3".parse::<Structure>().is_err());
    }

    #[test]
    fn y_update_identity_filter_averages() {
        let fft = Fft2::new(4, 4);
        let spectra = impulse_dict().spectra(&fft).unwrap();
        let s = Plane::ones((4, 4));
        let z = vec![Plane::ones((4, 4))];
        let y = y_update(&s, &z, &spectra, 1.0).unwrap();
        assert!(y[0].iter().all(|v| (v - 1.0).abs() < 1e-12));

        let s = Plane::from_elem((4, 4), 3.0);
        let y = y_update(&s, &[Plane::from_elem((4, 4), 1.0)], &spectra, 1.0).unwrap();
        assert!(y[0].iter().all(|v| (v - 2.0).abs() < 1e-12));

        let zero = y_update(&Plane::zeros((4, 4)), &[Plane::zeros((4, 4))], &spectra, 1.0).unwrap();
        assert!(zero[0].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn x_update_l21_row() {
        let mut maps = Array4::zeros((2, 1, 2, 2));
        maps[[0, 0, 1, 0]] = 3.0;
        maps[[1, 0, 1, 0]] = 4.0;
        let w = CoefficientSet::from_array(maps).unwrap();
        let x = x_update(&w, &Regularizer::l21(2.0), 2.0);
        assert!((x.as_array()[[0, 0, 1, 0]] - 2.4).abs() < 1e-14);
        assert!((x.as_array()[[1, 0, 1, 0]] - 3.2).abs() < 1e-14);
    }

    #[test]
    fn x_update_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = CoefficientSet::from_array(Array4::from_shape_fn((1, 2, 3, 3), |_| rng.random_range(-1.0..1.0)))
            .unwrap();
        let rho = 4.0;
        let group = x_update(&one, &Regularizer::l21(1.0), rho);
        let elem = x_update(&one, &Regularizer::l1(1.0), rho);
        assert!(group
            .as_array()
            .iter()
            .zip(elem.as_array())
            .all(|(a, b)| (a - b).abs() < 1e-15));

        let many = CoefficientSet::from_array(Array4::from_shape_fn((3, 2, 3, 3), |_| rng.random_range(-1.0..1.0)))
            .unwrap();
        let mixed = x_update(&many, &Regularizer::l1_l21(0.8, 0.0), rho);
        assert_eq!(mixed, soft_threshold_all(&many, 0.2));
        assert_eq!(mixed, x_update(&many, &Regularizer::l1(0.8), rho));
    }

    #[test]
    fn unregularized_impulse_reproduces_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let signals = vec![random_plane(&mut rng, 8, 8), random_plane(&mut rng, 8, 8)];
        let opts = SolverOptions {
            tol_primal: 1e-10,
            tol_dual: 1e-10,
            max_iter: 500,
            ..Default::default()
        };
        let enc = encode(&signals, &[impulse_dict()], Regularizer::l1(0.0), opts).unwrap();
        assert!(enc.diagnostics.converged);
        for (n, s) in signals.iter().enumerate() {
            let x = enc.coefficients.map(n, 0);
            assert!(x.iter().zip(s.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
        }
        assert!(enc.diagnostics.approx_error < 1e-12);
    }

    #[test]
    fn l21_yields_identical_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dict = random_dict(&mut rng, 3, 3);
        let a = random_plane(&mut rng, 12, 12);
        let b = &a * 0.5 + random_plane(&mut rng, 12, 12) * 0.5;
        let enc = encode(&[a, b], &[dict], Regularizer::l21(0.1), SolverOptions::default()).unwrap();
        assert!(enc.diagnostics.sparsity_ratio > 0.0);
        assert_eq!(enc.diagnostics.common_support_pct, 100.0);
    }

    #[test]
    fn support_overlap_fixtures() {
        let mut maps = Array4::zeros((2, 1, 2, 2));
        maps[[0, 0, 0, 0]] = 1.0;
        maps[[1, 0, 0, 0]] = -1.0;
        maps[[1, 0, 0, 1]] = 2.0;
        let x = CoefficientSet::from_array(maps.clone()).unwrap();
        assert_eq!(support_overlap(&x, 0.0).unwrap(), 50.0);
        maps[[0, 0, 0, 1]] = 1.0;
        assert_eq!(support_overlap(&CoefficientSet::from_array(maps).unwrap(), 0.0).unwrap(), 100.0);

        let mut disjoint = Array4::zeros((2, 1, 2, 2));
        disjoint[[0, 0, 0, 0]] = 1.0;
        disjoint[[1, 0, 1, 1]] = 1.0;
        assert_eq!(support_overlap(&CoefficientSet::from_array(disjoint).unwrap(), 0.0).unwrap(), 0.0);
        assert_eq!(support_overlap(&CoefficientSet::zeros(2, 1, 2, 2), 0.0).unwrap(), 0.0);
        assert!(support_overlap(&CoefficientSet::zeros(1, 1, 2, 2), 0.0).is_err());
    }

    #[test]
    fn sparsity_and_error_fixtures() {
        let mut x = CoefficientSet::zeros(1, 1, 10, 10);
        assert_eq!(sparsity_ratio(&x, 0.0), 0.0);
        x.map_mut(0, 0)[[3, 4]] = 0.5;
        assert!((sparsity_ratio(&x, 0.0) - 0.01).abs() < 1e-15);

        let s = Plane::from_elem((10, 10), 0.2);
        let zero = CoefficientSet::zeros(1, 1, 10, 10);
        let err = approx_error(&[s.clone()], &zero, &[impulse_dict()]).unwrap();
        assert!((err - 100.0 * 0.04).abs() < 1e-12);
        let mut exact = CoefficientSet::zeros(1, 1, 10, 10);
        exact.map_mut(0, 0).assign(&s);
        assert!(approx_error(&[s], &exact, &[impulse_dict()]).unwrap() < 1e-24);
    }

    #[test]
    fn reconstruct_unit_impulse_gives_padded_filter() {
        let d = Dictionary::new(vec![array![[1.0, 2.0], [3.0, 4.0]], array![[0.5, 0.0], [0.0, -0.5]]]).unwrap();
        let mut x = CoefficientSet::zeros(1, 2, 5, 5);
        x.map_mut(0, 1)[[0, 0]] = 1.0;
        let r = reconstruct(&x, &[d.clone()]).unwrap();
        let expected = crate::spectral::pad_filter(d.filter(1), 5, 5).unwrap();
        assert!(r[0].iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-14));
        let zero = reconstruct(&CoefficientSet::zeros(2, 2, 5, 5), &[d.clone(), d]).unwrap();
        assert!(zero.iter().all(|p| p.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn encode_rejects_bad_inputs() {
        let d = impulse_dict();
        let sigs = vec![Plane::zeros((4, 4)), Plane::zeros((4, 5))];
        assert!(matches!(
            encode(&sigs, &[d.clone()], Regularizer::l1(0.1), SolverOptions::default()),
            Err(CssaError::ShapeMismatch { .. })
        ));
        let big = Dictionary::new(vec![Plane::zeros((5, 5))]).unwrap();
        assert!(matches!(
            encode(&[Plane::zeros((4, 4))], &[big], Regularizer::l1(0.1), SolverOptions::default()),
            Err(CssaError::FilterTooLarge { .. })
        ));
        let opts = SolverOptions { rho: 0.0, ..Default::default() };
        assert!(encode(&[Plane::zeros((4, 4))], &[d], Regularizer::l1(0.1), opts).is_err());
    }
}

//! Batch convolutional dictionary learning, single- and multimodal.
//!
//! Alternates a joint sparse-coding pass over all training sets with one
//! independent filter update per modality. Filters live in the unit ball and
//! have support `q x q`.

use ndarray::ArrayView3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dictionary::{Dictionary, DictionarySet};
use crate::error::{check_same_shape, CssaError, Result};
use crate::fusion::lowpass_decompose;
use crate::solver::{approx_error, AdmmState, CoefficientSet, Encoder, Regularizer, SolverOptions};
use crate::spectral::{crop_filter, pad_filter, Filter, Plane, RealFft2};

/// Crops `g` to its top-left `q x q` block and scales it into the unit ball.
pub fn project_dictionary(g: &Plane, q: usize) -> Result<Filter> {
    let mut f = crop_filter(g, q)?;
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        f /= norm;
    }
    Ok(f)
}

/// `K` filters of side `q` with i.i.d. standard normal entries, projected onto the unit ball.
pub fn init_dictionary(filters: usize, side: usize, seed: u64) -> Result<Dictionary> {
    if filters == 0 || side == 0 {
        return Err(CssaError::InvalidParameter("filter count and side must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list = (0..filters)
        .map(|_| {
            let g = Plane::from_shape_simple_fn((side, side), || StandardNormal.sample(&mut rng));
            project_dictionary(&g, side)
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::new(list)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictUpdateOptions {
    pub rho: f64,
    pub iters: usize,
}

impl Default for DictUpdateOptions {
    fn default() -> Self {
        Self { rho: 1.0, iters: 10 }
    }
}

/// Minimizes `sum_t 1/2 ||sum_k d_k * X_k^(t) - s^(t)||^2` over unit-ball filters
/// of the same side as `prev`, by ADMM warm-started at `prev`.
///
/// Returns `prev` unchanged unless the update strictly lowers the objective.
pub fn dict_update(
    signals: &[Plane],
    coeffs: &[ArrayView3<f64>],
    prev: &Dictionary,
    opts: &DictUpdateOptions,
) -> Result<Dictionary> {
    if signals.is_empty() || signals.len() != coeffs.len() {
        return Err(CssaError::Inconsistent(format!(
            "{} training signals for {} coefficient sets",
            signals.len(),
            coeffs.len()
        )));
    }
    if !(opts.rho > 0.0) {
        return Err(CssaError::InvalidParameter("dictionary rho must be positive".into()));
    }
    let (h, w) = signals[0].dim();
    let k = prev.len();
    for (s, x) in signals.iter().zip(coeffs) {
        check_same_shape("dictionary update signals", (h, w), s.dim())?;
        let (kx, hx, wx) = x.dim();
        check_same_shape("dictionary update coefficients", (h, w), (hx, wx))?;
        if kx != k {
            return Err(CssaError::Inconsistent(format!(
                "coefficients for {kx} filters, dictionary has {k}"
            )));
        }
    }
    prev.fits(h, w)?;
    let problem = DictProblem::new(signals, coeffs, k, opts.rho)?;
    let q = prev.side();
    let p = h * w;
    let bins = problem.fft.bins();

    let mut g: Vec<f64> = Vec::with_capacity(k * p);
    for f in prev.filters() {
        g.extend(pad_filter(f, h, w)?.iter());
    }
    let start = g.clone();
    let mut u = vec![0.0; k * p];
    let mut d = vec![0.0; k * p];
    let mut spec = vec![Complex64::new(0.0, 0.0); k * bins];
    let mut tmp = vec![0.0; p];
    for _ in 0..opts.iters {
        for kk in 0..k {
            let r = kk * p..(kk + 1) * p;
            for ((t, gv), uv) in tmp.iter_mut().zip(&g[r.clone()]).zip(&u[r]) {
                *t = gv - uv;
            }
            problem.fft.forward(&tmp, &mut spec[kk * bins..(kk + 1) * bins]);
        }
        problem.solve(&mut spec);
        for kk in 0..k {
            problem
                .fft
                .inverse(&mut spec[kk * bins..(kk + 1) * bins], &mut d[kk * p..(kk + 1) * p]);
        }
        for kk in 0..k {
            let r = kk * p..(kk + 1) * p;
            let v = Plane::from_shape_fn((h, w), |(i, j)| d[kk * p + i * w + j] + u[kk * p + i * w + j]);
            let f = project_dictionary(&v, q)?;
            let padded = pad_filter(&f, h, w)?;
            for (gv, pv) in g[r.clone()].iter_mut().zip(padded.iter()) {
                *gv = *pv;
            }
            for ((uv, dv), gv) in u[r.clone()].iter_mut().zip(&d[r.clone()]).zip(&g[r]) {
                *uv += dv - gv;
            }
        }
    }
    if !(problem.objective(&g) < problem.objective(&start)) {
        return Ok(prev.clone());
    }
    let filters = (0..k)
        .map(|kk| {
            let v = Plane::from_shape_vec((h, w), g[kk * p..(kk + 1) * p].to_vec()).expect("length matches");
            crop_filter(&v, q)
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::new(filters)
}

// Frequency-domain data of one filter-update problem. Per bin the quadratic
// step solves (sum_t a_t a_t^H + rho I) d = sum_t a_t s_t + rho v with
// a_t = conj(X_t). The inverse is applied by iterated Sherman-Morrison:
// A_j^{-1} = A_{j-1}^{-1} - beta_j c_j c_j^H with c_j = A_{j-1}^{-1} a_j and
// beta_j = 1 / (1 + a_j^H c_j).
struct DictProblem {
    fft: RealFft2,
    filters: usize,
    rho: f64,
    // X_t per (t, k) and s_t per t, half spectra
    xhat: Vec<Complex64>,
    shat: Vec<Complex64>,
    // sum_t a_t s_t per (k, bin)
    rhs: Vec<Complex64>,
    // c_j per (j, k, bin) and beta_j per (j, bin)
    c: Vec<Complex64>,
    beta: Vec<f64>,
}

impl DictProblem {
    fn new(signals: &[Plane], coeffs: &[ArrayView3<f64>], k: usize, rho: f64) -> Result<Self> {
        let (h, w) = signals[0].dim();
        let fft = RealFft2::new(h, w);
        let bins = fft.bins();
        let t_count = signals.len();
        let mut xhat = vec![Complex64::new(0.0, 0.0); t_count * k * bins];
        let mut shat = vec![Complex64::new(0.0, 0.0); t_count * bins];
        for (t, (s, x)) in signals.iter().zip(coeffs).enumerate() {
            fft.forward(
                s.as_standard_layout().as_slice().expect("standard layout"),
                &mut shat[t * bins..(t + 1) * bins],
            );
            for (kk, map) in x.outer_iter().enumerate() {
                let off = (t * k + kk) * bins;
                fft.forward(
                    map.as_standard_layout().as_slice().expect("standard layout"),
                    &mut xhat[off..off + bins],
                );
            }
        }
        let mut rhs = vec![Complex64::new(0.0, 0.0); k * bins];
        for t in 0..t_count {
            for kk in 0..k {
                let xs = &xhat[(t * k + kk) * bins..(t * k + kk + 1) * bins];
                let ss = &shat[t * bins..(t + 1) * bins];
                for ((r, x), s) in rhs[kk * bins..(kk + 1) * bins].iter_mut().zip(xs).zip(ss) {
                    *r += x.conj() * s;
                }
            }
        }

        let mut c = vec![Complex64::new(0.0, 0.0); t_count * k * bins];
        let mut beta = vec![0.0; t_count * bins];
        let mut dot = vec![Complex64::new(0.0, 0.0); bins];
        for j in 0..t_count {
            // c_j = a_j / rho - sum_{i<j} beta_i c_i (c_i^H a_j)
            for kk in 0..k {
                let off = (j * k + kk) * bins;
                for f in 0..bins {
                    c[off + f] = xhat[off + f].conj() / rho;
                }
            }
            for i in 0..j {
                dot.fill(Complex64::new(0.0, 0.0));
                for kk in 0..k {
                    let (ci, aj) = ((i * k + kk) * bins, (j * k + kk) * bins);
                    for f in 0..bins {
                        dot[f] += c[ci + f].conj() * xhat[aj + f].conj();
                    }
                }
                for kk in 0..k {
                    let (ci, cj) = ((i * k + kk) * bins, (j * k + kk) * bins);
                    for f in 0..bins {
                        let delta = c[ci + f] * dot[f] * beta[i * bins + f];
                        c[cj + f] -= delta;
                    }
                }
            }
            // a_j^H c_j is real and nonnegative for the Hermitian positive definite A
            let mut quad = vec![0.0; bins];
            for kk in 0..k {
                let off = (j * k + kk) * bins;
                for f in 0..bins {
                    quad[f] += (xhat[off + f] * c[off + f]).re;
                }
            }
            for f in 0..bins {
                beta[j * bins + f] = 1.0 / (1.0 + quad[f]);
            }
        }
        Ok(Self {
            fft,
            filters: k,
            rho,
            xhat,
            shat,
            rhs,
            c,
            beta,
        })
    }

    fn samples(&self) -> usize {
        self.beta.len() / self.fft.bins()
    }

    // `v` holds the spectra of the ADMM target on entry and the solution on exit.
    fn solve(&self, v: &mut [Complex64]) {
        let bins = self.fft.bins();
        let k = self.filters;
        for (b, r) in v.iter_mut().zip(&self.rhs) {
            *b = (*r + *b * self.rho) / self.rho;
        }
        // v = A_{i-1}^{-1} b, and c_i^H b = a_i^H A_{i-1}^{-1} b
        let mut dot = vec![Complex64::new(0.0, 0.0); bins];
        for i in 0..self.samples() {
            dot.fill(Complex64::new(0.0, 0.0));
            for kk in 0..k {
                let ai = (i * k + kk) * bins;
                for f in 0..bins {
                    dot[f] += self.xhat[ai + f] * v[kk * bins + f];
                }
            }
            for kk in 0..k {
                let ci = (i * k + kk) * bins;
                for f in 0..bins {
                    v[kk * bins + f] -= self.c[ci + f] * dot[f] * self.beta[i * bins + f];
                }
            }
        }
    }

    // sum_t 1/2 ||sum_k d_k * X_k^(t) - s^(t)||^2 for padded filters `g`.
    fn objective(&self, g: &[f64]) -> f64 {
        let bins = self.fft.bins();
        let p = g.len() / self.filters;
        let k = self.filters;
        let mut dhat = vec![Complex64::new(0.0, 0.0); k * bins];
        for kk in 0..k {
            self.fft
                .forward(&g[kk * p..(kk + 1) * p], &mut dhat[kk * bins..(kk + 1) * bins]);
        }
        let mut total = 0.0;
        let mut r = vec![Complex64::new(0.0, 0.0); bins];
        for t in 0..self.samples() {
            for (rv, s) in r.iter_mut().zip(&self.shat[t * bins..(t + 1) * bins]) {
                *rv = -s;
            }
            for kk in 0..k {
                let xs = &self.xhat[(t * k + kk) * bins..(t * k + kk + 1) * bins];
                for ((rv, x), d) in r.iter_mut().zip(xs).zip(&dhat[kk * bins..(kk + 1) * bins]) {
                    *rv += x * d;
                }
            }
            total += 0.5 * self.fft.energy(&r);
        }
        total
    }
}

/// `T` training sets of `N` registered planes each, modalities in a fixed order.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    samples: Vec<Vec<Plane>>,
}

impl TrainingBatch {
    pub fn new(samples: Vec<Vec<Plane>>) -> Result<Self> {
        let first = samples
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| CssaError::InvalidParameter("training batch is empty".into()))?;
        let dim = first.dim();
        let n = samples[0].len();
        for set in &samples {
            if set.len() != n {
                return Err(CssaError::Inconsistent(format!(
                    "training sets have {} and {} modalities",
                    n,
                    set.len()
                )));
            }
            for p in set {
                check_same_shape("training batch", dim, p.dim())?;
            }
        }
        Ok(Self { samples })
    }

    pub fn sets(&self) -> usize {
        self.samples.len()
    }

    pub fn modalities(&self) -> usize {
        self.samples[0].len()
    }

    pub fn set(&self, t: usize) -> &[Plane] {
        &self.samples[t]
    }

    /// All samples of modality `n`, in set order.
    pub fn modality(&self, n: usize) -> Vec<Plane> {
        self.samples.iter().map(|s| s[n].clone()).collect()
    }

    fn map(&self, f: impl Fn(&Plane) -> Result<Plane>) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|set| set.iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdlOptions {
    pub filters: usize,
    pub side: usize,
    pub outer_iters: usize,
    pub regularizer: Regularizer,
    pub sparse: SolverOptions,
    pub dict: DictUpdateOptions,
    pub seed: u64,
    /// Learn on the detail band of each sample (lowpass regularization), or on the raw samples.
    pub highpass: Option<f64>,
}

impl Default for CdlOptions {
    fn default() -> Self {
        Self {
            filters: 32,
            side: 8,
            outer_iters: 20,
            regularizer: Regularizer::l1_l21(0.001, 0.01),
            sparse: SolverOptions::default(),
            dict: DictUpdateOptions::default(),
            seed: 0,
            highpass: Some(5.0),
        }
    }
}

impl CdlOptions {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.side == 0 || self.outer_iters == 0 || self.dict.iters == 0 {
            return Err(CssaError::InvalidParameter(
                "filter count, side and iteration counts must be positive".into(),
            ));
        }
        if !(self.dict.rho > 0.0) {
            return Err(CssaError::InvalidParameter("dictionary rho must be positive".into()));
        }
        self.regularizer.validate()?;
        self.sparse.validate()
    }
}

/// Result of [`learn`].
#[derive(Debug, Clone)]
pub struct Learned {
    pub dictionaries: DictionarySet,
    /// Objective after each alternation.
    pub objective: Vec<f64>,
}

/// Alternating learner; [`Learner::step`] runs one encode/update alternation.
#[derive(Debug, Clone)]
pub struct Learner {
    batch: TrainingBatch,
    dicts: Vec<Dictionary>,
    states: Vec<Option<AdmmState>>,
    opts: CdlOptions,
    objective: Vec<f64>,
}

impl Learner {
    pub fn new(batch: &TrainingBatch, opts: CdlOptions) -> Result<Self> {
        opts.validate()?;
        let batch = match opts.highpass {
            Some(reg) => batch.map(|p| Ok(lowpass_decompose(p, reg)?.high))?,
            None => batch.clone(),
        };
        let init = init_dictionary(opts.filters, opts.side, opts.seed)?;
        let (h, w) = batch.set(0)[0].dim();
        init.fits(h, w)?;
        Ok(Self {
            dicts: vec![init; batch.modalities()],
            states: vec![None; batch.sets()],
            batch,
            opts,
            objective: Vec::new(),
        })
    }

    /// The (possibly highpass-filtered) signals being learned from.
    pub fn training(&self) -> &TrainingBatch {
        &self.batch
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dicts
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn options(&self) -> &CdlOptions {
        &self.opts
    }

    /// Jointly encodes every training set with the current dictionaries,
    /// warm-starting from the previous alternation.
    pub fn encode_batch(&mut self) -> Result<Vec<CoefficientSet>> {
        let mut out = Vec::with_capacity(self.batch.sets());
        for t in 0..self.batch.sets() {
            let enc = Encoder::new(self.batch.set(t), &self.dicts, self.opts.regularizer, self.opts.sparse)?;
            let mut state = self.states[t].take().unwrap_or_else(|| enc.initial_state());
            state.primal_res.clear();
            state.dual_res.clear();
            enc.run(&mut state);
            out.push(state.x.clone());
            self.states[t] = Some(state);
        }
        Ok(out)
    }

    /// One independent filter update per modality, then records the objective.
    pub fn update(&mut self, coeffs: &[CoefficientSet]) -> Result<f64> {
        if coeffs.len() != self.batch.sets() {
            return Err(CssaError::Inconsistent(format!(
                "{} coefficient sets for {} training sets",
                coeffs.len(),
                self.batch.sets()
            )));
        }
        for n in 0..self.batch.modalities() {
            let signals = self.batch.modality(n);
            let maps: Vec<ArrayView3<f64>> = coeffs.iter().map(|x| x.signal_maps(n)).collect();
            self.dicts[n] = dict_update(&signals, &maps, &self.dicts[n], &self.opts.dict)?;
        }
        let value = self.evaluate(coeffs)?;
        self.objective.push(value);
        Ok(value)
    }

    /// `1/T sum_t (1/2 sum_n ||sum_k D_k^(n) * X_k^(t,n) - s^(t,n)||^2 + R(X^(t)))`.
    pub fn evaluate(&self, coeffs: &[CoefficientSet]) -> Result<f64> {
        let mut total = 0.0;
        for (t, x) in coeffs.iter().enumerate() {
            total += 0.5 * approx_error(self.batch.set(t), x, &self.dicts)? + self.opts.regularizer.penalty(x);
        }
        Ok(total / coeffs.len() as f64)
    }

    pub fn step(&mut self) -> Result<f64> {
        let coeffs = self.encode_batch()?;
        self.update(&coeffs)
    }

    pub fn finish(self) -> Result<Learned> {
        Ok(Learned {
            dictionaries: DictionarySet::new(self.dicts)?,
            objective: self.objective,
        })
    }
}

/// Learns one dictionary per modality of `batch`.
pub fn learn(batch: &TrainingBatch, opts: CdlOptions) -> Result<Learned> {
    let mut learner = Learner::new(batch, opts)?;
    for _ in 0..opts.outer_iters {
        learner.step()?;
    }
    learner.finish()
}

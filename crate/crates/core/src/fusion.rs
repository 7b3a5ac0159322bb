//! NIR/visible and multifocus image fusion.
//!
//! Both pipelines split each input into a smooth low band and a detail band,
//! sparse-code the detail bands jointly, pick the dominant coefficient at every
//! site and synthesize the fused detail band.

use ndarray::{Array3, ArrayView3, ArrayView4, Zip};
use num_complex::Complex64;

use crate::dictionary::{Dictionary, DictionarySet};
use crate::error::{check_same_shape, CssaError, Result};
use crate::solver::{reconstruct, CoefficientSet, EncodeDiagnostics, Encoder, Regularizer, SolverOptions, Structure};
use crate::spectral::{Plane, RealFft2};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const CB_SCALE: f64 = 0.564;
const CR_SCALE: f64 = 0.713;

/// Colour image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    channels: [Plane; 3],
}

impl RgbImage {
    pub fn new(red: Plane, green: Plane, blue: Plane) -> Result<Self> {
        check_same_shape("rgb channels", red.dim(), green.dim())?;
        check_same_shape("rgb channels", red.dim(), blue.dim())?;
        Ok(Self {
            channels: [red, green, blue],
        })
    }

    /// From an `H x W x 3` array.
    pub fn from_array(a: ArrayView3<f64>) -> Result<Self> {
        let (h, _, c) = a.dim();
        if c != 3 {
            return Err(CssaError::ShapeMismatch {
                context: "rgb image channels",
                expected: (h, 3),
                found: (h, c),
            });
        }
        let ch = |i: usize| a.index_axis(ndarray::Axis(2), i).to_owned();
        Self::new(ch(0), ch(1), ch(2))
    }

    pub fn to_array(&self) -> Array3<f64> {
        let (h, w) = self.dim();
        Array3::from_shape_fn((h, w, 3), |(i, j, c)| self.channels[c][[i, j]])
    }

    pub fn dim(&self) -> (usize, usize) {
        self.channels[0].dim()
    }

    pub fn channel(&self, c: usize) -> &Plane {
        &self.channels[c]
    }

    pub fn red(&self) -> &Plane {
        &self.channels[0]
    }

    pub fn green(&self) -> &Plane {
        &self.channels[1]
    }

    pub fn blue(&self) -> &Plane {
        &self.channels[2]
    }

    pub fn clamped(&self) -> Self {
        Self {
            channels: self.channels.clone().map(|c| c.mapv(|v| v.clamp(0.0, 1.0))),
        }
    }
}

/// Full-range YCbCr image; chroma is centred on 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct YcbcrImage {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

pub fn rgb_to_ycbcr(img: &RgbImage) -> YcbcrImage {
    let (r, g, b) = (img.red(), img.green(), img.blue());
    let y = Zip::from(r).and(g).and(b).map_collect(|&r, &g, &b| KR * r + KG * g + KB * b);
    let cb = Zip::from(b).and(&y).map_collect(|&b, &y| 0.5 + (b - y) * CB_SCALE);
    let cr = Zip::from(r).and(&y).map_collect(|&r, &y| 0.5 + (r - y) * CR_SCALE);
    YcbcrImage { y, cb, cr }
}

/// Exact inverse of [`rgb_to_ycbcr`], without clamping.
pub fn ycbcr_to_rgb_unclamped(img: &YcbcrImage) -> RgbImage {
    let r = Zip::from(&img.y).and(&img.cr).map_collect(|&y, &cr| y + (cr - 0.5) / CR_SCALE);
    let b = Zip::from(&img.y).and(&img.cb).map_collect(|&y, &cb| y + (cb - 0.5) / CB_SCALE);
    let g = Zip::from(&img.y)
        .and(&r)
        .and(&b)
        .map_collect(|&y, &r, &b| (y - KR * r - KB * b) / KG);
    RgbImage { channels: [r, g, b] }
}

/// [`ycbcr_to_rgb_unclamped`] followed by clamping to `[0, 1]`.
pub fn ycbcr_to_rgb(img: &YcbcrImage) -> RgbImage {
    ycbcr_to_rgb_unclamped(img).clamped()
}

/// Luma of an RGB image.
pub fn luma(img: &RgbImage) -> Plane {
    rgb_to_ycbcr(img).y
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandDecomposition {
    pub low: Plane,
    pub high: Plane,
}

/// Splits `p` into `low = argmin 1/2||x - p||^2 + reg/2 (||Gx x||^2 + ||Gy x||^2)`
/// (circular first differences) and `high = p - low`.
pub fn lowpass_decompose(p: &Plane, reg: f64) -> Result<BandDecomposition> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(CssaError::InvalidParameter(format!(
            "lowpass regularization must be positive, got {reg}"
        )));
    }
    let (h, w) = p.dim();
    let fft = RealFft2::new(h, w);
    let mut spec = vec![Complex64::new(0.0, 0.0); fft.bins()];
    fft.forward(p.as_standard_layout().as_slice().expect("standard layout"), &mut spec);
    let gain = |n: usize, len: usize| {
        let s = (std::f64::consts::PI * n as f64 / len as f64).sin();
        4.0 * s * s
    };
    for (c, col) in spec.chunks_exact_mut(h).enumerate() {
        let gx = gain(c, w);
        for (r, v) in col.iter_mut().enumerate() {
            *v /= 1.0 + reg * (gx + gain(r, h));
        }
    }
    let mut low = Plane::zeros((h, w));
    fft.inverse(&mut spec, low.as_slice_mut().expect("standard layout"));
    let high = p - &low;
    Ok(BandDecomposition { low, high })
}

/// Coefficient maps after the max-absolute-value rule; at most one of the
/// two is nonzero at every `(k, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCoefficients {
    pub vl: Array3<f64>,
    pub nir: Array3<f64>,
}

/// Keeps the VL coefficient where `|Xv| >= |Xn|` and the NIR coefficient elsewhere.
pub fn fuse_coeffs_maxabs(xv: ArrayView3<f64>, xn: ArrayView3<f64>) -> Result<FusedCoefficients> {
    if xv.dim() != xn.dim() {
        let (a, b) = (xv.dim(), xn.dim());
        return Err(CssaError::ShapeMismatch {
            context: "fused coefficient maps",
            expected: (a.0, a.1 * a.2),
            found: (b.0, b.1 * b.2),
        });
    }
    let mut vl = xv.to_owned();
    let mut nir = xn.to_owned();
    Zip::from(&mut vl).and(&mut nir).for_each(|v, n| {
        if v.abs() >= n.abs() {
            *n = 0.0;
        } else {
            *v = 0.0;
        }
    });
    Ok(FusedCoefficients { vl, nir })
}

/// `sum_k Fv_k * Dv_k + sum_k Fn_k * Dn_k` with `dicts` ordered (VL, NIR).
pub fn reconstruct_fused(f: &FusedCoefficients, dicts: &DictionarySet) -> Result<Plane> {
    let pair = vl_nir_pair(dicts)?;
    let (k, h, w) = f.vl.dim();
    if f.nir.dim() != (k, h, w) {
        return Err(CssaError::Inconsistent("fused coefficient maps differ in shape".into()));
    }
    let mut maps = ndarray::Array4::zeros((2, k, h, w));
    maps.index_axis_mut(ndarray::Axis(0), 0).assign(&f.vl);
    maps.index_axis_mut(ndarray::Axis(0), 1).assign(&f.nir);
    let x = CoefficientSet::from_array(maps)?;
    let parts = reconstruct(&x, pair)?;
    Ok(&parts[0] + &parts[1])
}

fn vl_nir_pair(dicts: &DictionarySet) -> Result<&[Dictionary]> {
    if dicts.modalities() != 2 {
        return Err(CssaError::Inconsistent(format!(
            "NIR-VL fusion needs a (VL, NIR) dictionary pair, got {} modalities",
            dicts.modalities()
        )));
    }
    Ok(dicts.dicts())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NirVlConfig {
    pub regularizer: Regularizer,
    pub solver: SolverOptions,
    pub lowpass_reg: f64,
}

impl Default for NirVlConfig {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::l1_l21(0.001, 0.01),
            solver: SolverOptions::default(),
            lowpass_reg: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NirVlFusion {
    /// Final clamped colour image.
    pub image: RgbImage,
    /// Fused luma with the VL chroma, before conversion and clamping.
    pub ycbcr: YcbcrImage,
    pub coefficients: FusedCoefficients,
    pub diagnostics: EncodeDiagnostics,
}

/// Fuses a visible colour image with a registered NIR plane.
pub fn fuse_nir_vl(vl: &RgbImage, nir: &Plane, dicts: &DictionarySet, cfg: &NirVlConfig) -> Result<NirVlFusion> {
    check_same_shape("NIR-VL inputs", vl.dim(), nir.dim())?;
    let pair = vl_nir_pair(dicts)?;
    let colour = rgb_to_ycbcr(vl);
    let vl_bands = lowpass_decompose(&colour.y, cfg.lowpass_reg)?;
    let nir_bands = lowpass_decompose(nir, cfg.lowpass_reg)?;

    let signals = [vl_bands.high, nir_bands.high];
    let enc = Encoder::new(&signals, pair, cfg.regularizer, cfg.solver)?.solve();
    let x = &enc.coefficients;
    let fused = fuse_coeffs_maxabs(x.signal_maps(0), x.signal_maps(1))?;
    let high = reconstruct_fused(&fused, dicts)?;

    let ycbcr = YcbcrImage {
        y: vl_bands.low + high,
        cb: colour.cb,
        cr: colour.cr,
    };
    Ok(NirVlFusion {
        image: ycbcr_to_rgb(&ycbcr),
        ycbcr,
        coefficients: fused,
        diagnostics: enc.diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultifocusConfig {
    pub structure: Structure,
    pub lambda: f64,
    pub solver: SolverOptions,
    pub lowpass_reg: f64,
}

impl Default for MultifocusConfig {
    fn default() -> Self {
        Self {
            structure: Structure::L21,
            lambda: 0.01,
            solver: SolverOptions::default(),
            lowpass_reg: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultifocusFusion {
    /// Fused greyscale (luma) plane, unclamped.
    pub luma: Plane,
    /// Selected coefficient at every `(k, i, j)`.
    pub selected: Array3<f64>,
    /// Index of the input each selected coefficient came from.
    pub source: Array3<usize>,
    pub diagnostics: EncodeDiagnostics,
}

/// Fuses `N >= 2` registered greyscale planes with one shared dictionary.
pub fn fuse_multifocus(inputs: &[Plane], dict: &Dictionary, cfg: &MultifocusConfig) -> Result<MultifocusFusion> {
    if inputs.len() < 2 {
        return Err(CssaError::InvalidParameter(format!(
            "multifocus fusion needs at least 2 inputs, got {}",
            inputs.len()
        )));
    }
    let dim = inputs[0].dim();
    for p in inputs {
        check_same_shape("multifocus inputs", dim, p.dim())?;
    }
    let bands = inputs
        .iter()
        .map(|p| lowpass_decompose(p, cfg.lowpass_reg))
        .collect::<Result<Vec<_>>>()?;
    let highs: Vec<Plane> = bands.iter().map(|b| b.high.clone()).collect();
    let reg = Regularizer::weighted(cfg.structure, cfg.lambda);
    let enc = Encoder::new(&highs, std::slice::from_ref(dict), reg, cfg.solver)?.solve();
    let x = enc.coefficients.as_array();

    let (selected, source) = select_maxabs(x.view());

    let maps = selected.clone().insert_axis(ndarray::Axis(0));
    let high = reconstruct(&CoefficientSet::from_array(maps)?, std::slice::from_ref(dict))?
        .pop()
        .expect("one signal");
    let mut low = Plane::zeros(dim);
    for b in &bands {
        low += &b.low;
    }
    low /= inputs.len() as f64;
    Ok(MultifocusFusion {
        luma: low + high,
        selected,
        source,
        diagnostics: enc.diagnostics,
    })
}

/// Elementwise max-absolute-value selection across the `N` signals of `x`
/// (shape `(N, K, H, W)`); ties go to the lowest index. Returns the selected
/// coefficients and the winning input index per `(k, i, j)`.
pub fn select_maxabs(x: ArrayView4<f64>) -> (Array3<f64>, Array3<usize>) {
    let (n, k, h, w) = x.dim();
    let mut selected = Array3::zeros((k, h, w));
    let mut source = Array3::zeros((k, h, w));
    Zip::indexed(&mut selected).and(&mut source).for_each(|(kk, i, j), s, src| {
        let mut best = 0;
        for nn in 1..n {
            if x[[nn, kk, i, j]].abs() > x[[best, kk, i, j]].abs() {
                best = nn;
            }
        }
        *s = x[[best, kk, i, j]];
        *src = best;
    });
    (selected, source)
}

/// Colour multifocus fusion: luma is fused by [`fuse_multifocus`]; chroma at
/// each pixel comes from the input whose coefficients win most often among the
/// sites whose filter support covers the pixel, or the mean chroma on a tie.
pub fn fuse_multifocus_rgb(
    inputs: &[RgbImage],
    dict: &Dictionary,
    cfg: &MultifocusConfig,
) -> Result<(RgbImage, MultifocusFusion)> {
    let colours: Vec<YcbcrImage> = inputs.iter().map(rgb_to_ycbcr).collect();
    let lumas: Vec<Plane> = colours.iter().map(|c| c.y.clone()).collect();
    let fusion = fuse_multifocus(&lumas, dict, cfg)?;
    let votes = window_votes(&fusion, inputs.len(), dict.side());
    let (h, w) = fusion.luma.dim();
    let n = inputs.len();
    let mut cb = Plane::zeros((h, w));
    let mut cr = Plane::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let counts: Vec<usize> = (0..n).map(|nn| votes[[nn, i, j]]).collect();
            let top = *counts.iter().max().expect("n >= 2");
            let winners: Vec<usize> = (0..n).filter(|&nn| counts[nn] == top).collect();
            if winners.len() == 1 {
                cb[[i, j]] = colours[winners[0]].cb[[i, j]];
                cr[[i, j]] = colours[winners[0]].cr[[i, j]];
            } else {
                cb[[i, j]] = colours.iter().map(|c| c.cb[[i, j]]).sum::<f64>() / n as f64;
                cr[[i, j]] = colours.iter().map(|c| c.cr[[i, j]]).sum::<f64>() / n as f64;
            }
        }
    }
    let image = ycbcr_to_rgb(&YcbcrImage {
        y: fusion.luma.clone(),
        cb,
        cr,
    });
    Ok((image, fusion))
}

// votes[n, i, j]: nonzero selected coefficients from input n at sites (u, v)
// with i - q < u <= i and j - q < v <= j (circularly), summed over filters.
fn window_votes(fusion: &MultifocusFusion, n: usize, q: usize) -> Array3<usize> {
    let (_, h, w) = fusion.selected.dim();
    let mut site = Array3::<usize>::zeros((n, h, w));
    Zip::indexed(&fusion.selected)
        .and(&fusion.source)
        .for_each(|(_, i, j), &s, &src| {
            if s != 0.0 {
                site[[src, i, j]] += 1;
            }
        });
    let mut votes = Array3::<usize>::zeros((n, h, w));
    for nn in 0..n {
        for i in 0..h {
            for j in 0..w {
                let mut total = 0;
                for du in 0..q.min(h) {
                    for dv in 0..q.min(w) {
                        total += site[[nn, (i + h - du) % h, (j + w - dv) % w]];
                    }
                }
                votes[[nn, i, j]] = total;
            }
        }
    }
    votes
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane {
        Plane::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn ycbcr_fixtures_and_round_trip() {
        let one = Plane::ones((1, 1));
        let zero = Plane::zeros((1, 1));
        let white = rgb_to_ycbcr(&RgbImage::new(one.clone(), one.clone(), one).unwrap());
        assert!((white.y[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((white.cb[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((white.cr[[0, 0]] - 0.5).abs() < 1e-15);
        let black = rgb_to_ycbcr(&RgbImage::new(zero.clone(), zero.clone(), zero).unwrap());
        assert_eq!((black.y[[0, 0]], black.cb[[0, 0]], black.cr[[0, 0]]), (0.0, 0.5, 0.5));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = RgbImage::new(
            random_plane(&mut rng, 9, 7),
            random_plane(&mut rng, 9, 7),
            random_plane(&mut rng, 9, 7),
        )
        .unwrap();
        let back = ycbcr_to_rgb_unclamped(&rgb_to_ycbcr(&img));
        for c in 0..3 {
            let err = (back.channel(c) - img.channel(c)).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn rgb_array_round_trip() {
        let a = Array3::from_shape_fn((2, 3, 3), |(i, j, c)| (i * 9 + j * 3 + c) as f64 / 20.0);
        let img = RgbImage::from_array(a.view()).unwrap();
        assert_eq!(img.to_array(), a);
        assert!(RgbImage::from_array(Array3::zeros((2, 2, 4)).view()).is_err());
    }

    #[test]
    fn lowpass_constant_and_mean() {
        let c = Plane::from_elem((6, 5), 0.3);
        let b = lowpass_decompose(&c, 5.0).unwrap();
        assert!(b.low.iter().all(|v| (v - 0.3).abs() < 1e-15));
        assert!(b.high.iter().all(|v| v.abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_plane(&mut rng, 12, 10);
        let b = lowpass_decompose(&p, 5.0).unwrap();
        assert!((b.low.mean().unwrap() - p.mean().unwrap()).abs() < 1e-14);
        let sum = &b.low + &b.high;
        assert!(Zip::from(&sum).and(&p).all(|a, b| (a - b).abs() <= 1e-12));
        assert!(lowpass_decompose(&p, 0.0).is_err());
    }

    #[test]
    fn lowpass_attenuates_nyquist_by_one_over_41() {
        let p = Plane::from_shape_fn((8, 8), |(i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let b = lowpass_decompose(&p, 5.0).unwrap();
        Zip::from(&b.low).and(&p).for_each(|l, v| assert!((l - v / 41.0).abs() < 1e-14));
    }

    #[test]
    fn maxabs_rule_fixtures() {
        let xv = array![[[2.0, 2.0, 0.5]]];
        let xn = array![[[-3.0, -2.0, 0.0]]];
        let f = fuse_coeffs_maxabs(xv.view(), xn.view()).unwrap();
        assert_eq!(f.vl, array![[[0.0, 2.0, 0.5]]]);
        assert_eq!(f.nir, array![[[-3.0, 0.0, 0.0]]]);
        let zero = Array3::zeros((1, 1, 3));
        let f = fuse_coeffs_maxabs(xv.view(), zero.view()).unwrap();
        assert_eq!(f.vl, xv);
        assert!(fuse_coeffs_maxabs(xv.view(), Array3::zeros((1, 1, 2)).view()).is_err());
    }

    #[test]
    fn zero_fused_maps_reconstruct_to_zero() {
        let d = Dictionary::new(vec![array![[0.5, 0.5], [0.5, -0.5]]]).unwrap();
        let set = DictionarySet::new(vec![d.clone(), d]).unwrap();
        let f = FusedCoefficients {
            vl: Array3::zeros((1, 4, 4)),
            nir: Array3::zeros((1, 4, 4)),
        };
        assert!(reconstruct_fused(&f, &set).unwrap().iter().all(|&v| v == 0.0));
        let single = DictionarySet::single(Dictionary::new(vec![array![[1.0]]]).unwrap());
        assert!(reconstruct_fused(&f, &single).is_err());
    }

    #[test]
    fn multifocus_needs_two_inputs() {
        let d = Dictionary::new(vec![array![[1.0]]]).unwrap();
        let p = Plane::zeros((4, 4));
        assert!(fuse_multifocus(&[p.clone()], &d, &MultifocusConfig::default()).is_err());
        assert!(fuse_multifocus(&[p, Plane::zeros((4, 5))], &d, &MultifocusConfig::default()).is_err());
    }
}

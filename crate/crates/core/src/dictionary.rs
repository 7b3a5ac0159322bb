//! Convolutional dictionaries: `K` square `q x q` filters constrained to the unit l2 ball.

use ndarray::Array2;

use crate::error::{CssaError, Result};
use crate::spectral::{pad_filter, Fft2, Filter, Spectrum};

/// Norm slack accepted by [`Dictionary::is_feasible`] callers for freshly projected filters.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    side: usize,
    filters: Vec<Filter>,
}

impl Dictionary {
    /// Wraps `filters`, which must be non-empty, square and of one common size.
    pub fn new(filters: Vec<Filter>) -> Result<Self> {
        let first = filters
            .first()
            .ok_or_else(|| CssaError::InvalidParameter("dictionary needs at least one filter".into()))?;
        let side = first.nrows();
        if side == 0 {
            return Err(CssaError::InvalidParameter("zero-sized filter".into()));
        }
        for (k, f) in filters.iter().enumerate() {
            if f.dim() != (side, side) {
                return Err(CssaError::InvalidParameter(format!(
                    "filter {k} has shape {:?}, expected {side}x{side}",
                    f.dim()
                )));
            }
        }
        Ok(Self { side, filters })
    }

    /// Number of filters `K`.
    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Filter side length `q`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn filter(&self, k: usize) -> &Filter {
        &self.filters[k]
    }

    pub fn norms(&self) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// True when every filter has `||d||_2 <= 1 + slack`.
    pub fn is_feasible(&self, slack: f64) -> bool {
        self.norms().into_iter().all(|n| n <= 1.0 + slack)
    }

    /// DFTs of the filters zero-padded to the grid of `fft`.
    pub fn spectra(&self, fft: &Fft2) -> Result<Vec<Spectrum>> {
        let (h, w) = fft.shape();
        self.filters
            .iter()
            .map(|f| Ok(fft.forward(pad_filter(f, h, w)?.view())))
            .collect()
    }

    pub fn fits(&self, height: usize, width: usize) -> Result<()> {
        if self.side > height.min(width) {
            Err(CssaError::FilterTooLarge {
                side: self.side,
                height,
                width,
            })
        } else {
            Ok(())
        }
    }

    /// All filters flattened in (filter, row, column) order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.filters.iter().flat_map(|f| f.iter().copied()).collect()
    }

    /// Inverse of [`Dictionary::to_flat`].
    pub fn from_flat(k: usize, side: usize, data: &[f64]) -> Result<Self> {
        if data.len() != k * side * side {
            return Err(CssaError::Inconsistent(format!(
                "expected {} filter values, got {}",
                k * side * side,
                data.len()
            )));
        }
        let filters = data
            .chunks_exact(side * side)
            .map(|c| Array2::from_shape_vec((side, side), c.to_vec()).expect("chunk size"))
            .collect();
        Self::new(filters)
    }
}

/// One dictionary per modality, all with the same `K` and `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionarySet {
    dicts: Vec<Dictionary>,
}

impl DictionarySet {
    pub fn new(dicts: Vec<Dictionary>) -> Result<Self> {
        let first = dicts
            .first()
            .ok_or_else(|| CssaError::InvalidParameter("empty dictionary set".into()))?;
        let (k, q) = (first.len(), first.side());
        if dicts.iter().any(|d| d.len() != k || d.side() != q) {
            return Err(CssaError::Inconsistent(
                "dictionaries in a set must share filter count and size".into(),
            ));
        }
        Ok(Self { dicts })
    }

    pub fn single(dict: Dictionary) -> Self {
        Self { dicts: vec![dict] }
    }

    pub fn modalities(&self) -> usize {
        self.dicts.len()
    }

    pub fn filter_count(&self) -> usize {
        self.dicts[0].len()
    }

    pub fn side(&self) -> usize {
        self.dicts[0].side()
    }

    pub fn dicts(&self) -> &[Dictionary] {
        &self.dicts
    }

    pub fn get(&self, n: usize) -> Option<&Dictionary> {
        self.dicts.get(n)
    }

    pub fn into_inner(self) -> Vec<Dictionary> {
        self.dicts
    }
}

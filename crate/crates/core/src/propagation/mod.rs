//! Importance propagation from the final response layer down to the input.
//!
//! Every rule maps a non-negative importance vector over a layer's output to
//! one over its input, `s_in = s_out · BP` for a non-negative `BP`. The
//! functions here apply the rules directly; [`matrix`] builds the explicit
//! `BP` matrices.

mod backward;
pub mod matrix;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::model::{Geometry, Kernel, Layer, Network, Shape};
use crate::ranking::ImportanceVector;
use crate::{Error, Matrix, Result};

pub use backward::{importance_closed_form, nisp_backward, propagation_product};

/// Keep mask for one layer response; `true` keeps the neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneIndicator {
    pub layer_id: usize,
    pub mask: Vec<bool>,
}

impl PruneIndicator {
    pub fn keep_all(layer_id: usize, len: usize) -> Self {
        PruneIndicator {
            layer_id,
            mask: vec![true; len],
        }
    }

    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }

    pub fn removed(&self) -> usize {
        self.mask.len() - self.kept()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }
}

/// Per-layer keep fractions; unlisted layers keep every unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PruneConfig {
    keep: BTreeMap<usize, f64>,
}

impl PruneConfig {
    pub fn keep_all() -> Self {
        PruneConfig::default()
    }

    /// The same keep fraction for every prunable layer of `net`.
    pub fn uniform(net: &Network, fraction: f64) -> Result<Self> {
        let mut cfg = PruneConfig::default();
        for l in net.prunable_layers() {
            cfg.set(l, fraction)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, layer_id: usize, fraction: f64) -> Result<()> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep fraction {} for layer {} is outside (0, 1]",
                fraction, layer_id
            )));
        }
        self.keep.insert(layer_id, fraction);
        Ok(())
    }

    pub fn with(mut self, layer_id: usize, fraction: f64) -> Result<Self> {
        self.set(layer_id, fraction)?;
        Ok(self)
    }

    pub fn get(&self, layer_id: usize) -> Option<f64> {
        self.keep.get(&layer_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.keep.iter().map(|(&l, &f)| (l, f))
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    /// Kept unit count for layer `layer_id` of `units` units.
    pub fn kept_units(&self, layer_id: usize, units: usize) -> usize {
        match self.get(layer_id) {
            Some(f) => keep_count(units, f),
            None => units,
        }
    }

    /// Checks that every listed layer is prunable and that layers tied into
    /// one unit space by skip edges agree on their fraction.
    pub fn check(&self, net: &Network) -> Result<()> {
        let mut by_space = BTreeMap::new();
        for (l, f) in self.iter() {
            if l >= net.len() || !net.is_prunable(l) {
                return Err(Error::Config(format!("layer {} is not prunable", l)));
            }
            if let Some((other, g)) = by_space.insert(net.space(l), (l, f)) {
                if g != f {
                    return Err(Error::Config(format!(
                        "layers {} and {} share units through a skip edge but keep {} and {}",
                        other, l, g, f
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fraction that applies to producer `layer_id`, taking skip-tied
    /// layers into account.
    pub(crate) fn fraction_for(&self, net: &Network, layer_id: usize) -> Option<f64> {
        let space = net.space(layer_id);
        net.producers_in(space).iter().find_map(|&p| self.get(p))
    }
}

/// `N = max(1, round(fraction × units))`.
pub fn keep_count(units: usize, fraction: f64) -> usize {
    let n = math::round(fraction * units as f64) as usize;
    n.clamp(1, units.max(1))
}

/// One layer's entry of an importance plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub layer_id: usize,
    /// Importance of every neuron of the layer response, before pruned units
    /// are zeroed.
    pub scores: ImportanceVector,
    /// Keep mask over neurons; present for layers that were pruned.
    pub indicator: Option<PruneIndicator>,
    /// Per-channel sums for spatial responses.
    pub channel_scores: Option<Vec<f64>>,
}

impl PlanEntry {
    pub fn new(scores: ImportanceVector, shape: Shape, indicator: Option<PruneIndicator>) -> Self {
        let channel_scores = match shape {
            Shape::Map { .. } => Some(channel_scores(shape, &scores.scores)),
            Shape::Flat(_) => None,
        };
        PlanEntry {
            layer_id: scores.layer_id,
            scores,
            indicator,
            channel_scores,
        }
    }
}

/// Per-layer importance and keep masks from one backward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportancePlan {
    /// Sorted by layer id.
    pub entries: Vec<PlanEntry>,
}

impl ImportancePlan {
    pub fn entry(&self, layer_id: usize) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.layer_id == layer_id)
    }

    pub fn indicator(&self, layer_id: usize) -> Option<&PruneIndicator> {
        self.entry(layer_id).and_then(|e| e.indicator.as_ref())
    }

    /// Neuron masks keyed by layer id, for masked forward passes.
    pub fn masks(&self) -> BTreeMap<usize, Vec<bool>> {
        self.entries
            .iter()
            .filter_map(|e| e.indicator.as_ref().map(|i| (e.layer_id, i.mask.clone())))
            .collect()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "importance vector has {} entries, expected {}",
            got, expected
        )));
    }
    Ok(())
}

/// `s_in[j] = Σ_i |w[i][j]| · s_out[i]`.
pub fn propagate_dense(weights: &Matrix, s_out: &[f64]) -> Result<Vec<f64>> {
    check_len(weights.rows(), s_out.len())?;
    let mut s_in = vec![0.0; weights.cols()];
    for (i, &s) in s_out.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (acc, w) in s_in.iter_mut().zip(weights.row(i)) {
            *acc += w.abs() * s;
        }
    }
    Ok(s_in)
}

/// Adjoint convolution with the absolute kernel. Importance landing on
/// padded positions is dropped.
pub fn propagate_conv(kernel: &Kernel, geometry: &Geometry, s_out: &[f64]) -> Result<Vec<f64>> {
    geometry.check()?;
    if kernel.size != geometry.kernel || kernel.in_channels != geometry.channels {
        return Err(Error::Geometry(format!(
            "kernel {}x{}x{} does not match geometry (k = {}, channels = {})",
            kernel.size, kernel.size, kernel.in_channels, geometry.kernel, geometry.channels
        )));
    }
    let (xs, ys) = (geometry.input_size, geometry.output_size);
    check_len(kernel.out_channels * ys * ys, s_out.len())?;
    let mut s_in = vec![0.0; kernel.in_channels * xs * xs];
    for co in 0..kernel.out_channels {
        for oy in 0..ys {
            for ox in 0..ys {
                let s = s_out[(co * ys + oy) * ys + ox];
                if s == 0.0 {
                    continue;
                }
                for ky in 0..kernel.size {
                    let Some(iy) = (oy * geometry.stride + ky).checked_sub(geometry.padding) else {
                        continue;
                    };
                    if iy >= xs {
                        continue;
                    }
                    for kx in 0..kernel.size {
                        let Some(ix) = (ox * geometry.stride + kx).checked_sub(geometry.padding)
                        else {
                            continue;
                        };
                        if ix >= xs {
                            continue;
                        }
                        for ci in 0..kernel.in_channels {
                            s_in[(ci * xs + iy) * xs + ix] += kernel.get(ky, kx, ci, co).abs() * s;
                        }
                    }
                }
            }
        }
    }
    Ok(s_in)
}

/// Each window hands `1/k²` of its importance to every input it covers;
/// max and average pooling are treated alike.
pub fn propagate_pool(geometry: &Geometry, s_out: &[f64]) -> Result<Vec<f64>> {
    geometry.check()?;
    let (xs, ys, k) = (geometry.input_size, geometry.output_size, geometry.kernel);
    check_len(geometry.channels * ys * ys, s_out.len())?;
    let share = 1.0 / (k * k) as f64;
    let mut s_in = vec![0.0; geometry.channels * xs * xs];
    for c in 0..geometry.channels {
        for oy in 0..ys {
            for ox in 0..ys {
                let s = s_out[(c * ys + oy) * ys + ox] * share;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * geometry.stride + ky).checked_sub(geometry.padding);
                        let ix = (ox * geometry.stride + kx).checked_sub(geometry.padding);
                        if let (Some(iy), Some(ix)) = (iy, ix) {
                            if iy < xs && ix < xs {
                                s_in[(c * xs + iy) * xs + ix] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(s_in)
}

/// Cross-channel spread: at each position, channel `c` receives `1/l` of the
/// importance of every channel within `(l − 1)/2` of it.
pub fn propagate_lrn(local_size: usize, shape: Shape, s_out: &[f64]) -> Result<Vec<f64>> {
    let Shape::Map { channels, size } = shape else {
        return Err(Error::Shape(format!("LRN needs a spatial response, got {}", shape)));
    };
    if local_size == 0 || local_size.is_multiple_of(2) || local_size > channels {
        return Err(Error::LocalSize {
            local_size,
            channels,
        });
    }
    check_len(shape.len(), s_out.len())?;
    let plane = size * size;
    let half = local_size / 2;
    let share = 1.0 / local_size as f64;
    let mut s_in = vec![0.0; s_out.len()];
    for c in 0..channels {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(channels - 1);
        for p in 0..plane {
            s_in[c * plane + p] = (lo..=hi).map(|cc| s_out[cc * plane + p]).sum::<f64>() * share;
        }
    }
    Ok(s_in)
}

pub fn propagate_identity(s_out: &[f64]) -> Vec<f64> {
    s_out.to_vec()
}

/// Sum of neuron importance within each channel of a spatial response.
/// Flat responses return the scores unchanged.
pub fn channel_scores(shape: Shape, s: &[f64]) -> Vec<f64> {
    let per = shape.unit_len();
    s.chunks(per).map(|c| c.iter().sum()).collect()
}

/// Keeps the `keep` largest scores; ties keep the lower index.
pub fn prune_indicator(s: &ImportanceVector, keep: usize) -> Result<PruneIndicator> {
    Ok(PruneIndicator {
        layer_id: s.layer_id,
        mask: top_mask(&s.scores, keep)?,
    })
}

pub(crate) fn top_mask(scores: &[f64], keep: usize) -> Result<Vec<bool>> {
    if keep == 0 || keep > scores.len() {
        return Err(Error::KeepOutOfRange {
            keep,
            len: scores.len(),
        });
    }
    let mut mask = vec![false; scores.len()];
    for i in crate::ranking::rank_descending(scores).into_iter().take(keep) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Propagates importance on `layer_id`'s output to its input.
pub fn propagate_layer(net: &Network, layer_id: usize, s_out: &[f64]) -> Result<Vec<f64>> {
    if layer_id >= net.len() {
        return Err(Error::OutOfRange {
            index: layer_id,
            limit: net.len(),
        });
    }
    match net.layer(layer_id) {
        Layer::Dense(d) => propagate_dense(&d.weights, s_out),
        Layer::Conv2d(c) => propagate_conv(&c.kernel, &c.geometry, s_out),
        Layer::Pool2d(p) => propagate_pool(&p.geometry, s_out),
        Layer::Lrn(l) => propagate_lrn(l.local_size, net.input_shape_of(layer_id), s_out),
        Layer::BatchNorm(_) | Layer::Activation(_) => {
            check_len(net.output_shape(layer_id).len(), s_out.len())?;
            Ok(propagate_identity(s_out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(x: usize, y: usize, k: usize, s: usize, p: usize, c: usize) -> Geometry {
        Geometry {
            input_size: x,
            output_size: y,
            kernel: k,
            stride: s,
            padding: p,
            channels: c,
        }
    }

    #[test]
    fn dense_hand_value() {
        let w = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(propagate_dense(&w, &[1.0, 2.0]).unwrap(), vec![7.0, 10.0]);
        assert_eq!(propagate_dense(&w, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(propagate_dense(&w, &[1.0]).is_err());
    }

    #[test]
    fn conv_receptive_field_counts() {
        let kernel = Kernel {
            size: 3,
            in_channels: 1,
            out_channels: 1,
            data: vec![1.0; 9],
        };
        let s = propagate_conv(&kernel, &geom(4, 2, 3, 1, 0, 1), &[1.0; 4]).unwrap();
        assert_eq!(s[0], 1.0);
        assert_eq!(s[3], 1.0);
        assert_eq!(s[5], 4.0);
        assert_eq!(s[6], 4.0);
        assert_eq!(s[9], 4.0);
        assert_eq!(s[10], 4.0);
        assert_eq!(s[15], 1.0);
    }

    #[test]
    fn pool_shares() {
        assert_eq!(propagate_pool(&geom(4, 2, 2, 2, 0, 1), &[1.0; 4]).unwrap(), vec![0.25; 16]);
        let overlap = propagate_pool(&geom(3, 2, 2, 1, 0, 1), &[1.0; 4]).unwrap();
        assert_eq!(overlap[4], 1.0);
        assert_eq!(overlap[0], 0.25);
    }

    #[test]
    fn lrn_border_counts() {
        let shape = Shape::Map { channels: 5, size: 1 };
        let s = propagate_lrn(3, shape, &[1.0; 5]).unwrap();
        let want = [2.0 / 3.0, 1.0, 1.0, 1.0, 2.0 / 3.0];
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(propagate_lrn(1, shape, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(propagate_lrn(2, shape, &[1.0; 5]).is_err());
        assert!(propagate_lrn(7, shape, &[1.0; 5]).is_err());
    }

    #[test]
    fn indicator_tie_break() {
        let v = ImportanceVector::new(0, vec![0.5, 0.9, 0.1]).unwrap();
        assert_eq!(prune_indicator(&v, 2).unwrap().mask, vec![true, true, false]);
        let v = ImportanceVector::new(0, vec![0.5, 0.5, 0.1]).unwrap();
        assert_eq!(prune_indicator(&v, 1).unwrap().mask, vec![true, false, false]);
        assert!(prune_indicator(&v, 0).is_err());
        assert!(prune_indicator(&v, 4).is_err());
    }

    #[test]
    fn keep_count_never_zero() {
        assert_eq!(keep_count(10, 0.5), 5);
        assert_eq!(keep_count(3, 0.01), 1);
        assert_eq!(keep_count(7, 1.0), 7);
        assert_eq!(keep_count(5, 0.5), 3);
    }

    #[test]
    fn channel_sums() {
        let shape = Shape::Map { channels: 2, size: 2 };
        assert_eq!(channel_scores(shape, &[1.0, 2.0, 3.0, 0.0, 0.5, 0.5, 0.5, 0.5]), vec![6.0, 2.0]);
    }

    #[test]
    fn config_rejects_bad_fraction() {
        assert!(PruneConfig::default().with(0, 0.0).is_err());
        assert!(PruneConfig::default().with(0, 1.5).is_err());
        assert!(PruneConfig::default().with(0, 1.0).is_ok());
    }
}

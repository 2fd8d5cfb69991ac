//! Reconstruction error, bound verification, cost accounting and PCA energy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{forward_range, layer_lipschitz, ResponseMatrix, Sample};
use crate::model::{Layer, Network};
use crate::propagation::{propagation_product, PruneIndicator};
use crate::ranking::ImportanceVector;
use crate::{linalg, Error, Matrix, Result};

/// Guard for `|y|` in the relative error.
pub const WARE_EPSILON: f64 = 1e-12;

/// Relative slack allowed when comparing the bound's two sides.
pub const BOUND_SLACK: f64 = 1e-9;

/// Importance-weighted average relative change of the kept final responses.
///
/// `kept` is a mask over the original final response layer. The pruned
/// network's final response layer may either keep the original width or
/// hold exactly the kept neurons in order.
pub fn ware(
    orig: &Network,
    pruned: &Network,
    data: &[Sample],
    s_n: &ImportanceVector,
    kept: &PruneIndicator,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let frl = orig.frl_index();
    let width = orig.output_shape(frl).len();
    if kept.mask.len() != width || s_n.len() != width {
        return Err(Error::Shape(format!(
            "final response layer has {} neurons; mask has {}, scores {}",
            width,
            kept.mask.len(),
            s_n.len()
        )));
    }
    let idx = kept.kept_indices();
    if idx.is_empty() {
        return Err(Error::Invalid("no final response neuron is kept".into()));
    }
    if pruned.frl_index() != frl {
        return Err(Error::Shape(format!(
            "pruned network's final response layer is {}, expected {}",
            pruned.frl_index(),
            frl
        )));
    }
    let pruned_width = pruned.output_shape(frl).len();
    let direct = if pruned_width == width {
        true
    } else if pruned_width == idx.len() {
        false
    } else {
        return Err(Error::Shape(format!(
            "pruned final response layer has {} neurons; expected {} or {}",
            pruned_width,
            width,
            idx.len()
        )));
    };
    let mut total = 0.0;
    for s in data {
        let y = forward_range(orig, 0, frl, &s.input, None)?;
        let y_hat = forward_range(pruned, 0, frl, &s.input, None)?;
        for (pos, &i) in idx.iter().enumerate() {
            let yh = if direct { y_hat[i] } else { y_hat[pos] };
            total += s_n.scores[i] * (yh - y[i]).abs() / y[i].abs().max(WARE_EPSILON);
        }
    }
    Ok(total / (data.len() * idx.len()) as f64)
}

/// Both sides of the pruning-error bound for one layer and keep mask, with
/// every intermediate constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub layer_id: usize,
    /// `Σ_m ⟨s_n, |G(x_l) − G(s* ⊙ x_l)|⟩` with `G` the layers after `l` up
    /// to the final response layer.
    pub lhs: f64,
    /// `C_Σ · C_x · Σ_i r_i (1 − s*_i)`.
    pub rhs: f64,
    /// Product of the per-layer Lipschitz constants of `G`.
    pub c_sigma_product: f64,
    /// `max_i Σ_m |x_{l,i}|`.
    pub c_x: f64,
    /// Importance of layer `l` from the explicit propagation product.
    pub r_vector: Vec<f64>,
    pub holds: bool,
}

impl BoundReport {
    /// `rhs / lhs`; infinite when `lhs = 0 < rhs` and 1 when both vanish.
    pub fn slack_ratio(&self) -> f64 {
        if self.lhs > 0.0 {
            self.rhs / self.lhs
        } else if self.rhs > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    }
}

/// Evaluates the bound on the error caused by zeroing the neurons of layer
/// `layer` where `keep` is false.
pub fn verify_bound(
    net: &Network,
    layer: usize,
    data: &[Sample],
    s_n: &ImportanceVector,
    keep: &[bool],
) -> Result<BoundReport> {
    let frl = net.frl_index();
    if layer > frl {
        return Err(Error::OutOfRange {
            index: layer,
            limit: frl + 1,
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = net.output_shape(layer).len();
    if keep.len() != width {
        return Err(Error::Shape(format!(
            "mask has {} entries, layer {} has {} neurons",
            keep.len(),
            layer,
            width
        )));
    }
    if s_n.layer_id != frl || s_n.len() != net.output_shape(frl).len() {
        return Err(Error::WrongLayer {
            expected: frl,
            got: s_n.layer_id,
        });
    }
    if let Some(&(s, m)) = net.skip_edges().iter().find(|&&(s, m)| m > layer && s <= frl) {
        return Err(Error::Unsupported(format!(
            "skip edge ({}, {}) inside the bounded sub-network",
            s, m
        )));
    }

    let mut c_sigma_product = 1.0;
    for l in layer + 1..=frl {
        c_sigma_product *= layer_lipschitz(net.layer(l))?;
    }
    let r_vector = if layer == frl {
        s_n.scores.clone()
    } else {
        propagation_product(net, layer + 1, frl)?.vecmat(&s_n.scores)?
    };

    let mut abs_sum = vec![0.0; width];
    let mut lhs = 0.0;
    for s in data {
        let x = forward_range(net, 0, layer, &s.input, None)?;
        for (acc, v) in abs_sum.iter_mut().zip(&x) {
            *acc += v.abs();
        }
        let masked: Vec<f64> = x.iter().zip(keep).map(|(v, &k)| if k { *v } else { 0.0 }).collect();
        let (full, pruned) = if layer == frl {
            (x, masked)
        } else {
            (
                forward_range(net, layer + 1, frl, &x, None)?,
                forward_range(net, layer + 1, frl, &masked, None)?,
            )
        };
        lhs += s_n
            .scores
            .iter()
            .zip(full.iter().zip(&pruned))
            .map(|(w, (a, b))| w * (a - b).abs())
            .sum::<f64>();
    }
    let c_x = abs_sum.iter().fold(0.0_f64, |a, &b| a.max(b));
    let removed: f64 = r_vector
        .iter()
        .zip(keep)
        .filter(|(_, &k)| !k)
        .map(|(r, _)| r)
        .sum();
    let rhs = c_sigma_product * c_x * removed;
    Ok(BoundReport {
        layer_id: layer,
        lhs,
        rhs,
        c_sigma_product,
        c_x,
        r_vector,
        holds: lhs <= rhs * (1.0 + BOUND_SLACK),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub layer_id: usize,
    pub flops: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub total_flops: u64,
    pub total_params: u64,
}

impl CostReport {
    /// Percent reduction of FLOPs and parameters relative to `reference`.
    pub fn reduction_vs(&self, reference: &CostReport) -> (f64, f64) {
        (
            reduction_pct(self.total_flops, reference.total_flops),
            reduction_pct(self.total_params, reference.total_params),
        )
    }
}

fn reduction_pct(now: u64, before: u64) -> f64 {
    if before == 0 {
        return 0.0;
    }
    (100.0 * (1.0 - now as f64 / before as f64)).clamp(0.0, 100.0)
}

/// FLOPs (multiply-accumulate counted as 2) and parameter counts per layer.
pub fn count_cost(net: &Network) -> CostReport {
    let layers: Vec<LayerCost> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let out = net.output_shape(l).len() as u64;
            let flops = match layer {
                Layer::Dense(d) => 2 * (d.inputs() * d.outputs()) as u64,
                Layer::Conv2d(c) => {
                    let k = &c.kernel;
                    let y = c.geometry.output_size as u64;
                    2 * (k.size * k.size * k.in_channels * k.out_channels) as u64 * y * y
                }
                _ => out,
            };
            LayerCost {
                layer_id: l,
                flops,
                params: layer.param_count() as u64,
            }
        })
        .collect();
    CostReport {
        total_flops: layers.iter().map(|c| c.flops).sum(),
        total_params: layers.iter().map(|c| c.params).sum(),
        layers,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaEnergy {
    /// Smallest number of leading components reaching the threshold.
    pub components: usize,
    /// All responses were constant; `components` is 0.
    pub degenerate: bool,
    /// Covariance eigenvalues, descending, negatives clamped to 0.
    pub eigenvalues: Vec<f64>,
}

/// Sample covariance of the response columns.
pub fn covariance(resp: &Matrix) -> Result<Matrix> {
    let (m, n) = (resp.rows(), resp.cols());
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let mean: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| resp[(i, j)]).sum::<f64>() / m as f64)
        .collect();
    let mut cov = Matrix::zeros(n, n);
    for i in 0..m {
        let row = resp.row(i);
        for a in 0..n {
            let da = row[a] - mean[a];
            for b in a..n {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            let v = cov[(a, b)] / (m - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Number of principal components needed to reach `threshold` of the total
/// variance.
pub fn pca_energy(resp: &ResponseMatrix, threshold: f64) -> Result<PcaEnergy> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("energy threshold {} is outside (0, 1]", threshold)));
    }
    if !resp.data.is_finite() {
        return Err(Error::NonFinite("responses"));
    }
    let cov = covariance(&resp.data)?;
    let eigenvalues: Vec<f64> = linalg::symmetric_eigenvalues(&cov)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Ok(PcaEnergy {
            components: 0,
            degenerate: true,
            eigenvalues,
        });
    }
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut components = eigenvalues.len();
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc >= target {
            components = i + 1;
            break;
        }
    }
    Ok(PcaEnergy {
        components,
        degenerate: false,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, NetworkDef};

    fn one_neuron_net(w: f64) -> Network {
        NetworkDef {
            layers: vec![
                Layer::dense(Matrix::from_rows(&[[w]]).unwrap(), vec![0.0], Activation::Identity),
                Layer::dense(Matrix::identity(1), vec![0.0], Activation::Identity),
            ],
            skip_edges: vec![],
            frl_index: 0,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn ware_hand_value() {
        let orig = one_neuron_net(2.0);
        let pruned = one_neuron_net(1.0);
        let data = [Sample::new(vec![1.0], None)];
        let s = ImportanceVector::new(0, vec![2.0]).unwrap();
        let kept = PruneIndicator::keep_all(0, 1);
        assert_eq!(ware(&orig, &pruned, &data, &s, &kept).unwrap(), 1.0);
        assert_eq!(ware(&orig, &orig, &data, &s, &kept).unwrap(), 0.0);
    }

    #[test]
    fn dense_cost() {
        let net = NetworkDef {
            layers: vec![
                Layer::dense(Matrix::zeros(5, 10), vec![0.0; 5], Activation::Relu),
                Layer::dense(Matrix::zeros(1, 5), vec![0.0], Activation::Identity),
            ],
            skip_edges: vec![],
            frl_index: 0,
        }
        .build()
        .unwrap();
        let cost = count_cost(&net);
        assert_eq!(cost.layers[0].flops, 100);
        assert_eq!(cost.layers[0].params, 55);
        assert_eq!(cost.reduction_vs(&cost), (0.0, 0.0));
    }

    #[test]
    fn pca_counts() {
        let line = ResponseMatrix {
            layer_id: 0,
            data: Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]]).unwrap(),
        };
        assert_eq!(pca_energy(&line, 0.95).unwrap().components, 1);
        let iso = ResponseMatrix {
            layer_id: 0,
            data: Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]).unwrap(),
        };
        assert_eq!(pca_energy(&iso, 0.95).unwrap().components, 2);
        let flat = ResponseMatrix {
            layer_id: 0,
            data: Matrix::from_rows(&[[3.0, 1.0], [3.0, 1.0]]).unwrap(),
        };
        let e = pca_energy(&flat, 0.9).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.components, 0);
    }

    #[test]
    fn bound_trivial_cases() {
        let net = NetworkDef {
            layers: vec![
                Layer::dense(Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap(), vec![0.0; 2], Activation::Relu),
                Layer::dense(Matrix::from_rows(&[[1.0, 2.0], [-3.0, 1.0]]).unwrap(), vec![0.1; 2], Activation::Sigmoid),
                Layer::dense(Matrix::identity(2), vec![0.0; 2], Activation::Identity),
            ],
            skip_edges: vec![],
            frl_index: 1,
        }
        .build()
        .unwrap();
        let data = [Sample::new(vec![1.0, 2.0], None), Sample::new(vec![-0.5, 0.3], None)];
        let s_n = ImportanceVector::new(1, vec![1.0, 0.5]).unwrap();
        let all = verify_bound(&net, 0, &data, &s_n, &[true, true]).unwrap();
        assert_eq!((all.lhs, all.rhs), (0.0, 0.0));
        assert!(all.holds);
        let zero = ImportanceVector::new(1, vec![0.0, 0.0]).unwrap();
        let z = verify_bound(&net, 0, &data, &zero, &[false, true]).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        let cut = verify_bound(&net, 0, &data, &s_n, &[true, false]).unwrap();
        assert!(cut.holds && cut.lhs > 0.0);
        assert_eq!(cut.c_sigma_product, 0.25);
    }
}

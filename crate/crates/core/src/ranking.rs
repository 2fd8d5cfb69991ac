//! Neuron scoring: infinite feature selection over response statistics, the
//! weight-magnitude baseline, and independent per-layer ranking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{batch_responses, ResponseMatrix, Sample};
use crate::model::{Layer, Network};
use crate::{linalg, math};
use crate::{Error, Matrix, Result};

/// Default variance/correlation loading coefficient.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Fraction of `1 / ρ(A)` used as damping.
pub const DAMPING_FACTOR: f64 = 0.9;

/// Non-negative importance scores for every neuron of one layer response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    pub layer_id: usize,
    pub scores: Vec<f64>,
}

impl ImportanceVector {
    pub fn new(layer_id: usize, scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidScore(i));
        }
        Ok(ImportanceVector { layer_id, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        ImportanceVector::new(self.layer_id, self.scores.iter().map(|s| s * c).collect())
    }

    /// Indices ordered by descending score; equal scores keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.scores)
    }
}

/// Indices ordered by descending value; equal values keep index order.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Feature affinity graph with its damping factor.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub layer_id: usize,
    pub matrix: Matrix,
    pub damping: f64,
    pub alpha: f64,
}

impl AffinityGraph {
    /// Checks the graph and picks `r = 0.9 / ρ(A)` (0.9 when `ρ(A) = 0`).
    pub fn new(layer_id: usize, matrix: Matrix, alpha: f64) -> Result<Self> {
        check_affinity(&matrix)?;
        let rho = linalg::spectral_radius(&matrix)?;
        let damping = if rho > 0.0 {
            DAMPING_FACTOR / rho
        } else {
            DAMPING_FACTOR
        };
        Ok(AffinityGraph {
            layer_id,
            matrix,
            damping,
            alpha,
        })
    }

    /// Graph with an explicit damping factor; `r·ρ(A)` must stay below 1.
    pub fn with_damping(layer_id: usize, matrix: Matrix, damping: f64, alpha: f64) -> Result<Self> {
        check_affinity(&matrix)?;
        if !(damping.is_finite() && damping > 0.0) {
            return Err(Error::InvalidGraph(format!("damping {} must be positive", damping)));
        }
        let rho = linalg::spectral_radius(&matrix)?;
        if damping * rho >= 1.0 {
            return Err(Error::InvalidGraph(format!(
                "damping {} times spectral radius {} is not below 1",
                damping, rho
            )));
        }
        Ok(AffinityGraph {
            layer_id,
            matrix,
            damping,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }
}

fn check_affinity(a: &Matrix) -> Result<()> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::InvalidGraph(format!("{}x{} matrix is not square", n, a.cols())));
    }
    for i in 0..n {
        if a[(i, i)] != 0.0 {
            return Err(Error::InvalidGraph(format!("diagonal entry {} is non-zero", i)));
        }
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "entry ({}, {}) = {} is not a finite non-negative value",
                    i, j, v
                )));
            }
            if v != a[(j, i)] {
                return Err(Error::InvalidGraph(format!(
                    "entries ({}, {}) and ({}, {}) differ",
                    i, j, j, i
                )));
            }
        }
    }
    Ok(())
}

/// Per-feature standard deviation rescaled by its maximum (all zero when every
/// feature is constant) and the Pearson correlation matrix (zero for pairs
/// involving a constant feature).
pub fn feature_statistics(resp: &Matrix) -> (Vec<f64>, Matrix) {
    let (m, n) = (resp.rows(), resp.cols());
    let mean: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| resp[(i, j)]).sum::<f64>() / m as f64)
        .collect();
    let centered = Matrix::from_fn(m, n, |i, j| resp[(i, j)] - mean[j]);
    // A constant column can leave rounding noise after centering; pin it to 0.
    let ss: Vec<f64> = (0..n)
        .map(|j| {
            if (1..m).all(|i| resp[(i, j)] == resp[(0, j)]) {
                0.0
            } else {
                (0..m).map(|i| centered[(i, j)] * centered[(i, j)]).sum()
            }
        })
        .collect();
    let std: Vec<f64> = ss.iter().map(|s| math::sqrt(s / (m - 1) as f64)).collect();
    let max_std = std.iter().fold(0.0_f64, |a, &b| a.max(b));
    let sigma_hat = if max_std > 0.0 {
        std.iter().map(|s| s / max_std).collect()
    } else {
        vec![0.0; n]
    };
    let mut rho = Matrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = if ss[a] > 0.0 && ss[b] > 0.0 {
                let cov: f64 = (0..m).map(|i| centered[(i, a)] * centered[(i, b)]).sum();
                let denom = if ss[a] == ss[b] {
                    ss[a]
                } else {
                    math::sqrt(ss[a] * ss[b])
                };
                (cov / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            rho[(a, b)] = v;
            rho[(b, a)] = v;
        }
    }
    (sigma_hat, rho)
}

/// `A_ij = α·max(σ̂_i, σ̂_j) + (1 − α)·(1 − |ρ_ij|)` off the diagonal.
pub fn build_affinity(resp: &ResponseMatrix, alpha: f64) -> Result<AffinityGraph> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("alpha {} is outside [0, 1]", alpha)));
    }
    let (m, n) = (resp.samples(), resp.features());
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    if n < 2 {
        return Err(Error::TooFewFeatures(n));
    }
    if !resp.data.is_finite() {
        return Err(Error::NonFinite("responses"));
    }
    let (sigma_hat, rho) = feature_statistics(&resp.data);
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            alpha * sigma_hat[i].max(sigma_hat[j]) + (1.0 - alpha) * (1.0 - rho[(i, j)].abs())
        }
    });
    AffinityGraph::new(resp.layer_id, a, alpha)
}

/// `S = (I − rA)⁻¹ − I`.
pub fn inffs_matrix(graph: &AffinityGraph) -> Result<Matrix> {
    let n = graph.len();
    let m = damped_system(graph);
    let mut s = linalg::inverse(&m)?;
    for i in 0..n {
        s[(i, i)] -= 1.0;
    }
    Ok(s)
}

/// Row sums of `S = (I − rA)⁻¹ − I`, from one linear solve.
pub fn inffs_scores(graph: &AffinityGraph) -> Result<ImportanceVector> {
    let n = graph.len();
    let m = damped_system(graph);
    let x = linalg::solve(&m, &vec![1.0; n])?;
    // Row sums of the series are non-negative; clamp rounding noise.
    let scores = x.iter().map(|v| (v - 1.0).max(0.0)).collect();
    ImportanceVector::new(graph.layer_id, scores)
}

fn damped_system(graph: &AffinityGraph) -> Matrix {
    let n = graph.len();
    let r = graph.damping;
    Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - r * graph.matrix[(i, j)]
    })
}

/// Inf-FS scores of one layer's responses over a dataset.
pub fn rank_layer(net: &Network, data: &[Sample], layer_id: usize, alpha: f64) -> Result<ImportanceVector> {
    let resp = batch_responses(net, data, layer_id)?;
    inffs_scores(&build_affinity(&resp, alpha)?)
}

/// Absolute weight sum of each neuron's incoming connections, taken from the
/// weighted layer producing `layer_id`'s response. Convolution neurons share
/// their output channel's kernel sum.
pub fn magnitude_scores(net: &Network, layer_id: usize) -> Result<ImportanceVector> {
    if layer_id >= net.len() {
        return Err(Error::OutOfRange {
            index: layer_id,
            limit: net.len(),
        });
    }
    let scores = match net.layer(layer_id) {
        Layer::Dense(d) => (0..d.outputs())
            .map(|i| d.weights.row(i).iter().map(|w| w.abs()).sum())
            .collect(),
        Layer::Conv2d(c) => {
            let k = &c.kernel;
            let mut per_channel = vec![0.0; k.out_channels];
            for (i, w) in k.data.iter().enumerate() {
                per_channel[i % k.out_channels] += w.abs();
            }
            let plane = c.geometry.output_size * c.geometry.output_size;
            per_channel
                .iter()
                .flat_map(|&s| core::iter::repeat_n(s, plane))
                .collect()
        }
        _ => return Err(Error::NoWeights(layer_id)),
    };
    ImportanceVector::new(layer_id, scores)
}

/// Independent Inf-FS ranking of every prunable layer's own responses.
pub fn per_layer_scores(net: &Network, data: &[Sample], alpha: f64) -> Result<Vec<ImportanceVector>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    net.prunable_layers()
        .into_iter()
        .map(|l| rank_layer(net, data, l, alpha))
        .collect()
}

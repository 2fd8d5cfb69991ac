#![allow(dead_code)]

use nisp_core::model::{
    Activation, ActivationLayer, BatchNorm, Conv2d, Geometry, Kernel, Layer, Lrn, Network,
    NetworkDef, Pool2d, PoolMode, Shape,
};
use nisp_core::trainer::{loss, loss_and_gradients};
use nisp_core::{Matrix, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_activation(rng: &mut ChaCha8Rng) -> Activation {
    match rng.random_range(0..4) {
        0 => Activation::Identity,
        1 => Activation::Relu,
        2 => Activation::Sigmoid,
        _ => Activation::Tanh,
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Dense chain with `depth` layers (classifier included) and widths in
/// `2..=max_width`; hidden activations drawn from `acts`.
pub fn random_dense_net(
    rng: &mut ChaCha8Rng,
    depth: usize,
    max_width: usize,
    acts: &[Activation],
) -> Network {
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..=max_width)).collect();
    let layers = (0..depth)
        .map(|i| {
            let act = if i + 1 == depth {
                Activation::Identity
            } else {
                acts[rng.random_range(0..acts.len())]
            };
            let w = random_matrix(rng, widths[i + 1], widths[i]);
            let b = random_vec(rng, widths[i + 1], -0.5, 0.5);
            Layer::dense(w, b, act)
        })
        .collect();
    NetworkDef {
        layers,
        skip_edges: vec![],
        frl_index: depth - 2,
    }
    .build()
    .unwrap()
}

pub fn random_samples(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample::new(random_vec(rng, dim, -2.0, 2.0), None))
        .collect()
}

pub fn random_nonneg(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    random_vec(rng, n, 0.0, 1.0)
}

/// Random spatial geometry with `X ≤ 6`, `k ≤ 3`, `s ∈ {1, 2}`, `p ∈ {0, 1}`.
pub fn random_geometry(rng: &mut ChaCha8Rng, channels: usize) -> Geometry {
    loop {
        let x = rng.random_range(1..=6);
        let k = rng.random_range(1..=3);
        let s = rng.random_range(1..=2);
        let p = rng.random_range(0..=1);
        if x + 2 * p < k || p >= k {
            continue;
        }
        let y = (x + 2 * p - k) / s + 1;
        return Geometry {
            input_size: x,
            output_size: y,
            kernel: k,
            stride: s,
            padding: p,
            channels,
        };
    }
}

pub fn random_kernel(rng: &mut ChaCha8Rng, size: usize, cin: usize, cout: usize) -> Kernel {
    Kernel {
        size,
        in_channels: cin,
        out_channels: cout,
        data: random_vec(rng, size * size * cin * cout, -1.0, 1.0),
    }
}

/// Small convolutional network:
/// conv → activation → batch-norm → pool → conv → [LRN] → dense classifier.
pub fn random_conv_net(rng: &mut ChaCha8Rng, with_lrn: bool) -> Network {
    let c0 = rng.random_range(1..=2);
    let c1 = rng.random_range(2..=4);
    let c2 = rng.random_range(3..=4);
    let x0 = rng.random_range(5..=7);
    let g1 = Geometry {
        input_size: x0,
        output_size: x0,
        kernel: 3,
        stride: 1,
        padding: 1,
        channels: c0,
    };
    let pool_out = (x0 - 2) / 2 + 1;
    let g_pool = Geometry {
        input_size: x0,
        output_size: pool_out,
        kernel: 2,
        stride: 2,
        padding: 0,
        channels: c1,
    };
    let g2 = Geometry {
        input_size: pool_out,
        output_size: pool_out - 1,
        kernel: 2,
        stride: 1,
        padding: 0,
        channels: c1,
    };
    let mode = if rng.random_bool(0.5) {
        PoolMode::Max
    } else {
        PoolMode::Average
    };
    let mut layers = vec![
        Layer::Conv2d(Conv2d {
            geometry: g1,
            kernel: random_kernel(rng, 3, c0, c1),
            bias: random_vec(rng, c1, -0.3, 0.3),
            activation: Activation::Identity,
        }),
        Layer::Activation(ActivationLayer {
            activation: Activation::Relu,
            shape: None,
        }),
        Layer::BatchNorm(BatchNorm {
            scale: random_vec(rng, c1, 0.5, 1.5),
            shift: random_vec(rng, c1, -0.2, 0.2),
            shape: None,
        }),
        Layer::Pool2d(Pool2d {
            geometry: g_pool,
            mode,
        }),
        Layer::Conv2d(Conv2d {
            geometry: g2,
            kernel: random_kernel(rng, 2, c1, c2),
            bias: random_vec(rng, c2, -0.3, 0.3),
            activation: random_activation(rng),
        }),
    ];
    if with_lrn {
        layers.push(Layer::Lrn(Lrn {
            local_size: 3,
            shape: None,
        }));
    }
    let flat = c2 * (pool_out - 1) * (pool_out - 1);
    layers.push(Layer::dense(
        random_matrix(rng, 3, flat),
        random_vec(rng, 3, -0.1, 0.1),
        Activation::Identity,
    ));
    let frl = layers.len() - 2;
    NetworkDef {
        layers,
        skip_edges: vec![],
        frl_index: frl,
    }
    .build()
    .unwrap()
}

/// Dense net with an identity skip: 0 → act → 2 (+ 1) → classifier.
pub fn random_skip_net(rng: &mut ChaCha8Rng) -> Network {
    let d = rng.random_range(2..=8);
    let w = rng.random_range(3..=8);
    let layers = vec![
        Layer::dense(random_matrix(rng, w, d), random_vec(rng, w, -0.3, 0.3), Activation::Relu),
        Layer::dense(random_matrix(rng, w, w), random_vec(rng, w, -0.3, 0.3), Activation::Tanh),
        Layer::dense(random_matrix(rng, w, w), random_vec(rng, w, -0.3, 0.3), Activation::Relu),
        Layer::dense(random_matrix(rng, 3, w), random_vec(rng, 3, -0.1, 0.1), Activation::Identity),
    ];
    NetworkDef {
        layers,
        skip_edges: vec![(0, 2)],
        frl_index: 2,
    }
    .build()
    .unwrap()
}

// Oracles below enumerate from the input side (gather) so they share no loop
// structure with the library's scatter implementations.

/// For every input position, sums `|K| · s_out` over the output positions whose
/// receptive field covers it.
pub fn conv_gather(kernel: &Kernel, g: &Geometry, s_out: &[f64]) -> Vec<f64> {
    let (x, y) = (g.input_size as i64, g.output_size as i64);
    let (s, p, k) = (g.stride as i64, g.padding as i64, g.kernel as i64);
    let mut out = vec![0.0; kernel.in_channels * (x * x) as usize];
    for ci in 0..kernel.in_channels {
        for iy in 0..x {
            for ix in 0..x {
                let mut acc = 0.0;
                for co in 0..kernel.out_channels {
                    for oy in 0..y {
                        for ox in 0..y {
                            let ky = iy + p - oy * s;
                            let kx = ix + p - ox * s;
                            if (0..k).contains(&ky) && (0..k).contains(&kx) {
                                let w = kernel.get(ky as usize, kx as usize, ci, co).abs();
                                acc += w * s_out[(co * y as usize + oy as usize) * y as usize + ox as usize];
                            }
                        }
                    }
                }
                out[(ci * x as usize + iy as usize) * x as usize + ix as usize] = acc;
            }
        }
    }
    out
}

pub fn pool_gather(g: &Geometry, s_out: &[f64]) -> Vec<f64> {
    let (x, y) = (g.input_size as i64, g.output_size as i64);
    let (s, p, k) = (g.stride as i64, g.padding as i64, g.kernel as i64);
    let mut out = vec![0.0; g.channels * (x * x) as usize];
    for c in 0..g.channels {
        for iy in 0..x {
            for ix in 0..x {
                let mut covered = 0.0;
                for oy in 0..y {
                    for ox in 0..y {
                        let dy = iy + p - oy * s;
                        let dx = ix + p - ox * s;
                        if (0..k).contains(&dy) && (0..k).contains(&dx) {
                            covered += s_out[(c * y as usize + oy as usize) * y as usize + ox as usize];
                        }
                    }
                }
                out[(c * x as usize + iy as usize) * x as usize + ix as usize] = covered / (k * k) as f64;
            }
        }
    }
    out
}

pub fn lrn_gather(l: usize, channels: usize, size: usize, s_out: &[f64]) -> Vec<f64> {
    let plane = size * size;
    let half = (l - 1) / 2;
    let mut out = vec![0.0; channels * plane];
    for c in 0..channels {
        for p in 0..plane {
            let mut acc = 0.0;
            for c2 in 0..channels {
                if c.abs_diff(c2) <= half {
                    acc += s_out[c2 * plane + p] / l as f64;
                }
            }
            out[c * plane + p] = acc;
        }
    }
    out
}

/// `Σ_{l=1}^{terms} (rA)^l` by repeated multiplication.
pub fn truncated_series(a: &Matrix, r: f64, terms: usize) -> Matrix {
    let n = a.rows();
    let ra = Matrix::from_fn(n, n, |i, j| r * a[(i, j)]);
    let mut power = ra.clone();
    let mut sum = ra.clone();
    for _ in 1..terms {
        power = power.matmul(&ra).unwrap();
        for (s, p) in sum.as_mut_slice().iter_mut().zip(power.as_slice()) {
            *s += p;
        }
    }
    sum
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.
pub fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn map_shape(net: &Network, layer: usize) -> (usize, usize) {
    match net.output_shape(layer) {
        Shape::Map { channels, size } => (channels, size),
        Shape::Flat(n) => (n, 1),
    }
}

/// Symmetric non-negative matrix with zero diagonal.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(0.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

pub fn perturbed(net: &Network, layer: usize, index: Option<(usize, usize)>, bias: usize, h: f64) -> Network {
    let mut def = net.def().clone();
    let Layer::Dense(d) = &mut def.layers[layer] else { unreachable!() };
    match index {
        Some(ij) => d.weights[ij] += h,
        None => d.bias[bias] += h,
    }
    def.build().unwrap()
}

/// Largest entrywise `|a − b| / max(|a|, |b|)` between analytic and central
/// difference gradients, ignoring entries where both are below `floor`.
pub fn gradient_error(net: &Network, batch: &[Sample]) -> f64 {
    let h = 1e-5;
    let floor = 1e-7;
    let (_, grads) = loss_and_gradients(net, batch).unwrap();
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs());
        if scale > floor {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    };
    for (l, g) in grads.layers.iter().enumerate() {
        let Some((gw, gb)) = g else { continue };
        for i in 0..gw.rows() {
            for j in 0..gw.cols() {
                let up = loss(&perturbed(net, l, Some((i, j)), 0, h), batch).unwrap();
                let down = loss(&perturbed(net, l, Some((i, j)), 0, -h), batch).unwrap();
                compare(gw[(i, j)], (up - down) / (2.0 * h));
            }
        }
        for (i, &b) in gb.iter().enumerate() {
            let up = loss(&perturbed(net, l, None, i, h), batch).unwrap();
            let down = loss(&perturbed(net, l, None, i, -h), batch).unwrap();
            compare(b, (up - down) / (2.0 * h));
        }
    }
    worst
}

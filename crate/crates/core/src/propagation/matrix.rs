//! Explicit propagation matrices `BP` (output size × input size), applied as
//! `s_in = s_out · BP`.
//!
//! The convolution matrix is assembled from per-channel-pair blocks over the
//! padded input grid, then the padded columns are dropped.

use alloc::format;

use crate::model::{Geometry, Kernel, Layer, Network, Shape};
use crate::{Error, Matrix, Result};

/// `|w|`, already out × in.
pub fn dense_matrix(weights: &Matrix) -> Matrix {
    weights.abs()
}

/// Block `BP^(f,n)` for output channel `f` and input channel `n` over the
/// padded `Xp × Xp` grid: `Y²` rows, `Xp²` columns.
///
/// Block row `r` (output row) holds the blocks `b_0 .. b_{k-1}` starting at
/// block column `r·s`; inside `b_i`, row `q` (output column) carries kernel
/// row `i` at columns `q·s .. q·s + k`.
pub fn conv_block(kernel: &Kernel, geometry: &Geometry, f: usize, n: usize) -> Matrix {
    let (k, s, ys) = (geometry.kernel, geometry.stride, geometry.output_size);
    let xp = geometry.input_size + 2 * geometry.padding;
    let mut m = Matrix::zeros(ys * ys, xp * xp);
    for r in 0..ys {
        for i in 0..k {
            let block_col = r * s + i;
            for q in 0..ys {
                for j in 0..k {
                    m[(r * ys + q, block_col * xp + q * s + j)] = kernel.get(i, j, n, f).abs();
                }
            }
        }
    }
    m
}

/// Full convolution propagation matrix, `C_out·Y²` rows and `C_in·X²`
/// columns.
pub fn conv_matrix(kernel: &Kernel, geometry: &Geometry) -> Result<Matrix> {
    geometry.check()?;
    if kernel.size != geometry.kernel || kernel.in_channels != geometry.channels {
        return Err(Error::Geometry(format!(
            "kernel {}x{}x{} does not match geometry (k = {}, channels = {})",
            kernel.size, kernel.size, kernel.in_channels, geometry.kernel, geometry.channels
        )));
    }
    let (xs, ys, p) = (geometry.input_size, geometry.output_size, geometry.padding);
    let xp = xs + 2 * p;
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let mut bp = Matrix::zeros(cout * ys * ys, cin * xs * xs);
    for f in 0..cout {
        for n in 0..cin {
            let block = conv_block(kernel, geometry, f, n);
            for row in 0..ys * ys {
                for py in p..p + xs {
                    for px in p..p + xs {
                        let v = block[(row, py * xp + px)];
                        if v != 0.0 {
                            let col = (n * xs + (py - p)) * xs + (px - p);
                            bp[(f * ys * ys + row, col)] += v;
                        }
                    }
                }
            }
        }
    }
    Ok(bp)
}

/// Pooling propagation matrix: each window row holds `1/k²` at every
/// non-padded input it covers.
pub fn pool_matrix(geometry: &Geometry) -> Result<Matrix> {
    geometry.check()?;
    let (xs, ys, k, c) = (
        geometry.input_size,
        geometry.output_size,
        geometry.kernel,
        geometry.channels,
    );
    let share = 1.0 / (k * k) as f64;
    let mut bp = Matrix::zeros(c * ys * ys, c * xs * xs);
    for ch in 0..c {
        for oy in 0..ys {
            for ox in 0..ys {
                let row = (ch * ys + oy) * ys + ox;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * geometry.stride + ky).checked_sub(geometry.padding);
                        let ix = (ox * geometry.stride + kx).checked_sub(geometry.padding);
                        if let (Some(iy), Some(ix)) = (iy, ix) {
                            if iy < xs && ix < xs {
                                bp[(row, (ch * xs + iy) * xs + ix)] += share;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(bp)
}

/// Band matrix over channels (`1/l` inside the band), repeated at every
/// spatial position.
pub fn lrn_matrix(local_size: usize, shape: Shape) -> Result<Matrix> {
    let Shape::Map { channels, size } = shape else {
        return Err(Error::Shape(format!("LRN needs a spatial response, got {}", shape)));
    };
    if local_size == 0 || local_size.is_multiple_of(2) || local_size > channels {
        return Err(Error::LocalSize {
            local_size,
            channels,
        });
    }
    let plane = size * size;
    let half = local_size / 2;
    let share = 1.0 / local_size as f64;
    let n = channels * plane;
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (co, po) = (r / plane, r % plane);
        let (ci, pi) = (c / plane, c % plane);
        if po == pi && co.abs_diff(ci) <= half {
            share
        } else {
            0.0
        }
    }))
}

pub fn identity_matrix(n: usize) -> Matrix {
    Matrix::identity(n)
}

/// Propagation matrix of one layer of `net`.
pub fn layer_matrix(net: &Network, layer_id: usize) -> Result<Matrix> {
    if layer_id >= net.len() {
        return Err(Error::OutOfRange {
            index: layer_id,
            limit: net.len(),
        });
    }
    match net.layer(layer_id) {
        Layer::Dense(d) => Ok(dense_matrix(&d.weights)),
        Layer::Conv2d(c) => conv_matrix(&c.kernel, &c.geometry),
        Layer::Pool2d(p) => pool_matrix(&p.geometry),
        Layer::Lrn(l) => lrn_matrix(l.local_size, net.input_shape_of(layer_id)),
        Layer::BatchNorm(_) | Layer::Activation(_) => {
            Ok(identity_matrix(net.output_shape(layer_id).len()))
        }
    }
}

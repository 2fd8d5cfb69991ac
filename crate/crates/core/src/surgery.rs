//! Structural pruning from an importance plan, and the baseline plans.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Masks, Sample};
use crate::model::{
    ActivationLayer, BatchNorm, Conv2d, Dense, Layer, Lrn, Network, NetworkDef, Pool2d, Shape,
    Space,
};
use crate::propagation::{
    channel_scores, keep_count, nisp_backward, top_mask, ImportancePlan, PlanEntry, PruneConfig,
    PruneIndicator,
};
use crate::ranking::{magnitude_scores, rank_layer, ImportanceVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurgeryRow {
    pub layer_id: usize,
    /// Units (neurons, or channels for spatial responses) kept in the output.
    pub kept: usize,
    pub removed: usize,
    pub params_before: usize,
    pub params_after: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurgeryReport {
    pub rows: Vec<SurgeryRow>,
}

impl SurgeryReport {
    pub fn params_before(&self) -> usize {
        self.rows.iter().map(|r| r.params_before).sum()
    }

    pub fn params_after(&self) -> usize {
        self.rows.iter().map(|r| r.params_after).sum()
    }
}

/// Per-layer output unit masks implied by a plan. Layers sharing a unit space
/// share the mask; spaces without a pruned producer keep everything.
pub fn unit_masks(net: &Network, plan: &ImportancePlan) -> Result<Vec<Vec<bool>>> {
    for l in net.prunable_layers() {
        if plan.entry(l).is_none() {
            return Err(Error::Plan(format!("no entry for prunable layer {}", l)));
        }
    }
    let mut by_space: BTreeMap<Space, (usize, Vec<bool>)> = BTreeMap::new();
    for entry in &plan.entries {
        let l = entry.layer_id;
        if l >= net.len() {
            return Err(Error::OutOfRange {
                index: l,
                limit: net.len(),
            });
        }
        let Some(ind) = &entry.indicator else {
            continue;
        };
        if !net.is_prunable(l) {
            return Err(Error::Plan(format!("layer {} carries a mask but is not prunable", l)));
        }
        let units = unit_mask(net.output_shape(l), l, &ind.mask)?;
        if !units.iter().any(|&k| k) {
            return Err(Error::Plan(format!("mask of layer {} removes every unit", l)));
        }
        match by_space.get(&net.space(l)) {
            Some((other, m)) if *m != units => {
                return Err(Error::Plan(format!(
                    "layers {} and {} share units through a skip edge but have different masks",
                    other, l
                )));
            }
            Some(_) => {}
            None => {
                by_space.insert(net.space(l), (l, units));
            }
        }
    }
    for (space, (l, _)) in &by_space {
        for p in net.producers_in(*space) {
            if plan.indicator(p).is_none() {
                return Err(Error::Plan(format!(
                    "layer {} shares units with pruned layer {} but has no mask",
                    p, l
                )));
            }
        }
    }
    Ok((0..net.len())
        .map(|l| match by_space.get(&net.space(l)) {
            Some((_, m)) => m.clone(),
            None => vec![true; net.output_shape(l).units()],
        })
        .collect())
}

fn unit_mask(shape: Shape, layer: usize, mask: &[bool]) -> Result<Vec<bool>> {
    if mask.len() != shape.len() {
        return Err(Error::Plan(format!(
            "mask of layer {} has {} entries, response has {}",
            layer,
            mask.len(),
            shape.len()
        )));
    }
    let per = shape.unit_len();
    mask.chunks(per)
        .map(|c| {
            if c.iter().all(|&k| k == c[0]) {
                Ok(c[0])
            } else {
                Err(Error::Plan(format!(
                    "mask of layer {} splits a channel",
                    layer
                )))
            }
        })
        .collect()
}

/// Neuron masks over every response living in a pruned unit space. Running
/// [`crate::engine::forward_masked`] with these matches the pruned network.
pub fn forward_masks(net: &Network, plan: &ImportancePlan) -> Result<Masks> {
    let units = unit_masks(net, plan)?;
    Ok(units
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.iter().any(|&k| !k))
        .map(|(l, m)| (l, net.output_shape(l).expand_units(&m)))
        .collect())
}

/// Removes every masked unit: output rows/channels of the producing layer,
/// the matching inputs of the consuming layer, and the per-unit parameters
/// of passthrough layers in between.
pub fn apply_plan(net: &Network, plan: &ImportancePlan) -> Result<(Network, SurgeryReport)> {
    let masks = unit_masks(net, plan)?;
    let mut layers = Vec::with_capacity(net.len());
    let mut rows = Vec::with_capacity(net.len());
    for (l, layer) in net.layers().iter().enumerate() {
        let in_shape = net.input_shape_of(l);
        let in_units = if l == 0 {
            vec![true; in_shape.units()]
        } else {
            masks[l - 1].clone()
        };
        let out_units = &masks[l];
        let new_in_shape = in_shape.with_units(in_units.iter().filter(|&&k| k).count());
        let pruned = prune_layer(layer, in_shape, new_in_shape, &in_units, out_units)?;
        let kept = out_units.iter().filter(|&&k| k).count();
        rows.push(SurgeryRow {
            layer_id: l,
            kept,
            removed: out_units.len() - kept,
            params_before: layer.param_count(),
            params_after: pruned.param_count(),
        });
        layers.push(pruned);
    }
    let def = NetworkDef {
        layers,
        skip_edges: net.skip_edges().to_vec(),
        frl_index: net.frl_index(),
    };
    Ok((def.build()?, SurgeryReport { rows }))
}

fn select<T: Copy>(v: &[T], keep: &[bool]) -> Vec<T> {
    v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect()
}

fn prune_layer(
    layer: &Layer,
    in_shape: Shape,
    new_in_shape: Shape,
    in_units: &[bool],
    out_units: &[bool],
) -> Result<Layer> {
    let resize = |s: Option<Shape>| s.map(|_| new_in_shape);
    Ok(match layer {
        Layer::Dense(d) => Layer::Dense(Dense {
            weights: d.weights.select(out_units, &in_shape.expand_units(in_units)),
            bias: select(&d.bias, out_units),
            activation: d.activation,
        }),
        Layer::Conv2d(c) => {
            let kernel = c.kernel.select(in_units, out_units);
            let mut geometry = c.geometry;
            geometry.channels = kernel.in_channels;
            Layer::Conv2d(Conv2d {
                geometry,
                kernel,
                bias: select(&c.bias, out_units),
                activation: c.activation,
            })
        }
        Layer::Pool2d(p) => {
            let mut geometry = p.geometry;
            geometry.channels = new_in_shape.units();
            Layer::Pool2d(Pool2d {
                geometry,
                mode: p.mode,
            })
        }
        Layer::Lrn(l) => {
            let channels = new_in_shape.units();
            if l.local_size > channels {
                return Err(Error::LocalSize {
                    local_size: l.local_size,
                    channels,
                });
            }
            Layer::Lrn(Lrn {
                local_size: l.local_size,
                shape: resize(l.shape),
            })
        }
        Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
            scale: select(&b.scale, in_units),
            shift: select(&b.shift, in_units),
            shape: resize(b.shape),
        }),
        Layer::Activation(a) => Layer::Activation(ActivationLayer {
            activation: a.activation,
            shape: resize(a.shape),
        }),
    })
}

fn ones(layer_id: usize, len: usize) -> ImportanceVector {
    ImportanceVector {
        layer_id,
        scores: vec![1.0; len],
    }
}

/// Uniformly random keep sets of the configured sizes. Scores are the masks
/// themselves.
pub fn random_plan(net: &Network, cfg: &PruneConfig, seed: u64) -> Result<ImportancePlan> {
    cfg.check(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_space: BTreeMap<Space, Vec<bool>> = BTreeMap::new();
    let mut entries = Vec::new();
    for l in net.prunable_layers().into_iter().rev() {
        let shape = net.output_shape(l);
        let indicator = match cfg.fraction_for(net, l) {
            Some(f) => {
                let units = shape.units();
                let m = by_space.entry(net.space(l)).or_insert_with(|| {
                    let mut m = vec![false; units];
                    for i in index::sample(&mut rng, units, keep_count(units, f)) {
                        m[i] = true;
                    }
                    m
                });
                Some(PruneIndicator {
                    layer_id: l,
                    mask: shape.expand_units(m),
                })
            }
            None => None,
        };
        let scores = match &indicator {
            Some(ind) => ImportanceVector {
                layer_id: l,
                scores: ind.mask.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
            },
            None => ones(l, shape.len()),
        };
        entries.push(PlanEntry::new(scores, shape, indicator));
    }
    entries.reverse();
    Ok(ImportancePlan { entries })
}

/// Weighted layer whose response reaches the final response layer through
/// shape-preserving passthrough layers only.
fn frl_producer(net: &Network) -> Result<usize> {
    let frl = net.frl_index();
    let mut l = frl;
    loop {
        match net.layer(l) {
            Layer::Dense(_) | Layer::Conv2d(_) => return Ok(l),
            Layer::Activation(_) | Layer::BatchNorm(_) | Layer::Lrn(_) if l > 0 => l -= 1,
            _ => return Err(Error::NoWeights(frl)),
        }
    }
}

/// Final response scores from the absolute incoming weights, propagated like
/// the full method.
pub fn magnitude_plan(net: &Network, cfg: &PruneConfig) -> Result<ImportancePlan> {
    let producer = frl_producer(net)?;
    let scores = magnitude_scores(net, producer)?;
    let s_n = ImportanceVector::new(net.frl_index(), scores.scores)?;
    nisp_backward(net, &s_n, cfg)
}

/// Inf-FS ranking on the final response layer, propagated backward.
pub fn nisp_plan(net: &Network, data: &[Sample], cfg: &PruneConfig, alpha: f64) -> Result<ImportancePlan> {
    let s_n = rank_layer(net, data, net.frl_index(), alpha)?;
    nisp_backward(net, &s_n, cfg)
}

/// Every prunable layer ranked on its own responses; no propagation.
pub fn lbl_plan(net: &Network, data: &[Sample], cfg: &PruneConfig, alpha: f64) -> Result<ImportancePlan> {
    cfg.check(net)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut by_space: BTreeMap<Space, Vec<bool>> = BTreeMap::new();
    let mut entries = Vec::new();
    for l in net.prunable_layers().into_iter().rev() {
        let shape = net.output_shape(l);
        let scores = rank_layer(net, data, l, alpha)?;
        let indicator = match cfg.fraction_for(net, l) {
            Some(f) => {
                let space = net.space(l);
                if !by_space.contains_key(&space) {
                    let units = channel_scores(shape, &scores.scores);
                    by_space.insert(space, top_mask(&units, keep_count(units.len(), f))?);
                }
                Some(PruneIndicator {
                    layer_id: l,
                    mask: shape.expand_units(&by_space[&space]),
                })
            }
            None => None,
        };
        entries.push(PlanEntry::new(scores, shape, indicator));
    }
    entries.reverse();
    Ok(ImportancePlan { entries })
}

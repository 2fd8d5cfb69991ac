use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::layer_matrix;
use super::{channel_scores, keep_count, propagate_layer, top_mask};
use super::{ImportancePlan, PlanEntry, PruneConfig, PruneIndicator};
use crate::model::Network;
use crate::ranking::ImportanceVector;
use crate::{Error, Matrix, Result};

fn check_frl_scores(net: &Network, s_n: &ImportanceVector) -> Result<()> {
    let frl = net.frl_index();
    if s_n.layer_id != frl {
        return Err(Error::WrongLayer {
            expected: frl,
            got: s_n.layer_id,
        });
    }
    let n = net.output_shape(frl).len();
    if s_n.len() != n {
        return Err(Error::Shape(format!(
            "final response importance has {} entries, layer {} has {} neurons",
            s_n.len(),
            frl,
            n
        )));
    }
    if let Some(i) = s_n.scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidScore(i));
    }
    Ok(())
}

/// One backward pass from the final response layer to the input.
///
/// At each layer the keep mask (if configured) is chosen from the unzeroed
/// scores, then pruned neurons are zeroed before the scores move further
/// down. Skip sources receive the merge layer's importance in addition to
/// what reaches them through the chain. Layers tied by skip edges share the
/// mask chosen at their highest producer. The plan holds every layer from 0
/// to the final response layer.
pub fn nisp_backward(net: &Network, s_n: &ImportanceVector, cfg: &PruneConfig) -> Result<ImportancePlan> {
    check_frl_scores(net, s_n)?;
    cfg.check(net)?;
    let frl = net.frl_index();
    if let Some(&(s, m)) = net.skip_edges().iter().find(|&&(s, m)| s <= frl && m > frl) {
        return Err(Error::Unsupported(format!(
            "skip edge ({}, {}) crosses the final response layer {}",
            s, m, frl
        )));
    }

    let mut s_out: Vec<Vec<f64>> = (0..=frl)
        .map(|l| vec![0.0; net.output_shape(l).len()])
        .collect();
    s_out[frl] = s_n.scores.clone();
    let mut space_masks = BTreeMap::new();
    let mut entries = Vec::with_capacity(frl + 1);

    for l in (0..=frl).rev() {
        let mut s = core::mem::take(&mut s_out[l]);
        let shape = net.output_shape(l);
        let mut indicator = None;
        let fraction = if net.is_prunable(l) {
            cfg.fraction_for(net, l)
        } else {
            None
        };
        if let Some(fraction) = fraction {
            let space = net.space(l);
            if !space_masks.contains_key(&space) {
                let unit_scores = channel_scores(shape, &s);
                let keep = keep_count(unit_scores.len(), fraction);
                space_masks.insert(space, top_mask(&unit_scores, keep)?);
            }
            indicator = Some(PruneIndicator {
                layer_id: l,
                mask: shape.expand_units(&space_masks[&space]),
            });
        }
        entries.push(PlanEntry::new(ImportanceVector::new(l, s.clone())?, shape, indicator.clone()));

        if let Some(ind) = &indicator {
            for (v, &keep) in s.iter_mut().zip(&ind.mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        for src in net.skip_sources(l) {
            for (acc, v) in s_out[src].iter_mut().zip(&s) {
                *acc += v;
            }
        }
        if l > 0 {
            let s_in = propagate_layer(net, l, &s)?;
            for (acc, v) in s_out[l - 1].iter_mut().zip(&s_in) {
                *acc += v;
            }
        }
    }
    entries.reverse();
    Ok(ImportancePlan { entries })
}

/// Product of the propagation matrices of layers `end, end − 1, ..., start`,
/// mapping importance on layer `end`'s output to importance on the input of
/// layer `start`.
pub fn propagation_product(net: &Network, start: usize, end: usize) -> Result<Matrix> {
    if end >= net.len() || start > end {
        return Err(Error::OutOfRange {
            index: end.max(start),
            limit: net.len(),
        });
    }
    let mut product = layer_matrix(net, end)?;
    for l in (start..end).rev() {
        product = product.matmul(&layer_matrix(net, l)?)?;
    }
    Ok(product)
}

/// Importance of layer `k`'s response as the explicit product
/// `s_n · BP^(frl) ··· BP^(k+1)`; no pruning.
pub fn importance_closed_form(net: &Network, s_n: &ImportanceVector, k: usize) -> Result<ImportanceVector> {
    check_frl_scores(net, s_n)?;
    let frl = net.frl_index();
    if k > frl {
        return Err(Error::OutOfRange {
            index: k,
            limit: frl + 1,
        });
    }
    if let Some(&(s, m)) = net.skip_edges().iter().find(|&&(s, _)| s >= k && s <= frl) {
        return Err(Error::Unsupported(format!(
            "skip edge ({}, {}) is not a chain of propagation matrices",
            s, m
        )));
    }
    if k == frl {
        return Ok(s_n.clone());
    }
    let product = propagation_product(net, k + 1, frl)?;
    ImportanceVector::new(k, product.vecmat(&s_n.scores)?)
}

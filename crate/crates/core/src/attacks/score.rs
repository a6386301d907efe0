//! Score-based attacks: they read the model's continuous outputs but never
//! its gradients. Both operate on pixels, so they require spatial inputs.

use crate::adversarial::{AdversarialState, AttackError, AttackOutcome};
use crate::attacks::{tuned, AttackSuiteConfig};
use crate::math::softmax;
use crate::rng::AttackRng;
use crate::tensor::InputTensor;
use serde_json::json;
use std::collections::BTreeSet;

fn all_pixels(h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut pixels = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            pixels.push((row, col));
        }
    }
    pixels
}

/// Sets every channel of one pixel to `current + p * (extreme - current)`.
fn perturb_pixel(
    image: &InputTensor,
    row: usize,
    col: usize,
    extreme: f64,
    p: f64,
) -> InputTensor {
    let (_, _, channels) = image.spatial_dims().expect("caller verified spatial input");
    let mut data = image.data().to_vec();
    for ch in 0..channels {
        let idx = image.pixel_index(row, col, ch);
        data[idx] += p * (extreme - data[idx]);
    }
    image.with_data(data).expect("same length")
}

/// Tries, for every pixel in random order, setting all its channels to the
/// upper and then the lower bound. All candidates are probed, so the closest
/// adversarial (typically in L0) is kept.
pub fn single_pixel_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("single_pixel");
    let x0 = state.original_input().clone();
    let (h, w, _) = x0.spatial_dims().ok_or(AttackError::NotSpatialInput)?;
    let bounds = state.model().bounds();

    let mut order = all_pixels(h, w);
    rng.shuffle(&mut order);
    let limit = config.score.sp_max_pixels.unwrap_or(order.len()).min(order.len());

    let mut found = false;
    for &(row, col) in order.iter().take(limit) {
        for extreme in [bounds.max(), bounds.min()] {
            let candidate = perturb_pixel(&x0, row, col, extreme, 1.0);
            found |= state.try_candidate(&candidate)?.0;
        }
    }
    if found {
        Ok(run.finish(state, tuned(&[("pixels_tried", json!(limit))])))
    } else {
        Err(AttackError::AttackFailed)
    }
}

/// Greedy local search over pixels. Each round scores the active pixels by
/// how much pushing them to a bound reduces the original-class probability,
/// permanently applies the best few, and re-activates the neighborhoods of
/// the pixels it changed.
pub fn local_search_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("local_search");
    let x0 = state.original_input().clone();
    let (h, w, _) = x0.spatial_dims().ok_or(AttackError::NotSpatialInput)?;
    let bounds = state.model().bounds();
    let l0 = state.original_label().index();
    let cfg = &config.score;

    let mut pixels = all_pixels(h, w);
    rng.shuffle(&mut pixels);
    let init_count = ((cfg.ls_init_fraction * (h * w) as f64).round() as usize)
        .clamp(1, h * w);
    let mut active: BTreeSet<(usize, usize)> = pixels.into_iter().take(init_count).collect();

    let mut working = x0.clone();
    let mut found = false;
    let mut rounds_used = 0;
    for _ in 0..cfg.ls_rounds {
        rounds_used += 1;
        let base_logits = state.predictions(&working)?;
        let p_base = softmax(&base_logits)[l0];

        // Score: probability drop achieved by the better of the two extremes.
        let mut scored: Vec<((usize, usize), f64, f64)> = Vec::with_capacity(active.len());
        for &(row, col) in &active {
            let mut best_drop = f64::NEG_INFINITY;
            let mut best_extreme = bounds.max();
            for extreme in [bounds.min(), bounds.max()] {
                let candidate = perturb_pixel(&working, row, col, extreme, cfg.ls_p);
                let probe = state.probe(&candidate)?;
                found |= probe.is_adversarial;
                let drop = p_base - softmax(&probe.logits)[l0];
                if drop > best_drop {
                    best_drop = drop;
                    best_extreme = extreme;
                }
            }
            scored.push(((row, col), best_drop, best_extreme));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut perturbed = Vec::new();
        for &((row, col), _, extreme) in scored.iter().take(cfg.ls_top_t) {
            working = perturb_pixel(&working, row, col, extreme, cfg.ls_p);
            perturbed.push((row, col));
        }
        let (adversarial, _) = state.try_candidate(&working)?;
        if adversarial {
            found = true;
            break;
        }

        // Re-activate the Chebyshev neighborhoods of the changed pixels.
        active.clear();
        let r = cfg.ls_neighborhood as isize;
        for (row, col) in perturbed {
            for dr in -r..=r {
                for dc in -r..=r {
                    let nr = row as isize + dr;
                    let nc = col as isize + dc;
                    if (0..h as isize).contains(&nr) && (0..w as isize).contains(&nc) {
                        active.insert((nr as usize, nc as usize));
                    }
                }
            }
        }
        if active.is_empty() {
            break;
        }
    }

    if found {
        Ok(run.finish(
            state,
            tuned(&[
                ("rounds", json!(rounds_used)),
                ("top_t", json!(cfg.ls_top_t)),
                ("neighborhood", json!(cfg.ls_neighborhood)),
            ]),
        ))
    } else {
        Err(AttackError::AttackFailed)
    }
}

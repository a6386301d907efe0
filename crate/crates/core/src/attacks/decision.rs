//! Decision-based attacks: they rely only on the adversarial verdict, so
//! they work against models that expose nothing but a top label.

use crate::adversarial::{AdversarialState, AttackError, AttackOutcome};
use crate::attacks::{tuned, AttackSuiteConfig};
use crate::math::{dot, l2_norm};
use crate::rng::AttackRng;
use crate::tensor::{clip, InputTensor};
use crate::tuning::{line_search_minimal_epsilon, search_minimal_epsilon};
use serde_json::json;

/// Distribution of the additive-noise attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Elementwise uniform on `[-1, 1]`, scaled.
    Uniform,
    /// Elementwise standard normal, scaled.
    Gaussian,
}

/// Adds scaled random noise, searching for the smallest scale that crosses
/// the decision boundary. The noise for a given scale is drawn from a
/// substream keyed by the scale, so re-probing a scale is reproducible.
pub fn additive_noise_attack(
    state: &mut AdversarialState,
    kind: NoiseKind,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let name = match kind {
        NoiseKind::Uniform => "additive_uniform",
        NoiseKind::Gaussian => "additive_gaussian",
    };
    let run = state.begin_run(name);
    let x0 = state.original_input().clone();
    let range = state.model().bounds().range();
    let n = x0.len();

    let eps = search_minimal_epsilon(state, &config.decision.noise_search, &mut |s, eps| {
        let mut sub = rng.substream(eps.to_bits());
        let data: Vec<f64> = x0
            .data()
            .iter()
            .map(|x| {
                let draw = match kind {
                    NoiseKind::Uniform => sub.uniform_in(-1.0, 1.0),
                    NoiseKind::Gaussian => sub.normal(),
                };
                x + eps * range * draw
            })
            .take(n)
            .collect();
        Ok(s.try_candidate(&x0.with_data(data).expect("same length"))?.0)
    })?;
    match eps {
        Some(e) => Ok(run.finish(state, tuned(&[("epsilon", json!(e))]))),
        None => Err(AttackError::AttackFailed),
    }
}

/// Sets a fraction of elements to the bounds (black or white, fair coin),
/// searching for the smallest fraction that is adversarial. Several draws
/// are tried per fraction.
pub fn salt_and_pepper_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("salt_and_pepper");
    let x0 = state.original_input().clone();
    let bounds = state.model().bounds();
    let n = x0.len();
    let draws = config.decision.sp_draws_per_fraction.max(1);

    let fraction = search_minimal_epsilon(state, &config.decision.noise_search, &mut |s, p| {
        let count = ((p * n as f64).round() as usize).min(n);
        if count == 0 {
            return Ok(false);
        }
        let mut sub = rng.substream(p.to_bits());
        for _ in 0..draws {
            let mut indices: Vec<usize> = (0..n).collect();
            sub.shuffle(&mut indices);
            let mut data = x0.data().to_vec();
            for &i in indices.iter().take(count) {
                data[i] = if sub.chance(0.5) {
                    bounds.max()
                } else {
                    bounds.min()
                };
            }
            if s.try_candidate(&x0.with_data(data).expect("same length"))?.0 {
                return Ok(true);
            }
        }
        Ok(false)
    })?;
    match fraction {
        Some(p) => Ok(run.finish(state, tuned(&[("fraction", json!(p))]))),
        None => Err(AttackError::AttackFailed),
    }
}

/// Blends the input towards the bounds midpoint, searching for the smallest
/// blend weight that is adversarial.
pub fn contrast_reduction_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("contrast_reduction");
    let x0 = state.original_input().clone();
    let mid = state.model().bounds().midpoint();

    let eps = line_search_minimal_epsilon(state, &config.decision.noise_search, |e| {
        let data = x0.data().iter().map(|x| (1.0 - e) * x + e * mid).collect();
        x0.with_data(data).expect("same length")
    })?;
    match eps {
        Some(e) => Ok(run.finish(state, tuned(&[("epsilon", json!(e))]))),
        None => Err(AttackError::AttackFailed),
    }
}

fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with symmetric (edge-inclusive) reflection at the
/// borders. Channels are blurred independently. `sigma = 0` is the identity.
pub(crate) fn gaussian_blur_image(image: &InputTensor, sigma: f64) -> InputTensor {
    let (h, w, c) = image
        .spatial_dims()
        .expect("caller verified spatial input");
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let data = image.data();
    let mut horizontal = vec![0.0; data.len()];
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, j) in (-radius..=radius).enumerate() {
                    let cc = reflect(col as isize + j, w);
                    acc += kernel[ki] * data[image.pixel_index(row, cc, ch)];
                }
                horizontal[image.pixel_index(row, col, ch)] = acc;
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (ki, j) in (-radius..=radius).enumerate() {
                    let rr = reflect(row as isize + j, h);
                    acc += kernel[ki] * horizontal[image.pixel_index(rr, col, ch)];
                }
                out[image.pixel_index(row, col, ch)] = acc;
            }
        }
    }
    image.with_data(out).expect("same length")
}

/// Blurs the input with increasing strength, searching for the weakest blur
/// that is adversarial. Spatial inputs only.
pub fn gaussian_blur_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("gaussian_blur");
    let x0 = state.original_input().clone();
    if x0.spatial_dims().is_none() {
        return Err(AttackError::NotSpatialInput);
    }
    let sigma_max = config.decision.blur_sigma_max;

    let eps = line_search_minimal_epsilon(state, &config.decision.noise_search, |e| {
        gaussian_blur_image(&x0, e * sigma_max)
    })?;
    match eps {
        Some(e) => Ok(run.finish(
            state,
            tuned(&[("epsilon", json!(e)), ("sigma", json!(e * sigma_max))]),
        )),
        None => Err(AttackError::AttackFailed),
    }
}

/// Starts from any adversarial and walks along the decision boundary:
/// random orthogonal steps on the sphere around the original, followed by a
/// contraction towards it, keeping proposals that stay adversarial and get
/// closer. Step sizes adapt to the acceptance rate every 30 trials.
pub fn boundary_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("boundary");
    let cfg = &config.decision;
    let x0 = state.original_input().clone();
    let bounds = state.model().bounds();
    let n = x0.len();

    // Starting adversarial: the running best if present, else random search.
    let (mut current, mut current_distance) = match state.best_input() {
        Some(best) => (best.clone(), state.best_distance()),
        None => {
            let mut found = None;
            for _ in 0..cfg.boundary_start_attempts {
                let data: Vec<f64> = (0..n)
                    .map(|_| rng.uniform_in(bounds.min(), bounds.max()))
                    .collect();
                let candidate = x0.with_data(data).expect("same length");
                let (adversarial, d) = state.try_candidate(&candidate)?;
                if adversarial {
                    found = Some((candidate, d));
                    break;
                }
            }
            found.ok_or(AttackError::StartingPointNotFound {
                attempts: cfg.boundary_start_attempts,
            })?
        }
    };

    let mut spherical = cfg.boundary_spherical_step;
    let mut source = cfg.boundary_source_step;
    let mut trials = 0u32;
    let mut accepted = 0u32;
    for _ in 0..cfg.boundary_iterations {
        // Fixed RNG consumption per iteration: n normal draws.
        let eta: Vec<f64> = (0..n).map(|_| rng.normal()).collect();

        let diff: Vec<f64> = x0.data().iter().zip(current.data()).map(|(a, b)| a - b).collect();
        let radius = l2_norm(&diff);
        if radius == 0.0 {
            break;
        }
        let u: Vec<f64> = diff.iter().map(|v| v / radius).collect();

        // Orthogonalize the step against the source direction and put the
        // proposal back on the sphere of the current radius.
        let along = dot(&eta, &u);
        let mut orth: Vec<f64> = eta.iter().zip(&u).map(|(e, ui)| e - along * ui).collect();
        let orth_norm = l2_norm(&orth);
        if orth_norm < 1e-30 {
            continue;
        }
        let scale = spherical * radius / orth_norm;
        for v in orth.iter_mut() {
            *v *= scale;
        }
        let mut proposal: Vec<f64> = current.data().iter().zip(&orth).map(|(c, o)| c + o).collect();
        let off: Vec<f64> = proposal.iter().zip(x0.data()).map(|(p, x)| p - x).collect();
        let off_norm = l2_norm(&off);
        if off_norm < 1e-30 {
            continue;
        }
        for (p, (x, o)) in proposal.iter_mut().zip(x0.data().iter().zip(&off)) {
            *p = x + o * radius / off_norm;
        }
        // Contract towards the original.
        for (p, x) in proposal.iter_mut().zip(x0.data()) {
            *p = x + (1.0 - source) * (*p - *x);
        }
        let candidate = clip(&x0.with_data(proposal).expect("same length"), bounds);

        let (adversarial, d) = state.try_candidate(&candidate)?;
        trials += 1;
        if adversarial {
            accepted += 1;
            if d < current_distance {
                current = candidate;
                current_distance = d;
            }
        }

        if trials == 30 {
            let rate = f64::from(accepted) / 30.0;
            let adapt = cfg.boundary_step_adaptation;
            if rate > 0.5 {
                spherical *= adapt;
                source *= adapt;
            } else if rate < 0.2 {
                spherical /= adapt;
                source /= adapt;
            }
            spherical = spherical.clamp(1e-12, 2.0);
            source = source.clamp(1e-12, 0.99);
            trials = 0;
            accepted = 0;
        }
    }

    Ok(run.finish(
        state,
        tuned(&[
            ("spherical_step", json!(spherical)),
            ("source_step", json!(source)),
        ]),
    ))
}

/// Starts from an adversarial (the running best, or a salt-and-pepper one)
/// and greedily resets perturbed elements to their original values while the
/// result stays adversarial, minimizing the number of changed elements.
pub fn pointwise_attack(
    state: &mut AdversarialState,
    config: &AttackSuiteConfig,
    rng: &mut AttackRng,
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("pointwise");
    let x0 = state.original_input().clone();

    let mut working = match state.best_input() {
        Some(best) => best.clone(),
        None => {
            salt_and_pepper_attack(state, config, rng)?;
            state
                .best_input()
                .cloned()
                .ok_or(AttackError::AttackFailed)?
        }
    };

    let mut rounds_used = 0;
    for _ in 0..config.decision.pointwise_rounds {
        rounds_used += 1;
        let mut perturbed: Vec<usize> = working
            .data()
            .iter()
            .zip(x0.data())
            .enumerate()
            .filter(|(_, (w, x))| w != x)
            .map(|(i, _)| i)
            .collect();
        if perturbed.is_empty() {
            break;
        }
        rng.shuffle(&mut perturbed);

        let mut any_reset = false;
        for &i in &perturbed {
            let mut data = working.data().to_vec();
            data[i] = x0.data()[i];
            let candidate = working.with_data(data).expect("same length");
            if state.try_candidate(&candidate)?.0 {
                working = candidate;
                any_reset = true;
            }
        }
        if !any_reset {
            break;
        }
    }

    Ok(run.finish(state, tuned(&[("rounds", json!(rounds_used))])))
}

/// Looks the original input up in a table of precomputed candidates and
/// probes the stored candidate. Inputs are matched by exact equality.
pub fn precomputed_attack(
    state: &mut AdversarialState,
    table: &[(InputTensor, InputTensor)],
) -> Result<AttackOutcome, AttackError> {
    let run = state.begin_run("precomputed");
    let x0 = state.original_input().clone();
    let candidate = table
        .iter()
        .find(|(input, _)| *input == x0)
        .map(|(_, candidate)| candidate.clone())
        .ok_or(AttackError::InputNotInTable)?;
    if state.try_candidate(&candidate)?.0 {
        Ok(run.finish(state, tuned(&[])))
    } else {
        Err(AttackError::AttackFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversarial::AdversarialState;
    use crate::attacks::testkit::{interior_margin_model, state_for};
    use crate::criteria::Criterion;
    use crate::distances::DistanceMeasure;
    use crate::math::l2_distance;
    use crate::models::{DynModel, LinearSoftmaxModel};
    use crate::tensor::{Bounds, Label};
    use std::sync::Arc;

    fn margin_state(measure: DistanceMeasure) -> (AdversarialState, Vec<f64>, f64) {
        let (model, x0, margin) = interior_margin_model();
        let state = state_for(model, x0.clone(), 0, measure);
        (state, x0, margin)
    }

    #[test]
    fn additive_uniform_noise_stays_within_its_scale() {
        let (mut state, x0, _) = margin_state(DistanceMeasure::LinfDistance);
        let config = AttackSuiteConfig::new();
        let mut rng = AttackRng::for_sample(3, 1);
        let outcome =
            additive_noise_attack(&mut state, NoiseKind::Uniform, &config, &mut rng).unwrap();
        assert!(outcome.success);
        let eps = outcome.tuned_parameters["epsilon"].as_f64().unwrap();
        let best = state.best_input().unwrap();
        for (b, x) in best.data().iter().zip(&x0) {
            assert!((b - x).abs() <= eps + 1e-12, "noise exceeded its scale");
        }
    }

    #[test]
    fn additive_gaussian_noise_is_deterministic_per_seed() {
        let run = || {
            let (mut state, _, _) = margin_state(DistanceMeasure::MeanSquaredDistance);
            let config = AttackSuiteConfig::new();
            let mut rng = AttackRng::for_sample(9, 4);
            additive_noise_attack(&mut state, NoiseKind::Gaussian, &config, &mut rng).unwrap();
            state.best_input().unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn salt_and_pepper_only_writes_bound_values() {
        let (mut state, x0, _) = margin_state(DistanceMeasure::L0Distance);
        let config = AttackSuiteConfig::new();
        let mut rng = AttackRng::for_sample(5, 2);
        let outcome = salt_and_pepper_attack(&mut state, &config, &mut rng).unwrap();
        assert!(outcome.success);
        assert!(outcome.tuned_parameters["fraction"].as_f64().unwrap() > 0.0);
        let best = state.best_input().unwrap();
        for (b, x) in best.data().iter().zip(&x0) {
            assert!(
                b == x || *b == 0.0 || *b == 1.0,
                "element {b} is neither original nor a bound"
            );
        }
    }

    #[test]
    fn contrast_reduction_fades_toward_the_midpoint() {
        // boundary at x[0] = 0.6: (1 - e) * 0.9 + e * 0.5 crosses at e = 0.75
        let (mut state, _, _) = margin_state(DistanceMeasure::MeanAbsoluteDistance);
        let config = AttackSuiteConfig::new();
        let outcome = contrast_reduction_attack(&mut state, &config).unwrap();
        let eps = outcome.tuned_parameters["epsilon"].as_f64().unwrap();
        assert!((eps - 0.75).abs() < 1e-4, "eps = {eps}");
        let best = state.best_input().unwrap();
        assert_eq!(best.data()[1], 0.5, "midpoint coordinate must not move");
    }

    #[test]
    fn blur_preserves_constant_images_and_the_mean() {
        let image = InputTensor::new(vec![0.7; 25], vec![5, 5]).unwrap();
        let blurred = gaussian_blur_image(&image, 1.3);
        for v in blurred.data() {
            assert!((v - 0.7).abs() < 1e-12);
        }

        let data: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let image = InputTensor::new(data.clone(), vec![5, 5]).unwrap();
        let blurred = gaussian_blur_image(&image, 2.0);
        let before: f64 = data.iter().sum();
        let after: f64 = blurred.data().iter().sum();
        assert!((before - after).abs() < 1e-6, "blur must conserve mass");
        assert_eq!(gaussian_blur_image(&image, 0.0), image);
    }

    #[test]
    fn gaussian_blur_attack_spreads_a_decisive_peak() {
        // class flips when the center pixel drops below 0.5
        let mut w_flip = vec![0.0; 9];
        w_flip[4] = -8.0;
        let model: DynModel = Arc::new(
            LinearSoftmaxModel::new(
                vec![vec![0.0; 9], w_flip],
                vec![0.0, 4.0],
                Bounds::new(0.0, 1.0).unwrap(),
                vec![3, 3],
            )
            .unwrap(),
        );
        let mut x0 = vec![0.0; 9];
        x0[4] = 1.0;
        let input = InputTensor::new(x0, vec![3, 3]).unwrap();
        let mut state = AdversarialState::new(
            model,
            Arc::new(Criterion::Misclassification),
            DistanceMeasure::MeanSquaredDistance,
            input,
            Label(0),
        )
        .unwrap();
        let config = AttackSuiteConfig::new();
        let outcome = gaussian_blur_attack(&mut state, &config).unwrap();
        assert!(outcome.success);
        let best = state.best_input().unwrap();
        assert!(best.data()[4] < 0.5, "peak must be spread below threshold");
        assert!(best.data()[0] > 0.0, "mass must reach the corners");
    }

    #[test]
    fn blur_attack_rejects_flat_inputs() {
        let (mut state, _, _) = margin_state(DistanceMeasure::MeanSquaredDistance);
        let config = AttackSuiteConfig::new();
        assert!(matches!(
            gaussian_blur_attack(&mut state, &config),
            Err(AttackError::NotSpatialInput)
        ));
    }

    #[test]
    fn boundary_attack_walks_close_to_the_margin() {
        let (mut state, x0, margin) = margin_state(DistanceMeasure::MeanSquaredDistance);
        let mut config = AttackSuiteConfig::new();
        config.decision.boundary_iterations = 1500;
        let mut rng = AttackRng::for_sample(13, 0);
        let outcome = boundary_attack(&mut state, &config, &mut rng).unwrap();
        assert!(outcome.success);
        let l2 = l2_distance(&x0, state.best_input().unwrap().data());
        assert!(l2 >= margin - 1e-12);
        assert!(l2 <= margin * 2.0, "l2 = {l2}, margin = {margin}");
    }

    #[test]
    fn boundary_attack_resumes_from_an_existing_best() {
        let (mut state, _, _) = margin_state(DistanceMeasure::MeanSquaredDistance);
        // plant a coarse adversarial as the running best
        let coarse = InputTensor::new(vec![0.0, 0.5], vec![2]).unwrap();
        assert!(state.adopt_best(&coarse).unwrap());
        let planted = state.best_distance();
        let mut config = AttackSuiteConfig::new();
        config.decision.boundary_iterations = 300;
        config.decision.boundary_start_attempts = 0; // must not need a start
        let mut rng = AttackRng::for_sample(13, 1);
        boundary_attack(&mut state, &config, &mut rng).unwrap();
        assert!(state.best_distance() < planted, "walk must improve the best");
    }

    #[test]
    fn boundary_attack_reports_a_missing_starting_point() {
        let (model, x0, _) = interior_margin_model();
        let input = InputTensor::new(x0, vec![2]).unwrap();
        // target class 1 requires logits[1] > logits[0]; that region exists,
        // but zero attempts are allowed, so no start can be found
        let mut state = AdversarialState::new(
            model,
            Arc::new(Criterion::TargetClass { target: Label(1) }),
            DistanceMeasure::MeanSquaredDistance,
            input,
            Label(0),
        )
        .unwrap();
        let mut config = AttackSuiteConfig::new();
        config.decision.boundary_start_attempts = 0;
        let mut rng = AttackRng::for_sample(13, 2);
        assert!(matches!(
            boundary_attack(&mut state, &config, &mut rng),
            Err(AttackError::StartingPointNotFound { attempts: 0 })
        ));
    }

    #[test]
    fn boundary_attack_is_deterministic_per_seed() {
        let run = || {
            let (mut state, _, _) = margin_state(DistanceMeasure::MeanSquaredDistance);
            let mut config = AttackSuiteConfig::new();
            config.decision.boundary_iterations = 200;
            let mut rng = AttackRng::for_sample(17, 6);
            boundary_attack(&mut state, &config, &mut rng).unwrap();
            state.best_input().unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pointwise_reduces_to_a_single_decisive_element() {
        // adversarial iff 4 * (x[1] + x[4]) > 3; from x0 = 0.2 everywhere a
        // single saturated element at index 1 or 4 suffices
        let mut w_flip = vec![0.0; 9];
        w_flip[1] = 4.0;
        w_flip[4] = 4.0;
        let model: DynModel = Arc::new(
            LinearSoftmaxModel::new(
                vec![vec![0.0; 9], w_flip],
                vec![3.0, 0.0],
                Bounds::new(0.0, 1.0).unwrap(),
                vec![3, 3],
            )
            .unwrap(),
        );
        let input = InputTensor::new(vec![0.2; 9], vec![3, 3]).unwrap();
        let mut state = AdversarialState::new(
            model,
            Arc::new(Criterion::Misclassification),
            DistanceMeasure::L0Distance,
            input,
            Label(0),
        )
        .unwrap();
        let config = AttackSuiteConfig::new();
        let mut rng = AttackRng::for_sample(23, 8);
        let outcome = pointwise_attack(&mut state, &config, &mut rng).unwrap();
        assert!(outcome.success);
        assert_eq!(state.best_distance().value, 1.0, "one changed element");
        let best = state.best_input().unwrap();
        let changed: Vec<usize> = best
            .data()
            .iter()
            .zip(state.original_input().data())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        assert!(changed == vec![1] || changed == vec![4], "{changed:?}");
    }

    #[test]
    fn precomputed_attack_matches_by_exact_input() {
        let (model, x0, _) = interior_margin_model();
        let input = InputTensor::new(x0.clone(), vec![2]).unwrap();
        let adversarial = InputTensor::new(vec![0.1, 0.5], vec![2]).unwrap();
        let harmless = InputTensor::new(vec![0.89, 0.5], vec![2]).unwrap();
        let other = InputTensor::new(vec![0.3, 0.3], vec![2]).unwrap();

        // hit with an adversarial candidate
        let mut state = state_for(model.clone(), x0.clone(), 0, DistanceMeasure::MeanSquaredDistance);
        let table = vec![(input.clone(), adversarial)];
        let outcome = precomputed_attack(&mut state, &table).unwrap();
        assert!(outcome.success);
        assert!(state.best_input().is_some());

        // hit with a non-adversarial candidate
        let mut state = state_for(model.clone(), x0.clone(), 0, DistanceMeasure::MeanSquaredDistance);
        let table = vec![(input, harmless)];
        assert!(matches!(
            precomputed_attack(&mut state, &table),
            Err(AttackError::AttackFailed)
        ));

        // miss
        let mut state = state_for(model, x0, 0, DistanceMeasure::MeanSquaredDistance);
        let table = vec![(other.clone(), other)];
        assert!(matches!(
            precomputed_attack(&mut state, &table),
            Err(AttackError::InputNotInTable)
        ));
    }
}

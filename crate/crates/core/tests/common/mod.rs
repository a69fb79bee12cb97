#![allow(dead_code)]

use fedcast::models::{build_graph, expand_vars, init_model, target_matrix, Arch, Mode, ModelSpec, ParamSet};
use fedcast::preprocess::WindowSample;
use fedcast::rng::substream;
use fedcast::tensor::{grad_check, GradCheckReport};
use fedcast::Result;
use rand::Rng;

pub fn toy_batch(spec: &ModelSpec, n: usize, seed: u64) -> Vec<WindowSample> {
    let mut rng = substream(seed, "toy", &[]);
    let t = spec.steps();
    (0..n)
        .map(|i| WindowSample {
            features: (0..spec.num_features * t)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            num_features: spec.num_features,
            thpt_history: (0..t).map(|_| rng.random_range(0.0..1.0)).collect(),
            target: (0..spec.horizon).map(|_| rng.random_range(0.0..1.0)).collect(),
            anchor: spec.history + i,
        })
        .collect()
}

/// H=5, three features, every width at most 8.
pub fn toy_spec(arch: Arch) -> ModelSpec {
    let mut s = ModelSpec::new(arch, 3, 5, 1);
    s.hidden = 8;
    s.ff_hidden = 8;
    s.dense = 8;
    s.heads = 2;
    s
}

/// Finite-difference check of the training-mode MSE objective.
pub fn model_grad_check(spec: &ModelSpec, params: &ParamSet, batch: &[WindowSample]) -> Result<GradCheckReport> {
    let refs: Vec<&WindowSample> = batch.iter().collect();
    let target = target_matrix(spec, &refs)?;
    let tensors = fedcast::models::trainable_tensors(params);
    grad_check(
        |tape, vars| {
            let all = expand_vars(params, vars);
            let g = build_graph(spec, tape, params, &all, &refs, Mode::Train)?;
            let t = tape.constant(target.clone());
            tape.mse(g.output, t)
        },
        &tensors,
        1e-5,
    )
}

pub fn arch_grad_check(arch: Arch, seed: u64) -> Result<GradCheckReport> {
    let spec = toy_spec(arch);
    let params = init_model(&spec, seed)?;
    model_grad_check(&spec, &params, &toy_batch(&spec, 2, seed + 1))
}

/// ParamSet with the given entry shapes and `(is_batchnorm, trainable)` tags,
/// filled uniformly from `[-1, 1)`.
pub fn random_params(layout: &[(&str, Vec<usize>, bool, bool)], rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    for (name, shape, bn, trainable) in layout {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.push(
            *name,
            fedcast::tensor::Tensor::new(shape.clone(), data).unwrap(),
            *bn,
            *trainable,
        )
        .unwrap();
    }
    p
}

pub fn mixed_layout() -> Vec<(&'static str, Vec<usize>, bool, bool)> {
    vec![
        ("fc1.weight", vec![4, 3], false, true),
        ("fc1.bias", vec![3], false, true),
        ("bn.gamma", vec![3], true, true),
        ("bn.beta", vec![3], true, true),
        ("bn.running_mean", vec![3], true, false),
        ("bn.running_var", vec![3], true, false),
        ("fc2.weight", vec![3, 1], false, true),
    ]
}

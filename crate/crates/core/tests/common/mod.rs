#![allow(dead_code)]

use modbench::tensor::{grad_check, GradCheckConfig, InitSpec};
use modbench::{Decoder64, MethodSpec, ModelConfig, Tensor64};

/// Shift every parameter by Gaussian noise so that no gradient sits at a
/// special point (zero gates, identity mixes, unit norms).
pub fn perturb(model: &Decoder64, seed: u64, std: f64) {
    for p in model.params().iter() {
        let noise: Vec<f64> = InitSpec::normal(std).materialize(p.tensor.shape(), seed, &p.name);
        p.tensor
            .update_value(|v| v.iter_mut().zip(&noise).for_each(|(a, n)| *a += n));
    }
}

pub fn tokens(n: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let raw: Vec<f64> = InitSpec::normal(1.0).materialize(&[n], seed, "tokens");
    raw.iter()
        .map(|x| ((x.abs() * 7919.0) as usize) % vocab)
        .collect()
}

/// Max relative gradient error of a weighted-sum-of-logits objective.
pub fn model_grad_error(cfg: &ModelConfig, spec: &MethodSpec, seed: u64) -> f64 {
    let model = Decoder64::new(cfg, spec, seed).unwrap();
    perturb(&model, seed + 1, 0.1);
    let (batch, seq) = (2, 5);
    let toks = tokens(batch * seq, cfg.vocab, seed);
    let n = batch * seq * cfg.vocab;
    let weights: Vec<f64> = InitSpec::normal(1.0).materialize(&[n], seed, "objective");
    let forward = || -> Tensor64 {
        let out = model.forward(&toks, batch, Default::default()).unwrap();
        out.logits.dot_const(weights.clone())
    };
    let params = model.params().tensors();
    let cfg = GradCheckConfig {
        coords_per_param: 6,
        seed,
        ..Default::default()
    };
    grad_check(forward, &params, &cfg).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub mod fixtures {
    use std::collections::BTreeMap;

    use modbench::methods::MethodTag;

    fn rows(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    fn num(s: &str) -> f64 {
        s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
    }

    pub struct MainRow {
        pub method: MethodTag,
        pub climb: f64,
        pub delta: f64,
        pub z: f64,
        pub p_bonf: String,
    }

    pub fn main_results() -> Vec<MainRow> {
        rows(include_str!("../fixtures/main_results.csv"))
            .into_iter()
            .map(|r| MainRow {
                method: r[0].parse().unwrap(),
                climb: num(&r[1]),
                delta: num(&r[2]),
                z: num(&r[3]),
                p_bonf: r[4].clone(),
            })
            .collect()
    }

    pub struct CrossRow {
        pub method: MethodTag,
        pub small: f64,
        pub large: f64,
        pub delta_large: f64,
        pub rank: String,
    }

    pub fn cross_scale() -> Vec<CrossRow> {
        rows(include_str!("../fixtures/cross_scale.csv"))
            .into_iter()
            .map(|r| CrossRow {
                method: r[0].parse().unwrap(),
                small: num(&r[1]),
                large: num(&r[2]),
                delta_large: num(&r[3]),
                rank: r[4].clone(),
            })
            .collect()
    }

    /// task → (primary, a100, delta)
    pub fn per_task() -> Vec<(String, f64, f64, f64)> {
        rows(include_str!("../fixtures/per_task.csv"))
            .into_iter()
            .map(|r| (r[0].clone(), num(&r[1]), num(&r[2]), num(&r[3])))
            .collect()
    }

    /// (method, val loss, CLIMB-avg, z)
    pub fn val_loss() -> Vec<(MethodTag, f64, f64, f64)> {
        rows(include_str!("../fixtures/val_loss.csv"))
            .into_iter()
            .map(|r| (r[0].parse().unwrap(), num(&r[1]), num(&r[2]), num(&r[3])))
            .collect()
    }

    pub fn seeds() -> BTreeMap<MethodTag, Vec<(u64, f64)>> {
        let mut out: BTreeMap<MethodTag, Vec<(u64, f64)>> = BTreeMap::new();
        for r in rows(include_str!("../fixtures/seeds.csv")) {
            out.entry(r[0].parse().unwrap())
                .or_default()
                .push((r[1].parse().unwrap(), num(&r[2])));
        }
        out
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. A
//! failing check aborts the run unless it is listed as a known gap of
//! reported inputs; known gaps still print FAIL.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{fixtures, max_abs_diff, model_grad_error, perturb, tokens};
use modbench::accounting::{count_params, delta_table, step_flops};
use modbench::methods::classify::classify;
use modbench::methods::mixing::softpick;
use modbench::methods::MethodTag;
use modbench::model::ForwardOptions;
use modbench::report::{climb_avg, per_task_delta_matrix};
use modbench::stats::{
    benjamini_hochberg, bonferroni, bootstrap_floor, holm, p_bonferroni, p_two_sided, welch_t,
    NoiseFloor, SeedSet, FAMILY_SIZE,
};
use modbench::train::{
    clip_grad, lr_at_step, train_run, DivergenceMonitor, RecipeConfig, Signature, TrainOptions,
};
use modbench::{AttnMask, Decoder64, InitSpec, MethodSpec, ModelConfig, Tensor64};

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
    /// Check names whose failure traces back to rounding in reported inputs.
    known_gaps: Vec<&'static str>,
}

impl Criterion {
    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn close(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        // slack for decimal tolerances that are not exact binary values
        let pass = (got - want).abs() <= tol * (1.0 + 1e-9);
        self.check(name, pass, format!("{got:.6} vs {want} ± {tol:e}"));
    }

    fn rel(&mut self, name: &str, got: f64, want: f64, rel: f64) {
        self.check(
            name,
            (got - want).abs() <= rel * want.abs(),
            format!("{got:.4e} vs {want:e} ± {:.0}%", rel * 100.0),
        );
    }

    fn info(&mut self, name: &str, detail: String) {
        self.check(format!("(info) {name}"), true, detail);
    }
}

fn seed_set(tag: MethodTag) -> SeedSet {
    SeedSet::new(tag, fixtures::seeds()[&tag].clone()).unwrap()
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::default();
    let (base, soft) = (seed_set(MethodTag::Baseline), seed_set(MethodTag::Softpick));
    c.close("sigma_base", base.std().unwrap(), 0.00208, 2e-5);
    c.close("sigma_softpick", soft.std().unwrap(), 0.00133, 2e-5);
    let w = welch_t(&soft, &base).unwrap();
    c.close("welch_t", w.t, 6.36, 0.05);
    c.close("welch_p", w.p_two_sided, 0.0053, 0.001);
    let floor = NoiseFloor::from_seeds(&base).unwrap();
    c.close("softpick_z", floor.z(0.4922), 4.47, 0.05);
    c.close("hybrid_norm_z", floor.z(0.4896), 3.19, 0.05);
    let p = |z: f64| p_bonferroni(p_two_sided(z), FAMILY_SIZE);
    c.rel("softpick_p_bonf", p(4.47), 1.5e-4, 0.2);
    c.rel("hybrid_norm_p_bonf", p(3.19), 0.027, 0.1);
    c.rel("layerscale_p_bonf", p(-4.42), 1.8e-4, 0.2);
    c.info(
        "p_bonf from full-precision z",
        format!(
            "softpick {:.2e}, hybrid_norm {:.4}, layerscale {:.2e}",
            p(floor.z(0.4922)),
            p(floor.z(0.4896)),
            p(floor.z(0.4738))
        ),
    );
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion {
        known_gaps: vec!["winogrande_delta_exact"],
        ..Default::default()
    };
    let rows = fixtures::per_task();
    let primary: BTreeMap<String, f64> = rows.iter().map(|r| (r.0.clone(), r.1)).collect();
    let a100: BTreeMap<String, f64> = rows.iter().map(|r| (r.0.clone(), r.2)).collect();
    c.close("primary_climb_avg", climb_avg(&primary).unwrap(), 0.4820, 5e-5);
    c.close("a100_climb_avg", climb_avg(&a100).unwrap(), 0.4821, 5e-5);
    let m = per_task_delta_matrix(&[("a100".into(), a100)], &primary).unwrap();
    let wino = m.get("a100", "winogrande").unwrap();
    c.close("winogrande_delta_within_rounding", wino, -0.0213, 1e-4);
    c.check(
        "winogrande_delta_exact",
        format!("{wino:.4}") == "-0.0213",
        format!("{wino:.4} from 0.5406 − 0.5620; reported −0.0213 uses unrounded accuracies"),
    );
    c
}

fn criterion_3() -> Criterion {
    use MethodTag::*;
    let mut c = Criterion {
        known_gaps: vec!["bh_additions_exact"],
        ..Default::default()
    };
    let rows: Vec<_> = fixtures::main_results()
        .into_iter()
        .filter(|r| r.method != Baseline)
        .collect();
    let p: Vec<f64> = rows.iter().map(|r| p_two_sided(r.z)).collect();
    let pick = |rejected: &[bool]| -> Vec<MethodTag> {
        rows.iter().zip(rejected).filter(|x| *x.1).map(|x| x.0.method).collect()
    };
    let sorted = |mut v: Vec<MethodTag>| {
        v.sort();
        v
    };
    let expected = sorted(vec![Softpick, HybridNorm, Layerscale, Hyper, Attnres, Ssmax, SigmoidAttn]);
    let bonf = sorted(pick(&bonferroni(&p, FAMILY_SIZE, 0.05).rejected));
    let hol = sorted(pick(&holm(&p, 0.05).rejected));
    let bh = sorted(pick(&benjamini_hochberg(&p, 0.05).rejected));
    c.check("bonferroni_set", bonf == expected, format!("{bonf:?}"));
    c.check("holm_matches", hol == expected, format!("{hol:?}"));
    let added: Vec<MethodTag> = bh.iter().copied().filter(|m| !expected.contains(m)).collect();
    let expected_added = sorted(vec![Qknorm, SandwichNorm, ReluSquared, DiffAttn]);
    c.check(
        "bh_superset",
        expected.iter().chain(&expected_added).all(|m| bh.contains(m)),
        format!("{} rejected", bh.len()),
    );
    c.check(
        "bh_additions_exact",
        added == expected_added,
        format!(
            "adds {added:?}; selective_attn p {:.5} vs rank-12 cutoff {:.5}",
            p_two_sided(2.15),
            12.0 * 0.05 / 19.0
        ),
    );
    c
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::default();
    let cfg = ModelConfig::scale_1_2b();
    let (v, d, l, dkv, di) = (65_664u64, 2048u64, 24u64, 512u64, 5632u64);
    let hand = v * d + l * (2 * d * d + 2 * d * dkv + 3 * d * di + 2 * d) + d;
    let counted = count_params(&cfg, &MethodSpec::baseline()).params_total;
    c.check("baseline_hand_count", counted == hand, format!("{counted} vs {hand}"));
    c.close("baseline_vs_1.217B", counted as f64 / 1.217e9 - 1.0, 0.0, 0.005);
    let dense = count_params(&cfg, &MethodSpec::from_tag(MethodTag::Denseformer)).params_total;
    c.check("denseformer_extra", dense - counted == 300, format!("{}", dense - counted));
    let relu = step_flops(&cfg, &MethodSpec::from_tag(MethodTag::ReluSquared), 1 << 20);
    let swiglu = step_flops(&cfg, &MethodSpec::baseline(), 1 << 20);
    c.check(
        "relu2_ffn_flops",
        relu.flops_by_term["ffn"] == swiglu.flops_by_term["ffn"],
        format!("{}", relu.flops_by_term["ffn"]),
    );
    let table = delta_table(&MethodSpec::all(), &cfg, 1 << 20);
    let worst = table.rows.iter().map(|r| r.delta_flops_pct.abs()).fold(0.0, f64::max);
    c.check("max_abs_delta_flops", worst <= 0.13, format!("{worst:.4}%"));
    let tiny = ModelConfig {
        n_layers: 1,
        d_model: 4,
        n_heads: 2,
        n_kv_heads: 2,
        d_inter: 8,
        context: 2,
        vocab: 16,
        ..ModelConfig::toy()
    };
    let f = step_flops(&tiny, &MethodSpec::baseline(), 2).flops_per_step;
    c.check("tiny_flops", f == 2016, format!("{f}"));
    c
}

fn softpick_oracle(z: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for i in 0..rows {
        let row = &z[i * cols..(i + 1) * cols];
        let visible = i + 1;
        let max = row[..visible].iter().cloned().fold(f64::MIN, f64::max);
        let sum: f64 = row[..visible].iter().map(|x| (x - max).exp()).sum();
        for j in 0..visible {
            let p = (row[j] - max).exp() / sum;
            out[i * cols + j] = (p - 1.0 / visible as f64).max(0.0);
        }
    }
    out
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::default();
    let cfg = ModelConfig::toy();
    let toks = tokens(12, cfg.vocab, 4);
    let logits = |tag: MethodTag| {
        let m = Decoder64::new(&cfg, &MethodSpec::from_tag(tag), 7).unwrap();
        m.forward(&toks, 1, Default::default()).unwrap().logits.to_vec()
    };
    let base = logits(MethodTag::Baseline);
    for tag in [MethodTag::Denseformer, MethodTag::Hyper] {
        let diff = max_abs_diff(&base, &logits(tag));
        c.check(format!("{tag}_identity_at_init"), diff <= 1e-10, format!("{diff:.1e}"));
    }
    let diag = ForwardOptions { diagnostics: true };
    let plain = Decoder64::new(&cfg, &MethodSpec::baseline(), 4).unwrap();
    let vr = Decoder64::new(&cfg, &MethodSpec::from_tag(MethodTag::ValueResidual), 4).unwrap();
    let (a, b) = (
        plain.forward(&toks, 1, diag).unwrap(),
        vr.forward(&toks, 1, diag).unwrap(),
    );
    c.check(
        "value_residual_layer0",
        a.hidden[0].to_vec() == b.hidden[0].to_vec(),
        "first block output bit-identical",
    );

    let mut worst = 0.0f64;
    let mut zeros_ok = true;
    for seed in 0..20u64 {
        let n = 2 + (seed as usize % 9);
        let z: Vec<f64> = InitSpec::normal(2.0).materialize(&[n, n], seed, "softpick");
        let (w, _) = softpick(&Tensor64::constant(z.clone(), &[n, n]), &AttnMask::causal(n));
        let got = w.to_vec();
        let want = softpick_oracle(&z, n, n);
        worst = worst.max(max_abs_diff(&got, &want));
        zeros_ok &= got.iter().zip(&want).all(|(g, o)| (*o == 0.0) == (*g == 0.0));
    }
    c.check(
        "softpick_rectification",
        worst <= 1e-15 && zeros_ok,
        format!("max diff {worst:.1e}, zero pattern exact: {zeros_ok}"),
    );

    let mut labelled = 0;
    for tag in MethodTag::ALL {
        let Some(label) = tag.soft_hard() else { continue };
        labelled += 1;
        let model = Decoder64::new(&cfg, &MethodSpec::from_tag(tag), 21).unwrap();
        perturb(&model, 22, 0.3);
        let out = model.forward(&tokens(12, cfg.vocab, 23), 1, diag).unwrap();
        let got = classify(&out.traces);
        c.check(format!("{tag}_soft_hard"), got == label, format!("{got:?}"));
    }
    c.check("attention_methods_labelled", labelled == 10, format!("{labelled}"));

    let start = Instant::now();
    let mut worst = 0.0f64;
    for spec in MethodSpec::all() {
        let err = model_grad_error(&cfg, &spec, 11);
        c.check(format!("{}_grad_check", spec.tag), err < 1e-5, format!("{err:.1e}"));
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    c.check("grad_check_runtime", secs < 300.0, format!("{secs:.1}s, worst {worst:.1e}"));
    c
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::default();
    let r = RecipeConfig::full();
    c.check("lr_step_0", lr_at_step(0, &r).unwrap() == 0.0, "0");
    c.close("lr_step_2000", lr_at_step(2000, &r).unwrap(), 3e-4, 1e-15);
    c.close("lr_step_44000", lr_at_step(44000, &r).unwrap(), 3e-5, 1e-15);
    let mut g = vec![vec![1.2, 0.0], vec![-1.6]];
    let before = g.clone();
    let pre = clip_grad(&mut g, 1.0);
    let halved = g.iter().flatten().zip(before.iter().flatten()).all(|(a, b)| *a == b / 2.0);
    c.check("clip_halves_norm_2", pre == 2.0 && halved, format!("pre-clip {pre}"));
    c
}

fn smoke_options() -> TrainOptions {
    TrainOptions {
        log_every: 1,
        ..Default::default()
    }
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::default();
    let cfg = ModelConfig::toy();
    let recipe = RecipeConfig::toy();
    let start = Instant::now();
    for spec in MethodSpec::all() {
        let rec = train_run::<f64>(&cfg, &spec, &recipe, 0, &smoke_options()).unwrap();
        let losses: Vec<f64> = rec.logs.iter().map(|l| l.loss).collect();
        let head = losses[..20].iter().sum::<f64>() / 20.0;
        let tail = losses[losses.len() - 20..].iter().sum::<f64>() / 20.0;
        let finite = losses.iter().all(|l| l.is_finite()) && rec.final_val_loss.is_some_and(f64::is_finite);
        c.check(
            format!("{}_smoke", spec.tag),
            !rec.diverged && losses.len() == 200 && finite && tail < head,
            format!(
                "loss {:.3} -> {:.3}, val {:.3}",
                rec.initial_loss,
                losses[losses.len() - 1],
                rec.final_val_loss.unwrap_or(f64::NAN)
            ),
        );
    }
    c.info("sweep_runtime", format!("{:.0}s", start.elapsed().as_secs_f64()));

    let rules = Default::default();
    let stable = |m: &mut DivergenceMonitor, n: usize| {
        for s in 0..n {
            m.record(s, 0.19 + 0.004 * ((s % 3) as f64 - 1.0));
        }
    };
    let mut spike = DivergenceMonitor::new(64);
    stable(&mut spike, 40);
    spike.record(40, 0.83);
    let mut collapse = DivergenceMonitor::new(64);
    stable(&mut collapse, 40);
    let mut rise = DivergenceMonitor::new(64);
    for s in 0..40 {
        let v = if s < 22 { 27.0 } else { 27.0 * (1578.0f64 / 27.0).powf((s - 21) as f64 / 18.0) };
        rise.record(s, v);
    }
    let cases = [
        ("single_step_spike", &mut spike, Signature::SingleStepSpike),
        ("direct_collapse", &mut collapse, Signature::DirectCollapse),
        ("monotone_rise", &mut rise, Signature::MonotoneRise),
    ];
    for (name, monitor, want) in cases {
        let got = monitor.diverge(41, &rules);
        c.check(format!("trajectory_{name}"), got == want, format!("{got:?}"));
    }

    let short = RecipeConfig {
        total_steps: 40,
        ..recipe
    };
    let opts = TrainOptions {
        inject_nan_at: Some(30),
        ..smoke_options()
    };
    let rec = train_run::<f64>(&cfg, &MethodSpec::baseline(), &short, 0, &opts).unwrap();
    c.check(
        "injected_nan_run",
        rec.diverged && rec.nan_step == Some(30) && rec.signature.is_some(),
        format!("nan_step {:?}, signature {:?}", rec.nan_step, rec.signature),
    );
    c
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::default();
    let cfg = ModelConfig::toy();
    let recipe = RecipeConfig {
        total_steps: 40,
        ..RecipeConfig::toy()
    };
    for tag in [MethodTag::Baseline, MethodTag::SelectiveQknorm] {
        let spec = MethodSpec::from_tag(tag);
        let a = train_run::<f64>(&cfg, &spec, &recipe, 3, &smoke_options()).unwrap();
        let b = train_run::<f64>(&cfg, &spec, &recipe, 3, &smoke_options()).unwrap();
        let bits = |r: &modbench::train::RunRecord| -> Vec<u64> {
            r.logs.iter().flat_map(|l| [l.loss.to_bits(), l.grad_norm.to_bits()]).collect()
        };
        c.check(
            format!("{tag}_run_record"),
            a == b && bits(&a) == bits(&b),
            format!("val {:?}", a.final_val_loss),
        );
    }
    let (base, soft) = (seed_set(MethodTag::Baseline), seed_set(MethodTag::Softpick));
    let x = bootstrap_floor(&base, &soft, 10_000, 0).unwrap();
    let y = bootstrap_floor(&base, &soft, 10_000, 0).unwrap();
    c.check(
        "bootstrap",
        x == y && x.ci.0.to_bits() == y.ci.0.to_bits() && x.rng_seed == 0,
        format!("ci {:?}, p {}", x.ci, x.p_leq),
    );
    c
}

fn main() {
    let criteria: [(&str, fn() -> Criterion); 8] = [
        ("statistical golden numbers", criterion_1),
        ("CLIMB-avg arithmetic", criterion_2),
        ("correction procedures", criterion_3),
        ("accounting", criterion_4),
        ("mechanism invariants", criterion_5),
        ("recipe constants", criterion_6),
        ("smoke training", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut unexpected = Vec::new();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let c = run();
        let failed: Vec<&Check> = c.checks.iter().filter(|k| !k.pass).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {verdict}  {title} ({} checks, {:.1}s)",
            i + 1,
            c.checks.len(),
            start.elapsed().as_secs_f64()
        );
        for k in &c.checks {
            let mark = if k.pass { "ok  " } else { "FAIL" };
            println!("    {mark} {}: {}", k.name, k.detail);
        }
        for k in failed {
            if !c.known_gaps.contains(&k.name.as_str()) {
                unexpected.push(format!("criterion {} / {}", i + 1, k.name));
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

mod common;

use common::fixtures;
use modbench::methods::MethodTag;
use modbench::stats::{
    average_ranks, benjamini_hochberg, bonferroni, bootstrap_floor, holm, p_bonferroni,
    p_two_sided, per_task_stouffer, round_sig, sample_std, spearman_rho, stouffer_combine,
    welch_t, zscore, NoiseFloor, SeedSet, FAMILY_SIZE,
};
use modbench::Error;
use proptest::prelude::*;

fn base() -> SeedSet {
    SeedSet::new(MethodTag::Baseline, fixtures::seeds()[&MethodTag::Baseline].clone()).unwrap()
}

fn softpick() -> SeedSet {
    SeedSet::new(MethodTag::Softpick, fixtures::seeds()[&MethodTag::Softpick].clone()).unwrap()
}

fn direct_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn sample_std_examples() {
    assert!((sample_std(&base().scores()).unwrap() - 0.00208).abs() <= 2e-5);
    assert!((sample_std(&softpick().scores()).unwrap() - 0.00133).abs() <= 2e-5);
    assert_eq!(sample_std(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
    assert!(matches!(sample_std(&[1.0]), Err(Error::Contract(_))));
}

#[test]
fn zscore_examples() {
    let floor = base();
    assert!((zscore(0.4922, &floor).unwrap() - 4.47).abs() <= 0.05);
    assert_eq!(zscore(floor.mean(), &floor).unwrap(), 0.0);
    // seed-derived σ is 0.0020648, which puts sigmoid at −78.09; the
    // reported floor (0.4829, 0.00208) gives −77.50
    let exact = zscore(0.3217, &floor).unwrap();
    assert!((exact + 78.09).abs() < 0.01, "{exact}");
    assert!((round_sig(floor.std().unwrap(), 3) - 0.00206).abs() < 1e-15);
    let reported = NoiseFloor::new(0.4829, 0.00208).unwrap();
    assert!((reported.z(0.3217) + 77.7).abs() <= 0.3);
    let flat = SeedSet::from_scores(MethodTag::Baseline, 0, &[0.5, 0.5]).unwrap();
    assert!(matches!(zscore(0.6, &flat), Err(Error::Contract(_))));
}

#[test]
fn round_sig_examples() {
    assert_eq!(round_sig(0.0020648, 3), 0.00206);
    assert_eq!(round_sig(-1234.5, 2), -1200.0);
    assert_eq!(round_sig(0.0, 3), 0.0);
}

#[test]
fn bootstrap_examples() {
    let out = bootstrap_floor(&base(), &softpick(), 10_000, 0).unwrap();
    assert_eq!(out.p_leq, 0.0);
    assert!(out.ci.1 < out.other_ci.0, "intervals should be disjoint");
    let own = bootstrap_floor(&base(), &base(), 10_000, 0).unwrap();
    assert!((own.p_leq - 0.5).abs() <= 0.05, "{}", own.p_leq);
    let flat = SeedSet::from_scores(MethodTag::Baseline, 42, &[0.48; 3]).unwrap();
    let out = bootstrap_floor(&flat, &softpick(), 2000, 0).unwrap();
    assert_eq!(out.ci, (0.48, 0.48));
    assert!(bootstrap_floor(&base(), &base(), 999, 0).is_err());
}

#[test]
fn bootstrap_is_reproducible() {
    let a = bootstrap_floor(&base(), &softpick(), 10_000, 0).unwrap();
    let b = bootstrap_floor(&base(), &softpick(), 10_000, 0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.ci.0.to_bits(), b.ci.0.to_bits());
    let c = bootstrap_floor(&base(), &base(), 10_000, 1).unwrap();
    let d = bootstrap_floor(&base(), &base(), 10_000, 0).unwrap();
    assert_ne!(c.p_leq, d.p_leq);
}

#[test]
fn welch_examples() {
    let w = welch_t(&softpick(), &base()).unwrap();
    assert!((w.t - 6.36).abs() <= 0.05, "{}", w.t);
    assert!((w.p_two_sided - 0.0053).abs() <= 0.001, "{}", w.p_two_sided);
    let same = welch_t(&base(), &base()).unwrap();
    assert_eq!((same.t, same.p_two_sided), (0.0, 1.0));
    let zeros = SeedSet::from_scores(MethodTag::Baseline, 0, &[0.0; 3]).unwrap();
    let ones = SeedSet::from_scores(MethodTag::Softpick, 0, &[1.0, 1.0 + 1e-6, 1.0 - 1e-6]).unwrap();
    assert!(welch_t(&zeros, &ones).unwrap().t.abs() > 100.0);
    assert!(matches!(welch_t(&zeros, &zeros), Err(Error::Contract(_))));
}

#[test]
fn welch_matches_textbook_formula() {
    // df = (s1²/n1 + s2²/n2)² / ((s1²/n1)²/(n1−1) + (s2²/n2)²/(n2−1))
    let (a, b) = (softpick().scores(), base().scores());
    let (va, vb) = (direct_std(&a).powi(2) / 3.0, direct_std(&b).powi(2) / 3.0);
    let df = (va + vb).powi(2) / (va * va / 2.0 + vb * vb / 2.0);
    let w = welch_t(&softpick(), &base()).unwrap();
    assert!((w.df - df).abs() < 1e-12);
    assert!(w.df > 3.0 && w.df < 4.0);
}

#[test]
fn bonferroni_examples() {
    let p = |z: f64| p_bonferroni(p_two_sided(z), FAMILY_SIZE);
    assert!((p(4.47) - 1.5e-4).abs() / 1.5e-4 <= 0.2);
    assert!((p(3.19) - 0.027).abs() / 0.027 <= 0.1);
    assert!((p(-4.42) - 1.8e-4).abs() / 1.8e-4 <= 0.2);
    assert_eq!(p_bonferroni(0.0527, 19), 1.0);
    assert_eq!(p_two_sided(0.0), 1.0);
}

#[test]
fn pbonf_column_from_z() {
    for row in fixtures::main_results() {
        if row.method == MethodTag::Baseline {
            continue;
        }
        let p = p_bonferroni(p_two_sided(row.z), FAMILY_SIZE);
        match row.p_bonf.as_str() {
            "<1e-7" => assert!(p < 1e-7, "{}", row.method),
            s => {
                let reported: f64 = s.parse().unwrap();
                // reported to two significant figures
                assert!((p - reported).abs() <= 0.051 * reported.max(0.1), "{}: {p}", row.method);
            }
        }
    }
}

#[test]
fn corrections_on_main_results() {
    let rows: Vec<_> = fixtures::main_results()
        .into_iter()
        .filter(|r| r.method != MethodTag::Baseline)
        .collect();
    let p: Vec<f64> = rows.iter().map(|r| p_two_sided(r.z)).collect();
    let set = |rej: &[bool]| -> Vec<MethodTag> {
        rows.iter().zip(rej).filter(|(_, &r)| r).map(|(r, _)| r.method).collect()
    };
    use MethodTag::*;
    let bonf = set(&bonferroni(&p, FAMILY_SIZE, 0.05).rejected);
    let expected = vec![Softpick, HybridNorm, Layerscale, Hyper, Attnres, Ssmax, SigmoidAttn];
    assert_eq!(bonf, expected);
    assert_eq!(set(&holm(&p, 0.05).rejected), expected);
    let bh = set(&benjamini_hochberg(&p, 0.05).rejected);
    for m in [Qknorm, SandwichNorm, ReluSquared, DiffAttn] {
        assert!(bh.contains(&m), "{m}");
    }
    // selective sits at p = 0.03156 against a rank-12 cutoff of 12·0.05/19 = 0.03158
    assert_eq!(bh.len(), 12);
    assert!(bh.contains(&SelectiveAttn));
}

#[test]
fn holm_and_bh_by_hand() {
    let p = [0.01, 0.04, 0.03, 0.005];
    // Holm: sorted 0.005·4=0.02, 0.01·3=0.03, 0.03·2=0.06 → stop
    let h = holm(&p, 0.05);
    assert_eq!(h.rejected, vec![true, false, false, true]);
    assert!((h.adjusted[2] - 0.06).abs() < 1e-15);
    // BH: k=4 → 0.04 ≤ 0.05 rejects all
    let b = benjamini_hochberg(&p, 0.05);
    assert_eq!(b.rejected, vec![true; 4]);
    assert!((b.adjusted[1] - 0.04).abs() < 1e-15);
}

#[test]
fn stouffer_examples() {
    assert_eq!(stouffer_combine(&[0.5; 12]).unwrap().z, 0.0);
    let one_sigma = 1.0 - 0.841_344_746_068_542_9;
    let s = stouffer_combine(&[one_sigma; 12]).unwrap();
    assert!((s.z - 12f64.sqrt()).abs() < 1e-9, "{}", s.z);
    let two_sigma = 0.022_750_131_948_179_2;
    let mut ps = vec![two_sigma; 6];
    ps.extend([0.5; 6]);
    let s = stouffer_combine(&ps).unwrap();
    assert!((s.z - 12.0 / 12f64.sqrt()).abs() < 1e-9);
    assert!(!s.clamped);
    let c = stouffer_combine(&[0.0, 0.5]).unwrap();
    assert!(c.clamped && c.z.is_finite());
    assert!(stouffer_combine(&[]).is_err());
    assert!(stouffer_combine(&[1.5]).is_err());
}

#[test]
fn per_task_stouffer_combines_welch_tails() {
    use std::collections::BTreeMap;
    let tasks = |offset: f64| -> BTreeMap<String, Vec<f64>> {
        (0..12)
            .map(|i| {
                let c = 0.4 + 0.01 * i as f64 + offset;
                (format!("t{i:02}"), vec![c, c + 0.002, c - 0.001])
            })
            .collect()
    };
    let b = SeedSet::from_scores(MethodTag::Baseline, 42, &[0.48, 0.481, 0.479])
        .unwrap()
        .with_per_task(tasks(0.0))
        .unwrap();
    let m = SeedSet::from_scores(MethodTag::Qknorm, 42, &[0.49, 0.491, 0.489])
        .unwrap()
        .with_per_task(tasks(0.0))
        .unwrap();
    assert!(per_task_stouffer(&m, &b).unwrap().z.abs() < 1e-12);
    let up = m.clone().with_per_task(tasks(0.003)).unwrap();
    let s = per_task_stouffer(&up, &b).unwrap();
    assert!(s.z > 3.0 && s.p < 0.01);
    assert!(per_task_stouffer(&base(), &b).is_err());
}

#[test]
fn spearman_examples() {
    let a = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(spearman_rho(&a, &a).unwrap(), 1.0);
    assert_eq!(spearman_rho(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    // ties: Pearson on ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4)
    let rho = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &a).unwrap();
    assert!((rho - 0.9486832980505138).abs() < 1e-12);
    assert!(spearman_rho(&[1.0], &[1.0]).is_err());
    assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn spearman_on_cross_scale_improvers() {
    let rows: Vec<_> = fixtures::cross_scale()
        .into_iter()
        .filter(|r| r.delta_large > 0.0)
        .collect();
    assert_eq!(rows.len(), 7);
    let small: Vec<f64> = rows.iter().map(|r| r.small).collect();
    let large: Vec<f64> = rows.iter().map(|r| r.large).collect();
    // hand ranks (descending): Σd² = 25+0+4+9+1+25+16 = 80 → 1 − 480/336
    let rho = spearman_rho(&small, &large).unwrap();
    assert!((rho - (1.0 - 480.0 / 336.0)).abs() < 1e-12, "{rho}");
}

fn seedset() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..8)
        .prop_filter("non-constant", |v| v.iter().any(|x| (x - v[0]).abs() > 1e-3))
}

proptest! {
    #[test]
    fn zscore_is_affine_equivariant(v in seedset(), x in -20.0f64..20.0, c in -5.0f64..5.0, k in 0.1f64..10.0) {
        let floor = SeedSet::from_scores(MethodTag::Baseline, 0, &v).unwrap();
        let z = zscore(x, &floor).unwrap();
        let shifted: Vec<f64> = v.iter().map(|y| y + c).collect();
        let scaled: Vec<f64> = v.iter().map(|y| y * k).collect();
        let zs = zscore(x + c, &SeedSet::from_scores(MethodTag::Baseline, 0, &shifted).unwrap()).unwrap();
        let zk = zscore(x * k, &SeedSet::from_scores(MethodTag::Baseline, 0, &scaled).unwrap()).unwrap();
        prop_assert!((z - zs).abs() <= 1e-8 * (1.0 + z.abs()));
        prop_assert!((z - zk).abs() <= 1e-8 * (1.0 + z.abs()));
    }

    #[test]
    fn sample_std_matches_direct(v in seedset()) {
        prop_assert!((sample_std(&v).unwrap() - direct_std(&v)).abs() < 1e-12);
    }

    #[test]
    fn corrections_are_nested(p in prop::collection::vec(0.0f64..0.2, 1..30)) {
        let b = bonferroni(&p, p.len(), 0.05).rejected;
        let h = holm(&p, 0.05).rejected;
        let bh = benjamini_hochberg(&p, 0.05).rejected;
        for i in 0..p.len() {
            prop_assert!(!b[i] || h[i]);
            prop_assert!(!h[i] || bh[i]);
        }
    }

    #[test]
    fn stouffer_decreases_in_each_p(ps in prop::collection::vec(0.01f64..0.99, 12), i in 0usize..12, bump in 0.001f64..0.2) {
        let z0 = stouffer_combine(&ps).unwrap().z;
        let mut up = ps.clone();
        up[i] = (up[i] + bump).min(0.999);
        prop_assert!(stouffer_combine(&up).unwrap().z < z0);
    }

    #[test]
    fn welch_sign_follows_means(a in seedset(), b in seedset()) {
        let sa = SeedSet::from_scores(MethodTag::Softpick, 0, &a).unwrap();
        let sb = SeedSet::from_scores(MethodTag::Baseline, 0, &b).unwrap();
        let w = welch_t(&sa, &sb).unwrap();
        let diff = sa.mean() - sb.mean();
        prop_assert_eq!(w.t.signum(), if diff == 0.0 { w.t.signum() } else { diff.signum() });
        prop_assert!((0.0..=1.0).contains(&w.p_two_sided));
    }

    #[test]
    fn bootstrap_is_bit_reproducible(a in seedset(), b in seedset(), seed in 0u64..1000) {
        let sa = SeedSet::from_scores(MethodTag::Baseline, 0, &a).unwrap();
        let sb = SeedSet::from_scores(MethodTag::Softpick, 0, &b).unwrap();
        let x = bootstrap_floor(&sa, &sb, 1000, seed).unwrap();
        let y = bootstrap_floor(&sa, &sb, 1000, seed).unwrap();
        prop_assert_eq!(x.p_leq.to_bits(), y.p_leq.to_bits());
        prop_assert_eq!(x.ci.0.to_bits(), y.ci.0.to_bits());
        prop_assert_eq!(x.other_ci.1.to_bits(), y.other_ci.1.to_bits());
    }
}

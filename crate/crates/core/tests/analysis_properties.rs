use linkq::analysis::special::{f_survival, ln_gamma, regularized_incomplete_beta};
use linkq::analysis::{anova_oneway, folded_normal_pdf, z_density_branches, z_density_numeric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

fn groups_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2..12), 2..6)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn incomplete_beta_agrees_with_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let a = rng.random_range(0.1..60.0);
        let b = rng.random_range(0.1..60.0);
        let x = rng.random_range(0.0..1.0);
        let ours = regularized_incomplete_beta(x, a, b).unwrap();
        let theirs = statrs::function::beta::beta_reg(a, b, x);
        assert!((ours - theirs).abs() < 1e-10, "a={a} b={b} x={x}: {ours} vs {theirs}");
    }
    for &x in &[0.3, 1.7, 8.25, 42.0, 170.5] {
        assert!(rel_close(ln_gamma(x), statrs::function::gamma::ln_gamma(x), 1e-12));
    }
}

#[test]
fn f_survival_agrees_with_statrs() {
    for &(d1, d2) in &[(1.0, 5.0), (4.0, 45.0), (2.0, 200.0), (4.0, 89_876.0), (14.0, 30.0)] {
        let dist = FisherSnedecor::new(d1, d2).unwrap();
        for &f in &[0.01, 0.5, 1.0, 2.5, 7.0, 30.0] {
            let ours = f_survival(f, d1, d2).unwrap();
            let theirs = dist.sf(f);
            assert!((ours - theirs).abs() < 1e-9, "F({d1},{d2}) at {f}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn large_f_gives_tiny_p() {
    // magnitude of a field-scale result: F in the 10^5 range with ~9e4 within-group dof
    let p = f_survival(149_256.0, 4.0, 89_876.0).unwrap();
    assert!(p < 1e-300 || p == 0.0);
}

proptest! {
    #[test]
    fn anova_ignores_within_group_order(groups in groups_strategy(), seed in any::<u64>()) {
        let base = anova_oneway(&groups).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shuffled: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                for i in (1..g.len()).rev() {
                    g.swap(i, rng.random_range(0..=i));
                }
                g
            })
            .collect();
        let r = anova_oneway(&shuffled).unwrap();
        prop_assert!(rel_close(base.f_stat, r.f_stat, 1e-9) || (base.f_stat.is_infinite() && r.f_stat.is_infinite()));
    }

    #[test]
    fn anova_shift_invariant(groups in groups_strategy(), shift in -1e3f64..1e3) {
        let base = anova_oneway(&groups).unwrap();
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x + shift).collect()).collect();
        let r = anova_oneway(&moved).unwrap();
        prop_assert!(rel_close(base.f_stat, r.f_stat, 1e-6));
    }

    #[test]
    fn anova_power_of_two_scaling_is_exact(groups in groups_strategy(), e in -20i32..20, neg in any::<bool>()) {
        let c = if neg { -(2f64.powi(e)) } else { 2f64.powi(e) };
        let base = anova_oneway(&groups).unwrap();
        let scaled: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x * c).collect()).collect();
        prop_assert_eq!(anova_oneway(&scaled).unwrap().f_stat, base.f_stat);
    }

    #[test]
    fn anova_scaling_invariant(groups in groups_strategy(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let base = anova_oneway(&groups).unwrap();
        let scaled: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x * c).collect()).collect();
        prop_assert!(rel_close(anova_oneway(&scaled).unwrap().f_stat, base.f_stat, 1e-9));
    }

    #[test]
    fn p_value_decreases_in_f(d1 in 1u32..20, d2 in 2u32..500, f in 0.0f64..50.0, step in 0.001f64..10.0) {
        let lo = f_survival(f, d1 as f64, d2 as f64).unwrap();
        let hi = f_survival(f + step, d1 as f64, d2 as f64).unwrap();
        prop_assert!(hi <= lo);
        prop_assert!((0.0..=1.0).contains(&hi));
    }

    #[test]
    fn branches_are_symmetric_for_equal_means(mu in -90.0f64..-40.0, vr in 0.05f64..20.0, ve in 0.05f64..20.0) {
        let grid: Vec<f64> = (0..25).map(|i| i as f64 * 0.4).collect();
        for (a, b) in z_density_branches(mu, vr, mu, ve, &grid).unwrap() {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn numeric_density_matches_folded_normal(mr in -80.0f64..-60.0, me in -80.0f64..-60.0, vr in 0.1f64..10.0, ve in 0.1f64..10.0) {
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let f = z_density_numeric(mr, vr, me, ve, &grid).unwrap();
        for (z, v) in grid.iter().zip(f) {
            prop_assert!((v - folded_normal_pdf(*z, mr - me, vr + ve)).abs() < 1e-9);
        }
    }
}

#[test]
fn density_histogram_matches_sampling() {
    // 10^7 draws of |R - E| with R ~ N(0, 0.7), E ~ N(0, 0.3)
    let (vr, ve) = (0.7f64, 0.3f64);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nr = Normal::new(0.0, vr.sqrt()).unwrap();
    let ne = Normal::new(0.0, ve.sqrt()).unwrap();
    let width = 0.05;
    let bins = 120;
    let mut counts = vec![0u64; bins];
    let n = 10_000_000u64;
    for _ in 0..n {
        let z = (nr.sample(&mut rng) - ne.sample(&mut rng)).abs();
        let b = (z / width) as usize;
        if b < bins {
            counts[b] += 1;
        }
    }
    let centres: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) * width).collect();
    let density = z_density_numeric(0.0, vr, 0.0, ve, &centres).unwrap();
    let sup = counts
        .iter()
        .zip(&density)
        .map(|(&c, &d)| (c as f64 / (n as f64 * width) - d).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-2, "sup-norm {sup}");
}

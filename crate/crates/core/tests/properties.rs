use proptest::prelude::*;
use serocs::confset::{alt_evidence, basic_evidence, nu_level_count, EvidenceEngine, EvidenceOptions};
use serocs::model::{binom_log_pmf, density_table, joint_density, log_joint_density, main_pmf};
use serocs::{ParamPoint, PositiveCounts, StudyDesign};

/// Distribution of positives among `n` people, the first `k` infected, by
/// summing over all 2^n test outcomes.
fn enumerate_main(n: u32, k: u32, p: f64, q: f64) -> Vec<f64> {
    let mut out = vec![0.0; n as usize + 1];
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        for i in 0..n {
            let rate = if i < k { q } else { p };
            prob *= if mask >> i & 1 == 1 { rate } else { 1.0 - rate };
        }
        out[mask.count_ones() as usize] += prob;
    }
    out
}

fn rate() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn main_pmf_matches_enumeration(n in 1u32..=12, kf in 0.0..=1.0f64, p in rate(), q in rate()) {
        let k = (kf * n as f64).round() as u32;
        let design = StudyDesign::new(0, 0, n).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let oracle = enumerate_main(n, k, p, q);
        for (s, want) in oracle.iter().enumerate() {
            let got = main_pmf(s as u32, &theta, &design).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 + 1e-10 * want, "s={s}: {got} vs {want}");
        }
    }

    #[test]
    fn joint_density_normalises(
        n1 in 0u32..6, n2 in 0u32..6, n in 1u32..8,
        p in 1e-6..0.999f64, q in 1e-6..0.999f64, kf in 0.0..=1.0f64,
    ) {
        let k = (kf * n as f64).round() as u32;
        let design = StudyDesign::new(n1, n2, n).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let mut total = 0.0;
        for a in 0..=n1 {
            for b in 0..=n2 {
                for c in 0..=n {
                    total += joint_density(&PositiveCounts::new(a, b, c), &theta, &design).unwrap();
                }
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
        let table = density_table(&theta, &design, -1e4).unwrap();
        prop_assert!((table.total_mass - 1.0).abs() < 1e-9);
        prop_assert_eq!(table.len() as u64, design.sample_space_size());
    }

    #[test]
    fn swapping_roles_mirrors_the_main_study(n in 1u32..40, kf in 0.0..=1.0f64, p in 0.0..1.0f64, q in 0.0..1.0f64, sf in 0.0..=1.0f64) {
        // Relabelling infected as healthy swaps (p, q) and k with n - k.
        let k = (kf * n as f64).round() as u32;
        let s = (sf * n as f64).round() as u32;
        let design = StudyDesign::new(0, 0, n).unwrap();
        let a = main_pmf(s, &ParamPoint::new(p, q, k).unwrap(), &design).unwrap();
        let b = main_pmf(s, &ParamPoint::new(q, p, n - k).unwrap(), &design).unwrap();
        prop_assert!((a - b).abs() <= 1e-13 + 1e-10 * a);
        // Complementing every test result maps rates to 1 - rate.
        let c = main_pmf(n - s, &ParamPoint::new(1.0 - p, 1.0 - q, k).unwrap(), &design).unwrap();
        prop_assert!((a - c).abs() <= 1e-13 + 1e-9 * a);
    }

    #[test]
    fn pruning_is_sound_on_santa_clara(
        p in 0.0005..0.05f64, q in 0.6..1.0f64, k in 0u32..700,
        s1 in 0u32..8, s2 in 150u32..198, s3 in 0u32..150,
    ) {
        let design = StudyDesign::new(401, 197, 3330).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let s = PositiveCounts::new(s1, s2, s3);
        let full = log_joint_density(&s, &theta, &design, None).unwrap();
        let pruned = log_joint_density(&s, &theta, &design, Some(-100.0)).unwrap();
        prop_assert!((full - pruned).abs() < 1e-10, "{full} vs {pruned}");
    }

    #[test]
    fn alt_never_exceeds_basic(
        n1 in 0u32..30, n2 in 0u32..30, n in 1u32..40,
        p in 0.0..0.3f64, q in 0.5..1.0f64, kf in 0.0..=1.0f64,
        sa in 0.0..=1.0f64, sb in 0.0..=1.0f64, sc in 0.0..=1.0f64,
    ) {
        let k = (kf * n as f64).round() as u32;
        let design = StudyDesign::new(n1, n2, n).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let s = PositiveCounts::new(
            (sa * n1 as f64).round() as u32,
            (sb * n2 as f64).round() as u32,
            (sc * n as f64).round() as u32,
        );
        let basic = basic_evidence(&s, &theta, &design).unwrap();
        let alt = alt_evidence(&s, &theta, &design).unwrap();
        prop_assert!(alt <= basic + 1e-15, "alt {alt} > basic {basic}");
        prop_assert!((0.0..=1.0).contains(&alt));
    }

    #[test]
    fn engine_matches_explicit_table(
        n1 in 0u32..25, n2 in 0u32..25, n in 1u32..30,
        p in 0.0..0.3f64, q in 0.5..1.0f64, kf in 0.0..=1.0f64,
        sa in 0.0..=1.0f64, sb in 0.0..=1.0f64, sc in 0.0..=1.0f64,
    ) {
        let k = (kf * n as f64).round() as u32;
        let design = StudyDesign::new(n1, n2, n).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let s = PositiveCounts::new(
            (sa * n1 as f64).round() as u32,
            (sb * n2 as f64).round() as u32,
            (sc * n as f64).round() as u32,
        );
        let opts = EvidenceOptions { prune_tol: -1e4, ..EvidenceOptions::default() };
        let summary = EvidenceEngine::new(design, s, opts).unwrap().evaluate(&theta).unwrap();
        let table = density_table(&theta, &design, -1e4).unwrap();
        let z = joint_density(&s, &theta, &design).unwrap();
        let threshold = z * 1e-12f64.exp();
        let nu = table.values().iter().filter(|&&v| v > 0.0 && v <= threshold).count() as u64;
        let mass: f64 = table.values().iter().filter(|&&v| v <= threshold).sum();
        prop_assert_eq!(summary.nu, nu);
        prop_assert_eq!(nu_level_count(z, &table), nu);
        prop_assert!((summary.mass_at_or_below - mass).abs() < 1e-12);
    }

    #[test]
    fn nu_is_monotone_in_level(p in 0.0..0.2f64, q in 0.6..1.0f64, k in 0u32..=10, z1 in 0.0..0.2f64, z2 in 0.0..0.2f64) {
        let design = StudyDesign::new(6, 5, 10).unwrap();
        let theta = ParamPoint::new(p, q, k).unwrap();
        let table = density_table(&theta, &design, -1e4).unwrap();
        let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
        prop_assert!(nu_level_count(lo, &table) <= nu_level_count(hi, &table));
    }

    #[test]
    fn binomial_pmf_sums_to_one(n in 0u32..200, s in 0.0..=1.0f64) {
        let total: f64 = (0..=n).map(|k| binom_log_pmf(k, n, s).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn binomial_matches_high_precision_value() {
    // C(401, 2) 0.005^2 0.995^399 = 0.2713461065996556372894704890517057986...
    let oracle = 0.271_346_106_599_655_6_f64;
    let direct = 80200.0 * 0.005f64.powi(2) * (399.0 * (-0.005f64).ln_1p()).exp();
    let got = binom_log_pmf(2, 401, 0.005).unwrap();
    assert!((got - oracle.ln()).abs() < 1e-13, "{got}");
    assert!((got.exp() - direct).abs() < 1e-14);
}

#[test]
fn scans_agree_across_worker_counts() {
    let d = serocs::builtin_dataset("santa-clara").unwrap();
    let grid = serocs::ParamGrid::new(
        vec![0.0, 0.004, 0.01],
        vec![0.8, 0.9, 1.0],
        (0..60).step_by(7).collect(),
    )
    .unwrap();
    let a = serocs::scan_grid(&grid, &d, 0.05, serocs::Method::Both, 1).unwrap();
    let b = serocs::scan_grid(&grid, &d, 0.05, serocs::Method::Both, 3).unwrap();
    assert_eq!(a, b);
}

use dentsim::stats::{
    cohen_kappa, ibmd, icc, iqr_outliers, mean, one_way_anova, pearson, uniform_coverage_select, KappaWeighting,
    PairedRatings,
};
use proptest::prelude::*;

fn ratings() -> impl Strategy<Value = PairedRatings> {
    prop::collection::vec((0u8..=30, 0u8..=30), 3..40).prop_map(|pairs| {
        let (a, b) = pairs.iter().map(|&(x, y)| (f64::from(x) / 2.0, f64::from(y) / 2.0)).unzip();
        PairedRatings::unlabeled(a, b).unwrap()
    })
}

fn same(a: dentsim::Result<f64>, b: dentsim::Result<f64>) -> bool {
    match (a, b) {
        (Ok(a), Ok(b)) => (a - b).abs() <= 1e-12,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

/// Pooled-variance two-sample t statistic.
fn student_t(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let ss = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    let pooled = ss / (na + nb - 2.0);
    (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt()
}

proptest! {
    #[test]
    fn agreement_is_symmetric(p in ratings()) {
        let q = p.swapped();
        for w in [KappaWeighting::None, KappaWeighting::Linear, KappaWeighting::Quadratic] {
            prop_assert!(same(cohen_kappa(&p, w), cohen_kappa(&q, w)));
        }
        prop_assert!(same(icc(&p), icc(&q)));
        prop_assert!(same(ibmd(&p), ibmd(&q)));
    }

    #[test]
    fn ibmd_is_bounded(p in ratings()) {
        let d = ibmd(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        xs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..50),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        if let Ok(r) = pearson(&a, &b) {
            let moved: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            let r2 = pearson(&moved, &b).unwrap();
            prop_assert!((r.r - r2.r).abs() <= 1e-9);
            let flipped: Vec<f64> = a.iter().map(|x| -scale * x + shift).collect();
            prop_assert!((r.r + pearson(&flipped, &b).unwrap().r).abs() <= 1e-9);
        }
    }

    #[test]
    fn two_group_anova_is_squared_t(
        a in prop::collection::vec(-20.0f64..20.0, 2..30),
        b in prop::collection::vec(-20.0f64..20.0, 2..30),
    ) {
        let t = student_t(&a, &b);
        prop_assume!(t.is_finite());
        let f = one_way_anova(&[a.clone(), b.clone()]).unwrap();
        prop_assert!((f.f - t * t).abs() <= 1e-8 * (1.0 + t * t));
        prop_assert_eq!(f.dof_between, 1.0);
        prop_assert_eq!(f.dof_within, (a.len() + b.len() - 2) as f64);
    }

    #[test]
    fn fences_never_remove_inliers(xs in prop::collection::vec(-1e3f64..1e3, 4..80)) {
        let s = iqr_outliers(&xs).unwrap();
        prop_assert_eq!(s.kept.len() + s.removed.len(), xs.len());
        for &i in &s.kept {
            prop_assert!(xs[i] >= s.lower_fence && xs[i] <= s.upper_fence);
        }
        for &i in &s.removed {
            prop_assert!(xs[i] < s.lower_fence || xs[i] > s.upper_fence);
        }
    }

    #[test]
    fn coverage_keeps_the_extremes(xs in prop::collection::vec(-1e3f64..1e3, 2..100), k in 2usize..30) {
        let k = k.min(xs.len());
        let picked = uniform_coverage_select(&xs, k).unwrap();
        prop_assert_eq!(picked.len(), k);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picked.len());
        let values: Vec<f64> = picked.iter().map(|&i| xs[i]).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(values.contains(&lo) && values.contains(&hi));
    }
}

use dentsim::field::GridSpec;
use dentsim::scoring::{classify, dentist, dentist_closed_form, dentist_compositional, dentist_from_rates, ClassificationCounts};
use dentsim::volume::Aabb;
use dentsim::voxel::VoxelGrid;
use nalgebra::Vector3;
use proptest::prelude::*;

fn counts() -> impl Strategy<Value = ClassificationCounts> {
    (1u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000)
        .prop_map(|(tp, tn, fp, fn_)| ClassificationCounts::new(tp, tn, fp, fn_))
}

fn grids() -> impl Strategy<Value = (VoxelGrid, VoxelGrid, VoxelGrid)> {
    [2usize..10, 2usize..10, 2usize..10]
        .prop_flat_map(|dims| {
            let n = dims[0] * dims[1] * dims[2];
            (Just(dims), prop::collection::vec((0u8..4, any::<bool>(), any::<bool>()), n))
        })
        .prop_map(|(dims, cells)| {
            let b = Aabb::new(Vector3::zeros(), Vector3::new(2.0, 3.0, 1.0));
            let g = GridSpec::new(dims, &b).unwrap();
            let pristine: Vec<u8> = cells.iter().map(|c| c.0).collect();
            let outcome = cells.iter().map(|c| if c.1 { c.0 } else { 0 }).collect();
            let ideal = cells.iter().map(|c| if c.2 { c.0 } else { 0 }).collect();
            (
                VoxelGrid::from_cells(g, outcome).unwrap(),
                VoxelGrid::from_cells(g, ideal).unwrap(),
                VoxelGrid::from_cells(g, pristine).unwrap(),
            )
        })
}

proptest! {
    #[test]
    fn closed_form_matches_composition(c in counts()) {
        let a = dentist_compositional(&c).unwrap();
        let b = dentist_closed_form(&c).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300));
    }

    #[test]
    fn linear_in_precision_and_sensitivity(p in 0.0f64..=1.0, s in 0.0f64..=1.0) {
        // Expanding both rescalings gives 131.25 − 120·P − 11.25·S.
        let d = dentist_from_rates(p, s);
        prop_assert!((d - (131.25 - 120.0 * p - 11.25 * s)).abs() <= 1e-9);
    }

    #[test]
    fn more_false_positives_score_worse(c in counts(), extra in 1u64..10_000) {
        let worse = ClassificationCounts::new(c.tp, c.tn, c.fp + extra, c.fn_);
        prop_assert!(dentist_closed_form(&worse).unwrap() > dentist_closed_form(&c).unwrap());
    }

    #[test]
    fn more_false_negatives_score_worse(c in counts(), extra in 1u64..10_000) {
        let worse = ClassificationCounts::new(c.tp, c.tn, c.fp, c.fn_ + extra);
        prop_assert!(dentist_closed_form(&worse).unwrap() > dentist_closed_form(&c).unwrap());
    }

    #[test]
    fn flag_matches_range(c in counts()) {
        let d = dentist(&c).unwrap();
        prop_assert_eq!(d.out_of_range, !(0.0..=15.0).contains(&d.value));
    }

    #[test]
    fn classify_matches_cell_by_cell_count((o, i, p) in grids()) {
        let got = classify(&o, &i, &p).unwrap();
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for idx in 0..p.len() {
            if p.tissue(idx).is_none() {
                continue;
            }
            match (o.tissue(idx).is_some(), i.tissue(idx).is_some()) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        prop_assert_eq!((got.tp, got.tn, got.fp, got.fn_), (tp, tn, fp, fn_));
        prop_assert_eq!(got.total() as usize, p.occupied_count());
    }
}

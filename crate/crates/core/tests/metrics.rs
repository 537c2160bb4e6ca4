mod common;

use common::{ex, l4_reference_set, space};
use hcfr_core::metrics::{hierarchical_prf, per_level_diagnostics, round2, EvalExample, LevelRow, MetricsReport};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn l4_reference_row_is_reproduced() {
    let s = space(false);
    let set = l4_reference_set(&s);
    assert_eq!(set.len(), 1118);
    let row = &per_level_diagnostics(&set, &s).unwrap().rows[3];
    assert_eq!(row.level, "L4");
    let r = |x: Option<f64>| round2(x.unwrap());
    assert_eq!(round2(row.mr), 70.75);
    assert_eq!(round2(row.none_pct), 44.90);
    assert_eq!(r(row.mr_labeled), 58.12);
    assert_eq!(r(row.false_none), 27.76);
    assert_eq!(r(row.label_confusion), 14.12);
    assert_eq!(r(row.none_recall), 86.25);
    assert!((27.76_f64 + 14.12 - (100.0 - 58.12)).abs() < 0.01);
    let recomposed: f64 = 0.4490 * 86.25 + 0.5510 * 58.12;
    assert!((recomposed - 70.75).abs() < 0.01);
    assert!((row.mr - recomposed).abs() < 0.01);
}

#[test]
fn hand_computed_hierarchical_scores() {
    let s = space(false);
    let (hp, hr, hf) = hierarchical_prf(&[ex(&s, "Answer", "Inform")]).unwrap();
    assert_eq!(hp, 100.0);
    assert_eq!(hr, 75.0);
    assert!((hf - 85.71).abs() < 0.01);
}

fn check_identities(row: &LevelRow) -> Result<(), TestCaseError> {
    if let (Some(f), Some(c), Some(m)) = (row.false_none, row.label_confusion, row.mr_labeled) {
        prop_assert!((f + c - (100.0 - m)).abs() < 1e-9);
    }
    let none_part = row.none_recall.map_or(0.0, |r| row.none_pct * r / 100.0);
    let labeled_part = row.mr_labeled.map_or(0.0, |m| (100.0 - row.none_pct) * m / 100.0);
    prop_assert!((row.mr - (none_part + labeled_part)).abs() < 1e-9);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn per_level_identities_hold(seed in any::<u64>(), n in 1usize..80, gated in any::<bool>()) {
        let s = space(gated);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let paths = s.valid_paths();
        let set: Vec<EvalExample> = (0..n)
            .map(|_| {
                let g = paths[rng.gen_range(0..paths.len())].clone();
                let p = if rng.gen_bool(0.4) { g.clone() } else { paths[rng.gen_range(0..paths.len())].clone() };
                EvalExample::new(g, p)
            })
            .collect();
        let diag = per_level_diagnostics(&set, &s).unwrap();
        prop_assert_eq!(diag.rows.len(), s.n_levels());
        for row in &diag.rows {
            check_identities(row)?;
        }
        let report = MetricsReport::compute(&set).unwrap();
        for v in report.values() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        // a full-path hit is a hit at every level
        prop_assert!(diag.rows.iter().all(|r| r.mr + 1e-9 >= report.mr));
    }
}

#[test]
fn empty_inputs_are_errors() {
    use hcfr_core::Error;
    let s = space(true);
    assert!(matches!(per_level_diagnostics(&[], &s), Err(Error::NoExamples)));
    assert!(matches!(hierarchical_prf(&[]), Err(Error::NoExamples)));
    let none = hcfr_core::LabelPath::all_none(s.taxonomy().depth());
    let all_none = EvalExample::new(none.clone(), none);
    assert!(matches!(hierarchical_prf(&[all_none]), Err(Error::UndefinedMetric(_))));
}

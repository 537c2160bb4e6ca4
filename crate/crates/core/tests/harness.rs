mod common;

use std::io::Cursor;
use std::path::Path;

use common::{corrupt, ctx, encoder, preds_key, small_config, spaces, taxonomy};
use hcfr_core::corpus::{make_folds, scenario_filter, CorpusSet, Dialog};
use hcfr_core::features::PrecomputedEncoder;
use hcfr_core::harness::{
    build_inputs, crossval, predict_dialog, run_fold, train_ensemble, train_member, vote, write_artifacts, Ablation,
    Approach, ContextSource, DialogInputs, ExperimentConfig, Vote,
};
use hcfr_core::{synthetic, FoldScheme, LabelSpace, Scenario};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn corrupting_test_golds_changes_no_prediction() {
    let t = taxonomy();
    for (approach, scenario) in [
        (Approach::Hierarchical, Scenario::TaskOnly),
        (Approach::Flat, Scenario::AllSegments),
        (Approach::TwoStep, Scenario::AllSegments),
    ] {
        let cfg = small_config(approach, scenario);
        let enc = encoder(&cfg);
        let gold = scenario_filter(&synthetic::toy_corpus(&t, 0).unwrap(), scenario);
        let s = spaces(&t, scenario);
        let c = ctx(&s, &cfg, &enc);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for fold in make_folds(&gold, &[], FoldScheme::Dialog).unwrap() {
            let train: Vec<DialogInputs> = fold
                .train
                .iter()
                .map(|d| build_inputs(&s.space, d, &enc).unwrap())
                .collect();
            let train_refs: Vec<&DialogInputs> = train.iter().collect();
            let clean: Vec<DialogInputs> = fold
                .test
                .iter()
                .map(|d| build_inputs(&s.space, d, &enc).unwrap())
                .collect();
            let corrupted_dialogs: Vec<Dialog> = fold.test.iter().map(|d| corrupt(d, &t, &mut rng)).collect();
            let dirty: Vec<DialogInputs> = corrupted_dialogs
                .iter()
                .map(|d| build_inputs(&s.space, d, &enc).unwrap())
                .collect();
            let a = run_fold(
                &c,
                &fold.held_out,
                &train_refs,
                &[],
                &clean.iter().collect::<Vec<_>>(),
                9,
            )
            .unwrap();
            let b = run_fold(
                &c,
                &fold.held_out,
                &train_refs,
                &[],
                &dirty.iter().collect::<Vec<_>>(),
                9,
            )
            .unwrap();
            assert_eq!(preds_key(&a), preds_key(&b), "{approach} fold {}", fold.held_out);
        }
    }
}

#[test]
fn ensemble_has_one_member_per_training_dialog() {
    let t = taxonomy();
    let cfg = small_config(Approach::Hierarchical, Scenario::TaskOnly);
    let enc = encoder(&cfg);
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let s = spaces(&t, Scenario::TaskOnly);
    let c = ctx(&s, &cfg, &enc);
    let inputs: Vec<DialogInputs> = gold.dialogs[..3]
        .iter()
        .map(|d| build_inputs(&s.space, d, &enc).unwrap())
        .collect();
    let refs: Vec<&DialogInputs> = inputs.iter().collect();
    assert_eq!(train_ensemble(&c, "f", &refs, &[], 1).unwrap().len(), 3);
    assert!(train_ensemble(&c, "f", &refs[..1], &[], 1).is_err());
}

#[test]
fn single_member_ensemble_is_the_member_decode() {
    let t = taxonomy();
    let cfg = small_config(Approach::Hierarchical, Scenario::AllSegments);
    let enc = encoder(&cfg);
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let s = spaces(&t, Scenario::AllSegments);
    let c = ctx(&s, &cfg, &enc);
    let inputs: Vec<DialogInputs> = gold
        .dialogs
        .iter()
        .map(|d| build_inputs(&s.space, d, &enc).unwrap())
        .collect();
    let member = train_member(&c, &[&inputs[0], &inputs[1]], &inputs[2], 4).unwrap();
    let preds = predict_dialog(&c, std::slice::from_ref(&member), &inputs[3], 0).unwrap();
    let mut history = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        let x = inputs[3].input(&s.space, i, &history);
        let out = member.predict(&x, &s.space, &s.inner, c.builder.decode).unwrap();
        assert_eq!(out.decoded.path, p.pred);
        assert_eq!(out.decoded.prob, p.prob);
        history.push(p.pred.clone());
    }
}

#[test]
fn iterative_decode_leaves_training_unchanged() {
    let t = taxonomy();
    let base = small_config(Approach::Hierarchical, Scenario::TaskOnly);
    let ablated = ExperimentConfig {
        ablations: vec![Ablation::IterativeDecode],
        ..base.clone()
    };
    let enc = encoder(&base);
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let s = spaces(&t, Scenario::TaskOnly);
    let inputs: Vec<DialogInputs> = gold
        .dialogs
        .iter()
        .map(|d| build_inputs(&s.space, d, &enc).unwrap())
        .collect();
    let train = [&inputs[0], &inputs[1], &inputs[2]];
    let a = train_member(&ctx(&s, &base, &enc), &train, &inputs[3], 8).unwrap();
    let b = train_member(&ctx(&s, &ablated, &enc), &train, &inputs[3], 8).unwrap();
    assert_eq!(a, b);
}

fn random_votes(space: &LabelSpace, rng: &mut ChaCha8Rng) -> Vec<Vote> {
    let n = rng.gen_range(1..8);
    let few: Vec<usize> = (0..3).map(|_| rng.gen_range(0..space.valid_paths().len())).collect();
    (0..n)
        .map(|_| Vote {
            path: space.valid_paths()[*few.choose(rng).unwrap()].clone(),
            // coarse weights so exact ties happen
            weight: rng.gen_range(1..5) as f64 / 8.0,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn vote_ignores_member_order(seed in any::<u64>(), tie_seed in any::<u64>()) {
        let s = common::space(true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let votes = random_votes(&s, &mut rng);
        let mut shuffled = votes.clone();
        shuffled.shuffle(&mut rng);
        let a = vote(&votes, &s, &mut ChaCha8Rng::seed_from_u64(tie_seed)).unwrap();
        let b = vote(&shuffled, &s, &mut ChaCha8Rng::seed_from_u64(tie_seed)).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn crossval_is_byte_identical_per_seed_and_job_count() {
    let t = taxonomy();
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let extra = synthetic::toy_extra(&t, 0).unwrap();
    let cfg = ExperimentConfig {
        runs: 2,
        ..small_config(Approach::Hierarchical, Scenario::AllSegments)
    };
    let enc = encoder(&cfg);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, jobs) in [1, 1, 3].into_iter().enumerate() {
        let cfg = ExperimentConfig { jobs, ..cfg.clone() };
        let r = crossval(&gold, std::slice::from_ref(&extra), t.clone(), &enc, &cfg).unwrap();
        let cfg_for_file = ExperimentConfig { jobs: 1, ..cfg };
        write_artifacts(dirs[i].path(), &cfg_for_file, &r).unwrap();
    }
    let a = read_dir(dirs[0].path());
    assert_eq!(a.len(), 4);
    assert_eq!(a, read_dir(dirs[1].path()));
    assert_eq!(a, read_dir(dirs[2].path()));
}

#[test]
fn run_statistics() {
    let t = taxonomy();
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let base = small_config(Approach::Flat, Scenario::TaskOnly);
    let enc = encoder(&base);

    let one = crossval(&gold, &[], t.clone(), &enc, &base).unwrap();
    assert_eq!(one.report.std.values(), [0.0; 4]);
    for v in one.report.mean.values() {
        assert!((0.0..=100.0).contains(&v));
    }

    let same = ExperimentConfig {
        runs: 3,
        same_seed_each_run: true,
        ..base.clone()
    };
    let r = crossval(&gold, &[], t.clone(), &enc, &same).unwrap();
    assert_eq!(r.report.std.values(), [0.0; 4]);
    assert_eq!(r.report.runs.len(), 3);

    let varied = ExperimentConfig { runs: 3, ..base };
    let r = crossval(&gold, &[], t, &enc, &varied).unwrap();
    for k in 0..4 {
        let vals: Vec<f64> = r.report.runs.iter().map(|x| x.metrics.values()[k]).collect();
        let mean = vals.iter().sum::<f64>() / 3.0;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 2.0;
        assert!((r.report.mean.values()[k] - mean).abs() < 1e-9);
        assert!((r.report.std.values()[k] - var.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn precomputed_vectors_reproduce_hashed_pipeline() {
    let t = taxonomy();
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let cfg = small_config(Approach::Hierarchical, Scenario::TaskOnly);
    let enc = encoder(&cfg);
    let mut buf = Vec::new();
    PrecomputedEncoder::export(&enc, gold.segments(), &mut buf).unwrap();
    let pre = PrecomputedEncoder::from_reader(Cursor::new(buf), Path::new("mem")).unwrap();
    let a = crossval(&gold, &[], t.clone(), &enc, &cfg).unwrap();
    let b = crossval(&gold, &[], t, &pre, &cfg).unwrap();
    assert_eq!(a.predictions, b.predictions);
    assert_eq!(a.report, b.report);
}

#[test]
fn no_extra_data_matches_running_without_extras() {
    let t = taxonomy();
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let extra = synthetic::toy_extra(&t, 0).unwrap();
    let cfg = small_config(Approach::Hierarchical, Scenario::TaskOnly);
    let enc = encoder(&cfg);
    let ablated = ExperimentConfig {
        ablations: vec![Ablation::NoExtraData],
        ..cfg.clone()
    };
    let a = crossval(&gold, std::slice::from_ref(&extra), t.clone(), &enc, &ablated).unwrap();
    let b = crossval(&gold, &[], t, &enc, &cfg).unwrap();
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn corpus_folds_and_gold_context_run() {
    let t = taxonomy();
    let gold = synthetic::toy_corpus(&t, 0).unwrap();
    let cfg = ExperimentConfig {
        folds: FoldScheme::Corpus,
        inference_context: ContextSource::Gold,
        ..small_config(Approach::TwoStep, Scenario::AllSegments)
    };
    let enc = encoder(&cfg);
    let r = crossval(&gold, &[], t, &enc, &cfg).unwrap();
    assert_eq!(r.report.n_folds, 2);
    assert_eq!(r.predictions.len(), gold.n_segments());
    assert!(r.predictions.iter().all(|p| p.gold.len() == 7));
}

#[test]
fn too_few_dialogs_is_an_error() {
    let t = taxonomy();
    let mut gold: CorpusSet = synthetic::toy_corpus(&t, 0).unwrap();
    gold.dialogs.truncate(2);
    let cfg = small_config(Approach::Hierarchical, Scenario::TaskOnly);
    let enc = encoder(&cfg);
    assert!(crossval(&gold, &[], t, &enc, &cfg).is_err());
}

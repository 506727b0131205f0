mod common;

use std::fs;

use common::{planted_benchmark, quick_config, two_level_ontology};
use psla::corpus::{generate_synthetic, write_corpus};
use psla::experiment::{
    run_ablation, run_aggregate, run_enhance, run_train, ExperimentConfig, ExperimentError, MemberSelect,
    MemberSpec, RunDir, RunSummary, TeacherSource, Toggle,
};
use psla::labelfix::{RepairMode, ThresholdPolicy};
use psla::metrics::EvalReport;
use psla::model::Architecture;
use psla::{FeatureShape, Matrix, MultiLabelCorpus, Sample};
use rand::Rng;

#[test]
fn run_directory_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), Architecture::Attention, 5);
    let s = run_train(&cfg).unwrap();
    assert_eq!(s.epochs, 5);
    assert_eq!(s.train_samples, 200);
    for e in 1..=5 {
        assert!(dir.path().join(format!("checkpoints/epoch_{e:03}.ckpt")).exists());
        assert!(dir.path().join(format!("eval/epoch_{e:03}.json")).exists());
    }
    for f in [
        "config.toml",
        "config.sha256",
        "train_log.csv",
        "weight_avg.ckpt",
        "eval/weight_avg.json",
        "eval/ensemble.json",
        "summary.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(!dir.path().join(".lock").exists());
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,iter,lr,loss,eval_map"));
    assert_eq!(log.lines().count(), 6);
    let stored: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(stored, s);
}

#[test]
fn stored_artifacts_reproduce_logged_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), Architecture::Attention, 3);
    let s = run_train(&cfg).unwrap();
    let run = RunDir::open(dir.path()).unwrap();
    assert!(run.snapshot_intact);
    let logged = EvalReport::from_json(&fs::read_to_string(dir.path().join("eval/epoch_003.json")).unwrap()).unwrap();
    assert_eq!(run.evaluate("epoch_003", None).unwrap(), logged);
    assert_eq!(run.evaluate("weight_avg", None).unwrap().map, s.weight_avg_map.unwrap());
}

#[test]
fn edited_snapshot_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    run_train(&quick_config(dir.path(), Architecture::Linear, 1)).unwrap();
    let p = dir.path().join("config.toml");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, text.replace("seed = 0", "seed = 1")).unwrap();
    assert!(!RunDir::open(dir.path()).unwrap().snapshot_intact);
}

#[test]
fn locked_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "").unwrap();
    let e = run_train(&quick_config(dir.path(), Architecture::Linear, 1)).unwrap_err();
    assert!(matches!(e, ExperimentError::Locked(_)), "{e}");
}

#[test]
fn identical_configs_give_identical_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run_train(&quick_config(a.path(), Architecture::Attention, 2)).unwrap();
    let sb = run_train(&quick_config(b.path(), Architecture::Attention, 2)).unwrap();
    assert_eq!(sa.headline(), sb.headline());
    assert_eq!(sa.last_k_mean_map, sb.last_k_mean_map);
}

fn run_map(dir: &std::path::Path) -> f64 {
    let s: RunSummary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    s.headline()
}

#[test]
fn ablation_rows_and_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let base = quick_config(dir.path(), Architecture::Linear, 2);
    let t = run_ablation(&base, &[], &[0]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].variant, "full");

    let t = run_ablation(&base, &[Toggle::Mixup], &[0, 1, 2]).unwrap();
    assert_eq!(t.rows.len(), 2);
    let full = &t.rows[0];
    let maps: Vec<f64> = [0, 1, 2]
        .iter()
        .map(|s| run_map(&dir.path().join(format!("ablation/full/seed_{s}"))))
        .collect();
    let mean = maps.iter().sum::<f64>() / 3.0;
    let sd = (maps.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((full.mean - mean).abs() < 1e-12);
    assert!((full.sd - sd).abs() < 1e-12);
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("variant,mean,sd,n"));
    assert!(csv.contains("no-mixup,"));
}

#[test]
fn ablation_over_every_toggle() {
    let dir = tempfile::tempdir().unwrap();
    let base = quick_config(dir.path(), Architecture::Linear, 1);
    let t = run_ablation(&base, &Toggle::ALL, &[5]).unwrap();
    assert_eq!(t.rows.len(), Toggle::ALL.len() + 1);
}

fn member(tag: &str, run: &std::path::Path, select: MemberSelect) -> MemberSpec {
    MemberSpec { tag: tag.into(), run: run.to_path_buf(), select }
}

#[test]
fn committee_of_one_matches_member() {
    let dir = tempfile::tempdir().unwrap();
    run_train(&quick_config(dir.path(), Architecture::Attention, 2)).unwrap();
    let out = run_aggregate(&[member("a", dir.path(), MemberSelect::Last)], None, None).unwrap();
    assert_eq!(out.ensemble, out.members[0].1);
    assert_eq!(out.best_map, out.ensemble_map);
}

#[test]
fn linear_committee_weight_average_matches_logit_ensemble() {
    let root = tempfile::tempdir().unwrap();
    let mut specs = Vec::new();
    for r in 0..3u64 {
        let d = root.path().join(format!("r{r}"));
        let mut c = quick_config(&d, Architecture::Linear, 3);
        c.train.replicate = r;
        run_train(&c).unwrap();
        specs.push(member(&format!("r{r}"), &d, MemberSelect::Last));
    }
    let out_dir = root.path().join("agg");
    let out = run_aggregate(&specs, None, Some(&out_dir)).unwrap();
    assert!((out.weight_avg_map.unwrap() - out.logit_ensemble_map).abs() < 1e-6);
    let csv = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert!(csv.starts_with("members,avg_map,best_map,ensemble_map,"));
    assert!(csv.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn single_epoch_sweep_is_one_point() {
    let dir = tempfile::tempdir().unwrap();
    run_train(&quick_config(dir.path(), Architecture::Attention, 1)).unwrap();
    let out = run_aggregate(&[member("a", dir.path(), MemberSelect::All)], None, None).unwrap();
    let curve = &out.sweeps[0].1;
    assert_eq!(curve.len(), 1);
    assert_eq!(curve[0].weight_avg_map, out.members[0].1.map);
    assert_eq!(curve[0].ensemble_map, out.members[0].1.map);
}

#[test]
fn committee_members_must_fit_the_eval_corpus() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    run_train(&quick_config(&a, Architecture::Linear, 1)).unwrap();
    let b = root.path().join("b");
    let mut cb = quick_config(&b, Architecture::Linear, 1);
    cb.data.synth.as_mut().unwrap().num_classes = 6;
    run_train(&cb).unwrap();
    let specs = [member("a", &a, MemberSelect::Last), member("b", &b, MemberSelect::Last)];
    assert!(run_aggregate(&specs, None, None).is_err());
}

/// The planted benchmark as a corpus directory whose stored labels are the
/// corrupted ones, with an oracle score file. One in eight kept positives
/// is a quiet event the teacher scores around 0.65.
fn planted_corpus(dir: &std::path::Path) -> (usize, std::path::PathBuf) {
    let b = planted_benchmark(11);
    let names: Vec<String> = (0..8).map(|k| if k < 2 { format!("parent{k}") } else { format!("child{k}") }).collect();
    let shape = FeatureShape::new(4, 2);
    let samples = b
        .corrupted
        .iter()
        .enumerate()
        .map(|(i, l)| Sample::new(format!("p{i:03}"), vec![0.0; shape.len()], l.clone()))
        .collect();
    let corpus = MultiLabelCorpus::new(names.clone(), shape, samples).unwrap();
    write_corpus(&corpus, &dir.join("corpus")).unwrap();
    fs::write(dir.join("ontology.txt"), two_level_ontology().to_text(&names)).unwrap();
    let mut scores = b.scores.matrix().clone();
    let mut rng = psla::rng::stream(11, "quiet", 0);
    for (i, l) in b.corrupted.iter().enumerate() {
        for &k in l {
            if i % 8 == 3 {
                scores.set(i, k, rng.random_range(0.6..0.7));
            }
        }
    }
    let scores_path = dir.join("scores.csv");
    fs::write(&scores_path, scores.to_csv()).unwrap();
    (b.deleted, scores_path)
}

#[test]
fn enhancement_pipeline_on_planted_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (deleted, scores) = planted_corpus(dir.path());
    let text =
        "output_dir = 'out'\n[data]\ntrain = 'corpus'\neval = 'corpus'\nontology = 'ontology.txt'\n[augment]\nfreq_mask = 0\ntime_mask = 0\n";
    let cfg = ExperimentConfig::parse(text, dir.path()).unwrap();
    let teacher = TeacherSource::Scores { train: scores, eval: None };
    let out = run_enhance(&cfg, &teacher, RepairMode::Both, false).unwrap();
    assert_eq!(out.audits.len(), 4);
    let added = |p: ThresholdPolicy| out.audits.iter().find(|a| a.policy == p).unwrap().labels_added;
    assert_eq!(added(ThresholdPolicy::P10), deleted);
    assert_eq!(added(ThresholdPolicy::P5), deleted);
    assert!(added(ThresholdPolicy::P25) <= added(ThresholdPolicy::P10));
    for p in ThresholdPolicy::ALL {
        let d = dir.path().join("out/enhance").join(p.name());
        assert!(d.join("train_labels.tsv").exists());
        assert!(d.join("train_audit.csv").exists());
    }
    let summary = fs::read_to_string(dir.path().join("out/enhance/audit_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn training_on_enhanced_labels() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = dir.path().join("teacher");
    run_train(&quick_config(&teacher, Architecture::Linear, 2)).unwrap();
    let names: Vec<String> = (0..5).map(|k| format!("class{k:03}")).collect();
    fs::write(dir.path().join("onto.txt"), format!("{} {}\n{} {}\n", names[0], names[3], names[0], names[4])).unwrap();
    let mut student = quick_config(&dir.path().join("student"), Architecture::Linear, 1);
    student.data.ontology = Some(dir.path().join("onto.txt"));
    student.enhance = Some(psla::experiment::EnhanceSection {
        policy: ThresholdPolicy::P25,
        mode: RepairMode::Both,
        permissive: true,
        teacher_run: Some(teacher),
        teacher_scores: None,
    });
    run_train(&student).unwrap();
    assert!(dir.path().join("student/enhanced_train_labels.tsv").exists());
    assert!(dir.path().join("student/enhance_audit.csv").exists());
}

#[test]
fn teacher_scores_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _) = planted_corpus(dir.path());
    fs::write(dir.path().join("bad.csv"), Matrix::zeros(3, 8).to_csv()).unwrap();
    let text = "output_dir = 'out'\n[data]\ntrain = 'corpus'\neval = 'corpus'\nontology = 'ontology.txt'\n[augment]\nfreq_mask = 0\ntime_mask = 0\n";
    let cfg = ExperimentConfig::parse(text, dir.path()).unwrap();
    let teacher = TeacherSource::Scores { train: dir.path().join("bad.csv"), eval: None };
    assert!(run_enhance(&cfg, &teacher, RepairMode::Both, false).is_err());
}

#[test]
fn synthetic_corpus_directory_round_trip_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), Architecture::Linear, 1);
    let (t, _) = cfg.synth_specs().unwrap();
    let c = generate_synthetic(&t).unwrap();
    write_corpus(&c, &dir.path().join("c")).unwrap();
    assert_eq!(psla::corpus::read_corpus(&dir.path().join("c")).unwrap(), c);
}

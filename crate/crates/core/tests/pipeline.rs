use combolab::data::{load_dataset, synth_generate, write_dataset};
use combolab::discretize::DiscretizationSpec;
use combolab::losses::LossKind;
use combolab::model::{build_backbone, read_checkpoint, write_checkpoint, BackboneConfig};
use combolab::train::{compare_losses, cross_validate, evaluate, predict_scores, train_model, TrainConfig};

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 32,
        ..Default::default()
    }
}

#[test]
fn trained_model_survives_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_generate(120, &[2, 4, 4], 0.1, 1).unwrap();
    let data_path = dir.path().join("d.clb");
    write_dataset(&data_path, &data).unwrap();
    let data = load_dataset(&data_path).unwrap();

    let backbone = BackboneConfig::small(vec![2, 4, 4], 5);
    let out = train_model(&data, &DiscretizationSpec::ceil_half(5), &backbone, &quick()).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    write_checkpoint(&ckpt, &out.model).unwrap();
    let back = read_checkpoint(&ckpt).unwrap();
    assert_eq!(predict_scores(&back, &data).unwrap(), predict_scores(&out.model, &data).unwrap());
    assert_eq!(evaluate(&back, &data).unwrap(), evaluate(&out.model, &data).unwrap());
}

#[test]
fn equal_width_cv_refits_per_fold() {
    let data = synth_generate(100, &[6], 0.2, 3).unwrap();
    let spec = DiscretizationSpec::equal_width(4, None);
    let backbone = BackboneConfig::small(vec![6], 4);
    let report = cross_validate(&data, 5, &spec, &backbone, &quick()).unwrap();
    assert_eq!(report.per_fold.len(), 5);
    for f in &report.per_fold {
        let counts = f.class_counts.as_ref().unwrap();
        assert_eq!(counts.iter().sum::<usize>(), f.n_train);
        assert!(f.metrics.mae <= f.metrics.rmse);
    }
}

#[test]
fn compare_rows_share_initialisation() {
    let data = synth_generate(60, &[4], 0.1, 2).unwrap();
    let backbone = BackboneConfig::small(vec![4], 5);
    let spec = DiscretizationSpec::ceil_half(5);
    let zero = TrainConfig { epochs: 0, ..quick() };
    let init = build_backbone(&backbone).unwrap();
    for loss in LossKind::ALL {
        let out = train_model(&data, &spec, &backbone, &TrainConfig { loss, ..zero.clone() }).unwrap();
        assert_eq!(out.model.params, init.params);
    }
    let report = compare_losses(&data, &LossKind::ALL, &spec, &backbone, &quick()).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert_eq!(report, compare_losses(&data, &LossKind::ALL, &spec, &backbone, &quick()).unwrap());
}

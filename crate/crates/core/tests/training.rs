//! Whole training runs on generated data.

use dctir::nn::{self, LabeledImage};
use dctir::pipeline::ImageTensor;
use dctir::retrieval;
use dctir::synthetic::{self, SyntheticSpec};
use dctir::workflow::{self, ExperimentConfig};

#[test]
fn forty_epochs_reduce_the_training_loss() {
    let spec = SyntheticSpec { classes: 4, images_per_class: 50, size: 128, queries_per_class: 3, seed: 7, ..SyntheticSpec::default() };
    let dir = tempfile::tempdir().unwrap();
    synthetic::write_dataset(&synthetic::generate(&spec).unwrap(), dir.path()).unwrap();
    let cfg = ExperimentConfig::desk_scale(4);
    let (_, log, classes) = workflow::train_dir(&dir.path().join("train"), &cfg, |_| {}).unwrap();
    assert_eq!(classes.len(), 4);
    assert_eq!(log.epochs.len(), 40);
    let (first, last) = (log.epochs[0].loss, log.epochs[39].loss);
    assert!(last < first, "loss {first} -> {last}");
    assert!(log.epochs.iter().all(|e| e.loss.is_finite() && e.seconds > 0.0));
}

fn patch_set(classes: usize, per_class: usize, seed_base: u64, size: usize) -> Vec<(LabeledImage, [usize; 4])> {
    (0..classes)
        .flat_map(|c| {
            (0..per_class).map(move |i| {
                let (img, bbox) = synthetic::patch_image(c, seed_base + i as u64, size);
                (LabeledImage { image: ImageTensor::from_rgb(&img), label: c }, bbox)
            })
        })
        .collect()
}

#[test]
fn strongest_keypoint_falls_on_the_patch() {
    let size = 128;
    let train: Vec<LabeledImage> = patch_set(3, 24, 0, size).into_iter().map(|(d, _)| d).collect();
    let mut cfg = ExperimentConfig::desk_scale(3);
    cfg.train.epochs = 40;
    cfg.model.input_channels = cfg.selection.count();
    let (ckpt, _) = nn::train(&train, &cfg.model, &cfg.train, &cfg.selection).unwrap();
    let mut inside = 0;
    let held_out = patch_set(3, 4, 1000, size);
    for (d, [x1, y1, x2, y2]) in &held_out {
        let f = retrieval::extract(&ckpt, &d.image, &cfg.retrieval).unwrap();
        let top = &f.locals[0];
        let hit = (*x1 as f32..*x2 as f32).contains(&top.x) && (*y1 as f32..*y2 as f32).contains(&top.y);
        eprintln!("class {} box {:?} top ({:.1}, {:.1}) a {:.3} {}", d.label, [x1, y1, x2, y2], top.x, top.y, top.attention, hit);
        inside += hit as usize;
    }
    assert_eq!(inside, held_out.len());
}

use masnet_web::{heat_rgba, image_rgba, mask_rgba, DemoState, MapKind, LEVELS, SIZE};

#[test]
fn buffers_are_rgba_at_display_size() {
    let demo = DemoState::new(3, "individual").unwrap();
    assert_eq!(image_rgba(&demo.pair().pair.image_a).len(), SIZE * SIZE * 4);
    assert_eq!(mask_rgba(demo.pair().mask.data()).len(), SIZE * SIZE * 4);
    for stage in 0..2 {
        let (gray, h, w) = demo.attention_map(stage, 1, MapKind::Weights).unwrap();
        assert_eq!(gray.len(), h * w);
        assert_eq!(heat_rgba(&gray, h, w, SIZE).len(), SIZE * SIZE * 4);
    }
}

#[test]
fn every_offered_level_renders() {
    let mut demo = DemoState::new(1, LEVELS[0]).unwrap();
    for level in LEVELS {
        demo.set_level(level).unwrap();
        for kind in [MapKind::Weights, MapKind::Values] {
            demo.attention_map(1, 2, kind).unwrap();
        }
    }
    assert!(demo.set_level("local:5x5").is_ok());
    assert!(demo.attention_map(0, 1, MapKind::Weights).is_err());
    assert!(demo.set_level("sideways").is_err());
    assert!(demo.attention_map(0, 3, MapKind::Weights).is_err());
}

#[test]
fn switching_level_keeps_weights() {
    let mut demo = DemoState::new(5, "global").unwrap();
    demo.train(3).unwrap();
    let before = demo.model().params().tensors().to_vec();
    demo.set_level("individual").unwrap();
    assert_eq!(demo.model().params().tensors(), &before[..]);
    assert_eq!(demo.model().config().level.to_string(), "individual");
}

#[test]
fn training_is_seeded_and_lowers_the_loss() {
    let mut a = DemoState::new(9, "individual").unwrap();
    let mut b = DemoState::new(9, "individual").unwrap();
    let first = a.train(5).unwrap().unwrap();
    assert_eq!(Some(first), b.train(5).unwrap());
    a.train(60).unwrap();
    let later = a.train(10).unwrap().unwrap();
    assert!(later < first, "{later} !< {first}");
    assert_eq!(a.iter(), 75);
}

#[test]
fn training_stops_at_the_schedule_end() {
    let mut demo = DemoState::with_schedule(2, "individual", 12).unwrap();
    let max = demo.max_iters();
    assert_eq!(max, 12);
    assert!(demo.train(max + 10).unwrap().is_some());
    assert_eq!(demo.iter(), max);
    assert_eq!(demo.train(1).unwrap(), None);
}

#[test]
fn held_out_pairs_differ() {
    let mut demo = DemoState::new(4, "individual").unwrap();
    let first = demo.pair().clone();
    demo.show_pair(1).unwrap();
    assert_ne!(demo.pair(), &first);
    demo.show_pair(0).unwrap();
    assert_eq!(demo.pair(), &first);
    let iou = demo.pair_iou().unwrap();
    assert!((0.0..=1.0).contains(&iou));
}

#[test]
fn schedule_must_outlast_warmup() {
    assert!(DemoState::with_schedule(2, "individual", 1).is_err());
}

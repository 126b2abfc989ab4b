use magboard_core::recognizer::{batch_reference, ActionKind, RecognizerConfig};
use magboard_core::samples::grid_story;
use magboard_core::tracking::{perturb, script_scenario, static_script};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Short dropouts and sub-threshold jitter on a still scene produce nothing
/// beyond the initial attaches.
#[test]
fn static_scenes_survive_dropouts_and_jitter() {
    let story = grid_story(10);
    let cfg = RecognizerConfig::default();
    for seed in 0..40u64 {
        let count = 1 + (seed as usize % 10);
        let frames = script_scenario(&static_script(&story, count, 8_000, 60.0), &story.magnets).unwrap();
        let clean = batch_reference(&frames, &cfg, &story.magnets).unwrap();
        assert_eq!(clean.len(), count);
        assert!(clean.iter().all(|e| matches!(e.kind, ActionKind::Attach { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = perturb(&mut rng, &frames, 300, 450, cfg.eps_move / 2.0 * 0.9);
        let events = batch_reference(&noisy, &cfg, &story.magnets).unwrap();
        let shape = |v: &[magboard_core::recognizer::UserActionEvent]| -> Vec<(u64, Vec<String>)> {
            v.iter().map(|e| (e.t_ms, e.kind.magnets().iter().map(|m| m.to_string()).collect())).collect()
        };
        assert!(events.iter().all(|e| matches!(e.kind, ActionKind::Attach { .. })), "seed {seed}: {events:?}");
        assert_eq!(shape(&events), shape(&clean), "seed {seed}");
    }
}

#[test]
fn long_dropout_is_a_detach() {
    let story = grid_story(2);
    let cfg = RecognizerConfig::default();
    let mut frames = script_scenario(&static_script(&story, 1, 3_000, 60.0), &story.magnets).unwrap();
    for f in frames.iter_mut().filter(|f| (1_000..1_700).contains(&f.t_ms)) {
        f.markers.clear();
    }
    let events = batch_reference(&frames, &cfg, &story.magnets).unwrap();
    let kinds: Vec<_> = events.iter().map(|e| e.kind.name()).collect();
    assert_eq!(kinds, ["attach", "detach", "attach"]);
}

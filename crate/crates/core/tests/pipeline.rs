use magboard_core::mapper::{CommandKind, CommandSet};
use magboard_core::pipeline::run_frames;
use magboard_core::recognizer::RecognizerConfig;
use magboard_core::samples::grid_story;
use magboard_core::tracking::{margin_script, script_scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn margin_scripts_map_identically_at_both_rates() {
    let story = grid_story(10);
    let set = CommandSet::builtin("default").unwrap();
    let cfg = RecognizerConfig::default();
    let mut kinds = std::collections::BTreeSet::new();
    for seed in 0..100 {
        let mut traces = Vec::new();
        for rate in [60.0, 30.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let script = margin_script(&mut rng, &story, rate);
            let frames = script_scenario(&script, &story.magnets).unwrap();
            let run = run_frames(&story, &set, &cfg, &frames).unwrap();
            assert!(run.rejected.is_empty(), "seed {seed}: {:?}", run.rejected);
            let cmds: Vec<CommandKind> = run.commands.into_iter().map(|c| c.kind).collect();
            traces.push(cmds);
        }
        for c in &traces[0] {
            kinds.insert(c.name());
        }
        assert_eq!(traces[0], traces[1], "seed {seed}");
    }
    println!("{kinds:?}");
}

//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any fail.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use magboard_core::geom::Point;
use magboard_core::ids::{MagnetId, NodeId};
use magboard_core::mapper::{parse_command_trace, serialize_command_trace, CommandKind, CommandSet, InteractionCommand};
use magboard_core::pipeline::{run_frames, SessionTrace};
use magboard_core::recognizer::{
    batch_reference, parse_event_trace, serialize_event_trace, ActionKind, Recognizer, RecognizerConfig, UserActionEvent,
};
use magboard_core::samples::{grid_story, minimal_story, wwi_story};
use magboard_core::story::{parse_story, serialize_story, AnchorMode, NodeKind, Reveal, StoryDocument};
use magboard_core::tracking::{
    margin_script, parse_stream, perturb, random_script, script_scenario, serialize_stream, static_script, GestureScript,
    ObservationFrame, RandomScriptParams, ScriptStep,
};
use magboard_core::viz::{replay, VizState};
use magboard_presenter::protocol::SessionMessage;
use magboard_presenter::session::Session;

const EQUIVALENCE_SEEDS: u64 = 500;
const MAX_MAGNETS: usize = 12;
const MAX_SCRIPT_MS: u64 = 30_000;
const DETERMINISM_SEEDS: u64 = 150;
const RATE_CASES: u64 = 100;
const OCCLUSION_CASES: u64 = 100;
/// Marker gaps stay under the 500 ms detach threshold: 450 ms dropouts plus
/// up to two sampling periods at 60 Hz.
const MAX_DROPOUT_MS: u64 = 450;
const REVEAL_MIN_STEPS: usize = 1000;
const GOLDEN_BUDGET: Duration = Duration::from_secs(5);
const P99_BUDGET: Duration = Duration::from_millis(5);
const PERF_RATE_HZ: f64 = 60.0;
const PERF_SECONDS: u64 = 60;
const PERF_MAGNETS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/wwi").join(name)
}

fn default_set() -> CommandSet {
    CommandSet::builtin("default").unwrap()
}

fn random_case(seed: u64) -> (StoryDocument, Vec<ObservationFrame>) {
    let story = grid_story(MAX_MAGNETS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomScriptParams {
        magnets: 1 + (seed as usize % MAX_MAGNETS),
        duration_ms: 5_000 + (seed * 7_919) % (MAX_SCRIPT_MS - 5_000 + 1),
        rate_hz: if seed.is_multiple_of(4) { 30.0 } else { 60.0 },
    };
    let script = random_script(&mut rng, &story, params);
    let frames = script_scenario(&script, &story.magnets).unwrap();
    (story, frames)
}

/// Re-applies a trace one command at a time, running the validator after
/// each. Returns the number of commands checked.
fn validate_trace(story: &StoryDocument, cmds: &[InteractionCommand]) -> Result<usize, String> {
    let mut s = VizState::initial(story);
    for (i, c) in cmds.iter().enumerate() {
        s.apply_command(story, c).map_err(|e| format!("command {i} refused on replay: {e}"))?;
        s.validate(story).map_err(|e| format!("command {i}: {e:?}"))?;
    }
    Ok(cmds.len())
}

fn golden() -> Outcome {
    let start = Instant::now();
    let story = wwi_story();
    let script: GestureScript = serde_json::from_slice(&std::fs::read(fixture("script.json")).unwrap()).unwrap();
    let frames = script_scenario(&script, &story.magnets).unwrap();
    let trace = run_frames(&story, &default_set(), &RecognizerConfig::default(), &frames).unwrap();
    let elapsed = start.elapsed();
    let trace_ok = serialize_command_trace(&trace.commands) == std::fs::read_to_string(fixture("golden_commands.jsonl")).unwrap();
    let snap_ok = trace.state.snapshot() == std::fs::read(fixture("expected_snapshot.json")).unwrap();
    let required = [
        "show-node",
        "reposition-node",
        "scale-node",
        "change-node-state",
        "show-link",
        "show-or-extend-group",
        "hide-or-shrink-group",
        "toggle-annotation",
        "toggle-child-network",
        "hide-node",
        "hide-link",
    ];
    let seen: BTreeSet<&str> = trace.commands.iter().map(|c| c.kind.name()).collect();
    let missing: Vec<_> = required.iter().filter(|r| !seen.contains(*r)).collect();
    let child_toggles = trace.commands.iter().filter(|c| c.kind.name() == "toggle-child-network").count();
    let pass = trace_ok && snap_ok && missing.is_empty() && child_toggles >= 2 && trace.rejected.is_empty() && elapsed < GOLDEN_BUDGET;
    outcome(
        pass,
        format!(
            "{} commands, trace match {trace_ok}, snapshot match {snap_ok}, missing {missing:?}, child network shown+hidden {}, {:.0} ms (< {} ms)",
            trace.commands.len(),
            child_toggles >= 2,
            elapsed.as_secs_f64() * 1e3,
            GOLDEN_BUDGET.as_millis()
        ),
    )
}

fn incremental(frames: &[ObservationFrame], story: &StoryDocument) -> Vec<UserActionEvent> {
    let mut r = Recognizer::new(RecognizerConfig::default(), &story.magnets).unwrap();
    let mut out = Vec::new();
    for f in frames {
        out.extend(r.ingest_frame(f).unwrap());
    }
    if let Some(last) = frames.last() {
        out.extend(r.finalize(last.t_ms));
    }
    out
}

fn equivalence() -> Outcome {
    let mut failures = Vec::new();
    let mut events = 0;
    let mut kinds = BTreeSet::new();
    for seed in 0..EQUIVALENCE_SEEDS {
        let (story, frames) = random_case(seed);
        let inc = incremental(&frames, &story);
        let batch = batch_reference(&frames, &RecognizerConfig::default(), &story.magnets).unwrap();
        events += inc.len();
        kinds.extend(inc.iter().map(|e| e.kind.name()));
        if inc != batch {
            failures.push(seed);
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{}/{EQUIVALENCE_SEEDS} scripts equal ({events} events, {} action kinds, <= {MAX_MAGNETS} magnets, <= {} s){}",
            EQUIVALENCE_SEEDS as usize - failures.len(),
            kinds.len(),
            MAX_SCRIPT_MS / 1000,
            if failures.is_empty() { String::new() } else { format!(", failing seeds {failures:?}") }
        ),
    )
}

fn serialized(trace: &SessionTrace) -> (String, String, Vec<u8>) {
    (serialize_event_trace(&trace.events), serialize_command_trace(&trace.commands), trace.state.snapshot())
}

fn determinism(validated: &mut usize) -> Outcome {
    let set = default_set();
    let cfg = RecognizerConfig::default();
    let mut failures = Vec::new();
    for seed in 0..DETERMINISM_SEEDS {
        let (story, frames) = random_case(seed);
        let (story2, frames2) = random_case(seed);
        let a = run_frames(&story, &set, &cfg, &frames).unwrap();
        let b = run_frames(&story2, &set, &cfg, &frames2).unwrap();
        if serialize_stream(&frames) != serialize_stream(&frames2) || serialized(&a) != serialized(&b) {
            failures.push(seed);
        }
        match validate_trace(&story, &a.commands) {
            Ok(n) => *validated += n,
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                failures.push(seed);
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{}/{DETERMINISM_SEEDS} scenarios byte-identical across two runs", DETERMINISM_SEEDS as usize - failures.len()),
    )
}

fn rate_independence(validated: &mut usize) -> Outcome {
    let story = grid_story(10);
    let set = default_set();
    let cfg = RecognizerConfig::default();
    let mut failures = Vec::new();
    let mut commands = 0;
    for seed in 0..RATE_CASES {
        let mut traces = Vec::new();
        for rate in [60.0, 30.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let script = margin_script(&mut rng, &story, rate);
            let frames = script_scenario(&script, &story.magnets).unwrap();
            let run = run_frames(&story, &set, &cfg, &frames).unwrap();
            match validate_trace(&story, &run.commands) {
                Ok(n) => *validated += n,
                Err(e) => {
                    eprintln!("seed {seed} at {rate} Hz: {e}");
                    failures.push(seed);
                }
            }
            traces.push(run.commands.into_iter().map(|c| c.kind).collect::<Vec<CommandKind>>());
        }
        commands += traces[0].len();
        if traces[0] != traces[1] {
            failures.push(seed);
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{}/{RATE_CASES} margin scripts map identically at 60 and 30 Hz ({commands} commands){}",
            RATE_CASES as usize - failures.len(),
            if failures.is_empty() { String::new() } else { format!(", failing seeds {failures:?}") }
        ),
    )
}

/// Longest time between two sightings of the same marker.
fn longest_gap(frames: &[ObservationFrame]) -> u64 {
    let mut last = std::collections::BTreeMap::new();
    let mut gap = 0;
    for f in frames {
        for m in &f.markers {
            if let Some(prev) = last.insert(m.fiducial_id, f.t_ms) {
                gap = gap.max(f.t_ms - prev);
            }
        }
    }
    gap
}

fn occlusion() -> Outcome {
    let story = grid_story(10);
    let cfg = RecognizerConfig::default();
    let jitter = cfg.eps_move / 2.0 * 0.9;
    let mut failures = Vec::new();
    let mut dropped_frames = 0usize;
    let mut max_gap = 0u64;
    for seed in 0..OCCLUSION_CASES {
        let count = 1 + (seed as usize % 10);
        let frames = script_scenario(&static_script(&story, count, 10_000, 60.0), &story.magnets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = perturb(&mut rng, &frames, 300, MAX_DROPOUT_MS, jitter);
        dropped_frames += frames.iter().zip(&noisy).filter(|(a, b)| a.markers.len() != b.markers.len()).count();
        max_gap = max_gap.max(longest_gap(&noisy));
        let events = batch_reference(&noisy, &cfg, &story.magnets).unwrap();
        let inc = incremental(&noisy, &story);
        // Only the initial placements, all confirmed before the noise starts.
        let after_placement = events.iter().filter(|e| !matches!(e.kind, ActionKind::Attach { .. }) || e.t_ms > 300).count();
        if after_placement != 0 || events.len() != count || inc != events {
            failures.push(seed);
        }
    }
    outcome(
        failures.is_empty() && max_gap < cfg.t_detach_ms,
        format!(
            "{}/{OCCLUSION_CASES} still scenes emit nothing past placement (longest marker gap {max_gap} ms < {} ms, jitter < {jitter:.4}, {dropped_frames} frames with a marker missing){}",
            OCCLUSION_CASES as usize - failures.len(),
            cfg.t_detach_ms,
            if failures.is_empty() { String::new() } else { format!(", failing seeds {failures:?}") }
        ),
    )
}

/// From-scratch visibility of secondaries and auto links.
fn reveal_oracle(story: &StoryDocument, state: &VizState) -> (BTreeSet<NodeId>, BTreeSet<String>) {
    let primaries: BTreeSet<&NodeId> = story
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Primary && state.nodes[&n.node_id].visible)
        .map(|n| &n.node_id)
        .collect();
    let mut visible: BTreeSet<NodeId> = primaries.iter().map(|n| (*n).clone()).collect();
    for n in story.nodes.iter().filter(|n| n.kind == NodeKind::Secondary) {
        let hits = n.anchors.iter().filter(|a| primaries.contains(a)).count();
        let on = match n.anchor_mode {
            AnchorMode::All => hits > 0 && hits == n.anchors.len(),
            AnchorMode::Any => hits > 0,
        };
        if on {
            visible.insert(n.node_id.clone());
        }
    }
    let links = story
        .links
        .iter()
        .filter(|l| l.reveal == Reveal::Auto && visible.contains(&l.source) && visible.contains(&l.target))
        .map(|l| l.link_id.to_string())
        .collect();
    (visible, links)
}

fn random_command(rng: &mut ChaCha8Rng, story: &StoryDocument) -> CommandKind {
    let nodes: Vec<NodeId> = story.nodes.iter().map(|n| n.node_id.clone()).collect();
    let n = |rng: &mut ChaCha8Rng| nodes.choose(rng).unwrap().clone();
    match rng.gen_range(0..20) {
        0..=5 => CommandKind::ShowNode { node: n(rng) },
        6..=8 => CommandKind::HideNode { node: n(rng) },
        9 => CommandKind::RepositionNode {
            node: n(rng),
            at: Point::new(rng.gen_range(-0.1..1.1), rng.gen_range(-0.1..1.1)),
        },
        10 => CommandKind::ScaleNode {
            node: n(rng),
            factor: rng.gen_range(0.3..3.0),
        },
        11 => CommandKind::ChangeNodeState { node: n(rng) },
        12..=13 => CommandKind::ShowLink { a: n(rng), b: n(rng) },
        14 => CommandKind::HideLink { a: n(rng), b: n(rng) },
        15 => CommandKind::ScaleLink {
            a: n(rng),
            b: n(rng),
            factor: rng.gen_range(0.3..3.0),
        },
        16 => CommandKind::ShowOrExtendGroup { a: n(rng), b: n(rng) },
        17 => CommandKind::HideOrShrinkGroup { node: n(rng) },
        18 => CommandKind::ToggleAnnotation { node: n(rng) },
        _ => CommandKind::ToggleChildNetwork { node: n(rng) },
    }
}

/// Random command sequences: reveal oracle and validator after every step,
/// refused commands leave state and revision untouched.
fn command_sequences() -> (Outcome, Outcome) {
    let stories = [grid_story(8), wwi_story()];
    let mut steps = 0;
    let mut applied = 0;
    let mut refused = 0;
    let mut reveal_failures = Vec::new();
    let mut validator_failures = Vec::new();
    let mut seed = 0u64;
    while steps < REVEAL_MIN_STEPS * 3 {
        let story = &stories[seed as usize % 2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = VizState::initial(story);
        for i in 0..80 {
            let cmd = InteractionCommand::new(i, random_command(&mut rng, story));
            let before = s.snapshot();
            let rev = s.revision;
            match s.apply_command(story, &cmd) {
                Ok(_) => {
                    applied += 1;
                    if s.revision != rev + 1 {
                        validator_failures.push(seed);
                    }
                }
                Err(_) => {
                    refused += 1;
                    if s.snapshot() != before {
                        validator_failures.push(seed);
                    }
                }
            }
            if s.validate(story).is_err() {
                validator_failures.push(seed);
            }
            let (nodes, links) = reveal_oracle(story, &s);
            let got_nodes: BTreeSet<NodeId> = s.nodes.iter().filter(|(_, v)| v.visible).map(|(k, _)| k.clone()).collect();
            let got_links: BTreeSet<String> = story
                .links
                .iter()
                .filter(|l| l.reveal == Reveal::Auto && s.links[&l.link_id].visible)
                .map(|l| l.link_id.to_string())
                .collect();
            if got_nodes != nodes || got_links != links {
                reveal_failures.push((seed, i));
            }
            steps += 1;
        }
        seed += 1;
    }
    let reveal = outcome(
        reveal_failures.is_empty() && steps >= REVEAL_MIN_STEPS,
        format!(
            "{steps} steps over {seed} sequences match the from-scratch predicate (>= {REVEAL_MIN_STEPS} required){}",
            if reveal_failures.is_empty() { String::new() } else { format!(", mismatches {reveal_failures:?}") }
        ),
    );
    let validator = outcome(
        validator_failures.is_empty(),
        format!("{applied} applied and {refused} refused random commands"),
    );
    (reveal, validator)
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let idx = ((sorted.len() as f64 * p).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn perf_stream(seed: u64) -> Vec<ObservationFrame> {
    let story = grid_story(PERF_MAGNETS);
    let duration = PERF_SECONDS * 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if seed == 1 {
        // All ten magnets stay in view and keep gliding around their cells.
        let mut script = static_script(&story, PERF_MAGNETS, duration, PERF_RATE_HZ);
        let cells: Vec<(MagnetId, Point)> = script
            .steps
            .iter()
            .filter_map(|s| match s {
                ScriptStep::Place { magnet, at, .. } => Some((magnet.clone(), *at)),
                _ => None,
            })
            .collect();
        for (k, (magnet, home)) in cells.into_iter().enumerate() {
            let mut t0 = 500 + 97 * k as u64;
            let mut out = true;
            while t0 + 900 < duration {
                let to = if out { home.offset(0.03, 0.02) } else { home };
                script.push(ScriptStep::Glide {
                    magnet: magnet.clone(),
                    from: None,
                    to,
                    t0_ms: t0,
                    t1_ms: t0 + 800,
                });
                out = !out;
                t0 += 1200 + rng.gen_range(0..400);
            }
        }
        return script_scenario(&script, &story.magnets).unwrap();
    }
    if seed == 0 {
        // Still scene with tracking noise.
        let frames = script_scenario(&static_script(&story, PERF_MAGNETS, duration, PERF_RATE_HZ), &story.magnets).unwrap();
        perturb(&mut rng, &frames, 300, MAX_DROPOUT_MS, 0.004)
    } else {
        // Busy scene: every magnet in play, gliding, spinning and touched.
        let params = RandomScriptParams {
            magnets: PERF_MAGNETS,
            duration_ms: duration,
            rate_hz: PERF_RATE_HZ,
        };
        script_scenario(&random_script(&mut rng, &story, params), &story.magnets).unwrap()
    }
}

fn performance() -> Outcome {
    let period = Duration::from_secs_f64(1.0 / PERF_RATE_HZ);
    let mut details = Vec::new();
    let mut pass = true;
    for (name, seed) in [("still", 0u64), ("gliding", 1), ("busy", 3)] {
        let frames = perf_stream(seed);
        let visible_max = frames.iter().map(|f| f.markers.len()).max().unwrap_or(0);
        let visible_mean = frames.iter().map(|f| f.markers.len()).sum::<usize>() as f64 / frames.len() as f64;
        let mut session = Session::new(grid_story(PERF_MAGNETS), default_set(), RecognizerConfig::default(), 100).unwrap();
        let mut times = Vec::with_capacity(frames.len());
        // Waiting time of each frame if frames arrive every period (Lindley recursion).
        let mut wait = Duration::ZERO;
        let mut max_wait = Duration::ZERO;
        let mut max_buffer = 0;
        for f in &frames {
            let t0 = Instant::now();
            let out = session.offer(f.clone()).unwrap();
            for m in &out {
                std::hint::black_box(m.to_line());
            }
            let dt = t0.elapsed();
            times.push(dt);
            wait = (wait + dt).saturating_sub(period);
            max_wait = max_wait.max(wait);
            max_buffer = max_buffer.max(session.buffered());
        }
        session.finish().unwrap();
        times.sort();
        let p99 = percentile(&times, 0.99);
        let ok = p99 < P99_BUDGET && max_wait < period && max_buffer <= 8 && visible_max >= PERF_MAGNETS;
        pass &= ok;
        details.push(format!(
            "{name}: {} frames, {visible_mean:.1} markers mean / {visible_max} max, p50 {:.3} ms, p99 {:.3} ms, max {:.3} ms, backlog {:.3} ms, reorder buffer <= {max_buffer}",
            frames.len(),
            percentile(&times, 0.5).as_secs_f64() * 1e3,
            p99.as_secs_f64() * 1e3,
            times.last().unwrap().as_secs_f64() * 1e3,
            max_wait.as_secs_f64() * 1e3,
        ));
    }
    outcome(pass, format!("p99 budget {} ms; {}", P99_BUDGET.as_millis(), details.join("; ")))
}

fn round_trips() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: String| {
        if !ok {
            failures.push(what);
        }
    };
    let mut stories = vec![wwi_story(), minimal_story()];
    stories.extend((2..=MAX_MAGNETS).map(grid_story));
    for s in &stories {
        let bytes = serialize_story(s);
        let back = parse_story(&bytes).unwrap();
        check(back == *s && serialize_story(&back) == bytes, format!("story {}", s.story_id));
    }
    check(
        std::fs::read(fixture("story.json")).unwrap() == serialize_story(&wwi_story()),
        "story fixture".into(),
    );
    let set = default_set();
    let mut counts = [0usize; 4];
    for seed in 0..60 {
        let (story, frames) = random_case(seed);
        let text = serialize_stream(&frames);
        let parsed = parse_stream(&text).unwrap();
        check(parsed == frames && serialize_stream(&parsed) == text, format!("frames {seed}"));
        let trace = run_frames(&story, &set, &RecognizerConfig::default(), &frames).unwrap();
        let ev = serialize_event_trace(&trace.events);
        check(parse_event_trace(&ev).map(|e| e == trace.events).unwrap_or(false), format!("actions {seed}"));
        let cmds = serialize_command_trace(&trace.commands);
        check(parse_command_trace(&cmds).map(|c| c == trace.commands).unwrap_or(false), format!("commands {seed}"));
        let snap = trace.state.snapshot();
        let back = VizState::parse_snapshot(&snap).unwrap();
        check(back == trace.state && back.snapshot() == snap, format!("snapshot {seed}"));
        check(replay(&story, &trace.commands).map(|s| s == trace.state).unwrap_or(false), format!("replay {seed}"));
        for m in [SessionMessage::State(magboard_presenter::protocol::StatePayload::Snapshot(Box::new(trace.state.clone())))]
            .into_iter()
            .chain(frames.iter().take(50).cloned().map(SessionMessage::Frame))
            .chain(trace.events.iter().cloned().map(SessionMessage::Action))
            .chain(trace.commands.iter().cloned().map(SessionMessage::Command))
        {
            let line = m.to_line();
            check(SessionMessage::parse(&line).map(|b| b == m).unwrap_or(false), format!("message {seed} {}", m.type_name()));
        }
        counts[0] += frames.len();
        counts[1] += trace.events.len();
        counts[2] += trace.commands.len();
        counts[3] += 1;
    }
    for id in magboard_core::mapper::BUILTIN_SETS {
        let s = CommandSet::builtin(id).unwrap();
        check(CommandSet::load(s.to_json_pretty().as_bytes()).map(|b| b == s).unwrap_or(false), format!("command set {id}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} stories, {} frames, {} actions, {} commands, {} snapshots, 2 command sets{}",
            stories.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3],
            if failures.is_empty() { String::new() } else { format!(", failures {failures:?}") }
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut validated = 0usize;
    let run = |name: &'static str, f: &mut dyn FnMut() -> Outcome, results: &mut Vec<(&str, Outcome)>| {
        let o = f();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    run("golden-wwi-replay", &mut golden, &mut results);
    run("recognizer-oracle-equivalence", &mut equivalence, &mut results);
    run("determinism", &mut || determinism(&mut validated), &mut results);
    run("rate-independence", &mut || rate_independence(&mut validated), &mut results);
    run("occlusion-robustness", &mut occlusion, &mut results);
    let (reveal, validator) = command_sequences();
    run("auto-reveal-equivalence", &mut || outcome(reveal.pass, reveal.detail.clone()), &mut results);
    let validator_detail = format!("{}; {} pipeline commands re-validated step by step", validator.detail, validated);
    run("state-validator", &mut || outcome(validator.pass, validator_detail.clone()), &mut results);
    run("performance", &mut performance, &mut results);
    run("round-trips", &mut round_trips, &mut results);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

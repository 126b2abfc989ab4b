use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magboard_core::mapper::CommandSet;
use magboard_core::tracking::parse_stream;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/wwi").join(name)
}

fn magboard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magboard")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn replay(input_flag: &str, input: &Path, out: &Path, extra: &[&str]) -> Output {
    let story = fixture("story.json");
    let mut args = vec!["replay", "--story", p(&story), input_flag, p(input), "--out-dir", p(out)];
    args.extend_from_slice(extra);
    magboard(&args)
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn replay_of_golden_frames_and_script_reproduces_fixtures() {
    for (flag, input) in [("--frames", fixture("frames.jsonl")), ("--script", fixture("script.json"))] {
        let dir = tempfile::tempdir().unwrap();
        let out = replay(flag, &input, dir.path(), &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(read(dir.path().join("commands.jsonl")), read(fixture("golden_commands.jsonl")));
        assert_eq!(read(dir.path().join("final_snapshot.json")).trim_end(), read(fixture("expected_snapshot.json")));
        assert!(read(dir.path().join("actions.jsonl")).lines().count() > 30);
    }
}

#[test]
fn replay_of_empty_frames_gives_empty_traces() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("empty.jsonl");
    std::fs::write(&frames, "").unwrap();
    let out = replay("--frames", &frames, dir.path(), &[]);
    assert!(out.status.success());
    assert_eq!(read(dir.path().join("actions.jsonl")), "");
    assert_eq!(read(dir.path().join("commands.jsonl")), "");
    let snap = magboard_core::viz::VizState::parse_snapshot(read(dir.path().join("final_snapshot.json")).as_bytes()).unwrap();
    assert_eq!(snap, magboard_core::viz::VizState::initial(&magboard_core::samples::wwi_story()));
}

#[test]
fn corrupt_frame_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines: Vec<String> = read(fixture("frames.jsonl")).lines().take(20).map(String::from).collect();
    lines[6] = "{\"t_ms\": oops".into();
    let frames = dir.path().join("bad.jsonl");
    std::fs::write(&frames, lines.join("\n")).unwrap();
    let out = replay("--frames", &frames, dir.path(), &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
    assert!(!dir.path().join("commands.jsonl").exists());
}

#[test]
fn recognizer_overrides_are_read_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rec.toml");
    // Taps in the walkthrough last 150 ms; a 100 ms ceiling turns them into nothing.
    std::fs::write(&cfg, "t_tap_max_ms = 100\n").unwrap();
    let out = replay("--frames", &fixture("frames.jsonl"), dir.path(), &["--config", p(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!read(dir.path().join("commands.jsonl")).contains("show-link"));
    std::fs::write(&cfg, "t_tap_max = 100\n").unwrap();
    assert!(!replay("--frames", &fixture("frames.jsonl"), dir.path(), &["--config", p(&cfg)]).status.success());
}

#[test]
fn validate_story_exit_codes() {
    assert_eq!(magboard(&["validate-story", p(&fixture("story.json"))]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&read(fixture("story.json"))).unwrap();
    doc["magnets"][1]["side_a_marker"] = doc["magnets"][0]["side_a_marker"].clone();
    let bad = dir.path().join("dup.json");
    std::fs::write(&bad, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = magboard(&["validate-story", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("DUP_FIDUCIAL"));
    assert_eq!(magboard(&["validate-story", p(&dir.path().join("missing.json"))]).status.code(), Some(2));
}

#[test]
fn exported_command_sets_load_back() {
    for id in ["default", "directional"] {
        let out = magboard(&["export-command-set", id]);
        assert!(out.status.success());
        let set = CommandSet::load(&out.stdout).unwrap();
        assert_eq!(set, CommandSet::builtin(id).unwrap());
    }
    assert!(!magboard(&["export-command-set", "nope"]).status.success());
}

#[test]
fn exported_set_file_drives_replay() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.json");
    assert!(magboard(&["export-command-set", "default", "--out", p(&set)]).status.success());
    let out = replay("--frames", &fixture("frames.jsonl"), dir.path(), &["--command-set", p(&set)]);
    assert!(out.status.success());
    assert_eq!(read(dir.path().join("commands.jsonl")), read(fixture("golden_commands.jsonl")));
}

#[test]
fn script_expansion() {
    let story = fixture("story.json");
    let out = magboard(&["script", "--story", p(&story), "--script", p(&fixture("script.json"))]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), read(fixture("frames.jsonl")));

    let run = || magboard(&["script", "--story", p(&story), "--seed", "7", "--duration-ms", "5000", "--rate", "30"]).stdout;
    let a = run();
    assert_eq!(a, run());
    let frames = parse_stream(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(frames.len(), 151);
}

#[test]
fn live_run_log_replays_byte_for_byte() {
    use futures_util::{SinkExt, StreamExt};
    use std::io::{BufRead, BufReader};
    use tokio_tungstenite::tungstenite::Message;

    let dir = tempfile::tempdir().unwrap();
    let (log, live, offline) = (dir.path().join("session.jsonl"), dir.path().join("live"), dir.path().join("offline"));
    let story = fixture("story.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_magboard"))
        .args(["run", "--story", p(&story), "--listen", "127.0.0.1:0", "--log", p(&log), "--out-dir", p(&live)])
        .arg("--exit-on-producer-close")
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let addr = loop {
        let mut line = String::new();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(rest) = line.trim().strip_prefix("listening on ") {
            break rest.to_string();
        }
    };
    let frames = read(fixture("frames.jsonl"));
    tokio::runtime::Runtime::new().unwrap().block_on(async {
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("{addr}/producer")).await.unwrap();
        for line in frames.lines() {
            ws.send(Message::text(line)).await.unwrap();
        }
        ws.close(None).await.unwrap();
        // Wait for the server's close so no unread data triggers a reset.
        while let Some(Ok(_)) = ws.next().await {}
    });
    assert!(child.wait().unwrap().success());
    assert_eq!(read(live.join("commands.jsonl")), read(fixture("golden_commands.jsonl")));
    assert_eq!(read(live.join("frames.jsonl")), frames);

    let out = replay("--log", &log, &offline, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["actions.jsonl", "commands.jsonl", "final_snapshot.json"] {
        assert_eq!(read(live.join(f)), read(offline.join(f)), "{f}");
    }
}

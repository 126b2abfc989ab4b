use std::collections::{BTreeMap, BTreeSet};

use magboard_core::geom::Point;
use magboard_core::ids::{MagnetId, NodeId};
use magboard_core::mapper::{CommandKind, InteractionCommand};
use magboard_core::samples::{grid_story, wwi_story};
use magboard_core::story::{AnchorMode, NodeKind, Reveal, StoryDocument};
use magboard_core::viz::{layout, replay, VizState, SCALE_MAX};
use proptest::prelude::*;

/// From-scratch reveal oracle: which secondaries and auto links should be
/// visible given only the set of visible primaries and the manual links.
fn expected_visibility(story: &StoryDocument, state: &VizState) -> (BTreeSet<NodeId>, BTreeSet<String>) {
    let primaries: BTreeSet<NodeId> = story
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Primary && state.nodes[&n.node_id].visible)
        .map(|n| n.node_id.clone())
        .collect();
    let mut visible = primaries.clone();
    for n in story.nodes.iter().filter(|n| n.kind == NodeKind::Secondary) {
        let hits = n.anchors.iter().filter(|a| primaries.contains(*a)).count();
        let on = match n.anchor_mode {
            AnchorMode::All => hits == n.anchors.len() && hits > 0,
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

fn arb_command(story: &StoryDocument) -> impl Strategy<Value = CommandKind> {
    let ids: Vec<NodeId> = story.nodes.iter().map(|n| n.node_id.clone()).chain([NodeId::new("ghost")]).collect();
    let magnets: Vec<MagnetId> = story.magnets.iter().map(|m| m.magnet_id.clone()).collect();
    let node = prop::sample::select(ids);
    let magnet = prop::sample::select(magnets);
    let factor = prop_oneof![Just(2.0), Just(0.5), 0.3..3.0f64];
    prop_oneof![
        4 => node.clone().prop_map(|node| CommandKind::ShowNode { node }),
        2 => node.clone().prop_map(|node| CommandKind::HideNode { node }),
        1 => (node.clone(), 0.0..1.0f64, 0.0..1.0f64).prop_map(|(node, x, y)| CommandKind::RepositionNode { node, at: Point::new(x, y) }),
        1 => (node.clone(), factor.clone()).prop_map(|(node, factor)| CommandKind::ScaleNode { node, factor }),
        1 => node.clone().prop_map(|node| CommandKind::ChangeNodeState { node }),
        1 => (node.clone(), any::<bool>()).prop_map(|(node, on)| CommandKind::HighlightNode { node, on }),
        2 => (node.clone(), node.clone()).prop_map(|(a, b)| CommandKind::ShowLink { a, b }),
        1 => (node.clone(), node.clone()).prop_map(|(a, b)| CommandKind::HideLink { a, b }),
        1 => (node.clone(), node.clone()).prop_map(|(a, b)| CommandKind::ChangeLinkType { a, b }),
        1 => (node.clone(), node.clone()).prop_map(|(from, to)| CommandKind::ChangeLinkDirection { from, to }),
        1 => (node.clone(), node.clone(), factor).prop_map(|(a, b, factor)| CommandKind::ScaleLink { a, b, factor }),
        2 => (node.clone(), node.clone()).prop_map(|(a, b)| CommandKind::ShowOrExtendGroup { a, b }),
        1 => node.clone().prop_map(|node| CommandKind::HideOrShrinkGroup { node }),
        1 => node.clone().prop_map(|node| CommandKind::ToggleAnnotation { node }),
        1 => node.clone().prop_map(|node| CommandKind::ToggleChildNetwork { node }),
        1 => (magnet, node).prop_map(|(magnet, node)| CommandKind::Register { magnet, node }),
    ]
}

fn check_sequence(story: &StoryDocument, cmds: &[CommandKind]) -> Result<(), TestCaseError> {
    let mut state = VizState::initial(story);
    let mut mirror = state.clone();
    let mut applied = Vec::new();
    for (i, kind) in cmds.iter().enumerate() {
        let cmd = InteractionCommand::new(i as u64, kind.clone());
        let before = state.snapshot();
        let rev = state.revision;
        match state.apply_command(story, &cmd) {
            Ok(diff) => {
                prop_assert_eq!(state.revision, rev + 1);
                applied.push(cmd);
                let wire: magboard_core::viz::StateDiff = serde_json::from_str(&serde_json::to_string(&diff).unwrap()).unwrap();
                mirror.apply_diff(&wire).unwrap();
                prop_assert_eq!(mirror.snapshot(), state.snapshot());
            }
            Err(_) => {
                prop_assert_eq!(state.snapshot(), before);
            }
        }
        if let Err(errs) = state.validate(story) {
            return Err(TestCaseError::fail(format!("after {kind:?}: {errs:?}")));
        }
        let mut again = state.clone();
        prop_assert!(!again.auto_reveal(story), "reveal pass not at fixpoint");
        let (nodes, links) = expected_visibility(story, &state);
        let got_nodes: BTreeSet<NodeId> = state.nodes.iter().filter(|(_, v)| v.visible).map(|(k, _)| k.clone()).collect();
        prop_assert_eq!(got_nodes, nodes);
        let got_auto: BTreeSet<String> = story
            .links
            .iter()
            .filter(|l| l.reveal == Reveal::Auto && state.links[&l.link_id].visible)
            .map(|l| l.link_id.to_string())
            .collect();
        prop_assert_eq!(got_auto, links);
    }
    let replayed = replay(story, &applied).unwrap();
    prop_assert_eq!(replayed.snapshot(), state.snapshot());
    prop_assert_eq!(replayed.revision as usize, applied.len());
    let parsed = VizState::parse_snapshot(&state.snapshot()).unwrap();
    prop_assert_eq!(parsed, state);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn grid_sequences_keep_invariants(cmds in prop::collection::vec(arb_command(&grid_story(8)), 1..120)) {
        check_sequence(&grid_story(8), &cmds)?;
    }

    #[test]
    fn wwi_sequences_keep_invariants(cmds in prop::collection::vec(arb_command(&wwi_story()), 1..120)) {
        check_sequence(&wwi_story(), &cmds)?;
    }

    #[test]
    fn layout_is_deterministic_without_secondary_overlap(
        xs in prop::collection::vec((0.05..0.8f64, 0.1..0.9f64), 7),
        shown in prop::collection::vec(any::<bool>(), 7),
    ) {
        let story = wwi_story();
        let mut state = VizState::initial(&story);
        let mut poses = BTreeMap::new();
        let r = story.node_radius();
        let mut placed: Vec<Point> = Vec::new();
        for (i, spec) in story.primary_nodes().enumerate() {
            let p = Point::new(xs[i].0, xs[i].1).quantized();
            // Magnets cannot overlap on the board.
            if !shown[i] || placed.iter().any(|q| q.dist(p) < 2.0 * r) {
                continue;
            }
            placed.push(p);
            let magnet = story.magnets[i].magnet_id.clone();
            for kind in [
                CommandKind::Register { magnet: magnet.clone(), node: spec.node_id.clone() },
                CommandKind::ShowNode { node: spec.node_id.clone() },
            ] {
                state.apply_command(&story, &InteractionCommand::new(0, kind)).unwrap();
            }
            poses.insert(magnet, p);
        }
        let a = layout(&state, &story, &poses).unwrap();
        prop_assert_eq!(&a, &layout(&state, &story, &poses).unwrap());
        let secondaries: Vec<&NodeId> = story.secondary_nodes().map(|n| &n.node_id).filter(|id| a.nodes.contains_key(*id)).collect();
        for s in secondaries {
            let ps = &a.nodes[s];
            for (id, o) in &a.nodes {
                if id != s {
                    prop_assert!(ps.center.dist(o.center) >= ps.radius + o.radius, "{} overlaps {}", s, id);
                }
            }
        }
    }
}

#[test]
fn scale_converges_to_upper_clamp() {
    let story = wwi_story();
    let mut s = VizState::initial(&story);
    let node = NodeId::new("france");
    s.apply_command(&story, &InteractionCommand::new(0, CommandKind::ShowNode { node: node.clone() })).unwrap();
    let mut last = 1.0;
    for _ in 0..10 {
        s.apply_command(&story, &InteractionCommand::new(0, CommandKind::ScaleNode { node: node.clone(), factor: 2.0 }))
            .unwrap();
        let v = s.nodes[&node].scale;
        assert!(v >= last && v <= SCALE_MAX);
        last = v;
    }
    assert_eq!(last, 2.0);
}

#[test]
fn secondary_follows_all_anchors() {
    let story = wwi_story();
    let mut s = VizState::initial(&story);
    let belgium = NodeId::new("belgium");
    s.apply_command(&story, &InteractionCommand::new(0, CommandKind::ShowNode { node: "uk".into() })).unwrap();
    assert!(!s.node_visible(&belgium));
    s.apply_command(&story, &InteractionCommand::new(0, CommandKind::ShowNode { node: "france".into() })).unwrap();
    assert!(s.node_visible(&belgium));
    let auto = story.link_between(&"uk".into(), &belgium).unwrap();
    assert!(s.link_visible(&auto.link_id));
    s.apply_command(&story, &InteractionCommand::new(0, CommandKind::HideNode { node: "uk".into() })).unwrap();
    assert!(!s.node_visible(&belgium) && !s.link_visible(&auto.link_id));
}

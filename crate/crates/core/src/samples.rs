//! Built-in stories used by the demos, the golden replay and the test suites.

use crate::geom::Point;
use crate::ids::{ChildId, GroupId, LinkId, MagnetId, NodeId};
use crate::story::*;

fn state(label: &str, fill: &str) -> NodeState {
    NodeState {
        label: label.into(),
        fill: fill.into(),
        icon: None,
    }
}

fn primary(id: &str, label: &str, states: Vec<NodeState>) -> NodeSpec {
    NodeSpec {
        node_id: NodeId::new(id),
        label: label.into(),
        kind: NodeKind::Primary,
        states,
        initial_state_index: 0,
        annotation: None,
        child_network: None,
        anchors: vec![],
        anchor_mode: AnchorMode::All,
        base_scale: 1.0,
    }
}

fn secondary(id: &str, label: &str, anchors: &[&str], mode: AnchorMode) -> NodeSpec {
    NodeSpec {
        kind: NodeKind::Secondary,
        anchors: anchors.iter().map(|a| NodeId::new(*a)).collect(),
        anchor_mode: mode,
        ..primary(id, label, vec![state(label, "fill-secondary")])
    }
}

fn link(id: &str, source: &str, target: &str, reveal: Reveal, directed: LinkDirection, types: &[(&str, &str)]) -> LinkSpec {
    LinkSpec {
        link_id: LinkId::new(id),
        source: NodeId::new(source),
        target: NodeId::new(target),
        reveal,
        types: types
            .iter()
            .map(|(label, stroke)| LinkStyle {
                label: (*label).into(),
                stroke: (*stroke).into(),
            })
            .collect(),
        initial_type_index: 0,
        directed,
        base_width: 1.0,
    }
}

/// Centers of `count` registration slots stacked down the default registration strip.
pub fn slot_centers(count: usize) -> Vec<Point> {
    let step = 1.0 / (count as f64 + 1.0);
    (0..count)
        .map(|i| Point::new(0.925, ((i + 1) as f64 * step * 1e6).round() / 1e6))
        .collect()
}

/// One primary node, one magnet, one slot.
pub fn minimal_story() -> StoryDocument {
    StoryDocument {
        schema_version: STORY_SCHEMA_VERSION,
        story_id: "minimal".into(),
        board: Board {
            width_cm: 120.0,
            height_cm: 70.0,
        },
        zones: None,
        magnets: vec![MagnetSpec {
            magnet_id: MagnetId::new("m1"),
            side_a_marker: 1,
            side_b_marker: 2,
            diameter: 0.03,
            role: MagnetRole::NodeCarrier,
        }],
        nodes: vec![primary("n1", "Node 1", vec![state("default", "fill-0")])],
        links: vec![],
        child_networks: vec![],
        group_styles: vec![],
        command_set_ref: "default".into(),
        registration_slots: vec![RegistrationSlot {
            node_id: NodeId::new("n1"),
            center: Point::new(0.925, 0.5),
            radius: 0.03,
        }],
    }
}

pub const WWI_COUNTRIES: [(&str, &str); 7] = [
    ("germany", "Germany"),
    ("austria", "Austria"),
    ("italy", "Italy"),
    ("uk", "UK"),
    ("france", "France"),
    ("russia", "Russia"),
    ("serbia", "Serbia"),
];

/// Magnet id carrying the given WWI country in the sample roster.
pub fn wwi_magnet(node: &str) -> MagnetId {
    MagnetId::new(format!("mag-{node}"))
}

/// Alliances before and during the First World War on a 120 × 70 cm board
/// with 4 cm magnets.
pub fn wwi_story() -> StoryDocument {
    let board = Board {
        width_cm: 120.0,
        height_cm: 70.0,
    };
    let mut magnets: Vec<MagnetSpec> = WWI_COUNTRIES
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let base = 10 + 2 * i as u32;
            MagnetSpec::from_physical(wwi_magnet(id), (base, base + 1), 4.0, &board, MagnetRole::NodeCarrier)
        })
        .collect();
    magnets.push(MagnetSpec::from_physical("widget-1", (40, 41), 4.0, &board, MagnetRole::Widget));

    let mut nodes: Vec<NodeSpec> = WWI_COUNTRIES
        .iter()
        .map(|(id, label)| primary(id, label, vec![state(label, &format!("fill-{id}"))]))
        .collect();
    let germany = &mut nodes[0];
    germany.annotation = Some(Annotation {
        text: "Germany fields the largest standing army in Europe".into(),
        image: Some("img/german-army.png".into()),
    });
    germany.child_network = Some(ChildId::new("german-states"));
    let russia = &mut nodes[5];
    russia.states = vec![state("Russian Empire", "fill-russia"), state("Soviet Union", "fill-soviet")];
    let serbia = &mut nodes[6];
    serbia.annotation = Some(Annotation {
        text: "Assassination of Archduke Franz Ferdinand in Sarajevo, 28 June 1914".into(),
        image: Some("img/sarajevo.png".into()),
    });
    nodes.push(secondary("belgium", "Belgium", &["uk", "france"], AnchorMode::All));
    nodes.push(secondary("montenegro", "Montenegro", &["serbia"], AnchorMode::Any));

    let alliance = [("alliance", "stroke-solid"), ("rivalry", "stroke-dashed")];
    let war = [("war", "stroke-red")];
    let links = vec![
        link("ger-aus", "germany", "austria", Reveal::Manual, LinkDirection::None, &alliance),
        link("ger-ita", "germany", "italy", Reveal::Manual, LinkDirection::None, &alliance),
        link("aus-ita", "austria", "italy", Reveal::Manual, LinkDirection::None, &alliance),
        link("uk-fra", "uk", "france", Reveal::Auto, LinkDirection::None, &alliance),
        link("fra-rus", "france", "russia", Reveal::Auto, LinkDirection::None, &alliance),
        link("uk-rus", "uk", "russia", Reveal::Auto, LinkDirection::None, &alliance),
        link("ger-fra", "germany", "france", Reveal::Manual, LinkDirection::SourceToTarget, &war),
        link("ger-rus", "germany", "russia", Reveal::Manual, LinkDirection::SourceToTarget, &war),
        link("aus-ser", "austria", "serbia", Reveal::Manual, LinkDirection::SourceToTarget, &war),
        link("uk-bel", "uk", "belgium", Reveal::Auto, LinkDirection::None, &alliance),
        link("ser-mon", "serbia", "montenegro", Reveal::Auto, LinkDirection::None, &alliance),
    ];

    let child = |id: &str, label: &str| ChildNode {
        id: id.into(),
        label: label.into(),
        style: "child-state".into(),
    };
    let child_link = |s: &str, t: &str| ChildLink {
        source: s.into(),
        target: t.into(),
        style: "child-link".into(),
    };
    let child_networks = vec![ChildNetwork {
        child_id: ChildId::new("german-states"),
        nodes: vec![
            child("prussia", "Prussia"),
            child("bavaria", "Bavaria"),
            child("saxony", "Saxony"),
            child("wurttemberg", "Württemberg"),
        ],
        links: vec![
            child_link("prussia", "bavaria"),
            child_link("prussia", "saxony"),
            child_link("prussia", "wurttemberg"),
        ],
    }];

    let group_styles = vec![
        GroupStyle {
            group_id: GroupId::new("triple-alliance"),
            label: "Triple Alliance".into(),
            fill: "fill-central".into(),
            border: "border-central".into(),
        },
        GroupStyle {
            group_id: GroupId::new("triple-entente"),
            label: "Triple Entente".into(),
            fill: "fill-entente".into(),
            border: "border-entente".into(),
        },
    ];

    let registration_slots = WWI_COUNTRIES
        .iter()
        .zip(slot_centers(WWI_COUNTRIES.len()))
        .map(|((id, _), center)| RegistrationSlot {
            node_id: NodeId::new(*id),
            center,
            radius: 0.03,
        })
        .collect();

    StoryDocument {
        schema_version: STORY_SCHEMA_VERSION,
        story_id: "wwi-alliances".into(),
        board,
        zones: None,
        magnets,
        nodes,
        links,
        child_networks,
        group_styles,
        command_set_ref: "default".into(),
        registration_slots,
    }
}

/// `count` primary nodes in a chain with a magnet each, two widgets, and a
/// few secondaries. Used by the randomized suites.
pub fn grid_story(count: usize) -> StoryDocument {
    assert!((2..=12).contains(&count), "grid stories hold 2..=12 primaries");
    let board = Board {
        width_cm: 120.0,
        height_cm: 70.0,
    };
    let name = |i: usize| format!("n{i:02}");
    let mut magnets: Vec<MagnetSpec> = (0..count)
        .map(|i| {
            let base = 100 + 2 * i as u32;
            MagnetSpec::from_physical(format!("m{i:02}"), (base, base + 1), 4.0, &board, MagnetRole::NodeCarrier)
        })
        .collect();
    for w in 0..2u32 {
        magnets.push(MagnetSpec::from_physical(
            format!("w{w}"),
            (200 + 2 * w, 201 + 2 * w),
            4.0,
            &board,
            MagnetRole::Widget,
        ));
    }
    let mut nodes: Vec<NodeSpec> = (0..count)
        .map(|i| {
            let mut n = primary(&name(i), &format!("Node {i}"), vec![state("s0", "fill-a"), state("s1", "fill-b"), state("s2", "fill-c")]);
            if i % 2 == 0 {
                n.annotation = Some(Annotation {
                    text: format!("note {i}"),
                    image: None,
                });
            }
            if i % 3 == 0 {
                n.child_network = Some(ChildId::new("sub"));
            }
            n
        })
        .collect();
    for i in (0..count.saturating_sub(1)).step_by(2) {
        let mode = if i % 4 == 0 { AnchorMode::All } else { AnchorMode::Any };
        nodes.push(secondary(&format!("s{i:02}"), &format!("Secondary {i}"), &[&name(i), &name(i + 1)], mode));
    }
    let mut links = Vec::new();
    for i in 0..count - 1 {
        let reveal = if i % 3 == 2 { Reveal::Auto } else { Reveal::Manual };
        links.push(link(
            &format!("l{i:02}"),
            &name(i),
            &name(i + 1),
            reveal,
            LinkDirection::None,
            &[("a", "solid"), ("b", "dashed")],
        ));
    }
    for i in (0..count.saturating_sub(1)).step_by(2) {
        links.push(link(
            &format!("ls{i:02}"),
            &name(i),
            &format!("s{i:02}"),
            Reveal::Auto,
            LinkDirection::None,
            &[("a", "solid")],
        ));
    }
    if count > 3 {
        links.push(link("lx", &name(0), &name(3), Reveal::Manual, LinkDirection::SourceToTarget, &[("x", "red")]));
    }
    let registration_slots = slot_centers(count)
        .into_iter()
        .enumerate()
        .map(|(i, center)| RegistrationSlot {
            node_id: NodeId::new(name(i)),
            center,
            radius: 0.03,
        })
        .collect();
    StoryDocument {
        schema_version: STORY_SCHEMA_VERSION,
        story_id: format!("grid-{count}"),
        board,
        zones: None,
        magnets,
        nodes,
        links,
        child_networks: vec![ChildNetwork {
            child_id: ChildId::new("sub"),
            nodes: vec![
                ChildNode {
                    id: "x".into(),
                    label: "X".into(),
                    style: "c".into(),
                },
                ChildNode {
                    id: "y".into(),
                    label: "Y".into(),
                    style: "c".into(),
                },
            ],
            links: vec![ChildLink {
                source: "x".into(),
                target: "y".into(),
                style: "c".into(),
            }],
        }],
        group_styles: vec![GroupStyle {
            group_id: GroupId::new("cluster"),
            label: "Cluster".into(),
            fill: "f".into(),
            border: "b".into(),
        }],
        command_set_ref: "default".into(),
        registration_slots,
    }
}

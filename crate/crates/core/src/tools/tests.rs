use std::sync::Arc;

use serde_json::json;

use super::*;
use crate::backend::{HashEmbedder, ImageFixture, PerceptionFixtures, Unavailable};
use crate::frame::{Frame, GrayImage, RawFrame};
use crate::ltm::ArchivedEvent;
use crate::stm::SnapshotFrame;

fn snapshot(n: u64) -> Snapshot {
    Snapshot {
        frames: (0..n)
            .map(|i| {
                let frame = Arc::new(Frame::new(
                    i + 10,
                    RawFrame {
                        timestamp_s: (i + 10) as f64,
                        image: GrayImage::filled(32, 24, 100),
                        source_path: Some(format!("frames/{:06}.png", i + 10).into()),
                    },
                ));
                SnapshotFrame {
                    label: crate::frame::frame_label(i, frame.timestamp_s),
                    frame,
                }
            })
            .collect(),
    }
}

fn store() -> LtmStore {
    let emb = HashEmbedder::default();
    let mut s = LtmStore::new();
    let captions = [
        "a person walks into the kitchen",
        "a woman is slicing a potato on a board",
        "the dog sleeps on the sofa",
    ];
    for (i, c) in captions.iter().enumerate() {
        let id = i as u64;
        s.push_entry(
            ArchivedEvent {
                event_id: id,
                anchor_path: format!("anchors/{id}.png"),
                anchor_key: format!("{:06}.png", id * 4),
                caption: Some(c.to_string()),
                embedding: Some(emb.embed_text(c)),
                start_s: id as f64 * 4.0,
                end_s: id as f64 * 4.0 + 3.0,
                change_from_previous: (id > 0).then(|| format!("change {}->{}", id - 1, id)),
                change_to_next: (id < 2).then(|| format!("change {}->{}", id, id + 1)),
                anchor_missing: false,
            },
            Some(GrayImage::filled(32, 24, 7)),
        );
    }
    s
}

fn backends() -> PerceptionBackends {
    let mut fx = PerceptionFixtures::default();
    fx.images.insert(
        "000004.png".into(),
        ImageFixture {
            ocr: vec!["SALE 42%".into(), "open daily".into()],
            detections: vec![],
        },
    );
    fx.images.insert(
        "000012.png".into(),
        ImageFixture {
            ocr: vec![],
            detections: vec![
                Detection {
                    label: "cat".into(),
                    bbox: [2.0, 3.0, 10.0, 12.0],
                    score: 0.87,
                },
                Detection {
                    label: "dog".into(),
                    bbox: [0.0, 0.0, 5.0, 5.0],
                    score: 0.5,
                },
            ],
        },
    );
    PerceptionBackends::mock(fx)
}

fn run(call: ToolCall) -> Observation {
    let snap = snapshot(3);
    let ltm = store();
    let b = backends();
    ToolRegistry::default().dispatch(&call, &ToolContext::new(&snap, &ltm, &b))
}

#[test]
fn semantic_search_finds_shared_tokens() {
    let obs = run(ToolCall::new(
        SEARCH_MEMORY,
        json!({"query": "slicing a potato"}),
    ));
    assert!(obs.is_ok());
    assert_eq!(obs.payload["mode"], "semantic");
    let events = obs.payload["events"].as_array().unwrap();
    assert_eq!(events[0]["event_id"], 1);
    assert!(obs.rendered_text.starts_with("Found "));
    assert!(obs.rendered_text.contains(
        "[event 1] 4.0s-7.0s\ncaption: a woman is slicing a potato on a board\n\
         change_from_previous: change 0->1\nchange_to_next: change 1->2"
    ));
}

#[test]
fn temporal_search_matches_overlap() {
    let obs = run(ToolCall::new(
        SEARCH_MEMORY,
        json!({"start_time": 5, "end_time": 9}),
    ));
    let ids: Vec<u64> = obs.payload["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["event_id"].as_u64().unwrap())
        .collect();
    // ranges [0,3], [4,7], [8,11]
    assert_eq!(ids, vec![1, 2]);
    assert_eq!(obs.evidence_max_timestamp_s, Some(11.0));
}

#[test]
fn search_argument_rules() {
    for args in [
        json!({"query": "x", "start_time": 1, "end_time": 2}),
        json!({}),
        json!({"start_time": 1}),
        json!({"query": 3}),
        json!({"start_time": 9, "end_time": 2}),
        json!({"query": "x", "bogus": 1}),
    ] {
        let obs = run(ToolCall::new(SEARCH_MEMORY, args.clone()));
        assert_eq!(
            obs.error_code.as_deref(),
            Some(codes::INVALID_ARGUMENTS),
            "{args}"
        );
        assert!(obs.rendered_text.starts_with("error[invalid_arguments]: "));
    }
    let none = run(ToolCall::new(SEARCH_MEMORY, json!({"query": "zzz qqq"})));
    assert_eq!(none.rendered_text, "No matching events found.");
}

#[test]
fn ocr_targets() {
    let obs = run(ToolCall::new(OCR, json!({"event_id": 1})));
    assert_eq!(obs.rendered_text, "SALE 42%\nopen daily");
    assert_eq!(obs.payload["target"], json!({"event_id": 1}));

    let obs = run(ToolCall::new(OCR, json!({"frame_index": 0})));
    assert_eq!(obs.rendered_text, "(no text found)");
    assert_eq!(obs.evidence_max_timestamp_s, Some(10.0));

    for (args, code) in [
        (json!({"frame_index": 3}), codes::TARGET_NOT_FOUND),
        (json!({"event_id": 99}), codes::TARGET_NOT_FOUND),
        (json!({}), codes::INVALID_ARGUMENTS),
        (
            json!({"event_id": 1, "frame_index": 0}),
            codes::INVALID_ARGUMENTS,
        ),
        (json!({"frame_index": -1}), codes::INVALID_ARGUMENTS),
    ] {
        assert_eq!(
            run(ToolCall::new(OCR, args)).error_code.as_deref(),
            Some(code)
        );
    }
}

#[test]
fn detect_defaults_to_last_frame() {
    // snapshot frames are 000010..000012; the last carries the cat fixture
    let obs = run(ToolCall::new(DETECT_OBJECTS, json!({"labels": ["cat"]})));
    assert!(obs.is_ok());
    assert_eq!(obs.payload["target"], json!({"frame_index": 2}));
    assert_eq!(obs.rendered_text, "cat [2, 3, 10, 12] score=0.870");
    let both = run(ToolCall::new(
        DETECT_OBJECTS,
        json!({"labels": ["dog", "cat"], "frame_index": 2}),
    ));
    let scores: Vec<f64> = both.payload["detections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["score"].as_f64().unwrap())
        .collect();
    assert_eq!(scores, vec![0.87, 0.5]);
}

#[test]
fn detect_errors() {
    assert_eq!(
        run(ToolCall::new(DETECT_OBJECTS, json!({"labels": []})))
            .error_code
            .as_deref(),
        Some(codes::INVALID_ARGUMENTS)
    );
    assert_eq!(
        run(ToolCall::new(
            DETECT_OBJECTS,
            json!({"labels": ["cat"], "event_id": 42})
        ))
        .error_code
        .as_deref(),
        Some(codes::TARGET_NOT_FOUND)
    );
    let snap = Snapshot::default();
    let ltm = store();
    let b = backends();
    let obs = ToolRegistry::default().dispatch(
        &ToolCall::new(DETECT_OBJECTS, json!({"labels": ["cat"]})),
        &ToolContext::new(&snap, &ltm, &b),
    );
    assert_eq!(obs.error_code.as_deref(), Some(codes::TARGET_NOT_FOUND));
}

#[test]
fn unknown_tool_and_backend_failures_become_observations() {
    let obs = run(ToolCall::new("teleport", json!({})));
    assert_eq!(obs.error_code.as_deref(), Some(codes::UNKNOWN_TOOL));

    let snap = snapshot(2);
    let ltm = store();
    let broken = PerceptionBackends {
        embedder: Arc::new(Unavailable),
        ocr: Arc::new(Unavailable),
        detector: Arc::new(Unavailable),
    };
    let ctx = ToolContext::new(&snap, &ltm, &broken);
    let reg = ToolRegistry::default();
    for call in [
        ToolCall::new(SEARCH_MEMORY, json!({"query": "potato"})),
        ToolCall::new(OCR, json!({"frame_index": 0})),
        ToolCall::new(DETECT_OBJECTS, json!({"labels": ["cat"]})),
    ] {
        assert_eq!(
            reg.dispatch(&call, &ctx).error_code.as_deref(),
            Some(codes::BACKEND_ERROR)
        );
    }
}

#[test]
fn mock_dispatch_is_pure() {
    let call = ToolCall::new(SEARCH_MEMORY, json!({"query": "dog sofa"}));
    assert_eq!(run(call.clone()), run(call));
}

#[test]
fn tool_call_json_shape() {
    let call: ToolCall =
        serde_json::from_str(r#"{"tool": "ocr", "arguments": {"event_id": 3}}"#).unwrap();
    assert_eq!(call.tool_name, "ocr");
    assert_eq!(
        serde_json::to_value(&call).unwrap(),
        json!({"tool": "ocr", "arguments": {"event_id": 3}})
    );
}

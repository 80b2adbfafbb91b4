use std::sync::Arc;

use super::*;
use crate::backend::{
    HashEmbedder, ImageFixture, PerceptionFixtures, PolicyRequest, ScriptedPolicy, Unavailable,
};
use crate::frame::{frame_label, Frame, GrayImage, RawFrame};
use crate::ltm::ArchivedEvent;
use crate::stm::SnapshotFrame;
use crate::tools::ObservationStatus;

fn snapshot() -> Snapshot {
    // frames at 20s..=23s
    Snapshot {
        frames: (0..4u64)
            .map(|i| {
                let frame = Arc::new(Frame::new(
                    20 + i,
                    RawFrame {
                        timestamp_s: (20 + i) as f64,
                        image: GrayImage::filled(16, 16, 50),
                        source_path: Some(format!("f/{:06}.png", 20 + i).into()),
                    },
                ));
                SnapshotFrame {
                    label: frame_label(i, frame.timestamp_s),
                    frame,
                }
            })
            .collect(),
    }
}

fn ltm() -> LtmStore {
    let emb = HashEmbedder::default();
    let mut s = LtmStore::new();
    let rows = [
        (0, "a shop sign reads the price", 0.0, 9.0),
        (1, "a man counts coins at the register", 10.0, 19.0),
    ];
    for (id, caption, start_s, end_s) in rows {
        s.push_entry(
            ArchivedEvent {
                event_id: id,
                anchor_path: format!("anchors/{id}.png"),
                anchor_key: format!("{:06}.png", id * 10),
                caption: Some(caption.to_string()),
                embedding: Some(emb.embed_text(caption)),
                start_s,
                end_s,
                change_from_previous: (id == 1).then(|| "intensity 40 -> 90".to_string()),
                change_to_next: (id == 0).then(|| "intensity 40 -> 90".to_string()),
                anchor_missing: false,
            },
            Some(GrayImage::filled(16, 16, 9)),
        );
    }
    s
}

fn backends() -> PerceptionBackends {
    let mut fx = PerceptionFixtures::default();
    fx.images.insert(
        "000000.png".into(),
        ImageFixture {
            ocr: vec!["PRICE 42".into()],
            detections: vec![],
        },
    );
    PerceptionBackends::mock(fx)
}

fn run(policy: &mut dyn PolicyModel, asked_at_s: f64, max_turns: usize) -> Trajectory {
    let snap = snapshot();
    let store = ltm();
    let b = backends();
    let reg = ToolRegistry::default();
    let env = EpisodeEnv {
        snapshot: &snap,
        ltm: &store,
        backends: &b,
        registry: &reg,
    };
    let q = QuestionPrompt {
        question_id: "q1",
        text: "What price is on the sign?",
        asked_at_s,
    };
    let config = EpisodeConfig {
        max_turns,
        ..EpisodeConfig::default()
    };
    run_episode(&q, &env, policy, &config)
}

/// Records every request it receives.
struct Recorder {
    inner: ScriptedPolicy,
    seen: Vec<PolicyRequest>,
}

impl PolicyModel for Recorder {
    fn generate(&mut self, request: &PolicyRequest) -> Result<String, crate::BackendError> {
        self.seen.push(request.clone());
        self.inner.generate(request)
    }
}

#[test]
fn immediate_answer() {
    let mut p = ScriptedPolicy::new(["Thought: I can see it.\nAction: answer.\n\\boxed{A}"]);
    let t = run(&mut p, 23.0, 8);
    assert_eq!(t.turns.len(), 1);
    assert_eq!(t.final_answer.as_deref(), Some("A"));
    assert_eq!(t.terminated_by, Termination::Answer);
    assert!(t.turns[0].observation.is_none());
    assert_eq!(t.turns[0].thought, "I can see it.");
}

#[test]
fn search_then_ocr_then_answer() {
    let mut p = Recorder {
        inner: ScriptedPolicy::new([
            "Thought: look back.\nAction: search memory.\n```json\n{\"tool\": \"search_memory\", \"arguments\": {\"query\": \"shop sign price\"}}\n```",
            "Thought: read it.\nAction: perform OCR.\n```json\n{\"tool\": \"ocr\", \"arguments\": {\"event_id\": 0}}\n```",
            "Thought: done.\nAction: provide final answer.\n\\boxed{42}",
        ]),
        seen: Vec::new(),
    };
    let t = run(&mut p, 23.0, 8);
    assert_eq!(t.turns.len(), 3);
    assert_eq!(t.final_answer.as_deref(), Some("42"));
    assert_eq!(t.tools_used(), vec!["search_memory", "ocr"]);
    let o1 = t.turns[0].observation.as_ref().unwrap();
    assert_eq!(o1.payload["events"][0]["event_id"], 0);
    let o2 = t.turns[1].observation.as_ref().unwrap();
    assert_eq!(o2.rendered_text, "PRICE 42");

    // each request replays the previous turns in order
    assert_eq!(p.seen.len(), 3);
    let roles: Vec<&str> = p.seen[2].messages.iter().map(|m| m.role.as_str()).collect();
    assert_eq!(
        roles,
        ["system", "user", "assistant", "user", "assistant", "user"]
    );
    assert_eq!(p.seen[2].messages[0].content, SYSTEM_PROMPT.trim_end());
    assert_eq!(p.seen[2].messages[2].content, t.turns[0].response);
    assert_eq!(p.seen[2].messages[5].content, "Observation:\nPRICE 42");
    assert_eq!(p.seen[0].images.len(), 4);
    assert_eq!(p.seen[0].images[3].label, "Frame 3 | 23.0s");
}

#[test]
fn turn_budget() {
    let mut p = ScriptedPolicy::new([
        "```json\n{\"tool\": \"ocr\", \"arguments\": {\"frame_index\": 0}}\n```",
    ])
    .cycling();
    let t = run(&mut p, 23.0, 8);
    assert_eq!(t.turns.len(), 8);
    assert_eq!(t.terminated_by, Termination::MaxTurns);
    assert!(t.final_answer.is_none());
}

#[test]
fn unparseable_consumes_a_turn() {
    let mut p = ScriptedPolicy::new(["I think it is A", "\\boxed{A}"]);
    let t = run(&mut p, 23.0, 8);
    assert_eq!(t.turns.len(), 2);
    let obs = t.turns[0].observation.as_ref().unwrap();
    assert_eq!(obs.status, ObservationStatus::Error);
    assert_eq!(obs.error_code.as_deref(), Some(codes::UNPARSEABLE));
    assert!(matches!(t.turns[0].action, Action::Unparseable { .. }));
}

#[test]
fn policy_failure_ends_episode() {
    let t = run(&mut Unavailable, 23.0, 8);
    assert_eq!(t.terminated_by, Termination::PolicyError);
    assert!(t.turns.is_empty());
    assert!(t.policy_error.is_some());
}

#[test]
fn memory_is_cut_at_question_time() {
    let mut p = Recorder {
        inner: ScriptedPolicy::new([
            "```json\n{\"tool\": \"search_memory\", \"arguments\": {\"start_time\": 0, \"end_time\": 100}}\n```",
            "\\boxed{x}",
        ]),
        seen: Vec::new(),
    };
    // at 21.5s only frames 20s and 21s exist; event 1 ended at 19s, so both are visible
    let t = run(&mut p, 21.5, 8);
    assert_eq!(p.seen[0].images.len(), 2);
    assert!(p.seen[0].messages[1]
        .content
        .contains("Current time: 21.5s"));
    assert_eq!(t.max_visible_timestamp_s, Some(21.0));

    // at 15s the second event has not ended and no snapshot frame exists
    let mut p = ScriptedPolicy::new([
        "```json\n{\"tool\": \"search_memory\", \"arguments\": {\"start_time\": 0, \"end_time\": 100}}\n```",
        "\\boxed{x}",
    ]);
    let t = run(&mut p, 15.0, 8);
    let obs = t.turns[0].observation.as_ref().unwrap();
    let events = obs.payload["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["change_to_next"], serde_json::Value::Null);
    assert_eq!(t.max_visible_timestamp_s, Some(9.0));
}

#[test]
fn trajectory_serializes() {
    let mut p = ScriptedPolicy::new(["\\boxed{B}"]);
    let t = run(&mut p, 23.0, 8);
    let v = serde_json::to_value(&t).unwrap();
    assert_eq!(v["terminated_by"], "answer");
    assert_eq!(
        v["turns"][0]["action"],
        serde_json::json!({"kind": "final_answer", "answer": "B"})
    );
    let back: Trajectory = serde_json::from_value(v).unwrap();
    assert_eq!(back.final_answer, t.final_answer);
}

proptest::proptest! {
    #[test]
    fn turns_never_exceed_budget(max_turns in 1usize..12, script in proptest::collection::vec(0u8..3, 1..12)) {
        let responses: Vec<String> = script
            .iter()
            .map(|k| match k {
                0 => "\\boxed{A}".to_string(),
                1 => "```json\n{\"tool\": \"ocr\", \"arguments\": {\"frame_index\": 1}}\n```".to_string(),
                _ => "hmm".to_string(),
            })
            .collect();
        let mut p = ScriptedPolicy::new(responses).cycling();
        let t = run(&mut p, 23.0, max_turns);
        proptest::prop_assert!(t.turns.len() <= max_turns);
        let answers = t.turns.iter().filter(|x| matches!(x.action, Action::FinalAnswer { .. })).count();
        proptest::prop_assert!(answers <= 1);
        for turn in &t.turns {
            proptest::prop_assert_eq!(turn.observation.is_none(), matches!(turn.action, Action::FinalAnswer { .. }));
        }
    }
}

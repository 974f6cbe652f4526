mod support;

use std::sync::{Arc, Mutex};

use posereason::geometry::anatomy::{flexion, Hinge};
use posereason::geometry::{PoseParams, Skeleton};
use posereason::synth::clients::{FnTransport, JsonTransport};
use posereason::synth::triplet::{SKIPPED, STAGES};
use posereason::synth::*;
use posereason::Error;
use serde_json::{json, Value};

#[test]
fn squatting_flexes_both_knees() {
    let t = synthesize_triplet(
        "0",
        "Fitness and Exercise",
        "squatting",
        &ClientSet::procedural(),
        7,
    );
    let sixty = 60f64.to_radians();
    assert!(flexion(&t.pose, Hinge::LeftKnee) > sixty);
    assert!(flexion(&t.pose, Hinge::RightKnee) > sixty);
    assert!(
        t.detailed_prompt.contains("knees are bent"),
        "{}",
        t.detailed_prompt
    );
}

#[test]
fn each_failing_stage_is_recorded() {
    for (i, stage) in STAGES.iter().enumerate() {
        let mut names = ClientNames::default();
        match *stage {
            "prompt" => names.prompt = "failing".into(),
            "image" => names.image = "failing".into(),
            "pose" => names.pose = "failing".into(),
            "caption" => names.caption = "failing".into(),
            _ => names.refine = "failing".into(),
        }
        let c = ClientSet::build(&names, &StageContext::default()).unwrap();
        let t = synthesize_triplet("0", "Sports", "golf swing", &c, 1);
        assert!(t.filtered);
        assert_eq!(t.reason.as_deref(), Some(format!("stage:{stage}").as_str()));
        assert_eq!(t.provenance[*stage], "failing");
        for later in &STAGES[i + 1..] {
            assert_eq!(t.provenance[*later], SKIPPED);
        }
        assert_eq!(t.provenance.len(), 5);
    }
}

#[test]
fn unknown_client_is_an_error() {
    let names = ClientNames {
        pose: "smplest".into(),
        ..Default::default()
    };
    assert!(matches!(
        ClientSet::build(&names, &StageContext::default()),
        Err(Error::UnknownEntry { .. })
    ));
}

#[test]
fn corpus_bytes_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let tax = ActionTaxonomy::standard();
    let c = ClientSet::procedural();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    write_jsonl(&a, &synthesize_corpus(&tax, &c, 7, Some(40))).unwrap();
    write_jsonl(&b, &synthesize_corpus(&tax, &c, 7, Some(40))).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = read_jsonl(&a).unwrap();
    assert_eq!(back.len(), 40);
    let line = std::fs::read_to_string(&a).unwrap();
    let first: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    for key in [
        "id",
        "category",
        "action_label",
        "abstract_prompt",
        "detailed_prompt",
        "pose",
        "provenance",
        "filtered",
        "reason",
    ] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["pose"].as_array().unwrap().len(), 72);
    let other = synthesize_corpus(&tax, &c, 8, Some(40));
    assert_ne!(back, other);
}

#[test]
fn full_corpus_invariants_and_caption_facts() {
    let tax = ActionTaxonomy::standard();
    let corpus = synthesize_corpus(&tax, &ClientSet::procedural(), 7, None);
    assert_eq!(corpus.len(), 550);
    let skel = Skeleton::standard();
    let mut contradictions = Vec::new();
    for t in &corpus {
        assert_eq!(
            t.abstract_prompt,
            format!("Generate the pose of {}", t.action_label)
        );
        assert!(STAGES.iter().all(|s| t.provenance.contains_key(*s)));
        assert!(!t.filtered);
        for c in support::caption_contradictions(&t.detailed_prompt, &t.pose, &skel) {
            contradictions.push(format!("{}: {c}", t.action_label));
        }
    }
    assert!(contradictions.is_empty(), "{contradictions:#?}");

    let out = filter_triplets(corpus, &FilterRules::default());
    assert!(out.rejected.len() * 20 < 550, "{:?}", out.reasons());
}

#[test]
fn oracle_flags_a_wrong_caption() {
    let skel = Skeleton::standard();
    let p = PoseParams::zero();
    let c = caption_pose(&p).unwrap();
    assert!(support::caption_contradictions(&c, &p, &skel).is_empty());
    let wrong = c.replace("the legs are straight", "both knees are bent");
    assert_eq!(support::caption_contradictions(&wrong, &p, &skel).len(), 2);
}

fn mock_backend(calls: Arc<Mutex<Vec<String>>>, fail_pose: bool) -> Arc<dyn JsonTransport> {
    Arc::new(FnTransport(move |endpoint: &str, req: &Value| {
        calls.lock().unwrap().push(endpoint.to_string());
        match endpoint.rsplit('/').next().unwrap() {
            "image" => {
                assert!(req["prompt"]
                    .as_str()
                    .unwrap()
                    .starts_with("Super Realism, Generate the pose of "));
                Ok(json!({"id": format!("remote-{}", req["seed"])}))
            }
            "pose" if fail_pose => Err(Error::Io(std::io::Error::other("estimator offline"))),
            "pose" => {
                let fam = family("squat").unwrap();
                Ok(json!({ "pose": fam.base_pose() }))
            }
            "caption" => {
                let pose: PoseParams = serde_json::from_value(req["pose"].clone()).unwrap();
                Ok(json!({ "text": caption_pose(&pose).unwrap() }))
            }
            "refine" => Ok(json!({
                "text": refine_prompt(req["caption"].as_str().unwrap(), req["label"].as_str().unwrap()).unwrap()
            })),
            other => panic!("unexpected endpoint {other}"),
        }
    }))
}

#[test]
fn http_clients_talk_json() {
    let calls = Arc::new(Mutex::new(Vec::new()));
    let ctx = StageContext {
        transport: Some(mock_backend(calls.clone(), false)),
        endpoint: "mock://backend/".into(),
        ..Default::default()
    };
    let names = ClientNames {
        image: "http".into(),
        pose: "http".into(),
        caption: "http".into(),
        refine: "http".into(),
        ..Default::default()
    };
    let c = ClientSet::build(&names, &ctx).unwrap();
    let t = synthesize_triplet("0", "Fitness and Exercise", "squatting", &c, 3);
    assert!(!t.filtered, "{:?}", t.reason);
    assert_eq!(
        *calls.lock().unwrap(),
        [
            "mock://backend/image",
            "mock://backend/pose",
            "mock://backend/caption",
            "mock://backend/refine"
        ]
    );
    assert_eq!(t.pose, family("squat").unwrap().base_pose());
    assert!(t.detailed_prompt.starts_with("In a squatting pose, "));
    assert_eq!(t.provenance["pose"], "http");
    assert_eq!(t.provenance["prompt"], "template");

    let ctx = StageContext {
        transport: Some(mock_backend(Arc::new(Mutex::new(Vec::new())), true)),
        ..Default::default()
    };
    let t = synthesize_triplet(
        "0",
        "Sports",
        "golf swing",
        &ClientSet::build(&names, &ctx).unwrap(),
        3,
    );
    assert_eq!(t.reason.as_deref(), Some("stage:pose"));
}

#[test]
fn http_without_transport_is_rejected() {
    let names = ClientNames {
        image: "http".into(),
        ..Default::default()
    };
    assert!(ClientSet::build(&names, &StageContext::default()).is_err());
}

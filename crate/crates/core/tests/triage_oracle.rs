use serde_json::Value;

use prokno_core::fixtures::{self, TOY_FLAT, TOY_FLOW};
use prokno_core::pk::AnswerValue;
use prokno_core::triage::{classify_text, replay, start_session, submit_answer, AnswerSource, Classification};
use prokno_core::to_canonical_json;

/// Feed answers in order until the session finishes; extra answers are unused.
fn run(doc: &prokno_core::ProcessKnowledgeDoc, answers: &[AnswerValue]) -> Option<String> {
    let mut s = start_session(doc, "t").unwrap();
    for a in answers {
        if s.is_done() {
            break;
        }
        submit_answer(doc, &mut s, a.clone()).unwrap();
    }
    s.outcome().map(str::to_string)
}

/// Walks the raw JSON: follow the edge or outcome binding for each answer.
fn flow_oracle(raw: &Value, answers: &[&str]) -> String {
    let mut node = "Q1".to_string();
    for a in answers {
        if let Some(o) = raw["outcomes"].as_array().unwrap().iter().find(|o| {
            o["binding"]["node"] == node.as_str() && o["binding"]["answer_value"] == *a
        }) {
            return o["label"].as_str().unwrap().to_string();
        }
        let edge = raw["edges"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["from"] == node.as_str() && e["answer_value"] == *a)
            .expect("covered");
        node = edge["to"].as_str().unwrap().to_string();
    }
    panic!("no outcome reached")
}

#[test]
fn flow_exhaustive_matches_oracles() {
    let doc = fixtures::toy_flow();
    let raw: Value = serde_json::from_str(TOY_FLOW).unwrap();
    for bits in 0u32..32 {
        let answers: Vec<&str> = (0..5).map(|i| if bits >> i & 1 == 1 { "yes" } else { "no" }).collect();
        let values: Vec<AnswerValue> = answers.iter().map(|a| AnswerValue::from(*a)).collect();
        let got = run(&doc, &values).expect("every full vector ends");
        assert_eq!(got, flow_oracle(&raw, &answers), "{answers:?}");

        // the severity reading of the chain, stated by hand
        let first_no = answers.iter().position(|a| *a == "no");
        let expected = format!("level {}", first_no.unwrap_or(5));
        assert_eq!(got, expected, "{answers:?}");
    }
}

#[test]
fn flat_exhaustive_matches_sum_and_lookup() {
    let doc = fixtures::toy_flat();
    let raw: Value = serde_json::from_str(TOY_FLAT).unwrap();
    let thresholds = raw["scoring"]["thresholds"].as_array().unwrap();
    for a in 0..4i64 {
        for b in 0..4i64 {
            for c in 0..4i64 {
                let total: i64 = ["I1", "I2", "I3"]
                    .iter()
                    .zip([a, b, c])
                    .map(|(id, v)| raw["scoring"]["points"][id][v.to_string()].as_i64().unwrap())
                    .sum();
                let expected = thresholds
                    .iter()
                    .find(|t| t["min"].as_i64().unwrap() <= total && total <= t["max"].as_i64().unwrap())
                    .map(|t| t["outcome"].as_str().unwrap().to_string());
                let s = replay(&doc, &[a.into(), b.into(), c.into()]).unwrap();
                assert_eq!(s.flat_running_total, total);
                assert_eq!(s.outcome().map(str::to_string), expected, "{a} {b} {c}");
            }
        }
    }
}

#[test]
fn replay_only_visits_reachable_nodes() {
    let doc = fixtures::toy_flow();
    let s = replay(&doc, &["yes".into(), "no".into()]).unwrap();
    let visited: Vec<&str> = s.answered.iter().map(|a| a.node_id.as_str()).collect();
    assert_eq!(visited, ["Q1", "Q2"]);
    assert!(s.answered.iter().all(|a| a.source == AnswerSource::User));
}

#[test]
fn classify_full_path() {
    let doc = fixtures::toy_flow();
    let lex = fixtures::toy_flow_lexicon();
    let text = "I wish I were dead and I want to kill myself, but I have no idea how.";
    let Classification::Outcome { label, trace } = classify_text(&doc, &lex, text).unwrap() else {
        panic!("expected an outcome");
    };
    assert_eq!(label, "level 2");
    assert_eq!(trace.steps.len(), 3);
    let spans: Vec<(usize, usize)> = trace.steps.iter().map(|s| s.evidence[0].span).collect();
    // hand-counted char offsets of the three cue phrases
    assert_eq!(spans, [(2, 18), (33, 44), (57, 68)]);
    assert!(trace.steps.iter().all(|s| s.source == AnswerSource::Cue));
}

#[test]
fn classify_stops_at_first_gap() {
    let doc = fixtures::toy_flow();
    let lex = fixtures::toy_flow_lexicon();
    // Q3 evidence present but Q2 unanswered: never skip ahead
    let c = classify_text(&doc, &lex, "Lately I wish I were dead. I keep looking at the pills.").unwrap();
    let Classification::NeedsInput { question, trace, conflicts } = c else {
        panic!("expected needs_input");
    };
    assert_eq!(question.node_id, "Q2");
    assert!(!question.conflict);
    assert_eq!(trace.steps.len(), 1);
    assert!(conflicts.is_empty());
}

#[test]
fn classify_flags_conflict() {
    let doc = fixtures::toy_flow();
    let lex = fixtures::toy_flow_lexicon();
    let text = "I wish I was dead, I want to end my life, I thought about an overdose but I have no idea how.";
    let Classification::NeedsInput { question, conflicts, trace } = classify_text(&doc, &lex, text).unwrap() else {
        panic!("expected needs_input");
    };
    assert_eq!(question.node_id, "Q3");
    assert!(question.conflict);
    assert_eq!(conflicts["Q3"], vec![AnswerValue::from("yes"), AnswerValue::from("no")]);
    assert_eq!(trace.steps.len(), 2);
}

#[test]
fn classify_is_byte_stable() {
    let doc = fixtures::toy_flow();
    let lex = fixtures::toy_flow_lexicon();
    let text = "I wish I were dead and I want to kill myself, but I have no idea how.";
    let first = to_canonical_json(&classify_text(&doc, &lex, text).unwrap()).unwrap();
    for _ in 0..5 {
        assert_eq!(to_canonical_json(&classify_text(&doc, &lex, text).unwrap()).unwrap(), first);
    }
}

#[test]
fn flat_classify_prefills_items() {
    let doc = fixtures::toy_flat();
    let lex = fixtures::toy_flat_lexicon();
    let c = classify_text(&doc, &lex, "").unwrap();
    assert!(matches!(c, Classification::NeedsInput { ref question, .. } if question.node_id == "I1"));

    let c = classify_text(&doc, &lex, "I am nervous every day, I worry all the time and I can never relax.").unwrap();
    let Classification::Outcome { label, trace } = c else {
        panic!("expected an outcome");
    };
    // 3 + 3 + 3
    assert_eq!(label, "moderate");
    assert_eq!(trace.steps.len(), 3);

    let c = classify_text(&doc, &lex, "I rarely worry but feel constantly on edge.").unwrap();
    let Classification::NeedsInput { question, trace, .. } = c else {
        panic!("expected needs_input");
    };
    assert_eq!(question.node_id, "I3");
    assert_eq!(trace.steps.len(), 2);
}

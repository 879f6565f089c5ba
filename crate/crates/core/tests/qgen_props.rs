use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prokno_core::pk::Tag;
use prokno_core::qgen::{
    baseline_entailment, default_tag_rules, filter_and_rank, BaselineEntailment, CandidateQuestion, EntailmentConfig,
    Relation, TagRuleSet,
};

const TAGS: [Tag; 5] = [
    Tag::YesNo,
    Tag::DegreeFrequency,
    Tag::Causes,
    Tag::TreatmentRemedies,
    Tag::SideEffectsInfo,
];

const PHRASES: &[&str] = &[
    "do you feel anxious",
    "do you not feel anxious",
    "how often do you feel anxious at night",
    "what causes your worry",
    "have you tried any treatment",
    "does the medication cause side effects",
    "are you sleeping well",
    "you are not sleeping well",
    "never mind the medication",
    "how severe is the pain",
];

fn random_candidate(rng: &mut ChaCha8Rng, id: usize) -> CandidateQuestion {
    let tag = if rng.random_bool(0.1) {
        Tag::Other("Smalltalk".into())
    } else {
        TAGS[rng.random_range(0..TAGS.len())].clone()
    };
    CandidateQuestion {
        id: format!("c{id}"),
        text: PHRASES[rng.random_range(0..PHRASES.len())].to_string(),
        tag,
        rank: rng.random_range(1..4),
        source: "random".into(),
    }
}

#[test]
fn default_rules_are_the_four_step_cycle() {
    let expected: BTreeMap<Tag, BTreeSet<Tag>> = [
        (Tag::YesNo, Tag::DegreeFrequency),
        (Tag::DegreeFrequency, Tag::Causes),
        (Tag::Causes, Tag::TreatmentRemedies),
        (Tag::TreatmentRemedies, Tag::SideEffectsInfo),
    ]
    .into_iter()
    .map(|(a, b)| (a, BTreeSet::from([b])))
    .collect();
    assert_eq!(default_tag_rules(), TagRuleSet::new(expected).unwrap());
    let json = serde_json::to_value(default_tag_rules()).unwrap();
    assert_eq!(
        json,
        serde_json::json!({
            "YesNo": ["DegreeFrequency"],
            "DegreeFrequency": ["Causes"],
            "Causes": ["TreatmentRemedies"],
            "TreatmentRemedies": ["SideEffectsInfo"],
        })
    );
}

#[test]
fn random_streams_never_break_the_rules() {
    let rules = default_tag_rules();
    let scorer = BaselineEntailment::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut grown = 0;
    for stream in 0..1000 {
        let mut history = vec![CandidateQuestion {
            id: format!("h{stream}"),
            text: PHRASES[rng.random_range(0..PHRASES.len())].to_string(),
            tag: TAGS[rng.random_range(0..TAGS.len())].clone(),
            rank: 1,
            source: String::new(),
        }];
        for round in 0..4 {
            let batch: Vec<CandidateQuestion> = (0..8).map(|i| random_candidate(&mut rng, round * 8 + i)).collect();
            let ranking = filter_and_rank(&batch, &history, &rules, &scorer);
            assert_eq!(ranking.accepted.len() + ranking.rejected.len(), batch.len());
            let last = history.last().unwrap().tag.clone();
            for a in &ranking.accepted {
                assert!(rules.allows(&last, &a.candidate.tag), "{last} -> {}", a.candidate.tag);
            }
            match ranking.accepted.first() {
                Some(top) => history.push(top.candidate.clone()),
                None => break,
            }
        }
        grown += history.len() - 1;
        for pair in history.windows(2) {
            assert!(rules.allows(&pair[0].tag, &pair[1].tag));
        }
    }
    // the property must not hold vacuously
    assert!(grown > 500, "only {grown} candidates accepted");
}

#[test]
fn ranking_ignores_candidate_order() {
    let rules = default_tag_rules();
    let scorer = BaselineEntailment::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let history = vec![random_candidate(&mut rng, 99)];
        let mut batch: Vec<CandidateQuestion> = (0..10).map(|i| random_candidate(&mut rng, i)).collect();
        let before = filter_and_rank(&batch, &history, &rules, &scorer);
        batch.shuffle(&mut rng);
        assert_eq!(filter_and_rank(&batch, &history, &rules, &scorer), before);
    }
}

#[test]
fn negated_repeat_is_rejected_as_contradiction() {
    let history = vec![CandidateQuestion {
        id: "h1".into(),
        text: "Are you sleeping well?".into(),
        tag: Tag::YesNo,
        rank: 1,
        source: String::new(),
    }];
    let cand = CandidateQuestion {
        id: "c1".into(),
        text: "You are not sleeping well, how often?".into(),
        tag: Tag::DegreeFrequency,
        rank: 1,
        source: String::new(),
    };
    let r = filter_and_rank(&[cand], &history, &default_tag_rules(), &BaselineEntailment::default());
    assert!(r.accepted.is_empty());
    let reason = serde_json::to_value(&r.rejected[0].reason).unwrap();
    assert_eq!(reason["reason"], "contradiction");
    assert_eq!(reason["history_position"], 1);
}

fn wordy() -> impl Strategy<Value = String> {
    "[A-Za-z0-9éü ,.'!-]{0,40}[A-Za-z0-9][A-Za-z0-9éü ,.'!-]{0,40}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn identity_is_full_entailment(x in wordy()) {
        let v = baseline_entailment(&x, &x, &EntailmentConfig::default()).unwrap();
        prop_assert_eq!(v.relation, Relation::Entail);
        prop_assert_eq!(v.confidence, 1.0);
    }

    #[test]
    fn raising_theta_e_never_creates_entailment(
        i in 0..PHRASES.len(), j in 0..PHRASES.len(), lo in 0.0f64..1.0, bump in 0.0f64..0.5,
    ) {
        let hi = (lo + bump).min(1.0);
        let low = EntailmentConfig { theta_e: lo, ..EntailmentConfig::default() };
        let high = EntailmentConfig { theta_e: hi, ..EntailmentConfig::default() };
        let a = baseline_entailment(PHRASES[i], PHRASES[j], &low).unwrap();
        let b = baseline_entailment(PHRASES[i], PHRASES[j], &high).unwrap();
        if a.relation != Relation::Entail {
            prop_assert_ne!(b.relation, Relation::Entail);
        }
    }
}

//! Bundled demo instruments, lexicons and rule files.
//!
//! All instruments here are toy, non-clinical examples. Their outcome labels
//! are placeholders.

use crate::cues::CueLexicon;
use crate::food::{parse_recipes, Recipe, RuleBook};
use crate::kg::{load_kg, KnowledgeGraph};
use crate::pk::{load_pk, ProcessKnowledgeDoc};

pub const TOY_FLOW: &str = include_str!("../data/toy-flow.pk.json");
pub const TOY_FLOW_LEXICON: &str = include_str!("../data/toy-flow.lex.json");
pub const TOY_FLAT: &str = include_str!("../data/toy-flat.pk.json");
pub const TOY_FLAT_LEXICON: &str = include_str!("../data/toy-flat.lex.json");
pub const FOOD_PREFERENCES: &str = include_str!("../data/food-preferences.pk.json");
pub const MENTAL_HEALTH_KG: &str = include_str!("../data/mental-health.kg.json");
pub const ACTION_RULES: &str = include_str!("../data/rules/cooking.actions.json");
pub const DIETARY_RULES: &str = include_str!("../data/rules/conditions.diet.json");
pub const RECIPES: &str = include_str!("../data/recipes.jsonl");

/// Five yes/no questions chained on "yes"; answering Qk "no" ends at
/// `level k-1`, answering Q5 "yes" ends at `level 5`.
pub fn toy_flow() -> ProcessKnowledgeDoc {
    load_pk(TOY_FLOW.as_bytes()).expect("bundled flow document is valid")
}

pub fn toy_flow_lexicon() -> CueLexicon {
    CueLexicon::from_json("toy-flow", TOY_FLOW_LEXICON.as_bytes()).expect("bundled lexicon is valid")
}

/// Three 0..3 items; totals 0-2 minimal, 3-5 mild, 6-9 moderate.
pub fn toy_flat() -> ProcessKnowledgeDoc {
    load_pk(TOY_FLAT.as_bytes()).expect("bundled flat document is valid")
}

pub fn toy_flat_lexicon() -> CueLexicon {
    CueLexicon::from_json("toy-flat", TOY_FLAT_LEXICON.as_bytes()).expect("bundled lexicon is valid")
}

pub fn food_preferences() -> ProcessKnowledgeDoc {
    load_pk(FOOD_PREFERENCES.as_bytes()).expect("bundled dialogue is valid")
}

pub fn mental_health_kg() -> KnowledgeGraph {
    load_kg(MENTAL_HEALTH_KG.as_bytes()).expect("bundled graph is valid")
}

pub fn rule_book() -> RuleBook {
    RuleBook::new(
        RuleBook::parse_actions(ACTION_RULES.as_bytes()).expect("bundled action rules parse"),
        RuleBook::parse_dietary(DIETARY_RULES.as_bytes()).expect("bundled dietary rules parse"),
    )
    .expect("bundled rules are valid")
}

pub fn recipes() -> Vec<Recipe> {
    parse_recipes(RECIPES).expect("bundled recipes parse")
}

//! Recipe checks against cooking-action adverse effects and
//! condition-specific dietary rules, plus filtered recommendation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_phrase;

/// Applies to every condition.
pub const GENERAL_CONDITION: &str = "general";
pub const ANY_CLASS: &str = "any";

#[derive(Debug, Error, PartialEq)]
pub enum FoodError {
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("unit error: {0}")]
    Unit(String),
    #[error("profile has no limit for {0:?}")]
    MissingLimit(String),
    #[error("invalid recipe {0:?}: {1}")]
    InvalidRecipe(String, String),
    #[error("invalid rule {0:?}: {1}")]
    InvalidRule(String, String),
    #[error("recipe catalog is empty")]
    EmptyCatalog,
    #[error("malformed input: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarbSource {
    Fiber,
    AddedSugar,
    RefinedGrain,
    None,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MealSlot {
    Breakfast,
    Lunch,
    Dinner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub amount: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingredient {
    pub name: String,
    pub ingredient_class: String,
    pub carb_source: CarbSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    #[serde(default)]
    pub cuisine: Option<String>,
    pub ingredients: Vec<Ingredient>,
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub meal_slot: Option<MealSlot>,
    /// per serving
    #[serde(default)]
    pub nutrients: BTreeMap<String, Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Advisory,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEffectRule {
    pub id: String,
    pub action: String,
    /// ingredient class, or `any`
    pub ingredient_class: String,
    pub adverse_effect: String,
    pub severity: Severity,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contribution {
    Advisable,
    NotAdvisable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    CarbSourceIn(Vec<CarbSource>),
    IngredientClassIn(Vec<String>),
    ActionIn(Vec<String>),
    /// Without a fixed `limit` the profile's limit for the nutrient is used.
    NutrientAbove {
        nutrient: String,
        #[serde(default)]
        limit: Option<Quantity>,
    },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DietaryRule {
    pub id: String,
    pub condition: String,
    pub predicate: Predicate,
    pub verdict: Contribution,
    /// `{recipe}`, `{matched}` and `{condition}` are substituted
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Mass,
    Energy,
    Volume,
}

/// Known units and their factor to the base unit of their dimension
/// (g, kcal, ml).
#[derive(Debug, Clone)]
pub struct UnitTable {
    units: BTreeMap<String, (Dimension, f64)>,
}

impl Default for UnitTable {
    fn default() -> Self {
        let units = [
            ("g", Dimension::Mass, 1.0),
            ("kg", Dimension::Mass, 1000.0),
            ("mg", Dimension::Mass, 1e-3),
            ("mcg", Dimension::Mass, 1e-6),
            ("kcal", Dimension::Energy, 1.0),
            ("kj", Dimension::Energy, 1.0 / 4.184),
            ("ml", Dimension::Volume, 1.0),
            ("l", Dimension::Volume, 1000.0),
        ];
        UnitTable {
            units: units.into_iter().map(|(u, d, f)| (u.to_string(), (d, f))).collect(),
        }
    }
}

impl UnitTable {
    fn lookup(&self, unit: &str) -> Result<(Dimension, f64), FoodError> {
        self.units
            .get(&unit.to_lowercase())
            .copied()
            .ok_or_else(|| FoodError::Unit(format!("unit {unit:?} is not in the unit table")))
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.lookup(unit).is_ok()
    }

    /// `q` expressed in `unit`.
    pub fn convert(&self, q: &Quantity, unit: &str) -> Result<f64, FoodError> {
        let (from_dim, from_f) = self.lookup(&q.unit)?;
        let (to_dim, to_f) = self.lookup(unit)?;
        if from_dim != to_dim {
            return Err(FoodError::Unit(format!("cannot compare {} with {unit}", q.unit)));
        }
        Ok(q.amount * from_f / to_f)
    }
}

/// Action and dietary rules in file order.
#[derive(Debug, Clone, Default)]
pub struct RuleBook {
    pub action_rules: Vec<ActionEffectRule>,
    pub dietary_rules: Vec<DietaryRule>,
    pub units: UnitTable,
}

impl RuleBook {
    pub fn new(action_rules: Vec<ActionEffectRule>, dietary_rules: Vec<DietaryRule>) -> Result<Self, FoodError> {
        for r in &action_rules {
            if r.action.trim().is_empty() || r.adverse_effect.trim().is_empty() {
                return Err(FoodError::InvalidRule(r.id.clone(), "action and effect must be non-empty".into()));
            }
        }
        for r in &dietary_rules {
            if r.condition.trim().is_empty() {
                return Err(FoodError::InvalidRule(r.id.clone(), "condition is empty".into()));
            }
        }
        Ok(RuleBook {
            action_rules,
            dietary_rules,
            units: UnitTable::default(),
        })
    }

    pub fn parse_actions(bytes: &[u8]) -> Result<Vec<ActionEffectRule>, FoodError> {
        serde_json::from_slice(bytes).map_err(|e| FoodError::Parse(e.to_string()))
    }

    pub fn parse_dietary(bytes: &[u8]) -> Result<Vec<DietaryRule>, FoodError> {
        serde_json::from_slice(bytes).map_err(|e| FoodError::Parse(e.to_string()))
    }

    pub fn conditions(&self) -> BTreeSet<&str> {
        self.dietary_rules
            .iter()
            .map(|r| r.condition.as_str())
            .chain([GENERAL_CONDITION])
            .collect()
    }
}

pub fn parse_recipes(jsonl: &str) -> Result<Vec<Recipe>, FoodError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| FoodError::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub condition: String,
    #[serde(default)]
    pub cuisine: Option<String>,
    #[serde(default)]
    pub meal_slot: Option<MealSlot>,
    /// individual nutrient limits, e.g. daily carbohydrate
    #[serde(default)]
    pub limits: BTreeMap<String, Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Action,
    Dietary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationLevel {
    Advisory,
    Flagged,
    NotAdvisable,
}

impl ViolationLevel {
    pub fn flags(self) -> bool {
        !matches!(self, ViolationLevel::Advisory)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleViolation {
    pub rule_id: String,
    pub kind: RuleKind,
    pub level: ViolationLevel,
    /// the action and/or ingredients (or nutrient comparisons) that matched
    pub matched: Vec<String>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule_id: String,
    pub kind: RuleKind,
    pub matched: bool,
    pub contribution: Option<Contribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Advisable,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeVerdict {
    pub recipe: String,
    pub condition: String,
    pub overall: Overall,
    pub violations: Vec<RuleViolation>,
    pub trace: Vec<RuleCheck>,
}

fn same_action(a: &str, b: &str) -> bool {
    normalize_phrase(a) == normalize_phrase(b)
}

fn render(template: &str, recipe: &Recipe, matched: &[String], condition: &str, effect: &str) -> String {
    template
        .replace("{recipe}", &recipe.name)
        .replace("{matched}", &matched.join(", "))
        .replace("{condition}", condition)
        .replace("{effect}", effect)
}

struct EvalContext<'a> {
    recipe: &'a Recipe,
    profile: &'a Profile,
    units: &'a UnitTable,
}

impl EvalContext<'_> {
    /// Matched elements, or `None` when the predicate does not hold.
    fn eval(&self, p: &Predicate) -> Result<Option<Vec<String>>, FoodError> {
        let non_empty = |v: Vec<String>| if v.is_empty() { None } else { Some(v) };
        Ok(match p {
            Predicate::CarbSourceIn(sources) => non_empty(
                self.recipe
                    .ingredients
                    .iter()
                    .filter(|i| sources.contains(&i.carb_source))
                    .map(|i| i.name.clone())
                    .collect(),
            ),
            Predicate::IngredientClassIn(classes) => non_empty(
                self.recipe
                    .ingredients
                    .iter()
                    .filter(|i| classes.iter().any(|c| c.eq_ignore_ascii_case(&i.ingredient_class)))
                    .map(|i| i.name.clone())
                    .collect(),
            ),
            Predicate::ActionIn(actions) => non_empty(
                self.recipe
                    .actions
                    .iter()
                    .filter(|a| actions.iter().any(|b| same_action(a, b)))
                    .cloned()
                    .collect(),
            ),
            Predicate::NutrientAbove { nutrient, limit } => {
                let limit = match limit {
                    Some(q) => q,
                    None => self
                        .profile
                        .limits
                        .get(nutrient)
                        .ok_or_else(|| FoodError::MissingLimit(nutrient.clone()))?,
                };
                self.units.lookup(&limit.unit)?;
                match self.recipe.nutrients.get(nutrient) {
                    None => None,
                    Some(q) => {
                        let amount = self.units.convert(q, &limit.unit)?;
                        (amount > limit.amount).then(|| {
                            vec![format!("{nutrient} {amount} {} > {} {}", limit.unit, limit.amount, limit.unit)]
                        })
                    }
                }
            }
            Predicate::All(ps) => {
                let mut all = Vec::new();
                for p in ps {
                    match self.eval(p)? {
                        Some(m) => all.extend(m),
                        None => return Ok(None),
                    }
                }
                Some(all)
            }
            Predicate::Any(ps) => {
                let mut any = None::<Vec<String>>;
                for p in ps {
                    if let Some(m) = self.eval(p)? {
                        any.get_or_insert_with(Vec::new).extend(m);
                    }
                }
                any
            }
            Predicate::Not(p) => match self.eval(p)? {
                Some(_) => None,
                None => Some(Vec::new()),
            },
        })
    }
}

fn check_recipe(recipe: &Recipe, units: &UnitTable) -> Result<(), FoodError> {
    if recipe.ingredients.is_empty() {
        return Err(FoodError::InvalidRecipe(recipe.name.clone(), "no ingredients".into()));
    }
    for (name, q) in &recipe.nutrients {
        if !(q.amount >= 0.0 && q.amount.is_finite()) {
            return Err(FoodError::InvalidRecipe(
                recipe.name.clone(),
                format!("{name} quantity must be non-negative"),
            ));
        }
        units.lookup(&q.unit)?;
    }
    Ok(())
}

/// Apply every action rule and every dietary rule for the profile's
/// condition (plus `general` rules) in rule-file order.
pub fn evaluate_recipe(recipe: &Recipe, profile: &Profile, rules: &RuleBook) -> Result<RecipeVerdict, FoodError> {
    if !rules.conditions().contains(profile.condition.as_str()) {
        return Err(FoodError::UnknownCondition(profile.condition.clone()));
    }
    check_recipe(recipe, &rules.units)?;

    let mut violations = Vec::new();
    let mut trace = Vec::new();

    for rule in &rules.action_rules {
        let mut hit = false;
        for action in recipe.actions.iter().filter(|a| same_action(a, &rule.action)) {
            let ingredients: Vec<String> = recipe
                .ingredients
                .iter()
                .filter(|i| rule.ingredient_class == ANY_CLASS || i.ingredient_class.eq_ignore_ascii_case(&rule.ingredient_class))
                .map(|i| i.name.clone())
                .collect();
            if ingredients.is_empty() {
                continue;
            }
            hit = true;
            let matched: Vec<String> = std::iter::once(action.clone()).chain(ingredients).collect();
            let template = if rule.explanation.is_empty() {
                "{matched}: {effect}"
            } else {
                &rule.explanation
            };
            violations.push(RuleViolation {
                rule_id: rule.id.clone(),
                kind: RuleKind::Action,
                level: match rule.severity {
                    Severity::Advisory => ViolationLevel::Advisory,
                    Severity::Flagged => ViolationLevel::Flagged,
                },
                explanation: render(template, recipe, &matched, &profile.condition, &rule.adverse_effect),
                matched,
            });
        }
        trace.push(RuleCheck {
            rule_id: rule.id.clone(),
            kind: RuleKind::Action,
            matched: hit,
            contribution: None,
        });
    }

    let ctx = EvalContext {
        recipe,
        profile,
        units: &rules.units,
    };
    for rule in rules
        .dietary_rules
        .iter()
        .filter(|r| r.condition == profile.condition || r.condition == GENERAL_CONDITION)
    {
        let matched = ctx.eval(&rule.predicate)?;
        if let (Some(elements), Contribution::NotAdvisable) = (&matched, rule.verdict) {
            let template = if rule.explanation.is_empty() {
                "{matched} not advisable for {condition}"
            } else {
                &rule.explanation
            };
            violations.push(RuleViolation {
                rule_id: rule.id.clone(),
                kind: RuleKind::Dietary,
                level: ViolationLevel::NotAdvisable,
                explanation: render(template, recipe, elements, &profile.condition, ""),
                matched: elements.clone(),
            });
        }
        trace.push(RuleCheck {
            rule_id: rule.id.clone(),
            kind: RuleKind::Dietary,
            matched: matched.is_some(),
            contribution: Some(rule.verdict),
        });
    }

    let overall = if violations.iter().any(|v| v.level.flags()) {
        Overall::Flagged
    } else {
        Overall::Advisable
    };
    Ok(RecipeVerdict {
        recipe: recipe.name.clone(),
        condition: profile.condition.clone(),
        overall,
        violations,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judged {
    pub recipe: Recipe,
    pub verdict: RecipeVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub recipe: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub recommended: Vec<Judged>,
    pub rejected: Vec<Judged>,
    pub skipped: Vec<Skipped>,
}

/// Energy per serving in kcal, from an `energy` or `calories` nutrient.
pub fn calories(recipe: &Recipe, units: &UnitTable) -> Option<f64> {
    ["energy", "calories"]
        .iter()
        .find_map(|k| recipe.nutrients.get(*k))
        .and_then(|q| units.convert(q, "kcal").ok())
}

fn recipe_key(a: &Recipe, b: &Recipe) -> Ordering {
    a.name.cmp(&b.name).then_with(|| {
        let ja = crate::canonical::to_canonical_json(a).unwrap_or_default();
        let jb = crate::canonical::to_canonical_json(b).unwrap_or_default();
        ja.cmp(&jb)
    })
}

/// Advisable recipes for the profile's slot and cuisine, lowest calories
/// first. Flagged recipes come back under `rejected` with their violations.
pub fn recommend(recipes: &[Recipe], profile: &Profile, rules: &RuleBook) -> Result<Recommendation, FoodError> {
    if recipes.is_empty() {
        return Err(FoodError::EmptyCatalog);
    }
    let mut recommended = Vec::new();
    let mut rejected = Vec::new();
    let mut skipped = Vec::new();

    for recipe in recipes {
        if let (Some(want), Some(slot)) = (profile.meal_slot, recipe.meal_slot) {
            if want != slot {
                skipped.push(Skipped {
                    recipe: recipe.name.clone(),
                    reason: format!("meal slot {slot:?} does not match {want:?}").to_lowercase(),
                });
                continue;
            }
        }
        if let Some(want) = &profile.cuisine {
            let matches = recipe.cuisine.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(want));
            if !matches {
                skipped.push(Skipped {
                    recipe: recipe.name.clone(),
                    reason: format!("cuisine is not {want}"),
                });
                continue;
            }
        }
        let verdict = evaluate_recipe(recipe, profile, rules)?;
        let judged = Judged {
            recipe: recipe.clone(),
            verdict,
        };
        match judged.verdict.overall {
            Overall::Advisable => recommended.push(judged),
            Overall::Flagged => rejected.push(judged),
        }
    }

    let kcal = |j: &Judged| calories(&j.recipe, &rules.units).unwrap_or(f64::INFINITY);
    recommended.sort_by(|a, b| kcal(a).total_cmp(&kcal(b)).then_with(|| recipe_key(&a.recipe, &b.recipe)));
    rejected.sort_by(|a, b| recipe_key(&a.recipe, &b.recipe));
    skipped.sort_by(|a, b| a.recipe.cmp(&b.recipe).then_with(|| a.reason.cmp(&b.reason)));
    Ok(Recommendation {
        recommended,
        rejected,
        skipped,
    })
}

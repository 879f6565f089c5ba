//! Loading instruments, lexicons, graphs and rule files from disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use prokno_core::cues::{CueLexicon, PhraseMatcher};
use prokno_core::food::RuleBook;
use prokno_core::kg::{load_kg, KnowledgeGraph};
use prokno_core::pk::{load_pk, ProcessKnowledgeDoc};

pub const PK_EXT: &str = ".pk.json";
pub const LEXICON_EXT: &str = ".lex.json";
pub const KG_EXT: &str = ".kg.json";
pub const DIET_EXT: &str = ".diet.json";
pub const ACTIONS_EXT: &str = ".actions.json";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{0} is defined twice")]
    Duplicate(String),
}

fn invalid(path: &Path, message: impl ToString) -> LoadError {
    LoadError::Invalid {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_string(path: &Path) -> Result<String, LoadError> {
    String::from_utf8(read(path)?).map_err(|e| invalid(path, e))
}

/// File name with `ext` removed, if it carries that extension.
pub fn stem_with(path: &Path, ext: &str) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(ext).filter(|s| !s.is_empty()).map(str::to_string)
}

/// Files in `dir` ending in `ext`, sorted by name.
fn files_with(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, LoadError> {
    let entries = fs::read_dir(dir).map_err(|source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| stem_with(p, ext).is_some())
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_pk_file(path: &Path) -> Result<ProcessKnowledgeDoc, LoadError> {
    load_pk(&read(path)?).map_err(|e| invalid(path, e))
}

/// Lexicon id is the file name without `.lex.json` (or the plain stem).
pub fn load_lexicon_file(path: &Path) -> Result<CueLexicon, LoadError> {
    let id = stem_with(path, LEXICON_EXT)
        .or_else(|| path.file_stem().and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_default();
    CueLexicon::from_json(id, &read(path)?).map_err(|e| invalid(path, e))
}

pub fn load_kg_file(path: &Path) -> Result<KnowledgeGraph, LoadError> {
    load_kg(&read(path)?).map_err(|e| invalid(path, e))
}

/// Rule files from a mix of directories and files. Directories contribute
/// their `.actions.json` and `.diet.json` files in name order.
pub fn load_rules(paths: &[PathBuf]) -> Result<RuleBook, LoadError> {
    let mut action_rules = Vec::new();
    let mut dietary_rules = Vec::new();
    for path in paths {
        let (actions, diets) = if path.is_dir() {
            (files_with(path, ACTIONS_EXT)?, files_with(path, DIET_EXT)?)
        } else if stem_with(path, ACTIONS_EXT).is_some() {
            (vec![path.clone()], vec![])
        } else if stem_with(path, DIET_EXT).is_some() {
            (vec![], vec![path.clone()])
        } else {
            return Err(invalid(path, "expected a directory, .actions.json or .diet.json"));
        };
        for f in actions {
            action_rules.extend(RuleBook::parse_actions(&read(&f)?).map_err(|e| invalid(&f, e))?);
        }
        for f in diets {
            dietary_rules.extend(RuleBook::parse_dietary(&read(&f)?).map_err(|e| invalid(&f, e))?);
        }
    }
    RuleBook::new(action_rules, dietary_rules).map_err(|e| LoadError::Invalid {
        path: paths.first().cloned().unwrap_or_default(),
        message: e.to_string(),
    })
}

pub struct LoadedLexicon {
    pub lexicon: CueLexicon,
    pub matcher: PhraseMatcher,
}

/// Everything the service serves, loaded once and shared read-only.
#[derive(Default)]
pub struct Artifacts {
    pub docs: BTreeMap<String, ProcessKnowledgeDoc>,
    pub lexicons: BTreeMap<String, LoadedLexicon>,
    pub graphs: BTreeMap<String, KnowledgeGraph>,
    pub rules: RuleBook,
}

impl Artifacts {
    pub fn load(pk_dir: &Path, lexicon_dir: &Path, kg_dir: &Path, rules_dir: &Path) -> Result<Self, LoadError> {
        let mut artifacts = Artifacts::default();
        for path in files_with(pk_dir, PK_EXT)? {
            let doc = load_pk_file(&path)?;
            if artifacts.docs.contains_key(&doc.id) {
                return Err(LoadError::Duplicate(format!("document {:?}", doc.id)));
            }
            artifacts.docs.insert(doc.id.clone(), doc);
        }
        for path in files_with(lexicon_dir, LEXICON_EXT)? {
            let lexicon = load_lexicon_file(&path)?;
            let matcher = PhraseMatcher::new(&lexicon);
            artifacts
                .lexicons
                .insert(lexicon.id.clone(), LoadedLexicon { lexicon, matcher });
        }
        for path in files_with(kg_dir, KG_EXT)? {
            let id = stem_with(&path, KG_EXT).expect("filtered by extension");
            artifacts.graphs.insert(id, load_kg_file(&path)?);
        }
        artifacts.rules = load_rules(&[rules_dir.to_path_buf()])?;
        Ok(artifacts)
    }
}

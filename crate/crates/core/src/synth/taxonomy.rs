use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CATEGORIES: usize = 11;
pub const LABELS_PER_CATEGORY: usize = 50;
pub const TAXONOMY_FORMAT_VERSION: u32 = 1;

const STANDARD: &str = include_str!("../../data/taxonomy_v1.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub labels: Vec<String>,
}

/// Validated two-level action taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTaxonomy {
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRef<'a> {
    pub category: &'a str,
    pub label: &'a str,
}

impl ActionTaxonomy {
    /// The shipped default taxonomy.
    pub fn standard() -> Self {
        expand_taxonomy(STANDARD).expect("shipped taxonomy is valid")
    }

    pub fn len(&self) -> usize {
        self.categories.iter().map(|c| c.labels.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All labels in file order.
    pub fn labels(&self) -> Vec<LabelRef<'_>> {
        self.categories
            .iter()
            .flat_map(|c| {
                c.labels.iter().map(move |l| LabelRef {
                    category: &c.name,
                    label: l,
                })
            })
            .collect()
    }

    pub fn category_of(&self, label: &str) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.labels.iter().any(|l| l == label))
            .map(|c| c.name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() != NUM_CATEGORIES {
            return Err(Error::Validation(format!(
                "expected {NUM_CATEGORIES} categories, found {}",
                self.categories.len()
            )));
        }
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for c in &self.categories {
            if c.labels.len() != LABELS_PER_CATEGORY {
                return Err(Error::Validation(format!(
                    "category `{}` has {} labels, expected {LABELS_PER_CATEGORY}",
                    c.name,
                    c.labels.len()
                )));
            }
            for l in &c.labels {
                if let Some(prev) = owner.insert(l, &c.name) {
                    return Err(Error::Validation(format!(
                        "duplicate label `{l}` in `{prev}` and `{}`",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("version {TAXONOMY_FORMAT_VERSION}\n");
        for c in &self.categories {
            s.push_str(&c.name);
            s.push('\n');
            for l in &c.labels {
                s.push_str("    ");
                s.push_str(l);
                s.push('\n');
            }
        }
        s
    }
}

/// Parses and validates a taxonomy file.
///
/// Format: a `version 1` line, then category names at column 0, each followed
/// by its labels on indented lines. Blank lines and `#` comments are ignored.
pub fn expand_taxonomy(text: &str) -> Result<ActionTaxonomy> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == format!("version {TAXONOMY_FORMAT_VERSION}") => {}
        Some((n, l)) => {
            return Err(Error::Parse(format!(
                "line {}: expected `version {TAXONOMY_FORMAT_VERSION}`, got `{l}`",
                n + 1
            )))
        }
        None => return Err(Error::Parse("empty taxonomy file".into())),
    }
    let mut categories: Vec<Category> = Vec::new();
    for (n, line) in lines {
        let indented = line.starts_with(' ') || line.starts_with('\t');
        let item = line.trim().to_string();
        if indented {
            match categories.last_mut() {
                Some(c) => c.labels.push(item),
                None => {
                    return Err(Error::Parse(format!(
                        "line {}: label before any category",
                        n + 1
                    )))
                }
            }
        } else {
            categories.push(Category {
                name: item,
                labels: Vec::new(),
            });
        }
    }
    let t = ActionTaxonomy { categories };
    t.validate()?;
    Ok(t)
}

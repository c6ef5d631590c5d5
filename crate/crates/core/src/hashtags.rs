//! Hashtag list curation: normalization, the view-count floor, and
//! consolidation of synonymous tags into one canonical action.
//!
//! Hashtag list files are CSV with a header row `tag,views,category[,canonical_action]`.
//! Synonym maps are CSV with a header row `tag,canonical_action`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Dance,
    Sports,
    Fitness,
    Kinetics,
    SocialCultural,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Dance => "dance",
            Category::Sports => "sports",
            Category::Fitness => "fitness",
            Category::Kinetics => "kinetics",
            Category::SocialCultural => "social_cultural",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dance" => Ok(Category::Dance),
            "sports" => Ok(Category::Sports),
            "fitness" => Ok(Category::Fitness),
            "kinetics" => Ok(Category::Kinetics),
            "social_cultural" | "social/cultural" | "social" => Ok(Category::SocialCultural),
            other => Err(Error::InvalidArgument(format!("unknown category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashtagSpec {
    pub tag: String,
    pub views: u64,
    pub category: Category,
    pub canonical_action: String,
}

impl HashtagSpec {
    pub fn new(raw_tag: &str, views: u64, category: Category) -> Result<Self> {
        let tag = normalize(raw_tag)?;
        Ok(HashtagSpec {
            canonical_action: tag.clone(),
            tag,
            views,
            category,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
        if !ok(&self.tag) {
            return Err(Error::InvalidArgument(format!("tag {:?} is not normalized", self.tag)));
        }
        if self.canonical_action.is_empty() {
            return Err(Error::InvalidArgument(format!("tag {:?} has empty canonical action", self.tag)));
        }
        Ok(())
    }
}

/// Strips leading `#`, lowercases and drops every non-alphanumeric character.
pub fn normalize(raw: &str) -> Result<String> {
    let tag: String = raw
        .trim_start_matches('#')
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    if tag.is_empty() {
        return Err(Error::InvalidArgument(format!("hashtag {raw:?} is empty after normalization")));
    }
    Ok(tag)
}

/// Keeps specs with at least `min_views` views, in input order.
pub fn filter_by_views(specs: &[HashtagSpec], min_views: u64) -> Vec<HashtagSpec> {
    specs.iter().filter(|s| s.views >= min_views).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CurationWarning {
    /// The tag had no synonym-map entry and stands as its own action.
    Unmapped { tag: String },
    /// The tag opens with a gerund; the bare noun usually draws more videos.
    GerundPrefix { tag: String, suggestion: String },
}

impl fmt::Display for CurationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurationWarning::Unmapped { tag } => {
                write!(f, "#{tag} is missing from the synonym map; kept as its own action")
            }
            CurationWarning::GerundPrefix { tag, suggestion } => {
                write!(f, "#{tag} starts with a gerund; consider #{suggestion}")
            }
        }
    }
}

/// Keeps the most-viewed tag of every canonical-action group (lexicographically
/// smaller tag on equal views). Survivors keep their input order.
pub fn consolidate(
    specs: &[HashtagSpec],
    synonym_map: &HashMap<String, String>,
) -> (Vec<HashtagSpec>, Vec<CurationWarning>) {
    let mut warnings = Vec::new();
    let mut keyed = Vec::with_capacity(specs.len());
    for spec in specs {
        let action = match synonym_map.get(&spec.tag) {
            Some(action) => action.clone(),
            None => {
                warnings.push(CurationWarning::Unmapped { tag: spec.tag.clone() });
                spec.canonical_action.clone()
            }
        };
        keyed.push((action, spec));
    }

    let mut winners: HashMap<&str, &HashtagSpec> = HashMap::new();
    for (action, spec) in &keyed {
        winners
            .entry(action.as_str())
            .and_modify(|best| {
                if spec.views > best.views || (spec.views == best.views && spec.tag < best.tag) {
                    *best = spec;
                }
            })
            .or_insert(spec);
    }

    let kept = keyed
        .iter()
        .filter(|(action, spec)| std::ptr::eq(winners[action.as_str()], *spec))
        .map(|(action, spec)| HashtagSpec {
            canonical_action: action.clone(),
            ..(*spec).clone()
        })
        .collect();
    (kept, warnings)
}

const GERUNDS: &[&str] = &[
    "baking", "boxing", "climbing", "cooking", "cutting", "cycling", "dancing", "diving", "doing",
    "drawing", "driving", "eating", "fishing", "hiking", "jumping", "knitting", "making",
    "mopping", "painting", "playing", "riding", "rowing", "running", "sewing", "shooting",
    "singing", "skating", "skiing", "surfing", "swimming", "throwing", "walking", "washing",
    "writing",
];

/// Flags tags that open with a gerund and suggests the remaining noun.
pub fn lint_gerunds(specs: &[HashtagSpec]) -> Vec<CurationWarning> {
    specs
        .iter()
        .filter_map(|spec| {
            GERUNDS.iter().find_map(|g| {
                let rest = spec.tag.strip_prefix(g)?;
                (!rest.is_empty()).then(|| CurationWarning::GerundPrefix {
                    tag: spec.tag.clone(),
                    suggestion: rest.to_owned(),
                })
            })
        })
        .collect()
}

/// normalize → view floor → consolidation, plus the gerund lint.
pub fn curate(
    specs: &[HashtagSpec],
    min_views: u64,
    synonym_map: &HashMap<String, String>,
) -> (Vec<HashtagSpec>, Vec<CurationWarning>) {
    let floor = filter_by_views(specs, min_views);
    let (kept, mut warnings) = consolidate(&floor, synonym_map);
    warnings.extend(lint_gerunds(&kept));
    (kept, warnings)
}

fn csv_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        location: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn open_csv(path: &Path, expected: &[&str], optional: usize) -> Result<csv::Reader<std::fs::File>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(path, 1, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    let required = &expected[..expected.len() - optional];
    if !(got.len() >= required.len() && got.len() <= expected.len() && got.iter().zip(expected).all(|(a, b)| a == b)) {
        return Err(csv_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(reader)
}

pub fn read_hashtag_list(path: &Path) -> Result<Vec<HashtagSpec>> {
    let mut reader = open_csv(path, &["tag", "views", "category", "canonical_action"], 1)?;
    let mut specs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_err(path, line, e.to_string()))?;
        let field = |n: usize| row.get(n).unwrap_or("");
        let tag = normalize(field(0)).map_err(|e| csv_err(path, line, e.to_string()))?;
        let views = field(1)
            .replace('_', "")
            .parse::<u64>()
            .map_err(|_| csv_err(path, line, format!("bad view count {:?}", field(1))))?;
        let category = field(2)
            .parse::<Category>()
            .map_err(|e| csv_err(path, line, e.to_string()))?;
        let canonical_action = match field(3) {
            "" => tag.clone(),
            action => normalize(action).map_err(|e| csv_err(path, line, e.to_string()))?,
        };
        specs.push(HashtagSpec {
            tag,
            views,
            category,
            canonical_action,
        });
    }
    Ok(specs)
}

pub fn read_synonym_map(path: &Path) -> Result<HashMap<String, String>> {
    let mut reader = open_csv(path, &["tag", "canonical_action"], 0)?;
    let mut map = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_err(path, line, e.to_string()))?;
        let tag = normalize(row.get(0).unwrap_or("")).map_err(|e| csv_err(path, line, e.to_string()))?;
        let action = normalize(row.get(1).unwrap_or("")).map_err(|e| csv_err(path, line, e.to_string()))?;
        if let Some(previous) = map.insert(tag.clone(), action.clone()) {
            if previous != action {
                return Err(csv_err(
                    path,
                    line,
                    format!("#{tag} maps to both {previous:?} and {action:?}"),
                ));
            }
        }
    }
    Ok(map)
}

pub fn write_hashtag_list(specs: &[HashtagSpec], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    writer
        .write_record(["tag", "views", "category", "canonical_action"])
        .map_err(io)?;
    for s in specs {
        writer
            .write_record([
                s.tag.as_str(),
                &s.views.to_string(),
                s.category.as_str(),
                &s.canonical_action,
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Tags grouped per category, for reporting.
pub fn by_category(specs: &[HashtagSpec]) -> BTreeMap<Category, Vec<&str>> {
    let mut out: BTreeMap<Category, Vec<&str>> = BTreeMap::new();
    for s in specs {
        out.entry(s.category).or_default().push(&s.tag);
    }
    out
}

//! Taxonomy file format: `category_path<TAB>pattern<TAB>lang<TAB>flags`.
//!
//! `category_path` is slash separated, `lang` is a language code or `*`,
//! and `flags` is a comma set drawn from `anchor`, `needs_anchor`, `case`
//! (the column may be omitted or left empty). Lines starting with `#` are
//! comments.

use sha2::{Digest, Sha256};

use super::{KeywordSpec, TaxonomyError};
use crate::records::records;

/// Stable identifier derived from the fields that define a keyword.
pub fn keyword_id(category_path: &str, pattern: &str, lang: &str) -> String {
    let mut h = Sha256::new();
    h.update(category_path.as_bytes());
    h.update([0]);
    h.update(pattern.as_bytes());
    h.update([0]);
    h.update(lang.as_bytes());
    let digest = h.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("kw-{hex}")
}

pub fn parse_taxonomy(text: &str) -> Result<Vec<KeywordSpec>, TaxonomyError> {
    let mut specs = Vec::new();
    for rec in records(text) {
        let err = |message: String| TaxonomyError::Parse {
            line: rec.line,
            message,
        };
        if rec.fields.len() < 3 || rec.fields.len() > 4 {
            return Err(err(format!("expected 3 or 4 tab-separated fields, found {}", rec.fields.len())));
        }
        let category = rec.fields[0].trim();
        let pattern = rec.fields[1];
        let lang = rec.fields[2].trim();
        if category.is_empty() {
            return Err(err("empty category path".into()));
        }
        if pattern.is_empty() {
            return Err(err("empty pattern".into()));
        }
        if lang.is_empty() {
            return Err(err("empty language".into()));
        }
        let mut spec = KeywordSpec {
            id: keyword_id(category, pattern, lang),
            pattern: pattern.to_string(),
            category_path: category.split('/').map(|c| c.trim().to_string()).collect(),
            language: lang.to_string(),
            case_sensitive: false,
            is_anchor: false,
            needs_anchor: false,
        };
        let flags = rec.fields.get(3).copied().unwrap_or("");
        for flag in flags.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match flag {
                "anchor" => spec.is_anchor = true,
                "needs_anchor" => spec.needs_anchor = true,
                "case" => spec.case_sensitive = true,
                other => return Err(err(format!("unknown flag {other:?}"))),
            }
        }
        if spec.is_pure_anchor_path() && !spec.is_anchor {
            return Err(err(format!("category {} is reserved for anchors", super::ANCHOR_CATEGORY)));
        }
        specs.push(spec);
    }
    Ok(specs)
}

impl KeywordSpec {
    fn is_pure_anchor_path(&self) -> bool {
        self.category_path.len() == 1 && self.category_path[0] == super::ANCHOR_CATEGORY
    }
}

pub fn format_taxonomy(specs: &[KeywordSpec]) -> String {
    let mut out = String::new();
    for s in specs {
        let mut flags = Vec::new();
        if s.is_anchor {
            flags.push("anchor");
        }
        if s.needs_anchor {
            flags.push("needs_anchor");
        }
        if s.case_sensitive {
            flags.push("case");
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.category_string(),
            s.pattern,
            s.language,
            flags.join(",")
        ));
    }
    out
}

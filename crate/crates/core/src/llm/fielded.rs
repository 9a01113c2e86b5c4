//! Parsing of `name: value` fielded model output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    field_names: Vec<String>,
    required: Vec<String>,
}

impl FieldSchema {
    /// Builds a schema; names are compared case-insensitively.
    pub fn new(field_names: &[&str], required: &[&str]) -> Result<Self> {
        let names: Vec<String> = field_names.iter().map(|n| n.to_lowercase()).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Invalid(format!("duplicate field name `{n}`")));
            }
        }
        let required: Vec<String> = required.iter().map(|n| n.to_lowercase()).collect();
        if let Some(r) = required.iter().find(|r| !names.contains(r)) {
            return Err(Error::Invalid(format!("required field `{r}` not in schema")));
        }
        Ok(FieldSchema {
            field_names: names,
            required,
        })
    }

    /// Schema in which every field is optional.
    pub fn optional(field_names: &[&str]) -> Self {
        Self::new(field_names, &[]).expect("optional schema has no required fields")
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    fn lookup(&self, name: &str) -> Option<&str> {
        self.field_names
            .iter()
            .find(|n| n.eq_ignore_ascii_case(name))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldedResponse {
    pub fields: BTreeMap<String, String>,
    pub token_logprobs: Vec<f64>,
    pub raw_text: String,
}

impl FieldedResponse {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }
}

/// If `line` opens with a schema field header, returns the field and the
/// rest of the line. Leading list markers and bold markup are tolerated.
fn header<'s>(schema: &'s FieldSchema, line: &str) -> Option<(&'s str, String)> {
    let trimmed = line.trim_start().trim_start_matches(['-', '*', '#', ' ']);
    let colon = trimmed.find(':')?;
    let name = trimmed[..colon].trim().trim_matches('*').trim().trim_matches('`');
    let field = schema.lookup(name)?;
    let value = trimmed[colon + 1..].trim_start_matches('*');
    Some((field, value.trim().to_string()))
}

fn is_null(value: &str) -> bool {
    let v = value.trim().trim_matches('`').trim();
    v.is_empty() || v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("null")
}

/// Collects schema fields from `raw_text`. A header line starts a value that
/// runs until the next schema header; the first occurrence of a field wins,
/// `None`/`null`/empty values count as absent, and unknown fields are ignored.
pub fn parse_fielded_output(raw_text: &str, schema: &FieldSchema) -> Result<FieldedResponse> {
    let mut blocks: Vec<(&str, Vec<String>)> = Vec::new();
    for line in raw_text.lines() {
        if let Some((field, first)) = header(schema, line) {
            blocks.push((field, vec![first]));
        } else if let Some((_, lines)) = blocks.last_mut() {
            lines.push(line.trim_end().to_string());
        }
    }

    let mut fields = BTreeMap::new();
    for (field, lines) in blocks {
        if fields.contains_key(field) {
            continue;
        }
        let value = lines.join("\n").trim().to_string();
        if !is_null(&value) {
            fields.insert(field.to_string(), value);
        } else {
            // An explicit null still claims the slot so later repeats lose.
            fields.insert(field.to_string(), String::new());
        }
    }
    fields.retain(|_, v| !v.is_empty());

    let missing: Vec<String> = schema
        .required
        .iter()
        .filter(|r| !fields.contains_key(r.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFields(missing));
    }
    Ok(FieldedResponse {
        fields,
        token_logprobs: Vec::new(),
        raw_text: raw_text.to_string(),
    })
}

/// Reads a YES/NO verdict from the first word of a response, skipping an
/// optional `answer:` label.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let mut words = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty());
    let mut first = words.next()?;
    if first.eq_ignore_ascii_case("answer") {
        first = words.next()?;
    }
    if first.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if first.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

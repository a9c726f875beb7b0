//! Three-level garment label hierarchy: garment type → category → attributes.
//!
//! Indices at every level are canonical: names sorted lexicographically.
//! Attributes carry a legality table over garment types.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub parent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub legal_types: Vec<String>,
}

/// On-disk taxonomy file layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomySpec {
    pub garment_types: Vec<String>,
    pub categories: Vec<CategorySpec>,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("invalid taxonomy: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("taxonomy json: {0}")]
    Json(#[from] serde_json::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn duplicates<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    let mut dup = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            dup.insert(n);
        }
    }
    dup.into_iter().collect()
}

/// Report every structural problem in a taxonomy file.
pub fn validate_taxonomy(spec: &TaxonomySpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if spec.garment_types.is_empty() {
        out.push(Violation::new("garment_types", "no garment types"));
    }
    for d in duplicates(spec.garment_types.iter().map(String::as_str)) {
        out.push(Violation::new(
            format!("garment_types/{d}"),
            "duplicate garment type",
        ));
    }
    for d in duplicates(spec.categories.iter().map(|c| c.name.as_str())) {
        out.push(Violation::new(format!("categories/{d}"), "duplicate category"));
    }
    for d in duplicates(spec.attributes.iter().map(|a| a.name.as_str())) {
        out.push(Violation::new(format!("attributes/{d}"), "duplicate attribute"));
    }
    let types: HashSet<&str> = spec.garment_types.iter().map(String::as_str).collect();
    for c in &spec.categories {
        if !types.contains(c.parent.as_str()) {
            out.push(Violation::new(
                format!("categories/{}", c.name),
                format!("unknown parent garment type '{}'", c.parent),
            ));
        }
    }
    for t in &spec.garment_types {
        if !spec.categories.iter().any(|c| &c.parent == t) {
            out.push(Violation::new(
                format!("garment_types/{t}"),
                "garment type has no category",
            ));
        }
    }
    for a in &spec.attributes {
        if a.legal_types.is_empty() {
            out.push(Violation::new(
                format!("attributes/{}", a.name),
                "attribute is legal for no garment type",
            ));
        }
        for t in &a.legal_types {
            if !types.contains(t.as_str()) {
                out.push(Violation::new(
                    format!("attributes/{}", a.name),
                    format!("unknown legal type '{t}'"),
                ));
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// A category or attribute, addressed by canonical index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelRef {
    Category(usize),
    Attribute(usize),
}

/// One garment's labels. Attributes are kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub garment_type: usize,
    pub category: usize,
    pub attributes: Vec<usize>,
}

impl LabelSet {
    pub fn new(garment_type: usize, category: usize, attributes: impl IntoIterator<Item = usize>) -> Self {
        let attributes: BTreeSet<usize> = attributes.into_iter().collect();
        Self {
            garment_type,
            category,
            attributes: attributes.into_iter().collect(),
        }
    }

    /// Category first, then attributes in canonical order.
    pub fn labels(&self) -> Vec<LabelRef> {
        std::iter::once(LabelRef::Category(self.category))
            .chain(self.attributes.iter().map(|&a| LabelRef::Attribute(a)))
            .collect()
    }
}

/// Validated taxonomy with canonical indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    spec: TaxonomySpec,
    category_parent: Vec<usize>,
    legal: Vec<Vec<bool>>,
    type_index: HashMap<String, usize>,
    category_index: HashMap<String, usize>,
    attribute_index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn new(spec: TaxonomySpec) -> Result<Self, TaxonomyError> {
        validate_taxonomy(&spec).map_err(TaxonomyError::Invalid)?;
        let mut spec = spec;
        spec.garment_types.sort();
        spec.categories.sort_by(|a, b| a.name.cmp(&b.name));
        spec.attributes.sort_by(|a, b| a.name.cmp(&b.name));
        for a in &mut spec.attributes {
            a.legal_types.sort();
            a.legal_types.dedup();
        }
        let index = |names: Vec<&String>| {
            names
                .into_iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect::<HashMap<_, _>>()
        };
        let type_index = index(spec.garment_types.iter().collect());
        let category_index = index(spec.categories.iter().map(|c| &c.name).collect());
        let attribute_index = index(spec.attributes.iter().map(|a| &a.name).collect());
        let category_parent = spec
            .categories
            .iter()
            .map(|c| type_index[&c.parent])
            .collect();
        let legal = spec
            .attributes
            .iter()
            .map(|a| {
                let mut row = vec![false; spec.garment_types.len()];
                for t in &a.legal_types {
                    row[type_index[t]] = true;
                }
                row
            })
            .collect();
        Ok(Self {
            spec,
            category_parent,
            legal,
            type_index,
            category_index,
            attribute_index,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        Self::new(serde_json::from_str(text)?)
    }

    /// Canonical (sorted) file content.
    pub fn spec(&self) -> &TaxonomySpec {
        &self.spec
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("taxonomy serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn num_types(&self) -> usize {
        self.spec.garment_types.len()
    }

    pub fn num_categories(&self) -> usize {
        self.spec.categories.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.spec.attributes.len()
    }

    /// Size of the joint category + attribute vocabulary.
    pub fn num_labels(&self) -> usize {
        self.num_categories() + self.num_attributes()
    }

    pub fn type_name(&self, i: usize) -> &str {
        &self.spec.garment_types[i]
    }

    pub fn category_name(&self, i: usize) -> &str {
        &self.spec.categories[i].name
    }

    pub fn attribute_name(&self, i: usize) -> &str {
        &self.spec.attributes[i].name
    }

    pub fn label_name(&self, label: LabelRef) -> &str {
        match label {
            LabelRef::Category(i) => self.category_name(i),
            LabelRef::Attribute(i) => self.attribute_name(i),
        }
    }

    /// Index into the joint vocabulary: categories first, then attributes.
    pub fn vocab_index(&self, label: LabelRef) -> usize {
        match label {
            LabelRef::Category(i) => i,
            LabelRef::Attribute(i) => self.num_categories() + i,
        }
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.type_index.get(name).copied()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.category_index.get(name).copied()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_index.get(name).copied()
    }

    /// Resolve a label name; attributes take precedence over categories.
    pub fn resolve_label(&self, name: &str) -> Option<LabelRef> {
        self.attribute_index(name)
            .map(LabelRef::Attribute)
            .or_else(|| self.category_index(name).map(LabelRef::Category))
    }

    pub fn category_parent(&self, category: usize) -> usize {
        self.category_parent[category]
    }

    pub fn categories_of_type(&self, garment_type: usize) -> Vec<usize> {
        (0..self.num_categories())
            .filter(|&c| self.category_parent[c] == garment_type)
            .collect()
    }

    pub fn is_legal(&self, attribute: usize, garment_type: usize) -> bool {
        self.legal
            .get(attribute)
            .and_then(|r| r.get(garment_type))
            .copied()
            .unwrap_or(false)
    }

    pub fn legal_attributes(&self, garment_type: usize) -> Vec<usize> {
        (0..self.num_attributes())
            .filter(|&a| self.is_legal(a, garment_type))
            .collect()
    }

    pub fn check_label_set(&self, ls: &LabelSet) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if ls.garment_type >= self.num_types() {
            out.push(Violation::new(
                "garment_type",
                format!("unknown garment type index {}", ls.garment_type),
            ));
        }
        if ls.category >= self.num_categories() {
            out.push(Violation::new(
                "category",
                format!("unknown category index {}", ls.category),
            ));
        } else if self.category_parent[ls.category] != ls.garment_type {
            out.push(Violation::new(
                format!("category/{}", self.category_name(ls.category)),
                "category does not belong to the garment type",
            ));
        }
        for &a in &ls.attributes {
            if a >= self.num_attributes() {
                out.push(Violation::new(
                    "attributes",
                    format!("unknown attribute index {a}"),
                ));
            } else if !self.is_legal(a, ls.garment_type) {
                out.push(Violation::new(
                    format!("attributes/{}", self.attribute_name(a)),
                    format!(
                        "attribute not legal for garment type '{}'",
                        self.spec
                            .garment_types
                            .get(ls.garment_type)
                            .map_or("?", String::as_str)
                    ),
                ));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Build a legal label set from names; the garment type is implied by the
    /// category.
    pub fn label_set_from_names<S: AsRef<str>>(
        &self,
        category: &str,
        attributes: &[S],
    ) -> Result<LabelSet, Vec<Violation>> {
        let Some(c) = self.category_index(category) else {
            return Err(vec![Violation::new(
                format!("category/{category}"),
                "unknown category",
            )]);
        };
        let mut unknown = Vec::new();
        let mut idx = Vec::new();
        for a in attributes {
            match self.attribute_index(a.as_ref()) {
                Some(i) => idx.push(i),
                None => unknown.push(Violation::new(
                    format!("attributes/{}", a.as_ref()),
                    "unknown attribute",
                )),
            }
        }
        if !unknown.is_empty() {
            return Err(unknown);
        }
        let ls = LabelSet::new(self.category_parent[c], c, idx);
        self.check_label_set(&ls)?;
        Ok(ls)
    }
}

//! Record files: CSV or JSONL with columns item_id, date, popularity,
//! category, attributes (`|`-separated), gender, age_group, features
//! (base64 of little-endian f32, optional).

use std::io::{BufRead, Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Demographic, Normalization, PopularityRecord, Result, TrendError, TrendStore, Week};
use crate::taxonomy::{LabelSet, Taxonomy};

/// One row as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub item_id: String,
    pub date: String,
    pub popularity: f64,
    pub category: String,
    #[serde(default)]
    pub attributes: String,
    #[serde(default)]
    pub gender: Option<String>,
    #[serde(default)]
    pub age_group: Option<String>,
    #[serde(default)]
    pub features: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum JsonAttributes {
    Joined(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    item_id: String,
    date: String,
    popularity: f64,
    category: String,
    #[serde(default)]
    attributes: Option<JsonAttributes>,
    #[serde(default)]
    gender: Option<String>,
    #[serde(default)]
    age_group: Option<String>,
    #[serde(default)]
    features: Option<String>,
}

impl From<JsonRecord> for RawRecord {
    fn from(j: JsonRecord) -> Self {
        let attributes = match j.attributes {
            None => String::new(),
            Some(JsonAttributes::Joined(s)) => s,
            Some(JsonAttributes::List(v)) => v.join("|"),
        };
        RawRecord {
            item_id: j.item_id,
            date: j.date,
            popularity: j.popularity,
            category: j.category,
            attributes,
            gender: j.gender,
            age_group: j.age_group,
            features: j.features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub bad_rows: Vec<BadRow>,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Inclusive date range; rows outside are rejected.
    pub period: Option<(NaiveDate, NaiveDate)>,
    /// Fixed normalization instead of fitting one to the data.
    pub normalization: Option<Normalization>,
}

pub fn encode_features(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_features(s: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(s.trim()).map_err(|e| format!("features: {e}"))?;
    if bytes.len() % 4 != 0 {
        return Err(format!("features: {} bytes is not a multiple of 4", bytes.len()));
    }
    let v: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err("features: non-finite value".into());
    }
    Ok(v)
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn convert(
    raw: &RawRecord,
    taxonomy: &Taxonomy,
    options: &IngestOptions,
) -> std::result::Result<PopularityRecord, String> {
    if raw.item_id.trim().is_empty() {
        return Err("empty item_id".into());
    }
    let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("date '{}': {e}", raw.date))?;
    if let Some((from, to)) = options.period {
        if date < from || date > to {
            return Err(format!("date {date} outside period {from}..{to}"));
        }
    }
    if !raw.popularity.is_finite() {
        return Err("popularity is not finite".into());
    }
    let attributes: Vec<&str> = raw
        .attributes
        .split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let labels: LabelSet = taxonomy
        .label_set_from_names(raw.category.trim(), &attributes)
        .map_err(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))?;
    let demographic = match (non_empty(&raw.gender), non_empty(&raw.age_group)) {
        (None, None) => None,
        (Some(g), Some(a)) => Some(Demographic::new(
            g.parse().map_err(|e: TrendError| e.to_string())?,
            a.parse().map_err(|e: TrendError| e.to_string())?,
        )),
        _ => return Err("gender and age_group must be given together".into()),
    };
    let features = non_empty(&raw.features).map(decode_features).transpose()?;
    Ok(PopularityRecord {
        item_id: raw.item_id.trim().to_string(),
        date,
        popularity: raw.popularity,
        labels,
        demographic,
        features,
    })
}

fn finish(
    rows: Vec<(usize, std::result::Result<RawRecord, String>)>,
    taxonomy: &Taxonomy,
    options: &IngestOptions,
) -> Result<(TrendStore, IngestReport)> {
    let total = rows.len();
    let mut bad = Vec::new();
    let mut good = Vec::new();
    let mut feature_dim: Option<usize> = None;
    for (line, row) in rows {
        let rec = row.and_then(|r| convert(&r, taxonomy, options));
        let rec = rec.and_then(|r| match (&r.features, feature_dim) {
            (Some(f), Some(d)) if f.len() != d => {
                Err(format!("features: dimension {} differs from {d}", f.len()))
            }
            (Some(f), None) => {
                feature_dim = Some(f.len());
                Ok(r)
            }
            _ => Ok(r),
        });
        match rec {
            Ok(r) => good.push(r),
            Err(reason) => bad.push(BadRow { line, reason }),
        }
    }
    if total > 0 && bad.len() * 2 > total {
        return Err(TrendError::TooManyBadRows {
            bad: bad.len(),
            total,
            first: format!("line {}: {}", bad[0].line, bad[0].reason),
        });
    }
    let norm = options.normalization.unwrap_or_else(|| {
        Normalization::fit(&good.iter().map(|r| r.popularity).collect::<Vec<_>>())
    });
    for r in &mut good {
        r.popularity = norm.apply(r.popularity);
    }
    let period = options
        .period
        .map(|(a, b)| (Week::from_date(a), Week::from_date(b)));
    let report = IngestReport {
        rows: total,
        accepted: good.len(),
        bad_rows: bad,
        normalization: norm,
    };
    let store = TrendStore::new(good, taxonomy, norm, period)?;
    Ok((store, report))
}

/// Ingest a CSV record file with a header row. Unparseable rows are collected
/// in the report (1-based line numbers); more than half bad is fatal.
pub fn ingest_csv<R: Read>(
    reader: R,
    taxonomy: &Taxonomy,
    options: &IngestOptions,
) -> Result<(TrendStore, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::Headers)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TrendError::Io(e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = rec
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(i + 2, |p| p.line() as usize);
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|r| r.deserialize::<RawRecord>(Some(&headers)).map_err(|e| e.to_string()));
        rows.push((line, parsed));
    }
    finish(rows, taxonomy, options)
}

/// Ingest JSON lines. `attributes` may be a `|`-joined string or an array.
pub fn ingest_jsonl<R: BufRead>(
    reader: R,
    taxonomy: &Taxonomy,
    options: &IngestOptions,
) -> Result<(TrendStore, IngestReport)> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TrendError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<JsonRecord>(&line)
            .map(RawRecord::from)
            .map_err(|e| e.to_string());
        rows.push((i + 1, parsed));
    }
    finish(rows, taxonomy, options)
}

pub fn to_raw(record: &PopularityRecord, taxonomy: &Taxonomy) -> RawRecord {
    RawRecord {
        item_id: record.item_id.clone(),
        date: record.date.format("%Y-%m-%d").to_string(),
        popularity: record.popularity,
        category: taxonomy.category_name(record.labels.category).to_string(),
        attributes: record
            .labels
            .attributes
            .iter()
            .map(|&a| taxonomy.attribute_name(a))
            .collect::<Vec<_>>()
            .join("|"),
        gender: record.demographic.map(|d| d.gender.as_str().to_string()),
        age_group: record.demographic.map(|d| d.age_group.as_str().to_string()),
        features: record.features.as_deref().map(encode_features),
    }
}

pub fn write_csv<W: Write>(
    records: &[PopularityRecord],
    taxonomy: &Taxonomy,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(to_raw(r, taxonomy))
            .map_err(|e| TrendError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| TrendError::Io(e.to_string()))
}

pub fn write_jsonl<W: Write>(
    records: &[PopularityRecord],
    taxonomy: &Taxonomy,
    mut writer: W,
) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(&to_raw(r, taxonomy))
            .map_err(|e| TrendError::Io(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| TrendError::Io(e.to_string()))?;
    }
    Ok(())
}

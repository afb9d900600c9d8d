//! Parsing and cleansing of COCONUT-style descriptor exports.
//!
//! The pipeline is `parse_dataset` → `drop_sparse_columns` →
//! `filter_taxonomy` → `expand_categoricals`. Every step is a pure function
//! of its input; row order is preserved throughout.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical descriptor names used by the profiling rules.
pub mod names {
    pub const MOLECULAR_WEIGHT: &str = "molecular_weight";
    pub const LOG_P: &str = "log_p";
    pub const NP_LIKENESS: &str = "np_likeness";
    pub const HBA_COUNT: &str = "hba_count";
    pub const HBD_COUNT: &str = "hbd_count";
    pub const BCUT: [&str; 6] = ["bcut_1", "bcut_2", "bcut_3", "bcut_4", "bcut_5", "bcut_6"];
}

/// The nine terpene subclasses.
///
/// Variants are declared in lexicographic order of their display names so
/// that the derived `Ord` is the class order used for every model output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubclassLabel {
    Diterpenoids,
    Monoterpenoids,
    Polyterpenoids,
    Sesquaterpenoids,
    Sesquiterpenoids,
    Sesterterpenoids,
    TerpeneGlycosides,
    TerpeneLactones,
    Triterpenoids,
}

impl SubclassLabel {
    pub const ALL: [SubclassLabel; 9] = [
        Self::Diterpenoids,
        Self::Monoterpenoids,
        Self::Polyterpenoids,
        Self::Sesquaterpenoids,
        Self::Sesquiterpenoids,
        Self::Sesterterpenoids,
        Self::TerpeneGlycosides,
        Self::TerpeneLactones,
        Self::Triterpenoids,
    ];

    /// The six subclasses used for the classification task.
    pub const CLASSIFICATION: [SubclassLabel; 6] = [
        Self::Diterpenoids,
        Self::Monoterpenoids,
        Self::Sesquiterpenoids,
        Self::TerpeneGlycosides,
        Self::TerpeneLactones,
        Self::Triterpenoids,
    ];

    /// The three subclasses used for the clustering benchmark.
    pub const CLUSTERING: [SubclassLabel; 3] = [Self::Diterpenoids, Self::Monoterpenoids, Self::Triterpenoids];

    pub fn name(self) -> &'static str {
        match self {
            Self::Diterpenoids => "Diterpenoids",
            Self::Monoterpenoids => "Monoterpenoids",
            Self::Polyterpenoids => "Polyterpenoids",
            Self::Sesquaterpenoids => "Sesquaterpenoids",
            Self::Sesquiterpenoids => "Sesquiterpenoids",
            Self::Sesterterpenoids => "Sesterterpenoids",
            Self::TerpeneGlycosides => "Terpene glycosides",
            Self::TerpeneLactones => "Terpene lactones",
            Self::Triterpenoids => "Triterpenoids",
        }
    }

    /// Case-insensitive parse that ignores spaces, `_` and `-`.
    pub fn parse(s: &str) -> Option<Self> {
        let key = squash(s);
        Self::ALL.into_iter().find(|l| squash(l.name()) == key)
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl fmt::Display for SubclassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubclassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s).ok_or_else(|| Error::InvalidArgument(format!("unknown terpene subclass {s:?}")))
    }
}

impl Serialize for SubclassLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SubclassLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown terpene subclass {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    #[default]
    Csv,
    JsonLines,
}

/// Column roles and parsing rules for a source export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub format: InputFormat,
    pub id_column: String,
    pub superclass_column: String,
    pub subclass_column: String,
    pub taxa_column: Option<String>,
    pub bcut_column: Option<String>,
    pub parent_class_column: Option<String>,
    pub sugar_column: Option<String>,
    /// Canonical descriptor name → source column.
    pub descriptors: BTreeMap<String, String>,
    /// Further numeric source columns kept under their own names.
    pub extra_numeric: Vec<String>,
    /// Also keep undeclared columns whose non-null cells all parse as numbers.
    pub auto_numeric: bool,
    /// Columns never used as features (identifiers and the like).
    pub discard_columns: Vec<String>,
    pub null_tokens: Vec<String>,
    pub drop_threshold: f64,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        let descriptors = [
            (names::MOLECULAR_WEIGHT, "molecular_weight"),
            (names::LOG_P, "alogp"),
            (names::NP_LIKENESS, "npl_score"),
            (names::HBA_COUNT, "hBondAcceptorCount"),
            (names::HBD_COUNT, "hBondDonorCount"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            format: InputFormat::Csv,
            id_column: "coconut_id".into(),
            superclass_column: "chemicalSuperClass".into(),
            subclass_column: "chemicalSubClass".into(),
            taxa_column: Some("textTaxa".into()),
            bcut_column: Some("bcutDescriptor".into()),
            parent_class_column: Some("directParentClassification".into()),
            sugar_column: Some("contains_sugar".into()),
            descriptors,
            extra_numeric: Vec::new(),
            auto_numeric: true,
            discard_columns: vec!["_id".into(), "chemicalClass".into()],
            null_tokens: vec!["".into(), "NULL".into(), "null".into(), "NaN".into()],
            drop_threshold: 0.70,
        }
    }
}

impl SchemaConfig {
    /// Checks that no source column is claimed by two roles.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_threshold) {
            return Err(Error::Schema(format!(
                "drop_threshold {} outside [0, 1]",
                self.drop_threshold
            )));
        }
        let mut seen: HashMap<String, String> = HashMap::new();
        let mut claim = |col: &str, role: String| -> Result<()> {
            if let Some(prev) = seen.get(col) {
                return Err(Error::Schema(format!(
                    "column {col:?} is declared for both {prev} and {role}"
                )));
            }
            seen.insert(col.to_string(), role);
            Ok(())
        };
        claim(&self.id_column, "id".into())?;
        claim(&self.superclass_column, "superclass".into())?;
        claim(&self.subclass_column, "subclass".into())?;
        for (role, col) in [
            ("taxa", &self.taxa_column),
            ("bcut", &self.bcut_column),
            ("parent_class", &self.parent_class_column),
            ("contains_sugar", &self.sugar_column),
        ] {
            if let Some(c) = col {
                claim(c, role.into())?;
            }
        }
        for (name, col) in &self.descriptors {
            claim(col, format!("descriptor {name}"))?;
        }
        for col in &self.extra_numeric {
            claim(col, "extra numeric".into())?;
        }
        Ok(())
    }

    fn is_null(&self, s: &str) -> bool {
        let t = s.trim();
        self.null_tokens.iter().any(|n| n == t)
    }

    fn role_columns(&self) -> BTreeSet<&str> {
        let mut cols: BTreeSet<&str> = [
            self.id_column.as_str(),
            self.superclass_column.as_str(),
            self.subclass_column.as_str(),
        ]
        .into_iter()
        .collect();
        for c in [
            &self.taxa_column,
            &self.bcut_column,
            &self.parent_class_column,
            &self.sugar_column,
        ]
        .into_iter()
        .flatten()
        {
            cols.insert(c);
        }
        cols.extend(self.descriptors.values().map(String::as_str));
        cols.extend(self.extra_numeric.iter().map(String::as_str));
        cols.extend(self.discard_columns.iter().map(String::as_str));
        cols
    }
}

/// Occurrence flags derived from the free-text taxa column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxaFlags {
    pub plants: u8,
    pub marine: u8,
    pub bacteria: u8,
    pub fungi: u8,
}

impl TaxaFlags {
    pub fn from_text(text: Option<&str>) -> Self {
        let Some(t) = text else { return Self::default() };
        let t = t.to_lowercase();
        let flag = |kw: &str| u8::from(t.contains(kw));
        Self {
            plants: flag("plants"),
            marine: flag("marine"),
            bacteria: flag("bacteria"),
            fungi: flag("fungi"),
        }
    }

    pub fn as_array(self) -> [u8; 4] {
        [self.plants, self.marine, self.bacteria, self.fungi]
    }
}

/// One natural product.
///
/// `descriptors` is aligned with [`RecordSet::descriptor_columns`].
/// `taxa_text`, `bcut_raw` and `parent_class` hold unexpanded source values
/// until [`expand_categoricals`] consumes the first two.
#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeRecord {
    pub id: String,
    pub superclass: Option<String>,
    pub subclass_name: Option<String>,
    pub subclass: Option<SubclassLabel>,
    pub taxa_text: Option<String>,
    pub bcut_raw: Option<String>,
    pub parent_class: Option<String>,
    pub parent_class_code: Option<u32>,
    pub taxa: TaxaFlags,
    pub contains_sugar: Option<u8>,
    pub descriptors: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub rows: usize,
    pub nulls: usize,
}

impl ColumnStats {
    pub fn null_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.nulls as f64 / self.rows as f64
        }
    }
}

/// Parsed records plus the bookkeeping needed to reproduce the cleansing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordSet {
    pub records: Vec<MoleculeRecord>,
    pub descriptor_columns: Vec<String>,
    /// Null statistics of the source columns at parse time.
    pub column_stats: BTreeMap<String, ColumnStats>,
    /// `parent_codes[c]` is the parent classification encoded as `c`.
    pub parent_codes: Vec<String>,
    /// Warning category → occurrence count.
    pub warnings: BTreeMap<String, usize>,
    pub expanded: bool,
    pub has_taxa_source: bool,
    pub has_bcut_source: bool,
    pub has_sugar_source: bool,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.descriptor_columns.iter().position(|c| c == name)
    }

    /// Values of one descriptor column, `None` where missing or absent.
    pub fn descriptor_values(&self, name: &str) -> Vec<Option<f64>> {
        match self.column_index(name) {
            Some(j) => self.records.iter().map(|r| r.descriptors[j]).collect(),
            None => vec![None; self.records.len()],
        }
    }

    pub fn descriptor(&self, record: &MoleculeRecord, name: &str) -> Option<f64> {
        self.column_index(name).and_then(|j| record.descriptors[j])
    }

    pub fn subclass_counts(&self) -> BTreeMap<SubclassLabel, usize> {
        let mut counts = BTreeMap::new();
        for s in self.records.iter().filter_map(|r| r.subclass) {
            *counts.entry(s).or_insert(0) += 1;
        }
        counts
    }

    fn warn(&mut self, category: impl Into<String>) {
        *self.warnings.entry(category.into()).or_insert(0) += 1;
    }

    fn with_records(&self, records: Vec<MoleculeRecord>) -> Self {
        Self {
            records,
            descriptor_columns: self.descriptor_columns.clone(),
            column_stats: self.column_stats.clone(),
            parent_codes: self.parent_codes.clone(),
            warnings: self.warnings.clone(),
            expanded: self.expanded,
            has_taxa_source: self.has_taxa_source,
            has_bcut_source: self.has_bcut_source,
            has_sugar_source: self.has_sugar_source,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Null,
    Text(String),
    Number(f64),
}

impl Cell {
    fn text(&self) -> Option<String> {
        match self {
            Cell::Null => None,
            Cell::Text(s) => Some(s.clone()),
            Cell::Number(v) => Some(v.to_string()),
        }
    }

    fn number(&self) -> Option<f64> {
        match self {
            Cell::Null => None,
            Cell::Number(v) => Some(*v),
            Cell::Text(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

fn read_csv_table<R: Read>(source: R, schema: &SchemaConfig) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Schema("empty header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Row {
                row: i + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .map(|s| {
                    if schema.is_null(s) {
                        Cell::Null
                    } else {
                        Cell::Text(s.to_string())
                    }
                })
                .collect(),
        );
    }
    Ok(RawTable { header, rows })
}

fn read_jsonl_table<R: Read>(mut source: R, schema: &SchemaConfig) -> Result<RawTable> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut header: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut objects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Row {
            row: i + 1,
            message: format!("invalid JSON: {e}"),
        })?;
        let serde_json::Value::Object(map) = value else {
            return Err(Error::Row {
                row: i + 1,
                message: "expected a JSON object".into(),
            });
        };
        for key in map.keys() {
            if !index.contains_key(key) {
                index.insert(key.clone(), header.len());
                header.push(key.clone());
            }
        }
        objects.push(map);
    }
    let rows = objects
        .into_iter()
        .map(|map| {
            let mut row = vec![Cell::Null; header.len()];
            for (k, v) in map {
                row[index[&k]] = json_cell(v, schema);
            }
            row
        })
        .collect();
    Ok(RawTable { header, rows })
}

fn json_cell(v: serde_json::Value, schema: &SchemaConfig) -> Cell {
    use serde_json::Value;
    match v {
        Value::Null => Cell::Null,
        Value::Bool(b) => Cell::Number(if b { 1.0 } else { 0.0 }),
        Value::Number(n) => n.as_f64().map_or(Cell::Null, Cell::Number),
        Value::String(s) if schema.is_null(&s) => Cell::Null,
        Value::String(s) => Cell::Text(s),
        other => Cell::Text(other.to_string()),
    }
}

fn parse_flag(cell: &Cell) -> std::result::Result<Option<u8>, ()> {
    match cell {
        Cell::Null => Ok(None),
        Cell::Number(v) if *v == 0.0 => Ok(Some(0)),
        Cell::Number(v) if *v == 1.0 => Ok(Some(1)),
        Cell::Number(_) => Err(()),
        Cell::Text(s) => match s.trim().to_lowercase().as_str() {
            "0" | "false" | "0.0" => Ok(Some(0)),
            "1" | "true" | "1.0" => Ok(Some(1)),
            _ => Err(()),
        },
    }
}

/// Parses a CSV or JSON-lines export into records.
///
/// Every data row becomes a record. Numeric cells that do not parse, and
/// values outside their physical domain (non-positive molecular weight,
/// negative H-bond counts), become missing and are counted as warnings.
pub fn parse_dataset<R: Read>(source: R, schema: &SchemaConfig) -> Result<RecordSet> {
    schema.validate()?;
    let table = match schema.format {
        InputFormat::Csv => read_csv_table(source, schema)?,
        InputFormat::JsonLines => read_jsonl_table(source, schema)?,
    };
    build_record_set(table, schema)
}

fn build_record_set(table: RawTable, schema: &SchemaConfig) -> Result<RecordSet> {
    let RawTable { header, rows } = table;
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if pos.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate column {h:?} in header")));
        }
    }
    let require = |col: &str| -> Result<usize> {
        pos.get(col)
            .copied()
            .ok_or_else(|| Error::Schema(format!("required column {col:?} not found in header")))
    };
    let id_col = require(&schema.id_column)?;
    let super_col = require(&schema.superclass_column)?;
    let sub_col = require(&schema.subclass_column)?;
    let optional = |c: &Option<String>| c.as_deref().and_then(|c| pos.get(c).copied());
    let taxa_col = optional(&schema.taxa_column);
    let bcut_col = optional(&schema.bcut_column);
    let parent_col = optional(&schema.parent_class_column);
    let sugar_col = optional(&schema.sugar_column);

    // (canonical name, source index) in output order
    let mut numeric: Vec<(String, usize)> = Vec::new();
    for (name, col) in &schema.descriptors {
        match pos.get(col.as_str()) {
            Some(&i) => numeric.push((name.clone(), i)),
            None => log::warn!("descriptor column {col:?} ({name}) not present in source"),
        }
    }
    for col in &schema.extra_numeric {
        let i = require(col)?;
        numeric.push((col.clone(), i));
    }
    if schema.auto_numeric {
        let claimed = schema.role_columns();
        for (i, h) in header.iter().enumerate() {
            if claimed.contains(h.as_str()) {
                continue;
            }
            let mut any = false;
            let all_numeric = rows.iter().all(|r| match &r[i] {
                Cell::Null => true,
                c => {
                    any = true;
                    c.number().is_some()
                }
            });
            if any && all_numeric {
                numeric.push((h.clone(), i));
            }
        }
    }

    let mut rs = RecordSet {
        descriptor_columns: numeric.iter().map(|(n, _)| n.clone()).collect(),
        has_taxa_source: taxa_col.is_some(),
        has_bcut_source: bcut_col.is_some(),
        has_sugar_source: sugar_col.is_some(),
        ..RecordSet::default()
    };
    for (i, h) in header.iter().enumerate() {
        let nulls = rows.iter().filter(|r| r[i] == Cell::Null).count();
        rs.column_stats.insert(
            h.clone(),
            ColumnStats {
                rows: rows.len(),
                nulls,
            },
        );
    }

    let mut records = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let subclass_name = row[sub_col].text();
        let subclass = subclass_name.as_deref().and_then(SubclassLabel::parse);
        let contains_sugar = match sugar_col.map(|c| parse_flag(&row[c])) {
            None => None,
            Some(Ok(v)) => v,
            Some(Err(())) => {
                rs.warn("contains_sugar not in {0,1}; treated as missing");
                None
            }
        };
        let mut descriptors = Vec::with_capacity(numeric.len());
        for (name, i) in &numeric {
            let cell = &row[*i];
            let mut v = cell.number();
            if v.is_none() && *cell != Cell::Null {
                rs.warn(format!("unparseable value in {name}; treated as missing"));
            }
            if let Some(x) = v {
                let out_of_domain = match name.as_str() {
                    names::MOLECULAR_WEIGHT => x <= 0.0,
                    names::HBA_COUNT | names::HBD_COUNT => x < 0.0,
                    _ => false,
                };
                if out_of_domain {
                    rs.warn(format!("{name} outside its domain; treated as missing"));
                    v = None;
                }
            }
            descriptors.push(v);
        }
        let id = row[id_col].text().unwrap_or_else(|| format!("row{}", r + 1));
        records.push(MoleculeRecord {
            id,
            superclass: row[super_col].text(),
            subclass_name,
            subclass,
            taxa_text: taxa_col.and_then(|c| row[c].text()),
            bcut_raw: bcut_col.and_then(|c| row[c].text()),
            parent_class: parent_col.and_then(|c| row[c].text()),
            parent_class_code: None,
            taxa: TaxaFlags::default(),
            contains_sugar,
            descriptors,
        });
    }
    rs.records = records;
    Ok(rs)
}

/// Keeps records whose superclass matches (case-insensitively).
pub fn filter_superclass(rs: &RecordSet, superclass: &str) -> RecordSet {
    let want = squash(superclass);
    let records = rs
        .records
        .iter()
        .filter(|r| r.superclass.as_deref().is_some_and(|s| squash(s) == want))
        .cloned()
        .collect();
    rs.with_records(records)
}

/// Keeps records in `superclass` whose subclass is one of `subclasses`.
///
/// An empty result is not an error; it is recorded as a warning.
pub fn filter_taxonomy(rs: &RecordSet, superclass: &str, subclasses: &BTreeSet<SubclassLabel>) -> RecordSet {
    let mut out = filter_superclass(rs, superclass);
    out.records
        .retain(|r| r.subclass.is_some_and(|s| subclasses.contains(&s)));
    if out.records.is_empty() {
        log::warn!("taxonomy filter left no records");
        out.warn("taxonomy filter produced an empty set");
    }
    out
}

/// Drops descriptor columns whose null fraction exceeds `threshold`.
///
/// Null fractions are computed over the records currently in the set.
pub fn drop_sparse_columns(rs: &RecordSet, threshold: f64) -> Result<(RecordSet, Vec<String>)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let n = rs.records.len();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in rs.descriptor_columns.iter().enumerate() {
        let nulls = rs.records.iter().filter(|r| r.descriptors[j].is_none()).count();
        let frac = if n == 0 { 0.0 } else { nulls as f64 / n as f64 };
        if frac > threshold {
            dropped.push(name.clone());
        } else {
            keep.push(j);
        }
    }
    let mut out = rs.with_records(
        rs.records
            .iter()
            .map(|r| MoleculeRecord {
                descriptors: keep.iter().map(|&j| r.descriptors[j]).collect(),
                ..r.clone()
            })
            .collect(),
    );
    out.descriptor_columns = keep.iter().map(|&j| rs.descriptor_columns[j].clone()).collect();
    Ok((out, dropped))
}

fn parse_bcut(raw: &str) -> Option<Vec<f64>> {
    let inner = raw
        .trim()
        .trim_start_matches(['[', '(', '{'])
        .trim_end_matches([']', ')', '}']);
    inner
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_matches('"').parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

/// Expands taxa text into four flags, the BCUT array into `bcut_1..bcut_6`,
/// and encodes parent classifications as integers in first-seen order.
///
/// Idempotent: an already expanded set is returned unchanged.
pub fn expand_categoricals(rs: &RecordSet) -> RecordSet {
    if rs.expanded {
        return rs.clone();
    }
    let mut out = rs.clone();
    if !rs.has_taxa_source {
        out.warn("no taxa column declared; all taxa flags are 0");
    }
    let bcut_offset = out.descriptor_columns.len();
    if rs.has_bcut_source {
        out.descriptor_columns.extend(names::BCUT.iter().map(|s| s.to_string()));
    }
    let mut codes: HashMap<String, u32> = HashMap::new();
    let mut bad_bcut = 0usize;
    for rec in &mut out.records {
        rec.taxa = TaxaFlags::from_text(rec.taxa_text.take().as_deref());
        if rs.has_bcut_source {
            let parsed = rec.bcut_raw.take().map(|raw| parse_bcut(&raw));
            let values: [Option<f64>; 6] = match parsed {
                None => [None; 6],
                Some(Some(v)) if v.len() == 6 => std::array::from_fn(|i| Some(v[i])),
                Some(_) => {
                    bad_bcut += 1;
                    [None; 6]
                }
            };
            rec.descriptors.truncate(bcut_offset);
            rec.descriptors.extend(values);
        }
        if let Some(parent) = &rec.parent_class {
            let next = codes.len() as u32;
            let code = *codes.entry(parent.clone()).or_insert_with(|| {
                out.parent_codes.push(parent.clone());
                next
            });
            rec.parent_class_code = Some(code);
        }
    }
    if bad_bcut > 0 {
        *out.warnings
            .entry("BCUT array length != 6; values set missing".into())
            .or_insert(0) += bad_bcut;
    }
    out.expanded = true;
    out
}

const FIXED_CANONICAL: [&str; 10] = [
    "id",
    "superclass",
    "subclass",
    "parent_class",
    "parent_class_code",
    "taxa_plants",
    "taxa_marine",
    "taxa_bacteria",
    "taxa_fungi",
    "contains_sugar",
];

/// Formats a value with 17 significant digits, which round-trips exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes an expanded record set as the canonical CSV.
pub fn write_canonical<W: Write>(rs: &RecordSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FIXED_CANONICAL.to_vec();
    header.extend(rs.descriptor_columns.iter().map(String::as_str));
    w.write_record(&header)?;
    let opt = |s: &Option<String>| s.clone().unwrap_or_default();
    for r in &rs.records {
        let mut row = vec![
            r.id.clone(),
            opt(&r.superclass),
            opt(&r.subclass_name),
            opt(&r.parent_class),
            r.parent_class_code.map(|c| c.to_string()).unwrap_or_default(),
        ];
        row.extend(r.taxa.as_array().iter().map(u8::to_string));
        row.push(r.contains_sugar.map(|c| c.to_string()).unwrap_or_default());
        row.extend(r.descriptors.iter().map(|v| v.map(format_f64).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a canonical CSV written by [`write_canonical`].
///
/// Parent codes are rebuilt from the `(parent_class, parent_class_code)` pairs.
pub fn read_canonical<R: Read>(source: R) -> Result<RecordSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < FIXED_CANONICAL.len()
        || header[..FIXED_CANONICAL.len()]
            .iter()
            .zip(FIXED_CANONICAL)
            .any(|(a, b)| a != b)
    {
        return Err(Error::Schema("not a canonical dataset header".into()));
    }
    let mut rs = RecordSet {
        descriptor_columns: header[FIXED_CANONICAL.len()..].to_vec(),
        expanded: true,
        has_taxa_source: true,
        has_bcut_source: header.iter().any(|h| h == names::BCUT[0]),
        has_sugar_source: true,
        ..RecordSet::default()
    };
    let mut parent_codes: BTreeMap<u32, String> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row_no = i + 1;
        let rec = rec.map_err(|e| Error::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |j: usize| -> Option<String> {
            let s = rec.get(j).unwrap_or("");
            (!s.is_empty()).then(|| s.to_string())
        };
        let row_err = |m: String| Error::Row {
            row: row_no,
            message: m,
        };
        let parse_u8 = |j: usize| -> Result<Option<u8>> {
            field(j)
                .map(|s| match s.as_str() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(row_err(format!("{} must be 0 or 1, found {s:?}", header[j]))),
                })
                .transpose()
        };
        let flag = |j: usize| -> Result<u8> { Ok(parse_u8(j)?.unwrap_or(0)) };
        let parent_class_code = field(4)
            .map(|s| s.parse::<u32>().map_err(|e| row_err(format!("parent_class_code: {e}"))))
            .transpose()?;
        if let (Some(code), Some(name)) = (parent_class_code, field(3)) {
            parent_codes.entry(code).or_insert(name);
        }
        let subclass_name = field(2);
        let mut descriptors = Vec::with_capacity(rs.descriptor_columns.len());
        for (j, name) in header.iter().enumerate().skip(FIXED_CANONICAL.len()) {
            descriptors.push(
                field(j)
                    .map(|s| s.parse::<f64>().map_err(|e| row_err(format!("{name}: {e}"))))
                    .transpose()?,
            );
        }
        rs.records.push(MoleculeRecord {
            id: field(0).unwrap_or_default(),
            superclass: field(1),
            subclass: subclass_name.as_deref().and_then(SubclassLabel::parse),
            subclass_name,
            taxa_text: None,
            bcut_raw: None,
            parent_class: field(3),
            parent_class_code,
            taxa: TaxaFlags {
                plants: flag(5)?,
                marine: flag(6)?,
                bacteria: flag(7)?,
                fungi: flag(8)?,
            },
            contains_sugar: parse_u8(9)?,
            descriptors,
        });
    }
    rs.parent_codes = parent_codes.into_values().collect();
    Ok(rs)
}

/// Reproducibility sidecar written next to the canonical dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSidecar {
    pub schema: SchemaConfig,
    pub records: usize,
    pub descriptor_columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub parent_codes: Vec<String>,
    pub subclass_counts: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
}

impl IngestSidecar {
    pub fn new(schema: &SchemaConfig, rs: &RecordSet, dropped: &[String]) -> Self {
        Self {
            schema: schema.clone(),
            records: rs.len(),
            descriptor_columns: rs.descriptor_columns.clone(),
            dropped_columns: dropped.to_vec(),
            parent_codes: rs.parent_codes.clone(),
            subclass_counts: rs
                .subclass_counts()
                .into_iter()
                .map(|(k, v)| (k.name().to_string(), v))
                .collect(),
            warnings: rs.warnings.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "coconut_id,chemicalSuperClass,chemicalSubClass,textTaxa,bcutDescriptor,directParentClassification,contains_sugar,molecular_weight,alogp,npl_score,hBondAcceptorCount,hBondDonorCount";

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from(HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    fn parse(text: &str) -> RecordSet {
        parse_dataset(text.as_bytes(), &SchemaConfig::default()).unwrap()
    }

    const LIPIDS: &str = "Lipids and lipid-like molecules";

    fn three_rows() -> String {
        csv(&[
            r#"CNP1,Lipids and lipid-like molecules,Monoterpenoids,plants,"[1,2,3,4,5,6]",Menthanes,0,154.25,2.9,2.1,1,1"#,
            r#"CNP2,Lipids and lipid-like molecules,Triterpenoids,"marine, fungi","[1,2,3]",Oleananes,1,456.7,6.1,2.4,3,2"#,
            r#"CNP3,Organic acids,Diterpenoids,,NULL,Menthanes,NULL,NULL,1.0,0.5,2,NULL"#,
        ])
    }

    #[test]
    fn three_row_identity_parse() {
        let rs = parse(&three_rows());
        assert_eq!(rs.len(), 3);
        assert_eq!(
            rs.descriptor_columns,
            vec!["hba_count", "hbd_count", "log_p", "molecular_weight", "np_likeness"]
        );
        assert_eq!(rs.records[0].subclass, Some(SubclassLabel::Monoterpenoids));
        assert_eq!(rs.records[2].contains_sugar, None);
        assert_eq!(rs.descriptor(&rs.records[2], names::MOLECULAR_WEIGHT), None);
        assert_eq!(rs.column_stats["molecular_weight"].nulls, 1);
    }

    #[test]
    fn null_token_becomes_missing() {
        let rs = parse(&three_rows());
        assert_eq!(rs.descriptor(&rs.records[2], names::HBD_COUNT), None);
        assert_eq!(rs.descriptor(&rs.records[2], names::LOG_P), Some(1.0));
    }

    #[test]
    fn wrong_field_count_names_row() {
        let text = csv(&["a,b,c"]);
        match parse_dataset(text.as_bytes(), &SchemaConfig::default()) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let text = "x,y\n1,2\n";
        assert!(matches!(
            parse_dataset(text.as_bytes(), &SchemaConfig::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn duplicate_role_rejected() {
        let schema = SchemaConfig {
            taxa_column: Some("chemicalSubClass".into()),
            ..SchemaConfig::default()
        };
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn nonpositive_weight_is_missing() {
        let text = csv(&["A,x,Monoterpenoids,,,,0,-3,1,1,1,1"]);
        let rs = parse(&text);
        assert_eq!(rs.descriptor(&rs.records[0], names::MOLECULAR_WEIGHT), None);
        assert_eq!(rs.warnings.values().sum::<usize>(), 1);
    }

    #[test]
    fn taxonomy_filter() {
        let rs = parse(&three_rows());
        let all: BTreeSet<_> = SubclassLabel::ALL.into_iter().collect();
        let f = filter_taxonomy(&rs, LIPIDS, &all);
        assert_eq!(f.len(), 2);
        let f = filter_taxonomy(&rs, "lipids and LIPID-LIKE molecules", &BTreeSet::new());
        assert_eq!(f.len(), 0);
        assert_eq!(f.warnings.len(), 1);
    }

    #[test]
    fn sparse_columns() {
        let mut rows = Vec::new();
        for i in 0..10 {
            let hbd = if i < 8 { "NULL" } else { "1" };
            rows.push(format!("id{i},{LIPIDS},Monoterpenoids,plants,,,0,100,1,1,1,{hbd}"));
        }
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let rs = parse(&csv(&refs));
        let (kept, dropped) = drop_sparse_columns(&rs, 0.70).unwrap();
        assert_eq!(dropped, vec!["hbd_count"]);
        assert_eq!(kept.len(), 10);
        assert!(kept.column_index("hbd_count").is_none());
        assert!(kept.column_index("molecular_weight").is_some());

        let (_, dropped) = drop_sparse_columns(&rs, 0.0).unwrap();
        assert_eq!(dropped, vec!["hbd_count"]);
        assert!(drop_sparse_columns(&rs, 1.5).is_err());
    }

    #[test]
    fn taxa_flags() {
        assert_eq!(TaxaFlags::from_text(Some("plants")).as_array(), [1, 0, 0, 0]);
        assert_eq!(TaxaFlags::from_text(None).as_array(), [0, 0, 0, 0]);
        assert_eq!(TaxaFlags::from_text(Some("[Marine, FUNGI]")).as_array(), [0, 1, 0, 1]);
    }

    #[test]
    fn expansion() {
        let rs = expand_categoricals(&parse(&three_rows()));
        assert!(rs.expanded);
        let b = rs.column_index("bcut_1").unwrap();
        assert_eq!(rs.records[0].descriptors[b..], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].map(Some));
        assert_eq!(rs.records[1].descriptors[b..], [None; 6]);
        assert_eq!(rs.warnings["BCUT array length != 6; values set missing"], 1);
        assert_eq!(rs.records[1].taxa.as_array(), [0, 1, 0, 1]);
        assert_eq!(rs.parent_codes, vec!["Menthanes", "Oleananes"]);
        assert_eq!(rs.records[2].parent_class_code, Some(0));
        assert_eq!(expand_categoricals(&rs), rs);
    }

    #[test]
    fn parent_codes_cover_range() {
        let rows: Vec<String> = (0..222)
            .map(|i| format!("id{i},{LIPIDS},Monoterpenoids,,,P{},0,100,1,1,1,1", i % 111))
            .collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let rs = expand_categoricals(&parse(&csv(&refs)));
        let codes: BTreeSet<u32> = rs.records.iter().filter_map(|r| r.parent_class_code).collect();
        assert_eq!(codes, (0..=110).collect());
        assert_eq!(rs.parent_codes.len(), 111);
    }

    #[test]
    fn jsonl_input() {
        let schema = SchemaConfig {
            format: InputFormat::JsonLines,
            ..SchemaConfig::default()
        };
        let text = r#"{"coconut_id":"A","chemicalSuperClass":"L","chemicalSubClass":"Terpene lactones","bcutDescriptor":[1,2,3,4,5,6],"molecular_weight":200.5,"contains_sugar":true}
{"coconut_id":"B","chemicalSuperClass":"L","chemicalSubClass":"terpene_glycosides","molecular_weight":null}"#;
        let rs = expand_categoricals(&parse_dataset(text.as_bytes(), &schema).unwrap());
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.records[0].subclass, Some(SubclassLabel::TerpeneLactones));
        assert_eq!(rs.records[1].subclass, Some(SubclassLabel::TerpeneGlycosides));
        assert_eq!(rs.records[0].contains_sugar, Some(1));
        assert_eq!(rs.descriptor(&rs.records[0], "bcut_6"), Some(6.0));
        assert_eq!(rs.descriptor(&rs.records[1], names::MOLECULAR_WEIGHT), None);
        assert!(parse_dataset("{not json".as_bytes(), &schema).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let rs = expand_categoricals(&parse(&three_rows()));
        let mut buf = Vec::new();
        write_canonical(&rs, &mut buf).unwrap();
        let back = read_canonical(buf.as_slice()).unwrap();
        assert_eq!(back.records, rs.records);
        assert_eq!(back.parent_codes, rs.parent_codes);
        assert_eq!(back.descriptor_columns, rs.descriptor_columns);
    }

    #[test]
    fn subclass_parse_is_lenient() {
        assert_eq!(
            SubclassLabel::parse("TRITERPENOIDS"),
            Some(SubclassLabel::Triterpenoids)
        );
        assert_eq!(
            SubclassLabel::parse("TerpeneGlycosides"),
            Some(SubclassLabel::TerpeneGlycosides)
        );
        assert_eq!(SubclassLabel::parse("Steroids"), None);
        let mut sorted = SubclassLabel::ALL.map(|s| s.name());
        sorted.sort_unstable();
        assert_eq!(sorted, SubclassLabel::ALL.map(|s| s.name()));
    }
}

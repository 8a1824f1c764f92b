//! CSV ingestion, schema-role mapping and per-entity sequences.
//!
//! A [`TransactionTable`] is an immutable columnar view of a CSV file. Numeric
//! columns are stored as `f64` with `NaN` marking a missing (empty) cell;
//! categorical columns are interned to `u32` codes in first-appearance order,
//! so loading the same file twice yields identical tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Pseudo column name for `account_age_col` meaning "derive age from the
/// entity's first-seen timestamp".
pub const FIRST_SEEN: &str = "@first_seen";

/// Code used for a missing categorical cell.
pub const MISSING_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "num" => Ok(ColumnKind::Numeric),
            "categorical" | "cat" => Ok(ColumnKind::Categorical),
            other => Err(Error::Config(format!("unknown column kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgeUnit {
    #[default]
    Days,
    Seconds,
}

impl AgeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            AgeUnit::Days => 86_400.0,
            AgeUnit::Seconds => 1.0,
        }
    }
}

/// Maps CSV columns onto the roles the metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub timestamp_col: String,
    pub entity_col: Option<String>,
    pub class_col: String,
    pub amount_col: Option<String>,
    pub attribute_cols: Vec<String>,
    pub merchant_col: Option<String>,
    pub payment_method_col: Option<String>,
    pub account_age_col: Option<String>,
    pub account_age_unit: AgeUnit,
    pub status_col: Option<String>,
    pub failed_status_values: Vec<String>,
    pub ip_col: Option<String>,
    pub column_kinds: BTreeMap<String, ColumnKind>,
}

impl SchemaConfig {
    pub fn new(timestamp_col: impl Into<String>, class_col: impl Into<String>) -> Self {
        SchemaConfig {
            timestamp_col: timestamp_col.into(),
            entity_col: None,
            class_col: class_col.into(),
            amount_col: None,
            attribute_cols: Vec::new(),
            merchant_col: None,
            payment_method_col: None,
            account_age_col: None,
            account_age_unit: AgeUnit::Days,
            status_col: None,
            failed_status_values: vec!["failed".into(), "declined".into()],
            ip_col: None,
            column_kinds: BTreeMap::new(),
        }
    }

    pub fn with_entity(mut self, col: impl Into<String>) -> Self {
        self.entity_col = Some(col.into());
        self
    }

    /// Parse the flat `key = value` schema format. Blank lines and lines
    /// starting with `#` are ignored; list values are comma separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
        }

        let opt = |kv: &mut BTreeMap<String, String>, k: &str| {
            kv.remove(k).filter(|v| !v.is_empty())
        };
        let list = |s: Option<String>| -> Vec<String> {
            s.map(|s| {
                s.split(',')
                    .map(|x| x.trim().to_string())
                    .filter(|x| !x.is_empty())
                    .collect()
            })
            .unwrap_or_default()
        };

        let timestamp_col = opt(&mut kv, "timestamp_col")
            .ok_or_else(|| Error::Config("timestamp_col is required".into()))?;
        let class_col = opt(&mut kv, "class_col")
            .ok_or_else(|| Error::Config("class_col is required".into()))?;
        let mut schema = SchemaConfig::new(timestamp_col, class_col);
        schema.entity_col = opt(&mut kv, "entity_col");
        schema.amount_col = opt(&mut kv, "amount_col");
        schema.attribute_cols = list(opt(&mut kv, "attribute_cols"));
        schema.merchant_col = opt(&mut kv, "merchant_col");
        schema.payment_method_col = opt(&mut kv, "payment_method_col");
        schema.account_age_col = opt(&mut kv, "account_age_col");
        if let Some(unit) = opt(&mut kv, "account_age_unit") {
            schema.account_age_unit = match unit.to_ascii_lowercase().as_str() {
                "days" | "d" => AgeUnit::Days,
                "seconds" | "s" => AgeUnit::Seconds,
                other => return Err(Error::Config(format!("unknown account_age_unit {other:?}"))),
            };
        }
        schema.status_col = opt(&mut kv, "status_col");
        if let Some(v) = opt(&mut kv, "failed_status_values") {
            schema.failed_status_values = list(Some(v));
        }
        schema.ip_col = opt(&mut kv, "ip_col");
        for item in list(opt(&mut kv, "column_kinds")) {
            let (name, kind) = item
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("column_kinds entry {item:?} needs name:kind")))?;
            schema
                .column_kinds
                .insert(name.trim().to_string(), kind.parse()?);
        }
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown schema key {k:?}")));
        }
        schema.check_roles()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Render back to the key-value format accepted by [`SchemaConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &str| out.push_str(&format!("{k} = {v}\n"));
        put("timestamp_col", &self.timestamp_col);
        put("class_col", &self.class_col);
        let opts = [
            ("entity_col", &self.entity_col),
            ("amount_col", &self.amount_col),
            ("merchant_col", &self.merchant_col),
            ("payment_method_col", &self.payment_method_col),
            ("account_age_col", &self.account_age_col),
            ("status_col", &self.status_col),
            ("ip_col", &self.ip_col),
        ];
        for (k, v) in opts {
            if let Some(v) = v {
                put(k, v);
            }
        }
        if !self.attribute_cols.is_empty() {
            put("attribute_cols", &self.attribute_cols.join(", "));
        }
        put(
            "account_age_unit",
            match self.account_age_unit {
                AgeUnit::Days => "days",
                AgeUnit::Seconds => "seconds",
            },
        );
        put("failed_status_values", &self.failed_status_values.join(", "));
        if !self.column_kinds.is_empty() {
            let kinds: Vec<String> = self
                .column_kinds
                .iter()
                .map(|(n, k)| {
                    format!(
                        "{n}:{}",
                        match k {
                            ColumnKind::Numeric => "numeric",
                            ColumnKind::Categorical => "categorical",
                        }
                    )
                })
                .collect();
            put("column_kinds", &kinds.join(", "));
        }
        out
    }

    /// Single-valued role columns paired with the kind they must have.
    fn role_columns(&self) -> Vec<(&str, &str, ColumnKind)> {
        let mut roles = vec![
            ("timestamp_col", self.timestamp_col.as_str(), ColumnKind::Numeric),
            ("class_col", self.class_col.as_str(), ColumnKind::Numeric),
        ];
        let optional = [
            ("entity_col", &self.entity_col, ColumnKind::Categorical),
            ("amount_col", &self.amount_col, ColumnKind::Numeric),
            ("merchant_col", &self.merchant_col, ColumnKind::Categorical),
            ("payment_method_col", &self.payment_method_col, ColumnKind::Categorical),
            ("account_age_col", &self.account_age_col, ColumnKind::Numeric),
            ("status_col", &self.status_col, ColumnKind::Categorical),
            ("ip_col", &self.ip_col, ColumnKind::Categorical),
        ];
        for (role, col, kind) in optional {
            if let Some(c) = col {
                if c != FIRST_SEEN {
                    roles.push((role, c.as_str(), kind));
                }
            }
        }
        roles
    }

    /// No column may serve two single-valued roles. Attribute columns may
    /// coincide with `ip_col` (an IP is both a graph attribute and a
    /// velocity feature) but not with the core roles.
    pub fn check_roles(&self) -> Result<()> {
        let roles = self.role_columns();
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (role, col, _) in &roles {
            if seen.insert(col, role).is_some() {
                return Err(Error::DuplicateRole(col.to_string()));
            }
        }
        let mut attrs: HashMap<&str, ()> = HashMap::new();
        for a in &self.attribute_cols {
            if attrs.insert(a, ()).is_some() {
                return Err(Error::DuplicateRole(a.clone()));
            }
            if let Some(role) = seen.get(a.as_str()) {
                if *role != "ip_col" {
                    return Err(Error::DuplicateRole(a.clone()));
                }
            }
        }
        Ok(())
    }

    /// Every column name the schema refers to.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .role_columns()
            .into_iter()
            .map(|(_, c, _)| c.to_string())
            .collect();
        cols.extend(self.attribute_cols.iter().cloned());
        cols.extend(self.column_kinds.keys().cloned());
        cols.sort();
        cols.dedup();
        cols
    }

    /// Kind forced by a role, if any.
    fn forced_kind(&self, name: &str) -> Option<ColumnKind> {
        if let Some((_, _, k)) = self.role_columns().into_iter().find(|(_, c, _)| *c == name) {
            return Some(k);
        }
        if self.attribute_cols.iter().any(|a| a == name) {
            return Some(ColumnKind::Categorical);
        }
        self.column_kinds.get(name).copied()
    }

    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex_digest(&json)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    codes: Vec<u32>,
    levels: Vec<String>,
}

impl CategoricalColumn {
    pub fn from_values<S: AsRef<str>>(values: &[Option<S>]) -> Self {
        let mut interner = Interner::default();
        let codes = values
            .iter()
            .map(|v| match v {
                Some(s) => interner.intern(s.as_ref()),
                None => MISSING_CODE,
            })
            .collect();
        CategoricalColumn {
            codes,
            levels: interner.levels,
        }
    }

    pub fn from_codes(codes: Vec<u32>, levels: Vec<String>) -> Result<Self> {
        if codes
            .iter()
            .any(|&c| c != MISSING_CODE && c as usize >= levels.len())
        {
            return Err(Error::InvalidArgument("categorical code out of range".into()));
        }
        Ok(CategoricalColumn { codes, levels })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn get(&self, row: usize) -> Option<&str> {
        match self.codes[row] {
            MISSING_CODE => None,
            c => Some(self.levels[c as usize].as_str()),
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum Column {
    /// `NaN` marks a missing cell.
    Numeric(Vec<f64>),
    Categorical(CategoricalColumn),
}

/// Numeric cells compare bitwise, so two missing cells are equal.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Column::Numeric(a), Column::Numeric(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Column::Categorical(a), Column::Categorical(b)) => a == b,
            _ => false,
        }
    }
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&CategoricalColumn> {
        match self {
            Column::Categorical(c) => Some(c),
            Column::Numeric(_) => None,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(c) => Column::Categorical(CategoricalColumn {
                codes: rows.iter().map(|&r| c.codes[r]).collect(),
                levels: c.levels.clone(),
            }),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) if v[row].is_nan() => String::new(),
            Column::Numeric(v) => format!("{}", v[row]),
            Column::Categorical(c) => c.get(row).unwrap_or("").to_string(),
        }
    }
}

#[derive(Default)]
struct Interner {
    map: HashMap<String, u32>,
    levels: Vec<String>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&c) = self.map.get(s) {
            return c;
        }
        let c = self.levels.len() as u32;
        self.levels.push(s.to_string());
        self.map.insert(s.to_string(), c);
        c
    }
}

/// Row count plus a content hash over every column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n_rows: usize,
    pub column_hash: String,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = &self.column_hash[..self.column_hash.len().min(16)];
        write!(f, "{}rows:{}", self.n_rows, short)
    }
}

/// Immutable, validated columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionTable {
    n_rows: usize,
    columns: IndexMap<String, Column>,
    schema: SchemaConfig,
}

impl TransactionTable {
    /// Build a table from already-typed columns, checking every invariant a
    /// loaded table satisfies.
    pub fn from_columns(schema: SchemaConfig, columns: IndexMap<String, Column>) -> Result<Self> {
        schema.check_roles()?;
        let n_rows = columns.values().next().map(Column::len).unwrap_or(0);
        if columns.values().any(|c| c.len() != n_rows) {
            return Err(Error::InvalidArgument("columns have different lengths".into()));
        }
        for name in schema.referenced_columns() {
            let col = columns
                .get(&name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            if let Some(kind) = schema.forced_kind(&name) {
                if col.kind() != kind {
                    return Err(Error::Config(format!(
                        "column {name:?} must be {kind:?} for its role"
                    )));
                }
            }
        }
        let ts = columns[&schema.timestamp_col].as_numeric().unwrap();
        for (row, &t) in ts.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidTimestamp {
                    row,
                    value: format!("{t}"),
                });
            }
        }
        let cls = columns[&schema.class_col].as_numeric().unwrap();
        for (row, &c) in cls.iter().enumerate() {
            if c != 0.0 && c != 1.0 {
                return Err(Error::NonBinaryClass {
                    column: schema.class_col.clone(),
                    row,
                    value: format!("{c}"),
                });
            }
        }
        Ok(TransactionTable {
            n_rows,
            columns,
            schema,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn schema(&self) -> &SchemaConfig {
        &self.schema
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.columns.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::MissingColumn(name.into()))?
            .as_numeric()
            .ok_or_else(|| Error::Config(format!("column {name:?} is not numeric")))
    }

    pub fn categorical(&self, name: &str) -> Result<&CategoricalColumn> {
        self.column(name)
            .ok_or_else(|| Error::MissingColumn(name.into()))?
            .as_categorical()
            .ok_or_else(|| Error::Config(format!("column {name:?} is not categorical")))
    }

    pub fn timestamps(&self) -> &[f64] {
        self.numeric(&self.schema.timestamp_col).expect("validated")
    }

    pub fn is_fraud(&self, row: usize) -> bool {
        self.numeric(&self.schema.class_col).expect("validated")[row] == 1.0
    }

    pub fn fraud_rate(&self) -> f64 {
        if self.n_rows == 0 {
            return 0.0;
        }
        let cls = self.numeric(&self.schema.class_col).expect("validated");
        cls.iter().filter(|&&c| c == 1.0).count() as f64 / self.n_rows as f64
    }

    pub fn entity_column(&self) -> Option<&CategoricalColumn> {
        self.schema
            .entity_col
            .as_deref()
            .and_then(|c| self.column(c))
            .and_then(Column::as_categorical)
    }

    /// Table restricted to `rows` (in the given order), same schema and levels.
    pub fn select_rows(&self, rows: &[usize]) -> TransactionTable {
        TransactionTable {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.select(rows)))
                .collect(),
            schema: self.schema.clone(),
        }
    }

    /// Copy with `column` added (or replaced) and bound to the entity role.
    pub fn with_entity_column(&self, name: &str, column: CategoricalColumn) -> Result<Self> {
        if column.len() != self.n_rows {
            return Err(Error::InvalidArgument("entity column length mismatch".into()));
        }
        let mut columns = self.columns.clone();
        columns.insert(name.to_string(), Column::Categorical(column));
        let mut schema = self.schema.clone();
        schema.entity_col = Some(name.to_string());
        schema.column_kinds.remove(name);
        TransactionTable::from_columns(schema, columns)
    }

    /// Copy with the entity role removed (the column itself is kept).
    pub fn without_entity_role(&self) -> Self {
        let mut t = self.clone();
        t.schema.entity_col = None;
        t
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        h.update((self.n_rows as u64).to_le_bytes());
        for (name, col) in &self.columns {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            match col {
                Column::Numeric(v) => {
                    h.update([0u8]);
                    for x in v {
                        let bits = if x.is_nan() { u64::MAX } else { x.to_bits() };
                        h.update(bits.to_le_bytes());
                    }
                }
                Column::Categorical(c) => {
                    h.update([1u8]);
                    for l in &c.levels {
                        h.update((l.len() as u64).to_le_bytes());
                        h.update(l.as_bytes());
                    }
                    for code in &c.codes {
                        h.update(code.to_le_bytes());
                    }
                }
            }
        }
        Fingerprint {
            n_rows: self.n_rows,
            column_hash: to_hex(&h.finalize()),
        }
    }

    /// Write as CSV. Each `comments` line is emitted first, prefixed by `# `.
    pub fn write_csv(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        let path = path.as_ref();
        let mut buf: Vec<u8> = Vec::new();
        for c in comments {
            buf.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let csv_err = |e: csv::Error| Error::Csv {
                path: path.to_path_buf(),
                message: e.to_string(),
            };
            w.write_record(self.columns.keys()).map_err(csv_err)?;
            let cols: Vec<&Column> = self.columns.values().collect();
            for row in 0..self.n_rows {
                w.write_record(cols.iter().map(|c| c.cell(row))).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if headers.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    Ok(headers.iter().map(|h| h.trim().to_string()).collect())
}

/// Column names of a CSV file's header row.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    read_header(path.as_ref())
}

enum Builder {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>, Interner),
}

/// Load a CSV and validate it against `schema`.
pub fn load_table(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<TransactionTable> {
    let path = path.as_ref();
    schema.check_roles()?;
    let header = read_header(path)?;
    for col in schema.referenced_columns() {
        if !header.contains(&col) {
            return Err(Error::MissingColumn(col));
        }
    }
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    // First pass only when some column's kind must be inferred: numeric iff
    // every non-empty value parses as a finite number.
    let mut kinds: Vec<Option<ColumnKind>> =
        header.iter().map(|h| schema.forced_kind(h)).collect();
    if kinds.iter().any(Option::is_none) {
        let mut numeric_ok: Vec<bool> = vec![true; header.len()];
        let mut any_value: Vec<bool> = vec![false; header.len()];
        let mut rdr = csv_reader(path)?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            for (i, v) in rec.iter().enumerate() {
                if kinds[i].is_some() || !numeric_ok[i] || v.trim().is_empty() {
                    continue;
                }
                any_value[i] = true;
                if parse_number(v).is_none() {
                    numeric_ok[i] = false;
                }
            }
        }
        for i in 0..header.len() {
            if kinds[i].is_none() {
                kinds[i] = Some(if numeric_ok[i] && any_value[i] {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                });
            }
        }
    }

    let mut builders: Vec<Builder> = kinds
        .iter()
        .map(|k| match k.expect("resolved") {
            ColumnKind::Numeric => Builder::Numeric(Vec::new()),
            ColumnKind::Categorical => Builder::Categorical(Vec::new(), Interner::default()),
        })
        .collect();
    let ts_idx = header.iter().position(|h| *h == schema.timestamp_col).unwrap();
    let class_idx = header.iter().position(|h| *h == schema.class_col).unwrap();

    let mut rdr = csv_reader(path)?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (i, raw) in rec.iter().enumerate() {
            let v = raw.trim();
            match &mut builders[i] {
                Builder::Numeric(vals) => {
                    let x = if v.is_empty() {
                        f64::NAN
                    } else {
                        match parse_number(v) {
                            Some(x) => x,
                            None if i == ts_idx => {
                                return Err(Error::InvalidTimestamp {
                                    row,
                                    value: v.into(),
                                })
                            }
                            None if i == class_idx => {
                                return Err(Error::NonBinaryClass {
                                    column: schema.class_col.clone(),
                                    row,
                                    value: v.into(),
                                })
                            }
                            None => {
                                return Err(Error::NonNumeric {
                                    column: header[i].clone(),
                                    row,
                                    value: v.into(),
                                })
                            }
                        }
                    };
                    if i == ts_idx && (x.is_nan() || x < 0.0) {
                        return Err(Error::InvalidTimestamp {
                            row,
                            value: v.into(),
                        });
                    }
                    if i == class_idx && x != 0.0 && x != 1.0 {
                        return Err(Error::NonBinaryClass {
                            column: schema.class_col.clone(),
                            row,
                            value: v.into(),
                        });
                    }
                    vals.push(x);
                }
                Builder::Categorical(codes, interner) => {
                    codes.push(if v.is_empty() {
                        MISSING_CODE
                    } else {
                        interner.intern(v)
                    });
                }
            }
        }
    }

    let columns: IndexMap<String, Column> = header
        .into_iter()
        .zip(builders)
        .map(|(name, b)| {
            let col = match b {
                Builder::Numeric(v) => Column::Numeric(v),
                Builder::Categorical(codes, interner) => Column::Categorical(CategoricalColumn {
                    codes,
                    levels: interner.levels,
                }),
            };
            (name, col)
        })
        .collect();
    TransactionTable::from_columns(schema.clone(), columns)
}

/// Load a synthetic table. If the schema's entity column is absent from the
/// file header, the entity role is dropped instead of failing.
pub fn load_synthetic(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<TransactionTable> {
    let path = path.as_ref();
    let mut schema = schema.clone();
    if let Some(e) = &schema.entity_col {
        if !read_header(path)?.contains(e) {
            schema.entity_col = None;
        }
    }
    load_table(path, &schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    NonFraud,
    Fraud,
}

impl EntityClass {
    pub fn label(self) -> u8 {
        match self {
            EntityClass::NonFraud => 0,
            EntityClass::Fraud => 1,
        }
    }
}

/// How per-transaction labels map to an entity's class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    /// An entity is fraud if any of its rows is fraud.
    #[default]
    AnyFraud,
    /// Mixed-label entities are an error.
    Strict,
    /// Each (entity, label) pair is its own sequence.
    SplitByClass,
}

impl std::str::FromStr for ClassMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any-fraud" | "any_fraud" => Ok(ClassMode::AnyFraud),
            "strict" => Ok(ClassMode::Strict),
            "split" | "split-by-class" | "split_by_class" => Ok(ClassMode::SplitByClass),
            other => Err(Error::Config(format!("unknown class mode {other:?}"))),
        }
    }
}

/// One entity's transactions in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySequence {
    /// Interned entity code, or the row index when the table has no entity
    /// column.
    pub entity_id: u32,
    pub class: EntityClass,
    pub timestamps: Vec<f64>,
    pub row_indices: Vec<usize>,
}

impl EntitySequence {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn is_fraud(&self) -> bool {
        self.class == EntityClass::Fraud
    }

    fn from_rows(entity_id: u32, class: EntityClass, mut rows: Vec<usize>, ts: &[f64]) -> Self {
        // stable: equal timestamps keep input order
        rows.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
        EntitySequence {
            entity_id,
            class,
            timestamps: rows.iter().map(|&r| ts[r]).collect(),
            row_indices: rows,
        }
    }
}

/// One sequence per distinct entity, ordered by first appearance.
pub fn build_entity_sequences(
    table: &TransactionTable,
    mode: ClassMode,
) -> Result<Vec<EntitySequence>> {
    let entity = table.entity_column().ok_or_else(|| {
        Error::Incompatible("entity sequences need an entity column".into())
    })?;
    let ts = table.timestamps();

    // rows grouped per (entity code [, class]) in first-appearance order
    let mut order: Vec<(u32, Option<bool>)> = Vec::new();
    let mut groups: HashMap<(u32, Option<bool>), Vec<usize>> = HashMap::new();
    for (row, &code) in entity.codes().iter().enumerate() {
        if code == MISSING_CODE {
            return Err(Error::InvalidArgument(format!(
                "row {row} has an empty entity value"
            )));
        }
        let key = match mode {
            ClassMode::SplitByClass => (code, Some(table.is_fraud(row))),
            _ => (code, None),
        };
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(row);
    }

    let mut out = Vec::with_capacity(order.len());
    for key in order {
        let rows = groups.remove(&key).expect("grouped");
        let n_fraud = rows.iter().filter(|&&r| table.is_fraud(r)).count();
        if mode == ClassMode::Strict && n_fraud > 0 && n_fraud < rows.len() {
            return Err(Error::MixedClass {
                entity: entity.levels()[key.0 as usize].clone(),
            });
        }
        let class = if n_fraud > 0 {
            EntityClass::Fraud
        } else {
            EntityClass::NonFraud
        };
        out.push(EntitySequence::from_rows(key.0, class, rows, ts));
    }
    Ok(out)
}

/// Entity sequences when the table has an entity column; otherwise every
/// row is its own single-transaction entity.
pub fn entity_units(table: &TransactionTable, mode: ClassMode) -> Result<Vec<EntitySequence>> {
    if table.entity_column().is_some() {
        return build_entity_sequences(table, mode);
    }
    let ts = table.timestamps();
    Ok((0..table.n_rows())
        .map(|r| EntitySequence {
            entity_id: r as u32,
            class: if table.is_fraud(r) {
                EntityClass::Fraud
            } else {
                EntityClass::NonFraud
            },
            timestamps: vec![ts[r]],
            row_indices: vec![r],
        })
        .collect())
}

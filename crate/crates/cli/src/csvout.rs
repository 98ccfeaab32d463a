//! Deterministic CSV assembly: documented columns, canonical row order,
//! shortest-roundtrip float formatting. The CSV bytes are the reproducibility
//! contract; wall-clock data only ever goes into the manifest.

/// A documented column. Every emitted column carries a description line in
/// the schema header.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: &'static str,
    pub description: &'static str,
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: Vec<Column>,
    /// (sort key, formatted cells)
    rows: Vec<(Vec<u64>, Vec<String>)>,
}

impl CsvTable {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, sort_key: Vec<u64>, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width mismatch");
        self.rows.push((sort_key, cells));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Renders the table with rows in canonical (sort key) order.
    pub fn render(&self) -> String {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::new();
        for col in &self.columns {
            out.push_str(&format!("# {}: {}\n", col.name, col.description));
        }
        let header: Vec<&str> = self.columns.iter().map(|c| c.name).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (_, cells) in rows {
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal form; empty for absent values.
pub fn fmt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn fmt_usize(v: Option<usize>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn fmt_bool(v: Option<bool>) -> String {
    match v {
        Some(true) => "true".into(),
        Some(false) => "false".into(),
        None => String::new(),
    }
}

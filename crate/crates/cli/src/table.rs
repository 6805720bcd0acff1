use crate::config::ExperimentConfig;

/// A CSV body with trailing comment notes and an optional verdict.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
    pub pass: Option<bool>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Header comment with the canonical config, an optional timestamp line,
    /// the CSV, then notes and the verdict as comments.
    pub fn render(&self, cfg: &ExperimentConfig, timestamp: Option<u64>) -> String {
        let mut out = format!("# {}\n", cfg.canonical_json());
        if let Some(ts) = timestamp {
            out.push_str(&format!("# generated_at_unix={ts}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        for n in &self.notes {
            out.push_str(&format!("# {n}\n"));
        }
        if let Some(p) = self.pass {
            out.push_str(&format!("# verdict={}\n", if p { "PASS" } else { "FAIL" }));
        }
        out
    }
}

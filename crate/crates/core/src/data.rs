//! Column-typed sample matrices: continuous system columns plus one
//! categorical context column.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator provenance carried next to a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    #[serde(default)]
    pub ground_truth_files: Vec<String>,
}

/// Immutable dataset. Column `i < n_system()` is the continuous variable
/// `X{i+1}`; column `n_system()` is the context indicator `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    system: Vec<Vec<f64>>,
    context: Vec<u32>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(system: Vec<Vec<f64>>, context: Vec<u32>) -> Result<Self> {
        let n = context.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one row".into()));
        }
        if let Some(bad) = system.iter().position(|c| c.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "column X{} has {} rows, expected {}",
                bad + 1,
                system[bad].len(),
                n
            )));
        }
        let mut names: Vec<String> = (1..=system.len()).map(|i| format!("X{i}")).collect();
        names.push("R".into());
        Ok(Dataset {
            names,
            system,
            context,
            meta: DatasetMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.context.len()
    }

    pub fn n_system(&self) -> usize {
        self.system.len()
    }

    /// Column id of the context indicator.
    pub fn context_column(&self) -> usize {
        self.system.len()
    }

    pub fn n_columns(&self) -> usize {
        self.system.len() + 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.system[i]
    }

    pub fn context(&self) -> &[u32] {
        &self.context
    }

    /// Observed context values, ascending.
    pub fn contexts(&self) -> Vec<u32> {
        self.context
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn context_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for &r in &self.context {
            *counts.entry(r).or_insert(0) += 1;
        }
        counts
    }

    /// Row indices with `R = r`.
    pub fn rows_in_context(&self, r: u32) -> Vec<usize> {
        self.context
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == r)
            .map(|(i, _)| i)
            .collect()
    }

    /// Materialized masked dataset (rows with `R = r` only).
    pub fn restrict(&self, r: u32) -> Result<Dataset> {
        let rows = self.rows_in_context(r);
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("no rows in context {r}")));
        }
        let system = self
            .system
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let context = rows.iter().map(|&i| self.context[i]).collect();
        Ok(Dataset::new(system, context)?.with_meta(self.meta.clone()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names)?;
        let mut record = Vec::with_capacity(self.n_columns());
        for row in 0..self.n_rows() {
            record.clear();
            for col in &self.system {
                record.push(col[row].to_string());
            }
            record.push(self.context[row].to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a CSV with header `X1..XD,R`. The `R` column may appear anywhere.
    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let ctx_col = headers
            .iter()
            .position(|h| h == "R")
            .ok_or_else(|| Error::Parse("missing context column \"R\"".into()))?;
        let system_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != ctx_col).collect();
        for (k, &i) in system_cols.iter().enumerate() {
            let expected = format!("X{}", k + 1);
            if headers.get(i) != Some(expected.as_str()) {
                return Err(Error::Parse(format!(
                    "expected column {expected}, found {:?}",
                    headers.get(i)
                )));
            }
        }
        let mut system = vec![Vec::new(); system_cols.len()];
        let mut context = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (k, &i) in system_cols.iter().enumerate() {
                let v: f64 = rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad float {:?}", line + 1, &rec[i])))?;
                system[k].push(v);
            }
            let r: u32 = rec[ctx_col]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad context value {:?}", line + 1, &rec[ctx_col])))?;
            context.push(r);
        }
        Dataset::new(system, context)
    }

    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let file = std::fs::File::create(csv_path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let meta_path = csv_path.with_extension("meta.json");
        std::fs::write(meta_path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(csv_path)?;
        let mut data = Dataset::read_csv(std::io::BufReader::new(file))?;
        let meta_path = csv_path.with_extension("meta.json");
        if meta_path.exists() {
            data.meta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        }
        Ok(data)
    }
}

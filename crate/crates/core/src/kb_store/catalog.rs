use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KbError, format_error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub mid: String,
    pub friendly_name: String,
    /// Link-frequency proxy; higher is more popular.
    pub popularity: f64,
}

/// Entity records keyed by mid, with a case-folded name index.
#[derive(Debug, Clone, Default)]
pub struct EntityCatalog {
    records: BTreeMap<String, EntityRecord>,
    by_folded_name: HashMap<String, Vec<String>>,
}

impl EntityCatalog {
    pub fn from_records(records: impl IntoIterator<Item = EntityRecord>) -> Result<Self, KbError> {
        let mut catalog = EntityCatalog::default();
        for r in records {
            catalog.insert(r)?;
        }
        Ok(catalog)
    }

    fn insert(&mut self, record: EntityRecord) -> Result<(), KbError> {
        if self.records.contains_key(&record.mid) {
            return Err(KbError::DuplicateMid(record.mid));
        }
        self.by_folded_name
            .entry(fold(&record.friendly_name))
            .or_default()
            .push(record.mid.clone());
        self.records.insert(record.mid.clone(), record);
        Ok(())
    }

    /// Reads `mid<TAB>friendly_name<TAB>popularity` lines.
    pub fn parse(reader: impl Read) -> Result<Self, KbError> {
        let mut catalog = EntityCatalog::default();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [mid, name, popularity] = cols[..] else {
                return Err(format_error(
                    line_no,
                    format!("expected 3 tab-separated columns, found {}", cols.len()),
                ));
            };
            if mid.is_empty() {
                return Err(format_error(line_no, "empty mid"));
            }
            if name.trim().is_empty() {
                return Err(format_error(line_no, "empty friendly name"));
            }
            let popularity: f64 = popularity
                .trim()
                .parse()
                .ok()
                .filter(|p: &f64| p.is_finite() && *p >= 0.0)
                .ok_or_else(|| format_error(line_no, format!("bad popularity `{popularity}`")))?;
            catalog.insert(EntityRecord {
                mid: mid.to_string(),
                friendly_name: name.to_string(),
                popularity,
            })?;
        }
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::parse(File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, mid: &str) -> Option<&EntityRecord> {
        self.records.get(mid)
    }

    pub fn records(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.values()
    }

    /// Records whose friendly name equals `name`, most popular first, ties by
    /// mid ascending.
    pub fn name_to_mids(&self, name: &str, case_insensitive: bool) -> Vec<&EntityRecord> {
        let mut out: Vec<&EntityRecord> = self
            .by_folded_name
            .get(&fold(name))
            .into_iter()
            .flatten()
            .map(|mid| &self.records[mid])
            .filter(|r| case_insensitive || r.friendly_name == name)
            .collect();
        out.sort_by(|a, b| {
            b.popularity
                .total_cmp(&a.popularity)
                .then_with(|| a.mid.cmp(&b.mid))
        });
        out
    }

    /// Distinct case-folded friendly names, sorted.
    pub fn folded_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.by_folded_name.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }
}

pub(crate) fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

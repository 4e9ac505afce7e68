//! Samples that annotators are shown.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use prefeval_core::{Error, Result, SystemId};
use serde::{Deserialize, Serialize};

/// One input and the outputs of each system for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogItem {
    #[serde(default)]
    pub context: Option<String>,
    pub outputs: BTreeMap<SystemId, String>,
    pub sample_id: String,
}

/// Samples in file order. Tasks for a pair use the first samples that have
/// outputs from both systems and were not yet rated for that pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleCatalog {
    items: Vec<CatalogItem>,
}

impl SampleCatalog {
    pub fn new(items: Vec<CatalogItem>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for item in &items {
            if !ids.insert(item.sample_id.as_str()) {
                return Err(Error::invalid(format!("catalog lists sample '{}' twice", item.sample_id)));
            }
        }
        Ok(SampleCatalog { items })
    }

    /// Read a JSON Lines catalog, one [`CatalogItem`] per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let item = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            items.push(item);
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    /// Samples rateable for `a` vs `b`, in file order.
    pub fn for_pair<'a>(&'a self, a: &'a SystemId, b: &'a SystemId) -> impl Iterator<Item = &'a CatalogItem> + 'a {
        self.items
            .iter()
            .filter(move |it| it.outputs.contains_key(a) && it.outputs.contains_key(b))
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Dialog;

/// Per-domain sets of legal slot keys, scanned from a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub domains: BTreeMap<String, BTreeSet<String>>,
}

impl SchemaCatalog {
    pub fn schema(&self, domain: &str) -> Option<&BTreeSet<String>> {
        self.domains.get(domain)
    }

    /// Target schema for a turn's domain. Turns without a domain, or whose
    /// domain is unknown, fall back to the union of every known key.
    pub fn target_schema(&self, domain: Option<&str>) -> BTreeSet<String> {
        match domain.and_then(|d| self.domains.get(d)) {
            Some(keys) => keys.clone(),
            None => self.domains.values().flatten().cloned().collect(),
        }
    }

    pub fn merge(&mut self, other: &SchemaCatalog) {
        for (domain, keys) in &other.domains {
            self.domains
                .entry(domain.clone())
                .or_default()
                .extend(keys.iter().cloned());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }
}

pub fn build_schema_catalog(dialogs: &[Dialog]) -> SchemaCatalog {
    let mut catalog = SchemaCatalog::default();
    for turn in dialogs.iter().flat_map(|d| &d.turns) {
        let Some(domain) = &turn.domain else { continue };
        let keys = catalog.domains.entry(domain.clone()).or_default();
        for slot in turn.slots.iter().chain(&turn.references) {
            keys.insert(slot.key.clone());
        }
    }
    catalog.domains.retain(|_, keys| !keys.is_empty());
    catalog
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::fixtures::demo_dialog;

    fn set(keys: &[&str]) -> BTreeSet<String> {
        keys.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn demo_catalog() {
        let c = build_schema_catalog(&[demo_dialog()]);
        assert_eq!(c.domains.len(), 3);
        assert_eq!(c.schema("Weather").unwrap(), &set(&["WeatherLocation", "Temperature"]));
        assert_eq!(c.schema("LocalSearch").unwrap(), &set(&["PlaceType", "Entity", "City"]));
        assert_eq!(c.schema("Traffic").unwrap(), &set(&["Place", "Town"]));
    }

    #[test]
    fn empty_corpus_gives_empty_catalog() {
        assert!(build_schema_catalog(&[]).is_empty());
    }

    #[test]
    fn same_domain_keys_are_unioned() {
        let a = demo_dialog();
        let mut b = demo_dialog();
        b.turns[0].slots[0].key = "Date".into();
        let c = build_schema_catalog(&[a, b]);
        assert_eq!(
            c.schema("Weather").unwrap(),
            &set(&["WeatherLocation", "Temperature", "Date"])
        );
    }
}

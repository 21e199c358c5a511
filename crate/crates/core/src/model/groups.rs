use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageGroup {
    pub name: String,
    pub languages: Vec<String>,
}

/// Assignment of languages to decoder heads; head `m` serves group `m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageGroups {
    pub groups: Vec<LanguageGroup>,
}

impl LanguageGroups {
    pub fn new(groups: &[(&str, &[&str])]) -> Result<Self> {
        let g = Self {
            groups: groups
                .iter()
                .map(|(name, langs)| LanguageGroup {
                    name: name.to_string(),
                    languages: langs.iter().map(|l| l.to_string()).collect(),
                })
                .collect(),
        };
        g.validate()?;
        Ok(g)
    }

    /// One group holding every language (joint and monolingual models).
    pub fn single(langs: &[String]) -> Self {
        Self {
            groups: vec![LanguageGroup {
                name: "all".into(),
                languages: langs.to_vec(),
            }],
        }
    }

    /// The six multi-head groups of the 51-language setup.
    pub fn paper() -> Self {
        Self::new(&[
            (
                "Latin",
                &[
                    "af", "ca", "da", "de", "en", "en_in", "es", "et", "fi", "fr_ca", "fr_fr", "hu", "it", "lt",
                    "nl_be", "nl_nl", "pt_br", "pt_pt", "ro", "sq", "sv", "sw",
                ],
            ),
            ("Balto-Slavic", &["cs", "hr", "lv", "nb", "pl", "sk", "sl"]),
            ("Indic", &["bn", "hi", "kn", "mr", "si", "ta"]),
            (
                "Perso-Arabic",
                &["am", "ar_eg", "ar_ma", "ar_msa", "ar_sa", "he", "ps", "ur"],
            ),
            ("Cyrillic", &["bg", "mk", "ru", "sr", "uk"]),
            ("Misc", &["hy", "ja", "ko"]),
        ])
        .expect("static table is consistent")
    }

    /// Script groups of the synthetic toy languages.
    pub fn toy() -> Self {
        Self::new(&[("latn", &["la", "lb", "lc"]), ("cyrl", &["ca", "cb"])]).expect("static table is consistent")
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("language groups: need at least one group".into()));
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for g in &self.groups {
            if g.languages.is_empty() {
                return Err(Error::Config(format!("language groups: group '{}' is empty", g.name)));
            }
            for l in &g.languages {
                if let Some(prev) = owner.insert(l, &g.name) {
                    return Err(Error::Config(format!(
                        "language groups: '{l}' is in both '{prev}' and '{}'",
                        g.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Errors unless every language in `langs` belongs to some group.
    pub fn check_covers(&self, langs: &[String]) -> Result<()> {
        for l in langs {
            self.route_head(l)?;
        }
        Ok(())
    }

    pub fn route_head(&self, lang: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.languages.iter().any(|l| l == lang))
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    /// Member languages of head `m`.
    pub fn members(&self, m: usize) -> &[String] {
        &self.groups[m].languages
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_routing() {
        let g = LanguageGroups::paper();
        assert_eq!(g.len(), 6);
        assert_eq!(g.groups[g.route_head("hi").unwrap()].name, "Indic");
        assert_eq!(g.groups[g.route_head("ru").unwrap()].name, "Cyrillic");
        assert_eq!(g.groups[g.route_head("ja").unwrap()].name, "Misc");
        assert!(matches!(g.route_head("xx"), Err(Error::UnknownLanguage(_))));
        let total: usize = g.groups.iter().map(|x| x.languages.len()).sum();
        assert_eq!(total, 51);
    }

    #[test]
    fn rejects_overlap_and_empty() {
        assert!(LanguageGroups::new(&[("a", &["x"]), ("b", &["x"])]).is_err());
        assert!(LanguageGroups::new(&[("a", &[])]).is_err());
        assert!(LanguageGroups::new(&[]).is_err());
        let g = LanguageGroups::toy();
        assert!(g.check_covers(&["la".into(), "cb".into()]).is_ok());
        assert!(g.check_covers(&["ld".into()]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = LanguageGroups::toy();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<LanguageGroups>(&s).unwrap(), g);
    }
}

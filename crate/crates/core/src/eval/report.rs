use std::collections::BTreeMap;

use babel_numerics::Tensor;
use serde::{Deserialize, Serialize};

use super::relative_change;
use crate::corpus::{MetricKind, ResourceCategory};
use crate::error::{json_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageResult {
    pub lang: String,
    pub metric_kind: MetricKind,
    pub rate: f64,
    pub baseline_rate: Option<f64>,
    pub rel_change_pct: Option<f64>,
    pub category: ResourceCategory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: ResourceCategory,
    pub n_languages: usize,
    pub mean_rate: Option<f64>,
    /// Unweighted mean over languages that have a relative change.
    pub mean_rel_change_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub config_hash: String,
    pub languages: Vec<LanguageResult>,
    /// Always one row per resource category, high to low.
    pub categories: Vec<CategorySummary>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-language rates with optional relative change against `baseline`,
/// summarized per resource category. A language gets a relative change only
/// when the baseline covers it with a positive rate.
pub fn aggregate_report(
    rates: &[(String, MetricKind, f64)],
    categories: &BTreeMap<String, ResourceCategory>,
    baseline: Option<&BTreeMap<String, f64>>,
    split: &str,
    config_hash: &str,
) -> Result<EvalReport> {
    let mut languages = Vec::with_capacity(rates.len());
    for (lang, kind, rate) in rates {
        let category = *categories
            .get(lang)
            .ok_or_else(|| Error::Eval(format!("no resource category for '{lang}'")))?;
        let baseline_rate = baseline.and_then(|b| b.get(lang).copied());
        let rel_change_pct = baseline_rate
            .filter(|&b| b > 0.0)
            .map(|b| relative_change(b, *rate))
            .transpose()?;
        languages.push(LanguageResult {
            lang: lang.clone(),
            metric_kind: *kind,
            rate: *rate,
            baseline_rate,
            rel_change_pct,
            category,
        });
    }
    let categories = ResourceCategory::ALL
        .iter()
        .map(|&cat| {
            let members: Vec<&LanguageResult> = languages.iter().filter(|l| l.category == cat).collect();
            let rates: Vec<f64> = members.iter().map(|l| l.rate).collect();
            let rel: Vec<f64> = members.iter().filter_map(|l| l.rel_change_pct).collect();
            CategorySummary {
                category: cat,
                n_languages: members.len(),
                mean_rate: mean(&rates),
                mean_rel_change_pct: mean(&rel),
            }
        })
        .collect();
    Ok(EvalReport {
        split: split.to_string(),
        config_hash: config_hash.to_string(),
        languages,
        categories,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EvalReport {
    pub fn category(&self, cat: ResourceCategory) -> &CategorySummary {
        self.categories
            .iter()
            .find(|c| c.category == cat)
            .expect("all categories present")
    }

    /// Columns: lang, metric_kind, rate, baseline_rate, rel_change_pct, category.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lang,metric_kind,rate,baseline_rate,rel_change_pct,category\n");
        for l in &self.languages {
            let kind = match l.metric_kind {
                MetricKind::Wer => "WER",
                MetricKind::Cer => "CER",
            };
            s.push_str(&format!(
                "{},{kind},{},{},{},{}\n",
                l.lang,
                l.rate,
                opt(l.baseline_rate),
                opt(l.rel_change_pct),
                l.category.name()
            ));
        }
        s
    }

    pub fn category_csv(&self) -> String {
        let mut s = String::from("category,n_languages,mean_rate,mean_rel_change_pct\n");
        for c in &self.categories {
            s.push_str(&format!(
                "{},{},{},{}\n",
                c.category.name(),
                c.n_languages,
                opt(c.mean_rate),
                opt(c.mean_rel_change_pct)
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(json_err("eval report"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub languages: Vec<String>,
    pub cosine: Vec<Vec<f64>>,
    /// Cluster label per language; labels follow first appearance.
    pub clusters: Vec<usize>,
}

impl EmbeddingReport {
    pub fn same_cluster(&self, a: &str, b: &str) -> Option<bool> {
        let i = self.languages.iter().position(|l| l == a)?;
        let j = self.languages.iter().position(|l| l == b)?;
        Some(self.clusters[i] == self.clusters[j])
    }
}

/// Pairwise cosine similarity of embedding rows and average-linkage
/// agglomerative clustering on `1 - cosine` down to `k` clusters. Ties merge
/// the pair whose smallest language ids sort first.
pub fn embedding_report(table: &Tensor, lang_ids: &[String], k: usize) -> Result<EmbeddingReport> {
    let n = lang_ids.len();
    if table.rank() != 2 || table.rows() != n {
        return Err(Error::Eval(format!(
            "{} languages for an embedding table of shape {:?}",
            n,
            table.shape()
        )));
    }
    if k < 1 || k > n {
        return Err(Error::Eval(format!("cluster count {k} must be in [1, {n}]")));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| table.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let cosine: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if norms[i] == 0.0 || norms[j] == 0.0 {
                        return if i == j { 1.0 } else { 0.0 };
                    }
                    let dot: f64 = table.row(i).iter().zip(table.row(j)).map(|(a, b)| a * b).sum();
                    dot / (norms[i] * norms[j])
                })
                .collect()
        })
        .collect();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let key = |c: &[usize]| c.iter().map(|&i| lang_ids[i].as_str()).min().unwrap_or("").to_string();
    while clusters.len() > k {
        let mut best: Option<(f64, String, String, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        total += 1.0 - cosine[i][j];
                    }
                }
                let d = total / (clusters[a].len() * clusters[b].len()) as f64;
                let (ka, kb) = {
                    let (x, y) = (key(&clusters[a]), key(&clusters[b]));
                    if x <= y {
                        (x, y)
                    } else {
                        (y, x)
                    }
                };
                let better = match &best {
                    None => true,
                    Some((bd, bka, bkb, _, _)) => d < *bd || (d == *bd && (&ka, &kb) < (bka, bkb)),
                };
                if better {
                    best = Some((d, ka, kb, a, b));
                }
            }
        }
        let (_, _, _, a, b) = best.expect("at least two clusters remain");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i] == usize::MAX {
            let c = clusters
                .iter()
                .find(|c| c.contains(&i))
                .expect("every row is clustered");
            for &j in c {
                labels[j] = next;
            }
            next += 1;
        }
    }
    Ok(EmbeddingReport {
        languages: lang_ids.to_vec(),
        cosine,
        clusters: labels,
    })
}

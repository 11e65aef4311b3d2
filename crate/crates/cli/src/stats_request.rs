//! JSON request format of the `stats` subcommand.
//!
//! ```json
//! {
//!   "tests": [
//!     {"type": "permutation", "label": "LR vs. entropy drift", "kind": "spearman",
//!      "x": [1e-6, 5e-6, 1e-5, 5e-5, 1e-4], "y": [0.9, 0.4, -0.1, -1.2, -2.0]},
//!     {"type": "paired_t", "label": "APR vs. baseline", "family": "regularizers",
//!      "a": [...], "b": [...]}
//!   ],
//!   "multiseed": [
//!     {"label": "Full FT vs. LoRA r=8 (EuroSAT)", "a": [...], "b": [...]}
//!   ]
//! }
//! ```
//!
//! Tests sharing a `family` are Holm-adjusted together, in request order.

use std::collections::BTreeMap;

use anyhow::Context;
use attn_drift::aggregate::{multiseed_row, InferentialRow, MultiSeedRow};
use attn_drift::stats::{
    cv_result, exact_permutation_corr, holm_adjust, paired_t, pearson_test, spearman_test, welch_t,
    CorrKind, PermutationConfig, StatResult,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRequest {
    #[serde(default)]
    pub tests: Vec<TestRequest>,
    #[serde(default)]
    pub multiseed: Vec<MultiSeedRequest>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Labels {
    pub label: String,
    #[serde(default)]
    pub label_latex: Option<String>,
    #[serde(default)]
    pub family: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestRequest {
    Permutation {
        #[serde(flatten)]
        labels: Labels,
        kind: CorrKind,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    PairedT {
        #[serde(flatten)]
        labels: Labels,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    WelchT {
        #[serde(flatten)]
        labels: Labels,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    Pearson {
        #[serde(flatten)]
        labels: Labels,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Spearman {
        #[serde(flatten)]
        labels: Labels,
        x: Vec<f64>,
        y: Vec<f64>,
    },
    Cv {
        #[serde(flatten)]
        labels: Labels,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSeedRequest {
    pub label: String,
    #[serde(default)]
    pub label_latex: Option<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationSettings {
    pub seed: u64,
    pub max_exact_n: usize,
    pub mc_draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsOutput {
    pub permutation: PermutationSettings,
    pub tests: Vec<InferentialRow>,
    pub multiseed: Vec<MultiSeedRow>,
}

impl TestRequest {
    fn labels(&self) -> &Labels {
        match self {
            TestRequest::Permutation { labels, .. }
            | TestRequest::PairedT { labels, .. }
            | TestRequest::WelchT { labels, .. }
            | TestRequest::Pearson { labels, .. }
            | TestRequest::Spearman { labels, .. }
            | TestRequest::Cv { labels, .. } => labels,
        }
    }

    fn run(&self, cfg: &PermutationConfig) -> attn_drift::stats::Result<StatResult> {
        match self {
            TestRequest::Permutation { kind, x, y, .. } => exact_permutation_corr(x, y, *kind, cfg),
            TestRequest::PairedT { a, b, .. } => paired_t(a, b),
            TestRequest::WelchT { a, b, .. } => welch_t(a, b),
            TestRequest::Pearson { x, y, .. } => pearson_test(x, y),
            TestRequest::Spearman { x, y, .. } => spearman_test(x, y),
            TestRequest::Cv { values, .. } => cv_result(values),
        }
    }
}

pub fn run_request(request: &StatsRequest, cfg: &PermutationConfig) -> anyhow::Result<StatsOutput> {
    let mut tests = Vec::with_capacity(request.tests.len());
    for (index, t) in request.tests.iter().enumerate() {
        let labels = t.labels();
        let result = t
            .run(cfg)
            .with_context(|| format!("tests[{index}] ({})", labels.label))?;
        tests.push(InferentialRow {
            comparison: labels.label.clone(),
            comparison_latex: labels.label_latex.clone(),
            result,
            adjusted_p: None,
        });
    }

    let mut families: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (index, t) in request.tests.iter().enumerate() {
        if let Some(f) = &t.labels().family {
            families.entry(f.as_str()).or_default().push(index);
        }
    }
    for (family, members) in families {
        let p: Vec<f64> = members
            .iter()
            .map(|&i| {
                tests[i]
                    .result
                    .p_value
                    .with_context(|| format!("tests[{i}] in family `{family}` has no p-value"))
            })
            .collect::<anyhow::Result<_>>()?;
        let adjusted = holm_adjust(&p).with_context(|| format!("family `{family}`"))?;
        for (&i, adj) in members.iter().zip(adjusted) {
            tests[i].adjusted_p = Some(adj);
        }
    }

    let multiseed = request
        .multiseed
        .iter()
        .enumerate()
        .map(|(index, m)| {
            multiseed_row(&m.label, m.label_latex.as_deref(), &m.a, &m.b)
                .with_context(|| format!("multiseed[{index}] ({})", m.label))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    Ok(StatsOutput {
        permutation: PermutationSettings {
            seed: cfg.rng_seed,
            max_exact_n: cfg.max_exact_n,
            mc_draws: cfg.mc_draws,
        },
        tests,
        multiseed,
    })
}

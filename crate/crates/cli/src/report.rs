//! Consolidated report: one JSON document, fixed-width text tables and one
//! CSV per table. Sections whose artifacts are absent are marked missing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use genderpair::attack::{format_cell, AttackReport};
use genderpair::genmetrics::CrossMatrix;
use genderpair::{Category, Scheme};
use serde::{Deserialize, Serialize};

use crate::artifacts::{gen_id, Run};
use crate::config::SCHEMA_VERSION;
use crate::error::CliError;
use crate::stages::{ClassifierEval, GenMetrics};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T> {
    Ok { data: T },
    Missing { requires: Vec<String> },
}

impl<T> Section<T> {
    fn data(&self) -> Option<&T> {
        match self {
            Section::Ok { data } => Some(data),
            Section::Missing { .. } => None,
        }
    }
}

/// Macro-F1 per classifier and scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierF1 {
    pub bow: BTreeMap<Scheme, f64>,
    pub ngram: BTreeMap<Scheme, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Confusion {
    pub categories: Vec<Category>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sections {
    pub table1_classifier_f1: Section<ClassifierF1>,
    pub figure2_confusion: Section<Confusion>,
    pub table3_pivot_free_classification: Section<AttackReport>,
    pub table4_generation: Section<Vec<GenMetrics>>,
    pub table5_cross_pwr: Section<CrossMatrix>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub sections: Sections,
}

fn missing<T>(names: &[&str]) -> Section<T> {
    Section::Missing { requires: names.iter().map(|s| s.to_string()).collect() }
}

pub fn build(run: &Run, seed: u64) -> Result<Report, CliError> {
    let evals: Option<BTreeMap<String, ClassifierEval>> =
        if run.classifier_eval().exists() { Some(run.read_json(&run.classifier_eval())?) } else { None };

    let table1 = match &evals {
        Some(e) if !e.is_empty() => {
            let pick = |f: fn(&ClassifierEval) -> f64| -> BTreeMap<Scheme, f64> {
                e.iter().filter_map(|(tag, v)| Some((tag.parse().ok()?, f(v)))).collect()
            };
            Section::Ok { data: ClassifierF1 { bow: pick(|v| v.bow.macro_f1), ngram: pick(|v| v.ngram.macro_f1) } }
        }
        _ => missing(&["eval/classifiers.json"]),
    };
    let figure2 = match evals.as_ref().and_then(|e| e.get(Scheme::FourWay.tag())) {
        Some(v) => Section::Ok {
            data: Confusion { categories: Scheme::FourWay.categories().to_vec(), counts: v.ngram.confusion.clone() },
        },
        None => missing(&["eval/classifiers.json (4way)"]),
    };
    let table3 = if run.attack().exists() {
        Section::Ok { data: run.read_json(&run.attack())? }
    } else {
        missing(&["attack/attack.json"])
    };
    let mut gens = Vec::new();
    let mut absent = Vec::new();
    for scheme in Scheme::ALL {
        let path = run.gen_metrics(scheme);
        if path.exists() {
            gens.push(run.read_json::<GenMetrics>(&path)?);
        } else {
            absent.push(format!("gen/{}/metrics.json", gen_id(scheme)));
        }
    }
    let table5 = match gens.iter().find(|g| g.scheme == Scheme::FourWay) {
        Some(g) => Section::Ok { data: g.cross_pwr.clone() },
        None => missing(&["gen/model-3/metrics.json"]),
    };
    let table4 = if gens.is_empty() {
        Section::Missing { requires: absent }
    } else {
        Section::Ok { data: gens }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        seed,
        sections: Sections {
            table1_classifier_f1: table1,
            figure2_confusion: figure2,
            table3_pivot_free_classification: table3,
            table4_generation: table4,
            table5_cross_pwr: table5,
        },
    })
}

fn styles(scheme: Scheme) -> String {
    scheme.categories().iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
}

fn missing_text<T>(s: &Section<T>) -> Option<String> {
    match s {
        Section::Missing { requires } => Some(format!("  missing: requires {}\n", requires.join(", "))),
        Section::Ok { .. } => None,
    }
}

fn table1_text(f: &ClassifierF1) -> String {
    let mut out = format!("{:<16}", "Model");
    for s in Scheme::ALL {
        let _ = write!(out, "{:>8}", s.tag());
    }
    out.push('\n');
    for (name, row) in [("n-gram", &f.ngram), ("BOW", &f.bow)] {
        let _ = write!(out, "{name:<16}");
        for s in Scheme::ALL {
            let cell = row.get(&s).map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            let _ = write!(out, "{cell:>8}");
        }
        out.push('\n');
    }
    out
}

fn table1_csv(f: &ClassifierF1) -> String {
    let mut out = String::from("model,2way,3way,4way\n");
    for (name, row) in [("ngram", &f.ngram), ("bow", &f.bow)] {
        out.push_str(name);
        for s in Scheme::ALL {
            let _ = write!(out, ",{}", row.get(&s).map_or_else(String::new, |v| v.to_string()));
        }
        out.push('\n');
    }
    out
}

fn confusion_text(c: &Confusion) -> String {
    let mut out = format!("{:<12}", "true\\pred");
    for k in &c.categories {
        let _ = write!(out, "{:>8}", k.as_str());
    }
    out.push('\n');
    for (k, row) in c.categories.iter().zip(&c.counts) {
        let _ = write!(out, "{:<12}", k.as_str());
        for n in row {
            let _ = write!(out, "{n:>8}");
        }
        out.push('\n');
    }
    out
}

fn confusion_csv(c: &Confusion) -> String {
    let mut out = String::from("true\\predicted");
    for k in &c.categories {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for (k, row) in c.categories.iter().zip(&c.counts) {
        out.push_str(k.as_str());
        for n in row {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
    }
    out
}

/// Targets down, pivot sources across, as in the pivot-free table.
fn attack_text(a: &AttackReport) -> String {
    let w = 14;
    let mut out = format!("{:<8}{:>w$}", "target", "baseline");
    for r in &a.rows {
        let _ = write!(out, "{:>w$}", r.source);
    }
    out.push('\n');
    for t in &a.targets {
        let _ = write!(out, "{:<8}{:>w$}", t.as_str(), format!("{:.2}", a.baseline[t]));
        for r in &a.rows {
            let _ = write!(out, "{:>w$}", format_cell(r.cells[t]));
        }
        out.push('\n');
    }
    out
}

fn attack_csv(a: &AttackReport) -> String {
    let mut out = String::from("target,baseline");
    for r in &a.rows {
        let _ = write!(out, ",{}", r.source);
    }
    out.push('\n');
    for t in &a.targets {
        let _ = write!(out, "{t},{}", a.baseline[t]);
        for r in &a.rows {
            let _ = write!(out, ",{}", r.cells[t].recall_after);
        }
        out.push('\n');
    }
    out
}

fn table4_text(gens: &[GenMetrics]) -> String {
    let mut out = format!(
        "{:<9}{:<22}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}\n",
        "ID", "Conditioned styles", "BLEU", "DIST", "ACC", "ACC-2", "PWP", "PWR"
    );
    for g in gens {
        let acc2 = g.acc2.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * 100.0));
        let _ = writeln!(
            out,
            "{:<9}{:<22}{:>8.2}{:>8.3}{:>8.2}{:>8}{:>8.2}{:>8.2}",
            g.id,
            styles(g.scheme),
            g.bleu * 100.0,
            g.dist1,
            g.acc * 100.0,
            acc2,
            g.pwp.micro * 100.0,
            g.mean_pwr * 100.0
        );
    }
    for g in gens {
        let per: Vec<String> = g.pwp.per_category.iter().map(|(c, v)| format!("{c} {:.2}", v * 100.0)).collect();
        let _ = writeln!(out, "  {} PWP per category: {}", g.id, per.join(", "));
    }
    out
}

fn table4_csv(gens: &[GenMetrics]) -> String {
    let mut out = String::from("id,scheme,bleu,dist1,acc,acc2,pwp,pwr\n");
    for g in gens {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.id,
            g.scheme,
            g.bleu,
            g.dist1,
            g.acc,
            g.acc2.map_or_else(String::new, |v| v.to_string()),
            g.pwp.micro,
            g.mean_pwr
        );
    }
    out
}

fn cross_text(m: &CrossMatrix) -> String {
    let mut out = format!("{:<8}", "output");
    for s in &m.sources {
        let _ = write!(out, "{:>9}", s.as_str());
    }
    out.push('\n');
    for (t, row) in m.targets.iter().zip(&m.values) {
        let _ = write!(out, "{:<8}", t.as_str());
        for v in row {
            let _ = write!(out, "{:>9.2}", v * 100.0);
        }
        out.push('\n');
    }
    out
}

pub fn render_text(r: &Report) -> String {
    let s = &r.sections;
    let mut out = String::new();
    let mut section = |title: &str, body: Option<String>, miss: Option<String>| {
        let _ = writeln!(out, "== {title} ==");
        out.push_str(&body.or(miss).unwrap_or_default());
        out.push('\n');
    };
    section(
        "Table 1: classifier macro-F1",
        s.table1_classifier_f1.data().map(table1_text),
        missing_text(&s.table1_classifier_f1),
    );
    section(
        "Figure 2: four-way confusion (n-gram classifier)",
        s.figure2_confusion.data().map(confusion_text),
        missing_text(&s.figure2_confusion),
    );
    section(
        "Table 3: pivot-free classification, recall (change)",
        s.table3_pivot_free_classification.data().map(attack_text),
        missing_text(&s.table3_pivot_free_classification),
    );
    section(
        "Table 4: generation metrics",
        s.table4_generation.data().map(|g| table4_text(g)),
        missing_text(&s.table4_generation),
    );
    section(
        "Table 5: cross-category PWR of model-3 outputs",
        s.table5_cross_pwr.data().map(cross_text),
        missing_text(&s.table5_cross_pwr),
    );
    out
}

pub fn write(run: &Run, r: &Report) -> Result<(), CliError> {
    run.write_json(&run.path("report.json"), r)?;
    run.write(&run.path("report.txt"), render_text(r))?;
    let s = &r.sections;
    let csvs: [(&str, Option<String>); 5] = [
        ("table1_classifier_f1.csv", s.table1_classifier_f1.data().map(table1_csv)),
        ("figure2_confusion.csv", s.figure2_confusion.data().map(confusion_csv)),
        ("table3_pivot_free_classification.csv", s.table3_pivot_free_classification.data().map(attack_csv)),
        ("table4_generation.csv", s.table4_generation.data().map(|g| table4_csv(g))),
        ("table5_cross_pwr.csv", s.table5_cross_pwr.data().map(CrossMatrix::to_csv)),
    ];
    for (name, body) in csvs {
        let path = run.path("csv").join(name);
        match body {
            Some(text) => run.write(&path, text)?,
            None if path.exists() => std::fs::remove_file(&path).map_err(|e| crate::error::io_error(&path, e))?,
            None => {}
        }
    }
    Ok(())
}

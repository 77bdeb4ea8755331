//! Pipeline stages. Each reads upstream artifacts from the run directory
//! and writes its own.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use genderpair::attack::attack_matrix;
use genderpair::corpus::{build_concat_samples, concat_from_groups, load_corpus, project_label, split_and_balance, Corpus};
use genderpair::generator::{generate, train_generator, write_generations, Decoding, GenerationRecord};
use genderpair::genmetrics::{
    bleu, cross_pwp, cross_pwr_nonempty, dist1, pwp, pwr_nonempty, style_acc, style_acc2, CrossMatrix, PwpScores,
    StyledOutputs,
};
use genderpair::pivot::{discover_pivots, PivotSet};
use genderpair::synthgen::generate_corpus;
use genderpair::textclf::{evaluate, EvalReport};
use genderpair::{BowModel, NGramHashModel, StyledGenerator};
use genderpair::{Category, ConcatSample, Scheme};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::{classifier_dir, gen_id, Run};
use crate::config::{stage_seed, PipelineConfig};
use crate::error::CliError;

/// Discovery samples are drawn and scanned in chunks of this many per category.
const DISCOVERY_CHUNK: usize = 1000;

pub struct Ctx<'a> {
    pub config: &'a PipelineConfig,
    pub run: Run,
}

impl Ctx<'_> {
    fn seed(&self, tag: &str) -> u64 {
        stage_seed(self.config.seed, tag)
    }

    fn schemes(&self) -> Vec<Scheme> {
        let mut s = self.config.schemes.clone();
        s.sort();
        s.dedup();
        s
    }
}

fn log(stage: &str, msg: impl std::fmt::Display) {
    eprintln!("[{stage}] {msg}");
}

pub fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    run.ensure_dir(&run.dir)?;
    let corpus = match &ctx.config.paths.corpus {
        Some(path) => load_corpus(path)?,
        None => {
            let (corpus, truth) = generate_corpus(&ctx.config.synth_config(ctx.seed("synth")))?;
            run.write_json(&run.path("ground_truth.json"), &truth)?;
            corpus
        }
    };
    corpus.write_jsonl(&run.corpus())?;
    let s = &ctx.config.split;
    let split = split_and_balance(&corpus, s.test_fraction, s.tune_fraction, ctx.seed("split"))?;
    run.save_split(&split)?;
    log(
        "synth",
        format!("{} pairs; train {} tune {} test {}", corpus.len(), split.train.len(), split.tune.len(), split.test.len()),
    );
    Ok(())
}

fn per_category_samples(ctx: &Ctx, scheme: Scheme) -> usize {
    (ctx.config.classifier.train_samples / scheme.n_categories()).max(1)
}

pub fn train_clf(ctx: &Ctx) -> Result<(), CliError> {
    let split = ctx.run.load_split("train-clf")?;
    let n = ctx.config.classifier.concat_n;
    for scheme in ctx.schemes() {
        let tag = scheme.tag();
        let t = Instant::now();
        let samples =
            build_concat_samples(&split.train, scheme, n, per_category_samples(ctx, scheme), ctx.seed(&format!("clf-train/{tag}")))?;
        let bow = BowModel::train(&samples, &ctx.config.bow_hyper(ctx.seed(&format!("bow/{tag}"))))?;
        let ngram = NGramHashModel::train(&samples, &ctx.config.ngram_hyper(ctx.seed(&format!("ngram/{tag}"))))?;
        ctx.run.ensure_dir(&ctx.run.path(&classifier_dir(scheme)))?;
        bow.save(&ctx.run.bow(scheme))?;
        ngram.save(&ctx.run.ngram(scheme))?;
        log("train-clf", format!("{tag}: {} samples in {:.1?}", samples.len(), t.elapsed()));
    }
    Ok(())
}

/// Held-out classifier inputs, shared by classifier evaluation and the attack.
fn test_samples(ctx: &Ctx, test: &Corpus, scheme: Scheme) -> Result<Vec<ConcatSample>, CliError> {
    let c = &ctx.config.classifier;
    Ok(build_concat_samples(
        test,
        scheme,
        c.concat_n,
        c.test_samples_per_category,
        ctx.seed(&format!("clf-test/{}", scheme.tag())),
    )?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub bow: EvalReport,
    pub ngram: EvalReport,
}

pub fn eval_clf(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    for scheme in ctx.schemes() {
        run.require(&run.bow(scheme), "eval-clf", &classifier_dir(scheme), "train-clf")?;
        run.require(&run.ngram(scheme), "eval-clf", &classifier_dir(scheme), "train-clf")?;
    }
    let split = run.load_split("eval-clf")?;
    let path = run.classifier_eval();
    let mut all: BTreeMap<String, ClassifierEval> = if path.exists() { run.read_json(&path)? } else { BTreeMap::new() };
    for scheme in ctx.schemes() {
        let samples = test_samples(ctx, &split.test, scheme)?;
        let bow = BowModel::load(&run.bow(scheme))?;
        let ngram = NGramHashModel::load(&run.ngram(scheme))?;
        let e = ClassifierEval { bow: evaluate(&bow, &samples)?, ngram: evaluate(&ngram, &samples)? };
        log(
            "eval-clf",
            format!("{}: macro-F1 bow {:.3} n-gram {:.3}", scheme.tag(), e.bow.macro_f1, e.ngram.macro_f1),
        );
        all.insert(scheme.tag().to_string(), e);
    }
    run.write_json(&path, &all)
}

pub fn pivots(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    for scheme in ctx.schemes() {
        run.require(&run.bow(scheme), "pivots", &classifier_dir(scheme), "train-clf")?;
    }
    let split = run.load_split("pivots")?;
    let p = &ctx.config.pivots;
    let n = ctx.config.classifier.concat_n;
    for scheme in ctx.schemes() {
        let t = Instant::now();
        let model = BowModel::load(&run.bow(scheme))?;
        let groups = split.train.responses_by_category(scheme);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(&format!("pivots/{}", scheme.tag())));
        let mut found: Option<PivotSet> = None;
        let mut done = 0;
        while done < p.samples_per_category {
            let chunk = DISCOVERY_CHUNK.min(p.samples_per_category - done);
            let samples = concat_from_groups(&groups, scheme, n, chunk, &mut rng)?;
            let part = discover_pivots(&model, &samples, p.confidence_drop, p.min_frequency)?;
            match found.as_mut() {
                Some(f) => f.absorb(&part)?,
                None => found = Some(part),
            }
            done += chunk;
        }
        let found = found.expect("at least one chunk");
        let path = run.pivots(scheme);
        run.write(&path, found.to_json()? + "\n")?;
        run.write(&path.with_extension("tsv"), found.to_tsv())?;
        let sizes: Vec<String> = found.sets().iter().map(|(c, s)| format!("{c} {}", s.len())).collect();
        log("pivots", format!("{}: {} in {:.1?}", scheme.tag(), sizes.join(", "), t.elapsed()));
    }
    Ok(())
}

/// Four-way classifier attacked with four-way and, when available, two-way
/// pivot sets.
pub fn attack(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    let four = Scheme::FourWay;
    run.require(&run.bow(four), "attack", &classifier_dir(four), "train-clf")?;
    run.require(&run.pivots(four), "attack", "pivots-4way", "pivots")?;
    let split = run.load_split("attack")?;
    let model = BowModel::load(&run.bow(four))?;
    // The empty source is the control row: nothing stripped, baseline recall.
    let mut sources = vec![("none".to_string(), BTreeSet::new())];
    for scheme in [four, Scheme::TwoWay] {
        let path = run.pivots(scheme);
        if path.exists() {
            let set = PivotSet::load(&path)?;
            sources.extend(scheme.categories().iter().map(|&c| (c.to_string(), set.tokens_of(c))));
        }
    }
    let report = attack_matrix(&model, &test_samples(ctx, &split.test, four)?, &sources)?;
    run.write_json(&run.attack(), &report)?;
    run.write(&run.attack().with_extension("txt"), report.to_text())?;
    log("attack", format!("{} source sets", sources.len()));
    Ok(())
}

/// Up to `n` pairs per category of `scheme`, chosen at random among pairs
/// that fit the generator's length limit.
fn pick_pairs(corpus: &Corpus, scheme: Scheme, n: usize, max_len: usize, seed: u64) -> Corpus {
    let mut groups: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (i, p) in corpus.pairs().iter().enumerate() {
        if p.post.len() <= max_len && p.response.len() < max_len {
            groups.entry(project_label(p.style, scheme)).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..n.min(idx.len())]);
    }
    chosen.sort_unstable();
    corpus.select(&chosen)
}

pub fn train_gen(ctx: &Ctx) -> Result<(), CliError> {
    let split = ctx.run.load_split("train-gen")?;
    let g = &ctx.config.generator;
    for scheme in ctx.schemes() {
        let tag = scheme.tag();
        let t = Instant::now();
        let train = pick_pairs(&split.train, scheme, g.train_pairs_per_category, g.max_len, ctx.seed(&format!("gen-data/{tag}")));
        let hyper = ctx.config.gen_hyper(ctx.seed(&format!("gen-train/{tag}")));
        let (model, log_) = train_generator::<f64>(&train, scheme, &ctx.config.gen_config(scheme), &hyper)?;
        let dir = ctx.run.gen_dir(scheme);
        ctx.run.ensure_dir(&dir)?;
        model.save(&ctx.run.generator(scheme))?;
        ctx.run.write_json(&dir.join("train_log.json"), &log_)?;
        log(
            "train-gen",
            format!(
                "{} ({tag}): {} pairs, loss {:.3} -> {:.3} in {:.1?}",
                gen_id(scheme),
                train.len(),
                log_.initial_loss,
                log_.epoch_loss.last().copied().unwrap_or(f64::NAN),
                t.elapsed()
            ),
        );
    }
    Ok(())
}

pub fn generate_stage(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    for scheme in ctx.schemes() {
        run.require(&run.generator(scheme), "generate", gen_id(scheme), "train-gen")?;
    }
    let split = run.load_split("generate")?;
    let g = &ctx.config.generator;
    for scheme in ctx.schemes() {
        let tag = scheme.tag();
        let model = StyledGenerator::load(&run.generator(scheme))?;
        let posts = pick_pairs(&split.test, scheme, g.test_posts_per_category, g.max_len, ctx.seed(&format!("gen-test/{tag}")));
        let base = ctx.seed(&format!("decode/{tag}"));
        let records = posts
            .pairs()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let category = project_label(p.style, scheme);
                let strategy = Decoding::TopK { k: g.top_k, temperature: g.temperature, seed: base.wrapping_add(i as u64) };
                let response = generate(&model, &p.post, category, &strategy, g.max_len - 1)?;
                Ok(GenerationRecord {
                    post: p.post.join(" "),
                    category,
                    response: response.join(" "),
                    reference: Some(p.response.join(" ")),
                })
            })
            .collect::<Result<Vec<_>, genderpair::Error>>()?;
        write_generations(&run.generations(scheme), &records)?;
        log("generate", format!("{}: {} responses", gen_id(scheme), records.len()));
    }
    Ok(())
}

/// Metrics of one generator run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenMetrics {
    pub id: String,
    pub scheme: Scheme,
    pub responses: usize,
    pub bleu: f64,
    pub dist1: f64,
    pub acc: f64,
    pub acc_trials: usize,
    pub acc2: Option<f64>,
    pub pwp: PwpScores,
    pub pwr: BTreeMap<Category, f64>,
    /// Categories without pivots, for which PWR is undefined.
    pub pwr_skipped: Vec<Category>,
    pub mean_pwr: f64,
    /// Outputs against the pivots of this scheme and of the two-way scheme.
    pub cross_pwr: CrossMatrix,
    pub cross_pwr_skipped: Vec<Category>,
    pub cross_pwp: CrossMatrix,
}

pub fn eval_gen(ctx: &Ctx) -> Result<(), CliError> {
    let run = &ctx.run;
    for scheme in ctx.schemes() {
        run.require(&run.generations(scheme), "eval-gen", &format!("{}/generations.jsonl", gen_id(scheme)), "generate")?;
        run.require(&run.ngram(scheme), "eval-gen", &classifier_dir(scheme), "train-clf")?;
        run.require(&run.pivots(scheme), "eval-gen", &format!("pivots-{}", scheme.tag()), "pivots")?;
    }
    let two = Scheme::TwoWay;
    let gender_clf = if run.ngram(two).exists() { Some(NGramHashModel::load(&run.ngram(two))?) } else { None };
    let gender_pivots = if run.pivots(two).exists() { Some(PivotSet::load(&run.pivots(two))?) } else { None };
    for scheme in ctx.schemes() {
        let records = genderpair::generator::read_generations(&run.generations(scheme))?;
        let outputs = StyledOutputs::from_records(scheme, &records)?;
        let hyps: Vec<Vec<String>> = records.iter().map(|r| genderpair::corpus::tokenize(&r.response)).collect();
        let refs: Vec<Vec<String>> = records
            .iter()
            .map(|r| genderpair::corpus::tokenize(r.reference.as_deref().unwrap_or("")))
            .collect();
        let classifier = NGramHashModel::load(&run.ngram(scheme))?;
        let pivots = PivotSet::load(&run.pivots(scheme))?;
        let settings = ctx.config.acc_settings(ctx.seed(&format!("acc/{}", scheme.tag())));
        let acc2 = match &gender_clf {
            Some(c) => style_acc2(&outputs, c, &settings)?,
            None => None,
        };
        let mut cross_sets = vec![&pivots];
        if scheme != two {
            cross_sets.extend(gender_pivots.as_ref());
        }
        let (pwr, pwr_skipped) = pwr_nonempty(&outputs, &pivots)?;
        let mean_pwr = if pwr.is_empty() { 0.0 } else { pwr.values().sum::<f64>() / pwr.len() as f64 };
        let (cross_pwr, cross_pwr_skipped) = cross_pwr_nonempty(&outputs, &cross_sets)?;
        let m = GenMetrics {
            id: gen_id(scheme).to_string(),
            scheme,
            responses: records.len(),
            bleu: bleu(&refs, &hyps)?,
            dist1: dist1(&hyps)?,
            acc: style_acc(&outputs, &classifier, &settings)?,
            acc_trials: settings.trials_per_category * outputs.responses.len(),
            acc2,
            pwp: pwp(&outputs, &pivots)?,
            pwr,
            pwr_skipped,
            mean_pwr,
            cross_pwr,
            cross_pwr_skipped,
            cross_pwp: cross_pwp(&outputs, &cross_sets)?,
        };
        log(
            "eval-gen",
            format!("{}: BLEU {:.2} DIST {:.3} ACC {:.3} PWP {:.3} PWR {:.3}", m.id, m.bleu * 100.0, m.dist1, m.acc, m.pwp.micro, m.mean_pwr),
        );
        run.write_json(&run.gen_metrics(scheme), &m)?;
    }
    Ok(())
}

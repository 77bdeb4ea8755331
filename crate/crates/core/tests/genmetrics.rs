use std::collections::BTreeMap;

use genderpair::corpus::{build_concat_samples, project_label, split_and_balance, Corpus};
use genderpair::generator::{generate, train_generator, Decoding, GenConfig, GenHyper};
use genderpair::genmetrics::{cross_pwr, pwp, pwr, style_acc, AccSettings, StyledOutputs};
use genderpair::pivot::discover_pivots;
use genderpair::synthgen::{generate_corpus, SynthConfig};
use genderpair::textclf::{BowHyper, BowModel, NGramHashModel, NGramHyper};
use genderpair::{Category, Scheme, Token};

fn per_category(corpus: &Corpus, n: usize) -> Corpus {
    let mut seen = BTreeMap::new();
    let idx: Vec<usize> = (0..corpus.len())
        .filter(|&i| {
            let k = seen.entry(corpus.pairs()[i].style).or_insert(0usize);
            *k += 1;
            *k <= n
        })
        .collect();
    corpus.select(&idx)
}

#[test]
fn trained_generator_favours_its_own_pivots() {
    let (corpus, _) = generate_corpus(&SynthConfig { lambda: 0.0, pairs_per_category: 800, ..Default::default() }).unwrap();
    let split = split_and_balance(&corpus, 0.2, 0.1, 0).unwrap();
    let scheme = Scheme::FourWay;

    // a discovery model trained on few samples overfits, and removing any frequent word then flips it
    let clf_train = build_concat_samples(&split.train, scheme, 20, 2000, 1).unwrap();
    let bow = BowModel::<f64>::train(&clf_train, &BowHyper::default()).unwrap();
    let discovery = build_concat_samples(&split.train, scheme, 20, 5000, 2).unwrap();
    let pivots = discover_pivots(&bow, &discovery, 0.5, 10).unwrap();

    let train = per_category(&split.train, 200);
    let (model, _) = train_generator::<f64>(&train, scheme, &GenConfig::default(), &GenHyper::default()).unwrap();
    let mut responses: BTreeMap<Category, Vec<Vec<Token>>> = BTreeMap::new();
    for (i, p) in per_category(&split.test, 100).pairs().iter().enumerate() {
        let cat = project_label(p.style, scheme);
        let strategy = Decoding::TopK { k: 10, temperature: 1.0, seed: i as u64 };
        responses.entry(cat).or_default().push(generate(&model, &p.post, cat, &strategy, 31).unwrap());
    }
    let outputs = StyledOutputs::new(scheme, responses).unwrap();

    let m = cross_pwr(&outputs, &[&pivots]).unwrap();
    let (ff, mm) = (Category::Ff, Category::Mm);
    let diag = |c| m.get(c, c).unwrap();
    assert!(diag(ff) > m.get(ff, mm).unwrap(), "{m:?}");
    assert!(diag(ff) > m.get(mm, ff).unwrap(), "{m:?}");
    assert!(diag(mm) > m.get(ff, mm).unwrap(), "{m:?}");
    assert!(diag(mm) > m.get(mm, ff).unwrap(), "{m:?}");
    assert_eq!(pwr(&outputs, &pivots).unwrap()[&ff], diag(ff));

    // each style's pivots are denser in its own outputs than in the other style's outputs
    let only = |c: Category| StyledOutputs::new(scheme, [(c, outputs.responses[&c].clone())].into_iter().collect()).unwrap();
    let rate = |outs: Category, omega: Category| -> f64 {
        let o = only(outs);
        let hits = o.responses[&outs].iter().flatten().filter(|t| pivots.tokens_of(omega).contains(*t)).count();
        hits as f64 / o.token_count(outs) as f64
    };
    let own = pwp(&outputs, &pivots).unwrap().per_category;
    assert_eq!(own[&ff], rate(ff, ff));
    assert!(rate(ff, ff) > rate(mm, ff), "{} vs {}", rate(ff, ff), rate(mm, ff));
    assert!(rate(mm, mm) > rate(ff, mm), "{} vs {}", rate(mm, mm), rate(ff, mm));

    let ngram = NGramHashModel::<f64>::train(&clf_train, &NGramHyper::default()).unwrap();
    let acc = style_acc(&outputs, &ngram, &AccSettings { trials_per_category: 100, ..Default::default() }).unwrap();
    assert!(acc > 0.25 + 3.0 * (0.25f64 * 0.75 / 400.0).sqrt(), "{acc}");
}

use super::*;
use crate::neuralnet::adam::{Adam, AdamConfig};
use crate::neuralnet::gradcheck::grad_check;
use crate::textcore::derive_labels;

fn tiny() -> ModelConfig {
    ModelConfig {
        preset: "tiny".into(),
        input_embedding: 8,
        output_embedding: 4,
        fwd_enc_layers: 1,
        bwd_enc_layers: 2,
        dec_layers: 2,
        enc_cells: 6,
        dec_cells: 5,
        max_ngram_order: 3,
        num_buckets: 97,
        beam: 2,
        context_dim: 3,
        dedup_ngrams: false,
        max_sentence_words: 200,
    }
}

fn s(x: &str) -> Sentence {
    Sentence::parse(x)
}

fn pair(gold: &str) -> LabeledPair {
    LabeledPair::from_gold(&s(gold)).unwrap()
}

/// Random model with larger weights so decisions are not all near-ties.
fn random_model(seed: u64) -> HierModel<f64> {
    let mut m = HierModel::<f64>::new(tiny(), seed).unwrap();
    for v in m.params_mut() {
        *v *= 12.0;
    }
    m
}

fn overfit(config: ModelConfig, golds: &[&str], steps: usize) -> HierModel<f32> {
    let pairs: Vec<LabeledPair> = golds.iter().map(|g| pair(g)).collect();
    let mut m = HierModel::<f32>::new(config, 1).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 0.01, ..AdamConfig::default() }, m.param_count());
    for _ in 0..steps {
        let mut g = vec![0.0f32; m.param_count()];
        for p in &pairs {
            m.loss_and_grad(p, Some(&mut g)).unwrap();
        }
        adam.step(m.params_mut(), &g).unwrap();
    }
    m
}

#[test]
fn presets_and_param_counts() {
    let st = ModelConfig::student();
    assert_eq!(
        (st.input_embedding, st.output_embedding, st.fwd_enc_layers, st.bwd_enc_layers, st.dec_layers),
        (128, 128, 1, 1, 1)
    );
    assert_eq!((st.enc_cells, st.dec_cells, st.max_ngram_order, st.num_buckets, st.beam), (128, 128, 3, 5000, 2));
    let te = ModelConfig::teacher();
    assert_eq!(
        (te.input_embedding, te.output_embedding, te.fwd_enc_layers, te.bwd_enc_layers, te.dec_layers),
        (512, 512, 2, 2, 2)
    );
    assert_eq!((te.enc_cells, te.dec_cells, te.max_ngram_order, te.num_buckets, te.beam), (512, 512, 3, 5000, 2));
    let ns = HierModel::<f32>::zeros(st).unwrap().param_count() as f64;
    assert!((ns / 1.3e6 - 1.0).abs() <= 0.15, "student {ns}");
    let nt = HierModel::<f32>::zeros(te).unwrap().param_count() as f64;
    assert!((nt / 19.2e6 - 1.0).abs() <= 0.15, "teacher {nt}");
    assert!(ModelConfig::preset("medium").is_err());
    assert!(ModelConfig { beam: 0, ..tiny() }.validate().is_err());
}

#[test]
fn word_logprobs_normalize() {
    let m = random_model(3);
    let x = s("the quick brown fox , 42");
    for k in 0..x.len() {
        let prefix: Vec<WordLabel> = (0..k).map(|i| WordLabel::from_index(i % 2)).collect();
        let lp = m.word_tag_logprobs(&x, &prefix).unwrap();
        assert!((lp[0].exp() + lp[1].exp() - 1.0).abs() < 1e-6);
    }
    assert!(m.word_tag_logprobs(&x, &[WordLabel::Same; 6]).is_err());
    assert!(m.word_tag_logprobs(&s(""), &[]).is_err());
}

#[test]
fn zero_model_is_uniform() {
    let m = HierModel::<f64>::zeros(tiny()).unwrap();
    let x = s("hello world");
    let half = 0.5f64.ln();
    assert_eq!(m.word_tag_logprobs(&x, &[]).unwrap(), [half, half]);
    assert_eq!(m.char_transduce_logprobs(&x, 1, &[]).unwrap(), [half, half]);
}

#[test]
fn caseless_positions_are_forced() {
    let m = random_model(4);
    let x = s("hewlett-packard");
    let prefix = vec![CharLabel::Lower; 7];
    assert_eq!(m.char_transduce_logprobs(&x, 0, &prefix).unwrap(), [0.0, f64::NEG_INFINITY]);
    assert!(m.char_transduce_logprobs(&x, 1, &[]).is_err());
    let b = m.beam_search_chars(&s("1,234"), 0, 4).unwrap();
    assert_eq!(b.hypotheses.len(), 1);
    assert_eq!(b.best().labels, vec![CharLabel::Lower; 5]);
    assert_eq!(b.best().score, 0.0);
}

#[test]
fn loss_examples() {
    let zero = HierModel::<f64>::zeros(tiny()).unwrap();
    let two_other = pair("ABC Def");
    assert_eq!(two_other.word_labels, vec![WordLabel::Other; 2]);
    let l = zero.sentence_loss(&two_other).unwrap();
    assert!((l - 8.0 * 2f64.ln()).abs() < 1e-12, "{l}");

    let m = random_model(5);
    let all_self = pair("all lower case here");
    let l = m.sentence_loss(&all_self).unwrap();
    let word_only = -m.word_sequence_score(&all_self.lower, &all_self.word_labels).unwrap();
    assert!((l - word_only).abs() < 1e-9);
    assert!(l >= 0.0);

    // a model that is certain of SELF everywhere has zero loss on all-SELF text
    let mut sure = HierModel::<f64>::zeros(tiny()).unwrap();
    let b = sure.layout().get("word.out.b").unwrap().offset;
    sure.params_mut()[b] = 60.0;
    assert!(sure.sentence_loss(&all_self).unwrap() < 1e-20);
}

#[test]
fn loss_matches_sequence_scores() {
    let m = random_model(6);
    let p = pair("Mr. McDonald's HP-5 went to PARIS");
    let mut want = -m.word_sequence_score(&p.lower, &p.word_labels).unwrap();
    for i in 0..p.lower.len() {
        if p.word_labels[i] == WordLabel::Other {
            want -= m.char_sequence_score(&p.lower, i, &p.char_labels[i]).unwrap();
        }
    }
    let got = m.sentence_loss(&p).unwrap();
    assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn gradient_check_small_model() {
    let mut m = HierModel::<f64>::new(tiny(), 9).unwrap();
    for v in m.params_mut() {
        *v *= 5.0;
    }
    let p = pair("The iPhone of Hewlett-Packard , 1999 .");
    let mut g = vec![0.0; m.param_count()];
    m.loss_and_grad(&p, Some(&mut g)).unwrap();
    let mut params = m.params().to_vec();
    let report = grad_check(
        &mut params,
        &g,
        |q| {
            let mut mm = m.clone();
            mm.set_params(q.to_vec()).unwrap();
            mm.sentence_loss(&p).unwrap()
        },
        1e-3,
        None,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn beam_one_is_greedy() {
    for seed in 0..5 {
        let m = random_model(seed + 20);
        let x = s("a bb ccc dddd e fff");
        let beam = m.beam_search_words(&x, 1).unwrap();
        let mut prefix = Vec::new();
        for _ in 0..x.len() {
            let lp = m.word_tag_logprobs(&x, &prefix).unwrap();
            prefix.push(if lp[1] > lp[0] { WordLabel::Other } else { WordLabel::Same });
        }
        assert_eq!(beam.best().labels, prefix);
        let cb = m.beam_search_chars(&x, 3, 1).unwrap();
        let mut cp = Vec::new();
        for _ in 0..4 {
            let lp = m.char_transduce_logprobs(&x, 3, &cp).unwrap();
            cp.push(if lp[1] > lp[0] { CharLabel::Upper } else { CharLabel::Lower });
        }
        assert_eq!(cb.best().labels, cp);
    }
}

#[test]
fn wide_beam_is_exhaustive() {
    for seed in 0..8 {
        let m = random_model(seed + 40);
        let x = s("one two three four five");
        let n = x.len();
        let beam = m.beam_search_words(&x, 1 << n).unwrap();
        assert_eq!(beam.hypotheses.len(), 1 << n);
        let mut best: Option<(f64, Vec<WordLabel>)> = None;
        for mask in 0..(1u32 << n) {
            let labels: Vec<WordLabel> = (0..n).map(|i| WordLabel::from_index(((mask >> (n - 1 - i)) & 1) as usize)).collect();
            let sc = m.word_sequence_score(&x, &labels).unwrap();
            if best.as_ref().is_none_or(|(b, _)| sc > *b) {
                best = Some((sc, labels));
            }
        }
        let (sc, labels) = best.unwrap();
        assert_eq!(beam.best().labels, labels);
        assert_eq!(beam.best().score, sc);
    }
}

#[test]
fn ties_prefer_identity() {
    let m = HierModel::<f64>::zeros(tiny()).unwrap();
    let b = m.beam_search_words(&s("x y z"), 8).unwrap();
    assert_eq!(b.best().labels, vec![WordLabel::Same; 3]);
    assert_eq!(b.hypotheses[1].labels, vec![WordLabel::Same, WordLabel::Same, WordLabel::Other]);
    assert!(b.hypotheses.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn untrained_zero_model_copies_input() {
    let m = HierModel::<f32>::zeros(tiny()).unwrap();
    for mode in [DecodeMode::BestPath, DecodeMode::FullBeam] {
        assert_eq!(m.truecase(&s("hello world , i am here"), mode).unwrap(), s("hello world , i am here"));
    }
    assert_eq!(m.truecase(&s(""), DecodeMode::BestPath).unwrap(), s(""));
}

#[test]
fn outputs_lowercase_to_input() {
    let m = random_model(7);
    let x = s("straße ǆemal hewlett-packard 3.5 i don't know мир");
    for mode in [DecodeMode::BestPath, DecodeMode::FullBeam] {
        let y = m.truecase(&x, mode).unwrap();
        assert_eq!(y.lowercased(), x);
        for (a, b) in x.tokens().iter().zip(y.tokens()) {
            assert!(a == b || b.chars().count() == a.chars().count());
        }
    }
}

#[test]
fn long_sentences_are_chunked() {
    let m = random_model(8);
    let words: Vec<String> = (0..450).map(|i| format!("w{}", i % 17)).collect();
    let x = Sentence::from_tokens(words).unwrap();
    let y = m.truecase(&x, DecodeMode::BestPath).unwrap();
    assert_eq!(y.len(), 450);
    assert_eq!(y.lowercased(), x);
}

#[test]
fn full_beam_never_scores_below_best_path() {
    for seed in 0..10 {
        let m = random_model(seed + 60);
        let x = s("new york is big city");
        let best = m.truecase_scored(&x, DecodeMode::BestPath, 4).unwrap();
        let full = m.truecase_scored(&x, DecodeMode::FullBeam, 4).unwrap();
        assert!(full.score >= best.score - 1e-12);
    }
}

#[test]
fn no_cross_word_leakage() {
    let m = random_model(11);
    let a = s("the macdonald farm");
    let ctx = m.context_vectors(&a).unwrap()[1].clone();
    let prefix = [CharLabel::Upper, CharLabel::Lower];
    let direct = m.char_logprobs_with_context("macdonald", &ctx, &prefix).unwrap();
    assert_eq!(direct, m.char_transduce_logprobs(&a, 1, &prefix).unwrap());
    // different neighbours, same context vector: identical probabilities
    let other = m.char_logprobs_with_context("macdonald", &ctx, &prefix).unwrap();
    assert_eq!(direct, other);
    // changing only the context moves them
    let shifted: Vec<f64> = ctx.iter().map(|v| v + 1.0).collect();
    assert_ne!(direct, m.char_logprobs_with_context("macdonald", &shifted, &prefix).unwrap());
    assert!(m.char_logprobs_with_context("macdonald", &ctx[..2], &prefix).is_err());
}

#[test]
fn overfit_single_sentence() {
    let m = overfit(tiny(), &["I am"], 150);
    let lp = m.word_tag_logprobs(&s("i am"), &[]).unwrap();
    assert!(lp[1].exp() > 0.99, "{lp:?}");
    assert_eq!(m.truecase(&s("i am"), DecodeMode::BestPath).unwrap(), s("I am"));
}

#[test]
fn overfit_mixed_case_words() {
    let m = overfit(ModelConfig { enc_cells: 24, dec_cells: 24, ..tiny() }, &["I love iPhone", "McDonald's and Hewlett-Packard"], 300);
    assert_eq!(m.truecase(&s("i love iphone"), DecodeMode::BestPath).unwrap(), s("I love iPhone"));
    let x = s("mcdonald's and hewlett-packard");
    let b = m.beam_search_chars(&x, 0, 2).unwrap();
    let want = derive_labels(&x, &s("McDonald's and Hewlett-Packard")).unwrap().char_labels[0].clone();
    assert_eq!(b.best().labels, want);
    assert_eq!(m.truecase(&x, DecodeMode::FullBeam).unwrap(), s("McDonald's and Hewlett-Packard"));
}

#[test]
fn serialization_roundtrip() {
    let m = HierModel::<f32>::new(tiny(), 13).unwrap();
    let bytes = m.to_bytes().unwrap();
    let back = HierModel::<f32>::from_bytes(&bytes).unwrap();
    assert_eq!(back.params(), m.params());
    assert_eq!(back.config(), m.config());
    assert_eq!(back.seed(), 13);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let header = read_model_manifest(&bytes).unwrap();
    assert_eq!(header.param_count, m.param_count());
    assert_eq!(header.beam, 2);
    assert!(HierModel::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());

    let q = m.quantized().unwrap();
    for (a, b) in m.params().iter().zip(q.params()) {
        assert!((a - b).abs() <= 0.08 / 127.0);
    }
    let student = HierModel::<f32>::new(ModelConfig::student(), 1).unwrap();
    let report = student.size_report().unwrap();
    assert_eq!(report.param_count, student.param_count());
    assert!(report.quantized_bytes * 3 < report.float_bytes, "{report:?}");
}



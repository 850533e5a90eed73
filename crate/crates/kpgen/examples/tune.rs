// scratch calibration binary (deleted before final commit)
use kpgen::corpus::{encode_example, Vocabulary};
use kpgen::decode::{exhaustive_decode, self_terminating_decode, Strategy};
use kpgen::eval::{delimiter_following_states, f1_at_m, mean_pairwise_cosine};
use kpgen::corpus::SEP_ID;
use kpgen::loss::{forward_batch, Lambdas};
use kpgen::text::{dedup_phrases, normalize_and_tokenize, Document, Phrase};
use kpgen::train::{train, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool() -> Vec<String> { (0..180).map(|i| format!("w{i:03}")).collect() }

fn overfit_corpus(seed: u64) -> Vec<Document> {
    let words = pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..32).map(|i| {
        let n = rng.gen_range(8..=12);
        let src: Vec<&str> = (0..n).map(|_| words.choose(&mut rng).unwrap().as_str()).collect();
        let mut gold = Vec::new();
        let g = rng.gen_range(2..=3);
        for j in 0..g {
            if j % 2 == 0 {
                let s = rng.gen_range(0..src.len().saturating_sub(1));
                gold.push(Phrase::from_text(&format!("{} {}", src[s], src[s+1])).unwrap());
            } else {
                gold.push(Phrase::from_text(words.choose(&mut rng).unwrap()).unwrap());
            }
        }
        Document { id: format!("d{i}"), source: normalize_and_tokenize(&src.join(" ")),
                   title_len: 0, gold: dedup_phrases(&gold) }
    }).collect()
}

fn prefix_corpus(seed: u64, n_phr: usize, n_pref: usize) -> Vec<Document> {
    let words = pool();
    let prefixes = ["test", "unit", "data", "code", "meta"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..32).map(|i| {
        let mut picks: Vec<&str> = Vec::new();
        while picks.len() < n_phr {
            let w = words.choose(&mut rng).unwrap().as_str();
            if !picks.contains(&w) { picks.push(w); }
        }
        let mut src: Vec<&str> = picks.clone();
        for _ in 0..6 { src.push(words.choose(&mut rng).unwrap().as_str()); }
        // every phrase duplicates one of a handful of corpus-wide prefixes
        let gold: Vec<Phrase> = picks.iter().enumerate()
            .map(|(j, w)| Phrase::from_text(&format!("{} {w}", prefixes[(i + j) % n_pref])).unwrap())
            .collect();
        Document { id: format!("d{i}"), source: normalize_and_tokenize(&src.join(" ")),
                   title_len: 0, gold }
    }).collect()
}

fn cfg(lor: f64, lsc: f64, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig { embedding_dim: 24, hidden: 32, target_encoder_hidden: 32, vocab: 250,
        dropout: 0.0, learning_rate: 5e-3, batch_size: 4, max_epochs: epochs,
        lambda_or: lor, lambda_sc: lsc, negatives: 7, seed }
}

fn main() {
    let t0 = std::time::Instant::now();
    // part 1: overfit speed
    let docs = overfit_corpus(11);
    let c = cfg(0.0, 0.0, 3, 200);
    let out = train(&c, &docs, &docs, |s| {
        if s.epoch % 50 == 0 { eprintln!("epoch {} nll {:.4} val {:.3}", s.epoch, s.mean_nll, s.val_f1_o); }
    }).unwrap();
    let best = out.best.as_ref().unwrap();
    let min_nll = out.history.iter().map(|h| h.mean_nll).fold(f64::INFINITY, f64::min);
    let mut f1m_sum = 0.0;
    for d in &docs {
        let ex = encode_example(d, &best.vocab);
        let r = self_terminating_decode(&best.params, &best.vocab, &ex, Strategy::Greedy, 1, 40, false).unwrap();
        let preds: Vec<Phrase> = r.phrases.into_iter().map(|p| p.phrase).collect();
        f1m_sum += f1_at_m(&preds, &dedup_phrases(&d.gold)).unwrap().f1();
    }
    eprintln!("OVERFIT: min_nll={:.4} best_epoch={} F1M={:.4} elapsed={:?}",
              min_nll, out.best_epoch, f1m_sum / docs.len() as f64, t0.elapsed());

    // part 2: diversity direction with diagnostics
    for (n_phr, n_pref) in [(5usize, 2usize), (5, 4)] {
    for seed in [5u64, 9] {
        let docs = prefix_corpus(100 + seed, n_phr, n_pref);
        let t1 = std::time::Instant::now();
        for (lor, lsc) in [(0.0, 0.0), (1.0, 0.03)] {
            let c = cfg(lor, lsc, seed, 200);
            let out = train(&c, &docs, &docs, |_| {}).unwrap();
            let best = out.best.unwrap();
            let last = out.history.last().unwrap();
            let mut tf_following = Vec::new();
            let mut greedy_following = Vec::new();
            let mut uniq = 0usize;
            let mut f1m_sum = 0.0;
            for d in &docs {
                let ex = encode_example(d, &best.vocab);
                let fwd = forward_batch(&best.params, std::slice::from_ref(&ex), Lambdas::zero(), None, 0, 0, None).unwrap();
                let f = &fwd.examples[0];
                for t in 0..ex.target_len() {
                    if ex.target_ext_ids[t] == SEP_ID && t + 1 < ex.target_len() {
                        tf_following.push(f.steps[t + 1].gru.h_new.clone());
                    }
                }
                for (_, v) in delimiter_following_states(&best.params, &ex, 40, &[1]).unwrap() {
                    greedy_following.push(v);
                }
                let r = exhaustive_decode(&best.params, &best.vocab, &ex, 50, 40, false).unwrap();
                uniq += r.phrases.len();
                let g = self_terminating_decode(&best.params, &best.vocab, &ex, Strategy::Greedy, 1, 40, false).unwrap();
                let preds: Vec<Phrase> = g.phrases.into_iter().map(|p| p.phrase).collect();
                f1m_sum += f1_at_m(&preds, &dedup_phrases(&d.gold)).unwrap().f1();
            }
            eprintln!("phr={n_phr} pref={n_pref} seed={seed} lor={lor} lsc={lsc}: nll={:.4} ep={} cosTF={:.4} cosGR={:.4} (n={}) uniq={:.2} F1M={:.3}",
                last.mean_nll, out.best_epoch,
                mean_pairwise_cosine(&tf_following), mean_pairwise_cosine(&greedy_following),
                greedy_following.len(), uniq as f64 / docs.len() as f64, f1m_sum / docs.len() as f64);
        }
        eprintln!("  elapsed {:?}", t1.elapsed());
    }
    }
}

//! Throwaway diagnostics for calibrating the experiment configs.

use symprobe_core::corpus::*;
use symprobe_core::mlm::*;

fn demo_config(comention_rate: f64) -> CorpusConfig {
    CorpusConfig::from_toml_str(&format!(
        r#"
        [[entity_types]]
        name = "person"
        count = 260
        surface_len = [1, 3]
        [[entity_types]]
        name = "place"
        count = 24
        surface_len = [1, 1]
        [[relations]]
        id = "born-in"
        subject_type = "person"
        answer_type = "place"
        skew = "cooccurrence"
        triples = 120
        distractors = 2
        special_pool = 4
        [[relations]]
        id = "continent"
        subject_type = "person"
        answer_type = "place"
        skew = "label-imbalance"
        majority_fraction = 0.92
        triples = 120
        distractors = 2
        [corpus.splits]
        [splits]
        train = 0.6
        dev = 0.15
        test = 0.25
        [render]
        p_inverse = 0.6
        comention_rate = {comention_rate}
        "#
    ))
    .unwrap()
}

#[test]
#[ignore]
fn backbone_memorization_diagnostic() {
    let cfg = demo_config(3.0);
    let ds = gen_kb(&cfg, 42).unwrap();
    let corpus = render_corpus(&ds, &cfg, 42).unwrap();
    let vocab = Vocab::from_corpus(&corpus);

    for (epochs, lr, mask_rate) in [(40usize, 1e-3, 0.15), (120, 1e-3, 0.15), (120, 2e-3, 0.25)] {
        let train_cfg = MlmTrainConfig {
            epochs,
            batch_size: 16,
            lr,
            mask_rate,
        };
        let arch = MlmConfig::default();
        let out = train_mlm::<f32>(&corpus, &vocab, &arch, &train_cfg, 42).unwrap();
        let mlm = &out.mlm;

        // Literal forward probe: take each test triple's forward sentence,
        // mask the object token, and rank the gold.
        let mut fwd_rank1 = 0usize;
        let mut fwd_top15 = 0usize;
        let mut inv_gold_minus_hub = 0.0f64;
        let mut inv_count = 0usize;
        let mut n = 0usize;
        for &ti in &ds.splits.test {
            let t = &ds.triples[ti];
            let subj = ds.entity(t.subject).surface.clone();
            let obj = &ds.entity(t.object).surface[0];
            // find this triple's forward sentence
            let sent = corpus
                .sentences
                .iter()
                .zip(&corpus.kinds)
                .find(|(s, &k)| {
                    k == SentenceKind::Forward
                        && s.tokens.starts_with(&subj)
                        && s.tokens.last() == Some(obj)
                })
                .map(|(s, _)| s.tokens.clone());
            let Some(mut toks) = sent else { continue };
            n += 1;
            let obj_pos = toks.len() - 1;
            toks[obj_pos] = Vocab::MASK.to_string();
            let ids = vocab.encode_tokens(&toks);
            let input = SlotSequence::from_token_ids(&ids, &vocab).unwrap();
            let fwd = mlm.forward(&input).unwrap();
            let lp = fwd.log_probs_at(obj_pos).unwrap();
            let gold_id = vocab.get(obj).unwrap();
            let rank = lp.iter().filter(|&&v| v > lp[gold_id]).count() + 1;
            if rank == 1 {
                fwd_rank1 += 1;
            }
            if rank <= 15 {
                fwd_top15 += 1;
            }

            // Inverse probe: "obj inv_words subj" with first subject token
            // masked; compare log p(subj token | gold obj) vs | hub obj.
            let inv_sent = corpus
                .sentences
                .iter()
                .zip(&corpus.kinds)
                .find(|(s, &k)| {
                    k == SentenceKind::Inverse
                        && s.tokens.first() == Some(obj)
                        && s.tokens.ends_with(&subj)
                })
                .map(|(s, _)| s.tokens.clone());
            if let Some(inv_toks) = inv_sent {
                let subj_start = inv_toks.len() - subj.len();
                let mut masked = inv_toks.clone();
                masked[subj_start] = Vocab::MASK.to_string();
                let ids = vocab.encode_tokens(&masked);
                let input = SlotSequence::from_token_ids(&ids, &vocab).unwrap();
                let fwd = mlm.forward(&input).unwrap();
                let gold_lp =
                    fwd.log_probs_at(subj_start).unwrap()[vocab.get(&subj[0]).unwrap()] as f64;

                // hub swap
                let hub = t.distractors[0];
                let hub_tok = &ds.entity(hub).surface[0];
                let mut hub_toks = inv_toks.clone();
                hub_toks[0] = hub_tok.clone();
                hub_toks[subj_start] = Vocab::MASK.to_string();
                let ids = vocab.encode_tokens(&hub_toks);
                let input = SlotSequence::from_token_ids(&ids, &vocab).unwrap();
                let fwd = mlm.forward(&input).unwrap();
                let hub_lp =
                    fwd.log_probs_at(subj_start).unwrap()[vocab.get(&subj[0]).unwrap()] as f64;
                inv_gold_minus_hub += gold_lp - hub_lp;
                inv_count += 1;
            }
        }
        println!(
            "epochs={epochs} lr={lr} mask={mask_rate}: final_loss={:.3} | literal fwd P@1 {:.3} top15 {:.3} (n={n}) | inv gold-hub logp gap {:.3} (n={inv_count})",
            out.final_loss,
            fwd_rank1 as f64 / n as f64,
            fwd_top15 as f64 / n as f64,
            inv_gold_minus_hub / inv_count.max(1) as f64,
        );
    }
}

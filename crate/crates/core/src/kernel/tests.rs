use super::*;
use crate::coref::{forced_decode_eval, Method, ResolverSpec};
use crate::linear::parse_text;

fn tiny(dim: usize, layers: usize, seed: u64) -> ModelParams {
    ModelParams::init(&ModelConfig::new(7, 9, dim, layers, seed)).unwrap()
}

fn toy() -> (Vec<String>, LinearizedRepr, Vocab, Vocab) {
    let target = parse_text("[ a_h ( x_h ) ] [ b_h ( @b ) ]\n#coref 9 3").unwrap();
    let source: Vec<String> = ["s1", "s2", "s3", "s4"].iter().map(|s| s.to_string()).collect();
    let src = Vocab::build(source.clone());
    let tgt = Vocab::build(target.tokens().iter().map(|t| t.render(false)));
    (source, target, src, tgt)
}

fn toy_example() -> (TrainingExample, Vocab, Vocab) {
    let (source, target, src, tgt) = toy();
    (TrainingExample::from_linearized(&source, &target, &src, &tgt), src, tgt)
}

fn toy_config(src: &Vocab, tgt: &Vocab, seed: u64) -> ModelConfig {
    ModelConfig::new(src.len(), tgt.len(), 6, 1, seed)
}

#[test]
fn vocab_reserves_control_ids() {
    let v = Vocab::build(["b_h", "a", "@b", "a"]);
    assert_eq!(v.tokens(), ["<s>", "</s>", "<unk>", "@b", "a", "b_h"]);
    assert_eq!(v.id("zzz"), Vocab::UNK);
    assert_eq!(v.bullet(), Some(3));
    assert!(v.is_head(5) && !v.is_head(4) && !v.is_head(3));
}

#[test]
fn example_marks_heads_and_links() {
    let (ex, _, tgt) = toy_example();
    assert_eq!(ex.y.len(), 12);
    assert_eq!(ex.a[9], Some(3));
    assert_eq!(ex.a.iter().filter(|a| a.is_some()).count(), 1);
    assert!(ex.heads[1] && ex.heads[3] && ex.heads[7]);
    assert_eq!(ex.y[9], tgt.bullet().unwrap());
}

#[test]
fn antecedent_moves_to_span_head() {
    let l = parse_text("[ a_h ( m x_h ) ] [ b_h ( @b ) ]\n#coref 10 3").unwrap();
    assert_eq!(head_assignments(&l)[10], Some(4));
}

#[test]
fn config_rejects_zero_dims() {
    let mut c = ModelConfig::new(5, 5, 4, 1, 0);
    c.layers = 0;
    assert!(matches!(ModelParams::init(&c), Err(KernelError::Config(_))));
}

#[test]
fn single_source_token_gets_all_attention() {
    let p = tiny(4, 2, 1);
    let h = encode(&[3], &p).unwrap();
    let state = initial_state(&[3], &p).unwrap();
    let step = decode_step(Vocab::BOS, &state, &h, &p).unwrap();
    assert_eq!(step.alpha, vec![1.0]);
    assert_eq!(step.beta, vec![1.0]);
    assert_eq!(step.c_t, h[0]);
    assert_eq!(step.o_t, h[0]);
}

#[test]
fn single_source_token_concatenates_two_steps() {
    let p = tiny(3, 1, 2);
    let h = encode(&[4], &p).unwrap();
    assert_eq!(h.len(), 1);
    assert_eq!(h[0].len(), 6);
}

#[test]
fn generation_distribution_is_normalized() {
    for seed in 0..5 {
        let p = tiny(8, 2, seed);
        let x = [3, 4, 5, 6];
        let h = encode(&x, &p).unwrap();
        let mut state = initial_state(&x, &p).unwrap();
        let mut prev = Vocab::BOS;
        for _ in 0..5 {
            let step = decode_step(prev, &state, &h, &p).unwrap();
            assert!((step.p_g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((step.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            state = step.state;
            prev = 5;
        }
    }
}

#[test]
fn identical_encoder_states_give_that_state_as_context() {
    let p = tiny(4, 1, 3);
    let hi = vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.2, 0.0, 0.7];
    let h = vec![hi.clone(); 5];
    let state = DecoderState { layers: vec![(vec![0.0; 4], vec![0.0; 4])] };
    let step = decode_step(4, &state, &h, &p).unwrap();
    for (a, b) in step.c_t.iter().zip(&hi) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_weights_give_constant_states() {
    let p = ModelParams::zeros(&ModelConfig::new(7, 9, 3, 2, 0)).unwrap();
    let h = encode(&[3, 4, 5], &p).unwrap();
    // All gates are 1/2 and the candidate is 0, so c and h stay 0.
    for hi in h {
        assert!(hi.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn reversing_input_swaps_directions() {
    let p = tiny(4, 2, 4);
    let mut swapped = p.clone();
    let names: Vec<String> = p.tensors().iter().map(|t| t.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        if let Some(rest) = name.strip_prefix("enc_fwd") {
            let j = names.iter().position(|n| *n == format!("enc_bwd{rest}")).unwrap();
            swapped.tensors_mut()[k].data = p.tensors()[j].data.clone();
            swapped.tensors_mut()[j].data = p.tensors()[k].data.clone();
        }
    }
    let x = [3, 5, 4, 6, 3];
    let rev: Vec<usize> = x.iter().rev().copied().collect();
    let h = encode(&x, &p).unwrap();
    let g = encode(&rev, &swapped).unwrap();
    let n = x.len();
    for i in 0..n {
        let other = &g[n - 1 - i];
        assert_eq!(h[i][..4], other[4..]);
        assert_eq!(h[i][4..], other[..4]);
    }
}

#[test]
fn decode_step_checks_shapes() {
    let p = tiny(4, 2, 5);
    let state = DecoderState { layers: vec![(vec![0.0; 4], vec![0.0; 4])] };
    assert!(decode_step(3, &state, &[vec![0.0; 8]], &p).is_err());
    assert!(matches!(encode(&[99], &p), Err(KernelError::TokenOutOfRange { .. })));
    assert!(matches!(encode(&[], &p), Err(KernelError::EmptySource)));
}

#[test]
fn copy_with_no_candidates_is_dummy() {
    let p = tiny(4, 1, 6);
    let g = gamma(3, &[0.1; 8], &p).unwrap();
    let s = copy_scores(&g, &[], &p).unwrap();
    assert_eq!(s.p_c, vec![1.0]);
}

#[test]
fn copy_scores_decompose() {
    let p = tiny(4, 1, 7);
    let g = |y, v: f64| gamma(y, &[v, -v, 0.5 * v, 0.2, 0.0, v, 0.3, -0.1], &p).unwrap();
    let gt = g(3, 0.2);
    let preceding = vec![g(4, 0.1), g(5, -0.3), g(4, 0.1), g(6, 0.7)];
    let s = copy_scores(&gt, &preceding, &p).unwrap();
    assert_eq!(s.scores[0], 0.0);
    for k in 0..preceding.len() {
        assert!((s.scores[k + 1] - s.s_c - s.s_p[k] - s.s_a[k]).abs() < 1e-12);
    }
    assert_eq!(s.scores[1], s.scores[3]);
    assert!((s.p_c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // s_c moves every non-dummy score equally, so their ranking ignores it.
    let shifted: Vec<f64> = s.scores[1..].iter().map(|v| v - s.s_c).collect();
    let argmax = |xs: &[f64]| (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b });
    assert_eq!(argmax(&s.scores[1..]), argmax(&shifted));
}

#[test]
fn zero_mu_loss_is_generation_cross_entropy() {
    let (ex, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 8)).unwrap();
    let h = encode(&ex.x, &p).unwrap();
    let mut state = initial_state(&ex.x, &p).unwrap();
    let mut prev = Vocab::BOS;
    let mut expected = 0.0;
    for t in 0..=ex.y.len() {
        let step = decode_step(prev, &state, &h, &p).unwrap();
        let target = ex.y.get(t).copied().unwrap_or(Vocab::EOS);
        expected -= step.p_g[target].ln();
        state = step.state;
        prev = target;
    }
    let loss = sequence_nll(&ex, &p, 0.0).unwrap();
    assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    assert!(sequence_nll(&ex, &p, 1.0).unwrap() > loss);
}

#[test]
fn loss_rejects_future_antecedent() {
    let (mut ex, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 8)).unwrap();
    ex.a[9] = Some(10);
    assert!(matches!(sequence_nll(&ex, &p, 1.0), Err(KernelError::BadAssignment { step: 9, antecedent: 10 })));
    ex.a[9] = Some(2);
    assert!(matches!(sequence_nll(&ex, &p, 1.0), Err(KernelError::BadAssignment { .. })));
}

#[test]
fn gradients_match_finite_differences() {
    let (ex, src, tgt) = toy_example();
    for seed in 0..3 {
        let mut c = toy_config(&src, &tgt, seed);
        c.layers = 2;
        c.hidden_dim = 3;
        let p = ModelParams::init(&c).unwrap();
        let g = grad_check(&p, &ex, 1e-3, 1.0).unwrap();
        assert_eq!(g.checked, p.parameter_count());
        assert!(g.max_rel_err < 1e-4, "{g:?}");
    }
}

#[test]
fn unused_embedding_rows_have_zero_gradient() {
    let (ex, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 9)).unwrap();
    let (_, grads) = sequence_nll_grad(&ex, &p, 1.0).unwrap();
    let k = p.tensors().iter().position(|t| t.name == "src_emb").unwrap();
    let dim = p.tensors()[k].cols;
    let row = Vocab::UNK;
    assert!(grads.0[k][row * dim..(row + 1) * dim].iter().all(|&g| g == 0.0));
}

#[test]
fn zero_step_is_rejected() {
    let (ex, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 9)).unwrap();
    assert!(matches!(grad_check(&p, &ex, 0.0, 1.0), Err(KernelError::ZeroStep)));
}

#[test]
fn overfit_single_pair_and_decode_it() {
    let (ex, src, tgt) = toy_example();
    let cfg = TrainConfig {
        epochs: 1000,
        batch_size: 1,
        learning_rate: 0.05,
        schedule: MuSchedule::Fixed(1.0),
        target_loss: Some(0.01),
        ..TrainConfig::default()
    };
    let model = ModelConfig::new(src.len(), tgt.len(), 8, 1, 10);
    let out = train(std::slice::from_ref(&ex), &[], &model, &cfg).unwrap();
    assert!(out.history.last().unwrap().train_loss < 0.01);
    let d = greedy_decode(&ex.x, &out.params, &tgt, 40).unwrap();
    assert_eq!(d.y, ex.y);
    assert_eq!(d.a, ex.a);
    assert!(d.max_norm_error < 1e-6);
}

#[test]
fn zero_length_decode_is_empty() {
    let (ex, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 11)).unwrap();
    let d = greedy_decode(&ex.x, &p, &tgt, 0).unwrap();
    assert!(d.y.is_empty() && d.a.is_empty());
}

#[test]
fn training_is_deterministic() {
    let data =
        synth_dataset(&SynthConfig { splits: Splits { train: 24, validation: 8, test: 0 }, ..SynthConfig::default() })
            .unwrap();
    let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), 4, 1, 12);
    let cfg = TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() };
    let run = || {
        train(&SynthDataset::examples(&data.train), &SynthDataset::examples(&data.validation), &model, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn plateau_schedule_switches_once() {
    let data =
        synth_dataset(&SynthConfig { splits: Splits { train: 16, validation: 4, test: 0 }, ..SynthConfig::default() })
            .unwrap();
    let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), 4, 1, 13);
    let cfg = TrainConfig { epochs: 6, max_pretrain_epochs: 2, ..TrainConfig::default() };
    let out =
        train(&SynthDataset::examples(&data.train), &SynthDataset::examples(&data.validation), &model, &cfg).unwrap();
    assert_eq!(out.switched_at, Some(2));
    let mus: Vec<f64> = out.history.iter().map(|h| h.mu).collect();
    assert_eq!(mus, [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn empty_training_set_is_an_error() {
    let model = ModelConfig::new(5, 5, 4, 1, 0);
    assert!(matches!(train(&[], &[], &model, &TrainConfig::default()), Err(KernelError::EmptyDataset)));
}

#[test]
fn checkpoint_round_trip() {
    let (_, src, tgt) = toy_example();
    let p = ModelParams::init(&toy_config(&src, &tgt, 14)).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &p, &src, &tgt).unwrap();
    assert_eq!(&buf[..8], b"XLSEMCKP");
    let (q, s2, t2) = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(p, q);
    assert_eq!(src, s2);
    assert_eq!(tgt, t2);

    let mut bad = buf.clone();
    bad[0] = b'Y';
    assert!(matches!(read_checkpoint(&bad[..]), Err(KernelError::Checkpoint(_))));
    bad = buf.clone();
    bad[8] = 2;
    assert!(matches!(read_checkpoint(&bad[..]), Err(KernelError::Checkpoint(_))));
    assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
}

#[test]
fn synth_sizes_and_validity() {
    let empty =
        synth_dataset(&SynthConfig { splits: Splits { train: 0, validation: 0, test: 0 }, ..Default::default() })
            .unwrap();
    assert!(empty.train.is_empty() && empty.test.is_empty());

    let d = synth_dataset(&SynthConfig { splits: Splits { train: 50, validation: 5, test: 5 }, ..Default::default() })
        .unwrap();
    let model = ModelConfig::new(d.source_vocab.len(), d.target_vocab.len(), 4, 1, 0);
    for e in &d.train {
        e.example.check(&model).unwrap();
        assert_eq!(e.target.bullet_positions().len(), 1);
        assert!(!e.example.x.contains(&Vocab::UNK) && !e.example.y.contains(&Vocab::UNK));
    }
    let again =
        synth_dataset(&SynthConfig { splits: Splits { train: 50, validation: 5, test: 5 }, ..Default::default() })
            .unwrap();
    assert_eq!(SynthDataset::targets(&d.train), SynthDataset::targets(&again.train));
}

#[test]
fn synth_rejects_too_few_modifiers() {
    let c = SynthConfig { distractors: 4, modifiers: 4, ..Default::default() };
    assert!(matches!(synth_dataset(&c), Err(KernelError::Config(_))));
}

#[test]
fn heuristic_is_exact_without_distractors() {
    let d = synth_dataset(&SynthConfig {
        distractors: 0,
        splits: Splits { train: 0, validation: 0, test: 200 },
        ..Default::default()
    })
    .unwrap();
    let gold = SynthDataset::targets(&d.test);
    let r = forced_decode_eval(&gold, &ResolverSpec { method: Method::Heuristic, seed: 0 }).unwrap();
    assert_eq!(r.report.avg_f1, 1.0);
}

#[test]
fn distractors_separate_the_baselines() {
    let d = synth_dataset(&SynthConfig { splits: Splits { train: 0, validation: 0, test: 400 }, ..Default::default() })
        .unwrap();
    let gold = SynthDataset::targets(&d.test);
    let h = forced_decode_eval(&gold, &ResolverSpec { method: Method::Heuristic, seed: 0 }).unwrap();
    let r = forced_decode_eval(&gold, &ResolverSpec { method: Method::Random, seed: 0 }).unwrap();
    assert!(h.report.avg_f1 < 1.0);
    assert!(r.report.avg_f1 < h.report.avg_f1);
}

#[test]
fn gold_resolver_through_kernel_path_is_scored() {
    let (source, target, src, tgt) = toy();
    let p = ModelParams::init(&toy_config(&src, &tgt, 15)).unwrap();
    let sources = vec![source];
    let r = KernelResolver { params: &p, source_vocab: &src, target_vocab: &tgt, sources: &sources };
    // One preceding head is an argument head, so any pick other than it
    // still lands on a head token before the bullet.
    let out = forced_decode_eval(std::slice::from_ref(&target), &r).unwrap();
    let a = out.predictions[0].assignments()[9].unwrap();
    assert!(a < 9 && target.tokens()[a].is_head_word());
}

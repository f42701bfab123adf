//! Acceptance checks, one line per criterion. Run with
//! `cargo test --release -p xlsem-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xlsem::coref::{assignment_max, forced_decode_eval, CorefReport, MentionChainSet, Method, Metric, ResolverSpec};
use xlsem::fuzz::{perturb, random_governed_graph, random_graph};
use xlsem::kernel::{
    grad_check, greedy_decode, sequence_nll, synth_dataset, train, KernelResolver, ModelConfig, ModelParams,
    MuSchedule, Splits, SynthConfig, SynthDataset, TrainConfig,
};
use xlsem::linear::{default_layout, delinearize, delinearize_with_layout, linearize, parse_text, serialize_text};
use xlsem::metric::{brute_force_match, hill_climb_match, MatchConfig};
use xlsem::repr::{flat_to_graph, graph_to_flat, isomorphic};
use xlsem::sim::{sentence_bleu, SimilaritySpec};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let cfg = MatchConfig::default();
    let (mut exceeded, mut matched, mut climb_sum, mut exact_sum) = (0, 0, 0.0, 0.0);
    let pairs = 500;
    for i in 0..pairs {
        let mut r = rng(1_000 + i);
        let gold = random_graph(&mut r, 6, 0.3);
        let sys = if i % 2 == 0 { perturb(&mut r, &gold) } else { random_graph(&mut r, 6, 0.3) };
        let cfg = MatchConfig { seed: i, ..cfg.clone() };
        let climb = hill_climb_match(&sys, &gold, &cfg).unwrap();
        let exact = brute_force_match(&sys, &gold, &cfg).unwrap();
        exceeded += usize::from(climb.score > exact.score + 1e-9);
        matched += usize::from((climb.score - exact.score).abs() <= 1e-9);
        climb_sum += climb.score;
        exact_sum += exact.score;
    }
    let elapsed = start.elapsed();
    let rate = matched as f64 / pairs as f64;
    let ratio = climb_sum / exact_sum;
    verdict(
        exceeded == 0 && rate >= 0.98 && ratio >= 0.999 && elapsed < Duration::from_secs(10),
        format!(
            "{pairs} pairs, exceeded {exceeded}, optimum {rate:.4}, score ratio {ratio:.6}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn metric_identities() -> Verdict {
    let (mut violations, mut imperfect, mut out_of_range, mut not_dual) = (0, 0, 0, 0);
    let in_range = |v: f64| (0.0..=1.0).contains(&v);
    for i in 0..1000u64 {
        let mut r = rng(2_000 + i);
        let g = random_graph(&mut r, 8, 0.3);
        violations += g.validate().len();
        let same = hill_climb_match(&g, &g, &MatchConfig { seed: i, ..MatchConfig::default() }).unwrap();
        imperfect += usize::from((same.precision, same.recall, same.f1) != (1.0, 1.0, 1.0));

        let a = random_graph(&mut r, 6, 0.3);
        let b = if i % 2 == 0 { perturb(&mut r, &a) } else { random_graph(&mut r, 6, 0.3) };
        let delta = MatchConfig::smatch();
        let ab = brute_force_match(&a, &b, &delta).unwrap();
        let ba = brute_force_match(&b, &a, &delta).unwrap();
        let dual = (ab.precision - ba.recall).abs() < 1e-12 && (ab.recall - ba.precision).abs() < 1e-12;
        not_dual += usize::from(!dual);
        let bleu = brute_force_match(&a, &b, &MatchConfig::default()).unwrap();
        for m in [&same, &ab, &ba, &bleu] {
            out_of_range += usize::from(![m.precision, m.recall, m.f1].into_iter().all(in_range));
        }
    }
    verdict(
        violations + imperfect + out_of_range + not_dual == 0,
        format!(
            "1000 graphs: violations {violations}, self-match not (1,1,1) {imperfect}, out of [0,1] {out_of_range}, P/R not swapped {not_dual}"
        ),
    )
}

fn bleu_fixtures() -> Verdict {
    let toks = |s: &str| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let same = sentence_bleu(&toks("a storm surge"), &toks("a storm surge"), &SimilaritySpec::bleu()).unwrap();
    let same_strict =
        sentence_bleu(&toks("a storm surge"), &toks("a storm surge"), &SimilaritySpec::strict_bleu(4)).unwrap();
    let bp = sentence_bleu(&toks("storm surge"), &toks("a storm surge"), &SimilaritySpec::strict_bleu(2)).unwrap();
    let expected = (-0.5f64).exp();
    let disjoint = sentence_bleu(&toks("the house"), &toks("a storm surge"), &SimilaritySpec::strict_bleu(4)).unwrap();
    verdict(
        same == 1.0 && same_strict == 1.0 && (bp - expected).abs() < 1e-9 && disjoint == 0.0,
        format!("identical {same}, brevity fixture {bp:.12} vs {expected:.12}, disjoint {disjoint}"),
    )
}

fn coref_fixtures() -> Verdict {
    use common::{assignment_oracle, b3_recall_oracle, ceaf_similarity_oracle, entities, muc_recall_oracle, ratio};
    let key = MentionChainSet::new([1, 2, 3], [vec![1, 2, 3]]).unwrap();
    let resp = MentionChainSet::new([1, 2, 3], [vec![1, 2]]).unwrap();
    let report = CorefReport::evaluate(&[(key.clone(), resp.clone())]).unwrap();
    let f1 = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let sim = ceaf_similarity_oracle(&key, &resp);
    let oracle = [
        (muc_recall_oracle(&resp, &key), muc_recall_oracle(&key, &resp)),
        (b3_recall_oracle(&resp, &key), b3_recall_oracle(&key, &resp)),
        (ratio(sim, entities(&resp).len() as f64), ratio(sim, entities(&key).len() as f64)),
    ];
    let b3_f1 = 2.0 * (5.0 / 9.0) / (1.0 + 5.0 / 9.0);
    let stated = [(1.0, 0.5, 2.0 / 3.0), (1.0, 5.0 / 9.0, b3_f1), (0.4, 0.8, 8.0 / 15.0)];
    let stated_avg = (2.0 / 3.0 + b3_f1 + 8.0 / 15.0) / 3.0;
    let mut worst: f64 = 0.0;
    for ((m, (op, or)), (sp, sr, sf)) in Metric::ALL.into_iter().zip(oracle).zip(stated) {
        let prf = report.get(m);
        for (a, b) in [
            (prf.precision, op),
            (prf.recall, or),
            (prf.f1, f1(op, or)),
            (prf.precision, sp),
            (prf.recall, sr),
            (prf.f1, sf),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    let perfect = CorefReport::evaluate(&[(key.clone(), key.clone())]).unwrap();
    let all_one = Metric::ALL.into_iter().all(|m| perfect.get(m).f1 == 1.0);

    let mut hungarian_misses = 0;
    let mut r = rng(4_000);
    for _ in 0..200 {
        let (rows, cols) = (r.gen_range(1..=7), r.gen_range(1..=7));
        let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.gen_range(0.0..1.0)).collect()).collect();
        let total: f64 = assignment_max(&w).iter().map(|&(i, j)| w[i][j]).sum();
        hungarian_misses += usize::from((total - assignment_oracle(&w)).abs() > 1e-9);
    }
    verdict(
        worst < 1e-9 && all_one && hungarian_misses == 0 && (report.avg_f1 - stated_avg).abs() < 1e-9,
        format!(
            "fixture max deviation {worst:.1e}, avg F1 {:.4}, perfect response all 1 {all_one}, assignment mismatches {hungarian_misses}/200",
            report.avg_f1
        ),
    )
}

fn round_trips() -> Verdict {
    let (mut text, mut layout, mut iso, mut flat, mut violations) = (0, 0, 0, 0, 0);
    for i in 0..1000u64 {
        let g = random_governed_graph(&mut rng(5_000 + i), 6, 0.3);
        violations += g.validate().len();
        let back = flat_to_graph(&graph_to_flat(&g).unwrap()).unwrap();
        flat += usize::from(!isomorphic(&g, &back));
        let l = match default_layout(&g).and_then(|s| linearize(&g, &s)) {
            Ok(l) => l,
            Err(_) => {
                iso += 1;
                continue;
            }
        };
        text += usize::from(parse_text(&serialize_text(&l)).ok().as_ref() != Some(&l));
        let (g2, s2) = delinearize_with_layout(&l).unwrap();
        layout += usize::from(linearize(&g2, &s2).ok().as_ref() != Some(&l));
        iso += usize::from(!isomorphic(&g, &delinearize(&l).unwrap()));
    }
    verdict(
        text + layout + iso + flat + violations == 0,
        format!("1000 graphs: text {text}, layout {layout}, graph isomorphism {iso}, flat/graph {flat}, violations {violations} failures"),
    )
}

fn kernel_numerics() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut max_dims = 0;
    let start = Instant::now();
    for seed in 0..20u64 {
        let dims = [2, 3, 4, 5, 6, 8][seed as usize % 6];
        let layers = 1 + seed as usize % 2;
        worst = worst.max(grad_error(seed, dims, layers));
        max_dims = max_dims.max(dims);
    }
    worst = worst.max(grad_error(20, 16, 1));
    let grad_secs = start.elapsed().as_secs_f64();

    let mut norm: f64 = 0.0;
    let data = synth_dataset(&SynthConfig {
        seed: 6,
        splits: Splits { train: 32, validation: 0, test: 20 },
        ..SynthConfig::default()
    })
    .unwrap();
    for seed in 0..20u64 {
        let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), 4 + seed as usize % 5, 1, seed);
        let params = ModelParams::init(&model).unwrap();
        norm = norm.max(max_norm_error(&data, &params));
    }

    let start = Instant::now();
    let examples = SynthDataset::examples(&data.train);
    let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), 16, 1, 6);
    let config = TrainConfig {
        epochs: 5_000,
        batch_size: 8,
        learning_rate: 0.02,
        copy_learning_rate: None,
        schedule: MuSchedule::Fixed(1.0),
        target_loss: Some(0.05),
        ..TrainConfig::default()
    };
    let out = train(&examples, &[], &model, &config).unwrap();
    let loss =
        examples.iter().map(|ex| sequence_nll(ex, &out.params, 1.0).unwrap()).sum::<f64>() / examples.len() as f64;
    let overfit = start.elapsed();
    norm = norm.max(max_norm_error(&data, &out.params));

    verdict(
        worst < 1e-4 && norm <= 1e-6 && loss < 0.05 && overfit < Duration::from_secs(300),
        format!(
            "grad check max rel err {worst:.2e} over 21 models (dims <= 16, {grad_secs:.0}s); normalization error {norm:.1e}; 32-example loss {loss:.4} after {} epochs in {:.0}s",
            out.history.len(),
            overfit.as_secs_f64()
        ),
    )
}

fn grad_error(seed: u64, dims: usize, layers: usize) -> f64 {
    let data = synth_dataset(&SynthConfig {
        seed,
        splits: Splits { train: 1, validation: 0, test: 0 },
        ..SynthConfig::default()
    })
    .unwrap();
    let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), dims, layers, seed);
    let params = ModelParams::init(&model).unwrap();
    grad_check(&params, &data.train[0].example, 1e-3, 1.0).unwrap().max_rel_err
}

fn max_norm_error(data: &SynthDataset, params: &ModelParams) -> f64 {
    data.test
        .iter()
        .chain(&data.train)
        .map(|e| greedy_decode(&e.example.x, params, &data.target_vocab, 60).unwrap().max_norm_error)
        .fold(0.0, f64::max)
}

fn table_ordering() -> Verdict {
    let start = Instant::now();
    let data = synth_dataset(&SynthConfig {
        splits: Splits { train: 1500, validation: 100, test: 2000 },
        ..SynthConfig::default()
    })
    .unwrap();
    let model = ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), 16, 1, 0);
    let out = train(
        &SynthDataset::examples(&data.train),
        &SynthDataset::examples(&data.validation),
        &model,
        &TrainConfig::default(),
    )
    .unwrap();
    let gold = SynthDataset::targets(&data.test);
    let sources = SynthDataset::sources(&data.test);
    let copy = KernelResolver {
        params: &out.params,
        source_vocab: &data.source_vocab,
        target_vocab: &data.target_vocab,
        sources: &sources,
    };
    let copy_f1 = forced_decode_eval(&gold, &copy).unwrap().report.avg_f1;
    let heuristic =
        forced_decode_eval(&gold, &ResolverSpec { method: Method::Heuristic, seed: 0 }).unwrap().report.avg_f1;
    let random = forced_decode_eval(&gold, &ResolverSpec { method: Method::Random, seed: 0 }).unwrap().report.avg_f1;
    verdict(
        copy_f1 >= 0.9 && copy_f1 > heuristic && heuristic > random,
        format!(
            "avg F1 copy {copy_f1:.4} > heuristic {heuristic:.4} > random {random:.4} on {} test sentences, {} distractors ({:.0}s)",
            gold.len(),
            SynthConfig::default().distractors,
            start.elapsed().as_secs_f64()
        ),
    )
}

const CORPUS: &str = "\
[ saw_h ( the man_h ) ] [ left_h ( @b ) ]
#coref 10 3

[ a_h ( x_h ) ( y_h ) ] [ b_h ( @b ) ] [ c_h ( @b ) ]
#coref 12 3
#coref 18 6
";

fn xlsem(dir: &Path, args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_xlsem"))
        .current_dir(dir)
        .env_remove("XLSEM_SEED")
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.success(), out.stdout)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("gold.txt"), CORPUS).unwrap();
    let graphs: String = (0..40u64)
        .map(|i| {
            let g = random_graph(&mut rng(8_000 + i), 7, 0.3);
            serde_json::to_string(&g).unwrap() + "\n"
        })
        .collect();
    let system: String = (0..40u64)
        .map(|i| {
            let mut r = rng(8_000 + i);
            let g = random_graph(&mut r, 7, 0.3);
            serde_json::to_string(&perturb(&mut r, &g)).unwrap() + "\n"
        })
        .collect();
    fs::write(d.join("gold.jsonl"), graphs).unwrap();
    fs::write(d.join("sys.jsonl"), system).unwrap();
    fs::write(d.join("resp.txt"), &xlsem(d, &["resolve", "--method", "heuristic", "--seed", "3", "gold.txt"]).1)
        .unwrap();

    let runs: [&[&str]; 7] = [
        &["score", "sys.jsonl", "gold.jsonl", "--seed", "5", "--oracle"],
        &["convert", "--from", "linear", "--to", "graph", "gold.txt"],
        &["coref-score", "gold.txt", "resp.txt"],
        &["resolve", "--method", "random", "--seed", "7", "gold.txt"],
        &["kernel", "gradcheck", "--dims", "3", "--seed", "4"],
        &[
            "kernel",
            "train-toy",
            "--dims",
            "4",
            "--train",
            "16",
            "--validation",
            "4",
            "--test",
            "8",
            "--epochs",
            "2",
            "--out",
            "toy",
        ],
        &["--json", "score", "--format", "linear", "gold.txt", "gold.txt"],
    ];
    let mut mismatched = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let manifest = format!("m{i}.json");
        let mut first_args = vec!["--workers", "1", "--manifest", &manifest];
        first_args.extend_from_slice(args);
        let (ok, first) = xlsem(d, &first_args);
        let snapshot = fs::read(d.join("toy/model.ckpt")).ok();
        let mut same = ok;
        for workers in ["2", "4"] {
            let (ok, again) = xlsem(d, &["--workers", workers, "rerun", &manifest]);
            same &= ok && again == first && fs::read(d.join("toy/model.ckpt")).ok() == snapshot;
        }
        if !same {
            mismatched.push(args[0]);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!(
            "{} subcommand runs replayed from manifests at 1, 2 and 4 workers; mismatches {:?}",
            runs.len(),
            mismatched
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("metric identities", metric_identities),
        ("BLEU fixtures", bleu_fixtures),
        ("coreference scorer fixtures", coref_fixtures),
        ("round trips", round_trips),
        ("kernel numerics", kernel_numerics),
        ("coreference method ordering", table_ordering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {} {:<28} {}: {}", i + 1, name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KernelError, TrainingExample, Vocab};
use crate::linear::{LinToken, LinearizedRepr};

/// Sizes of a synthetic corpus.
///
/// A sentence mentions one target entity, `distractors` entities with the
/// same head noun but other modifiers, and up to `max_fillers` entities with
/// other heads. The mentions fill clauses of one or two arguments in random
/// order, and a clause somewhere after the target's mentions it again behind
/// the source marker `r`. In the target language that repeat is a bullet
/// linked to the target entity's head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub distractors: usize,
    pub max_fillers: usize,
    pub heads: usize,
    pub modifiers: usize,
    pub predicates: usize,
    pub splits: Splits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            distractors: 2,
            max_fillers: 1,
            heads: 4,
            modifiers: 4,
            predicates: 3,
            splits: Splits { train: 1000, validation: 100, test: 2000 },
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<(), KernelError> {
        if self.modifiers < self.distractors + 1 {
            return Err(KernelError::Config("need a distinct modifier for the target and each distractor".into()));
        }
        if self.heads < 2 && self.max_fillers > 0 {
            return Err(KernelError::Config("fillers need a second head noun".into()));
        }
        if self.heads == 0 || self.predicates == 0 {
            return Err(KernelError::Config("heads and predicates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthExample {
    pub source: Vec<String>,
    pub target: LinearizedRepr,
    pub example: TrainingExample,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub source_vocab: Vocab,
    pub target_vocab: Vocab,
    pub train: Vec<SynthExample>,
    pub validation: Vec<SynthExample>,
    pub test: Vec<SynthExample>,
}

impl SynthDataset {
    pub fn examples(split: &[SynthExample]) -> Vec<TrainingExample> {
        split.iter().map(|e| e.example.clone()).collect()
    }

    pub fn targets(split: &[SynthExample]) -> Vec<LinearizedRepr> {
        split.iter().map(|e| e.target.clone()).collect()
    }

    pub fn sources(split: &[SynthExample]) -> Vec<Vec<String>> {
        split.iter().map(|e| e.source.clone()).collect()
    }
}

/// Source marker of a repeated mention.
const REPEAT: &str = "r";

#[derive(Clone, Copy)]
struct Entity {
    modifier: usize,
    head: usize,
}

struct Sentence {
    source: Vec<String>,
    tokens: Vec<LinToken>,
    links: Vec<(usize, usize)>,
}

fn push_clause(out: &mut Sentence, pred: usize, args: &[Entity]) -> Vec<usize> {
    out.source.push(format!("p{pred}"));
    out.tokens.push(LinToken::OpenPred);
    out.tokens.push(LinToken::head(format!("P{pred}")));
    let mut heads = Vec::new();
    for e in args {
        out.source.push(format!("m{}", e.modifier));
        out.source.push(format!("n{}", e.head));
        out.tokens.push(LinToken::OpenArg);
        out.tokens.push(LinToken::word(format!("M{}", e.modifier)));
        heads.push(out.tokens.len());
        out.tokens.push(LinToken::head(format!("N{}", e.head)));
        out.tokens.push(LinToken::CloseArg);
    }
    out.tokens.push(LinToken::ClosePred);
    heads
}

fn sentence(c: &SynthConfig, rng: &mut ChaCha8Rng) -> Sentence {
    let head = rng.gen_range(0..c.heads);
    let mut modifiers: Vec<usize> = (0..c.modifiers).collect();
    modifiers.shuffle(rng);
    let target = Entity { modifier: modifiers[0], head };
    let mut mentions: Vec<(bool, Entity)> = vec![(true, target)];
    mentions.extend(modifiers[1..=c.distractors].iter().map(|&m| (false, Entity { modifier: m, head })));
    for _ in 0..rng.gen_range(0..=c.max_fillers) {
        let other = (head + rng.gen_range(1..c.heads)) % c.heads;
        mentions.push((false, Entity { modifier: rng.gen_range(0..c.modifiers), head: other }));
    }
    mentions.shuffle(rng);

    let mut clauses: Vec<&[(bool, Entity)]> = Vec::new();
    let mut rest = &mentions[..];
    while !rest.is_empty() {
        let n = rng.gen_range(1..=2).min(rest.len());
        let (clause, tail) = rest.split_at(n);
        clauses.push(clause);
        rest = tail;
    }
    let holder = clauses.iter().position(|c| c.iter().any(|&(t, _)| t)).expect("target is placed");
    let repeat_at = rng.gen_range(holder + 1..=clauses.len());

    let mut out = Sentence { source: Vec::new(), tokens: Vec::new(), links: Vec::new() };
    let mut target_head = 0;
    for i in 0..=clauses.len() {
        if i == repeat_at {
            let pred = rng.gen_range(0..c.predicates);
            out.source.extend([
                format!("p{pred}"),
                REPEAT.to_string(),
                format!("m{}", target.modifier),
                format!("n{}", target.head),
            ]);
            out.tokens.extend([LinToken::OpenPred, LinToken::head(format!("P{pred}")), LinToken::OpenArg]);
            out.links.push((out.tokens.len(), target_head));
            out.tokens.extend([LinToken::Bullet, LinToken::CloseArg, LinToken::ClosePred]);
        }
        let Some(clause) = clauses.get(i) else { break };
        let args: Vec<Entity> = clause.iter().map(|&(_, e)| e).collect();
        let heads = push_clause(&mut out, rng.gen_range(0..c.predicates), &args);
        for (&(is_target, _), h) in clause.iter().zip(heads) {
            if is_target {
                target_head = h;
            }
        }
    }
    out
}

/// Every surface form the generator can emit, so no split sees `<unk>`.
fn vocabularies(c: &SynthConfig) -> (Vocab, Vocab) {
    let mut src = vec![REPEAT.to_string()];
    let mut tgt = vec!["[".to_string(), "]".to_string(), "(".to_string(), ")".to_string(), "@b".to_string()];
    for (prefix, n, head) in [("p", c.predicates, true), ("m", c.modifiers, false), ("n", c.heads, true)] {
        for i in 0..n {
            src.push(format!("{prefix}{i}"));
            let upper = format!("{}{i}", prefix.to_uppercase());
            tgt.push(if head { LinToken::head(upper).render(false) } else { upper });
        }
    }
    (Vocab::build(src), Vocab::build(tgt))
}

/// Generates train, validation and test splits from `config.seed`.
pub fn synth_dataset(config: &SynthConfig) -> Result<SynthDataset, KernelError> {
    config.check()?;
    let (source_vocab, target_vocab) = vocabularies(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut make = |n: usize| -> Result<Vec<SynthExample>, KernelError> {
        (0..n)
            .map(|_| {
                let s = sentence(config, &mut rng);
                let target = LinearizedRepr::from_links(s.tokens, s.links)
                    .map_err(|e| KernelError::Config(format!("generator produced an invalid sequence: {e}")))?;
                let example = TrainingExample::from_linearized(&s.source, &target, &source_vocab, &target_vocab);
                Ok(SynthExample { source: s.source, target, example })
            })
            .collect()
    };
    let train = make(config.splits.train)?;
    let validation = make(config.splits.validation)?;
    let test = make(config.splits.test)?;
    Ok(SynthDataset { source_vocab, target_vocab, train, validation, test })
}

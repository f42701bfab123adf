//! The linearized representation: a bracketed token sequence plus
//! coreference assignments for bullet tokens.
//!
//! Block text format:
//!
//! ```text
//! [ saw_h ] ( John_h ) ( @b )
//! #coref 7 4
//! ```
//!
//! Line 1 holds space-separated tokens. `[`/`]` delimit predicate spans,
//! `(`/`)` argument spans, `@b` (or `•`) is a bullet, and a trailing `_h`
//! marks the head word of its span. A backslash escapes the next character,
//! so `\[`, `\@b`, `a\_h` and `\\` are literal words. Each following line
//! `#coref <bullet> <antecedent>` assigns a bullet to an earlier word, with
//! 0-based positions over line 1.

mod layout;
mod structure;

pub use layout::{default_layout, delinearize, delinearize_with_layout, linearize, Layout, LayoutNode};
pub(crate) use structure::{Item, SpanKind, Structure};

use std::fmt;

use thiserror::Error;

use crate::repr::ReprError;

pub const BULLET_ASCII: &str = "@b";
pub const BULLET_UTF8: &str = "•";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LinToken {
    OpenPred,
    ClosePred,
    OpenArg,
    CloseArg,
    Bullet,
    Word { surface: String, is_head: bool },
}

impl LinToken {
    pub fn word(surface: impl Into<String>) -> Self {
        LinToken::Word { surface: surface.into(), is_head: false }
    }

    pub fn head(surface: impl Into<String>) -> Self {
        LinToken::Word { surface: surface.into(), is_head: true }
    }

    pub fn is_word(&self) -> bool {
        matches!(self, LinToken::Word { .. })
    }

    pub fn is_head_word(&self) -> bool {
        matches!(self, LinToken::Word { is_head: true, .. })
    }

    pub fn surface(&self) -> Option<&str> {
        match self {
            LinToken::Word { surface, .. } => Some(surface),
            _ => None,
        }
    }

    /// Parses one raw token of a block's first line.
    pub fn parse(raw: &str) -> Result<LinToken, String> {
        match raw {
            "[" => return Ok(LinToken::OpenPred),
            "]" => return Ok(LinToken::ClosePred),
            "(" => return Ok(LinToken::OpenArg),
            ")" => return Ok(LinToken::CloseArg),
            BULLET_ASCII | BULLET_UTF8 => return Ok(LinToken::Bullet),
            _ => {}
        }
        let mut decoded: Vec<(char, bool)> = Vec::with_capacity(raw.len());
        let mut chars = raw.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                match chars.next() {
                    Some(next) => decoded.push((next, true)),
                    None => return Err(format!("dangling escape in `{raw}`")),
                }
            } else {
                decoded.push((c, false));
            }
        }
        let n = decoded.len();
        let is_head = n >= 2 && decoded[n - 2] == ('_', false) && decoded[n - 1] == ('h', false);
        let keep = if is_head { n - 2 } else { n };
        let surface: String = decoded[..keep].iter().map(|&(c, _)| c).collect();
        if surface.is_empty() {
            return Err(format!("empty word in `{raw}`"));
        }
        Ok(LinToken::Word { surface, is_head })
    }

    pub fn render(&self, utf8_bullet: bool) -> String {
        match self {
            LinToken::OpenPred => "[".into(),
            LinToken::ClosePred => "]".into(),
            LinToken::OpenArg => "(".into(),
            LinToken::CloseArg => ")".into(),
            LinToken::Bullet => if utf8_bullet { BULLET_UTF8 } else { BULLET_ASCII }.into(),
            LinToken::Word { surface, is_head } => {
                let mut out = surface.replace('\\', "\\\\");
                if matches!(surface.as_str(), "[" | "]" | "(" | ")" | BULLET_ASCII | BULLET_UTF8) {
                    out.insert(0, '\\');
                } else if out.ends_with("_h") {
                    out.insert(out.len() - 2, '\\');
                }
                if *is_head {
                    out.push_str("_h");
                }
                out
            }
        }
    }
}

impl fmt::Display for LinToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unbalanced span: {0}")]
    Unbalanced(String),
    #[error("span opened at {open} has {heads} heads at its top level, expected exactly one")]
    HeadCount { open: usize, heads: usize },
    #[error("bullet at {0} has no coreference assignment")]
    UnassignedBullet(usize),
    #[error("bad coreference assignment {from} -> {to}: {reason}")]
    BadAssignment { from: usize, to: usize, reason: String },
    #[error("word `{surface}` at {position} is outside every span")]
    StrayWord { position: usize, surface: String },
    #[error("bullet at {0} must form a whole argument span")]
    EmbeddedBullet(usize),
    #[error("antecedent {antecedent} of bullet {bullet} is not inside any span")]
    AntecedentOutsideSpan { bullet: usize, antecedent: usize },
    #[error("argument span at {0} has no governing predicate")]
    NoGovernor(usize),
    #[error("argument span at {open} has {count} sibling predicate spans")]
    AmbiguousGovernor { open: usize, count: usize },
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("ordering conflict: {0}")]
    Ordering(String),
    #[error(transparent)]
    Graph(#[from] ReprError),
}

/// A token sequence `Y` with one coreference assignment per position;
/// `None` is the dummy antecedent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearizedRepr {
    tokens: Vec<LinToken>,
    assignments: Vec<Option<usize>>,
}

impl LinearizedRepr {
    /// Builds a representation after checking every invariant.
    pub fn new(tokens: Vec<LinToken>, assignments: Vec<Option<usize>>) -> Result<Self, LinearError> {
        if tokens.len() != assignments.len() {
            return Err(LinearError::Unbalanced(format!(
                "{} tokens but {} assignments",
                tokens.len(),
                assignments.len()
            )));
        }
        let repr = LinearizedRepr { tokens, assignments };
        repr.check()?;
        Ok(repr)
    }

    /// Builds from tokens and `(bullet, antecedent)` links.
    pub fn from_links(
        tokens: Vec<LinToken>,
        links: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, LinearError> {
        let mut assignments = vec![None; tokens.len()];
        for (from, to) in links {
            if from >= tokens.len() {
                return Err(LinearError::BadAssignment { from, to, reason: "bullet position out of range".into() });
            }
            if assignments[from].replace(to).is_some() {
                return Err(LinearError::BadAssignment { from, to, reason: "bullet assigned twice".into() });
            }
        }
        Self::new(tokens, assignments)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[LinToken] {
        &self.tokens
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bullet_positions(&self) -> Vec<usize> {
        self.tokens.iter().enumerate().filter(|(_, t)| **t == LinToken::Bullet).map(|(i, _)| i).collect()
    }

    /// `(bullet, antecedent)` pairs in position order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        self.assignments.iter().enumerate().filter_map(|(i, a)| a.map(|a| (i, a))).collect()
    }

    /// Same tokens, different assignments. Bullets may be left unassigned
    /// here (a resolver found no candidate); every other invariant is kept.
    pub fn with_assignments(&self, assignments: Vec<Option<usize>>) -> Result<Self, LinearError> {
        if assignments.len() != self.tokens.len() {
            return Err(LinearError::BadAssignment {
                from: assignments.len(),
                to: self.tokens.len(),
                reason: "assignment vector length differs from token count".into(),
            });
        }
        let repr = LinearizedRepr { tokens: self.tokens.clone(), assignments };
        repr.check_assignments(true)?;
        Ok(repr)
    }

    pub(crate) fn structure(&self) -> Structure {
        Structure::build(&self.tokens).expect("validated representation has balanced spans")
    }

    fn check(&self) -> Result<(), LinearError> {
        let structure = Structure::build(&self.tokens)?;
        for (idx, span) in structure.spans.iter().enumerate() {
            if structure.is_wrapper(idx) {
                continue;
            }
            let heads = span
                .items
                .iter()
                .filter(|item| match item {
                    Item::Word(p) => self.tokens[*p].is_head_word(),
                    Item::Bullet(_) => true,
                    Item::Span(_) => false,
                })
                .count();
            if heads != 1 {
                return Err(LinearError::HeadCount { open: span.open, heads });
            }
        }
        self.check_assignments(false)
    }

    fn check_assignments(&self, allow_unassigned: bool) -> Result<(), LinearError> {
        for (t, (token, a)) in self.tokens.iter().zip(&self.assignments).enumerate() {
            match (token, a) {
                (LinToken::Bullet, None) if !allow_unassigned => return Err(LinearError::UnassignedBullet(t)),
                (LinToken::Bullet, None) => {}
                (LinToken::Bullet, Some(a)) => {
                    let bad = |reason: &str| LinearError::BadAssignment { from: t, to: *a, reason: reason.into() };
                    if *a >= t {
                        return Err(bad("antecedent does not precede the bullet"));
                    }
                    if !self.tokens[*a].is_word() {
                        return Err(bad("antecedent is not a word"));
                    }
                }
                (_, Some(a)) => {
                    return Err(LinearError::BadAssignment {
                        from: t,
                        to: *a,
                        reason: "only bullets take an antecedent".into(),
                    })
                }
                (_, None) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SerializeOptions {
    /// Emit `•` instead of the ASCII alias `@b`.
    pub utf8_bullet: bool,
}

/// Parses one block (no blank lines).
pub fn parse_text(block: &str) -> Result<LinearizedRepr, LinearError> {
    let mut lines = block.split('\n');
    let first = lines.next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut column = 1;
    for raw in first.split(' ') {
        if raw.is_empty() {
            if !first.is_empty() {
                return Err(LinearError::Parse {
                    line: 1,
                    column,
                    message: "tokens must be separated by single spaces".into(),
                });
            }
        } else {
            let token = LinToken::parse(raw).map_err(|message| LinearError::Parse { line: 1, column, message })?;
            tokens.push(token);
        }
        column += raw.chars().count() + 1;
    }

    let mut links = Vec::new();
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        let parse_err = |message: String| LinearError::Parse { line: lineno, column: 1, message };
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 || fields[0] != "#coref" {
            return Err(parse_err(format!("expected `#coref <bullet> <antecedent>`, found `{line}`")));
        }
        let pos = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("`{s}` is not a position")));
        let (from, to) = (pos(fields[1])?, pos(fields[2])?);
        if from >= tokens.len() || to >= tokens.len() {
            return Err(LinearError::BadAssignment { from, to, reason: "position out of range".into() });
        }
        if tokens[from] != LinToken::Bullet {
            return Err(LinearError::BadAssignment { from, to, reason: "coref line names a non-bullet".into() });
        }
        links.push((from, to));
    }
    LinearizedRepr::from_links(tokens, links)
}

pub fn serialize_text(repr: &LinearizedRepr) -> String {
    serialize_text_with(repr, SerializeOptions::default())
}

pub fn serialize_text_with(repr: &LinearizedRepr, options: SerializeOptions) -> String {
    let mut out = repr.tokens.iter().map(|t| t.render(options.utf8_bullet)).collect::<Vec<_>>().join(" ");
    for (from, to) in repr.links() {
        out.push_str(&format!("\n#coref {from} {to}"));
    }
    out
}

/// Splits a corpus file into blocks. Blocks are separated by one blank line;
/// an empty file has no blocks.
pub fn split_blocks(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split("\n\n").collect()
}

/// Joins blocks into corpus text; inverse of [`split_blocks`].
pub fn join_blocks<S: AsRef<str>>(blocks: &[S]) -> String {
    if blocks.is_empty() {
        return String::new();
    }
    let mut out = blocks.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n\n");
    out.push('\n');
    out
}

#[derive(Debug, Error)]
#[error("block {block}: {source}")]
pub struct CorpusError {
    pub block: usize,
    #[source]
    pub source: LinearError,
}

pub fn parse_corpus(text: &str) -> Result<Vec<LinearizedRepr>, CorpusError> {
    split_blocks(text)
        .into_iter()
        .enumerate()
        .map(|(block, b)| parse_text(b).map_err(|source| CorpusError { block, source }))
        .collect()
}

pub fn serialize_corpus(reprs: &[LinearizedRepr], options: SerializeOptions) -> String {
    let blocks: Vec<String> = reprs.iter().map(|r| serialize_text_with(r, options)).collect();
    join_blocks(&blocks)
}

use super::{LinToken, LinearError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SpanKind {
    Pred,
    Arg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Item {
    Word(usize),
    Bullet(usize),
    Span(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct SpanNode {
    pub kind: SpanKind,
    pub open: usize,
    pub close: usize,
    pub parent: Option<usize>,
    pub items: Vec<Item>,
}

/// Nesting of spans over a token sequence. Spans are indexed in opening
/// order.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    pub spans: Vec<SpanNode>,
    pub top: Vec<Item>,
    /// Innermost span containing each position (brackets belong to their own
    /// span).
    pub owner: Vec<Option<usize>>,
}

impl Structure {
    pub fn build(tokens: &[LinToken]) -> Result<Structure, LinearError> {
        let mut spans: Vec<SpanNode> = Vec::new();
        let mut top = Vec::new();
        let mut owner = vec![None; tokens.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (pos, token) in tokens.iter().enumerate() {
            let item = match token {
                LinToken::OpenPred | LinToken::OpenArg => {
                    let kind = if *token == LinToken::OpenPred { SpanKind::Pred } else { SpanKind::Arg };
                    let idx = spans.len();
                    spans.push(SpanNode {
                        kind,
                        open: pos,
                        close: pos,
                        parent: stack.last().copied(),
                        items: Vec::new(),
                    });
                    let item = Item::Span(idx);
                    match stack.last() {
                        Some(&parent) => spans[parent].items.push(item),
                        None => top.push(item),
                    }
                    stack.push(idx);
                    owner[pos] = Some(idx);
                    continue;
                }
                LinToken::ClosePred | LinToken::CloseArg => {
                    let expected = if *token == LinToken::ClosePred { SpanKind::Pred } else { SpanKind::Arg };
                    match stack.pop() {
                        Some(idx) if spans[idx].kind == expected => {
                            spans[idx].close = pos;
                            owner[pos] = Some(idx);
                        }
                        Some(idx) => {
                            return Err(LinearError::Unbalanced(format!(
                                "`{token}` at {pos} closes the span opened at {}",
                                spans[idx].open
                            )))
                        }
                        None => return Err(LinearError::Unbalanced(format!("`{token}` at {pos} closes nothing"))),
                    }
                    continue;
                }
                LinToken::Bullet => Item::Bullet(pos),
                LinToken::Word { .. } => Item::Word(pos),
            };
            owner[pos] = stack.last().copied();
            match stack.last() {
                Some(&parent) => spans[parent].items.push(item),
                None => top.push(item),
            }
        }
        if let Some(&idx) = stack.last() {
            return Err(LinearError::Unbalanced(format!("span opened at {} is never closed", spans[idx].open)));
        }
        Ok(Structure { spans, top, owner })
    }

    /// An argument span whose only item is a predicate span: a clausal
    /// argument standing for that predicate's event.
    pub fn is_wrapper(&self, idx: usize) -> bool {
        let span = &self.spans[idx];
        span.kind == SpanKind::Arg
            && matches!(span.items[..], [Item::Span(inner)] if self.spans[inner].kind == SpanKind::Pred)
    }

    /// An argument span consisting of a single bullet.
    pub fn lone_bullet(&self, idx: usize) -> Option<usize> {
        let span = &self.spans[idx];
        match span.items[..] {
            [Item::Bullet(p)] if span.kind == SpanKind::Arg => Some(p),
            _ => None,
        }
    }

    pub fn items_of(&self, parent: Option<usize>) -> &[Item] {
        match parent {
            Some(idx) => &self.spans[idx].items,
            None => &self.top,
        }
    }

    /// Position of a span's head token: its top-level head word or bullet,
    /// or for a wrapper the head of the wrapped predicate.
    pub fn head_position(&self, tokens: &[LinToken], idx: usize) -> Option<usize> {
        if self.is_wrapper(idx) {
            if let [Item::Span(inner)] = self.spans[idx].items[..] {
                return self.head_position(tokens, inner);
            }
        }
        self.spans[idx].items.iter().find_map(|item| match *item {
            Item::Word(p) if tokens[p].is_head_word() => Some(p),
            Item::Bullet(p) => Some(p),
            _ => None,
        })
    }

    /// Innermost argument span containing a position.
    pub fn enclosing_arg(&self, pos: usize) -> Option<usize> {
        let mut cur = self.owner[pos];
        while let Some(idx) = cur {
            if self.spans[idx].kind == SpanKind::Arg {
                return Some(idx);
            }
            cur = self.spans[idx].parent;
        }
        None
    }
}

//! Conversion between linearized and graph representations.
//!
//! Reading a linearized sequence:
//!
//! * every predicate span `[ .. ]` introduces an event variable, every
//!   argument span `( .. )` an entity variable, except for two argument
//!   shapes that refer to an existing variable: a lone bullet `( @b )` and a
//!   clausal wrapper `( [ .. ] )` around a single predicate span;
//! * the instance of a variable is the list of words at the top level of its
//!   span (nested spans excluded);
//! * an argument item is governed by the unique predicate span among its
//!   siblings, or failing that by the nearest enclosing predicate span. An
//!   argument at the top level with neither is an ungoverned root;
//! * a bullet stands for the variable owning its antecedent word, i.e. the
//!   innermost span containing that word.
//!
//! A [`Layout`] records how the variables of a graph are arranged as
//! tokens, so a graph produced by [`delinearize_with_layout`] can be
//! rendered back to the identical sequence.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::structure::{Item, SpanKind, Structure};
use super::{LinToken, LinearError, LinearizedRepr};
use crate::repr::{Edge, GraphRepr, TokenSpan, VarKind, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutNode {
    /// The next word of the enclosing span's instance.
    Word,
    /// `[ .. ]` for an event, `( .. )` for an entity.
    Span { var: String, items: Vec<LayoutNode> },
    /// `( [ .. ] )`: an event used as an argument.
    Wrapped { var: String, items: Vec<LayoutNode> },
    /// `( @b )` linked to the `word`-th word of `target`.
    Bullet { target: String, word: usize },
}

/// The nesting plan of a linearization: top-level nodes in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Layout {
    pub roots: Vec<LayoutNode>,
}

impl Layout {
    /// Variables in the order their spans open.
    pub fn vars_in_order(&self) -> Vec<&str> {
        fn walk<'a>(nodes: &'a [LayoutNode], out: &mut Vec<&'a str>) {
            for node in nodes {
                match node {
                    LayoutNode::Span { var, items } | LayoutNode::Wrapped { var, items } => {
                        out.push(var);
                        walk(items, out);
                    }
                    LayoutNode::Word | LayoutNode::Bullet { .. } => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.roots, &mut out);
        out
    }

    pub fn bullet_count(&self) -> usize {
        fn walk(nodes: &[LayoutNode]) -> usize {
            nodes
                .iter()
                .map(|n| match n {
                    LayoutNode::Bullet { .. } => 1,
                    LayoutNode::Span { items, .. } | LayoutNode::Wrapped { items, .. } => walk(items),
                    LayoutNode::Word => 0,
                })
                .sum()
        }
        walk(&self.roots)
    }
}

pub fn delinearize(repr: &LinearizedRepr) -> Result<GraphRepr, LinearError> {
    delinearize_with_layout(repr).map(|(g, _)| g)
}

pub fn delinearize_with_layout(repr: &LinearizedRepr) -> Result<(GraphRepr, Layout), LinearError> {
    let tokens = repr.tokens();
    let s = repr.structure();

    for (b, a) in repr.links() {
        if s.owner[a].is_none() {
            return Err(LinearError::AntecedentOutsideSpan { bullet: b, antecedent: a });
        }
    }
    for item in &s.top {
        match *item {
            Item::Word(p) => {
                return Err(LinearError::StrayWord {
                    position: p,
                    surface: tokens[p].surface().unwrap_or_default().to_string(),
                })
            }
            Item::Bullet(p) => return Err(LinearError::EmbeddedBullet(p)),
            Item::Span(_) => {}
        }
    }
    for (idx, span) in s.spans.iter().enumerate() {
        for item in &span.items {
            if let Item::Bullet(p) = *item {
                if s.lone_bullet(idx).is_none() {
                    return Err(LinearError::EmbeddedBullet(p));
                }
            }
        }
    }

    // Variables in opening order.
    let mut graph = GraphRepr::new();
    let mut var_of: Vec<Option<String>> = vec![None; s.spans.len()];
    let (mut events, mut entities) = (0, 0);
    for (idx, span) in s.spans.iter().enumerate() {
        let var = match span.kind {
            SpanKind::Pred => {
                events += 1;
                Variable::event(format!("e{events}"))
            }
            SpanKind::Arg if s.lone_bullet(idx).is_some() || s.is_wrapper(idx) => continue,
            SpanKind::Arg => {
                entities += 1;
                Variable::entity(format!("x{entities}"))
            }
        };
        let words: Vec<usize> = span
            .items
            .iter()
            .filter_map(|i| match *i {
                Item::Word(p) => Some(p),
                _ => None,
            })
            .collect();
        let head_index = words
            .iter()
            .position(|&p| tokens[p].is_head_word())
            .ok_or(LinearError::HeadCount { open: span.open, heads: 0 })?;
        let surfaces = words.iter().map(|&p| tokens[p].surface().unwrap_or_default().to_string());
        var_of[idx] = Some(var.id.clone());
        graph.add_var(var, TokenSpan::new(surfaces, head_index));
    }

    // Bullet targets: (variable, word index within its span).
    let mut bullet_target: HashMap<usize, (String, usize)> = HashMap::new();
    for idx in 0..s.spans.len() {
        let Some(b) = s.lone_bullet(idx) else { continue };
        let a = repr.assignments()[b].ok_or(LinearError::UnassignedBullet(b))?;
        let owner = s.owner[a].ok_or(LinearError::AntecedentOutsideSpan { bullet: b, antecedent: a })?;
        let var = var_of[owner].clone().ok_or(LinearError::AntecedentOutsideSpan { bullet: b, antecedent: a })?;
        let word = s.spans[owner]
            .items
            .iter()
            .filter(|i| matches!(i, Item::Word(_)))
            .position(|i| *i == Item::Word(a))
            .expect("antecedent word is an item of its owner");
        bullet_target.insert(idx, (var, word));
    }

    let dependent_var = |idx: usize| -> String {
        if let Some((var, _)) = bullet_target.get(&idx) {
            return var.clone();
        }
        if s.is_wrapper(idx) {
            if let [Item::Span(inner)] = s.spans[idx].items[..] {
                return var_of[inner].clone().expect("predicate spans carry variables");
            }
        }
        var_of[idx].clone().expect("argument spans carry variables")
    };

    for (idx, span) in s.spans.iter().enumerate() {
        if span.kind != SpanKind::Arg {
            continue;
        }
        let siblings: Vec<usize> = s
            .items_of(span.parent)
            .iter()
            .filter_map(|i| match *i {
                Item::Span(j) if s.spans[j].kind == SpanKind::Pred => Some(j),
                _ => None,
            })
            .collect();
        let governor = match siblings[..] {
            [only] => Some(only),
            [] => {
                let mut cur = span.parent;
                let mut found = None;
                while let Some(p) = cur {
                    if s.spans[p].kind == SpanKind::Pred {
                        found = Some(p);
                        break;
                    }
                    cur = s.spans[p].parent;
                }
                found
            }
            _ => return Err(LinearError::AmbiguousGovernor { open: span.open, count: siblings.len() }),
        };
        match governor {
            Some(g) => {
                let gov = var_of[g].clone().expect("predicate spans carry variables");
                graph.edges.push(Edge::arg(gov, dependent_var(idx)));
            }
            None if span.parent.is_none() && s.lone_bullet(idx).is_none() => {}
            None => return Err(LinearError::NoGovernor(span.open)),
        }
    }
    graph.ensure_valid()?;

    fn node(
        s: &Structure,
        idx: usize,
        var_of: &[Option<String>],
        bullets: &HashMap<usize, (String, usize)>,
    ) -> LayoutNode {
        if let Some((target, word)) = bullets.get(&idx) {
            return LayoutNode::Bullet { target: target.clone(), word: *word };
        }
        if s.is_wrapper(idx) {
            if let [Item::Span(inner)] = s.spans[idx].items[..] {
                return LayoutNode::Wrapped {
                    var: var_of[inner].clone().expect("predicate spans carry variables"),
                    items: items(s, &s.spans[inner].items, var_of, bullets),
                };
            }
        }
        LayoutNode::Span {
            var: var_of[idx].clone().expect("spans carry variables"),
            items: items(s, &s.spans[idx].items, var_of, bullets),
        }
    }
    fn items(
        s: &Structure,
        list: &[Item],
        var_of: &[Option<String>],
        bullets: &HashMap<usize, (String, usize)>,
    ) -> Vec<LayoutNode> {
        list.iter()
            .map(|i| match *i {
                Item::Word(_) => LayoutNode::Word,
                Item::Span(j) => node(s, j, var_of, bullets),
                Item::Bullet(_) => unreachable!("bullets outside lone spans were rejected"),
            })
            .collect()
    }
    let layout = Layout { roots: items(&s, &s.top, &var_of, &bullet_target) };
    Ok((graph, layout))
}

/// Renders a graph along a layout. The result is checked by reading it back:
/// the layout must reproduce exactly the graph's edges.
pub fn linearize(graph: &GraphRepr, layout: &Layout) -> Result<LinearizedRepr, LinearError> {
    graph.ensure_valid()?;
    let kinds: HashMap<&str, VarKind> = graph.vars.iter().map(|v| (v.id.as_str(), v.kind)).collect();

    // Every variable exactly once.
    let order = layout.vars_in_order();
    let mut seen = BTreeSet::new();
    for var in &order {
        if !kinds.contains_key(var) {
            return Err(LinearError::Skeleton(format!("unknown variable `{var}`")));
        }
        if !seen.insert(*var) {
            return Err(LinearError::Skeleton(format!("variable `{var}` placed twice")));
        }
    }
    if let Some(missing) = graph.vars.iter().find(|v| !seen.contains(v.id.as_str())) {
        return Err(LinearError::Skeleton(format!("variable `{}` is not placed", missing.id)));
    }

    struct Render<'g> {
        graph: &'g GraphRepr,
        kinds: HashMap<&'g str, VarKind>,
        tokens: Vec<LinToken>,
        word_pos: HashMap<String, Vec<usize>>,
        bullets: Vec<(usize, String, usize)>,
    }

    impl Render<'_> {
        fn items(&mut self, var: Option<&str>, items: &[LayoutNode]) -> Result<(), LinearError> {
            let mut next_word = 0;
            for node in items {
                match node {
                    LayoutNode::Word => {
                        let var = var.ok_or_else(|| LinearError::Skeleton("word outside every span".into()))?;
                        let span = &self.graph.instances[var];
                        let surface = span.tokens.get(next_word).ok_or_else(|| {
                            LinearError::Skeleton(format!("`{var}` has only {} words", span.tokens.len()))
                        })?;
                        self.word_pos.entry(var.to_string()).or_default().push(self.tokens.len());
                        self.tokens
                            .push(LinToken::Word { surface: surface.clone(), is_head: next_word == span.head_index });
                        next_word += 1;
                    }
                    LayoutNode::Span { var: child, items } => {
                        let (open, close) = match self.kinds[child.as_str()] {
                            VarKind::Event => (LinToken::OpenPred, LinToken::ClosePred),
                            VarKind::Entity => (LinToken::OpenArg, LinToken::CloseArg),
                        };
                        self.tokens.push(open);
                        self.items(Some(child), items)?;
                        self.tokens.push(close);
                    }
                    LayoutNode::Wrapped { var: child, items } => {
                        if self.kinds[child.as_str()] != VarKind::Event {
                            return Err(LinearError::Skeleton(format!(
                                "entity `{child}` cannot be wrapped as a clause"
                            )));
                        }
                        self.tokens.extend([LinToken::OpenArg, LinToken::OpenPred]);
                        self.items(Some(child), items)?;
                        self.tokens.extend([LinToken::ClosePred, LinToken::CloseArg]);
                    }
                    LayoutNode::Bullet { target, word } => {
                        if !self.kinds.contains_key(target.as_str()) {
                            return Err(LinearError::Skeleton(format!("bullet targets unknown variable `{target}`")));
                        }
                        self.tokens.push(LinToken::OpenArg);
                        self.bullets.push((self.tokens.len(), target.clone(), *word));
                        self.tokens.push(LinToken::Bullet);
                        self.tokens.push(LinToken::CloseArg);
                    }
                }
            }
            if let Some(var) = var {
                let expected = self.graph.instances[var].tokens.len();
                if next_word != expected {
                    return Err(LinearError::Skeleton(format!("`{var}` places {next_word} of its {expected} words")));
                }
            }
            Ok(())
        }
    }

    let mut r = Render { graph, kinds, tokens: Vec::new(), word_pos: HashMap::new(), bullets: Vec::new() };
    r.items(None, &layout.roots)?;

    let mut assignments = vec![None; r.tokens.len()];
    for (pos, target, word) in &r.bullets {
        let antecedent = *r.word_pos[target].get(*word).ok_or_else(|| {
            LinearError::Skeleton(format!("bullet at {pos} names word {word} of `{target}`, which does not exist"))
        })?;
        if antecedent >= *pos {
            return Err(LinearError::Ordering(format!(
                "bullet at {pos} would point forward to word {antecedent} of `{target}`"
            )));
        }
        assignments[*pos] = Some(antecedent);
    }
    let repr = LinearizedRepr::new(r.tokens, assignments)?;

    let (read_back, _) = delinearize_with_layout(&repr)?;
    let rename: HashMap<&str, &str> = read_back.vars.iter().map(|v| v.id.as_str()).zip(order.iter().copied()).collect();
    let implied: BTreeSet<(&str, &str)> =
        read_back.edges.iter().map(|e| (rename[e.governor.as_str()], rename[e.dependent.as_str()])).collect();
    let wanted: BTreeSet<(&str, &str)> =
        graph.edges.iter().map(|e| (e.governor.as_str(), e.dependent.as_str())).collect();
    if implied != wanted {
        let extra: Vec<String> = implied.difference(&wanted).map(|(g, d)| format!("ARG({g}, {d})")).collect();
        let missing: Vec<String> = wanted.difference(&implied).map(|(g, d)| format!("ARG({g}, {d})")).collect();
        return Err(LinearError::Skeleton(format!(
            "layout implies [{}] and omits [{}]",
            extra.join(", "),
            missing.join(", ")
        )));
    }
    Ok(repr)
}

/// The default nesting plan.
///
/// Each event's span holds its own words followed by its dependents; an
/// event dependent is wrapped as `( [ .. ] )`. The first visit of a variable
/// renders it in full and later visits become bullets pointing at its head.
/// When every span carries origin positions, words and dependents inside a
/// span, and the top-level roots, are ordered by target-sentence position
/// instead.
pub fn default_layout(graph: &GraphRepr) -> Result<Layout, LinearError> {
    graph.ensure_valid()?;
    let n = graph.vars.len();
    let index: HashMap<&str, usize> = graph.vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
    let spans: Vec<&TokenSpan> = graph.vars.iter().map(|v| &graph.instances[&v.id]).collect();
    let use_origins = n > 0 && spans.iter().all(|s| s.origin_positions.is_some());
    let key = |v: usize| if use_origins { spans[v].head_origin().unwrap_or(0) } else { 0 };

    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for e in &graph.edges {
        let (g, d) = (index[e.governor.as_str()], index[e.dependent.as_str()]);
        deps[g].push(d);
        indegree[d] += 1;
    }
    for list in &mut deps {
        list.sort_by_key(|&d| key(d));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| key(v));

    let roots: Vec<usize> = order.iter().copied().filter(|&v| indegree[v] == 0).collect();
    let wrap_roots = roots.iter().any(|&v| graph.vars[v].kind == VarKind::Entity);

    struct Planner<'g> {
        graph: &'g GraphRepr,
        spans: Vec<&'g TokenSpan>,
        deps: Vec<Vec<usize>>,
        placed: Vec<bool>,
        use_origins: bool,
    }

    enum Slot {
        Word,
        Dep(usize),
    }

    impl Planner<'_> {
        fn place(&mut self, v: usize, wrapped: bool) -> LayoutNode {
            self.placed[v] = true;
            let var = self.graph.vars[v].id.clone();
            let words = self.spans[v].tokens.len();
            if self.graph.vars[v].kind == VarKind::Entity {
                return LayoutNode::Span { var, items: vec![LayoutNode::Word; words] };
            }
            let mut slots: Vec<(usize, u8, Slot)> = Vec::with_capacity(words + self.deps[v].len());
            for w in 0..words {
                let k = if self.use_origins { self.spans[v].origin_positions.as_ref().map_or(0, |o| o[w]) } else { 0 };
                slots.push((k, 0, Slot::Word));
            }
            for &d in &self.deps[v] {
                let k = if self.use_origins { self.spans[d].head_origin().unwrap_or(0) } else { 0 };
                slots.push((k, 1, Slot::Dep(d)));
            }
            if self.use_origins {
                slots.sort_by_key(|(k, tie, _)| (*k, *tie));
            }
            let mut items = Vec::with_capacity(slots.len());
            for (_, _, slot) in slots {
                items.push(match slot {
                    Slot::Word => LayoutNode::Word,
                    Slot::Dep(d) if self.placed[d] => {
                        LayoutNode::Bullet { target: self.graph.vars[d].id.clone(), word: self.spans[d].head_index }
                    }
                    Slot::Dep(d) => self.place(d, true),
                });
            }
            if wrapped {
                LayoutNode::Wrapped { var, items }
            } else {
                LayoutNode::Span { var, items }
            }
        }
    }

    let mut planner = Planner { graph, spans, deps, placed: vec![false; n], use_origins };
    let mut layout = Layout::default();
    for &r in &roots {
        let wrapped = wrap_roots && graph.vars[r].kind == VarKind::Event;
        layout.roots.push(planner.place(r, wrapped));
    }
    // Events only reachable through cycles. An unplaced entity always has
    // an unplaced governor, so it is reached from one of these.
    while let Some(&v) = order.iter().find(|&&v| !planner.placed[v] && graph.vars[v].kind == VarKind::Event) {
        layout.roots.push(planner.place(v, wrap_roots));
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{parse_text, serialize_text};
    use crate::repr::isomorphic;

    #[test]
    fn cycle_is_entered_at_an_event() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::entity("x0"), TokenSpan::new(["house"], 0))
            .add_var(Variable::event("e1"), TokenSpan::new(["hit"], 0))
            .add_var(Variable::event("e2"), TokenSpan::new(["saw"], 0));
        g.add_arg("e1", "x0").add_arg("e1", "e2").add_arg("e2", "e1");
        let l = linearize(&g, &default_layout(&g).unwrap()).unwrap();
        assert_eq!(serialize_text(&l), "[ hit_h ( house_h ) ( [ saw_h ( @b ) ] ) ]\n#coref 9 1");
        assert!(isomorphic(&g, &delinearize(&l).unwrap()));
    }

    #[test]
    fn single_predicate() {
        let g = delinearize(&parse_text("[ sleeps_h ] ( John_h )").unwrap()).unwrap();
        assert_eq!(g.vars, vec![Variable::event("e1"), Variable::entity("x1")]);
        assert_eq!(g.edges, vec![Edge::arg("e1", "x1")]);
        assert_eq!(g.instances["x1"], TokenSpan::new(["John"], 0));
    }

    #[test]
    fn relative_clause_fixture() {
        // ( a ( @b ) [ hit_h ] ( a storm surge_h ) house_h ), bullet -> "a" at 1.
        // Positions: ( 0, a 1, ( 2, @b 3, ) 4, [ 5, hit_h 6, ] 7, ( 8, a 9,
        // storm 10, surge_h 11, ) 12, house_h 13, ) 14.
        let l = parse_text("( a ( @b ) [ hit_h ] ( a storm surge_h ) house_h )\n#coref 3 1").unwrap();
        let g = delinearize(&l).unwrap();
        // Opening order: x1 = outer argument (0), e1 = hit (5), x2 = storm surge (8).
        assert_eq!(g.vars, vec![Variable::entity("x1"), Variable::event("e1"), Variable::entity("x2")]);
        assert_eq!(g.instances["x1"], TokenSpan::new(["a", "house"], 1));
        assert_eq!(g.instances["x2"], TokenSpan::new(["a", "storm", "surge"], 2));
        assert_eq!(g.edges, vec![Edge::arg("e1", "x1"), Edge::arg("e1", "x2")]);
    }

    #[test]
    fn empty_input() {
        let (g, layout) = delinearize_with_layout(&LinearizedRepr::empty()).unwrap();
        assert!(g.is_empty());
        assert!(layout.roots.is_empty());
        assert!(linearize(&g, &default_layout(&g).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn delinearize_errors() {
        let nested_orphan = parse_text("( a ( b_h ) c_h )").unwrap();
        assert_eq!(delinearize(&nested_orphan), Err(LinearError::NoGovernor(2)));
        let ambiguous = parse_text("[ a_h ] [ b_h ] ( c_h )").unwrap();
        assert!(matches!(delinearize(&ambiguous), Err(LinearError::AmbiguousGovernor { .. })));
        let outside = LinearizedRepr::new(
            vec![
                LinToken::head("w"),
                LinToken::OpenPred,
                LinToken::head("v"),
                LinToken::ClosePred,
                LinToken::OpenArg,
                LinToken::Bullet,
                LinToken::CloseArg,
            ],
            vec![None, None, None, None, None, Some(0), None],
        )
        .unwrap();
        assert!(matches!(delinearize(&outside), Err(LinearError::AntecedentOutsideSpan { .. })));
        let embedded = parse_text("[ v_h ] ( the @b )\n#coref 5 1").unwrap();
        assert_eq!(delinearize(&embedded), Err(LinearError::EmbeddedBullet(5)));
    }

    #[test]
    fn default_layout_orders_by_head_position() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e"), TokenSpan::new(["saw"], 0).with_origins(vec![1]))
            .add_var(Variable::entity("b"), TokenSpan::new(["Mary"], 0).with_origins(vec![2]))
            .add_var(Variable::entity("a"), TokenSpan::new(["John"], 0).with_origins(vec![0]))
            .add_arg("e", "b")
            .add_arg("e", "a");
        let l = linearize(&g, &default_layout(&g).unwrap()).unwrap();
        assert_eq!(serialize_text(&l), "[ ( John_h ) saw_h ( Mary_h ) ]");
        assert!(isomorphic(&delinearize(&l).unwrap(), &g.without_origins()));
    }

    #[test]
    fn shared_argument_becomes_bullet() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e1"), TokenSpan::new(["came"], 0))
            .add_var(Variable::event("e2"), TokenSpan::new(["left"], 0))
            .add_var(Variable::entity("x"), TokenSpan::new(["the", "man"], 1))
            .add_arg("e1", "x")
            .add_arg("e2", "x");
        let layout = default_layout(&g).unwrap();
        assert_eq!(layout.bullet_count(), 1);
        let l = linearize(&g, &layout).unwrap();
        assert_eq!(serialize_text(&l), "[ came_h ( the man_h ) ] [ left_h ( @b ) ]\n#coref 10 4");
        assert!(isomorphic(&delinearize(&l).unwrap(), &g));
    }

    #[test]
    fn orphan_entities_wrap_root_events() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e1"), TokenSpan::new(["rains"], 0))
            .add_var(Variable::entity("x1"), TokenSpan::new(["Biloxi"], 0));
        let l = linearize(&g, &default_layout(&g).unwrap()).unwrap();
        assert_eq!(serialize_text(&l), "( [ rains_h ] ) ( Biloxi_h )");
        assert!(isomorphic(&delinearize(&l).unwrap(), &g));
    }

    #[test]
    fn cycles_linearize() {
        let mut g = GraphRepr::new();
        g.add_var(Variable::event("e1"), TokenSpan::new(["said"], 0))
            .add_var(Variable::event("e2"), TokenSpan::new(["knew"], 0))
            .add_arg("e1", "e2")
            .add_arg("e2", "e1");
        let l = linearize(&g, &default_layout(&g).unwrap()).unwrap();
        assert_eq!(serialize_text(&l), "[ said_h ( [ knew_h ( @b ) ] ) ]\n#coref 6 1");
        assert!(isomorphic(&delinearize(&l).unwrap(), &g));
    }

    #[test]
    fn stored_layout_reproduces_text() {
        let text = "( a ( @b ) [ hit_h ] ( a storm surge_h ) house_h )\n#coref 3 1";
        let (g, layout) = delinearize_with_layout(&parse_text(text).unwrap()).unwrap();
        assert_eq!(serialize_text(&linearize(&g, &layout).unwrap()), text);
    }

    #[test]
    fn skeleton_errors() {
        let (g, mut layout) = delinearize_with_layout(&parse_text("[ sleeps_h ] ( John_h )").unwrap()).unwrap();
        layout.roots.pop();
        assert!(matches!(linearize(&g, &layout), Err(LinearError::Skeleton(_))));

        // A layout whose structure implies an edge the graph does not have.
        let mut g2 = g.clone();
        g2.edges.clear();
        let (_, layout) = delinearize_with_layout(&parse_text("[ sleeps_h ] ( John_h )").unwrap()).unwrap();
        assert!(matches!(linearize(&g2, &layout), Err(LinearError::Skeleton(_))));
    }
}

//! Derivations: rule extraction from trees, oracle action sequences, and the
//! partial-tree state that decoding advances one action at a time.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::rule::{Grammar, NonTerminal, ProductionRule, RuleId, SlotKind, Symbol};
use super::GrammarError;
use crate::sql::*;

/// One transition of the top-down decoder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DecoderAction {
    ApplyRule(RuleId),
    CopyColumn(String),
    CopyValue(String),
    CopyTable(String),
}

impl DecoderAction {
    pub fn slot(&self) -> Option<SlotKind> {
        match self {
            DecoderAction::ApplyRule(_) => None,
            DecoderAction::CopyColumn(_) => Some(SlotKind::Column),
            DecoderAction::CopyValue(_) => Some(SlotKind::Value),
            DecoderAction::CopyTable(_) => Some(SlotKind::Table),
        }
    }
}

impl fmt::Display for DecoderAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoderAction::ApplyRule(r) => write!(f, "R{:04}", r.0),
            DecoderAction::CopyColumn(c) => write!(f, "COL:{c}"),
            DecoderAction::CopyValue(v) => write!(f, "VAL:{v}"),
            DecoderAction::CopyTable(t) => write!(f, "TAB:{t}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Gold derivations

enum Child {
    Node(DerivNode),
    Slot(SlotKind, String),
    Terminal,
}

struct DerivNode {
    rule: ProductionRule,
    children: Vec<Child>,
}

struct Builder {
    rhs: Vec<Symbol>,
    children: Vec<Child>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            rhs: Vec::new(),
            children: Vec::new(),
        }
    }
    fn t(mut self, s: &str) -> Self {
        self.rhs.push(Symbol::t(s));
        self.children.push(Child::Terminal);
        self
    }
    fn slot(mut self, k: SlotKind, v: &str) -> Self {
        self.rhs.push(Symbol::Slot(k));
        self.children.push(Child::Slot(k, v.to_string()));
        self
    }
    fn node(mut self, n: DerivNode) -> Self {
        self.rhs.push(Symbol::NonTerminal(n.rule.lhs));
        self.children.push(Child::Node(n));
        self
    }
    fn build(self, lhs: NonTerminal) -> DerivNode {
        DerivNode {
            rule: ProductionRule::new(lhs, self.rhs),
            children: self.children,
        }
    }
}

fn stmt_node(s: &Stmt) -> DerivNode {
    let mut sel = Builder::new();
    for (i, it) in s.select.items.iter().enumerate() {
        if i > 0 {
            sel = sel.t(",");
        }
        sel = sel.node(item_node(it));
    }
    let mut b = Builder::new()
        .node(sel.build(NonTerminal::SelectClause))
        .t("from")
        .slot(SlotKind::Table, TABLE_ALIAS);
    if let Some(w) = &s.where_clause {
        let mut wb = Builder::new();
        for (i, c) in w.conds.iter().enumerate() {
            if i > 0 {
                wb = wb.t("and");
            }
            wb = wb.node(cond_node(c));
        }
        b = b.node(wb.build(NonTerminal::WhereClause));
    }
    if let Some(g) = &s.group {
        b = b.node(
            Builder::new()
                .slot(SlotKind::Column, g.col.as_str())
                .build(NonTerminal::GroupClause),
        );
    }
    if let Some(o) = &s.order {
        let mut ob = Builder::new().node(item_node(&o.key)).t(o.dir.keyword());
        if let Some(l) = o.limit {
            ob = ob.t("limit").t(&l.to_string());
        }
        b = b.node(ob.build(NonTerminal::OrderClause));
    }
    b.build(NonTerminal::Stmt)
}

fn item_node(it: &SelectItem) -> DerivNode {
    let target = |b: Builder| match &it.target {
        ItemTarget::Column(c) => b.slot(SlotKind::Column, c.as_str()),
        ItemTarget::Star => b.t("*"),
    };
    let b = match it.agg {
        Some(agg) => target(Builder::new().t(agg.keyword()).t("(")).t(")"),
        None => target(Builder::new()),
    };
    b.build(NonTerminal::SelectItem)
}

fn cond_node(c: &Cond) -> DerivNode {
    let b = Builder::new()
        .slot(SlotKind::Column, c.col.as_str())
        .t(c.op.symbol());
    let b = match &c.rhs {
        CondRhs::Value(v) => b.slot(SlotKind::Value, v.content()),
        CondRhs::Subquery(q) => b.node(
            Builder::new()
                .t("(")
                .node(stmt_node(q))
                .t(")")
                .build(NonTerminal::Subquery),
        ),
        CondRhs::List(vs) => {
            let mut lb = Builder::new().t("(");
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    lb = lb.t(",");
                }
                lb = lb.slot(SlotKind::Value, v.content());
            }
            b.node(lb.t(")").build(NonTerminal::ValueList))
        }
    };
    b.build(NonTerminal::Cond)
}

/// Rules of a tree, one per internal node, in breadth-first order.
pub fn extract_rules(tree: &SqlTree) -> Vec<ProductionRule> {
    let root = stmt_node(&tree.root);
    let mut out = Vec::new();
    let mut queue = VecDeque::from([&root]);
    while let Some(n) = queue.pop_front() {
        out.push(n.rule.clone());
        for c in &n.children {
            if let Child::Node(ch) = c {
                queue.push_back(ch);
            }
        }
    }
    out
}

/// Union of the rules of all trees, first-seen order, duplicates removed.
pub fn induce_grammar<'a>(trees: impl IntoIterator<Item = &'a SqlTree>) -> Grammar {
    Grammar::from_rules(trees.into_iter().flat_map(extract_rules))
}

/// Depth-first, left-to-right action sequence that rebuilds `tree`.
pub fn oracle_actions(tree: &SqlTree, grammar: &Grammar) -> Result<Vec<DecoderAction>, GrammarError> {
    fn walk(n: &DerivNode, g: &Grammar, out: &mut Vec<DecoderAction>) -> Result<(), GrammarError> {
        let id = g
            .id_of(&n.rule)
            .ok_or_else(|| GrammarError::RuleNotInGrammar(n.rule.to_string()))?;
        out.push(DecoderAction::ApplyRule(id));
        for c in &n.children {
            match c {
                Child::Node(ch) => walk(ch, g, out)?,
                Child::Slot(k, v) => out.push(match k {
                    SlotKind::Column => DecoderAction::CopyColumn(v.clone()),
                    SlotKind::Value => DecoderAction::CopyValue(v.clone()),
                    SlotKind::Table => DecoderAction::CopyTable(v.clone()),
                }),
                Child::Terminal => {}
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(&stmt_node(&tree.root), grammar, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Partial trees

#[derive(Debug, Clone)]
struct Node {
    symbol: Symbol,
    rule: Option<RuleId>,
    children: Vec<usize>,
    value: Option<String>,
    parent: Option<usize>,
    depth: usize,
}

/// A partially expanded derivation. The expansion target is always the
/// leftmost unexpanded non-terminal or unfilled slot.
#[derive(Debug, Clone)]
pub struct PartialTree {
    nodes: Vec<Node>,
    /// Nodes awaiting an action; the last element is the current target.
    pending: Vec<usize>,
}

/// The current expansion target with its context.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub node: usize,
    pub symbol: &'a Symbol,
    /// Rule that created the target and the target's position in its rhs.
    pub parent: Option<(RuleId, usize)>,
    /// Innermost enclosing clause non-terminal.
    pub clause: Option<NonTerminal>,
    pub depth: usize,
}

impl PartialTree {
    pub fn new(start: NonTerminal) -> Self {
        PartialTree {
            nodes: vec![Node {
                symbol: Symbol::NonTerminal(start),
                rule: None,
                children: Vec::new(),
                value: None,
                parent: None,
                depth: 0,
            }],
            pending: vec![0],
        }
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_empty()
    }

    /// Symbols still awaiting actions, target first.
    pub fn pending_symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.pending.iter().rev().map(|&i| &self.nodes[i].symbol)
    }

    pub fn target(&self) -> Option<Target<'_>> {
        let &node = self.pending.last()?;
        let n = &self.nodes[node];
        let parent = n.parent.map(|p| {
            let pn = &self.nodes[p];
            let pos = pn.children.iter().position(|&c| c == node).unwrap_or(0);
            (pn.rule.expect("parent is expanded"), pos)
        });
        let mut clause = None;
        let mut cur = n.parent;
        while let Some(p) = cur {
            if let Symbol::NonTerminal(nt) = self.nodes[p].symbol {
                if nt.is_clause() {
                    clause = Some(nt);
                    break;
                }
            }
            cur = self.nodes[p].parent;
        }
        Some(Target {
            node,
            symbol: &n.symbol,
            parent,
            clause,
            depth: n.depth,
        })
    }

    /// Leaves of the partial tree in left-to-right order.
    pub fn frontier(&self) -> Vec<Symbol> {
        fn walk(t: &PartialTree, i: usize, out: &mut Vec<Symbol>) {
            let n = &t.nodes[i];
            if n.children.is_empty() {
                out.push(n.symbol.clone());
            }
            for &c in &n.children {
                walk(t, c, out);
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut out);
        out
    }

    /// Applies `rule` to the target non-terminal.
    pub fn apply_rule(&mut self, grammar: &Grammar, rule: RuleId) -> Result<(), GrammarError> {
        let target = *self.pending.last().ok_or(GrammarError::Complete)?;
        let r = grammar.rule(rule);
        if self.nodes[target].symbol != Symbol::NonTerminal(r.lhs) {
            return Err(GrammarError::LhsMismatch {
                expected: self.nodes[target].symbol.to_string(),
                got: r.lhs.name().to_string(),
            });
        }
        self.pending.pop();
        let depth = self.nodes[target].depth + 1;
        let mut kids = Vec::with_capacity(r.rhs.len());
        for s in &r.rhs {
            kids.push(self.nodes.len());
            self.nodes.push(Node {
                symbol: s.clone(),
                rule: None,
                children: Vec::new(),
                value: None,
                parent: Some(target),
                depth,
            });
        }
        for &k in kids.iter().rev() {
            if self.nodes[k].symbol.needs_action() {
                self.pending.push(k);
            }
        }
        self.nodes[target].rule = Some(rule);
        self.nodes[target].children = kids;
        Ok(())
    }

    /// Applies any decoder action.
    pub fn apply(&mut self, grammar: &Grammar, action: &DecoderAction) -> Result<(), GrammarError> {
        let (kind, value) = match action {
            DecoderAction::ApplyRule(r) => return self.apply_rule(grammar, *r),
            DecoderAction::CopyColumn(v) => (SlotKind::Column, v),
            DecoderAction::CopyValue(v) => (SlotKind::Value, v),
            DecoderAction::CopyTable(v) => (SlotKind::Table, v),
        };
        let target = *self.pending.last().ok_or(GrammarError::Complete)?;
        if self.nodes[target].symbol != Symbol::Slot(kind) {
            return Err(GrammarError::SlotMismatch {
                expected: self.nodes[target].symbol.to_string(),
                got: kind.name().to_string(),
            });
        }
        self.pending.pop();
        self.nodes[target].value = Some(value.clone());
        Ok(())
    }

    /// Values already copied into slots of `kind`.
    pub fn copied(&self, kind: SlotKind) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(move |n| match (&n.symbol, &n.value) {
            (Symbol::Slot(k), Some(v)) if *k == kind => Some(v.as_str()),
            _ => None,
        })
    }

    /// Column already copied into the same condition as the target, if any.
    pub fn sibling_column(&self) -> Option<&str> {
        let &t = self.pending.last()?;
        let p = self.nodes[t].parent?;
        let p = match self.nodes[p].symbol {
            Symbol::NonTerminal(NonTerminal::ValueList) => self.nodes[p].parent?,
            _ => p,
        };
        self.nodes[p].children.iter().find_map(|&c| match (&self.nodes[c].symbol, &self.nodes[c].value) {
            (Symbol::Slot(SlotKind::Column), Some(v)) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Converts a complete derivation into a tree.
    pub fn to_sql_tree(&self) -> Result<SqlTree, GrammarError> {
        if !self.is_complete() {
            return Err(GrammarError::Incomplete);
        }
        Ok(SqlTree::new(self.stmt(0)?))
    }

    fn kids(&self, i: usize) -> impl Iterator<Item = &Node> {
        self.nodes[i].children.iter().map(|&c| &self.nodes[c])
    }

    fn child_nt(&self, i: usize, nt: NonTerminal) -> Option<usize> {
        self.nodes[i]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].symbol == Symbol::NonTerminal(nt))
    }

    fn slot_value(&self, i: usize, kind: SlotKind) -> Option<&str> {
        self.kids(i).find_map(|n| match (&n.symbol, &n.value) {
            (Symbol::Slot(k), Some(v)) if *k == kind => Some(v.as_str()),
            _ => None,
        })
    }

    fn stmt(&self, i: usize) -> Result<Stmt, GrammarError> {
        let sel = self
            .child_nt(i, NonTerminal::SelectClause)
            .ok_or(GrammarError::Malformed("statement without select"))?;
        let items = self.nodes[sel]
            .children
            .iter()
            .filter(|&&c| self.nodes[c].symbol == Symbol::NonTerminal(NonTerminal::SelectItem))
            .map(|&c| self.item(c))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() {
            return Err(GrammarError::Malformed("empty select clause"));
        }
        let where_clause = match self.child_nt(i, NonTerminal::WhereClause) {
            Some(w) => {
                let conds = self.nodes[w]
                    .children
                    .iter()
                    .filter(|&&c| self.nodes[c].symbol == Symbol::NonTerminal(NonTerminal::Cond))
                    .map(|&c| self.cond(c))
                    .collect::<Result<Vec<_>, _>>()?;
                if conds.is_empty() {
                    return Err(GrammarError::Malformed("empty where clause"));
                }
                Some(WhereClause { conds })
            }
            None => None,
        };
        let group = match self.child_nt(i, NonTerminal::GroupClause) {
            Some(g) => Some(GroupClause {
                col: ColRef(
                    self.slot_value(g, SlotKind::Column)
                        .ok_or(GrammarError::Malformed("group without column"))?
                        .to_string(),
                ),
            }),
            None => None,
        };
        let order = match self.child_nt(i, NonTerminal::OrderClause) {
            Some(o) => Some(self.order(o)?),
            None => None,
        };
        Ok(Stmt {
            select: SelectClause { items },
            where_clause,
            group,
            order,
        })
    }

    fn item(&self, i: usize) -> Result<SelectItem, GrammarError> {
        let mut agg = None;
        let mut target = None;
        for n in self.kids(i) {
            match (&n.symbol, &n.value) {
                (Symbol::Terminal(t), _) if t == "*" => target = Some(ItemTarget::Star),
                (Symbol::Terminal(t), _) => {
                    if let Some(a) = AggOp::from_keyword(t) {
                        agg = Some(a);
                    }
                }
                (Symbol::Slot(SlotKind::Column), Some(v)) => {
                    target = Some(ItemTarget::Column(ColRef(v.clone())))
                }
                _ => return Err(GrammarError::Malformed("bad select item")),
            }
        }
        Ok(SelectItem {
            agg,
            target: target.ok_or(GrammarError::Malformed("select item without target"))?,
        })
    }

    fn cond(&self, i: usize) -> Result<Cond, GrammarError> {
        let col = self
            .slot_value(i, SlotKind::Column)
            .ok_or(GrammarError::Malformed("condition without column"))?;
        let op = self
            .kids(i)
            .find_map(|n| match &n.symbol {
                Symbol::Terminal(t) => CompOp::ALL.into_iter().find(|o| o.symbol() == t),
                _ => None,
            })
            .ok_or(GrammarError::Malformed("condition without operator"))?;
        let rhs = if let Some(v) = self.slot_value(i, SlotKind::Value) {
            CondRhs::Value(Literal::typed(v))
        } else if let Some(s) = self.child_nt(i, NonTerminal::Subquery) {
            let inner = self
                .child_nt(s, NonTerminal::Stmt)
                .ok_or(GrammarError::Malformed("empty subquery"))?;
            CondRhs::Subquery(Box::new(self.stmt(inner)?))
        } else if let Some(l) = self.child_nt(i, NonTerminal::ValueList) {
            let vs: Vec<Literal> = self
                .kids(l)
                .filter_map(|n| match (&n.symbol, &n.value) {
                    (Symbol::Slot(SlotKind::Value), Some(v)) => Some(Literal::typed(v)),
                    _ => None,
                })
                .collect();
            if vs.is_empty() {
                return Err(GrammarError::Malformed("empty value list"));
            }
            CondRhs::List(vs)
        } else {
            return Err(GrammarError::Malformed("condition without right-hand side"));
        };
        Ok(Cond {
            col: ColRef(col.to_string()),
            op,
            rhs,
        })
    }

    fn order(&self, i: usize) -> Result<OrderClause, GrammarError> {
        let key_node = self
            .child_nt(i, NonTerminal::SelectItem)
            .ok_or(GrammarError::Malformed("order without key"))?;
        let key = self.item(key_node)?;
        let terms: Vec<&str> = self
            .kids(i)
            .filter_map(|n| match &n.symbol {
                Symbol::Terminal(t) => Some(t.as_str()),
                _ => None,
            })
            .collect();
        let dir = match terms.first() {
            Some(&"asc") => OrderDir::Asc,
            Some(&"desc") => OrderDir::Desc,
            _ => return Err(GrammarError::Malformed("order without direction")),
        };
        let limit = match terms.get(1..) {
            Some([_, n]) => Some(
                n.parse::<u64>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or(GrammarError::Malformed("bad limit"))?,
            ),
            _ => None,
        };
        Ok(OrderClause { key, dir, limit })
    }
}

/// Replays actions from the start symbol and returns the finished tree.
pub fn replay(actions: &[DecoderAction], grammar: &Grammar) -> Result<SqlTree, GrammarError> {
    let mut state = PartialTree::new(grammar.start_symbol());
    for a in actions {
        state.apply(grammar, a)?;
    }
    state.to_sql_tree()
}

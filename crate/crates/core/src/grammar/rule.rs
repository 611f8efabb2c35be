use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GrammarError;

/// Non-terminals of the SQL tree vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NonTerminal {
    Stmt,
    SelectClause,
    SelectItem,
    WhereClause,
    Cond,
    Subquery,
    ValueList,
    GroupClause,
    OrderClause,
}

impl NonTerminal {
    pub const ALL: [NonTerminal; 9] = [
        NonTerminal::Stmt,
        NonTerminal::SelectClause,
        NonTerminal::SelectItem,
        NonTerminal::WhereClause,
        NonTerminal::Cond,
        NonTerminal::Subquery,
        NonTerminal::ValueList,
        NonTerminal::GroupClause,
        NonTerminal::OrderClause,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NonTerminal::Stmt => "Stmt",
            NonTerminal::SelectClause => "SelectClause",
            NonTerminal::SelectItem => "SelectItem",
            NonTerminal::WhereClause => "WhereClause",
            NonTerminal::Cond => "Cond",
            NonTerminal::Subquery => "Subquery",
            NonTerminal::ValueList => "ValueList",
            NonTerminal::GroupClause => "GroupClause",
            NonTerminal::OrderClause => "OrderClause",
        }
    }

    /// Whether this symbol opens a clause (used as decoding context).
    pub fn is_clause(self) -> bool {
        matches!(
            self,
            NonTerminal::SelectClause
                | NonTerminal::WhereClause
                | NonTerminal::GroupClause
                | NonTerminal::OrderClause
        )
    }
}

impl FromStr for NonTerminal {
    type Err = GrammarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NonTerminal::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| GrammarError::Format(format!("unknown non-terminal {s}")))
    }
}

/// Slots filled by copy actions instead of rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotKind {
    Column,
    Value,
    Table,
}

impl SlotKind {
    pub const ALL: [SlotKind; 3] = [SlotKind::Column, SlotKind::Value, SlotKind::Table];

    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Column => "COPY_COLUMN",
            SlotKind::Value => "COPY_VALUE",
            SlotKind::Table => "COPY_TABLE",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    NonTerminal(NonTerminal),
    Terminal(String),
    Slot(SlotKind),
}

impl Symbol {
    pub fn t(s: &str) -> Symbol {
        Symbol::Terminal(s.to_string())
    }

    /// Symbols that still need an action (non-terminals and slots).
    pub fn needs_action(&self) -> bool {
        !matches!(self, Symbol::Terminal(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::NonTerminal(n) => f.write_str(n.name()),
            Symbol::Terminal(t) => write!(f, "\"{t}\""),
            Symbol::Slot(s) => f.write_str(s.name()),
        }
    }
}

impl FromStr for Symbol {
    type Err = GrammarError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(inner) = s.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
            return Ok(Symbol::Terminal(inner.to_string()));
        }
        if let Some(slot) = SlotKind::ALL.into_iter().find(|k| k.name() == s) {
            return Ok(Symbol::Slot(slot));
        }
        s.parse().map(Symbol::NonTerminal)
    }
}

/// `lhs -> rhs`; identity is the exact pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductionRule {
    pub lhs: NonTerminal,
    pub rhs: Vec<Symbol>,
}

impl ProductionRule {
    pub fn new(lhs: NonTerminal, rhs: Vec<Symbol>) -> Self {
        ProductionRule { lhs, rhs }
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs.name())?;
        for s in &self.rhs {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

impl FromStr for ProductionRule {
    type Err = GrammarError;
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let (lhs, rhs) = line
            .split_once(" -> ")
            .ok_or_else(|| GrammarError::Format(format!("missing arrow: {line}")))?;
        let lhs: NonTerminal = lhs.trim().parse()?;
        let mut syms = Vec::new();
        let mut rest = rhs.trim();
        while !rest.is_empty() {
            let (tok, tail) = if let Some(inner) = rest.strip_prefix('"') {
                let close = inner
                    .find('"')
                    .ok_or_else(|| GrammarError::Format(format!("unterminated terminal: {line}")))?;
                rest.split_at(close + 2)
            } else {
                rest.split_at(rest.find(' ').unwrap_or(rest.len()))
            };
            syms.push(tok.parse()?);
            rest = tail.trim_start();
        }
        if syms.is_empty() {
            return Err(GrammarError::Format(format!("empty rhs: {line}")));
        }
        Ok(ProductionRule::new(lhs, syms))
    }
}

/// Index of a rule inside its grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleId(pub usize);

/// An ordered, duplicate-free rule set with a per-lhs index.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    rules: Vec<ProductionRule>,
    start: NonTerminal,
    by_lhs: BTreeMap<NonTerminal, Vec<RuleId>>,
    ids: HashMap<ProductionRule, RuleId>,
}

impl Grammar {
    /// Builds a grammar from rules in first-seen order, dropping duplicates.
    pub fn from_rules(rules: impl IntoIterator<Item = ProductionRule>) -> Grammar {
        let mut g = Grammar {
            rules: Vec::new(),
            start: NonTerminal::Stmt,
            by_lhs: BTreeMap::new(),
            ids: HashMap::new(),
        };
        for r in rules {
            g.insert(r);
        }
        g
    }

    fn insert(&mut self, r: ProductionRule) {
        if self.ids.contains_key(&r) {
            return;
        }
        let id = RuleId(self.rules.len());
        self.by_lhs.entry(r.lhs).or_default().push(id);
        self.ids.insert(r.clone(), id);
        self.rules.push(r);
    }

    pub fn start_symbol(&self) -> NonTerminal {
        self.start
    }

    pub fn rules(&self) -> &[ProductionRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, id: RuleId) -> &ProductionRule {
        &self.rules[id.0]
    }

    pub fn id_of(&self, rule: &ProductionRule) -> Option<RuleId> {
        self.ids.get(rule).copied()
    }

    /// Rules whose lhs is `nt`, in grammar order.
    pub fn rules_for(&self, nt: NonTerminal) -> &[RuleId] {
        self.by_lhs.get(&nt).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Checks that the start symbol and every rhs non-terminal have rules.
    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.rules_for(self.start).is_empty() {
            return Err(GrammarError::Format("start symbol has no rules".into()));
        }
        for r in &self.rules {
            for s in &r.rhs {
                if let Symbol::NonTerminal(n) = s {
                    if self.rules_for(*n).is_empty() {
                        return Err(GrammarError::Format(format!(
                            "non-terminal {} has no rules",
                            n.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// One rule per line, first-seen order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Grammar, GrammarError> {
        let rules = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ProductionRule>, _>>()?;
        let g = Grammar::from_rules(rules);
        g.validate()?;
        Ok(g)
    }

    /// Minimum number of decoder actions needed to complete each symbol,
    /// given which copy slots have at least one candidate. Unreachable
    /// completions are `usize::MAX`.
    pub fn min_costs(&self, slot_available: [bool; 3]) -> MinCosts {
        let mut nt: BTreeMap<NonTerminal, usize> =
            NonTerminal::ALL.iter().map(|&n| (n, usize::MAX)).collect();
        let slot = slot_available.map(|ok| if ok { 1 } else { usize::MAX });
        loop {
            let mut changed = false;
            for r in &self.rules {
                let mut cost: usize = 1;
                for s in &r.rhs {
                    let c = match s {
                        Symbol::Terminal(_) => 0,
                        Symbol::Slot(k) => slot[k.index()],
                        Symbol::NonTerminal(n) => nt[n],
                    };
                    cost = cost.saturating_add(c);
                }
                let cur = nt.get_mut(&r.lhs).unwrap();
                if cost < *cur {
                    *cur = cost;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        MinCosts { nt, slot }
    }
}

/// Output of [`Grammar::min_costs`].
#[derive(Debug, Clone)]
pub struct MinCosts {
    nt: BTreeMap<NonTerminal, usize>,
    slot: [usize; 3],
}

impl MinCosts {
    pub fn of(&self, s: &Symbol) -> usize {
        match s {
            Symbol::Terminal(_) => 0,
            Symbol::Slot(k) => self.slot[k.index()],
            Symbol::NonTerminal(n) => self.nt[n],
        }
    }

    /// Cost of applying `rule` now: the application itself plus its rhs.
    pub fn of_rule(&self, rule: &ProductionRule) -> usize {
        rule.rhs
            .iter()
            .fold(1usize, |acc, s| acc.saturating_add(self.of(s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_text_round_trip() {
        let r = ProductionRule::new(
            NonTerminal::Cond,
            vec![Symbol::Slot(SlotKind::Column), Symbol::t("not in"), Symbol::NonTerminal(NonTerminal::ValueList)],
        );
        let line = r.to_string();
        assert_eq!(line, "Cond -> COPY_COLUMN \"not in\" ValueList");
        assert_eq!(line.parse::<ProductionRule>().unwrap(), r);
    }

    #[test]
    fn duplicates_collapse() {
        let r = ProductionRule::new(NonTerminal::SelectItem, vec![Symbol::Slot(SlotKind::Column)]);
        let g = Grammar::from_rules([r.clone(), r.clone()]);
        assert_eq!(g.len(), 1);
        assert_eq!(g.rules_for(NonTerminal::SelectItem), &[RuleId(0)]);
    }
}

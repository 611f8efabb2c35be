use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::{canonical_decimal, parse_decimal};

/// Canonical table alias used by every single-table query.
pub const TABLE_ALIAS: &str = "w";

/// A parsed query over the single table `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlTree {
    pub root: Stmt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stmt {
    pub select: SelectClause,
    pub where_clause: Option<WhereClause>,
    pub group: Option<GroupClause>,
    pub order: Option<OrderClause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectClause {
    pub items: Vec<SelectItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectItem {
    pub agg: Option<AggOp>,
    pub target: ItemTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ItemTarget {
    Column(ColRef),
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggOp {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggOp {
    pub const ALL: [AggOp; 5] = [AggOp::Count, AggOp::Sum, AggOp::Avg, AggOp::Min, AggOp::Max];

    pub fn keyword(self) -> &'static str {
        match self {
            AggOp::Count => "count",
            AggOp::Sum => "sum",
            AggOp::Avg => "avg",
            AggOp::Min => "min",
            AggOp::Max => "max",
        }
    }

    pub fn from_keyword(s: &str) -> Option<AggOp> {
        AggOp::ALL.into_iter().find(|a| a.keyword() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhereClause {
    pub conds: Vec<Cond>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond {
    pub col: ColRef,
    pub op: CompOp,
    pub rhs: CondRhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
}

impl CompOp {
    pub const ALL: [CompOp; 8] = [
        CompOp::Eq,
        CompOp::Ne,
        CompOp::Lt,
        CompOp::Le,
        CompOp::Gt,
        CompOp::Ge,
        CompOp::In,
        CompOp::NotIn,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CompOp::Eq => "=",
            CompOp::Ne => "!=",
            CompOp::Lt => "<",
            CompOp::Le => "<=",
            CompOp::Gt => ">",
            CompOp::Ge => ">=",
            CompOp::In => "in",
            CompOp::NotIn => "not in",
        }
    }

    pub fn is_membership(self) -> bool {
        matches!(self, CompOp::In | CompOp::NotIn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CondRhs {
    Value(Literal),
    Subquery(Box<Stmt>),
    List(Vec<Literal>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupClause {
    pub col: ColRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderClause {
    pub key: SelectItem,
    pub dir: OrderDir,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderDir {
    Asc,
    Desc,
}

impl OrderDir {
    pub fn keyword(self) -> &'static str {
        match self {
            OrderDir::Asc => "asc",
            OrderDir::Desc => "desc",
        }
    }
}

/// Column reference such as `c2` or `c3_number`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColRef(pub String);

impl ColRef {
    /// Checks the `^c[0-9]+(_[a-z0-9]+)*$` pattern.
    pub fn is_valid_id(s: &str) -> bool {
        let Some(rest) = s.strip_prefix('c') else {
            return false;
        };
        let mut parts = rest.split('_');
        let head = parts.next().unwrap_or("");
        if head.is_empty() || !head.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        parts.all(|p| {
            !p.is_empty()
                && p.bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        })
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// A literal typed at parse time: numbers are finite decimals, everything
/// else is text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    /// Canonical decimal text.
    Number(String),
    Text(String),
}

impl Literal {
    /// Types raw literal content (quotes already stripped).
    pub fn typed(content: &str) -> Literal {
        match canonical_decimal(content) {
            Some(c) => Literal::Number(c),
            None => Literal::Text(content.to_string()),
        }
    }

    /// Literal content without quotes; for numbers the canonical decimal.
    pub fn content(&self) -> &str {
        match self {
            Literal::Number(s) | Literal::Text(s) => s,
        }
    }

    pub fn number(&self) -> Option<f64> {
        match self {
            Literal::Number(s) => parse_decimal(s),
            Literal::Text(_) => None,
        }
    }

    /// SQL token form: numbers bare, text single-quoted with `''` escapes.
    pub fn token(&self) -> String {
        match self {
            Literal::Number(s) => s.clone(),
            Literal::Text(s) => format!("'{}'", s.replace('\'', "''")),
        }
    }
}

impl SqlTree {
    pub fn new(root: Stmt) -> Self {
        SqlTree { root }
    }

    /// Canonical token sequence.
    pub fn to_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        write_stmt(&self.root, &mut out);
        out
    }

    /// Canonical single-spaced SQL text.
    pub fn to_sql(&self) -> String {
        self.to_tokens().join(" ")
    }

    pub fn contains_subquery(&self) -> bool {
        stmt_has_subquery(&self.root)
    }

    /// All column ids referenced anywhere in the tree.
    pub fn columns(&self) -> Vec<&ColRef> {
        let mut out = Vec::new();
        collect_columns(&self.root, &mut out);
        out
    }

    /// Whether the outermost statement fixes row order.
    pub fn is_ordered(&self) -> bool {
        self.root.order.is_some()
    }
}

impl fmt::Display for SqlTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sql())
    }
}

fn stmt_has_subquery(s: &Stmt) -> bool {
    s.where_clause.as_ref().is_some_and(|w| {
        w.conds
            .iter()
            .any(|c| matches!(c.rhs, CondRhs::Subquery(_)))
    })
}

fn collect_columns<'a>(s: &'a Stmt, out: &mut Vec<&'a ColRef>) {
    let item_col = |it: &'a SelectItem, out: &mut Vec<&'a ColRef>| {
        if let ItemTarget::Column(c) = &it.target {
            out.push(c);
        }
    };
    for it in &s.select.items {
        item_col(it, out);
    }
    if let Some(w) = &s.where_clause {
        for c in &w.conds {
            out.push(&c.col);
            if let CondRhs::Subquery(q) = &c.rhs {
                collect_columns(q, out);
            }
        }
    }
    if let Some(g) = &s.group {
        out.push(&g.col);
    }
    if let Some(o) = &s.order {
        item_col(&o.key, out);
    }
}

fn write_item(it: &SelectItem, out: &mut Vec<String>) {
    let target = match &it.target {
        ItemTarget::Column(c) => c.0.clone(),
        ItemTarget::Star => "*".to_string(),
    };
    match it.agg {
        Some(agg) => {
            out.push(agg.keyword().to_string());
            out.push("(".to_string());
            out.push(target);
            out.push(")".to_string());
        }
        None => out.push(target),
    }
}

fn write_stmt(s: &Stmt, out: &mut Vec<String>) {
    out.push("select".into());
    for (i, it) in s.select.items.iter().enumerate() {
        if i > 0 {
            out.push(",".into());
        }
        write_item(it, out);
    }
    out.push("from".into());
    out.push(TABLE_ALIAS.into());
    if let Some(w) = &s.where_clause {
        out.push("where".into());
        for (i, c) in w.conds.iter().enumerate() {
            if i > 0 {
                out.push("and".into());
            }
            out.push(c.col.0.clone());
            out.extend(c.op.symbol().split(' ').map(String::from));
            match &c.rhs {
                CondRhs::Value(v) => out.push(v.token()),
                CondRhs::Subquery(q) => {
                    out.push("(".into());
                    write_stmt(q, out);
                    out.push(")".into());
                }
                CondRhs::List(vs) => {
                    out.push("(".into());
                    for (j, v) in vs.iter().enumerate() {
                        if j > 0 {
                            out.push(",".into());
                        }
                        out.push(v.token());
                    }
                    out.push(")".into());
                }
            }
        }
    }
    if let Some(g) = &s.group {
        out.push("group".into());
        out.push("by".into());
        out.push(g.col.0.clone());
    }
    if let Some(o) = &s.order {
        out.push("order".into());
        out.push("by".into());
        write_item(&o.key, out);
        out.push(o.dir.keyword().into());
        if let Some(l) = o.limit {
            out.push("limit".into());
            out.push(l.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_id_pattern() {
        for ok in ["c1", "c12", "c3_number", "c4_first_2"] {
            assert!(ColRef::is_valid_id(ok), "{ok}");
        }
        for bad in ["c", "x1", "c1_", "c1__a", "c1_Number", "cx"] {
            assert!(!ColRef::is_valid_id(bad), "{bad}");
        }
    }

    #[test]
    fn count_star_serializes_canonically() {
        let t = SqlTree::new(Stmt {
            select: SelectClause {
                items: vec![SelectItem {
                    agg: Some(AggOp::Count),
                    target: ItemTarget::Star,
                }],
            },
            where_clause: None,
            group: None,
            order: None,
        });
        assert_eq!(t.to_sql(), "select count ( * ) from w");
    }

    #[test]
    fn literal_typing() {
        assert_eq!(Literal::typed("1.50"), Literal::Number("1.5".into()));
        assert_eq!(Literal::typed("1,500"), Literal::Text("1,500".into()));
        assert_eq!(Literal::Text("o'neal".into()).token(), "'o''neal'");
    }
}

//! Recursive-descent parser for the single-table SQL subset.
//!
//! Accepts raw text or the typed token sequences stored in datasets. The
//! typed entry point also reports, per source token, the innermost clause it
//! was consumed in; annotation derivation uses that to assign entity roles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Keyword,
    Column,
    Literal,
}

/// A SQL token as stored in dataset files: `[kind, text]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlToken {
    pub kind: TokenKind,
    pub text: String,
}

impl SqlToken {
    pub fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        SqlToken {
            kind,
            text: text.into(),
        }
    }

    /// Typed token sequence of a tree in canonical form.
    pub fn from_tree(tree: &SqlTree) -> Vec<SqlToken> {
        tree.to_tokens()
            .into_iter()
            .map(|t| {
                let kind = if ColRef::is_valid_id(&t) {
                    TokenKind::Column
                } else if t.starts_with('\'')
                    || t.starts_with('-')
                    || t.starts_with(|c: char| c.is_ascii_digit())
                {
                    TokenKind::Literal
                } else {
                    TokenKind::Keyword
                };
                SqlToken::new(kind, t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at token {position}: expected one of {expected:?}, found {found:?}")]
    Syntax {
        position: usize,
        expected: Vec<String>,
        found: Option<String>,
    },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

/// Clause a token was consumed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClauseKind {
    Select,
    Where,
    GroupBy,
    OrderBy,
}

/// Role of one source token in the parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TokenRole {
    pub clause: Option<ClauseKind>,
    pub is_agg: bool,
}

const KNOWN_WORDS: &[&str] = &[
    "select", "from", "w", "where", "and", "group", "by", "order", "asc", "desc", "limit", "in",
    "not", "count", "sum", "avg", "min", "max", "(", ")", ",", "*", "=", "!=", "<", "<=", ">",
    ">=",
];

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Word(String),
    Column(String),
    Literal(Literal),
}

impl Lexeme {
    fn describe(&self) -> String {
        match self {
            Lexeme::Word(w) => w.clone(),
            Lexeme::Column(c) => c.clone(),
            Lexeme::Literal(l) => l.token(),
        }
    }
}

#[derive(Debug, Clone)]
struct Lexed {
    lex: Lexeme,
    source: usize,
}

fn lex_raw(text: &str, source: usize, out: &mut Vec<Lexed>) -> Result<(), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let push = |out: &mut Vec<Lexed>, lex: Lexeme| out.push(Lexed { lex, source });
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' || c == '"' {
            let quote = c;
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError::Syntax {
                            position: out.len(),
                            expected: vec![quote.to_string()],
                            found: None,
                        })
                    }
                    Some(&ch) if ch == quote => {
                        if chars.get(i + 1) == Some(&quote) {
                            s.push(quote);
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            push(out, Lexeme::Literal(Literal::typed(&s)));
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            match Literal::typed(&s) {
                lit @ Literal::Number(_) => push(out, Lexeme::Literal(lit)),
                Literal::Text(_) => return Err(ParseError::Unsupported(s)),
            }
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let w: String = chars[start..i].iter().collect::<String>().to_lowercase();
            if ColRef::is_valid_id(&w) {
                push(out, Lexeme::Column(w));
            } else {
                push(out, Lexeme::Word(w));
            }
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = match two.as_str() {
                "!=" | "<=" | ">=" => two.clone(),
                "<>" => "!=".to_string(),
                _ => c.to_string(),
            };
            i += if two == sym || two == "<>" { 2 } else { 1 };
            push(out, Lexeme::Word(sym));
        }
    }
    Ok(())
}

fn check_supported(lexemes: &[Lexed]) -> Result<(), ParseError> {
    for l in lexemes {
        if let Lexeme::Word(w) = &l.lex {
            if !KNOWN_WORDS.contains(&w.as_str()) {
                return Err(ParseError::Unsupported(w.clone()));
            }
        }
    }
    Ok(())
}

/// Parses raw SQL text.
pub fn parse_sql(text: &str) -> Result<SqlTree, ParseError> {
    let mut lexemes = Vec::new();
    lex_raw(text, 0, &mut lexemes)?;
    for (i, l) in lexemes.iter_mut().enumerate() {
        l.source = i;
    }
    let n = lexemes.len();
    Parser::new(lexemes, n).parse_top()
}

/// Parses a typed token sequence.
pub fn parse_tokens(tokens: &[SqlToken]) -> Result<SqlTree, ParseError> {
    parse_tokens_with_roles(tokens).map(|(t, _)| t)
}

/// Parses a typed token sequence and reports each source token's role.
pub fn parse_tokens_with_roles(
    tokens: &[SqlToken],
) -> Result<(SqlTree, Vec<TokenRole>), ParseError> {
    let mut lexemes = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        match tok.kind {
            TokenKind::Keyword => lex_raw(&tok.text, i, &mut lexemes)?,
            TokenKind::Column => {
                let c = tok.text.trim().to_lowercase();
                if !ColRef::is_valid_id(&c) {
                    return Err(ParseError::Unsupported(format!("column id {}", tok.text)));
                }
                lexemes.push(Lexed {
                    lex: Lexeme::Column(c),
                    source: i,
                });
            }
            TokenKind::Literal => {
                let t = tok.text.trim();
                let content = unquote(t);
                lexemes.push(Lexed {
                    lex: Lexeme::Literal(Literal::typed(&content)),
                    source: i,
                });
            }
        }
    }
    let mut p = Parser::new(lexemes, tokens.len());
    let tree = p.parse_top()?;
    Ok((tree, p.roles))
}

fn unquote(t: &str) -> String {
    for q in ['\'', '"'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            let inner = &t[1..t.len() - 1];
            return inner.replace(&format!("{q}{q}"), &q.to_string());
        }
    }
    t.to_string()
}

struct Parser {
    lexemes: Vec<Lexed>,
    pos: usize,
    roles: Vec<TokenRole>,
    clauses: Vec<ClauseKind>,
}

impl Parser {
    fn new(lexemes: Vec<Lexed>, n_sources: usize) -> Self {
        Parser {
            lexemes,
            pos: 0,
            roles: vec![TokenRole::default(); n_sources],
            clauses: Vec::new(),
        }
    }

    fn parse_top(&mut self) -> Result<SqlTree, ParseError> {
        check_supported(&self.lexemes)?;
        let stmt = self.stmt()?;
        if self.pos < self.lexemes.len() {
            return Err(self.error(&["<end>"]));
        }
        Ok(SqlTree::new(stmt))
    }

    fn peek(&self) -> Option<&Lexeme> {
        self.lexemes.get(self.pos).map(|l| &l.lex)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Lexeme::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(Lexeme::describe),
        }
    }

    fn mark(&mut self, is_agg: bool) {
        let source = self.lexemes[self.pos].source;
        if let Some(role) = self.roles.get_mut(source) {
            if role.clause.is_none() {
                role.clause = self.clauses.last().copied();
            }
            role.is_agg |= is_agg;
        }
        self.pos += 1;
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek_word() == Some(word) {
            self.mark(false);
            true
        } else {
            false
        }
    }

    fn expect(&mut self, word: &str) -> Result<(), ParseError> {
        if self.eat(word) {
            Ok(())
        } else {
            Err(self.error(&[word]))
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        self.clauses.push(ClauseKind::Select);
        self.expect("select")?;
        let mut items = vec![self.item()?];
        while self.eat(",") {
            items.push(self.item()?);
        }
        self.clauses.pop();

        self.expect("from")?;
        self.expect(TABLE_ALIAS)?;

        let where_clause = if self.peek_word() == Some("where") {
            self.clauses.push(ClauseKind::Where);
            self.mark(false);
            let mut conds = vec![self.cond()?];
            while self.eat("and") {
                conds.push(self.cond()?);
            }
            self.clauses.pop();
            Some(WhereClause { conds })
        } else {
            None
        };

        let group = if self.peek_word() == Some("group") {
            self.clauses.push(ClauseKind::GroupBy);
            self.mark(false);
            self.expect("by")?;
            let col = self.column()?;
            self.clauses.pop();
            Some(GroupClause { col })
        } else {
            None
        };

        let order = if self.peek_word() == Some("order") {
            self.clauses.push(ClauseKind::OrderBy);
            self.mark(false);
            self.expect("by")?;
            let key = self.item()?;
            let dir = if self.eat("asc") {
                OrderDir::Asc
            } else if self.eat("desc") {
                OrderDir::Desc
            } else {
                return Err(self.error(&["asc", "desc"]));
            };
            let limit = if self.eat("limit") {
                Some(self.limit()?)
            } else {
                None
            };
            self.clauses.pop();
            Some(OrderClause { key, dir, limit })
        } else {
            None
        };

        Ok(Stmt {
            select: SelectClause { items },
            where_clause,
            group,
            order,
        })
    }

    fn limit(&mut self) -> Result<u64, ParseError> {
        if let Some(Lexeme::Literal(Literal::Number(n))) = self.peek() {
            if let Ok(v) = n.parse::<u64>() {
                if v >= 1 {
                    self.mark(false);
                    return Ok(v);
                }
            }
        }
        Err(self.error(&["<positive integer>"]))
    }

    fn column(&mut self) -> Result<ColRef, ParseError> {
        if let Some(Lexeme::Column(c)) = self.peek() {
            let c = ColRef(c.clone());
            self.mark(false);
            Ok(c)
        } else {
            Err(self.error(&["<column>"]))
        }
    }

    fn item(&mut self) -> Result<SelectItem, ParseError> {
        let agg = match self.peek_word().and_then(AggOp::from_keyword) {
            Some(a) => {
                self.mark(true);
                self.expect("(")?;
                Some(a)
            }
            None => None,
        };
        let target = if self.eat("*") {
            ItemTarget::Star
        } else if let Some(Lexeme::Column(_)) = self.peek() {
            ItemTarget::Column(self.column()?)
        } else {
            let mut expected = vec!["<column>", "*"];
            if agg.is_none() {
                expected.extend(AggOp::ALL.iter().map(|a| a.keyword()));
            }
            return Err(self.error(&expected));
        };
        if agg.is_some() {
            self.expect(")")?;
        }
        Ok(SelectItem { agg, target })
    }

    fn op(&mut self) -> Result<CompOp, ParseError> {
        if self.eat("not") {
            self.expect("in")?;
            return Ok(CompOp::NotIn);
        }
        let op = match self.peek_word() {
            Some("=") => CompOp::Eq,
            Some("!=") => CompOp::Ne,
            Some("<") => CompOp::Lt,
            Some("<=") => CompOp::Le,
            Some(">") => CompOp::Gt,
            Some(">=") => CompOp::Ge,
            Some("in") => CompOp::In,
            _ => {
                return Err(self.error(&["=", "!=", "<", "<=", ">", ">=", "in", "not"]));
            }
        };
        self.mark(false);
        Ok(op)
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        match self.peek() {
            Some(Lexeme::Literal(l)) => {
                let l = l.clone();
                self.mark(false);
                Ok(l)
            }
            Some(Lexeme::Column(_)) => Err(ParseError::Unsupported(
                "column-to-column comparison".to_string(),
            )),
            _ => Err(self.error(&["<value>"])),
        }
    }

    fn cond(&mut self) -> Result<Cond, ParseError> {
        let col = self.column()?;
        let op = self.op()?;
        let rhs = if self.eat("(") {
            if self.peek_word() == Some("select") {
                let q = self.stmt()?;
                self.expect(")")?;
                CondRhs::Subquery(Box::new(q))
            } else {
                let mut vs = vec![self.literal()?];
                while self.eat(",") {
                    vs.push(self.literal()?);
                }
                self.expect(")")?;
                CondRhs::List(vs)
            }
        } else {
            CondRhs::Value(self.literal()?)
        };
        Ok(Cond { col, op, rhs })
    }
}

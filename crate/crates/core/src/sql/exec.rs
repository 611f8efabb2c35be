//! In-memory execution of the SQL subset over one table.
//!
//! Semantics: `where` filters with an AND-conjunction; `group by` partitions
//! in first-appearance order; aggregates skip nulls (`count(*)` counts all
//! rows); `order by` is a stable sort followed by `limit`. Comparisons with
//! null are false.

use std::cmp::Ordering;

use thiserror::Error;

use super::ast::*;
use super::denotation::{Datum, Denotation};
use crate::data::{CellValue, ColumnType, TableData};
use crate::text::format_number;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("subquery returned {rows}x{cols}, expected a single value")]
    NonScalarSubquery { rows: usize, cols: usize },
}

/// Executes `tree` against `table`. Never mutates the table.
pub fn execute(tree: &SqlTree, table: &TableData) -> Result<Denotation, ExecError> {
    for c in tree.columns() {
        if table.column_index(c.as_str()).is_none() {
            return Err(ExecError::UnknownColumn(c.0.clone()));
        }
    }
    let rows = Executor { table }.stmt(&tree.root)?;
    Ok(Denotation {
        rows,
        ordered: tree.is_ordered(),
    })
}

struct Executor<'a> {
    table: &'a TableData,
}

/// Right-hand side of a condition after subqueries have been evaluated.
enum Operand {
    Scalar(Datum),
    Set(Vec<Datum>),
}

fn literal_datum(l: &Literal) -> Datum {
    match l {
        Literal::Number(_) => Datum::Number(l.number().unwrap_or(f64::NAN)),
        Literal::Text(s) => Datum::Text(s.clone()),
    }
}

/// Total order used for sorting and min/max: null < number < text.
pub(crate) fn datum_order(a: &Datum, b: &Datum) -> Ordering {
    use Datum::*;
    match (a, b) {
        (Null, Null) => Ordering::Equal,
        (Null, _) => Ordering::Less,
        (_, Null) => Ordering::Greater,
        (Number(x), Number(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
        (Number(_), Text(_)) => Ordering::Less,
        (Text(_), Number(_)) => Ordering::Greater,
        (Text(x), Text(y)) => x.cmp(y),
    }
}

impl<'a> Executor<'a> {
    fn col(&self, c: &ColRef) -> Result<usize, ExecError> {
        self.table
            .column_index(c.as_str())
            .ok_or_else(|| ExecError::UnknownColumn(c.0.clone()))
    }

    fn cell(&self, row: usize, col: usize) -> Datum {
        match &self.table.rows[row][col].value {
            CellValue::Null => Datum::Null,
            CellValue::Number(v) => Datum::Number(*v),
            CellValue::Text(s) => Datum::Text(s.clone()),
        }
    }

    fn stmt(&self, s: &Stmt) -> Result<Vec<Vec<Datum>>, ExecError> {
        let rows = self.filter(s)?;
        let has_agg = s.select.items.iter().any(|i| i.agg.is_some())
            || s.order.as_ref().is_some_and(|o| o.key.agg.is_some());

        let groups: Vec<Vec<usize>> = if let Some(g) = &s.group {
            let gc = self.col(&g.col)?;
            let mut keys: Vec<Datum> = Vec::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for r in rows {
                let k = self.cell(r, gc);
                match keys.iter().position(|x| datum_order(x, &k) == Ordering::Equal) {
                    Some(i) => groups[i].push(r),
                    None => {
                        keys.push(k);
                        groups.push(vec![r]);
                    }
                }
            }
            groups
        } else if has_agg {
            vec![rows]
        } else {
            rows.into_iter().map(|r| vec![r]).collect()
        };

        let mut out = Vec::with_capacity(groups.len());
        for g in &groups {
            let mut row = Vec::new();
            for item in &s.select.items {
                self.project(item, g, &mut row)?;
            }
            let key = match &s.order {
                Some(o) => Some(self.item_value(&o.key, g)?),
                None => None,
            };
            out.push((row, key));
        }

        if let Some(o) = &s.order {
            out.sort_by(|(_, a), (_, b)| {
                let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
                match o.dir {
                    OrderDir::Asc => datum_order(a, b),
                    OrderDir::Desc => datum_order(b, a),
                }
            });
            if let Some(l) = o.limit {
                out.truncate(l as usize);
            }
        }
        Ok(out.into_iter().map(|(r, _)| r).collect())
    }

    fn project(
        &self,
        item: &SelectItem,
        rows: &[usize],
        out: &mut Vec<Datum>,
    ) -> Result<(), ExecError> {
        if item.agg.is_none() && item.target == ItemTarget::Star {
            match rows.first() {
                Some(&r) => out.extend((0..self.table.n_columns()).map(|c| self.cell(r, c))),
                None => out.extend((0..self.table.n_columns()).map(|_| Datum::Null)),
            }
            return Ok(());
        }
        out.push(self.item_value(item, rows)?);
        Ok(())
    }

    fn item_value(&self, item: &SelectItem, rows: &[usize]) -> Result<Datum, ExecError> {
        let col = match &item.target {
            ItemTarget::Column(c) => Some(self.col(c)?),
            ItemTarget::Star => None,
        };
        let Some(agg) = item.agg else {
            return Ok(match (col, rows.first()) {
                (Some(c), Some(&r)) => self.cell(r, c),
                _ => Datum::Null,
            });
        };
        let Some(c) = col else {
            return match agg {
                AggOp::Count => Ok(Datum::Number(rows.len() as f64)),
                _ => Err(ExecError::TypeMismatch(format!("{}(*)", agg.keyword()))),
            };
        };
        let values: Vec<Datum> = rows
            .iter()
            .map(|&r| self.cell(r, c))
            .filter(|d| *d != Datum::Null)
            .collect();
        match agg {
            AggOp::Count => Ok(Datum::Number(values.len() as f64)),
            AggOp::Sum | AggOp::Avg => {
                if self.table.column_types[c] != ColumnType::Number {
                    return Err(ExecError::TypeMismatch(format!(
                        "{} over non-numeric column {}",
                        agg.keyword(),
                        self.table.column_ids[c]
                    )));
                }
                if values.is_empty() {
                    return Ok(Datum::Null);
                }
                let sum: f64 = values
                    .iter()
                    .map(|d| match d {
                        Datum::Number(v) => *v,
                        _ => 0.0,
                    })
                    .sum();
                Ok(Datum::Number(if agg == AggOp::Sum {
                    sum
                } else {
                    sum / values.len() as f64
                }))
            }
            AggOp::Min => Ok(values
                .into_iter()
                .min_by(datum_order)
                .unwrap_or(Datum::Null)),
            AggOp::Max => Ok(values
                .into_iter()
                .rev()
                .max_by(datum_order)
                .unwrap_or(Datum::Null)),
        }
    }

    fn operand(&self, cond: &Cond) -> Result<Operand, ExecError> {
        let membership = cond.op.is_membership();
        match &cond.rhs {
            CondRhs::Value(l) if membership => Ok(Operand::Set(vec![literal_datum(l)])),
            CondRhs::Value(l) => Ok(Operand::Scalar(literal_datum(l))),
            CondRhs::List(vs) if membership => {
                Ok(Operand::Set(vs.iter().map(literal_datum).collect()))
            }
            CondRhs::List(vs) if vs.len() == 1 => Ok(Operand::Scalar(literal_datum(&vs[0]))),
            CondRhs::List(_) => Err(ExecError::TypeMismatch(format!(
                "value list with operator {}",
                cond.op.symbol()
            ))),
            CondRhs::Subquery(q) => {
                let rows = self.stmt(q)?;
                let cols = rows.first().map_or(1, Vec::len);
                if membership {
                    if cols != 1 {
                        return Err(ExecError::NonScalarSubquery {
                            rows: rows.len(),
                            cols,
                        });
                    }
                    Ok(Operand::Set(rows.into_iter().map(|mut r| r.remove(0)).collect()))
                } else {
                    if rows.len() != 1 || cols != 1 {
                        return Err(ExecError::NonScalarSubquery {
                            rows: rows.len(),
                            cols,
                        });
                    }
                    Ok(Operand::Scalar(rows.into_iter().next().unwrap().remove(0)))
                }
            }
        }
    }

    fn compare(&self, col: usize, cell: &Datum, rhs: &Datum) -> Result<Option<Ordering>, ExecError> {
        Ok(match (cell, rhs) {
            (Datum::Null, _) | (_, Datum::Null) => None,
            (Datum::Number(a), Datum::Number(b)) => a.partial_cmp(b),
            (Datum::Text(a), Datum::Text(b)) => Some(a.as_str().cmp(b.as_str())),
            (Datum::Text(a), Datum::Number(b)) => Some(a.as_str().cmp(format_number(*b).as_str())),
            (Datum::Number(_), Datum::Text(t)) => {
                return Err(ExecError::TypeMismatch(format!(
                    "numeric column {} compared with text '{t}'",
                    self.table.column_ids[col]
                )))
            }
        })
    }

    fn filter(&self, s: &Stmt) -> Result<Vec<usize>, ExecError> {
        let all: Vec<usize> = (0..self.table.rows.len()).collect();
        let Some(w) = &s.where_clause else {
            return Ok(all);
        };
        let mut prepared = Vec::with_capacity(w.conds.len());
        for c in &w.conds {
            prepared.push((self.col(&c.col)?, c.op, self.operand(c)?));
        }
        let mut out = Vec::new();
        'rows: for r in all {
            for (col, op, rhs) in &prepared {
                if !self.holds(r, *col, *op, rhs)? {
                    continue 'rows;
                }
            }
            out.push(r);
        }
        Ok(out)
    }

    fn holds(&self, row: usize, col: usize, op: CompOp, rhs: &Operand) -> Result<bool, ExecError> {
        let cell = self.cell(row, col);
        // Membership in an empty set is decided without looking at the cell,
        // so even a null is `not in ()`.
        if let Operand::Set(values) = rhs {
            if values.is_empty() {
                return Ok(op == CompOp::NotIn);
            }
        }
        if cell == Datum::Null {
            return Ok(false);
        }
        match rhs {
            Operand::Set(values) => {
                let mut saw_null = false;
                for v in values {
                    match self.compare(col, &cell, v)? {
                        Some(Ordering::Equal) => return Ok(op == CompOp::In),
                        None => saw_null = true,
                        _ => {}
                    }
                }
                Ok(op == CompOp::NotIn && !saw_null)
            }
            Operand::Scalar(v) => {
                let Some(ord) = self.compare(col, &cell, v)? else {
                    return Ok(false);
                };
                Ok(match op {
                    CompOp::Eq => ord == Ordering::Equal,
                    CompOp::Ne => ord != Ordering::Equal,
                    CompOp::Lt => ord == Ordering::Less,
                    CompOp::Le => ord != Ordering::Greater,
                    CompOp::Gt => ord == Ordering::Greater,
                    CompOp::Ge => ord != Ordering::Less,
                    CompOp::In | CompOp::NotIn => unreachable!("membership uses Operand::Set"),
                })
            }
        }
    }
}

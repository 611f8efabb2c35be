use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::encode::EncoderOutput;
use super::scorer::{slot_availability, step_scores, ActionScorer, StepInput};
use super::NspError;
use crate::grammar::{DecoderAction, Grammar, PartialTree};
use crate::sql::SqlTree;

/// A complete derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tree: SqlTree,
    pub actions: Vec<DecoderAction>,
    pub log_prob: f64,
}

#[derive(Clone)]
struct Hyp {
    state: PartialTree,
    history: Vec<DecoderAction>,
    log_prob: f64,
}

fn history_cmp(a: &[DecoderAction], b: &[DecoderAction]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.to_string().cmp(&y.to_string());
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Higher score first, then the lexicographically smaller action history.
fn rank(a: (f64, &[DecoderAction]), b: (f64, &[DecoderAction])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| history_cmp(a.1, b.1))
}

fn search(
    enc: &EncoderOutput,
    grammar: &Grammar,
    scorer: &dyn ActionScorer,
    beam_size: usize,
    max_steps: usize,
) -> Result<Vec<Decoded>, NspError> {
    let costs = grammar.min_costs(slot_availability(enc));
    let mut beam = vec![Hyp {
        state: PartialTree::new(grammar.start_symbol()),
        history: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Decoded> = Vec::new();
    let mut dead_ends = 0;
    for _ in 0..max_steps {
        if beam.is_empty() {
            break;
        }
        let mut next: Vec<Hyp> = Vec::new();
        for h in &beam {
            let step = StepInput {
                enc,
                grammar,
                state: &h.state,
                history: &h.history,
            };
            let scored = match step_scores(&step, scorer, &costs, max_steps) {
                Ok(s) => s,
                Err(_) => {
                    dead_ends += 1;
                    continue;
                }
            };
            for (a, lp) in scored {
                let mut state = h.state.clone();
                state.apply(grammar, &a).map_err(NspError::Grammar)?;
                let mut history = h.history.clone();
                history.push(a);
                next.push(Hyp {
                    state,
                    history,
                    log_prob: h.log_prob + lp,
                });
            }
        }
        next.sort_by(|a, b| rank((a.log_prob, &a.history), (b.log_prob, &b.history)));
        next.truncate(beam_size);
        beam = Vec::new();
        for h in next {
            if h.state.is_complete() {
                finished.push(Decoded {
                    tree: h.state.to_sql_tree().map_err(NspError::Grammar)?,
                    actions: h.history,
                    log_prob: h.log_prob,
                });
            } else {
                beam.push(h);
            }
        }
        finished.sort_by(|a, b| rank((a.log_prob, &a.actions), (b.log_prob, &b.actions)));
        finished.truncate(beam_size);
        // Scores only decrease, so a full set of finished derivations that
        // beat every live hypothesis is final.
        if finished.len() == beam_size
            && beam.iter().all(|h| h.log_prob <= finished[beam_size - 1].log_prob)
        {
            break;
        }
    }
    if finished.is_empty() {
        return Err(if dead_ends > 0 { NspError::DeadEnd } else { NspError::NoCompleteDerivation });
    }
    Ok(finished)
}

/// Beam search over derivations by summed log-probability (no length
/// normalization). Returns up to `beam_size` complete trees, best first. The
/// greedy derivation is always among the candidates, so the top score never
/// falls below the `beam_size = 1` result.
pub fn decode_beam(
    enc: &EncoderOutput,
    grammar: &Grammar,
    scorer: &dyn ActionScorer,
    beam_size: usize,
    max_steps: usize,
) -> Result<Vec<Decoded>, NspError> {
    let beam_size = beam_size.max(1);
    let mut out = search(enc, grammar, scorer, beam_size, max_steps);
    if beam_size > 1 {
        if let Ok(greedy) = search(enc, grammar, scorer, 1, max_steps) {
            let mut all = out.unwrap_or_default();
            for g in greedy {
                if !all.iter().any(|d| d.actions == g.actions) {
                    all.push(g);
                }
            }
            all.sort_by(|a, b| rank((a.log_prob, &a.actions), (b.log_prob, &b.actions)));
            all.truncate(beam_size);
            out = Ok(all);
        }
    }
    out
}

use super::encode::EncoderOutput;
use super::NspError;
use crate::grammar::{DecoderAction, Grammar, MinCosts, PartialTree, SlotKind, Symbol};
use crate::text::hash_parts;

/// Decoder state visible to a scorer at one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub enc: &'a EncoderOutput,
    pub grammar: &'a Grammar,
    pub state: &'a PartialTree,
    pub history: &'a [DecoderAction],
}

/// Scores the legal actions of a step. Implementations return one
/// unnormalized log-score per action; normalization and masking happen in
/// [`step_scores`].
pub trait ActionScorer {
    fn logits(&self, step: &StepInput, actions: &[DecoderAction]) -> Vec<f64>;
}

/// Which copy slots have at least one candidate.
pub fn slot_availability(enc: &EncoderOutput) -> [bool; 3] {
    let mut a = [false; 3];
    a[SlotKind::Column.index()] = !enc.columns.is_empty();
    a[SlotKind::Value.index()] = !enc.values.is_empty();
    a[SlotKind::Table.index()] = true;
    a
}

/// Legal actions for the current target: rules with the target as lhs or
/// copies of the encoder's candidates. Rules are dropped when their slots
/// cannot be filled or the derivation could no longer finish within
/// `max_steps`.
pub fn legal_actions(step: &StepInput, costs: &MinCosts, max_steps: usize) -> Vec<DecoderAction> {
    let mut pending = step.state.pending_symbols();
    let Some(target) = pending.next() else {
        return Vec::new();
    };
    let rest = pending.fold(0usize, |acc, s| acc.saturating_add(costs.of(s)));
    let used = step.history.len();
    let fits = |cost: usize| used.saturating_add(cost).saturating_add(rest) <= max_steps;
    let enc = step.enc;
    match target {
        Symbol::NonTerminal(nt) => step
            .grammar
            .rules_for(*nt)
            .iter()
            .filter(|&&r| fits(costs.of_rule(step.grammar.rule(r))))
            .map(|&r| DecoderAction::ApplyRule(r))
            .collect(),
        Symbol::Slot(kind) if fits(1) => match kind {
            SlotKind::Column => enc.columns.iter().map(|c| DecoderAction::CopyColumn(c.id.clone())).collect(),
            SlotKind::Value => enc.values.iter().map(|v| DecoderAction::CopyValue(v.text.clone())).collect(),
            SlotKind::Table => vec![DecoderAction::CopyTable(enc.table.clone())],
        },
        _ => Vec::new(),
    }
}

/// Log-probabilities over exactly the legal actions of a step.
pub fn step_scores(
    step: &StepInput,
    scorer: &dyn ActionScorer,
    costs: &MinCosts,
    max_steps: usize,
) -> Result<Vec<(DecoderAction, f64)>, NspError> {
    let actions = legal_actions(step, costs, max_steps);
    if actions.is_empty() {
        return Err(NspError::DeadEnd);
    }
    let z = scorer.logits(step, &actions);
    let lp = log_softmax(&z);
    Ok(actions.into_iter().zip(lp).collect())
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| (x - lse).min(0.0)).collect()
}

/// Puts all mass on a fixed action sequence.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub gold: Vec<DecoderAction>,
}

impl ActionScorer for OracleScorer {
    fn logits(&self, step: &StepInput, actions: &[DecoderAction]) -> Vec<f64> {
        let want = self.gold.get(step.history.len());
        actions
            .iter()
            .map(|a| if Some(a) == want { 0.0 } else { -1e6 })
            .collect()
    }
}

/// Pseudo-random logits in `[-3, 3)` keyed on seed, step, previous action and
/// candidate action.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub seed: u64,
}

impl ActionScorer for RandomScorer {
    fn logits(&self, step: &StepInput, actions: &[DecoderAction]) -> Vec<f64> {
        let seed = self.seed.to_string();
        let t = step.history.len().to_string();
        let prev = step.history.last().map(|a| a.to_string()).unwrap_or_default();
        actions
            .iter()
            .map(|a| {
                let h = hash_parts(&[&seed, &t, &prev, &a.to_string()]);
                (h >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0
            })
            .collect()
    }
}

//! Reward machines: symbol vocabularies, labels, guarded transitions and
//! deterministic stepping.

mod format;
mod validate;

use std::collections::HashMap;
use std::fmt;

pub use format::{guard_text, parse_rm, serialize_rm, to_dot};
pub use validate::{validate_rm, Diagnostic};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RmError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: reference to undeclared state `{name}`")]
    UndeclaredState { line: usize, name: String },
    #[error("line {line}: reference to undeclared symbol `{name}`")]
    UndeclaredSymbol { line: usize, name: String },
    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },
    #[error("terminal state `{state}` has outgoing transitions")]
    TerminalWithOutgoing { state: String },
    #[error("non-terminal state `{state}` has no outgoing transitions")]
    NoOutgoing { state: String },
    #[error("guard uses symbol `{symbol}` both positively and negatively")]
    ContradictoryGuard { symbol: String },
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error("stepping a terminated machine (state `{state}`)")]
    SteppingTerminated { state: String },
    #[error("label width {got} does not match vocabulary width {expected}")]
    LabelWidth { expected: usize, got: usize },
}

/// Index of a state within its machine, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Ordered set of propositional symbols. Positions define label bit order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolVocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolVocabulary {
    pub fn new<I, S>(symbols: I) -> Result<Self, RmError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::default();
        for s in symbols {
            let s = s.into();
            if vocab.index.contains_key(&s) {
                return Err(RmError::Duplicate {
                    kind: "symbol",
                    name: s,
                });
            }
            vocab.index.insert(s.clone(), vocab.symbols.len());
            vocab.symbols.push(s);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Label with exactly the named symbols set.
    pub fn label_of(&self, names: &[&str]) -> Result<Label, RmError> {
        let mut label = Label::empty(self.len());
        for name in names {
            let i = self.index_of(name).ok_or_else(|| RmError::UndeclaredSymbol {
                line: 0,
                name: (*name).to_string(),
            })?;
            label.bits[i] = true;
        }
        Ok(label)
    }
}

/// A subset of the vocabulary, as a fixed-width bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Label {
    bits: Vec<bool>,
}

impl Label {
    pub fn empty(width: usize) -> Self {
        Self {
            bits: vec![false; width],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_indices(width: usize, indices: &[usize]) -> Self {
        let mut label = Self::empty(width);
        for &i in indices {
            label.bits[i] = true;
        }
        label
    }

    /// The `n`-th label of the `2^width` enumeration (bit `i` of `n` is symbol `i`).
    pub fn from_index(width: usize, n: u64) -> Self {
        Self {
            bits: (0..width).map(|i| (n >> i) & 1 == 1).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn to_features(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
    }
}

/// Conjunction of literals over the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Guard {
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl Guard {
    pub fn new(mut positives: Vec<usize>, mut negatives: Vec<usize>) -> Result<Self, usize> {
        positives.sort_unstable();
        positives.dedup();
        negatives.sort_unstable();
        negatives.dedup();
        if let Some(&clash) = positives.iter().find(|p| negatives.binary_search(p).is_ok()) {
            return Err(clash);
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    pub fn positive(symbol: usize) -> Self {
        Self {
            positives: vec![symbol],
            negatives: vec![],
        }
    }

    pub fn negative(symbol: usize) -> Self {
        Self {
            positives: vec![],
            negatives: vec![symbol],
        }
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn negatives(&self) -> &[usize] {
        &self.negatives
    }

    pub fn satisfied(&self, label: &Label) -> bool {
        self.positives.iter().all(|&i| label.get(i)) && !self.negatives.iter().any(|&i| label.get(i))
    }

    /// Two conjunctions are jointly satisfiable unless one negates a literal of the other.
    pub fn may_overlap(&self, other: &Guard) -> bool {
        !self
            .positives
            .iter()
            .any(|p| other.negatives.binary_search(p).is_ok())
            && !other
                .positives
                .iter()
                .any(|p| self.negatives.binary_search(p).is_ok())
    }

    fn max_symbol(&self) -> Option<usize> {
        self.positives
            .iter()
            .chain(self.negatives.iter())
            .copied()
            .max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmTransition {
    pub from: StateId,
    pub guard: Guard,
    pub to: StateId,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardMachine {
    states: Vec<String>,
    initial: StateId,
    terminal: Vec<bool>,
    transitions: Vec<Vec<RmTransition>>,
    vocabulary: SymbolVocabulary,
}

impl RewardMachine {
    /// Builds a machine, enforcing the structural invariants. Transitions keep
    /// their relative order per source state.
    pub fn new(
        vocabulary: SymbolVocabulary,
        states: Vec<String>,
        initial: StateId,
        terminals: &[StateId],
        transitions: Vec<RmTransition>,
    ) -> Result<Self, RmError> {
        let mut seen = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if seen.insert(s.as_str(), i).is_some() {
                return Err(RmError::Duplicate {
                    kind: "state",
                    name: s.clone(),
                });
            }
        }
        let n = states.len();
        if initial.0 >= n {
            return Err(RmError::Invalid("initial state out of range".into()));
        }
        let mut terminal = vec![false; n];
        for t in terminals {
            if t.0 >= n {
                return Err(RmError::Invalid("terminal state out of range".into()));
            }
            terminal[t.0] = true;
        }
        let mut per_state: Vec<Vec<RmTransition>> = vec![Vec::new(); n];
        for t in transitions {
            if t.from.0 >= n || t.to.0 >= n {
                return Err(RmError::Invalid("transition endpoint out of range".into()));
            }
            if t.guard.max_symbol().is_some_and(|m| m >= vocabulary.len()) {
                return Err(RmError::Invalid("guard symbol out of range".into()));
            }
            if !t.reward.is_finite() {
                return Err(RmError::Invalid("non-finite reward".into()));
            }
            per_state[t.from.0].push(t);
        }
        for (i, outgoing) in per_state.iter().enumerate() {
            if terminal[i] && !outgoing.is_empty() {
                return Err(RmError::TerminalWithOutgoing {
                    state: states[i].clone(),
                });
            }
            if !terminal[i] && outgoing.is_empty() {
                return Err(RmError::NoOutgoing {
                    state: states[i].clone(),
                });
            }
        }
        Ok(Self {
            states,
            initial,
            terminal,
            transitions: per_state,
            vocabulary,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_name(&self, u: StateId) -> &str {
        &self.states[u.0]
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn is_terminal(&self, u: StateId) -> bool {
        self.terminal[u.0]
    }

    pub fn terminals(&self) -> impl Iterator<Item = StateId> + '_ {
        self.state_ids().filter(|&u| self.is_terminal(u))
    }

    pub fn vocabulary(&self) -> &SymbolVocabulary {
        &self.vocabulary
    }

    /// Outgoing transitions of `u` in declaration order.
    pub fn outgoing(&self, u: StateId) -> &[RmTransition] {
        &self.transitions[u.0]
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &RmTransition> {
        self.transitions.iter().flatten()
    }

    /// Index (into `outgoing(u)`) of the first transition whose guard accepts
    /// `label`, or `None` for the implicit zero-reward self-loop.
    pub fn matching_transition(&self, u: StateId, label: &Label) -> Result<Option<usize>, RmError> {
        if label.width() != self.vocabulary.len() {
            return Err(RmError::LabelWidth {
                expected: self.vocabulary.len(),
                got: label.width(),
            });
        }
        if self.is_terminal(u) {
            return Err(RmError::SteppingTerminated {
                state: self.state_name(u).to_string(),
            });
        }
        Ok(self.outgoing(u).iter().position(|t| t.guard.satisfied(label)))
    }

    /// First-match transition; unmatched labels self-loop with reward 0.
    pub fn step(&self, u: StateId, label: &Label) -> Result<(StateId, f64), RmError> {
        Ok(match self.matching_transition(u, label)? {
            Some(i) => {
                let t = &self.outgoing(u)[i];
                (t.to, t.reward)
            }
            None => (u, 0.0),
        })
    }

    pub fn max_reward(&self) -> f64 {
        self.transitions().map(|t| t.reward).fold(0.0, f64::max)
    }
}

/// Per-episode cursor into a machine.
#[derive(Debug, Clone, PartialEq)]
pub struct RmRunState {
    pub current: StateId,
    pub last_label: Label,
    pub terminated: bool,
}

impl RmRunState {
    pub fn new(rm: &RewardMachine) -> Self {
        Self::starting_at(rm, rm.initial())
    }

    pub fn starting_at(rm: &RewardMachine, u: StateId) -> Self {
        Self {
            current: u,
            last_label: Label::empty(rm.vocabulary().len()),
            terminated: rm.is_terminal(u),
        }
    }

    /// Advances on `label`, returning the machine reward.
    pub fn advance(&mut self, rm: &RewardMachine, label: Label) -> Result<f64, RmError> {
        if self.terminated {
            return Err(RmError::SteppingTerminated {
                state: rm.state_name(self.current).to_string(),
            });
        }
        let (next, reward) = rm.step(self.current, &label)?;
        self.current = next;
        self.last_label = label;
        self.terminated = rm.is_terminal(next);
        Ok(reward)
    }
}

/// The two-step order machine used throughout the tests and docs.
pub const ORDER2_TEXT: &str = "\
SYMBOLS:
    P1 - first point visited
    P2 - second point visited
STATES: u0, u1, u2
INITIAL: u0
TERMINAL: u2
TRANSITIONS:
    (u0, not P1) --> next=u0;r=0
    (u0, P1) --> next=u1;r=0
    (u1, not P2) --> next=u1;r=0
    (u1, P2) --> next=u2;r=1
";

#[cfg(test)]
mod tests {
    use super::*;

    fn order2() -> RewardMachine {
        parse_rm(ORDER2_TEXT).unwrap()
    }

    #[test]
    fn order2_steps() {
        let rm = order2();
        let v = rm.vocabulary();
        let u0 = rm.state_by_name("u0").unwrap();
        let u1 = rm.state_by_name("u1").unwrap();
        let u2 = rm.state_by_name("u2").unwrap();
        assert_eq!(rm.step(u0, &v.label_of(&["P1"]).unwrap()).unwrap(), (u1, 0.0));
        assert_eq!(rm.step(u1, &v.label_of(&["P2"]).unwrap()).unwrap(), (u2, 1.0));
        assert_eq!(rm.step(u0, &v.label_of(&[]).unwrap()).unwrap(), (u0, 0.0));
        // first match on u0 is the `not P1` self-loop only when P1 is absent
        assert_eq!(rm.matching_transition(u0, &Label::empty(2)).unwrap(), Some(0));
    }

    #[test]
    fn stepping_terminal_is_an_error() {
        let rm = order2();
        let u2 = rm.state_by_name("u2").unwrap();
        let err = rm.step(u2, &Label::empty(2)).unwrap_err();
        assert!(err.to_string().contains("stepping a terminated machine"));
    }

    #[test]
    fn unmatched_label_self_loops() {
        let vocab = SymbolVocabulary::new(["A", "B"]).unwrap();
        let rm = RewardMachine::new(
            vocab,
            vec!["a".into(), "b".into()],
            StateId(0),
            &[StateId(1)],
            vec![RmTransition {
                from: StateId(0),
                guard: Guard::positive(0),
                to: StateId(1),
                reward: 2.5,
            }],
        )
        .unwrap();
        assert_eq!(rm.step(StateId(0), &Label::from_indices(2, &[1])).unwrap(), (StateId(0), 0.0));
        assert_eq!(rm.step(StateId(0), &Label::from_indices(2, &[0, 1])).unwrap(), (StateId(1), 2.5));
    }

    #[test]
    fn run_state_absorbs_at_terminal() {
        let rm = order2();
        let v = rm.vocabulary().clone();
        let mut run = RmRunState::new(&rm);
        assert_eq!(run.advance(&rm, v.label_of(&["P1"]).unwrap()).unwrap(), 0.0);
        assert!(!run.terminated);
        assert_eq!(run.advance(&rm, v.label_of(&["P2"]).unwrap()).unwrap(), 1.0);
        assert!(run.terminated);
        assert_eq!(run.last_label, v.label_of(&["P2"]).unwrap());
        assert!(matches!(
            run.advance(&rm, Label::empty(2)),
            Err(RmError::SteppingTerminated { .. })
        ));
    }

    #[test]
    fn guard_rejects_contradiction() {
        assert_eq!(Guard::new(vec![0, 1], vec![1]), Err(1));
        let g = Guard::new(vec![0], vec![1]).unwrap();
        assert!(g.satisfied(&Label::from_indices(3, &[0, 2])));
        assert!(!g.satisfied(&Label::from_indices(3, &[0, 1])));
    }

    #[test]
    fn wrong_label_width() {
        let rm = order2();
        assert!(matches!(
            rm.step(StateId(0), &Label::empty(3)),
            Err(RmError::LabelWidth { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn structural_invariants_enforced() {
        let vocab = SymbolVocabulary::new(["A"]).unwrap();
        let err = RewardMachine::new(vocab.clone(), vec!["a".into()], StateId(0), &[], vec![]).unwrap_err();
        assert!(matches!(err, RmError::NoOutgoing { .. }));
        let err = RewardMachine::new(
            vocab,
            vec!["a".into()],
            StateId(0),
            &[StateId(0)],
            vec![RmTransition {
                from: StateId(0),
                guard: Guard::positive(0),
                to: StateId(0),
                reward: 0.0,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, RmError::TerminalWithOutgoing { .. }));
    }
}

use std::collections::VecDeque;
use std::fmt;

use super::{Label, RewardMachine, StateId};

/// Largest vocabulary for which guard overlap is checked by enumerating labels.
const EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Unreachable {
        state: String,
    },
    /// Two guards of one state accept a common label; the earlier one wins.
    OverlappingGuards {
        state: String,
        first: usize,
        second: usize,
        witness: Option<Label>,
    },
    TerminalWithOutgoing {
        state: String,
    },
    NoOutgoing {
        state: String,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unreachable { state } => write!(f, "warning: state `{state}` is unreachable from the initial state"),
            Self::OverlappingGuards {
                state,
                first,
                second,
                witness,
            } => {
                write!(
                    f,
                    "warning: state `{state}`: guards of transitions {first} and {second} overlap"
                )?;
                if let Some(w) = witness {
                    let bits: String = w.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
                    write!(f, " (e.g. label {bits})")?;
                }
                Ok(())
            }
            Self::TerminalWithOutgoing { state } => {
                write!(f, "error: terminal state `{state}` has outgoing transitions")
            }
            Self::NoOutgoing { state } => {
                write!(f, "error: non-terminal state `{state}` has no outgoing transitions")
            }
        }
    }
}

fn reachable(rm: &RewardMachine) -> Vec<bool> {
    let mut seen = vec![false; rm.num_states()];
    let mut queue = VecDeque::from([rm.initial()]);
    seen[rm.initial().0] = true;
    while let Some(u) = queue.pop_front() {
        for t in rm.outgoing(u) {
            if !seen[t.to.0] {
                seen[t.to.0] = true;
                queue.push_back(t.to);
            }
        }
    }
    seen
}

/// Collects structural warnings and errors; an empty list means clean.
pub fn validate_rm(rm: &RewardMachine) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let width = rm.vocabulary().len();
    for (i, &ok) in reachable(rm).iter().enumerate() {
        if !ok {
            out.push(Diagnostic::Unreachable {
                state: rm.state_name(StateId(i)).to_string(),
            });
        }
    }
    for u in rm.state_ids() {
        let name = rm.state_name(u).to_string();
        let outgoing = rm.outgoing(u);
        if rm.is_terminal(u) && !outgoing.is_empty() {
            out.push(Diagnostic::TerminalWithOutgoing { state: name.clone() });
        }
        if !rm.is_terminal(u) && outgoing.is_empty() {
            out.push(Diagnostic::NoOutgoing { state: name.clone() });
        }
        for a in 0..outgoing.len() {
            for b in a + 1..outgoing.len() {
                let (ga, gb) = (&outgoing[a].guard, &outgoing[b].guard);
                let witness = if width <= EXHAUSTIVE_LIMIT {
                    (0..1u64 << width)
                        .map(|n| Label::from_index(width, n))
                        .find(|l| ga.satisfied(l) && gb.satisfied(l))
                        .map(Some)
                } else {
                    ga.may_overlap(gb).then_some(None)
                };
                if let Some(witness) = witness {
                    out.push(Diagnostic::OverlappingGuards {
                        state: name.clone(),
                        first: a,
                        second: b,
                        witness,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rm::{parse_rm, Guard, ORDER2_TEXT};
    use proptest::prelude::*;

    #[test]
    fn order2_is_clean() {
        assert!(validate_rm(&parse_rm(ORDER2_TEXT).unwrap()).is_empty());
    }

    #[test]
    fn overlap_detected_with_witness() {
        let rm = parse_rm(
            "SYMBOLS:\n P1\n P2\nSTATES: u0, u1\nINITIAL: u0\nTERMINAL: u1\nTRANSITIONS:\n\
             (u0, P1) --> next=u1;r=1\n(u0, P1 and not P2) --> next=u0;r=0\n",
        )
        .unwrap();
        let diags = validate_rm(&rm);
        assert_eq!(diags.len(), 1);
        match &diags[0] {
            Diagnostic::OverlappingGuards {
                state,
                first,
                second,
                witness,
            } => {
                assert_eq!(state, "u0");
                assert_eq!((*first, *second), (0, 1));
                // labels over {P1,P2} in enumeration order: {}, {P1}, {P2}, {P1,P2}
                assert_eq!(witness.as_ref().unwrap(), &Label::from_indices(2, &[0]));
            }
            d => panic!("unexpected {d:?}"),
        }
    }

    #[test]
    fn isolated_state_is_unreachable() {
        let rm = parse_rm(
            "SYMBOLS:\n A\nSTATES: u0, u1, u7\nINITIAL: u0\nTERMINAL: u1\nTRANSITIONS:\n\
             (u0, A) --> next=u1;r=1\n(u7, A) --> next=u7;r=0\n",
        )
        .unwrap();
        assert_eq!(validate_rm(&rm), vec![Diagnostic::Unreachable { state: "u7".into() }]);
    }

    fn guard_strategy(width: usize) -> impl Strategy<Value = Guard> {
        proptest::collection::vec(0u8..3, width).prop_map(|lits| {
            let pos = lits.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect();
            let neg = lits.iter().enumerate().filter(|(_, &l)| l == 2).map(|(i, _)| i).collect();
            Guard::new(pos, neg).unwrap()
        })
    }

    proptest! {
        #[test]
        fn literal_test_agrees_with_enumeration(a in guard_strategy(5), b in guard_strategy(5)) {
            let enumerated = (0..32u64)
                .map(|n| Label::from_index(5, n))
                .any(|l| a.satisfied(&l) && b.satisfied(&l));
            prop_assert_eq!(enumerated, a.may_overlap(&b));
        }
    }
}

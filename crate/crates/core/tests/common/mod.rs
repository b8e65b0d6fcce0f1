//! Helpers shared by the integration tests.

use cprep::rm::{Guard, RewardMachine, RmTransition, StateId, SymbolVocabulary};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random machine whose guards are full assignments over a per-state subset
/// of symbols, so no two guards of a state overlap.
pub fn random_machine(rng: &mut impl Rng) -> RewardMachine {
    let n_states = rng.gen_range(2..=8);
    let n_symbols = rng.gen_range(1..=4);
    let vocabulary = SymbolVocabulary::new((0..n_symbols).map(|i| format!("s{i}"))).unwrap();
    let n_terminal = rng.gen_range(0..n_states.min(3));
    let terminals: Vec<StateId> = (n_states - n_terminal..n_states).map(StateId).collect();
    let mut transitions = Vec::new();
    for u in 0..n_states - n_terminal {
        let mut symbols: Vec<usize> = (0..n_symbols).collect();
        symbols.shuffle(rng);
        symbols.truncate(rng.gen_range(1..=n_symbols.min(2)));
        let minterms = 1u32 << symbols.len();
        let mut emitted = 0;
        for m in 0..minterms {
            if emitted > 0 && rng.gen_bool(0.3) {
                continue;
            }
            let (pos, neg): (Vec<usize>, Vec<usize>) = symbols.iter().enumerate().fold(
                (vec![], vec![]),
                |(mut p, mut n), (bit, &s)| {
                    if m >> bit & 1 == 1 {
                        p.push(s)
                    } else {
                        n.push(s)
                    }
                    (p, n)
                },
            );
            transitions.push(RmTransition {
                from: StateId(u),
                guard: Guard::new(pos, neg).unwrap(),
                to: StateId(rng.gen_range(0..n_states)),
                reward: if rng.gen_bool(0.3) { 1.0 } else { 0.0 },
            });
            emitted += 1;
        }
    }
    let states = (0..n_states).map(|i| format!("u{i}")).collect();
    RewardMachine::new(vocabulary, states, StateId(0), &terminals, transitions).unwrap()
}

//! Line-oriented textual machine format.
//!
//! ```text
//! SYMBOLS:
//!     P1 - optional description
//!     P2
//! STATES: u0, u1, u2
//! INITIAL: u0
//! TERMINAL: u2
//! TRANSITIONS:
//!     (u0, not P1) --> next=u0;r=0
//!     (u0, P1 and not P2) --> next=u1;r=0.5
//! ```
//!
//! `#` starts a comment. Section headers may carry content on the same line.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Guard, RewardMachine, RmError, RmTransition, StateId, SymbolVocabulary};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Symbols,
    States,
    Initial,
    Terminal,
    Transitions,
}

impl Section {
    fn from_header(word: &str) -> Option<Self> {
        match word.to_ascii_uppercase().as_str() {
            "SYMBOLS" => Some(Self::Symbols),
            "STATES" => Some(Self::States),
            "INITIAL" => Some(Self::Initial),
            "TERMINAL" | "TERMINALS" => Some(Self::Terminal),
            "TRANSITIONS" => Some(Self::Transitions),
            _ => None,
        }
    }
}

struct RawTransition {
    line: usize,
    from: String,
    literals: Vec<(bool, String)>,
    to: String,
    reward: f64,
}

fn syntax(line: usize, message: impl Into<String>) -> RmError {
    RmError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn split_header(line: &str) -> Option<(Section, &str)> {
    let (head, rest) = line.split_once(':')?;
    Section::from_header(head.trim()).map(|s| (s, rest.trim()))
}

fn push_names(out: &mut Vec<(usize, String)>, line: usize, text: &str) -> Result<(), RmError> {
    for part in text.split(',') {
        let name = part.trim();
        if name.is_empty() {
            continue;
        }
        if !is_ident(name) {
            return Err(syntax(line, format!("invalid name `{name}`")));
        }
        out.push((line, name.to_string()));
    }
    Ok(())
}

fn parse_transition(line: usize, text: &str) -> Result<RawTransition, RmError> {
    let rest = text
        .strip_prefix('(')
        .ok_or_else(|| syntax(line, "transition must start with `(`"))?;
    let (inner, rest) = rest
        .split_once(')')
        .ok_or_else(|| syntax(line, "missing `)` in transition"))?;
    let (from, guard) = inner
        .split_once(',')
        .ok_or_else(|| syntax(line, "expected `(STATE, GUARD)`"))?;
    let from = from.trim();
    if !is_ident(from) {
        return Err(syntax(line, format!("invalid state name `{from}`")));
    }
    let mut literals = Vec::new();
    for lit in guard.split(" and ") {
        let lit = lit.trim();
        let (positive, sym) = match lit.strip_prefix("not ") {
            Some(s) => (false, s.trim()),
            None => (true, lit),
        };
        if !is_ident(sym) || sym == "and" || sym == "not" {
            return Err(syntax(line, format!("invalid literal `{lit}`")));
        }
        literals.push((positive, sym.to_string()));
    }
    let rest = rest
        .trim()
        .strip_prefix("-->")
        .ok_or_else(|| syntax(line, "expected `-->` after guard"))?
        .trim();
    let mut to = None;
    let mut reward = None;
    for field in rest.split(';') {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected key=value, found `{field}`")))?;
        match key.trim() {
            "next" => {
                let v = value.trim();
                if !is_ident(v) {
                    return Err(syntax(line, format!("invalid state name `{v}`")));
                }
                to = Some(v.to_string());
            }
            "r" => {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, format!("invalid reward `{}`", value.trim())))?;
                if !v.is_finite() {
                    return Err(syntax(line, "reward must be finite"));
                }
                reward = Some(v);
            }
            other => return Err(syntax(line, format!("unknown field `{other}`"))),
        }
    }
    Ok(RawTransition {
        line,
        from: from.to_string(),
        literals,
        to: to.ok_or_else(|| syntax(line, "missing `next=`"))?,
        reward: reward.ok_or_else(|| syntax(line, "missing `r=`"))?,
    })
}

/// Parses and validates a machine document.
pub fn parse_rm(text: &str) -> Result<RewardMachine, RmError> {
    let mut section = None;
    let mut seen_sections = Vec::new();
    let mut symbols: Vec<(usize, String)> = Vec::new();
    let mut states: Vec<(usize, String)> = Vec::new();
    let mut initial: Vec<(usize, String)> = Vec::new();
    let mut terminals: Vec<(usize, String)> = Vec::new();
    let mut raw = Vec::new();

    for (i, full) in text.lines().enumerate() {
        let line = i + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let body = if let Some((s, rest)) = split_header(content) {
            if seen_sections.contains(&s) {
                return Err(syntax(line, format!("duplicate section {s:?}")));
            }
            seen_sections.push(s);
            section = Some(s);
            if rest.is_empty() {
                continue;
            }
            rest
        } else {
            content
        };
        match section {
            None => return Err(syntax(line, "content before any section header")),
            Some(Section::Symbols) => {
                let token = match body.split_once(" - ") {
                    Some((tok, _desc)) => tok.trim(),
                    None => body.trim(),
                };
                if !is_ident(token) || token.contains(',') {
                    return Err(syntax(line, format!("invalid symbol `{token}`")));
                }
                symbols.push((line, token.to_string()));
            }
            Some(Section::States) => push_names(&mut states, line, body)?,
            Some(Section::Initial) => push_names(&mut initial, line, body)?,
            Some(Section::Terminal) => push_names(&mut terminals, line, body)?,
            Some(Section::Transitions) => raw.push(parse_transition(line, body)?),
        }
    }

    let vocabulary = SymbolVocabulary::new(symbols.iter().map(|(_, s)| s.clone()))?;
    let mut state_index = HashMap::new();
    for (line, name) in &states {
        if state_index.insert(name.clone(), state_index.len()).is_some() {
            return Err(syntax(*line, format!("duplicate state `{name}`")));
        }
    }
    let resolve = |line: usize, name: &str| -> Result<StateId, RmError> {
        state_index
            .get(name)
            .map(|&i| StateId(i))
            .ok_or_else(|| RmError::UndeclaredState {
                line,
                name: name.to_string(),
            })
    };

    let initial = match initial.as_slice() {
        [(line, name)] => resolve(*line, name)?,
        [] => return Err(syntax(0, "missing INITIAL state")),
        [_, (line, _), ..] => return Err(syntax(*line, "more than one INITIAL state")),
    };
    let terminal_ids = terminals
        .iter()
        .map(|(line, name)| resolve(*line, name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut transitions = Vec::with_capacity(raw.len());
    for t in &raw {
        let from = resolve(t.line, &t.from)?;
        let to = resolve(t.line, &t.to)?;
        if terminal_ids.contains(&from) {
            return Err(syntax(
                t.line,
                format!("terminal state `{}` has an outgoing transition", t.from),
            ));
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (positive, sym) in &t.literals {
            let idx = vocabulary
                .index_of(sym)
                .ok_or_else(|| RmError::UndeclaredSymbol {
                    line: t.line,
                    name: sym.clone(),
                })?;
            if *positive {
                pos.push(idx)
            } else {
                neg.push(idx)
            }
        }
        let guard = Guard::new(pos, neg).map_err(|clash| {
            syntax(
                t.line,
                format!("guard uses `{}` both positively and negatively", vocabulary.symbol(clash)),
            )
        })?;
        transitions.push(RmTransition {
            from,
            guard,
            to,
            reward: t.reward,
        });
    }

    RewardMachine::new(
        vocabulary,
        states.into_iter().map(|(_, s)| s).collect(),
        initial,
        &terminal_ids,
        transitions,
    )
}

pub fn guard_text(rm: &RewardMachine, guard: &Guard) -> String {
    let v = rm.vocabulary();
    let pos = guard.positives().iter().map(|&i| v.symbol(i).to_string());
    let neg = guard.negatives().iter().map(|&i| format!("not {}", v.symbol(i)));
    pos.chain(neg).collect::<Vec<_>>().join(" and ")
}

/// Canonical text: fixed section order, transitions grouped by source state
/// in state order, declaration order within a state.
pub fn serialize_rm(rm: &RewardMachine) -> String {
    let mut out = String::new();
    out.push_str("SYMBOLS:\n");
    for s in rm.vocabulary().symbols() {
        let _ = writeln!(out, "    {s}");
    }
    let _ = writeln!(out, "STATES: {}", rm.state_names().join(", "));
    let _ = writeln!(out, "INITIAL: {}", rm.state_name(rm.initial()));
    let terminals: Vec<&str> = rm.terminals().map(|u| rm.state_name(u)).collect();
    let _ = writeln!(out, "TERMINAL: {}", terminals.join(", "));
    out.push_str("TRANSITIONS:\n");
    for u in rm.state_ids() {
        for t in rm.outgoing(u) {
            let _ = writeln!(
                out,
                "    ({}, {}) --> next={};r={}",
                rm.state_name(t.from),
                guard_text(rm, &t.guard),
                rm.state_name(t.to),
                t.reward
            );
        }
    }
    out
}

/// Graphviz rendering: one node per state, one edge per declared transition.
pub fn to_dot(rm: &RewardMachine) -> String {
    let mut out = String::from("digraph rm {\n    rankdir=LR;\n");
    let _ = writeln!(out, "    __start [shape=point];");
    for u in rm.state_ids() {
        let shape = if rm.is_terminal(u) { "doublecircle" } else { "circle" };
        let _ = writeln!(out, "    \"{}\" [shape={shape}];", rm.state_name(u));
    }
    let _ = writeln!(out, "    __start -> \"{}\";", rm.state_name(rm.initial()));
    for t in rm.transitions() {
        let _ = writeln!(
            out,
            "    \"{}\" -> \"{}\" [label=\"{} / {}\"];",
            rm.state_name(t.from),
            rm.state_name(t.to),
            guard_text(rm, &t.guard),
            t.reward
        );
    }
    out.push_str("}\n");
    out
}

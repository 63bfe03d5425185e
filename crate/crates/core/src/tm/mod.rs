//! Turing machines: specs, a reference simulator, and compilers onto the
//! thought runtime.
//!
//! Three layouts are provided:
//!
//! - search ([`compile_search`], [`compile_search_bounded`]): each TM step
//!   is a pivot row followed by search rows that hop backwards from pivot to
//!   pivot until the last write to the current head cell is found;
//! - constant ([`compile_constant`]): three rows per TM step, with step
//!   counters pointing straight at the last visit of the head cell;
//! - memory ([`compile_memory`]): two rows per TM step, tape held in a
//!   most-recent-hash component.

mod compile;
mod counters;
mod sim;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::runtime::RuntimeError;

pub use compile::{compile, compile_constant, compile_memory, compile_search, compile_search_bounded, Algo, CompiledProgram, StepsPerTm};
pub use counters::{counters_from_moves, counters_from_trace, last_visits, StepCounters};
pub use sim::{config_csv, extract_tm_config, first_divergence, search_costs, simulate, Simulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no rule for state {state} reading {symbol}")]
    MissingRule { state: String, symbol: String },
    #[error("unknown algorithm {0:?}")]
    UnknownAlgo(String),
    #[error("the constant layout only runs on a blank tape")]
    InputNotSupported,
    #[error("input symbol {0:?} not in alphabet")]
    UnknownInputSymbol(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    L,
    R,
}

impl Move {
    pub fn delta(self) -> i64 {
        match self {
            Move::L => -1,
            Move::R => 1,
        }
    }

    pub fn from_delta(d: i64) -> Option<Self> {
        match d {
            -1 => Some(Move::L),
            1 => Some(Move::R),
            _ => None,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Move::L => "L",
            Move::R => "R",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: String,
    pub write: String,
    pub movement: Move,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmSpec {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: String,
    pub start: String,
    pub halting: BTreeSet<String>,
    pub rules: BTreeMap<(String, String), Transition>,
}

impl TmSpec {
    pub fn is_halting(&self, state: &str) -> bool {
        self.halting.contains(state)
    }

    pub fn rule(&self, state: &str, symbol: &str) -> Option<&Transition> {
        self.rules.get(&(state.to_string(), symbol.to_string()))
    }

    /// Checks membership of every name and totality on non-halting states.
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| TmError::Parse { line: 0, message };
        let states: BTreeSet<&String> = self.states.iter().collect();
        let alphabet: BTreeSet<&String> = self.alphabet.iter().collect();
        if !alphabet.contains(&self.blank) {
            return Err(err(format!("blank {:?} not in alphabet", self.blank)));
        }
        if !states.contains(&self.start) {
            return Err(err(format!("start {:?} not a state", self.start)));
        }
        if let Some(h) = self.halting.iter().find(|h| !states.contains(h)) {
            return Err(err(format!("halting state {h:?} not a state")));
        }
        for ((s, t), tr) in &self.rules {
            if !states.contains(s) || !states.contains(&tr.state) {
                return Err(err(format!("rule on {s} {t} names an unknown state")));
            }
            if !alphabet.contains(t) || !alphabet.contains(&tr.write) {
                return Err(err(format!("rule on {s} {t} names an unknown symbol")));
            }
        }
        for s in self.states.iter().filter(|s| !self.is_halting(s)) {
            for t in &self.alphabet {
                if self.rule(s, t).is_none() {
                    return Err(TmError::MissingRule { state: s.clone(), symbol: t.clone() });
                }
            }
        }
        Ok(())
    }

    /// Renders the spec in the line format accepted by [`parse_tm`].
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "states: {}\nalphabet: {}\nblank: {}\nstart: {}\nhalting: {}\n",
            self.states.join(" "),
            self.alphabet.join(" "),
            self.blank,
            self.start,
            self.halting.iter().cloned().collect::<Vec<_>>().join(" ")
        );
        for ((s, t), tr) in &self.rules {
            out.push_str(&format!("rule: {s} {t} -> {} {} {}\n", tr.state, tr.write, tr.movement));
        }
        out
    }
}

/// Parses the line format:
///
/// ```text
/// states: q0 q1 halt
/// alphabet: 0 1 _
/// blank: _
/// start: q0
/// halting: halt
/// rule: q0 0 -> q0 1 R
/// ```
///
/// `#` starts a comment.
pub fn parse_tm(text: &str) -> Result<TmSpec> {
    let mut states = None;
    let mut alphabet = None;
    let mut blank = None;
    let mut start = None;
    let mut halting = None;
    let mut rules = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let perr = |message: String| TmError::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| perr(format!("expected \"key: value\", got {line:?}")))?;
        let words: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        let single = |words: &[String]| match words {
            [w] => Ok(w.clone()),
            _ => Err(perr(format!("{key} takes exactly one name"))),
        };
        match key.trim() {
            "states" => states = Some(words),
            "alphabet" => alphabet = Some(words),
            "blank" => blank = Some(single(&words)?),
            "start" => start = Some(single(&words)?),
            "halting" => halting = Some(words.into_iter().collect::<BTreeSet<_>>()),
            "rule" => {
                let [s, t, arrow, s2, t2, mv] = &words[..] else {
                    return Err(perr("rule needs \"state symbol -> state symbol L|R\"".into()));
                };
                if arrow != "->" {
                    return Err(perr(format!("expected \"->\", got {arrow:?}")));
                }
                let movement = match mv.as_str() {
                    "L" => Move::L,
                    "R" => Move::R,
                    other => return Err(perr(format!("move must be L or R, got {other:?}"))),
                };
                let previous = rules.insert(
                    (s.clone(), t.clone()),
                    Transition { state: s2.clone(), write: t2.clone(), movement },
                );
                if previous.is_some() {
                    return Err(perr(format!("duplicate rule for {s} {t}")));
                }
            }
            other => return Err(perr(format!("unknown key {other:?}"))),
        }
    }
    let missing = |what: &str| TmError::Parse { line: 0, message: format!("missing {what}") };
    let spec = TmSpec {
        states: states.ok_or_else(|| missing("states"))?,
        alphabet: alphabet.ok_or_else(|| missing("alphabet"))?,
        blank: blank.ok_or_else(|| missing("blank"))?,
        start: start.ok_or_else(|| missing("start"))?,
        halting: halting.unwrap_or_default(),
        rules,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn read_tm(path: &Path) -> Result<TmSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| TmError::Io(e.to_string()))?;
    parse_tm(&text)
}

/// Instantaneous description; the tape holds non-blank cells only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmConfig {
    pub state: String,
    pub head: i64,
    pub tape: BTreeMap<i64, String>,
    pub step_count: usize,
}

impl TmConfig {
    pub fn initial(spec: &TmSpec, input: &[String]) -> Self {
        let mut tape = BTreeMap::new();
        for (i, x) in input.iter().enumerate() {
            if *x != spec.blank {
                tape.insert(i as i64, x.clone());
            }
        }
        Self { state: spec.start.clone(), head: 0, tape, step_count: 0 }
    }

    pub fn read<'a>(&'a self, spec: &'a TmSpec) -> &'a str {
        self.tape.get(&self.head).map_or(spec.blank.as_str(), String::as_str)
    }

    /// One transition; halting states absorb.
    pub fn advance(&mut self, spec: &TmSpec) {
        if spec.is_halting(&self.state) {
            return;
        }
        let tr = spec.rule(&self.state, self.read(spec)).expect("validated spec is total").clone();
        write_cell(&mut self.tape, self.head, &tr.write, &spec.blank);
        self.head += tr.movement.delta();
        self.state = tr.state;
        self.step_count += 1;
    }

    /// `cell:symbol` pairs in ascending cell order.
    pub fn tape_support(&self) -> String {
        self.tape.iter().map(|(c, s)| format!("{c}:{s}")).collect::<Vec<_>>().join(",")
    }
}

pub(crate) fn write_cell(tape: &mut BTreeMap<i64, String>, cell: i64, symbol: &str, blank: &str) {
    if symbol == blank {
        tape.remove(&cell);
    } else {
        tape.insert(cell, symbol.to_string());
    }
}

pub fn reference_run(spec: &TmSpec, input: &[String], n: usize) -> TmConfig {
    let mut config = TmConfig::initial(spec, input);
    for _ in 0..n {
        config.advance(spec);
    }
    config
}

/// Configurations after 0, 1, …, `n` steps.
pub fn reference_trace(spec: &TmSpec, input: &[String], n: usize) -> Vec<TmConfig> {
    let mut config = TmConfig::initial(spec, input);
    let mut out = Vec::with_capacity(n + 1);
    out.push(config.clone());
    for _ in 0..n {
        config.advance(spec);
        out.push(config.clone());
    }
    out
}

/// Splits an input string into one symbol per character.
pub fn parse_input(spec: &TmSpec, input: &str) -> Result<Vec<String>> {
    input
        .chars()
        .map(|c| {
            let s = c.to_string();
            if spec.alphabet.contains(&s) {
                Ok(s)
            } else {
                Err(TmError::UnknownInputSymbol(s))
            }
        })
        .collect()
}

/// Machine whose head follows `moves` exactly, writing 1 everywhere, and
/// halts once the walk is exhausted.
pub fn walk_machine(moves: &[Move]) -> TmSpec {
    let name = |i: usize| format!("w{i}");
    let states: Vec<String> = (0..=moves.len()).map(name).collect();
    let alphabet = vec!["0".to_string(), "1".to_string()];
    let mut rules = BTreeMap::new();
    for (i, mv) in moves.iter().enumerate() {
        for t in &alphabet {
            rules.insert(
                (name(i), t.clone()),
                Transition { state: name(i + 1), write: "1".into(), movement: *mv },
            );
        }
    }
    TmSpec {
        states,
        alphabet,
        blank: "0".into(),
        start: name(0),
        halting: [name(moves.len())].into_iter().collect(),
        rules,
    }
}

/// Machines shipped with the crate.
pub mod machines {
    use super::{parse_tm, TmSpec};

    pub const BINARY_INCREMENT: &str = include_str!("../../machines/binary_increment.tm");
    pub const BUSY_BEAVER_2: &str = include_str!("../../machines/busy_beaver_2.tm");
    pub const OSCILLATOR: &str = include_str!("../../machines/oscillator.tm");
    pub const BINARY_COUNTER: &str = include_str!("../../machines/binary_counter.tm");
    pub const HALT: &str = include_str!("../../machines/halt.tm");

    pub fn binary_increment() -> TmSpec {
        parse_tm(BINARY_INCREMENT).expect("bundled machine parses")
    }

    pub fn busy_beaver_2() -> TmSpec {
        parse_tm(BUSY_BEAVER_2).expect("bundled machine parses")
    }

    pub fn oscillator() -> TmSpec {
        parse_tm(OSCILLATOR).expect("bundled machine parses")
    }

    pub fn binary_counter() -> TmSpec {
        parse_tm(BINARY_COUNTER).expect("bundled machine parses")
    }
}

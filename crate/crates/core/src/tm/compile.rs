use std::str::FromStr;
use std::sync::Arc;

use crate::runtime::{
    Action, Component, Emit, Execution, Expr, FocusPolicy, Guard, IntKind, Model, Rule, SlotRange, Symbol,
    SymbolTable, VisibleState,
};

use super::{Result, TmError, TmSpec};

pub(crate) const START: &str = "start";
pub(crate) const BETA: &str = "beta";
pub(crate) const ALPHA: &str = "alpha";
pub(crate) const GAMMA: &str = "gamma";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Search,
    SearchBounded,
    Constant,
    Memory,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Search, Algo::SearchBounded, Algo::Constant, Algo::Memory];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Search => "search",
            Algo::SearchBounded => "search-bounded",
            Algo::Constant => "constant",
            Algo::Memory => "memory",
        }
    }
}

impl FromStr for Algo {
    type Err = TmError;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| TmError::UnknownAlgo(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepsPerTm {
    Variable,
    Fixed(usize),
}

/// A TM compiled onto the runtime.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub algo: Algo,
    pub spec: TmSpec,
    pub model: Model,
    pub steps_per_tm_step: StepsPerTm,
}

impl CompiledProgram {
    /// Number of rows preceding the TM-step-0 pivot for an input of `len` symbols.
    pub fn first_pivot(&self, input_len: usize) -> usize {
        match self.algo {
            Algo::Search | Algo::SearchBounded => 2 + input_len,
            Algo::Constant | Algo::Memory => 0,
        }
    }

    /// Initial rows and preloaded memory for `input` placed at cells `0..`.
    pub fn start(&self, input: &[String]) -> Result<Execution> {
        for x in input {
            if !self.spec.alphabet.contains(x) {
                return Err(TmError::UnknownInputSymbol(x.clone()));
            }
        }
        let start = Symbol::State(self.spec.start.clone());
        let initial = match self.algo {
            Algo::Search | Algo::SearchBounded => {
                let mut rows = vec![
                    search_row(Symbol::tag(START), [Symbol::Wild, Symbol::Wild], std::array::from_fn(|_| Symbol::Wild)),
                    search_row(Symbol::tag(BETA), [Symbol::Wild, Symbol::Wild], [
                        Symbol::Blank,
                        Symbol::Blank,
                        Symbol::Wild,
                        Symbol::Wild,
                        Symbol::Wild,
                    ]),
                ];
                for (i, x) in input.iter().enumerate() {
                    rows.push(search_row(Symbol::tag(BETA), [Symbol::Wild, Symbol::Wild], [
                        Symbol::tape(x),
                        Symbol::pos(i as i64),
                        Symbol::Wild,
                        Symbol::Wild,
                        Symbol::Wild,
                    ]));
                }
                let (lo, hi) = match self.algo {
                    Algo::SearchBounded => (Symbol::pos(0), Symbol::pos(input.len() as i64 - 1)),
                    _ => (Symbol::Wild, Symbol::Wild),
                };
                rows.push(search_row(Symbol::tag(BETA), [start, Symbol::pos(0)], [
                    Symbol::Wild,
                    Symbol::Wild,
                    Symbol::Wild,
                    lo,
                    hi,
                ]));
                rows
            }
            Algo::Constant => {
                if !input.is_empty() {
                    return Err(TmError::InputNotSupported);
                }
                let mut row = vec![Symbol::tag(BETA), start, Symbol::pos(0), Symbol::tape(&self.spec.blank)];
                row.extend([Symbol::Wild, Symbol::Wild, Symbol::ctr(0), Symbol::ctr(0), Symbol::ctr(0)]);
                vec![VisibleState::new(row)]
            }
            Algo::Memory => {
                vec![VisibleState::new(vec![Symbol::tag(BETA), start, Symbol::pos(0), Symbol::Wild, Symbol::Wild])]
            }
        };
        let mut exec = Execution::new(&self.model, initial)?;
        if self.algo == Algo::Memory {
            let store = exec.memory_mut(MEM).expect("memory layout has a store");
            for (i, x) in input.iter().enumerate() {
                store.write(vec![Symbol::pos(i as i64)], vec![Symbol::tape(x)]);
            }
        }
        Ok(exec)
    }
}

pub fn compile(spec: &TmSpec, algo: Algo) -> Result<CompiledProgram> {
    match algo {
        Algo::Search => compile_search(spec),
        Algo::SearchBounded => compile_search_bounded(spec),
        Algo::Constant => compile_constant(spec),
        Algo::Memory => compile_memory(spec),
    }
}

/// `(state, symbol) → (state', symbol', ±1)`; an unrecognised read counts as blank.
fn delta_table(spec: &TmSpec) -> Arc<SymbolTable> {
    let mut table = SymbolTable::new("delta");
    for ((s, t), tr) in &spec.rules {
        let value = vec![Symbol::State(tr.state.clone()), Symbol::tape(&tr.write), Symbol::ctr(tr.movement.delta())];
        if *t == spec.blank {
            table.insert(vec![Symbol::State(s.clone()), Symbol::Blank], value.clone());
        }
        table.insert(vec![Symbol::State(s.clone()), Symbol::tape(t)], value);
    }
    Arc::new(table)
}

fn not_halting(spec: &TmSpec) -> Vec<Guard> {
    spec.halting.iter().map(|h| Guard::not(Guard::slot_is(1, Symbol::State(h.clone())))).collect()
}

fn tag_is(tag: &str) -> Guard {
    Guard::slot_is(0, Symbol::tag(tag))
}

fn lit(s: Symbol) -> Expr {
    Expr::Lit(s)
}

fn slot(i: usize) -> Expr {
    Expr::slot(0, i)
}

fn ctr(k: i64) -> Expr {
    Expr::Lit(Symbol::ctr(k))
}

fn sum(kind: IntKind, constant: i64, terms: Vec<(i64, Expr)>) -> Expr {
    Expr::int(kind, constant, terms)
}

fn head_plus(head: Expr, delta: Expr) -> Expr {
    sum(IntKind::Position, 0, vec![(1, head), (1, delta)])
}

fn emit(component: usize, offset: Expr, fetch: SlotRange, place_start: usize, exprs: Vec<Expr>) -> Action {
    Action { component, offset, fetch, place: SlotRange::new(place_start, exprs.len()), emit: Emit::Exprs(exprs), write: None }
}

// Search layout (9 slots):
//   pivot  [beta,  s, h, 0, written, written_at, read, lo, hi]
//   search [alpha, s, h, m, f, found, found_at, found_read, jump]
// `written`/`written_at` record the previous TM step's write; `m` counts the
// search rows of the current step; `f` is the examined pivot's position
// relative to the current pivot; `jump` is the `m` of the row before it.
const S_M: usize = 3;
const S_F: usize = 4;
const S_FOUND: usize = 5;
const S_FOUND_AT: usize = 6;
const S_JUMP: usize = 8;
pub(crate) const S_WRITTEN: usize = 4;
pub(crate) const S_WRITTEN_AT: usize = 5;
const S_LO: usize = 7;
const S_HI: usize = 8;

const CTX: usize = 0;
const PIVOT: usize = 1;
const MROW: usize = 2;
const BOUNDS: usize = 3;

fn search_row(tag: Symbol, sh: [Symbol; 2], rest: [Symbol; 5]) -> VisibleState {
    let [s, h] = sh;
    let mut slots = vec![tag, s, h, Symbol::ctr(0)];
    slots.extend(rest);
    VisibleState::new(slots)
}

pub fn compile_search(spec: &TmSpec) -> Result<CompiledProgram> {
    search_program(spec, false)
}

pub fn compile_search_bounded(spec: &TmSpec) -> Result<CompiledProgram> {
    search_program(spec, true)
}

fn search_program(spec: &TmSpec, bounded: bool) -> Result<CompiledProgram> {
    let delta = delta_table(spec);
    let blank = lit(Symbol::tape(&spec.blank));
    let pivot_emit = |read: Expr, lo: Expr, hi: Expr| -> Vec<Expr> {
        let d = Expr::lookup(&delta, vec![slot(1), read.clone()], 2);
        vec![
            lit(Symbol::tag(BETA)),
            Expr::lookup(&delta, vec![slot(1), read.clone()], 0),
            head_plus(slot(2), d),
            ctr(0),
            Expr::lookup(&delta, vec![slot(1), read.clone()], 1),
            slot(2),
            read,
            lo,
            hi,
        ]
    };
    let all = SlotRange::new(0, 9);
    let mut policy = FocusPolicy::new(1);

    if bounded {
        // Fresh cell on either side: read blank without searching.
        let mut left = vec![tag_is(BETA), Guard::Lt(slot(2), slot(S_LO))];
        left.extend(not_halting(spec));
        policy.push(Rule::new(left, vec![emit(CTX, Expr::offset(0), all, 0, pivot_emit(blank.clone(), slot(2), slot(S_HI)))]));
        let mut right = vec![tag_is(BETA), Guard::Lt(slot(S_HI), slot(2))];
        right.extend(not_halting(spec));
        policy.push(Rule::new(right, vec![emit(CTX, Expr::offset(0), all, 0, pivot_emit(blank.clone(), slot(S_LO), slot(2)))]));
    }

    // First search row examines the current pivot.
    let mut begin = vec![tag_is(BETA)];
    begin.extend(not_halting(spec));
    policy.push(Rule::new(begin, vec![
        emit(CTX, Expr::offset(0), all, 0, vec![lit(Symbol::tag(ALPHA)), slot(1), slot(2), ctr(1), ctr(0)]),
        Action::copy(PIVOT, Expr::offset(0), SlotRange::new(S_WRITTEN, 3), SlotRange::new(S_FOUND, 3)),
        Action::copy(MROW, Expr::offset(-1), SlotRange::new(S_M, 1), SlotRange::new(S_JUMP, 1)),
    ]));

    // Found the head cell, or reached the empty pivot: resolve and transition.
    let read = Expr::if_eq(slot(S_FOUND_AT), slot(2), slot(S_FOUND), blank.clone());
    let back_to_pivot = sum(IntKind::Counter, 0, vec![(-1, slot(S_M))]);
    policy.push(Rule::new(
        vec![
            tag_is(ALPHA),
            Guard::Any(vec![Guard::eq(slot(S_FOUND_AT), slot(2)), Guard::eq(slot(S_FOUND_AT), lit(Symbol::Blank))]),
        ],
        vec![
            emit(CTX, Expr::offset(0), all, 0, pivot_emit(read, lit(Symbol::Wild), lit(Symbol::Wild))[..7].to_vec()),
            Action::copy(BOUNDS, back_to_pivot, SlotRange::new(S_LO, 2), SlotRange::new(S_LO, 2)),
        ],
    ));

    // Otherwise hop to the previous pivot: f' = f − jump − 1.
    let next_pivot = |extra: i64| sum(IntKind::Counter, extra, vec![(1, slot(S_F)), (-1, slot(S_JUMP)), (-1, slot(S_M))]);
    policy.push(Rule::new(vec![tag_is(ALPHA)], vec![
        emit(CTX, Expr::offset(0), all, 0, vec![
            lit(Symbol::tag(ALPHA)),
            slot(1),
            slot(2),
            sum(IntKind::Counter, 1, vec![(1, slot(S_M))]),
            sum(IntKind::Counter, -1, vec![(1, slot(S_F)), (-1, slot(S_JUMP))]),
        ]),
        Action::copy(PIVOT, next_pivot(-1), SlotRange::new(S_WRITTEN, 3), SlotRange::new(S_FOUND, 3)),
        Action::copy(MROW, next_pivot(-2), SlotRange::new(S_M, 1), SlotRange::new(S_JUMP, 1)),
    ]));

    let components = vec![Component::context("step"), Component::copy("pivot"), Component::copy("mrow"), Component::copy("bounds")];
    let model = Model::new(9, components, policy)?;
    Ok(CompiledProgram {
        algo: if bounded { Algo::SearchBounded } else { Algo::Search },
        spec: spec.clone(),
        model,
        steps_per_tm_step: StepsPerTm::Variable,
    })
}

// Constant layout (9 slots): [tag, s, h, t, t', d, l, c, r]; TM step n
// occupies rows 3n (beta), 3n+1 (gamma), 3n+2 (alpha).
pub(crate) const C_WRITE: usize = 4;
const C_D: usize = 5;
pub(crate) const C_L: usize = 6;
pub(crate) const C_C: usize = 7;
pub(crate) const C_R: usize = 8;

pub fn compile_constant(spec: &TmSpec) -> Result<CompiledProgram> {
    let delta = delta_table(spec);
    let wild = || lit(Symbol::Wild);
    let moving_right = |then: Expr, otherwise: Expr| Expr::if_eq(slot(C_D), ctr(1), then, otherwise);
    let mut policy = FocusPolicy::new(1);

    // beta -> gamma: apply the transition to the read symbol.
    let mut transition = vec![tag_is(BETA)];
    transition.extend(not_halting(spec));
    let args = || vec![slot(1), slot(3)];
    policy.push(Rule::new(transition, vec![emit(CTX, Expr::offset(0), SlotRange::new(0, 9), 0, vec![
        lit(Symbol::tag(GAMMA)),
        Expr::lookup(&delta, args(), 0),
        head_plus(slot(2), Expr::lookup(&delta, args(), 2)),
        wild(),
        Expr::lookup(&delta, args(), 1),
        Expr::lookup(&delta, args(), 2),
        wild(),
        wild(),
        wild(),
    ])]));

    // gamma -> alpha: c' from the neighbour counter of the previous pivot.
    let (l_prev, r_prev) = (Expr::fetched(1, 0), Expr::fetched(1, 2));
    policy.push(Rule::new(vec![tag_is(GAMMA)], vec![
        emit(CTX, Expr::offset(0), SlotRange::new(0, 6), 0, vec![lit(Symbol::tag(ALPHA)), slot(1), slot(2), wild(), slot(C_WRITE), slot(C_D)]),
        emit(PIVOT, Expr::offset(-1), SlotRange::new(C_L, 3), C_L, vec![
            moving_right(ctr(-1), wild()),
            moving_right(sum(IntKind::Counter, -1, vec![(1, r_prev)]), sum(IntKind::Counter, -1, vec![(1, l_prev)])),
            moving_right(wild(), ctr(-1)),
        ]),
    ]));

    // alpha -> beta: dereference c into the pivot and write rows of the last visit.
    let c = slot(C_C);
    let (h_m, l_m, r_m) = (Expr::fetched(1, 0), Expr::fetched(1, 4), Expr::fetched(1, 6));
    policy.push(Rule::new(vec![tag_is(ALPHA)], vec![
        emit(CTX, Expr::offset(0), SlotRange::new(0, 3), 0, vec![lit(Symbol::tag(BETA)), slot(1), slot(2)]),
        emit(PIVOT, sum(IntKind::Counter, 1, vec![(3, c.clone())]), SlotRange::new(2, 7), 4, vec![
            wild(),
            wild(),
            moving_right(ctr(-1), sum(IntKind::Counter, 0, vec![(1, c.clone()), (1, l_m)])),
            c.clone(),
            moving_right(sum(IntKind::Counter, 0, vec![(1, c.clone()), (1, r_m)]), ctr(-1)),
        ]),
        emit(CONTENT, sum(IntKind::Counter, 2, vec![(3, c)]), SlotRange::new(C_WRITE, 1), 3, vec![Expr::if_eq(
            h_m,
            slot(2),
            Expr::fetched(2, 0),
            lit(Symbol::tape(&spec.blank)),
        )]),
    ]));

    let components = vec![Component::context("step"), Component::copy("pivot"), Component::copy("content")];
    let model = Model::new(9, components, policy)?;
    Ok(CompiledProgram { algo: Algo::Constant, spec: spec.clone(), model, steps_per_tm_step: StepsPerTm::Fixed(3) })
}

const CONTENT: usize = 2;

// Memory layout (5 slots): [tag, s, h, t', t]; TM step n occupies rows 2n
// (beta) and 2n+1 (alpha).
pub(crate) const MEM: usize = 1;
pub(crate) const M_WRITE: usize = 3;
const M_READ: usize = 4;

pub fn compile_memory(spec: &TmSpec) -> Result<CompiledProgram> {
    let delta = delta_table(spec);
    let key = SlotRange::new(2, 1);
    let mut policy = FocusPolicy::new(1);

    let mut read = vec![tag_is(BETA)];
    read.extend(not_halting(spec));
    policy.push(Rule::new(read, vec![
        emit(CTX, Expr::offset(0), SlotRange::new(0, 5), 0, vec![
            lit(Symbol::tag(ALPHA)),
            slot(1),
            slot(2),
            Expr::lookup(&delta, vec![slot(1), Expr::fetched(1, 0)], 1),
        ]),
        Action { component: MEM, offset: Expr::offset(0), fetch: key, place: SlotRange::new(M_READ, 1), emit: Emit::Fetched, write: None },
    ]));

    let args = || vec![slot(1), slot(M_READ)];
    policy.push(Rule::new(vec![tag_is(ALPHA)], vec![
        emit(CTX, Expr::offset(0), SlotRange::new(0, 5), 0, vec![
            lit(Symbol::tag(BETA)),
            Expr::lookup(&delta, args(), 0),
            head_plus(slot(2), Expr::lookup(&delta, args(), 2)),
            lit(Symbol::Wild),
            lit(Symbol::Wild),
        ]),
        Action {
            component: MEM,
            offset: Expr::offset(0),
            fetch: key,
            place: SlotRange::new(5, 0),
            emit: Emit::Exprs(vec![]),
            write: Some(vec![slot(M_WRITE)]),
        },
    ]));

    let components = vec![Component::context("step"), Component::memory("tape", 1)];
    let model = Model::new(5, components, policy)?;
    Ok(CompiledProgram { algo: Algo::Memory, spec: spec.clone(), model, steps_per_tm_step: StepsPerTm::Fixed(2) })
}

//! Focus policies: guarded rules over the recent window.

use std::collections::HashMap;
use std::sync::Arc;

use super::symbol::{ActiveFocus, SlotRange, Symbol, VisibleState};
use super::{Result, RuntimeError};

/// Finite table keyed by symbol tuples; used for transition functions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolTable {
    pub name: String,
    entries: HashMap<Vec<Symbol>, Vec<Symbol>>,
}

impl SymbolTable {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), entries: HashMap::new() }
    }

    pub fn insert(&mut self, key: Vec<Symbol>, value: Vec<Symbol>) {
        self.entries.insert(key, value);
    }

    pub fn get(&self, key: &[Symbol]) -> Option<&Vec<Symbol>> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntKind {
    Position,
    Counter,
}

/// Symbol-valued expression over the window and, for emissions, the fetched contents.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Symbol),
    /// Slot of the state `back` steps before the most recent one.
    Slot { back: usize, slot: usize },
    /// External slot of a window state.
    External { back: usize, index: usize },
    /// Entry of the content fetched by action `action` of the same rule.
    Fetched { action: usize, index: usize },
    /// `constant + Σ coeff·value` over integer-valued symbols.
    Int { kind: IntKind, constant: i64, terms: Vec<(i64, Expr)> },
    IfEq { a: Box<Expr>, b: Box<Expr>, then: Box<Expr>, otherwise: Box<Expr> },
    Lookup { table: Arc<SymbolTable>, args: Vec<Expr>, field: usize },
}

impl Expr {
    pub fn lit(s: Symbol) -> Self {
        Expr::Lit(s)
    }

    pub fn slot(back: usize, slot: usize) -> Self {
        Expr::Slot { back, slot }
    }

    pub fn fetched(action: usize, index: usize) -> Self {
        Expr::Fetched { action, index }
    }

    pub fn int(kind: IntKind, constant: i64, terms: Vec<(i64, Expr)>) -> Self {
        Expr::Int { kind, constant, terms }
    }

    /// Integer constant used as a focus offset.
    pub fn offset(k: i64) -> Self {
        Expr::Lit(Symbol::Counter(k))
    }

    pub fn if_eq(a: Expr, b: Expr, then: Expr, otherwise: Expr) -> Self {
        Expr::IfEq { a: Box::new(a), b: Box::new(b), then: Box::new(then), otherwise: Box::new(otherwise) }
    }

    pub fn lookup(table: &Arc<SymbolTable>, args: Vec<Expr>, field: usize) -> Self {
        Expr::Lookup { table: Arc::clone(table), args, field }
    }

    /// Deepest window position referenced, if any.
    pub fn max_back(&self) -> Option<usize> {
        match self {
            Expr::Lit(_) | Expr::Fetched { .. } => None,
            Expr::Slot { back, .. } | Expr::External { back, .. } => Some(*back),
            Expr::Int { terms, .. } => terms.iter().filter_map(|(_, e)| e.max_back()).max(),
            Expr::IfEq { a, b, then, otherwise } => {
                [a, b, then, otherwise].iter().filter_map(|e| e.max_back()).max()
            }
            Expr::Lookup { args, .. } => args.iter().filter_map(|e| e.max_back()).max(),
        }
    }

    fn uses_fetched(&self) -> bool {
        match self {
            Expr::Fetched { .. } => true,
            Expr::Lit(_) | Expr::Slot { .. } | Expr::External { .. } => false,
            Expr::Int { terms, .. } => terms.iter().any(|(_, e)| e.uses_fetched()),
            Expr::IfEq { a, b, then, otherwise } => [a, b, then, otherwise].iter().any(|e| e.uses_fetched()),
            Expr::Lookup { args, .. } => args.iter().any(|e| e.uses_fetched()),
        }
    }

    pub(crate) fn eval(&self, ctx: &EvalCtx<'_>) -> Result<Symbol> {
        match self {
            Expr::Lit(s) => Ok(s.clone()),
            Expr::Slot { back, slot } => ctx.state(*back)?.slots.get(*slot).cloned().ok_or_else(|| {
                RuntimeError::InvalidProgram(format!("slot {slot} beyond state arity"))
            }),
            Expr::External { back, index } => {
                Ok(ctx.state(*back)?.external.as_ref().and_then(|e| e.get(*index)).cloned().unwrap_or(Symbol::Blank))
            }
            Expr::Fetched { action, index } => {
                let fetched = ctx.fetched.ok_or_else(|| {
                    RuntimeError::InvalidProgram("focus expressions cannot read fetched content".into())
                })?;
                fetched.get(*action).and_then(|c| c.get(*index)).cloned().ok_or_else(|| {
                    RuntimeError::InvalidProgram(format!("fetched content {action}[{index}] does not exist"))
                })
            }
            Expr::Int { kind, constant, terms } => {
                let mut total = *constant;
                for (coeff, e) in terms {
                    let value = e.eval(ctx)?;
                    let i = value.as_int().ok_or(RuntimeError::NotAnInteger(value))?;
                    total += coeff * i;
                }
                Ok(match kind {
                    IntKind::Position => Symbol::Position(total),
                    IntKind::Counter => Symbol::Counter(total),
                })
            }
            Expr::IfEq { a, b, then, otherwise } => {
                if a.eval(ctx)? == b.eval(ctx)? {
                    then.eval(ctx)
                } else {
                    otherwise.eval(ctx)
                }
            }
            Expr::Lookup { table, args, field } => {
                let key = args.iter().map(|a| a.eval(ctx)).collect::<Result<Vec<_>>>()?;
                let row = table
                    .get(&key)
                    .ok_or_else(|| RuntimeError::NoTableEntry { table: table.name.clone(), key: key.clone() })?;
                row.get(*field).cloned().ok_or_else(|| {
                    RuntimeError::InvalidProgram(format!("table {} has no field {field}", table.name))
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Eq(Expr, Expr),
    /// Integer comparison `a < b`.
    Lt(Expr, Expr),
    Not(Box<Guard>),
    Any(Vec<Guard>),
    /// Window state `back` matches the pattern slot by slot (`Wild` matches all).
    Pattern { back: usize, slots: Vec<Symbol> },
    /// Component was focused at `offset` when window state `back` was produced.
    PastFocus { back: usize, component: usize, offset: i64 },
}

impl Guard {
    pub fn eq(a: Expr, b: Expr) -> Self {
        Guard::Eq(a, b)
    }

    pub fn not(g: Guard) -> Self {
        Guard::Not(Box::new(g))
    }

    /// Slot `slot` of the most recent state equals `value`.
    pub fn slot_is(slot: usize, value: Symbol) -> Self {
        Guard::Eq(Expr::slot(0, slot), Expr::Lit(value))
    }

    pub fn max_back(&self) -> Option<usize> {
        match self {
            Guard::Eq(a, b) | Guard::Lt(a, b) => a.max_back().max(b.max_back()),
            Guard::Not(g) => g.max_back(),
            Guard::Any(gs) => gs.iter().filter_map(|g| g.max_back()).max(),
            Guard::Pattern { back, .. } | Guard::PastFocus { back, .. } => Some(*back),
        }
    }

    fn uses_fetched(&self) -> bool {
        match self {
            Guard::Eq(a, b) | Guard::Lt(a, b) => a.uses_fetched() || b.uses_fetched(),
            Guard::Not(g) => g.uses_fetched(),
            Guard::Any(gs) => gs.iter().any(|g| g.uses_fetched()),
            Guard::Pattern { .. } | Guard::PastFocus { .. } => false,
        }
    }

    pub(crate) fn holds(&self, ctx: &EvalCtx<'_>) -> Result<bool> {
        match self {
            Guard::Eq(a, b) => Ok(a.eval(ctx)? == b.eval(ctx)?),
            Guard::Lt(a, b) => {
                let (x, y) = (a.eval(ctx)?, b.eval(ctx)?);
                let xi = x.as_int().ok_or(RuntimeError::NotAnInteger(x))?;
                let yi = y.as_int().ok_or(RuntimeError::NotAnInteger(y))?;
                Ok(xi < yi)
            }
            Guard::Not(g) => Ok(!g.holds(ctx)?),
            Guard::Any(gs) => {
                for g in gs {
                    if g.holds(ctx)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Guard::Pattern { back, slots } => {
                let state = ctx.state(*back)?;
                Ok(state.slots.len() == slots.len() && slots.iter().zip(&state.slots).all(|(p, v)| p.matches(v)))
            }
            Guard::PastFocus { back, component, offset } => Ok(ctx
                .focuses(*back)?
                .iter()
                .any(|f| f.component == *component && f.selective.time_offset == *offset)),
        }
    }
}

/// What a component places into its generative range.
#[derive(Debug, Clone, PartialEq)]
pub enum Emit {
    /// The fetched content itself.
    Fetched,
    /// Computed symbols.
    Exprs(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub component: usize,
    /// Selective time offset; evaluated over the window only.
    pub offset: Expr,
    pub fetch: SlotRange,
    pub place: SlotRange,
    pub emit: Emit,
    /// Value stored under the fetched key (memory components only).
    pub write: Option<Vec<Expr>>,
}

impl Action {
    /// Copies `fetch` from the state at `offset` into `place`.
    pub fn copy(component: usize, offset: Expr, fetch: SlotRange, place: SlotRange) -> Self {
        Self { component, offset, fetch, place, emit: Emit::Fetched, write: None }
    }

    /// Reads `fetch` from the most recent state and emits computed symbols.
    pub fn compute(component: usize, fetch: SlotRange, place_start: usize, exprs: Vec<Expr>) -> Self {
        let place = SlotRange::new(place_start, exprs.len());
        Self { component, offset: Expr::offset(0), fetch, place, emit: Emit::Exprs(exprs), write: None }
    }

    fn max_back(&self) -> Option<usize> {
        let mut deepest = self.offset.max_back();
        if let Emit::Exprs(es) = &self.emit {
            deepest = deepest.max(es.iter().filter_map(|e| e.max_back()).max());
        }
        if let Some(ws) = &self.write {
            deepest = deepest.max(ws.iter().filter_map(|e| e.max_back()).max());
        }
        deepest
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub when: Vec<Guard>,
    pub actions: Vec<Action>,
}

impl Rule {
    pub fn new(when: Vec<Guard>, actions: Vec<Action>) -> Self {
        Self { when, actions }
    }
}

/// First-match rule table over the last `tau` states.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusPolicy {
    pub tau: usize,
    pub rules: Vec<Rule>,
}

impl FocusPolicy {
    pub fn new(tau: usize) -> Self {
        Self { tau, rules: Vec::new() }
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn push(&mut self, rule: Rule) {
        self.rules.push(rule);
    }

    /// Deepest window position any rule consults, plus one.
    pub fn declared_window(&self) -> usize {
        self.rules
            .iter()
            .flat_map(|r| r.when.iter().filter_map(|g| g.max_back()).chain(r.actions.iter().filter_map(|a| a.max_back())))
            .max()
            .map_or(1, |b| b + 1)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(RuntimeError::InvalidProgram("window must hold at least one state".into()));
        }
        if self.declared_window() > self.tau {
            return Err(RuntimeError::InvalidProgram(format!(
                "rules consult {} states but the window is {}",
                self.declared_window(),
                self.tau
            )));
        }
        for rule in &self.rules {
            if rule.when.iter().any(|g| g.uses_fetched()) || rule.actions.iter().any(|a| a.offset.uses_fetched()) {
                return Err(RuntimeError::InvalidProgram("focus selection cannot depend on fetched content".into()));
            }
        }
        Ok(())
    }
}

/// Evaluation context: the window (oldest first), its focus log, and the
/// contents fetched so far when evaluating emissions.
pub(crate) struct EvalCtx<'a> {
    pub window: &'a [VisibleState],
    pub focus_log: &'a [Vec<ActiveFocus>],
    pub fetched: Option<&'a [Vec<Symbol>]>,
}

impl<'a> EvalCtx<'a> {
    fn state(&self, back: usize) -> Result<&'a VisibleState> {
        let n = self.window.len();
        if back >= n {
            return Err(RuntimeError::WindowExceeded { back, window: n });
        }
        Ok(&self.window[n - 1 - back])
    }

    fn focuses(&self, back: usize) -> Result<&'a [ActiveFocus]> {
        let n = self.focus_log.len();
        if back >= n {
            return Err(RuntimeError::WindowExceeded { back, window: n });
        }
        Ok(&self.focus_log[n - 1 - back])
    }
}

/// Adds a rule mapping an exact window pattern (oldest first) to `actions`.
/// A rule with the same pattern is overwritten; otherwise the new rule takes
/// precedence over existing ones.
pub fn tie_train(policy: &FocusPolicy, window_pattern: &[Vec<Symbol>], actions: Vec<Action>) -> Result<FocusPolicy> {
    if window_pattern.len() != policy.tau {
        return Err(RuntimeError::InvalidProgram(format!(
            "pattern covers {} states, window is {}",
            window_pattern.len(),
            policy.tau
        )));
    }
    let n = window_pattern.len();
    let when: Vec<Guard> = window_pattern
        .iter()
        .enumerate()
        .map(|(i, slots)| Guard::Pattern { back: n - 1 - i, slots: slots.clone() })
        .collect();
    let mut out = policy.clone();
    let rule = Rule { when, actions };
    match out.rules.iter_mut().find(|r| r.when == rule.when) {
        Some(existing) => *existing = rule,
        None => out.rules.insert(0, rule),
    }
    Ok(out)
}

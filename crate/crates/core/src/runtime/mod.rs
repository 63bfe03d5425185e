//! Focus/component thought runtime.
//!
//! Each step activates one rule of the focus policy from the last `τ`
//! states, lets every component fetch content through its selective focus,
//! and combines the emitted contents into a new state through the
//! generative focuses. Generative ranges must be disjoint and cover every
//! slot, so each component's contribution can be read back from the result.
//!
//! Time offsets are relative to the most recent state: offset 0 addresses
//! it, offset −k the state k steps earlier.

mod codec;
mod policy;
mod symbol;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::memory::MostRecentHash;

pub use codec::{vector_decode, vector_encode, Codec};
pub use policy::{tie_train, Action, Emit, Expr, FocusPolicy, Guard, IntKind, Rule, SymbolTable};
pub use symbol::{
    ActiveFocus, GenerativeFocus, SelectiveFocus, SlotRange, Symbol, ThoughtSequence, VisibleState,
};

use policy::EvalCtx;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("no rule matched at sequence length {0}")]
    NoRuleMatched(usize),
    #[error("focus offset {offset} range {start}+{len} outside sequence of length {sequence_len}")]
    FocusOutOfRange { offset: i64, start: usize, len: usize, sequence_len: usize },
    #[error("generative focuses overlap at slot {0}")]
    OverlappingFocus(usize),
    #[error("slot {0} not covered by any generative focus")]
    UncoveredSlots(usize),
    #[error("symbol {0} not in codec alphabet")]
    UnknownSymbol(Symbol),
    #[error("state arity {found} differs from {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("expected an integer symbol, got {0}")]
    NotAnInteger(Symbol),
    #[error("table {table} has no entry for {key:?}")]
    NoTableEntry { table: String, key: Vec<Symbol> },
    #[error("window position {back} outside window of {window} states")]
    WindowExceeded { back: usize, window: usize },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("sequence is empty")]
    EmptySequence,
    #[error("vector length {found} differs from codec width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("trace export failed: {0}")]
    Export(String),
}

pub type Result<T> = std::result::Result<T, RuntimeError>;

/// Symbol substitution applied to fetched content.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    /// Mapped symbols are replaced; others pass through.
    Map(BTreeMap<Symbol, Symbol>),
}

impl Transform {
    pub fn apply(&self, s: &Symbol) -> Symbol {
        match self {
            Transform::Identity => s.clone(),
            Transform::Map(m) => m.get(s).cloned().unwrap_or_else(|| s.clone()),
        }
    }

    /// Checks injectivity by enumerating `alphabet`.
    pub fn is_injective_on<'a, I: IntoIterator<Item = &'a Symbol>>(&self, alphabet: I) -> bool {
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for s in alphabet {
            seen.insert(self.apply(s));
            count += 1;
        }
        seen.len() == count
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComponentKind {
    Copy,
    /// Reads only the most recent state.
    Context,
    /// Keyed by the focused slots; `value_len` symbols per entry.
    Memory { value_len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    pub transform: Transform,
}

impl Component {
    pub fn copy(name: &str) -> Self {
        Self { name: name.to_string(), kind: ComponentKind::Copy, transform: Transform::Identity }
    }

    pub fn context(name: &str) -> Self {
        Self { name: name.to_string(), kind: ComponentKind::Context, transform: Transform::Identity }
    }

    pub fn memory(name: &str, value_len: usize) -> Self {
        Self { name: name.to_string(), kind: ComponentKind::Memory { value_len }, transform: Transform::Identity }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

/// Fixed-arity program: components plus the focus policy driving them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arity: usize,
    components: Vec<Component>,
    policy: FocusPolicy,
}

impl Model {
    pub fn new(arity: usize, components: Vec<Component>, policy: FocusPolicy) -> Result<Self> {
        policy.validate()?;
        for (r, rule) in policy.rules.iter().enumerate() {
            for action in &rule.actions {
                let component = components.get(action.component).ok_or_else(|| {
                    RuntimeError::InvalidProgram(format!("rule {r} names unknown component {}", action.component))
                })?;
                check_action(arity, r, component, action)?;
            }
        }
        Ok(Self { arity, components, policy })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn policy(&self) -> &FocusPolicy {
        &self.policy
    }

    pub fn tau(&self) -> usize {
        self.policy.tau
    }

    /// Replaces the policy (for instance after tie training).
    pub fn with_policy(&self, policy: FocusPolicy) -> Result<Self> {
        Model::new(self.arity, self.components.clone(), policy)
    }
}

fn check_action(arity: usize, rule: usize, component: &Component, action: &Action) -> Result<()> {
    let bad = |msg: String| Err(RuntimeError::InvalidProgram(format!("rule {rule}, {}: {msg}", component.name)));
    if action.place.end() > arity || action.fetch.end() > arity {
        return bad("range beyond state arity".into());
    }
    let fetched_len = match component.kind {
        ComponentKind::Memory { value_len } => value_len,
        _ => action.fetch.len,
    };
    match &action.emit {
        Emit::Fetched if fetched_len != action.place.len => {
            return bad(format!("fetches {fetched_len} symbols into {} slots", action.place.len))
        }
        Emit::Exprs(es) if es.len() != action.place.len => {
            return bad(format!("emits {} symbols into {} slots", es.len(), action.place.len))
        }
        _ => {}
    }
    match component.kind {
        ComponentKind::Context if action.offset != Expr::offset(0) => bad("contexts read the most recent state".into()),
        ComponentKind::Memory { value_len } => match &action.write {
            Some(w) if w.len() != value_len => bad(format!("writes {} symbols, values hold {value_len}", w.len())),
            _ => Ok(()),
        },
        _ if action.write.is_some() => bad("only memory components write".into()),
        _ => Ok(()),
    }
}

/// Rule chosen at one step and the focuses it activated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activation {
    pub rule: usize,
    pub focuses: Vec<ActiveFocus>,
}

fn window(sequence: &ThoughtSequence, tau: usize) -> (&[VisibleState], &[Vec<ActiveFocus>]) {
    let from = sequence.len().saturating_sub(tau);
    (&sequence.states()[from..], &sequence.focus_log()[from..])
}

/// Selects the first rule whose guards hold over the last `τ` states.
pub fn activate_focuses(policy: &FocusPolicy, sequence: &ThoughtSequence) -> Result<Activation> {
    if sequence.is_empty() {
        return Err(RuntimeError::EmptySequence);
    }
    let (states, focus_log) = window(sequence, policy.tau);
    let ctx = EvalCtx { window: states, focus_log, fetched: None };
    for (index, rule) in policy.rules.iter().enumerate() {
        let mut matched = true;
        for guard in &rule.when {
            if !guard.holds(&ctx)? {
                matched = false;
                break;
            }
        }
        if !matched {
            continue;
        }
        let mut focuses = Vec::with_capacity(rule.actions.len());
        for action in &rule.actions {
            let value = action.offset.eval(&ctx)?;
            let time_offset = value.as_int().ok_or(RuntimeError::NotAnInteger(value))?;
            focuses.push(ActiveFocus {
                component: action.component,
                selective: SelectiveFocus { time_offset, range: action.fetch },
                generative: GenerativeFocus { range: action.place },
            });
        }
        return Ok(Activation { rule: index, focuses });
    }
    Err(RuntimeError::NoRuleMatched(sequence.len()))
}

/// Sequence plus the stores of memory components.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub sequence: ThoughtSequence,
    memories: BTreeMap<usize, MostRecentHash<Vec<Symbol>, Vec<Symbol>>>,
}

impl Execution {
    pub fn new(model: &Model, initial: Vec<VisibleState>) -> Result<Self> {
        if initial.is_empty() {
            return Err(RuntimeError::EmptySequence);
        }
        for s in &initial {
            if s.arity() != model.arity {
                return Err(RuntimeError::ArityMismatch { expected: model.arity, found: s.arity() });
            }
        }
        let memories = model
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ComponentKind::Memory { .. }))
            .map(|(i, _)| (i, MostRecentHash::new()))
            .collect();
        Ok(Self { sequence: ThoughtSequence::new(initial), memories })
    }

    /// Store of memory component `component`.
    pub fn memory(&self, component: usize) -> Option<&MostRecentHash<Vec<Symbol>, Vec<Symbol>>> {
        self.memories.get(&component)
    }

    pub fn memory_mut(&mut self, component: usize) -> Option<&mut MostRecentHash<Vec<Symbol>, Vec<Symbol>>> {
        self.memories.get_mut(&component)
    }
}

/// Content seen by a component through its selective focus.
pub fn fetch_content(model: &Model, exec: &Execution, focus: &ActiveFocus) -> Result<Vec<Symbol>> {
    let seq = &exec.sequence;
    let s = focus.selective;
    let out_of_range = || RuntimeError::FocusOutOfRange {
        offset: s.time_offset,
        start: s.range.start,
        len: s.range.len,
        sequence_len: seq.len(),
    };
    let index = (seq.len() as i64 - 1) + s.time_offset;
    if s.time_offset > 0 || index < 0 || s.range.end() > model.arity {
        return Err(out_of_range());
    }
    let state = seq.get(index as usize).ok_or_else(out_of_range)?;
    let slots = &state.slots[s.range.start..s.range.end()];
    let component = model
        .components
        .get(focus.component)
        .ok_or_else(|| RuntimeError::InvalidProgram(format!("unknown component {}", focus.component)))?;
    let raw = match component.kind {
        ComponentKind::Memory { value_len } => {
            let store = exec.memories.get(&focus.component).ok_or_else(|| {
                RuntimeError::InvalidProgram(format!("component {} has no store", component.name))
            })?;
            store.read(&slots.to_vec()).cloned().unwrap_or_else(|| vec![Symbol::Blank; value_len])
        }
        _ => slots.to_vec(),
    };
    Ok(raw.iter().map(|x| component.transform.apply(x)).collect())
}

/// Places each content into its generative range; ranges must partition the state.
pub fn combine(contents: &[Vec<Symbol>], generative: &[GenerativeFocus], arity: usize) -> Result<VisibleState> {
    if contents.len() != generative.len() {
        return Err(RuntimeError::InvalidProgram("one generative focus per content required".into()));
    }
    let mut slots: Vec<Option<Symbol>> = vec![None; arity];
    for (content, g) in contents.iter().zip(generative) {
        if content.len() != g.range.len || g.range.end() > arity {
            return Err(RuntimeError::InvalidProgram(format!(
                "content of {} symbols does not fit range {}+{}",
                content.len(),
                g.range.start,
                g.range.len
            )));
        }
        for (offset, symbol) in content.iter().enumerate() {
            let slot = g.range.start + offset;
            if slots[slot].is_some() {
                return Err(RuntimeError::OverlappingFocus(slot));
            }
            slots[slot] = Some(symbol.clone());
        }
    }
    let slots = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(RuntimeError::UncoveredSlots(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VisibleState::new(slots))
}

/// Selects a generative range back out of a combined state.
pub fn readback(state: &VisibleState, g: &GenerativeFocus) -> Vec<Symbol> {
    state.slots[g.range.start..g.range.end()].to_vec()
}

/// Host hook writing the external part of each newly appended state.
pub type Host<'a> = dyn FnMut(&ThoughtSequence) -> Option<Vec<Symbol>> + 'a;

/// Per-step detail, used by invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub activation: Activation,
    pub fetched: Vec<Vec<Symbol>>,
    pub emitted: Vec<Vec<Symbol>>,
}

pub fn step(model: &Model, exec: &mut Execution) -> Result<StepRecord> {
    step_with_host(model, exec, None)
}

pub fn step_with_host(model: &Model, exec: &mut Execution, host: Option<&mut Host<'_>>) -> Result<StepRecord> {
    let activation = activate_focuses(&model.policy, &exec.sequence)?;
    let rule = &model.policy.rules[activation.rule];
    let fetched = activation
        .focuses
        .iter()
        .map(|f| fetch_content(model, exec, f))
        .collect::<Result<Vec<_>>>()?;

    let (states, focus_log) = window(&exec.sequence, model.policy.tau);
    let ctx = EvalCtx { window: states, focus_log, fetched: Some(&fetched) };
    let mut emitted = Vec::with_capacity(rule.actions.len());
    let mut writes = Vec::new();
    for (i, action) in rule.actions.iter().enumerate() {
        emitted.push(match &action.emit {
            Emit::Fetched => fetched[i].clone(),
            Emit::Exprs(es) => es.iter().map(|e| e.eval(&ctx)).collect::<Result<Vec<_>>>()?,
        });
        if let Some(w) = &action.write {
            let value = w.iter().map(|e| e.eval(&ctx)).collect::<Result<Vec<_>>>()?;
            let f = activation.focuses[i].selective;
            let index = (exec.sequence.len() as i64 - 1 + f.time_offset) as usize;
            let key = exec.sequence.states()[index].slots[f.range.start..f.range.end()].to_vec();
            writes.push((action.component, key, value));
        }
    }
    let generative: Vec<GenerativeFocus> = activation.focuses.iter().map(|f| f.generative).collect();
    let state = combine(&emitted, &generative, model.arity)?;

    for (component, key, value) in writes {
        if let Some(store) = exec.memories.get_mut(&component) {
            store.write(key, value);
        }
    }
    exec.sequence.push(state, activation.focuses.clone());
    if let Some(host) = host {
        let external = host(&exec.sequence);
        let last = exec.sequence.len() - 1;
        exec.sequence.set_external(last, external);
    }
    Ok(StepRecord { activation, fetched, emitted })
}

pub fn run(model: &Model, initial: Vec<VisibleState>, n: usize) -> Result<Execution> {
    let mut exec = Execution::new(model, initial)?;
    for _ in 0..n {
        step(model, &mut exec)?;
    }
    Ok(exec)
}

/// CSV with columns `step,tag,slots,focus`; slots are `|`-separated and
/// focuses `name=(offset,start,len)->(start,len)` joined by `;`.
pub fn trace_csv(model: &Model, sequence: &ThoughtSequence) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let export = |e: csv::Error| RuntimeError::Export(e.to_string());
    writer.write_record(["step", "tag", "slots", "focus"]).map_err(export)?;
    for (i, (state, focuses)) in sequence.states().iter().zip(sequence.focus_log()).enumerate() {
        let tag = state.slots.first().map(|s| s.to_string()).unwrap_or_default();
        let slots: Vec<String> = state.slots.iter().map(|s| s.to_string()).collect();
        let focus: Vec<String> = focuses
            .iter()
            .map(|f| {
                let name = model.components.get(f.component).map_or("?", |c| c.name.as_str());
                format!("{name}={f}")
            })
            .collect();
        writer.write_record([i.to_string(), tag, slots.join("|"), focus.join(";")]).map_err(export)?;
    }
    let bytes = writer.into_inner().map_err(|e| RuntimeError::Export(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RuntimeError::Export(e.to_string()))
}

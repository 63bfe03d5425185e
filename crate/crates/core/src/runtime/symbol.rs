use std::fmt;

/// Tagged symbol carried by a visible-state slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Tag(String),
    State(String),
    Position(i64),
    TapeSym(String),
    Counter(i64),
    /// Empty or unrecognised content.
    Blank,
    /// Matches anything inside patterns; inert elsewhere.
    Wild,
}

impl Symbol {
    pub fn tag(name: &str) -> Self {
        Symbol::Tag(name.to_string())
    }

    pub fn state(name: &str) -> Self {
        Symbol::State(name.to_string())
    }

    pub fn tape(name: &str) -> Self {
        Symbol::TapeSym(name.to_string())
    }

    pub fn pos(i: i64) -> Self {
        Symbol::Position(i)
    }

    pub fn ctr(i: i64) -> Self {
        Symbol::Counter(i)
    }

    /// Integer payload of positions and counters.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Symbol::Position(i) | Symbol::Counter(i) => Some(*i),
            _ => None,
        }
    }

    /// Pattern match where `self` is the pattern.
    pub fn matches(&self, value: &Symbol) -> bool {
        matches!(self, Symbol::Wild) || self == value
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Tag(s) => write!(f, "#{s}"),
            Symbol::State(s) => write!(f, "${s}"),
            Symbol::Position(i) => write!(f, "@{i}"),
            Symbol::TapeSym(s) => write!(f, "'{s}'"),
            Symbol::Counter(i) => write!(f, "{i}"),
            Symbol::Blank => write!(f, "~"),
            Symbol::Wild => write!(f, "*"),
        }
    }
}

/// Fixed-arity slot tuple plus an optional host-written external part.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisibleState {
    pub slots: Vec<Symbol>,
    pub external: Option<Vec<Symbol>>,
}

impl VisibleState {
    pub fn new(slots: Vec<Symbol>) -> Self {
        Self { slots, external: None }
    }

    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, i: usize) -> &Symbol {
        &self.slots[i]
    }
}

impl From<Vec<Symbol>> for VisibleState {
    fn from(slots: Vec<Symbol>) -> Self {
        Self::new(slots)
    }
}

/// Contiguous slot range `[start, start + len)`; may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotRange {
    pub start: usize,
    pub len: usize,
}

impl SlotRange {
    pub const fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn overlaps(&self, other: &SlotRange) -> bool {
        self.len > 0 && other.len > 0 && self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SelectiveFocus {
    /// 0 addresses the most recent state, −k the state k steps before it.
    pub time_offset: i64,
    pub range: SlotRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GenerativeFocus {
    pub range: SlotRange,
}

/// Focus pair activated for one component at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActiveFocus {
    pub component: usize,
    pub selective: SelectiveFocus,
    pub generative: GenerativeFocus,
}

impl fmt::Display for ActiveFocus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.selective;
        let g = &self.generative.range;
        write!(f, "({},{},{})->({},{})", s.time_offset, s.range.start, s.range.len, g.start, g.len)
    }
}

/// Append-only record of generated states and the focuses that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ThoughtSequence {
    states: Vec<VisibleState>,
    /// One entry per state; empty for initial states.
    focus_log: Vec<Vec<ActiveFocus>>,
}

impl ThoughtSequence {
    pub fn new(initial: Vec<VisibleState>) -> Self {
        let focus_log = vec![Vec::new(); initial.len()];
        Self { states: initial, focus_log }
    }

    pub fn states(&self) -> &[VisibleState] {
        &self.states
    }

    pub fn focus_log(&self) -> &[Vec<ActiveFocus>] {
        &self.focus_log
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&VisibleState> {
        self.states.last()
    }

    pub fn get(&self, index: usize) -> Option<&VisibleState> {
        self.states.get(index)
    }

    pub(crate) fn push(&mut self, state: VisibleState, focuses: Vec<ActiveFocus>) {
        self.states.push(state);
        self.focus_log.push(focuses);
    }

    pub(crate) fn set_external(&mut self, index: usize, external: Option<Vec<Symbol>>) {
        self.states[index].external = external;
    }

    /// The last `tau` states (and their focuses) as a fresh sequence.
    pub fn truncated(&self, tau: usize) -> Self {
        let from = self.states.len().saturating_sub(tau);
        Self { states: self.states[from..].to_vec(), focus_log: self.focus_log[from..].to_vec() }
    }

    pub fn is_prefix_of(&self, other: &ThoughtSequence) -> bool {
        self.states.len() <= other.states.len()
            && self.states[..] == other.states[..self.states.len()]
            && self.focus_log[..] == other.focus_log[..self.focus_log.len()]
    }
}

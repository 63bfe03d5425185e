use std::collections::BTreeMap;

use crate::runtime::{step, Execution, Symbol};

use super::compile::{compile, Algo, CompiledProgram, BETA, C_WRITE, M_WRITE, S_WRITTEN, S_WRITTEN_AT};
use super::{reference_trace, write_cell, Result, TmConfig, TmError, TmSpec};

/// A compiled run together with its decoded TM configurations.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub program: CompiledProgram,
    pub input: Vec<String>,
    pub execution: Execution,
    /// `configs[k]` is the configuration after `k` TM steps; a halted
    /// configuration is repeated up to the requested horizon.
    pub configs: Vec<TmConfig>,
    /// Model steps spent on each executed TM step.
    pub model_step_counts: Vec<usize>,
    /// TM step at which a halting state was reached, if any.
    pub halted_at: Option<usize>,
}

impl Simulation {
    pub fn model_steps(&self) -> usize {
        self.model_step_counts.iter().sum()
    }
}

/// Runs `spec` on `input` for `tm_steps` TM steps through the given layout.
pub fn simulate(spec: &TmSpec, input: &[String], tm_steps: usize, algo: Algo) -> Result<Simulation> {
    let program = compile(spec, algo)?;
    let mut exec = program.start(input)?;
    let mut pivot = exec.sequence.len() - 1;
    let mut counts = Vec::new();
    let mut halted_at = None;
    for k in 0..tm_steps {
        if let Symbol::State(s) = exec.sequence.states()[pivot].slot(1) {
            if spec.is_halting(s) {
                halted_at = Some(k);
                break;
            }
        }
        let mut n = 0;
        loop {
            step(&program.model, &mut exec)?;
            n += 1;
            if is_pivot(exec.sequence.states().last().expect("non-empty").slot(0)) {
                break;
            }
        }
        counts.push(n);
        pivot = exec.sequence.len() - 1;
    }
    if halted_at.is_none() {
        if let Symbol::State(s) = exec.sequence.states()[pivot].slot(1) {
            if spec.is_halting(s) {
                halted_at = Some(counts.len());
            }
        }
    }
    let mut configs = Vec::with_capacity(tm_steps + 1);
    for k in 0..=counts.len() {
        configs.push(extract_tm_config(&program, &exec, input, k)?);
    }
    let last = configs.last().expect("at least the initial config").clone();
    configs.resize(tm_steps + 1, last);
    Ok(Simulation { program, input: input.to_vec(), execution: exec, configs, model_step_counts: counts, halted_at })
}

fn is_pivot(tag: &Symbol) -> bool {
    *tag == Symbol::tag(BETA)
}

/// Row indices of the pivot (beta) rows carrying a machine state, in order.
fn pivot_rows(exec: &Execution) -> Vec<usize> {
    exec.sequence
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| is_pivot(s.slot(0)) && matches!(s.slot(1), Symbol::State(_)))
        .map(|(i, _)| i)
        .collect()
}

/// Decodes the configuration after `k` TM steps from an execution.
///
/// `input` is only consulted by the memory layout, whose initial tape lives
/// in the store rather than in the trace.
pub fn extract_tm_config(program: &CompiledProgram, exec: &Execution, input: &[String], k: usize) -> Result<TmConfig> {
    let bad = |m: String| TmError::MalformedTrace(m);
    let states = exec.sequence.states();
    let pivots = pivot_rows(exec);
    let &row = pivots.get(k).ok_or_else(|| bad(format!("no pivot for TM step {k} ({} available)", pivots.len())))?;
    let pivot = &states[row];
    let Symbol::State(state) = pivot.slot(1).clone() else { unreachable!("filtered on state") };
    let head = position(pivot.slot(2)).ok_or_else(|| bad(format!("row {row} has no head position")))?;

    let blank = &program.spec.blank;
    let mut tape = BTreeMap::new();
    let cell = |r: usize, head_slot: usize, content_slot: usize| -> Result<(i64, String)> {
        let s = states.get(r).ok_or_else(|| bad(format!("row {r} missing")))?;
        let h = position(s.slot(head_slot)).ok_or_else(|| bad(format!("row {r} slot {head_slot} is not a position")))?;
        match s.slot(content_slot) {
            Symbol::TapeSym(t) => Ok((h, t.clone())),
            other => Err(bad(format!("row {r} slot {content_slot} holds {other}, not a tape symbol"))),
        }
    };
    match program.algo {
        Algo::Search | Algo::SearchBounded => {
            // Prologue rows carry the input; pivot j + 1 carries the write of step j.
            for (r, row) in states[..pivots[0]].iter().enumerate() {
                if is_pivot(row.slot(0)) && position(row.slot(S_WRITTEN_AT)).is_some() {
                    let (h, t) = cell(r, S_WRITTEN_AT, S_WRITTEN)?;
                    write_cell(&mut tape, h, &t, blank);
                }
            }
            for &r in &pivots[1..=k] {
                let (h, t) = cell(r, S_WRITTEN_AT, S_WRITTEN)?;
                write_cell(&mut tape, h, &t, blank);
            }
        }
        Algo::Constant => {
            for &r in &pivots[..k] {
                let h = position(states[r].slot(2)).ok_or_else(|| bad(format!("row {r} has no head position")))?;
                let (_, t) = cell(r + 1, 2, C_WRITE)?;
                write_cell(&mut tape, h, &t, blank);
            }
        }
        Algo::Memory => {
            for (i, x) in input.iter().enumerate() {
                write_cell(&mut tape, i as i64, x, blank);
            }
            for &r in &pivots[..k] {
                let (h, t) = cell(r + 1, 2, M_WRITE)?;
                write_cell(&mut tape, h, &t, blank);
            }
        }
    }
    Ok(TmConfig { state, head, tape, step_count: k })
}

fn position(s: &Symbol) -> Option<i64> {
    match s {
        Symbol::Position(i) => Some(*i),
        _ => None,
    }
}

/// Search rows spent on each TM step (zero for the fixed-stride layouts).
pub fn search_costs(sim: &Simulation) -> Vec<usize> {
    match sim.program.algo {
        Algo::Search | Algo::SearchBounded => sim.model_step_counts.iter().map(|n| n - 1).collect(),
        Algo::Constant | Algo::Memory => vec![0; sim.model_step_counts.len()],
    }
}

/// First TM step at which `configs` differs from the reference simulator.
pub fn first_divergence(spec: &TmSpec, input: &[String], configs: &[TmConfig]) -> Option<usize> {
    let reference = reference_trace(spec, input, configs.len().saturating_sub(1));
    configs.iter().zip(&reference).position(|(a, b)| a != b)
}

/// CSV with columns `tm_step,state,head,tape_support`.
pub fn config_csv(configs: &[TmConfig]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| TmError::Io(e.to_string());
    writer.write_record(["tm_step", "state", "head", "tape_support"]).map_err(io)?;
    for (k, c) in configs.iter().enumerate() {
        writer.write_record([k.to_string(), c.state.clone(), c.head.to_string(), c.tape_support()]).map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| TmError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| TmError::Io(e.to_string()))
}

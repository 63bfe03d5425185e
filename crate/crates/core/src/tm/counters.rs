use crate::runtime::{Execution, Symbol};

use super::compile::{Algo, CompiledProgram, BETA, C_C, C_L, C_R};
use super::{Move, Result, TmError};

/// Step counters attached to a TM step: offsets (in TM steps, ≤ 0) to the
/// last visit of the left neighbour, the head cell and the right neighbour,
/// plus the move that led here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCounters {
    pub l: i64,
    pub c: i64,
    pub r: i64,
    pub d: Option<Move>,
}

impl StepCounters {
    pub const START: StepCounters = StepCounters { l: 0, c: 0, r: 0, d: None };
}

/// Counters for the head walk `moves`, one entry per TM step (`moves.len() + 1`).
pub fn counters_from_moves(moves: &[Move]) -> Vec<StepCounters> {
    let mut out = vec![StepCounters::START];
    for (i, &mv) in moves.iter().enumerate() {
        let n = i as i64 + 1;
        let prev = out[i];
        let c = match mv {
            Move::R => prev.r - 1,
            Move::L => prev.l - 1,
        };
        let target = out[(n + c) as usize];
        let next = match mv {
            Move::R => StepCounters { l: -1, c, r: c + target.r, d: Some(mv) },
            Move::L => StepCounters { l: c + target.l, c, r: -1, d: Some(mv) },
        };
        out.push(next);
    }
    out
}

/// Brute force: for each step `n`, the most recent step `k < n` whose head
/// was at `h_n - 1`, `h_n`, `h_n + 1` respectively, or 0 if there is none.
pub fn last_visits(heads: &[i64]) -> Vec<[usize; 3]> {
    (0..heads.len())
        .map(|n| {
            let find = |cell: i64| (0..n).rev().find(|&k| heads[k] == cell).unwrap_or(0);
            [find(heads[n] - 1), find(heads[n]), find(heads[n] + 1)]
        })
        .collect()
}

/// Counters read from the beta rows of a constant-layout execution.
pub fn counters_from_trace(program: &CompiledProgram, exec: &Execution) -> Result<Vec<StepCounters>> {
    if program.algo != Algo::Constant {
        return Err(TmError::MalformedTrace("counters exist only in the constant layout".into()));
    }
    let states = exec.sequence.states();
    let int = |row: usize, slot: usize| -> Result<i64> {
        states[row].slots[slot]
            .as_int()
            .ok_or_else(|| TmError::MalformedTrace(format!("row {row} slot {slot} is not a counter")))
    };
    let mut out = Vec::new();
    for row in (0..states.len()).step_by(3) {
        if states[row].slots[0] != Symbol::tag(BETA) {
            return Err(TmError::MalformedTrace(format!("row {row} is not a beta row")));
        }
        let d = if row == 0 {
            None
        } else {
            let delta = int(row - 1, 5)?;
            Some(Move::from_delta(delta).ok_or_else(|| TmError::MalformedTrace(format!("bad move {delta}")))?)
        };
        out.push(StepCounters { l: int(row, C_L)?, c: int(row, C_C)?, r: int(row, C_R)?, d });
    }
    Ok(out)
}

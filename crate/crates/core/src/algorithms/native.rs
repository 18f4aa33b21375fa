//! Scheduling policies: priority programs and the native share-based ones.

use crate::dsl::{Binding, ControllerProgram, EvalContext};
use crate::env::{SchedCandidate, SchedPolicy};

/// Runs a priority program on every candidate and picks the highest score;
/// the earliest candidate wins ties.
pub struct PriorityProgram<'a>(pub &'a ControllerProgram);

impl SchedPolicy for PriorityProgram<'_> {
    fn pick(&mut self, candidates: &[SchedCandidate]) -> Result<usize, String> {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let ctx = EvalContext::from_parts(Binding::SchedPriority, c.inputs(), vec![]).map_err(|e| e.to_string())?;
            let score = self.0.evaluate(&ctx).map_err(|e| e.to_string())?;
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        Ok(best)
    }
}

/// Gives the next executor to the job currently holding the fewest.
pub struct Fair;

impl SchedPolicy for Fair {
    fn pick(&mut self, candidates: &[SchedCandidate]) -> Result<usize, String> {
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate() {
            if c.job_executors < candidates[best].job_executors {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Cycles through jobs by index, one executor at a time.
#[derive(Default)]
pub struct RoundRobin {
    next_job: usize,
}

impl SchedPolicy for RoundRobin {
    fn pick(&mut self, candidates: &[SchedCandidate]) -> Result<usize, String> {
        let pos = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.job >= self.next_job)
            .min_by_key(|(_, c)| c.job)
            .or_else(|| candidates.iter().enumerate().min_by_key(|(_, c)| c.job))
            .map(|(i, _)| i)
            .ok_or("no candidates")?;
        self.next_job = candidates[pos].job + 1;
        Ok(pos)
    }
}

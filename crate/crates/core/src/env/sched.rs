//! Discrete-event simulation of DAG jobs on a pool of executors.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::{EnvError, StepTriplet};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedStage {
    pub tasks: usize,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(default)]
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedJob {
    #[serde(rename = "arrival_s")]
    pub arrival: f64,
    pub stages: Vec<SchedStage>,
}

impl SchedJob {
    pub fn total_work(&self) -> f64 {
        self.stages.iter().map(|s| s.tasks as f64 * s.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedWorkload {
    #[serde(default)]
    pub name: String,
    pub jobs: Vec<SchedJob>,
}

impl SchedWorkload {
    pub fn total_work(&self) -> f64 {
        self.jobs.iter().map(SchedJob::total_work).sum()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |message: String| EnvError::Invalid {
            what: "workload",
            message,
        };
        if self.jobs.is_empty() {
            return Err(bad("no jobs".into()));
        }
        for (j, job) in self.jobs.iter().enumerate() {
            if !(job.arrival.is_finite() && job.arrival >= 0.0) {
                return Err(bad(format!("job {j}: arrival must be finite and non-negative")));
            }
            if job.stages.is_empty() {
                return Err(bad(format!("job {j}: no stages")));
            }
            for (s, stage) in job.stages.iter().enumerate() {
                if stage.tasks == 0 || !(stage.duration.is_finite() && stage.duration > 0.0) {
                    return Err(bad(format!("job {j} stage {s}: needs tasks >= 1 and duration > 0")));
                }
                if let Some(p) = stage.parents.iter().find(|&&p| p >= job.stages.len() || p == s) {
                    return Err(bad(format!("job {j} stage {s}: bad parent {p}")));
                }
            }
            if topological_order(job).is_none() {
                return Err(bad(format!("job {j}: stage graph has a cycle")));
            }
        }
        Ok(())
    }
}

fn topological_order(job: &SchedJob) -> Option<Vec<usize>> {
    let n = job.stages.len();
    let mut pending: Vec<usize> = job.stages.iter().map(|s| s.parents.len()).collect();
    let mut order: Vec<usize> = (0..n).filter(|&s| pending[s] == 0).collect();
    let mut head = 0;
    while head < order.len() {
        let done = order[head];
        head += 1;
        for (s, stage) in job.stages.iter().enumerate() {
            for &p in &stage.parents {
                if p == done {
                    pending[s] -= 1;
                    if pending[s] == 0 {
                        order.push(s);
                    }
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub fn load_workload(path: &Path) -> Result<SchedWorkload, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut w: SchedWorkload = serde_json::from_str(&text).map_err(|e| EnvError::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    if w.name.is_empty() {
        w.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "workload".into());
    }
    w.validate()?;
    Ok(w)
}

/// Random layered DAG jobs: 2-6 stages, each stage depending on one or two
/// earlier stages, lognormal task durations scaled by `scale` seconds and
/// exponential inter-arrival gaps averaging `2 * scale`.
pub fn generate_sched_workload(seed: u64, n_jobs: usize, scale: f64) -> SchedWorkload {
    let mut rng = seeding::rng(seed);
    let durations = LogNormal::new(0.0, 0.6).expect("valid lognormal");
    let gaps = Exp::new(1.0 / (2.0 * scale)).expect("valid rate");
    let mut arrival = 0.0;
    let mut jobs = Vec::with_capacity(n_jobs);
    for j in 0..n_jobs {
        if j > 0 {
            arrival += gaps.sample(&mut rng);
        }
        let n_stages = rng.random_range(2..=6);
        let mut stages = Vec::with_capacity(n_stages);
        for s in 0..n_stages {
            let mut parents = Vec::new();
            if s > 0 {
                parents.push(rng.random_range(0..s));
                if s > 1 && rng.random_bool(0.3) {
                    let extra = rng.random_range(0..s);
                    if !parents.contains(&extra) {
                        parents.push(extra);
                    }
                }
                parents.sort_unstable();
            }
            stages.push(SchedStage {
                tasks: rng.random_range(1..=8),
                duration: scale * durations.sample(&mut rng),
                parents,
            });
        }
        jobs.push(SchedJob { arrival, stages });
    }
    SchedWorkload {
        name: "synth".into(),
        jobs,
    }
}

/// Simulator phenomena.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedConfig {
    /// Duration multiplier for tasks launched before any task of their
    /// stage has finished.
    pub first_wave_factor: f64,
    /// Uniform range of the startup delay paid when an executor switches
    /// jobs; `None` disables it.
    pub move_delay: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for SchedConfig {
    fn default() -> Self {
        Self {
            first_wave_factor: 1.3,
            move_delay: Some((2.0, 3.0)),
            seed: 0,
        }
    }
}

impl SchedConfig {
    /// No wave slowdown and free executor moves.
    pub fn ideal() -> Self {
        Self {
            first_wave_factor: 1.0,
            move_delay: None,
            seed: 0,
        }
    }
}

/// A runnable stage offered to the scheduler, with the priority inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedCandidate {
    pub job: usize,
    pub stage: usize,
    pub now: f64,
    pub job_arrival: f64,
    pub job_total_work: f64,
    pub job_remaining_work: f64,
    pub job_attained: f64,
    pub job_executors: usize,
    pub job_stages_remaining: usize,
    pub stage_tasks_remaining: usize,
    pub stage_task_duration: f64,
    pub stage_remaining_work: f64,
    pub free_executors: usize,
    pub n_executors: usize,
}

impl SchedCandidate {
    /// Scalar inputs in the order of the `sched-priority` binding.
    pub fn inputs(&self) -> Vec<f64> {
        vec![
            self.now,
            self.job as f64,
            self.job_arrival,
            self.job_total_work,
            self.job_remaining_work,
            self.job_attained,
            self.job_executors as f64,
            self.job_stages_remaining as f64,
            self.stage as f64,
            self.stage_tasks_remaining as f64,
            self.stage_task_duration,
            self.stage_remaining_work,
            self.free_executors as f64,
            self.n_executors as f64,
        ]
    }
}

/// Chooses which candidate receives the next free executor. Candidates are
/// ordered by job arrival, job index and stage index.
pub trait SchedPolicy {
    fn pick(&mut self, candidates: &[SchedCandidate]) -> Result<usize, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub job: usize,
    pub stage: usize,
    pub executor: usize,
    /// Start of execution, after any move delay.
    pub start: f64,
    pub duration: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedResult {
    /// Completion time of each job, in workload order.
    pub completions: Vec<f64>,
    pub avg_jct: f64,
    pub utilization: f64,
    /// Sum over tasks of the time between stage readiness and launch.
    pub cumulative_waiting: f64,
    pub makespan: f64,
    pub busy_time: f64,
    pub fallbacks: usize,
    pub tasks: Vec<TaskRecord>,
    #[serde(skip)]
    pub triplets: Vec<StepTriplet>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival(usize),
    TaskDone { executor: usize, job: usize, stage: usize },
}

#[derive(Default, Clone)]
struct StageRt {
    launched: usize,
    done: usize,
    ready_at: Option<f64>,
}

#[derive(Default, Clone)]
struct JobRt {
    arrived: bool,
    stages_done: usize,
    attained: f64,
    completed_work: f64,
    executors: usize,
    done_at: Option<f64>,
}

struct Executor {
    job: Option<usize>,
    busy: bool,
}

pub fn simulate_sched(
    policy: &mut dyn SchedPolicy,
    workload: &SchedWorkload,
    n_executors: usize,
    config: &SchedConfig,
) -> SchedResult {
    simulate_sched_recording(policy, workload, n_executors, config, true)
}

pub(crate) fn simulate_sched_recording(
    policy: &mut dyn SchedPolicy,
    workload: &SchedWorkload,
    n_executors: usize,
    config: &SchedConfig,
    record: bool,
) -> SchedResult {
    let n_executors = n_executors.max(1);
    let mut rng = seeding::rng(config.seed);
    let jobs = &workload.jobs;
    let mut stages: Vec<Vec<StageRt>> = jobs.iter().map(|j| vec![StageRt::default(); j.stages.len()]).collect();
    let mut job_rt = vec![JobRt::default(); jobs.len()];
    let mut executors: Vec<Executor> = (0..n_executors).map(|_| Executor { job: None, busy: false }).collect();
    let mut events: BinaryHeap<Reverse<(Time, u64, Event)>> = BinaryHeap::new();
    let mut seq = 0u64;
    for (j, job) in jobs.iter().enumerate() {
        events.push(Reverse((Time(job.arrival), seq, Event::Arrival(j))));
        seq += 1;
    }
    let mut task_log = Vec::new();
    let mut triplets = Vec::new();
    let mut busy_time = 0.0;
    let mut waiting = 0.0;
    let mut fallbacks = 0;

    while let Some(Reverse((Time(now), _, _))) = events.peek().copied() {
        while let Some(Reverse((Time(t), _, ev))) = events.peek().copied() {
            if t != now {
                break;
            }
            events.pop();
            match ev {
                Event::Arrival(j) => {
                    job_rt[j].arrived = true;
                    for (s, stage) in jobs[j].stages.iter().enumerate() {
                        if stage.parents.is_empty() {
                            stages[j][s].ready_at = Some(now);
                        }
                    }
                }
                Event::TaskDone { executor, job, stage } => {
                    executors[executor].busy = false;
                    job_rt[job].executors -= 1;
                    let spec = &jobs[job].stages[stage];
                    let rt = &mut stages[job][stage];
                    rt.done += 1;
                    job_rt[job].completed_work += spec.duration;
                    if rt.done == spec.tasks {
                        job_rt[job].stages_done += 1;
                        for (child, c) in jobs[job].stages.iter().enumerate() {
                            if c.parents.contains(&stage)
                                && c.parents.iter().all(|&p| stages[job][p].done == jobs[job].stages[p].tasks)
                            {
                                stages[job][child].ready_at = Some(now);
                            }
                        }
                        if job_rt[job].stages_done == jobs[job].stages.len() {
                            job_rt[job].done_at = Some(now);
                        }
                    }
                }
            }
        }

        loop {
            let free = executors.iter().filter(|e| !e.busy).count();
            if free == 0 {
                break;
            }
            let mut candidates = Vec::new();
            for (j, job) in jobs.iter().enumerate() {
                if !job_rt[j].arrived || job_rt[j].done_at.is_some() {
                    continue;
                }
                for (s, stage) in job.stages.iter().enumerate() {
                    let rt = &stages[j][s];
                    if rt.ready_at.is_none() || rt.launched == stage.tasks {
                        continue;
                    }
                    let left = stage.tasks - rt.launched;
                    candidates.push(SchedCandidate {
                        job: j,
                        stage: s,
                        now,
                        job_arrival: job.arrival,
                        job_total_work: job.total_work(),
                        job_remaining_work: job.total_work() - job_rt[j].completed_work,
                        job_attained: job_rt[j].attained,
                        job_executors: job_rt[j].executors,
                        job_stages_remaining: job.stages.len() - job_rt[j].stages_done,
                        stage_tasks_remaining: left,
                        stage_task_duration: stage.duration,
                        stage_remaining_work: left as f64 * stage.duration,
                        free_executors: free,
                        n_executors,
                    });
                }
            }
            if candidates.is_empty() {
                break;
            }
            candidates.sort_by(|a, b| {
                a.job_arrival
                    .total_cmp(&b.job_arrival)
                    .then(a.job.cmp(&b.job))
                    .then(a.stage.cmp(&b.stage))
            });
            let (choice, note) = match policy.pick(&candidates) {
                Ok(i) if i < candidates.len() => (i, None),
                Ok(i) => {
                    fallbacks += 1;
                    (0, Some(format!("policy picked {i} of {}; fifo fallback", candidates.len())))
                }
                Err(e) => {
                    fallbacks += 1;
                    (0, Some(format!("policy error: {e}; fifo fallback")))
                }
            };
            let c = &candidates[choice];
            let (j, s) = (c.job, c.stage);
            let executor = executors
                .iter()
                .position(|e| !e.busy && e.job == Some(j))
                .or_else(|| executors.iter().position(|e| !e.busy && e.job.is_none()))
                .or_else(|| executors.iter().position(|e| !e.busy))
                .expect("a free executor exists");
            let moving = matches!(executors[executor].job, Some(other) if other != j);
            let delay = match (moving, config.move_delay) {
                (true, Some((lo, hi))) if hi > lo => rng.random_range(lo..hi),
                (true, Some((lo, _))) => lo,
                _ => 0.0,
            };
            let rt = &mut stages[j][s];
            let first_wave = rt.done == 0;
            let base = jobs[j].stages[s].duration;
            let duration = if first_wave {
                base * config.first_wave_factor
            } else {
                base
            };
            waiting += now - rt.ready_at.expect("ready stage");
            rt.launched += 1;
            executors[executor].busy = true;
            executors[executor].job = Some(j);
            job_rt[j].executors += 1;
            job_rt[j].attained += duration;
            busy_time += duration;
            let start = now + delay;
            task_log.push(TaskRecord {
                job: j,
                stage: s,
                executor,
                start,
                duration,
                delay,
            });
            events.push(Reverse((
                Time(start + duration),
                seq,
                Event::TaskDone {
                    executor,
                    job: j,
                    stage: s,
                },
            )));
            seq += 1;
            if record {
                let mut outcome = format!("start={start:.3} duration={duration:.3} delay={delay:.3}");
                if let Some(n) = note {
                    outcome.push_str("; ");
                    outcome.push_str(&n);
                }
                triplets.push(StepTriplet {
                    state: format!(
                        "workload={} t={now:.3} free={free} candidates={}",
                        workload.name,
                        candidates.len()
                    ),
                    action: format!("job={j} stage={s} executor={executor}"),
                    outcome,
                });
            }
        }
    }

    let completions: Vec<f64> = job_rt
        .iter()
        .map(|r| r.done_at.expect("every job completes"))
        .collect();
    let avg_jct = completions
        .iter()
        .zip(jobs)
        .map(|(c, j)| c - j.arrival)
        .sum::<f64>()
        / jobs.len().max(1) as f64;
    let first = jobs.iter().map(|j| j.arrival).fold(f64::INFINITY, f64::min);
    let last = completions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let makespan = (last - first).max(0.0);
    let utilization = if makespan > 0.0 {
        (busy_time / (n_executors as f64 * makespan)).min(1.0)
    } else {
        0.0
    };
    SchedResult {
        completions,
        avg_jct,
        utilization,
        cumulative_waiting: waiting,
        makespan,
        busy_time,
        fallbacks,
        tasks: task_log,
        triplets,
    }
}

//! Rank workers, mailboxes and the per-cycle barrier protocol.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex, RwLock};
use std::time::Instant;

use super::{BasisFlow, BasisFlowSet, ExtractError, ExtractionConfig, FlowMapDataset, FlowStats, MessageLog, Strategy};
use crate::advect::{rk4_step, Particle, ParticleStatus, Region, StepError};
use crate::domain::{BlockDecomposition, Reduction};
use crate::fields::{FieldError, TimeField};
use crate::io::timing::{Phase, TimingRecord};

/// Worker configuration.
#[derive(Clone, Debug, Default)]
pub struct ExecOptions {
    /// `None`: one worker per rank. `Some(0)`: sequential round-robin.
    pub workers: Option<usize>,
    pub record_timing: bool,
}

impl ExecOptions {
    pub const THREADS_ENV: &'static str = "LBTO_THREADS";

    pub fn from_env() -> Self {
        let workers = std::env::var(Self::THREADS_ENV).ok().and_then(|v| v.trim().parse().ok());
        ExecOptions { workers, record_timing: false }
    }

    pub fn sequential() -> Self {
        ExecOptions { workers: Some(0), record_timing: false }
    }

    pub fn with_workers(n: usize) -> Self {
        ExecOptions { workers: Some(n), record_timing: false }
    }

    pub fn timed(mut self) -> Self {
        self.record_timing = true;
        self
    }

    fn worker_count(&self, ranks: usize) -> usize {
        match self.workers {
            None => ranks,
            Some(0) => 1,
            Some(n) => n.min(ranks),
        }
    }
}

pub struct ExtractionRun {
    pub dataset: FlowMapDataset,
    pub timings: Vec<TimingRecord>,
}

/// Particles leaving a rank this cycle, as `(destination, particle)` in
/// processing order.
pub type Outbox = Vec<(usize, Particle)>;

#[derive(Clone, Copy, Debug, Default)]
pub struct StepTimes {
    pub advect: f64,
    pub manage: f64,
}

/// One simulated rank's particles.
#[derive(Clone, Debug)]
pub struct RankState {
    pub rank: usize,
    /// Particles this rank integrates (Exchange: may include foreign ones).
    pub particles: Vec<Particle>,
    /// Terminated or exited particles held by this rank.
    pub retired: Vec<Particle>,
    /// Particles seeded by this rank this interval.
    pub seeded: usize,
    sends: Vec<(u64, usize, u64)>,
    timings: Vec<TimingRecord>,
}

impl RankState {
    pub fn seeded(decomp: &BlockDecomposition, rank: usize, reduction: Reduction) -> Result<Self, ExtractError> {
        let seeds = decomp.seed_uniform(rank, reduction)?;
        let particles: Vec<Particle> =
            seeds.positions.iter().enumerate().map(|(i, s)| Particle::new(rank, i, *s)).collect();
        Ok(RankState { rank, seeded: particles.len(), particles, retired: Vec::new(), sends: Vec::new(), timings: Vec::new() })
    }

    fn retire_inactive(&mut self) {
        if self.particles.iter().all(Particle::is_active) {
            return;
        }
        let (active, gone): (Vec<_>, Vec<_>) = self.particles.drain(..).partition(Particle::is_active);
        self.particles = active;
        self.retired.extend(gone);
    }

    /// One BTO cycle. A particle whose step (any stage or the candidate)
    /// leaves the block is terminated at its pre-step position; leaving the
    /// global domain marks it exited. Produces no messages.
    pub fn step_bto(&mut self, field: &TimeField, decomp: &BlockDecomposition, cycle: u64) -> Result<StepTimes, FieldError> {
        let start = Instant::now();
        let dt = field.cycle_dt();
        let owned = decomp.owned_region(self.rank);
        let domain = decomp.domain();
        for p in self.particles.iter_mut() {
            match rk4_step(field, &p.pos, cycle, dt, Region::Block(owned)) {
                Ok(candidate) if owned.contains(&candidate) => p.pos = candidate,
                Ok(candidate) => {
                    p.status = if domain.contains(&candidate) {
                        ParticleStatus::TerminatedBoundary
                    } else {
                        ParticleStatus::ExitedDomain
                    }
                }
                Err(StepError::StageOutOfRegion { position, .. }) => {
                    p.status = if domain.contains(&position) {
                        ParticleStatus::TerminatedBoundary
                    } else {
                        ParticleStatus::ExitedDomain
                    };
                }
                Err(StepError::Field(e)) => return Err(e),
            }
        }
        let advected = Instant::now();
        self.retire_inactive();
        Ok(StepTimes { advect: (advected - start).as_secs_f64(), manage: advected.elapsed().as_secs_f64() })
    }

    /// One Exchange cycle. Steps are confined to the global domain only;
    /// committed candidates owned by another rank go to the outbox.
    pub fn step_exchange(
        &mut self,
        field: &TimeField,
        decomp: &BlockDecomposition,
        cycle: u64,
    ) -> Result<(Outbox, StepTimes), FieldError> {
        let start = Instant::now();
        let dt = field.cycle_dt();
        let domain = decomp.domain();
        let mut moved = false;
        for p in self.particles.iter_mut() {
            match rk4_step(field, &p.pos, cycle, dt, Region::Global(domain)) {
                Ok(candidate) => match decomp.owner_of(&candidate) {
                    Some(r) => {
                        p.pos = candidate;
                        moved |= r != self.rank;
                    }
                    None => p.status = ParticleStatus::ExitedDomain,
                },
                Err(StepError::StageOutOfRegion { .. }) => p.status = ParticleStatus::ExitedDomain,
                Err(StepError::Field(e)) => return Err(e),
            }
        }
        let advected = Instant::now();
        self.retire_inactive();
        let mut outbox = Outbox::new();
        if moved {
            let rank = self.rank;
            let mut keep = Vec::with_capacity(self.particles.len());
            for p in self.particles.drain(..) {
                // Active particles are inside the domain, so they have an owner.
                match decomp.owner_of(&p.pos) {
                    Some(r) if r != rank => outbox.push((r, p)),
                    _ => keep.push(p),
                }
            }
            self.particles = keep;
        }
        Ok((outbox, StepTimes { advect: (advected - start).as_secs_f64(), manage: advected.elapsed().as_secs_f64() }))
    }

    /// Appends delivered particles. `batches` must be ordered by sender.
    pub fn receive(&mut self, batches: impl IntoIterator<Item = Vec<Particle>>) {
        for b in batches {
            self.particles.extend(b);
        }
    }

    fn record(&mut self, cycle: u64, phase: Phase, seconds: f64, write_cycle: bool) {
        self.timings.push(TimingRecord { rank: self.rank, cycle, phase, wall_seconds: seconds, write_cycle });
    }
}

fn stats_of(seeded: usize, particles: impl Iterator<Item = Particle>, flows: &mut Vec<BasisFlow>) -> FlowStats {
    let mut s = FlowStats { seeded, ..FlowStats::default() };
    for p in particles {
        match p.status {
            ParticleStatus::Active => {
                flows.push(BasisFlow { id: p.id, seed: p.seed, end: p.pos, valid: true, origin_rank: p.origin_rank });
                s.stored += 1;
            }
            ParticleStatus::TerminatedBoundary => s.terminated_boundary += 1,
            ParticleStatus::ExitedDomain => s.exited_domain += 1,
        }
    }
    s.discarded = s.terminated_boundary + s.exited_domain;
    flows.sort_by_key(|f| f.id);
    s
}

#[derive(Clone, Copy)]
struct IntervalInfo {
    index: u32,
    t_start: f64,
    t_end: f64,
    dims: usize,
}

/// BTO write cycle: every rank stores its surviving particles as they are.
pub fn finalize_bto(states: &[RankState], interval_index: u32, t_start: f64, t_end: f64, dims: usize) -> Vec<BasisFlowSet> {
    let info = IntervalInfo { index: interval_index, t_start, t_end, dims };
    states
        .iter()
        .map(|st| {
            let mut flows = Vec::new();
            let stats = stats_of(st.seeded, st.particles.iter().chain(&st.retired).copied(), &mut flows);
            make_set(info, st.rank, Strategy::Bto, flows, stats)
        })
        .collect()
}

/// Exchange write cycle: every particle held away from its origin is sent
/// back (one message each, counted in `returns`), then origins store.
pub fn finalize_exchange(
    states: &[RankState],
    interval_index: u32,
    t_start: f64,
    t_end: f64,
    dims: usize,
    returns: &mut [u64],
) -> Vec<BasisFlowSet> {
    let info = IntervalInfo { index: interval_index, t_start, t_end, dims };
    let ranks = states.len();
    let mut home: Vec<Vec<Particle>> = vec![Vec::new(); ranks];
    for st in states {
        for p in st.particles.iter().chain(&st.retired) {
            if p.origin_rank != st.rank {
                returns[st.rank * ranks + p.origin_rank] += 1;
            }
            home[p.origin_rank].push(*p);
        }
    }
    states
        .iter()
        .zip(home)
        .map(|(st, parts)| {
            let mut flows = Vec::new();
            let stats = stats_of(st.seeded, parts.into_iter(), &mut flows);
            make_set(info, st.rank, Strategy::Exchange, flows, stats)
        })
        .collect()
}

fn make_set(info: IntervalInfo, rank: usize, strategy: Strategy, flows: Vec<BasisFlow>, stats: FlowStats) -> BasisFlowSet {
    BasisFlowSet {
        interval_index: info.index,
        t_start: info.t_start,
        t_end: info.t_end,
        rank,
        dims: info.dims,
        strategy,
        flows,
        stats,
    }
}

struct Shared<'a> {
    field: &'a RwLock<TimeField>,
    decomp: &'a BlockDecomposition,
    strategy: Strategy,
    cycles: std::ops::Range<u64>,
    /// Per-receiver `(sender, particles)` batches for the current cycle.
    mailboxes: Vec<Mutex<Vec<(usize, Vec<Particle>)>>>,
    barrier: Option<Barrier>,
    /// Earliest phase (barrier-delimited step) in which a worker failed.
    failed_phase: AtomicU64,
    error: Mutex<Option<ExtractError>>,
}

impl Shared<'_> {
    fn fail(&self, phase: u64, e: ExtractError) {
        self.failed_phase.fetch_min(phase, Ordering::SeqCst);
        self.error.lock().unwrap().get_or_insert(e);
    }

    /// Ends `phase`. Returns the seconds waited and whether any worker
    /// failed in an earlier phase; every worker sees the same answer.
    fn sync(&self, phase: &mut u64) -> (f64, bool) {
        let waited = match &self.barrier {
            Some(b) => {
                let t = Instant::now();
                b.wait();
                t.elapsed().as_secs_f64()
            }
            None => 0.0,
        };
        *phase += 1;
        (waited, self.failed_phase.load(Ordering::SeqCst) < *phase)
    }
}

/// One worker's share of an interval: `states` are the ranks it owns.
/// Worker 0 loads gridded snapshots.
fn run_worker(sh: &Shared<'_>, worker: usize, states: &mut [RankState]) {
    let write_cycle = sh.cycles.end - 1;
    let exchange = sh.strategy == Strategy::Exchange;
    let share = 1.0 / states.len().max(1) as f64;
    let mut phase = 0;
    for cycle in sh.cycles.clone() {
        let is_write = cycle == write_cycle;
        if worker == 0 {
            let mut f = sh.field.write().unwrap();
            if f.needs_loading() {
                if let Err(e) = f.load_cycle(cycle) {
                    sh.fail(phase, e.into());
                }
            }
        }
        let (waited, stop) = sh.sync(&mut phase);
        if stop {
            return;
        }
        {
            let field = sh.field.read().unwrap();
            for st in states.iter_mut() {
                if exchange {
                    st.record(cycle, Phase::Communicate, waited * share, is_write);
                    let (outbox, times) = match st.step_exchange(&field, sh.decomp, cycle) {
                        Ok(r) => r,
                        Err(e) => {
                            sh.fail(phase, e.into());
                            break;
                        }
                    };
                    st.record(cycle, Phase::Advect, times.advect, is_write);
                    st.record(cycle, Phase::Manage, times.manage, is_write);
                    let t = Instant::now();
                    post(sh, st, cycle, outbox);
                    st.record(cycle, Phase::Communicate, t.elapsed().as_secs_f64(), is_write);
                } else {
                    match st.step_bto(&field, sh.decomp, cycle) {
                        Ok(times) => {
                            st.record(cycle, Phase::Advect, times.advect, is_write);
                            st.record(cycle, Phase::Manage, times.manage, is_write);
                        }
                        Err(e) => {
                            sh.fail(phase, e.into());
                            break;
                        }
                    }
                }
            }
        }
        if exchange {
            let (waited, stop) = sh.sync(&mut phase);
            if stop {
                return;
            }
            for st in states.iter_mut() {
                let t = Instant::now();
                let mut batches = std::mem::take(&mut *sh.mailboxes[st.rank].lock().unwrap());
                batches.sort_by_key(|(sender, _)| *sender);
                st.receive(batches.into_iter().map(|(_, b)| b));
                st.record(cycle, Phase::Communicate, t.elapsed().as_secs_f64() + waited * share, is_write);
            }
        } else if sh.barrier.is_some() {
            // The next snapshot load must wait for every reader of this one.
            if sh.sync(&mut phase).1 {
                return;
            }
        } else if sh.failed_phase.load(Ordering::SeqCst) <= phase {
            return;
        }
    }
}

/// Groups an outbox by destination (FIFO within a destination) and posts
/// one batch per destination.
fn post(sh: &Shared<'_>, st: &mut RankState, cycle: u64, outbox: Outbox) {
    if outbox.is_empty() {
        return;
    }
    let ranks = sh.mailboxes.len();
    let mut per_dest: Vec<Vec<Particle>> = vec![Vec::new(); ranks];
    for (dest, p) in outbox {
        per_dest[dest].push(p);
    }
    for (dest, batch) in per_dest.into_iter().enumerate().filter(|(_, b)| !b.is_empty()) {
        st.sends.push((cycle, dest, batch.len() as u64));
        sh.mailboxes[dest].lock().unwrap().push((st.rank, batch));
    }
}

pub(super) fn run(config: &ExtractionConfig, opts: &ExecOptions) -> Result<ExtractionRun, ExtractError> {
    config.validate()?;
    let config = config.resolved()?;
    let field = config.field.build()?;
    let decomp = config.build_decomposition(&field)?;
    let stage_time = field.stage_time();
    let dims = decomp.dims();
    let ranks = decomp.rank_count();
    let intervals = config.interval_count() as usize;
    let workers = opts.worker_count(ranks);
    let needs_sync = config.strategy == Strategy::Exchange || field.needs_loading();
    let field = RwLock::new(field);
    let dt = config.field.cycle_dt;

    let mut messages = MessageLog::new(ranks, config.total_cycles as usize, intervals);
    let mut sets = Vec::with_capacity(intervals);
    let mut timings = Vec::new();

    for interval in 0..intervals {
        let first = interval as u64 * config.interval;
        let cycles = first..first + config.interval;
        let mut states = (0..ranks)
            .map(|r| RankState::seeded(&decomp, r, config.reduction))
            .collect::<Result<Vec<_>, _>>()?;

        let shared = Shared {
            field: &field,
            decomp: &decomp,
            strategy: config.strategy,
            cycles: cycles.clone(),
            mailboxes: (0..ranks).map(|_| Mutex::new(Vec::new())).collect(),
            barrier: (needs_sync && workers > 1).then(|| Barrier::new(workers)),
            failed_phase: AtomicU64::new(u64::MAX),
            error: Mutex::new(None),
        };

        // Worker w owns ranks w, w + W, w + 2W, ...
        let mut buckets: Vec<Vec<RankState>> = (0..workers).map(|_| Vec::new()).collect();
        for st in states.drain(..) {
            buckets[st.rank % workers].push(st);
        }
        if workers == 1 {
            run_worker(&shared, 0, &mut buckets[0]);
        } else {
            std::thread::scope(|scope| {
                for (w, bucket) in buckets.iter_mut().enumerate() {
                    let sh = &shared;
                    scope.spawn(move || run_worker(sh, w, bucket));
                }
            });
        }
        if let Some(e) = shared.error.into_inner().unwrap() {
            return Err(e);
        }
        let mut states: Vec<RankState> = buckets.into_iter().flatten().collect();
        states.sort_by_key(|s| s.rank);

        for st in &mut states {
            for (cycle, dest, n) in st.sends.drain(..) {
                messages.transfers[cycle as usize][st.rank * ranks + dest] += n;
            }
        }

        let t_start = first as f64 * dt;
        let t_end = cycles.end as f64 * dt;
        let write_cycle = cycles.end - 1;
        let t = Instant::now();
        let interval_sets = match config.strategy {
            Strategy::Bto => finalize_bto(&states, interval as u32, t_start, t_end, dims),
            Strategy::Exchange => finalize_exchange(&states, interval as u32, t_start, t_end, dims, &mut messages.returns[interval]),
        };
        let per_rank = t.elapsed().as_secs_f64() / ranks as f64;
        if opts.record_timing {
            let phase = match config.strategy {
                Strategy::Bto => Phase::Manage,
                Strategy::Exchange => Phase::Communicate,
            };
            for st in &mut states {
                st.record(write_cycle, phase, per_rank, true);
                timings.append(&mut st.timings);
            }
        }
        sets.push(interval_sets);
    }

    let dataset = FlowMapDataset { config, stage_time, sets, messages };
    Ok(ExtractionRun { dataset, timings })
}

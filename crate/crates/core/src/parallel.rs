//! Barrier-synchronized multithreaded cooperative solver.
//!
//! One worker thread per agent plus the calling thread as coordinator.
//! Worker `i` owns column `i` of `X`, `R`, `D` and `AD` and row `i` of the
//! Gram matrix, `α` and `β`; every shared buffer has exactly one writer.
//! The coordinator only reads: it runs the convergence and rank tests,
//! assembles the trace, and tells the workers whether to iterate again.
//!
//! An iteration passes four barriers: the coordinator's decision, after
//! `AD` is assembled, after the Gram rows are assembled, and after the new
//! direction columns are written. All scalars are produced by the same
//! kernels in the same order as the sequential solver, so both agree bit
//! for bit.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::complexity::lu_solve_mults;
use crate::dense::{combine_into, dot, numerical_rank, symmetrize, DenseBlock, LuFactors, SmallMatrix, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solvers::{
    alpha_row, beta_row, check_system, norms_sq, record_block, residual_into, true_residual_norms, Algo, History,
    SolveOptions, SolveTrace, StopRule, Termination,
};

pub const PHASES: usize = 9;

/// One row of the per-iteration task split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phase {
    pub name: &'static str,
    /// What worker `i` produces.
    pub local: &'static str,
    /// Scalar multiplications per worker.
    pub mults: u64,
    /// Other workers read this phase's output, so a barrier follows.
    pub barrier_after: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkPlan {
    pub n: usize,
    pub p: usize,
    pub phases: Vec<Phase>,
}

impl WorkPlan {
    pub fn new(n: usize, p: usize) -> Self {
        let (n64, p64) = (n as u64, p as u64);
        let np = n64 * p64;
        let lu = lu_solve_mults(p);
        let phase = |name, local, mults, barrier_after| Phase {
            name,
            local,
            mults,
            barrier_after,
        };
        WorkPlan {
            n,
            p,
            phases: vec![
                phase("matvec", "column i of AD", n64 * n64, true),
                phase("gram", "row i of DᵀAD", np, true),
                phase("alpha-rhs", "row i of RᵀD", np, false),
                phase("alpha-solve", "row i of alpha", lu, false),
                phase("residual", "column i of R+", np, false),
                phase("iterate", "column i of X+", np, false),
                phase("beta-rhs", "row i of R+ᵀAD", np, false),
                phase("beta-solve", "row i of beta", lu, false),
                phase("direction", "column i of D+", np, true),
            ],
        }
    }

    pub fn per_worker_mults(&self) -> u64 {
        self.phases.iter().map(|ph| ph.mults).sum()
    }

    /// Phase barriers plus the coordinator's decision barrier.
    pub fn barriers_per_iteration(&self) -> usize {
        1 + self.phases.iter().filter(|ph| ph.barrier_after).count()
    }
}

/// Scalar multiplications done by one worker in one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MultCounter {
    /// Indexed like [`WorkPlan::phases`].
    pub phases: [u64; PHASES],
    /// Matvec of an explicit residual refresh, which replaces the
    /// `residual` phase on refresh iterations.
    pub refresh: u64,
}

impl MultCounter {
    pub fn total(&self) -> u64 {
        self.phases.iter().sum::<u64>() + self.refresh
    }
}

/// Trace of a parallel run together with the runtime's own instrumentation.
#[derive(Debug, Clone)]
pub struct ParallelRun<T> {
    pub trace: SolveTrace<T>,
    /// `counters[k][i]`: worker `i` during iteration `k + 1`.
    pub counters: Vec<Vec<MultCounter>>,
    /// Barriers passed by the coordinator in each completed iteration.
    pub barriers: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Failure {
    Singular,
    NotPositiveDefinite,
    Panic(String),
}

#[derive(Debug, Clone, Copy)]
enum Command {
    Iterate { k: usize, recompute: bool },
    Stop,
}

#[derive(Debug, Default)]
struct Report {
    counter: MultCounter,
    /// Time spent at the decision, matvec and Gram barriers.
    wait_ns: u64,
    failure: Option<Failure>,
}

const COORDINATOR: usize = usize::MAX;

/// Shared buffer with a single writer. In debug builds every write is
/// stamped with the writer's barrier epoch, and a read by anyone else
/// asserts that the data predates the reader's most recent barrier.
struct Slot<T> {
    owner: usize,
    data: RwLock<Vec<T>>,
    stamp: AtomicUsize,
}

impl<T> Slot<T> {
    fn new(owner: usize, data: Vec<T>) -> Self {
        Slot {
            owner,
            data: RwLock::new(data),
            stamp: AtomicUsize::new(0),
        }
    }

    fn write(&self, epoch: usize) -> RwLockWriteGuard<'_, Vec<T>> {
        if cfg!(debug_assertions) {
            self.stamp.store(epoch, Ordering::Relaxed);
        }
        self.data.write().unwrap_or_else(PoisonError::into_inner)
    }

    fn read(&self, reader: usize, epoch: usize) -> RwLockReadGuard<'_, Vec<T>> {
        if cfg!(debug_assertions) && reader != self.owner {
            let stamp = self.stamp.load(Ordering::Relaxed);
            assert!(
                stamp < epoch,
                "worker {reader} read data written by worker {} in its current epoch {epoch}",
                self.owner
            );
        }
        self.data.read().unwrap_or_else(PoisonError::into_inner)
    }
}

struct Shared<T> {
    x: Vec<Slot<T>>,
    r: Vec<Slot<T>>,
    d: [Vec<Slot<T>>; 2],
    ad: Vec<Slot<T>>,
    gram: Vec<Slot<T>>,
    reports: Vec<Mutex<Report>>,
    command: Mutex<Command>,
    barrier: Barrier,
    pivot_tol: f64,
}

fn slots<T: Scalar>(p: usize, len: usize) -> Vec<Slot<T>> {
    (0..p).map(|i| Slot::new(i, vec![T::zero(); len])).collect()
}

fn lock<M>(m: &Mutex<M>) -> std::sync::MutexGuard<'_, M> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Barrier wait that advances the caller's epoch and accumulates wait time.
struct Sync<'a> {
    barrier: &'a Barrier,
    epoch: usize,
    waited: Duration,
}

impl<'a> Sync<'a> {
    fn new(barrier: &'a Barrier) -> Self {
        Sync {
            barrier,
            epoch: 0,
            waited: Duration::ZERO,
        }
    }

    fn wait(&mut self) {
        let t = Instant::now();
        self.barrier.wait();
        self.waited += t.elapsed();
        self.epoch += 1;
    }
}

/// Runs cooperative CG with one thread per agent; `workers` must equal
/// `x0.cols()`. Results match [`crate::solvers::ccg_solve`] bit for bit.
pub fn parallel_ccg<T: Scalar>(
    a: &SpdMatrix<T>,
    b: &[T],
    x0: &DenseBlock<T>,
    opts: &SolveOptions<T>,
    workers: usize,
) -> Result<SolveTrace<T>> {
    parallel_ccg_detailed(a, b, x0, opts, workers).map(|run| run.trace)
}

pub fn parallel_ccg_detailed<T: Scalar>(
    a: &SpdMatrix<T>,
    b: &[T],
    x0: &DenseBlock<T>,
    opts: &SolveOptions<T>,
    workers: usize,
) -> Result<ParallelRun<T>> {
    run(a, b, x0, opts, workers, None)
}

fn run<T: Scalar>(
    a: &SpdMatrix<T>,
    b: &[T],
    x0: &DenseBlock<T>,
    opts: &SolveOptions<T>,
    workers: usize,
    fault: Option<(usize, usize)>,
) -> Result<ParallelRun<T>> {
    check_system(a, b, x0)?;
    opts.validate()?;
    let (n, p) = (a.n(), x0.cols());
    if workers != p {
        return Err(Error::InvalidArgument(format!("{workers} workers for {p} agents; one worker per agent is required")));
    }
    if p >= n {
        return Err(Error::InvalidArgument(format!("agent count p = {p} must be below n = {n}")));
    }

    let shared = Shared {
        x: slots(p, n),
        r: slots(p, n),
        d: [slots(p, n), slots(p, n)],
        ad: slots(p, n),
        gram: slots(p, p),
        reports: (0..p).map(|_| Mutex::new(Report::default())).collect(),
        command: Mutex::new(Command::Stop),
        barrier: Barrier::new(p + 1),
        pivot_tol: opts.pivot_tol,
    };

    std::thread::scope(|scope| {
        for i in 0..p {
            let shared = &shared;
            let x_i = x0.col(i).to_vec();
            scope.spawn(move || worker(i, a, b, x_i, shared, fault));
        }
        coordinate(a, b, opts, &shared)
    })
}

fn gather<T: Scalar>(slots: &[Slot<T>], epoch: usize) -> DenseBlock<T> {
    DenseBlock::from_columns(slots.iter().map(|s| s.read(COORDINATOR, epoch).clone()).collect())
        .expect("worker columns share one length")
}

fn coordinate<T: Scalar>(a: &SpdMatrix<T>, b: &[T], opts: &SolveOptions<T>, shared: &Shared<T>) -> Result<ParallelRun<T>> {
    let n = a.n();
    let p = shared.x.len();
    let agents: Vec<usize> = (0..p).collect();
    let max_iters = opts.max_iters_for(n);
    let rank_tol = opts.effective_rank_tol();
    let mut sync = Sync::new(&shared.barrier);
    sync.wait();

    let mut x = gather(&shared.x, sync.epoch);
    let mut r = gather(&shared.r, sync.epoch);
    let mut records = Vec::new();
    let mut counters = Vec::new();
    let mut barriers = Vec::new();
    let mut history = opts.verify.then(History::default);
    let started = Instant::now();
    let mut first_converged: Option<usize> = None;
    let mut k = 0;

    let outcome = (|| -> Result<Termination> {
        records.push(record_block(a, opts, 0, &agents, &x, &r, 0, 0)?);
        loop {
            let d = gather(&shared.d[k % 2], sync.epoch);
            if let Some(h) = &mut history {
                h.x.push(x.clone());
                h.r.push(r.clone());
                h.d.push(d.clone());
            }
            let met: Vec<bool> = norms_sq(&r).iter().map(|v| opts.meets_tol(v)).collect();
            if first_converged.is_none() {
                first_converged = met.iter().position(|m| *m);
            }
            let stop = match opts.stop_rule {
                StopRule::AnyAgent => met.iter().any(|m| *m),
                StopRule::AllAgents => met.iter().all(|m| *m),
            };
            if stop {
                return Ok(Termination::Converged {
                    agent: first_converged.expect("some agent met the tolerance"),
                });
            }
            if k == max_iters {
                return Ok(Termination::MaxIterations);
            }
            let rank = numerical_rank(&d, rank_tol);
            if rank.rank < p {
                return Ok(Termination::RankCollapse { rank: rank.rank });
            }

            let t0 = Instant::now();
            let before = sync.epoch;
            *lock(&shared.command) = Command::Iterate {
                k,
                recompute: opts.residual_policy.recompute_after(k),
            };
            for _ in 0..4 {
                sync.wait();
            }
            barriers.push(sync.epoch - before);

            let mut iteration_counters = Vec::with_capacity(p);
            let mut waits = Vec::with_capacity(p);
            let mut failure = None;
            for rep in &shared.reports {
                let rep = lock(rep);
                iteration_counters.push(rep.counter);
                waits.push(rep.wait_ns);
                if failure.is_none() {
                    failure = rep.failure.clone();
                }
            }
            match failure {
                None => {}
                Some(Failure::Singular) => return Ok(Termination::RankCollapse { rank: rank.rank }),
                Some(Failure::NotPositiveDefinite) => {
                    return Err(Error::NotPositiveDefinite(format!("dᵀAd ≤ 0 at iteration {k}")))
                }
                Some(Failure::Panic(reason)) => return Err(Error::Worker { iteration: k, reason }),
            }

            k += 1;
            x = gather(&shared.x, sync.epoch);
            r = gather(&shared.r, sync.epoch);
            let mults = iteration_counters.iter().map(MultCounter::total).sum();
            let mut rec = record_block(a, opts, k, &agents, &x, &r, mults, t0.elapsed().as_nanos() as u64)?;
            rec.barrier_wait_ns = Some(waits);
            rec.mults_per_worker = Some(iteration_counters.iter().map(MultCounter::total).collect());
            records.push(rec);
            counters.push(iteration_counters);
        }
    })();

    *lock(&shared.command) = Command::Stop;
    sync.wait();
    let status = outcome?;
    let elapsed = started.elapsed();
    Ok(ParallelRun {
        trace: SolveTrace {
            algo: Algo::CcgParallel,
            status,
            records,
            true_residual_norms: true_residual_norms(a, &x, b),
            final_x: x,
            active_agents: agents,
            history,
            elapsed,
        },
        counters,
        barriers,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

/// Runs `f` unless an earlier phase failed; a panic becomes a failure.
fn guarded(failure: &mut Option<Failure>, f: impl FnOnce() -> Option<Failure>) {
    if failure.is_some() {
        return;
    }
    *failure = match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(res) => res,
        Err(payload) => Some(Failure::Panic(panic_message(payload))),
    };
}

fn worker<T: Scalar>(
    i: usize,
    a: &SpdMatrix<T>,
    b: &[T],
    mut x_i: Vec<T>,
    shared: &Shared<T>,
    fault: Option<(usize, usize)>,
) {
    let n = a.n();
    let p = shared.x.len();
    let np = (n * p) as u64;
    let mut sync = Sync::new(&shared.barrier);

    let mut r_i = vec![T::zero(); n];
    residual_into(a, &x_i, b, &mut r_i);
    shared.x[i].write(sync.epoch).clone_from(&x_i);
    shared.r[i].write(sync.epoch).clone_from(&r_i);
    shared.d[0][i].write(sync.epoch).clone_from(&r_i);
    sync.wait();

    let mut x_next = vec![T::zero(); n];
    let mut r_next = vec![T::zero(); n];
    loop {
        let waited_before = sync.waited;
        sync.wait();
        let (k, recompute) = match *lock(&shared.command) {
            Command::Stop => return,
            Command::Iterate { k, recompute } => (k, recompute),
        };
        let (cur, nxt) = (&shared.d[k % 2], &shared.d[(k + 1) % 2]);
        let mut counter = MultCounter::default();
        let mut failure = None;

        guarded(&mut failure, || {
            if fault == Some((i, k)) {
                panic!("injected fault in worker {i}");
            }
            let d_i = cur[i].read(i, sync.epoch);
            a.mul_vec_into(&d_i, &mut shared.ad[i].write(sync.epoch));
            counter.phases[0] = (n * n) as u64;
            None
        });
        sync.wait();

        guarded(&mut failure, || {
            let d_i = cur[i].read(i, sync.epoch);
            let row: Vec<T> = shared.ad.iter().map(|ad_j| dot(&d_i, &ad_j.read(i, sync.epoch))).collect();
            *shared.gram[i].write(sync.epoch) = row;
            counter.phases[1] = np;
            None
        });
        sync.wait();

        guarded(&mut failure, || {
            let rows: Vec<Vec<T>> = shared.gram.iter().map(|g| g.read(i, sync.epoch).clone()).collect();
            let m = symmetrize(&SmallMatrix::from_rows(rows).expect("gram rows have length p"));
            if (0..p).any(|j| !m.get(j, j).is_positive()) {
                return Some(Failure::NotPositiveDefinite);
            }
            let lu = match LuFactors::factor(&m, shared.pivot_tol) {
                Ok(lu) => lu,
                Err(_) => return Some(Failure::Singular),
            };
            let d_guards: Vec<_> = cur.iter().map(|s| s.read(i, sync.epoch)).collect();
            let ad_guards: Vec<_> = shared.ad.iter().map(|s| s.read(i, sync.epoch)).collect();
            let d_cols: Vec<&[T]> = d_guards.iter().map(|g| g.as_slice()).collect();
            let ad_cols: Vec<&[T]> = ad_guards.iter().map(|g| g.as_slice()).collect();

            let alpha = alpha_row(&lu, &r_i, &d_cols);
            counter.phases[2] = np;
            counter.phases[3] = lu_solve_mults(p);
            combine_into(&mut x_next, &x_i, &d_cols, &alpha);
            counter.phases[5] = np;
            if recompute {
                residual_into(a, &x_next, b, &mut r_next);
                counter.refresh = (n * n) as u64;
            } else {
                combine_into(&mut r_next, &r_i, &ad_cols, &alpha);
                counter.phases[4] = np;
            }
            let beta = beta_row(&lu, &r_next, &ad_cols);
            counter.phases[6] = np;
            counter.phases[7] = lu_solve_mults(p);
            combine_into(&mut nxt[i].write(sync.epoch), &r_next, &d_cols, &beta);
            counter.phases[8] = np;

            std::mem::swap(&mut x_i, &mut x_next);
            std::mem::swap(&mut r_i, &mut r_next);
            shared.x[i].write(sync.epoch).clone_from(&x_i);
            shared.r[i].write(sync.epoch).clone_from(&r_i);
            None
        });

        {
            let mut rep = lock(&shared.reports[i]);
            rep.counter = counter;
            rep.failure = failure;
            rep.wait_ns = (sync.waited - waited_before).as_nanos() as u64;
        }
        sync.wait();
    }
}

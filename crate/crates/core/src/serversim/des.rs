//! Event-driven execution of a [`ServiceModel`](super::ServiceModel).
//!
//! All service times are deterministic given batch sizes; the only
//! randomness is the query stream itself, so a run is reproducible from its
//! inputs. Queries are split into sub-batches at the first stage, fused into
//! accelerator batches where the path requires it, and flow through
//! per-server FIFO queues; host-to-host pipeline links are bounded and apply
//! backpressure to the producing thread.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::catalog::ServerSpec;
use crate::loadgen::Query;
use crate::perfmodel::{power_draw, Calibration, SchedConfig, StageLatency, Utilization};

use super::{ServiceModel, SimReport, Stage, StageKind};

/// Bounded intermediate-queue depth per consumer thread.
const QUEUE_CAP: usize = 8;
/// Windows used to sample peak power.
const POWER_BUCKETS: usize = 10;
/// An unfinished query older than this fraction of the run counts as
/// dropped rather than merely in flight.
const DROP_SOJOURN_FRAC: f64 = 0.25;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Time(f64);

impl Eq for Time {}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.partial_cmp(other).expect("event times are never NaN")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    /// Next stream arrival (index tracked by the cursor).
    Arrival,
    /// Server `srv` of `(path, stage)` finished its in-service unit.
    Done { path: usize, stage: usize, srv: usize },
    /// Fusion timeout for `path`; stale once the stamp moves on.
    Flush { path: usize, stamp: u64 },
}

/// A sub-batch (or fused batch) traveling a path.
struct Unit {
    items: u32,
    /// (query index, items of that query inside this unit).
    members: Vec<(u32, u32)>,
    enq_s: f64,
}

struct Server {
    queue: VecDeque<Unit>,
    in_service: Option<Unit>,
    /// Finished unit waiting for downstream queue space (backpressure).
    blocked: Option<Unit>,
}

struct StageState {
    stage: Stage,
    servers: Vec<Server>,
    rr: usize,
    /// Producer servers of the previous stage blocked on this stage's
    /// bounded queues.
    waiters: VecDeque<usize>,
    /// Whether the link feeding this stage is bounded (host-to-host).
    bounded_input: bool,
}

struct PathState {
    stages: Vec<StageState>,
    fuse_at: Option<usize>,
    fused_batch: u32,
    fusion_timeout_s: f64,
    /// (query, items, buffer-entry time).
    buffer: VecDeque<(u32, u32, f64)>,
    buffered_items: u64,
    stamp: u64,
}

struct QueryState {
    arrival: f64,
    outstanding: u32,
    done: Option<f64>,
}

struct Buckets {
    start: f64,
    end: f64,
    core_s: [f64; POWER_BUCKETS],
    bytes: [f64; POWER_BUCKETS],
    gpu_s: [f64; POWER_BUCKETS],
}

impl Buckets {
    /// Spread `cores`/`bytes`/`gpu` busy quantities of the span [t0, t1]
    /// over the sampling windows it overlaps.
    fn add(&mut self, t0: f64, t1: f64, cores: f64, bytes: f64, gpu: f64) {
        let lo = t0.max(self.start);
        let hi = t1.min(self.end);
        if hi <= lo || t1 <= t0 {
            return;
        }
        let span = t1 - t0;
        let width = (self.end - self.start) / POWER_BUCKETS as f64;
        let first = ((lo - self.start) / width) as usize;
        let last = (((hi - self.start) / width) as usize).min(POWER_BUCKETS - 1);
        for b in first.min(POWER_BUCKETS - 1)..=last {
            let b_lo = self.start + b as f64 * width;
            let b_hi = b_lo + width;
            let frac = (hi.min(b_hi) - lo.max(b_lo)).max(0.0) / span;
            self.core_s[b] += cores * frac;
            self.bytes[b] += bytes * frac;
            self.gpu_s[b] += gpu * frac;
        }
    }
}

struct Sim<'a> {
    shape: &'a ServiceModel,
    cal: &'a Calibration,
    heap: BinaryHeap<Reverse<(Time, u64, Ev)>>,
    seq: u64,
    paths: Vec<PathState>,
    queries: Vec<QueryState>,
    cursor: usize,
    credits: Vec<f64>,
    duration: f64,
    buckets: Buckets,
    latencies: Vec<f64>,
    completed_total: u64,
    completed_window: u64,
    breakdown: StageLatency,
}

pub(crate) fn run(
    shape: &ServiceModel,
    server: &ServerSpec,
    cfg: &SchedConfig,
    stream: &[Query],
    duration_s: f64,
    cal: &Calibration,
) -> SimReport {
    let warm_start = duration_s * cal.warmup_frac;
    let paths = shape
        .paths
        .iter()
        .map(|p| PathState {
            stages: p
                .stages
                .iter()
                .enumerate()
                .map(|(i, &stage)| {
                    let bounded = i > 0
                        && matches!(stage.kind, StageKind::Host(_))
                        && matches!(p.stages[i - 1].kind, StageKind::Host(_));
                    StageState {
                        stage,
                        servers: (0..stage.servers())
                            .map(|_| Server {
                                queue: VecDeque::new(),
                                in_service: None,
                                blocked: None,
                            })
                            .collect(),
                        rr: 0,
                        waiters: VecDeque::new(),
                        bounded_input: bounded,
                    }
                })
                .collect(),
            fuse_at: p.fuse_at,
            fused_batch: p.fused_batch,
            fusion_timeout_s: p.fusion_timeout_s,
            buffer: VecDeque::new(),
            buffered_items: 0,
            stamp: 0,
        })
        .collect();

    let mut sim = Sim {
        shape,
        cal,
        heap: BinaryHeap::new(),
        seq: 0,
        paths,
        queries: stream
            .iter()
            .map(|q| QueryState {
                arrival: q.arrival_s,
                outstanding: q.size,
                done: None,
            })
            .collect(),
        cursor: 0,
        credits: vec![0.0; shape.paths.len()],
        duration: duration_s,
        buckets: Buckets {
            start: warm_start,
            end: duration_s,
            core_s: [0.0; POWER_BUCKETS],
            bytes: [0.0; POWER_BUCKETS],
            gpu_s: [0.0; POWER_BUCKETS],
        },
        latencies: Vec::new(),
        completed_total: 0,
        completed_window: 0,
        breakdown: StageLatency::default(),
    };

    if !stream.is_empty() && stream[0].arrival_s <= duration_s {
        sim.schedule(stream[0].arrival_s, Ev::Arrival);
    }
    while let Some(Reverse((Time(t), _, ev))) = sim.heap.pop() {
        if t > duration_s {
            break;
        }
        match ev {
            Ev::Arrival => sim.on_arrival(stream, t),
            Ev::Done { path, stage, srv } => sim.on_done(path, stage, srv, t),
            Ev::Flush { path, stamp } => {
                if sim.paths[path].stamp == stamp && !sim.paths[path].buffer.is_empty() {
                    sim.flush(path, t);
                }
            }
        }
    }
    sim.report(server, cfg, warm_start)
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, t: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((Time(t), self.seq, ev)));
    }

    fn on_arrival(&mut self, stream: &[Query], now: f64) {
        let qid = self.cursor as u32;
        let size = stream[self.cursor].size;
        self.cursor += 1;
        if self.cursor < stream.len() && stream[self.cursor].arrival_s <= self.duration {
            let t = stream[self.cursor].arrival_s;
            self.schedule(t, Ev::Arrival);
        }

        // Weighted deterministic path routing.
        let path = {
            let mut best = 0;
            for (i, p) in self.shape.paths.iter().enumerate() {
                self.credits[i] += p.weight;
                if self.credits[i] > self.credits[best] {
                    best = i;
                }
            }
            self.credits[best] -= 1.0;
            best
        };

        // Split into sub-batches of at most the first stage's batch and
        // round-robin them over its servers.
        let batch = self.paths[path].stages[0].stage.batch;
        let n_sub = size.div_ceil(batch).max(1);
        let base = size / n_sub;
        let extra = size % n_sub;
        for k in 0..n_sub {
            let items = base + u32::from(k < extra);
            if items == 0 {
                continue;
            }
            let unit = Unit {
                items,
                members: vec![(qid, items)],
                enq_s: now,
            };
            let st = &mut self.paths[path].stages[0];
            let srv = st.rr % st.servers.len();
            st.rr = st.rr.wrapping_add(1);
            st.servers[srv].queue.push_back(unit);
            self.kick(path, 0, srv, now);
        }
    }

    /// Start the next queued unit on an idle server; each pop frees a
    /// bounded-queue slot, so pull one blocked upstream producer back in.
    fn kick(&mut self, path: usize, stage: usize, srv: usize, now: f64) {
        let unit = {
            let server = &mut self.paths[path].stages[stage].servers[srv];
            if server.in_service.is_some() || server.blocked.is_some() {
                return;
            }
            match server.queue.pop_front() {
                Some(u) => u,
                None => return,
            }
        };
        self.start_service(path, stage, srv, unit, now);
        if !self.paths[path].stages[stage].bounded_input {
            return;
        }
        let Some(prod) = self.paths[path].stages[stage].waiters.pop_front() else {
            return;
        };
        let parked = self.paths[path].stages[stage - 1].servers[prod]
            .blocked
            .take()
            .expect("waiting producer holds a parked unit");
        self.enqueue(path, stage, srv, parked, now);
        self.kick(path, stage - 1, prod, now);
    }

    fn enqueue(&mut self, path: usize, stage: usize, srv: usize, mut unit: Unit, now: f64) {
        unit.enq_s = now;
        self.paths[path].stages[stage].servers[srv]
            .queue
            .push_back(unit);
        self.kick(path, stage, srv, now);
    }

    fn start_service(&mut self, path: usize, stage: usize, srv: usize, unit: Unit, now: f64) {
        let st = self.paths[path].stages[stage].stage;
        let items = unit.items as f64;
        let svc = st.service_s(items);
        self.breakdown.queueing_s += (now - unit.enq_s).max(0.0);
        match st.kind {
            StageKind::Host(h) => {
                self.breakdown.data_load_s += items * h.gather_s_item;
                self.breakdown.compute_s += items * h.dense_s_item;
                self.breakdown.comm_s += h.dispatch_s;
                self.buckets.add(
                    now,
                    now + svc,
                    items * (h.gather_s_item + h.dense_s_item * h.cores_each as f64)
                        + h.dispatch_s,
                    items * h.gather_bytes_item,
                    0.0,
                );
            }
            StageKind::Pcie(_) => {
                self.breakdown.data_load_s += svc;
            }
            StageKind::Gpu(_) => {
                self.breakdown.compute_s += svc;
                self.buckets.add(now, now + svc, 0.0, 0.0, svc);
            }
        }
        self.paths[path].stages[stage].servers[srv].in_service = Some(unit);
        self.schedule(now + svc, Ev::Done { path, stage, srv });
    }

    fn on_done(&mut self, path: usize, stage: usize, srv: usize, now: f64) {
        let unit = self.paths[path].stages[stage].servers[srv]
            .in_service
            .take()
            .expect("done event matches a unit in service");
        let last = self.paths[path].stages.len() - 1;
        if stage == last {
            for &(qid, items) in &unit.members {
                let q = &mut self.queries[qid as usize];
                q.outstanding -= items;
                if q.outstanding == 0 && q.done.is_none() {
                    q.done = Some(now);
                    self.completed_total += 1;
                    if now >= self.buckets.start {
                        self.completed_window += 1;
                        self.latencies.push(now - q.arrival);
                    }
                }
            }
        } else if self.paths[path].fuse_at == Some(stage + 1) {
            self.fuse_in(path, unit, now);
        } else if let Some(unit) = self.try_forward(path, stage + 1, unit, now) {
            // Every downstream queue is full: park the unit on this thread
            // and stall it until a consumer frees a slot.
            self.paths[path].stages[stage].servers[srv].blocked = Some(unit);
            self.paths[path].stages[stage + 1].waiters.push_back(srv);
            return;
        }
        self.kick(path, stage, srv, now);
    }

    /// Route `unit` into `stage` via the shortest queue; hands the unit back
    /// when the link is bounded and saturated.
    fn try_forward(
        &mut self,
        path: usize,
        stage: usize,
        unit: Unit,
        now: f64,
    ) -> Option<Unit> {
        let (srv, shortest) = {
            let st = &self.paths[path].stages[stage];
            let mut best = 0;
            let mut best_len = usize::MAX;
            for (i, s) in st.servers.iter().enumerate() {
                let len = s.queue.len();
                if len < best_len {
                    best = i;
                    best_len = len;
                }
            }
            (best, best_len)
        };
        if self.paths[path].stages[stage].bounded_input && shortest >= QUEUE_CAP {
            return Some(unit);
        }
        self.enqueue(path, stage, srv, unit, now);
        None
    }

    fn fuse_in(&mut self, path: usize, unit: Unit, now: f64) {
        let was_empty = self.paths[path].buffer.is_empty();
        for &(qid, items) in &unit.members {
            self.paths[path].buffer.push_back((qid, items, now));
            self.paths[path].buffered_items += items as u64;
        }
        if self.paths[path].buffered_items >= self.paths[path].fused_batch as u64 {
            self.flush(path, now);
        } else if was_empty {
            let timeout = self.paths[path].fusion_timeout_s;
            if timeout.is_finite() {
                let stamp = self.paths[path].stamp;
                self.schedule(now + timeout, Ev::Flush { path, stamp });
            }
        }
    }

    /// Emit fused batches: full batches while the buffer holds enough items,
    /// plus the remainder when the timeout fired.
    fn flush(&mut self, path: usize, now: f64) {
        let fused = self.paths[path].fused_batch as u64;
        let fuse_stage = self.paths[path].fuse_at.expect("flush needs a fusion stage");
        let timeout_fire = self.paths[path].buffered_items < fused;
        let mut emitted: Vec<Unit> = Vec::new();
        while self.paths[path].buffered_items >= fused
            || (timeout_fire && self.paths[path].buffered_items > 0)
        {
            let take = fused.min(self.paths[path].buffered_items) as u32;
            let mut members = Vec::new();
            let mut left = take;
            while left > 0 {
                let (qid, items, entered) = *self.paths[path]
                    .buffer
                    .front()
                    .expect("buffered_items matches buffer contents");
                let used = items.min(left);
                members.push((qid, used));
                self.breakdown.comm_s += now - entered;
                if used == items {
                    self.paths[path].buffer.pop_front();
                } else {
                    self.paths[path].buffer.front_mut().expect("nonempty").1 = items - used;
                }
                self.paths[path].buffered_items -= used as u64;
                left -= used;
            }
            emitted.push(Unit {
                items: take,
                members,
                enq_s: now,
            });
        }
        self.paths[path].stamp += 1;
        if !self.paths[path].buffer.is_empty() {
            let timeout = self.paths[path].fusion_timeout_s;
            if timeout.is_finite() {
                let stamp = self.paths[path].stamp;
                self.schedule(now + timeout, Ev::Flush { path, stamp });
            }
        }
        for unit in emitted {
            // Fused stages (PCIe lanes, the GPU) queue without bound; the
            // fusion buffer itself is the regulator.
            let srv = {
                let st = &mut self.paths[path].stages[fuse_stage];
                let srv = st.rr % st.servers.len();
                st.rr = st.rr.wrapping_add(1);
                srv
            };
            self.enqueue(path, fuse_stage, srv, unit, now);
        }
    }

    fn report(self, server: &ServerSpec, cfg: &SchedConfig, warm_start: f64) -> SimReport {
        let window = (self.duration - warm_start).max(1e-9);
        let mut lat = self.latencies;
        lat.sort_by(|a, b| a.partial_cmp(b).expect("latencies are never NaN"));
        let tail = if lat.is_empty() {
            0.0
        } else {
            let rank = crate::fmath::ceil(self.cal.tail_percentile * lat.len() as f64) as usize;
            lat[rank.clamp(1, lat.len()) - 1]
        };
        let mean = if lat.is_empty() {
            0.0
        } else {
            lat.iter().sum::<f64>() / lat.len() as f64
        };

        let cores = self.shape.total_cores as f64;
        let sum = |xs: &[f64; POWER_BUCKETS]| xs.iter().sum::<f64>();
        let util = Utilization {
            cpu: (sum(&self.buckets.core_s) / (cores * window)).clamp(0.0, 1.0),
            mem: (sum(&self.buckets.bytes) / (self.shape.bw_eff * window)).clamp(0.0, 1.0),
            accel: (sum(&self.buckets.gpu_s) / window).clamp(0.0, 1.0),
        };
        let avg_power = power_draw(server, cfg, util, self.cal);
        let bucket_len = window / POWER_BUCKETS as f64;
        let mut peak_power = avg_power;
        for b in 0..POWER_BUCKETS {
            let u = Utilization {
                cpu: (self.buckets.core_s[b] / (cores * bucket_len)).clamp(0.0, 1.0),
                mem: (self.buckets.bytes[b] / (self.shape.bw_eff * bucket_len)).clamp(0.0, 1.0),
                accel: (self.buckets.gpu_s[b] / bucket_len).clamp(0.0, 1.0),
            };
            peak_power = peak_power.max(power_draw(server, cfg, u, self.cal));
        }

        let mut dropped = 0;
        let mut in_flight = 0;
        for q in &self.queries {
            if q.done.is_none() {
                if self.duration - q.arrival > DROP_SOJOURN_FRAC * self.duration {
                    dropped += 1;
                } else {
                    in_flight += 1;
                }
            }
        }

        let per_query = 1.0 / self.completed_window.max(1) as f64;
        SimReport {
            achieved_qps: self.completed_window as f64 / window,
            tail_latency_s: tail,
            mean_latency_s: mean,
            latency_breakdown: StageLatency {
                queueing_s: self.breakdown.queueing_s * per_query,
                data_load_s: self.breakdown.data_load_s * per_query,
                compute_s: self.breakdown.compute_s * per_query,
                comm_s: self.breakdown.comm_s * per_query,
            },
            utilization: util,
            avg_power_w: avg_power,
            peak_power_w: peak_power,
            dropped,
            arrivals: self.queries.len() as u64,
            completed: self.completed_total,
            in_flight,
        }
    }
}

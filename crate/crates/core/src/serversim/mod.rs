//! Single-server execution model: a discrete-event simulator of one server
//! running a query stream under a (strategy, SchedConfig), plus a closed-form
//! deterministic twin used for oracle tests and fast search.
//!
//! Both modes consume the same [`ServiceModel`]: an explicit pipeline of
//! stages (host thread pools, per-thread PCIe lanes, the shared accelerator)
//! with per-item service rates derived from the cost model. The simulator
//! adds stochastic arrivals, queueing, batching/fusion, and backpressure on
//! top of those rates; the closed form replaces them with a deterministic
//! utilization-based queueing term. Memory bandwidth is shared statically:
//! every concurrent gather thread in the configuration owns an equal slice of
//! the effective bandwidth, capped by the per-thread gather ceiling.

mod des;

use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::{ModelSpec, ServerSpec};
use crate::fmath;
use crate::loadgen::{gen_query_stream, Query};
use crate::partitioner::PartitionPlan;
use crate::perfmodel::{
    dense_latency, effective_host_bandwidth, per_core_gather_cap, power_draw, Calibration,
    ConfigError, LeftoverStrategy, PoolConfig, SchedConfig, StageLatency, Strategy, Utilization,
};

/// Measured outcome of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub achieved_qps: f64,
    /// Latency at the configured tail percentile, seconds.
    pub tail_latency_s: f64,
    pub mean_latency_s: f64,
    /// Aggregate per-query stage breakdown (averages over completions).
    pub latency_breakdown: StageLatency,
    pub utilization: Utilization,
    pub avg_power_w: f64,
    pub peak_power_w: f64,
    /// Queries abandoned in queues/buffers (stuck well past arrival).
    pub dropped: u64,
    pub arrivals: u64,
    pub completed: u64,
    pub in_flight: u64,
}

/// Closed-form evaluation of one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticReport {
    pub tail_latency_s: f64,
    /// Throughput actually sustainable at the offered rate.
    pub qps: f64,
    pub power_w: f64,
    pub utilization: Utilization,
    /// Offered load meets or exceeds the bottleneck capacity.
    pub saturated: bool,
    /// Saturation throughput of the configuration.
    pub capacity_qps: f64,
}

/// The latency-bounded throughput search result: the highest sustainable
/// rate whose tail latency stays under the SLA (and peak power under the
/// budget, when bounded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedQps {
    pub qps: f64,
    pub peak_power_w: f64,
    /// Even minimal load violates the SLA or power budget.
    pub violation: bool,
}

/// Which execution backend evaluates an operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluator {
    /// Deterministic closed form.
    Analytic,
    /// Discrete-event simulation of `duration_s` seconds per probe.
    Des { duration_s: f64 },
}

/// Mean of the truncated-lognormal query-size distribution, items.
pub fn mean_query_size(cal: &Calibration) -> f64 {
    let (mu, sg) = (cal.size_ln_mu, cal.size_ln_sigma);
    let (a, b) = (cal.size_min as f64, cal.size_max as f64);
    let phi = |x: f64| 0.5 * (1.0 + fmath::erf(x / core::f64::consts::SQRT_2));
    let za = (fmath::ln(a) - mu) / sg;
    let zb = (fmath::ln(b) - mu) / sg;
    let mass = phi(zb) - phi(za);
    fmath::exp(mu + sg * sg / 2.0) * (phi(zb - sg) - phi(za - sg)) / mass
}

// ---------------------------------------------------------------------------
// Pipeline shape shared by both evaluation modes.
// ---------------------------------------------------------------------------

/// One host thread pool stage: `threads` workers, each spending
/// `gather_s_item + dense_s_item` seconds per item plus a fixed dispatch cost
/// per sub-batch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HostPoolStage {
    pub threads: u32,
    pub cores_each: u32,
    pub gather_s_item: f64,
    pub gather_bytes_item: f64,
    pub dense_s_item: f64,
    pub dispatch_s: f64,
}

/// Per-accelerator-thread PCIe transfer lanes (static bandwidth share).
#[derive(Debug, Clone, Copy)]
pub(crate) struct PcieStage {
    pub lanes: u32,
    pub load_s_item: f64,
}

/// The single shared accelerator compute server (MPS time-slicing).
#[derive(Debug, Clone, Copy)]
pub(crate) struct GpuStage {
    pub compute_s_item: f64,
    /// On-device embedding gather seconds per item (hot rows from HBM).
    pub hbm_s_item: f64,
    /// Kernel-launch overhead charged once per fused batch.
    pub batch_overhead_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum StageKind {
    Host(HostPoolStage),
    Pcie(PcieStage),
    Gpu(GpuStage),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Stage {
    pub kind: StageKind,
    /// Preferred batch at this stage: sub-batch cap for host pools, fused
    /// batch for accelerator stages.
    pub batch: u32,
}

impl Stage {
    /// Service seconds for a batch of `items` on one server of this stage.
    pub fn service_s(&self, items: f64) -> f64 {
        match self.kind {
            StageKind::Host(h) => items * (h.gather_s_item + h.dense_s_item) + h.dispatch_s,
            StageKind::Pcie(p) => items * p.load_s_item,
            StageKind::Gpu(g) => items * (g.compute_s_item + g.hbm_s_item) + g.batch_overhead_s,
        }
    }

    pub fn servers(&self) -> u32 {
        match self.kind {
            StageKind::Host(h) => h.threads,
            StageKind::Pcie(p) => p.lanes,
            StageKind::Gpu(_) => 1,
        }
    }

    /// Saturation throughput in items/s at the preferred batch.
    pub fn capacity_items(&self) -> f64 {
        let b = self.batch as f64;
        self.servers() as f64 * b / self.service_s(b)
    }

    /// Busy core-seconds one item costs on this stage (host pools only).
    fn core_s_item(&self) -> f64 {
        match self.kind {
            StageKind::Host(h) => {
                h.gather_s_item
                    + h.dense_s_item * h.cores_each as f64
                    + h.dispatch_s / self.batch as f64
            }
            _ => 0.0,
        }
    }

    fn mem_bytes_item(&self) -> f64 {
        match self.kind {
            StageKind::Host(h) => h.gather_bytes_item,
            _ => 0.0,
        }
    }

    fn gpu_s_item(&self) -> f64 {
        match self.kind {
            StageKind::Gpu(g) => {
                g.compute_s_item + g.hbm_s_item + g.batch_overhead_s / self.batch as f64
            }
            _ => 0.0,
        }
    }
}

/// One routing path through the server (HotDense configurations run two in
/// parallel: the accelerator path and the leftover-core path).
#[derive(Debug, Clone)]
pub(crate) struct PathModel {
    pub stages: Vec<Stage>,
    /// Stage whose input is the query-fusion buffer, if any.
    pub fuse_at: Option<usize>,
    pub fused_batch: u32,
    pub fusion_timeout_s: f64,
    /// Fraction of arriving queries routed here.
    pub weight: f64,
    pub capacity_items: f64,
}

impl PathModel {
    fn finish(mut self) -> PathModel {
        self.capacity_items = self
            .stages
            .iter()
            .map(Stage::capacity_items)
            .fold(f64::INFINITY, f64::min);
        self
    }
}

/// The full executable shape of one (server, model, plan, cfg) binding.
#[derive(Debug, Clone)]
pub(crate) struct ServiceModel {
    pub paths: Vec<PathModel>,
    pub mean_size: f64,
    pub total_cores: u32,
    /// Effective host memory bandwidth, bytes/s (power-model denominator).
    pub bw_eff: f64,
}

impl ServiceModel {
    pub fn capacity_items(&self) -> f64 {
        self.paths.iter().map(|p| p.capacity_items).sum()
    }

    pub fn capacity_qps(&self) -> f64 {
        self.capacity_items() / self.mean_size
    }
}

/// Count of concurrent gather threads across the whole configuration; each
/// owns an equal static slice of effective bandwidth.
fn gather_threads(cfg: &SchedConfig) -> u32 {
    match cfg.strategy {
        Strategy::ModelBased => cfg.host.threads,
        Strategy::SdPipelineHostOnly => cfg.sparse_host.map(|p| p.threads).unwrap_or(0),
        Strategy::SdPipelineHostAccel => cfg.host.threads,
        Strategy::HotDenseOnAccel(leftover) => {
            let helpers = cfg.accel.map(|a| a.co_located).unwrap_or(0);
            helpers
                + match leftover {
                    LeftoverStrategy::ModelBased => cfg.host.threads,
                    LeftoverStrategy::SdPipelineHostOnly => {
                        cfg.sparse_host.map(|p| p.threads).unwrap_or(0)
                    }
                }
        }
    }
}

fn dense_s_item(model: &ModelSpec, server: &ServerSpec, pool: PoolConfig, cal: &Calibration) -> f64 {
    let probe = SchedConfig {
        strategy: Strategy::ModelBased,
        host: pool,
        sparse_host: None,
        accel: None,
    };
    dense_latency(model, server, &probe, 1, cal)
}

/// Per-thread bandwidth share and per-core issue ceiling for gather work.
#[derive(Clone, Copy)]
struct GatherRates {
    share: f64,
    per_core_cap: f64,
}

fn host_stage(
    pool: PoolConfig,
    gather_bytes_item: f64,
    gather: GatherRates,
    dense_s: f64,
    cal: &Calibration,
) -> Stage {
    // A thread gathers with all its cores, so its realizable rate is the
    // bandwidth share capped at cores x the per-core issue ceiling.
    let core_cap = pool.cores_per_thread as f64 * gather.per_core_cap;
    let rate = if gather.share < core_cap {
        gather.share
    } else {
        core_cap
    };
    Stage {
        kind: StageKind::Host(HostPoolStage {
            threads: pool.threads,
            cores_each: pool.cores_per_thread,
            gather_s_item: if gather_bytes_item > 0.0 {
                gather_bytes_item / rate
            } else {
                0.0
            },
            gather_bytes_item,
            dense_s_item: dense_s,
            dispatch_s: cal.dispatch_overhead_s,
        }),
        batch: pool.batch,
    }
}

/// Build the pipeline shape. Fails if the config is invalid for the server
/// or inconsistent with the partition plan.
pub(crate) fn build_service_model(
    server: &ServerSpec,
    model: &ModelSpec,
    plan: &PartitionPlan,
    cfg: &SchedConfig,
    cal: &Calibration,
) -> Result<ServiceModel, ConfigError> {
    cfg.validate(server)?;
    let sb = model.sparse_bytes_per_item(cal.elem_bytes);
    let row_bytes = (model.emb_dim * cal.elem_bytes) as f64;
    let lookups = model.table_lookup_mids();
    let g_threads = gather_threads(cfg).max(1);
    // Concurrent random-access streams contend in DRAM; fewer, wider gather
    // threads keep more of the raw bandwidth usable.
    let bw_eff = effective_host_bandwidth(model, server)
        / (1.0 + cal.bw_thread_penalty * g_threads as f64);
    let gather_share = GatherRates {
        share: bw_eff / g_threads as f64,
        per_core_cap: per_core_gather_cap(model, server, cal),
    };

    let accel_stages = |input_bytes_item: f64,
                        gpu_ops: u32,
                        hbm_bytes_item: f64|
     -> Result<(Stage, Stage), ConfigError> {
        let accel_cfg = cfg.accel.expect("validated accel strategy has a config");
        let accel = server.accel.as_ref().ok_or_else(|| ConfigError {
            reason: alloc::format!("server `{}` has no accelerator", server.name),
        })?;
        if plan.co_location != accel_cfg.co_located {
            return Err(ConfigError {
                reason: alloc::format!(
                    "partition assumes co-location {} but config runs {}",
                    plan.co_location,
                    accel_cfg.co_located
                ),
            });
        }
        let m = accel_cfg.co_located;
        let lane_rate = accel.pcie_gbps * 1e9 * cal.pcie_efficiency / m as f64;
        let pcie = Stage {
            kind: StageKind::Pcie(PcieStage {
                lanes: m,
                load_s_item: input_bytes_item / lane_rate,
            }),
            batch: accel_cfg.fused_batch,
        };
        let gpu = Stage {
            kind: StageKind::Gpu(GpuStage {
                compute_s_item: model.dense_flops_per_item()
                    / (accel.peak_tflops * 1e12 * cal.mps_efficiency(m)),
                hbm_s_item: hbm_bytes_item / (accel.hbm_bw_gbps * 1e9),
                batch_overhead_s: gpu_ops as f64 * cal.launch_overhead_s,
            }),
            batch: accel_cfg.fused_batch,
        };
        Ok((pcie, gpu))
    };

    let host_path = |stages: Vec<Stage>| PathModel {
        stages,
        fuse_at: None,
        fused_batch: 0,
        fusion_timeout_s: f64::INFINITY,
        weight: 1.0,
        capacity_items: 0.0,
    };

    let mut paths: Vec<PathModel> = Vec::new();
    match cfg.strategy {
        Strategy::ModelBased => {
            let dense = dense_s_item(model, server, cfg.host, cal);
            paths.push(host_path(vec![host_stage(cfg.host, sb, gather_share, dense, cal)]).finish());
        }
        Strategy::SdPipelineHostOnly => {
            let sparse = cfg.sparse_host.expect("validated S-D host config");
            let dense = dense_s_item(model, server, cfg.host, cal);
            paths.push(
                host_path(vec![
                    host_stage(sparse, sb, gather_share, 0.0, cal),
                    host_stage(cfg.host, 0.0, gather_share, dense, cal),
                ])
                .finish(),
            );
        }
        Strategy::SdPipelineHostAccel => {
            let accel_cfg = cfg.accel.expect("validated accel config");
            // Host gathers and pools; the pooled vectors plus dense features
            // ship over PCIe; the device runs only the dense operators.
            let pooled_bytes = if model.has_pooling {
                model.num_emb_tables as f64 * row_bytes
            } else {
                lookups.iter().sum::<f64>() * row_bytes
            };
            let input = pooled_bytes + model.dense_feature_bytes(cal.elem_bytes);
            let (pcie, gpu) = accel_stages(input, model.op_count().saturating_sub(1), 0.0)?;
            paths.push(PathModel {
                stages: vec![host_stage(cfg.host, sb, gather_share, 0.0, cal), pcie, gpu],
                fuse_at: Some(1),
                fused_batch: accel_cfg.fused_batch,
                fusion_timeout_s: accel_cfg.fusion_timeout_s,
                weight: 1.0,
                capacity_items: 0.0,
            }
            .finish());
        }
        Strategy::HotDenseOnAccel(leftover) => {
            let accel_cfg = cfg.accel.expect("validated accel config");
            if plan.hot_hit_rates.len() != lookups.len() {
                return Err(ConfigError {
                    reason: alloc::format!(
                        "partition covers {} tables but the model has {}",
                        plan.hot_hit_rates.len(),
                        lookups.len()
                    ),
                });
            }
            // Helper threads gather the cold (missed) rows host-side; pooling
            // models ship one partial sum per table that saw a miss, others
            // ship the raw missed rows.
            let mut miss_gather = 0.0;
            let mut hot_hbm = 0.0;
            let mut ship_miss = 0.0;
            for (&l, &hit) in lookups.iter().zip(&plan.hot_hit_rates) {
                miss_gather += (1.0 - hit) * l * row_bytes;
                hot_hbm += hit * l * row_bytes;
                ship_miss += if model.has_pooling {
                    (1.0 - fmath::powf(hit, l)) * row_bytes
                } else {
                    (1.0 - hit) * l * row_bytes
                };
            }
            let input = model.indices_per_item() * cal.index_bytes as f64
                + model.dense_feature_bytes(cal.elem_bytes)
                + ship_miss;
            let (pcie, gpu) = accel_stages(input, model.op_count(), hot_hbm)?;
            let helpers = PoolConfig {
                threads: accel_cfg.co_located,
                cores_per_thread: 1,
                batch: accel_cfg.fused_batch,
            };
            paths.push(PathModel {
                stages: vec![
                    host_stage(helpers, miss_gather, gather_share, 0.0, cal),
                    pcie,
                    gpu,
                ],
                fuse_at: Some(1),
                fused_batch: accel_cfg.fused_batch,
                fusion_timeout_s: accel_cfg.fusion_timeout_s,
                weight: 1.0,
                capacity_items: 0.0,
            }
            .finish());
            match leftover {
                LeftoverStrategy::ModelBased => {
                    let dense = dense_s_item(model, server, cfg.host, cal);
                    paths.push(
                        host_path(vec![host_stage(cfg.host, sb, gather_share, dense, cal)])
                            .finish(),
                    );
                }
                LeftoverStrategy::SdPipelineHostOnly => {
                    let sparse = cfg.sparse_host.ok_or_else(|| ConfigError {
                        reason: alloc::string::String::from(
                            "leftover S-D pipeline needs a sparse pool",
                        ),
                    })?;
                    let dense = dense_s_item(model, server, cfg.host, cal);
                    paths.push(
                        host_path(vec![
                            host_stage(sparse, sb, gather_share, 0.0, cal),
                            host_stage(cfg.host, 0.0, gather_share, dense, cal),
                        ])
                        .finish(),
                    );
                }
            }
        }
    }

    let total: f64 = paths.iter().map(|p| p.capacity_items).sum();
    if !(total > 0.0) {
        return Err(ConfigError {
            reason: alloc::string::String::from("configuration has zero throughput"),
        });
    }
    for p in &mut paths {
        p.weight = p.capacity_items / total;
    }
    Ok(ServiceModel {
        paths,
        mean_size: mean_query_size(cal),
        total_cores: server.cpu.cores,
        bw_eff,
    })
}

// ---------------------------------------------------------------------------
// Closed-form mode.
// ---------------------------------------------------------------------------

/// Zero-load latency of a mean-size query along `path`, including the
/// expected fusion wait at the given path arrival rate (items/s).
fn path_base_latency(path: &PathModel, mean_size: f64, items_rate: f64) -> f64 {
    let mut total = 0.0;
    let first = &path.stages[0];
    let n_sub = ceil_div_f(mean_size, first.batch as f64);
    let sub_size = mean_size / n_sub;
    for (i, stage) in path.stages.iter().enumerate() {
        let fused = path.fuse_at.map(|f| i >= f).unwrap_or(false);
        if fused {
            let b = mean_size.min(path.fused_batch as f64);
            total += stage.service_s(b);
        } else {
            let rounds = ceil_div_f(n_sub, stage.servers() as f64);
            total += rounds * stage.service_s(sub_size);
        }
    }
    if path.fuse_at.is_some() {
        let fill = path.fused_batch as f64 / (2.0 * items_rate.max(1e-9));
        total += if path.fusion_timeout_s < fill {
            path.fusion_timeout_s
        } else {
            fill
        };
    }
    total
}

fn ceil_div_f(a: f64, b: f64) -> f64 {
    fmath::ceil(a / b).max(1.0)
}

/// Deterministic closed-form evaluation at `offered_qps`.
///
/// Tail latency is the zero-load critical path plus a utilization queueing
/// term rho/(1-rho) scaled by the bottleneck service quantum; it diverges as
/// the offered load approaches capacity and the report is flagged saturated
/// at or beyond it.
pub fn analytic_eval(
    server: &ServerSpec,
    model: &ModelSpec,
    plan: &PartitionPlan,
    cfg: &SchedConfig,
    offered_qps: f64,
    cal: &Calibration,
) -> Result<AnalyticReport, ConfigError> {
    let shape = build_service_model(server, model, plan, cfg, cal)?;
    Ok(analytic_from_shape(&shape, server, cfg, offered_qps, cal))
}

pub(crate) fn analytic_from_shape(
    shape: &ServiceModel,
    server: &ServerSpec,
    cfg: &SchedConfig,
    offered_qps: f64,
    cal: &Calibration,
) -> AnalyticReport {
    let offered_items = offered_qps * shape.mean_size;
    let mut tail: f64 = 0.0;
    let mut saturated = false;
    let mut core_s = 0.0;
    let mut bytes = 0.0;
    let mut gpu_s = 0.0;
    for path in &shape.paths {
        let items = offered_items * path.weight;
        let rho = items / path.capacity_items;
        let served = if rho < 1.0 { items } else { path.capacity_items };
        for stage in &path.stages {
            core_s += served * stage.core_s_item();
            bytes += served * stage.mem_bytes_item();
            gpu_s += served * stage.gpu_s_item();
        }
        let base = path_base_latency(path, shape.mean_size, items);
        if rho >= 1.0 {
            saturated = true;
            tail = f64::INFINITY;
            continue;
        }
        let bottleneck = path
            .stages
            .iter()
            .min_by(|a, b| {
                a.capacity_items()
                    .partial_cmp(&b.capacity_items())
                    .expect("finite capacities")
            })
            .expect("paths have stages");
        let quantum = bottleneck.service_s(bottleneck.batch as f64);
        // Parallel servers at the bottleneck pool absorb bursts; scale the
        // single-server growth term down by sqrt(servers) (square-root
        // staffing heuristic, cross-validated against the event simulator).
        let pooling = fmath::sqrt(bottleneck.servers() as f64);
        let t = base + rho / (1.0 - rho) * quantum * cal.queue_factor / pooling;
        if t > tail {
            tail = t;
        }
    }
    let capacity_qps = shape.capacity_qps();
    let qps = if offered_qps < capacity_qps {
        offered_qps
    } else {
        capacity_qps
    };
    let utilization = Utilization {
        cpu: (core_s / shape.total_cores as f64).clamp(0.0, 1.0),
        mem: (bytes / shape.bw_eff).clamp(0.0, 1.0),
        accel: gpu_s.clamp(0.0, 1.0),
    };
    AnalyticReport {
        tail_latency_s: tail,
        qps,
        power_w: power_draw(server, cfg, utilization, cal),
        utilization,
        saturated,
        capacity_qps,
    }
}

// ---------------------------------------------------------------------------
// Event-driven mode.
// ---------------------------------------------------------------------------

/// Simulate `stream` on the configured server for `duration_s` seconds.
///
/// Service times are deterministic given batch sizes; all randomness lives in
/// the query stream, so identical inputs reproduce the report exactly.
pub fn simulate(
    server: &ServerSpec,
    model: &ModelSpec,
    plan: &PartitionPlan,
    cfg: &SchedConfig,
    stream: &[Query],
    duration_s: f64,
    _seed: u64,
    cal: &Calibration,
) -> Result<SimReport, ConfigError> {
    assert!(!stream.is_empty(), "simulate requires a nonempty stream");
    assert!(duration_s > 0.0);
    let shape = build_service_model(server, model, plan, cfg, cal)?;
    Ok(des::run(&shape, server, cfg, stream, duration_s, cal))
}

// ---------------------------------------------------------------------------
// Latency-bounded throughput search.
// ---------------------------------------------------------------------------

/// Find the highest offered rate whose tail latency stays strictly under
/// `sla_s` (and peak power strictly under `power_budget_w`, when given):
/// geometric halving to locate a feasible floor, then bisection.
#[allow(clippy::too_many_arguments)]
pub fn measure_latency_bounded_qps(
    server: &ServerSpec,
    model: &ModelSpec,
    plan: &PartitionPlan,
    cfg: &SchedConfig,
    sla_s: f64,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> Result<BoundedQps, ConfigError> {
    assert!(sla_s > 0.0);
    let shape = build_service_model(server, model, plan, cfg, cal)?;
    let budget = power_budget_w.unwrap_or(f64::INFINITY);

    let probe = |rate: f64| -> (bool, f64) {
        match evaluator {
            Evaluator::Analytic => {
                let r = analytic_from_shape(&shape, server, cfg, rate, cal);
                (
                    !r.saturated && r.tail_latency_s < sla_s && r.power_w < budget,
                    r.power_w,
                )
            }
            Evaluator::Des { duration_s } => {
                let stream = gen_query_stream(rate, duration_s, model, seed, cal);
                if stream.is_empty() {
                    return (false, 0.0);
                }
                let rep = des::run(&shape, server, cfg, &stream, duration_s, cal);
                let ok = rep.completed > 0
                    && rep.tail_latency_s < sla_s
                    && rep.peak_power_w < budget
                    && rep.achieved_qps >= 0.9 * rate;
                (ok, rep.peak_power_w)
            }
        }
    };

    // Locate a feasible floor by halving down from the saturation estimate.
    let cap = shape.capacity_qps();
    let mut lo = cap;
    let mut feasible = false;
    for _ in 0..24 {
        let (ok, _) = probe(lo);
        if ok {
            feasible = true;
            break;
        }
        lo /= 2.0;
    }
    if !feasible {
        return Ok(BoundedQps {
            qps: 0.0,
            peak_power_w: probe(0.0_f64.max(cap / 1e6)).1,
            violation: true,
        });
    }
    // Expand upward while feasible (covers the unbounded-SLA case), then
    // bisect the bracket.
    let mut hi = lo * 2.0;
    for _ in 0..16 {
        let (ok, _) = probe(hi);
        if !ok {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..cal.search_iters {
        if (hi - lo) < cal.bracket_tol * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (ok, _) = probe(mid);
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, peak_power) = probe(lo);
    Ok(BoundedQps {
        qps: lo,
        peak_power_w: peak_power,
        violation: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalogs, SizeClass};
    use crate::partitioner::{build_access_profile, partition_model};
    use crate::perfmodel::AccelConfig;

    fn cpu_plan(model_name: &str, server_name: &str) -> (PartitionPlan, Calibration) {
        let c = Catalogs::builtin();
        let m = c.find_model(model_name).unwrap();
        let s = c.find_server(server_name).unwrap();
        let cal = Calibration::default();
        let profile = build_access_profile(m, SizeClass::Prod, cal.zipf_exponent, 7);
        (
            partition_model(m, s, SizeClass::Prod, 1, &profile, cal.elem_bytes).unwrap(),
            cal,
        )
    }

    fn model_based(m: u32, o: u32, d: u32) -> SchedConfig {
        SchedConfig {
            strategy: Strategy::ModelBased,
            host: PoolConfig {
                threads: m,
                cores_per_thread: o,
                batch: d,
            },
            sparse_host: None,
            accel: None,
        }
    }

    #[test]
    fn mean_size_matches_sampled_stream() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let cal = Calibration::default();
        let analytic = mean_query_size(&cal);
        let stream = gen_query_stream(2000.0, 10.0, m, 3, &cal);
        let sampled =
            stream.iter().map(|q| q.size as f64).sum::<f64>() / stream.len() as f64;
        assert!(
            (analytic - sampled).abs() / sampled < 0.02,
            "analytic {analytic} vs sampled {sampled}"
        );
        assert!((50.0..200.0).contains(&analytic));
    }

    #[test]
    fn analytic_zero_load_tail_is_service_time() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = model_based(10, 2, 32);
        let shape = build_service_model(s, m, &plan, &cfg, &cal).unwrap();
        let r = analytic_eval(s, m, &plan, &cfg, 1e-12, &cal).unwrap();
        let expected = path_base_latency(&shape.paths[0], shape.mean_size, 1e-12 * shape.mean_size);
        assert!((r.tail_latency_s - expected).abs() < 1e-15);
        assert!(!r.saturated);
    }

    #[test]
    fn analytic_tail_monotone_and_saturates() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = model_based(10, 2, 32);
        let cap = build_service_model(s, m, &plan, &cfg, &cal)
            .unwrap()
            .capacity_qps();
        let mut last = 0.0;
        for f in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let r = analytic_eval(s, m, &plan, &cfg, cap * f, &cal).unwrap();
            assert!(r.tail_latency_s >= last, "tail fell at {f}");
            assert!(!r.saturated);
            last = r.tail_latency_s;
        }
        let over = analytic_eval(s, m, &plan, &cfg, cap * 1.01, &cal).unwrap();
        assert!(over.saturated);
        assert!(over.tail_latency_s.is_infinite());
        assert!((over.qps - cap).abs() / cap < 1e-9);
    }

    #[test]
    fn unbounded_sla_reaches_saturation_throughput() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = model_based(10, 2, 32);
        let cap = build_service_model(s, m, &plan, &cfg, &cal)
            .unwrap()
            .capacity_qps();
        let r = measure_latency_bounded_qps(
            s,
            m,
            &plan,
            &cfg,
            f64::INFINITY,
            None,
            Evaluator::Analytic,
            1,
            &cal,
        )
        .unwrap();
        assert!(!r.violation);
        assert!(
            (r.qps - cap).abs() / cap < 0.02,
            "qps {} vs capacity {cap}",
            r.qps
        );
    }

    #[test]
    fn impossible_sla_reports_violation() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = model_based(10, 2, 32);
        let r = measure_latency_bounded_qps(
            s,
            m,
            &plan,
            &cfg,
            1e-7,
            None,
            Evaluator::Analytic,
            1,
            &cal,
        )
        .unwrap();
        assert!(r.violation);
        assert_eq!(r.qps, 0.0);
    }

    #[test]
    fn op_parallel_beats_deeprecsys_split_under_sla() {
        // 10 threads x 2 workers vs 20 x 1 on the same 20-core host: the
        // op-parallel layout must sustain at least the thread-only QPS under
        // the 20 ms SLA.
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let sla = 0.020;
        let q10x2 = measure_latency_bounded_qps(
            s,
            m,
            &plan,
            &model_based(10, 2, 32),
            sla,
            None,
            Evaluator::Analytic,
            1,
            &cal,
        )
        .unwrap();
        let q20x1 = measure_latency_bounded_qps(
            s,
            m,
            &plan,
            &model_based(20, 1, 32),
            sla,
            None,
            Evaluator::Analytic,
            1,
            &cal,
        )
        .unwrap();
        assert!(
            q10x2.qps >= q20x1.qps,
            "10x2 {} < 20x1 {}",
            q10x2.qps,
            q20x1.qps
        );
        assert!(q10x2.qps > 0.0);
    }

    #[test]
    fn sd_pipeline_splits_capacity_across_stages() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = SchedConfig {
            strategy: Strategy::SdPipelineHostOnly,
            host: PoolConfig {
                threads: 8,
                cores_per_thread: 1,
                batch: 64,
            },
            sparse_host: Some(PoolConfig {
                threads: 12,
                cores_per_thread: 1,
                batch: 64,
            }),
            accel: None,
        };
        let shape = build_service_model(s, m, &plan, &cfg, &cal).unwrap();
        assert_eq!(shape.paths.len(), 1);
        assert_eq!(shape.paths[0].stages.len(), 2);
        let caps: Vec<f64> = shape.paths[0].stages.iter().map(Stage::capacity_items).collect();
        assert!((shape.paths[0].capacity_items - caps[0].min(caps[1])).abs() < 1e-9);
    }

    #[test]
    fn hot_dense_runs_two_paths_and_beats_leftover_alone() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc2").unwrap();
        let s = c.find_server("t7").unwrap();
        let cal = Calibration::default();
        let profile = build_access_profile(m, SizeClass::Prod, cal.zipf_exponent, 7);
        let plan = partition_model(m, s, SizeClass::Prod, 1, &profile, cal.elem_bytes).unwrap();
        let cfg = SchedConfig {
            strategy: Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased),
            host: PoolConfig {
                threads: 9,
                cores_per_thread: 2,
                batch: 64,
            },
            sparse_host: None,
            accel: Some(AccelConfig {
                co_located: 1,
                fused_batch: 512,
                fusion_timeout_s: 12.5e-3,
            }),
        };
        let shape = build_service_model(s, m, &plan, &cfg, &cal).unwrap();
        assert_eq!(shape.paths.len(), 2);
        let leftover_only = model_based(9, 2, 64);
        let alone = build_service_model(s, m, &plan.clone(), &leftover_only, &cal);
        // The leftover pool alone (as plain ModelBased on 18 free cores)
        // cannot match the combined capacity.
        let combined = shape.capacity_qps();
        let solo = alone.unwrap().capacity_qps();
        assert!(combined > solo, "combined {combined} <= solo {solo}");
        let w: f64 = shape.paths.iter().map(|p| p.weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_and_config_co_location_must_agree() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc2").unwrap();
        let s = c.find_server("t7").unwrap();
        let cal = Calibration::default();
        let profile = build_access_profile(m, SizeClass::Prod, cal.zipf_exponent, 7);
        let plan = partition_model(m, s, SizeClass::Prod, 2, &profile, cal.elem_bytes).unwrap();
        let cfg = SchedConfig {
            strategy: Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased),
            host: PoolConfig {
                threads: 4,
                cores_per_thread: 2,
                batch: 64,
            },
            sparse_host: None,
            accel: Some(AccelConfig {
                co_located: 1,
                fused_batch: 256,
                fusion_timeout_s: 12.5e-3,
            }),
        };
        assert!(build_service_model(s, m, &plan, &cfg, &cal).is_err());
    }

    #[test]
    fn power_budget_caps_the_rate() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let (plan, cal) = cpu_plan("rmc1", "t2");
        let cfg = model_based(10, 2, 32);
        let unbounded = measure_latency_bounded_qps(
            s, m, &plan, &cfg, 0.020, None, Evaluator::Analytic, 1, &cal,
        )
        .unwrap();
        let bounded = measure_latency_bounded_qps(
            s,
            m,
            &plan,
            &cfg,
            0.020,
            Some(unbounded.peak_power_w * 0.9),
            Evaluator::Analytic,
            1,
            &cal,
        )
        .unwrap();
        assert!(bounded.qps < unbounded.qps);
        assert!(bounded.peak_power_w < unbounded.peak_power_w);
    }
}


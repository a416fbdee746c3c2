//! Analytic latency and power cost model for sub-graph execution on each
//! device class.
//!
//! All functional forms here (op-parallel efficiency, co-location
//! interference, MPS efficiency, idle fractions, PCIe efficiency, the
//! per-thread gather ceiling) are declared calibration surfaces: the
//! constants live in [`Calibration`] and the defaults are chosen so the
//! published characterization trends hold (dense idle-cycle range, the
//! accelerator data-load share, NMP one-hot parity). Absolute outputs are
//! model outputs, not measurements.

use crate::catalog::{ModelSpec, ServerSpec};

use alloc::string::String;

/// Which scheduling strategy a configuration belongs to.
///
/// `ModelBased` launches the whole graph per thread. The sparse-dense (S-D)
/// pipeline variants partition into SparseNet and DenseNet stages connected
/// by intermediate queues: host-only, host-sparse feeding an accelerator, and
/// hot-embeddings-plus-dense on the accelerator (misses served by the host),
/// with leftover host cores running a secondary strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    ModelBased,
    SdPipelineHostOnly,
    SdPipelineHostAccel,
    HotDenseOnAccel(LeftoverStrategy),
}

/// What the host cores left over by `HotDenseOnAccel` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LeftoverStrategy {
    ModelBased,
    SdPipelineHostOnly,
}

impl Strategy {
    pub fn uses_accel(&self) -> bool {
        matches!(self, Strategy::SdPipelineHostAccel | Strategy::HotDenseOnAccel(_))
    }

    /// Stable label used in tables and output files.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::ModelBased => "model-based",
            Strategy::SdPipelineHostOnly => "sd-pipeline-host",
            Strategy::SdPipelineHostAccel => "sd-pipeline-accel",
            Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased) => "hot-dense-accel+model-based",
            Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly) => {
                "hot-dense-accel+sd-pipeline"
            }
        }
    }

    /// Inverse of [`Strategy::label`].
    pub fn parse(label: &str) -> Option<Strategy> {
        match label {
            "model-based" => Some(Strategy::ModelBased),
            "sd-pipeline-host" => Some(Strategy::SdPipelineHostOnly),
            "sd-pipeline-accel" => Some(Strategy::SdPipelineHostAccel),
            "hot-dense-accel+model-based" => {
                Some(Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased))
            }
            "hot-dense-accel+sd-pipeline" => {
                Some(Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly))
            }
            _ => None,
        }
    }
}

/// One host thread pool: `threads` co-located inference threads, each with
/// `cores_per_thread` operator workers, consuming sub-batches of `batch`
/// items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    pub threads: u32,
    pub cores_per_thread: u32,
    pub batch: u32,
}

impl PoolConfig {
    pub fn cores(&self) -> u32 {
        self.threads * self.cores_per_thread
    }
}

/// Accelerator side: `co_located` inference threads sharing the device,
/// fusing arrivals into batches of `fused_batch` items; a partial batch is
/// dispatched once it has waited `fusion_timeout_s` (infinity = size-only
/// fusion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelConfig {
    pub co_located: u32,
    pub fused_batch: u32,
    pub fusion_timeout_s: f64,
}

/// One point in the parallelism space.
///
/// `host` is the pool the search climbs over: the only pool for
/// `ModelBased`, the dense pool for `SdPipelineHostOnly` (the sparse pool
/// then lives in `sparse_host`), the sparse pool for `SdPipelineHostAccel`,
/// and the leftover-core pool for `HotDenseOnAccel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedConfig {
    pub strategy: Strategy,
    pub host: PoolConfig,
    pub sparse_host: Option<PoolConfig>,
    pub accel: Option<AccelConfig>,
}

impl SchedConfig {
    /// Host cores reserved as accelerator helpers (dispatch, index prep,
    /// miss pooling): one per co-located accelerator thread.
    pub fn accel_helper_cores(&self) -> u32 {
        match (self.strategy.uses_accel(), &self.accel) {
            (true, Some(a)) => a.co_located,
            _ => 0,
        }
    }

    /// Total host cores claimed by this configuration.
    pub fn host_cores(&self) -> u32 {
        self.host.cores()
            + self.sparse_host.map(|p| p.cores()).unwrap_or(0)
            + self.accel_helper_cores()
    }

    pub fn validate(&self, server: &ServerSpec) -> Result<(), ConfigError> {
        let err = |reason: String| Err(ConfigError { reason });
        for pool in core::iter::once(&self.host).chain(self.sparse_host.iter()) {
            if pool.threads == 0 || pool.cores_per_thread == 0 || pool.batch == 0 {
                return err(String::from("pool counts must be at least 1"));
            }
        }
        if self.host_cores() > server.cpu.cores {
            return err(alloc::format!(
                "configuration claims {} cores but server `{}` has {}",
                self.host_cores(),
                server.name,
                server.cpu.cores
            ));
        }
        match (self.strategy.uses_accel(), &self.accel) {
            (true, None) => return err(String::from("strategy requires an accelerator config")),
            (false, Some(_)) => {
                return err(String::from("strategy does not use the accelerator"))
            }
            (true, Some(a)) => {
                if server.accel.is_none() {
                    return err(alloc::format!(
                        "server `{}` has no accelerator",
                        server.name
                    ));
                }
                if a.co_located == 0 || a.fused_batch == 0 {
                    return err(String::from("accelerator counts must be at least 1"));
                }
                if !(a.fusion_timeout_s > 0.0) {
                    return err(String::from("fusion timeout must be positive"));
                }
            }
            (false, None) => {}
        }
        if self.strategy == Strategy::SdPipelineHostOnly && self.sparse_host.is_none() {
            return err(String::from("S-D host pipeline needs a sparse pool"));
        }
        Ok(())
    }
}

/// A configuration that cannot run on the given server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub reason: String,
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "infeasible configuration: {}", self.reason)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}

/// Latency breakdown of one pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageLatency {
    pub queueing_s: f64,
    pub data_load_s: f64,
    pub compute_s: f64,
    pub comm_s: f64,
}

impl StageLatency {
    pub fn total(&self) -> f64 {
        self.queueing_s + self.data_load_s + self.compute_s + self.comm_s
    }
}

/// Per-component busy fractions feeding the power model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Utilization {
    pub cpu: f64,
    pub mem: f64,
    pub accel: f64,
}

/// Calibration constants for every functional form in the cost model.
///
/// Defaults reproduce the characterization trends; all fields are plain data
/// so experiment configs can override any of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Embedding element width in bytes (fp32).
    pub elem_bytes: u32,
    /// Sparse index width in bytes (64-bit ids).
    pub index_bytes: u32,
    /// Per-worker efficiency at op-parallelism 1..=4; beyond 4 the curve is
    /// extrapolated linearly and floored at `eff_floor`.
    pub eff_table: [f64; 4],
    pub eff_floor: f64,
    /// Co-location interference: 1 / (1 + alpha * max(0, m*o/cores - beta)).
    pub interf_alpha: f64,
    pub interf_beta: f64,
    /// Accelerator multi-process efficiency: min(1, base + span / m).
    pub mps_base: f64,
    pub mps_span: f64,
    /// Idle power fraction per component.
    pub idle_frac_cpu: f64,
    pub idle_frac_mem: f64,
    pub idle_frac_accel: f64,
    /// Extra constant draw of near-memory processing units when installed.
    pub nmp_idle_power_w: f64,
    /// Effective fraction of peak PCIe bandwidth for inference transfers
    /// (small scattered rows and index streams run far below peak).
    pub pcie_efficiency: f64,
    /// Per-operator kernel launch overhead on accelerators.
    pub launch_overhead_s: f64,
    /// Fixed software cost charged per dispatched sub-batch.
    pub dispatch_overhead_s: f64,
    /// Ceiling on one gather core's memory throughput in GB/s; an
    /// op-parallel thread gathers with all its cores, so a thread's ceiling
    /// is `cores_per_thread` times this. The sparse-latency formula itself
    /// stays bandwidth-shared, this caps how much of the share one thread
    /// can realize.
    pub thread_gather_gbps: f64,
    /// DRAM contention: each concurrent gather thread adds this fraction of
    /// lost effective bandwidth (bank conflicts between random-access
    /// streams), i.e. usable bandwidth divides by `1 + penalty * threads`.
    pub bw_thread_penalty: f64,
    /// Dense-latency discount from operator fusion, 0 disables.
    pub op_fusion_discount: f64,
    /// Accelerator query-fusion timeout as a fraction of the SLA.
    pub fusion_timeout_sla_frac: f64,
    /// Tail percentile reported by the simulator.
    pub tail_percentile: f64,
    /// Fraction of simulated time discarded as warm-up.
    pub warmup_frac: f64,
    /// Deterministic-queueing scale in the closed-form tail model.
    pub queue_factor: f64,
    /// Query-size lognormal parameters and truncation bounds.
    pub size_ln_mu: f64,
    pub size_ln_sigma: f64,
    pub size_min: u32,
    pub size_max: u32,
    /// Zipf exponent shared by access profiles and lookup sampling.
    pub zipf_exponent: f64,
    /// Relative throughput-gradient band treated as noise when the search
    /// runs on the stochastic simulator.
    pub noise_band: f64,
    /// Rate-search iteration budget and relative bracket tolerance.
    pub search_iters: u32,
    pub bracket_tol: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            elem_bytes: 4,
            index_bytes: 8,
            eff_table: [1.0, 0.75, 0.55, 0.26],
            eff_floor: 0.2,
            interf_alpha: 0.5,
            interf_beta: 0.5,
            mps_base: 0.7,
            mps_span: 0.3,
            idle_frac_cpu: 0.3,
            idle_frac_mem: 0.3,
            // Accelerators clock-gate aggressively when idle; a lower floor
            // than the host parts keeps partially-loaded GPU hosts honest.
            idle_frac_accel: 0.10,
            nmp_idle_power_w: 5.0,
            // Batched index/feature DMA sustains roughly a third of the
            // link's nominal rate once scatter-gather and protocol overheads
            // are paid.
            pcie_efficiency: 0.36,
            // Amortized per-operator cost with persistent kernels / graph
            // launch; the per-sub-batch dispatch cost below carries the
            // software overhead.
            launch_overhead_s: 0.5e-6,
            dispatch_overhead_s: 20e-6,
            thread_gather_gbps: 9.0,
            bw_thread_penalty: 0.015,
            op_fusion_discount: 0.05,
            fusion_timeout_sla_frac: 0.25,
            tail_percentile: 0.95,
            warmup_frac: 0.10,
            queue_factor: 2.0,
            size_ln_mu: 3.912023005428146, // ln(50): median query size 50 items
            size_ln_sigma: 1.0,
            size_min: 10,
            size_max: 1000,
            zipf_exponent: 0.9,
            noise_band: 0.02,
            search_iters: 12,
            bracket_tol: 0.01,
        }
    }
}

impl Calibration {
    /// Per-worker efficiency of `o`-way op-parallelism.
    pub fn op_efficiency(&self, o: u32) -> f64 {
        debug_assert!(o >= 1);
        match o {
            1..=4 => self.eff_table[(o - 1) as usize],
            _ => {
                let slope = self.eff_table[3] - self.eff_table[2];
                let extrapolated = self.eff_table[3] + slope * (o as f64 - 4.0);
                if extrapolated > self.eff_floor {
                    extrapolated
                } else {
                    self.eff_floor
                }
            }
        }
    }

    /// Slowdown from co-locating `m` threads of `o` workers on `cores` cores.
    pub fn interference(&self, m: u32, o: u32, cores: u32) -> f64 {
        let pressure = (m * o) as f64 / cores as f64;
        let excess = pressure - self.interf_beta;
        1.0 / (1.0 + self.interf_alpha * if excess > 0.0 { excess } else { 0.0 })
    }

    /// Accelerator multi-process (co-location) efficiency.
    pub fn mps_efficiency(&self, m: u32) -> f64 {
        debug_assert!(m >= 1);
        let eff = self.mps_base + self.mps_span / m as f64;
        if eff < 1.0 {
            eff
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = self.elem_bytes > 0
            && self.index_bytes > 0
            && self.eff_table.iter().all(|&e| e > 0.0 && e <= 1.0)
            && self.eff_floor > 0.0
            && self.pcie_efficiency > 0.0
            && self.pcie_efficiency <= 1.0
            && (0.0..1.0).contains(&self.idle_frac_cpu)
            && (0.0..1.0).contains(&self.idle_frac_mem)
            && (0.0..1.0).contains(&self.idle_frac_accel)
            && self.thread_gather_gbps > 0.0
            && self.bw_thread_penalty >= 0.0
            && (0.0..1.0).contains(&self.op_fusion_discount)
            && (0.5..1.0).contains(&self.tail_percentile)
            && (0.0..0.5).contains(&self.warmup_frac)
            && self.queue_factor > 0.0
            && self.size_min >= 1
            && self.size_min <= self.size_max
            && self.zipf_exponent > 0.0
            && self.search_iters > 0
            && self.bracket_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConfigError {
                reason: String::from("calibration constants out of range"),
            })
        }
    }
}

/// Dense sub-graph time for one `batch`-item sub-batch on one host thread.
///
/// t = FLOPs / (o * per-core peak * eff(o) * interference(m, o)).
pub fn dense_latency(
    model: &ModelSpec,
    server: &ServerSpec,
    cfg: &SchedConfig,
    batch: u32,
    cal: &Calibration,
) -> f64 {
    let m = cfg.host.threads;
    let o = cfg.host.cores_per_thread;
    let flops = batch as f64 * model.dense_flops_per_item() * (1.0 - cal.op_fusion_discount);
    let rate = o as f64
        * server.core_flops()
        * cal.op_efficiency(o)
        * cal.interference(m, o, server.cpu.cores);
    flops / rate
}

/// Embedding gather time for one `batch`-item sub-batch on one sparse thread.
///
/// Each of the `active_threads` gather threads receives an equal share of the
/// effective bandwidth; near-memory processing multiplies effective bandwidth
/// only for Gather-Reduce (pooling) models.
pub fn sparse_latency(
    model: &ModelSpec,
    server: &ServerSpec,
    cfg: &SchedConfig,
    batch: u32,
    cal: &Calibration,
) -> f64 {
    let pool = cfg.sparse_host.unwrap_or(cfg.host);
    let bytes = batch as f64 * model.sparse_bytes_per_item(cal.elem_bytes);
    bytes / gather_throughput(model, server, pool, cal) * pool.threads as f64
}

/// Effective host memory bandwidth in bytes/s for this model's sparse ops.
pub fn effective_host_bandwidth(model: &ModelSpec, server: &ServerSpec) -> f64 {
    let nmp = if model.has_pooling {
        server.memory.nmp_factor as f64
    } else {
        1.0
    };
    server.memory.bandwidth_gbps * 1e9 * nmp
}

/// Realizable aggregate gather throughput of a sparse pool in bytes/s: the
/// contention-degraded bandwidth (more concurrent random-access streams
/// cost bank conflicts) with each thread's share capped by what its cores
/// can issue.
pub fn gather_throughput(
    model: &ModelSpec,
    server: &ServerSpec,
    pool: PoolConfig,
    cal: &Calibration,
) -> f64 {
    let contended = effective_host_bandwidth(model, server)
        / (1.0 + cal.bw_thread_penalty * pool.threads as f64);
    let share = contended / pool.threads as f64;
    let cap = pool.cores_per_thread as f64 * per_core_gather_cap(model, server, cal);
    pool.threads as f64 * if cap < share { cap } else { share }
}

/// Issue-rate ceiling of one gather core in bytes/s. Near-memory pooling
/// raises it in step with the bandwidth multiplier: each request a core
/// issues returns a DIMM-side pooled sum instead of a raw row.
pub fn per_core_gather_cap(model: &ModelSpec, server: &ServerSpec, cal: &Calibration) -> f64 {
    let nmp = if model.has_pooling {
        server.memory.nmp_factor as f64
    } else {
        1.0
    };
    cal.thread_gather_gbps * 1e9 * nmp
}

/// PCIe transfer and kernel time for one fused accelerator batch.
///
/// Data loading ships the sparse indices plus dense features over the
/// per-thread PCIe share; compute runs the dense FLOPs at MPS efficiency
/// plus per-operator launch overhead.
pub fn accel_stage_latencies(
    model: &ModelSpec,
    server: &ServerSpec,
    cfg: &SchedConfig,
    fused_batch: u32,
    cal: &Calibration,
) -> StageLatency {
    let accel = server
        .accel
        .as_ref()
        .expect("accel_stage_latencies requires an accelerator");
    let m = cfg.accel.map(|a| a.co_located).unwrap_or(1).max(1);
    let input_per_item = model.indices_per_item() * cal.index_bytes as f64
        + model.dense_feature_bytes(cal.elem_bytes);
    let pcie = accel.pcie_gbps * 1e9 * cal.pcie_efficiency / m as f64;
    let data_load_s = fused_batch as f64 * input_per_item / pcie;
    let flops = fused_batch as f64 * model.dense_flops_per_item();
    let compute_s = flops / (accel.peak_tflops * 1e12 * cal.mps_efficiency(m))
        + model.op_count() as f64 * cal.launch_overhead_s;
    StageLatency {
        queueing_s: 0.0,
        data_load_s,
        compute_s,
        comm_s: 0.0,
    }
}

/// Provisioned power at the given per-component utilizations:
/// P = TDP * (idle + (1 - idle) * util) summed over active components, plus
/// the near-memory idle adder when NMP DIMMs are installed.
pub fn power_draw(server: &ServerSpec, cfg: &SchedConfig, util: Utilization, cal: &Calibration) -> f64 {
    let part = |tdp: f64, idle: f64, u: f64| tdp * (idle + (1.0 - idle) * u.clamp(0.0, 1.0));
    let mut total = part(server.cpu.tdp_w, cal.idle_frac_cpu, util.cpu)
        + part(server.memory.tdp_w, cal.idle_frac_mem, util.mem);
    if server.memory.nmp_factor > 1 {
        total += cal.nmp_idle_power_w;
    }
    if cfg.strategy.uses_accel() {
        if let Some(accel) = &server.accel {
            total += part(accel.tdp_w, cal.idle_frac_accel, util.accel);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalogs;

    fn host_cfg(m: u32, o: u32, d: u32) -> SchedConfig {
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
    fn dense_identity_at_single_worker() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let mut cal = Calibration::default();
        cal.op_fusion_discount = 0.0;
        let t = dense_latency(m, s, &host_cfg(1, 1, 1), 1, &cal);
        let raw = m.dense_flops_per_item() / s.core_flops();
        assert!((t - raw).abs() / raw < 1e-12);
    }

    #[test]
    fn dense_two_workers_speed_up_1_5x() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let cal = Calibration::default();
        let t1 = dense_latency(m, s, &host_cfg(1, 1, 64), 64, &cal);
        let t2 = dense_latency(m, s, &host_cfg(1, 2, 64), 64, &cal);
        assert!((t1 / t2 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dense_linear_in_batch() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc3").unwrap();
        let s = c.find_server("t2").unwrap();
        let cal = Calibration::default();
        let t = dense_latency(m, s, &host_cfg(4, 2, 64), 64, &cal);
        let t2 = dense_latency(m, s, &host_cfg(4, 2, 64), 128, &cal);
        assert!((t2 / t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_models_see_no_nmp_speedup() {
        let c = Catalogs::builtin();
        let wnd = c.find_model("mt-wnd").unwrap();
        let t2 = c.find_server("t2").unwrap();
        let t5 = c.find_server("t5").unwrap(); // NMPx8, same base bandwidth
        let cal = Calibration::default();
        let cfg = host_cfg(4, 1, 64);
        let a = sparse_latency(wnd, t2, &cfg, 64, &cal);
        let b = sparse_latency(wnd, t5, &cfg, 64, &cal);
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_models_scale_with_nmp_factor() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let t2 = c.find_server("t2").unwrap();
        let t4 = c.find_server("t4").unwrap(); // NMPx4
        let cal = Calibration::default();
        let cfg = host_cfg(4, 1, 64);
        let a = sparse_latency(m, t2, &cfg, 64, &cal);
        let b = sparse_latency(m, t4, &cfg, 64, &cal);
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn accel_share_doubles_with_co_location() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc3").unwrap();
        let s = c.find_server("t7").unwrap();
        let cal = Calibration::default();
        let mut cfg = host_cfg(1, 1, 64);
        cfg.strategy = Strategy::SdPipelineHostAccel;
        cfg.accel = Some(AccelConfig {
            co_located: 1,
            fused_batch: 256,
            fusion_timeout_s: 12.5e-3,
        });
        let one = accel_stage_latencies(m, s, &cfg, 256, &cal);
        cfg.accel = Some(AccelConfig {
            co_located: 2,
            fused_batch: 256,
            fusion_timeout_s: 12.5e-3,
        });
        let two = accel_stage_latencies(m, s, &cfg, 256, &cal);
        assert!((two.data_load_s / one.data_load_s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rmc3_data_load_share_in_measured_range() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc3").unwrap();
        let s = c.find_server("t7").unwrap();
        let cal = Calibration::default();
        let mut cfg = host_cfg(1, 1, 64);
        cfg.strategy = Strategy::SdPipelineHostAccel;
        cfg.accel = Some(AccelConfig {
            co_located: 1,
            fused_batch: 256,
            fusion_timeout_s: 12.5e-3,
        });
        let st = accel_stage_latencies(m, s, &cfg, 256, &cal);
        let share = st.data_load_s / (st.data_load_s + st.compute_s);
        assert!((0.65..=0.83).contains(&share), "share {share}");
    }

    #[test]
    fn power_matches_tdp_arithmetic() {
        let c = Catalogs::builtin();
        let t2 = c.find_server("t2").unwrap();
        let cal = Calibration::default();
        let cfg = host_cfg(1, 1, 16);
        let idle = power_draw(t2, &cfg, Utilization::default(), &cal);
        assert!((idle - 52.5).abs() < 1e-9); // 0.3 * (125 + 50)
        let full = power_draw(
            t2,
            &cfg,
            Utilization {
                cpu: 1.0,
                mem: 1.0,
                accel: 1.0,
            },
            &cal,
        );
        assert!((full - 175.0).abs() < 1e-9);
    }

    #[test]
    fn power_monotone_in_utilization() {
        let c = Catalogs::builtin();
        let t7 = c.find_server("t7").unwrap();
        let cal = Calibration::default();
        let mut cfg = host_cfg(2, 1, 16);
        cfg.strategy = Strategy::SdPipelineHostAccel;
        cfg.accel = Some(AccelConfig {
            co_located: 1,
            fused_batch: 64,
            fusion_timeout_s: 12.5e-3,
        });
        let mut last = -1.0;
        for step in 0..=10 {
            let u = step as f64 / 10.0;
            let p = power_draw(
                t7,
                &cfg,
                Utilization {
                    cpu: u,
                    mem: u,
                    accel: u,
                },
                &cal,
            );
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn op_efficiency_extrapolates_with_floor() {
        let cal = Calibration::default();
        assert_eq!(cal.op_efficiency(1), 1.0);
        assert_eq!(cal.op_efficiency(4), 0.26);
        assert_eq!(cal.op_efficiency(5), 0.2); // 0.26 - 0.29 floored
        assert_eq!(cal.op_efficiency(12), 0.2);
    }

    #[test]
    fn worker_idle_fraction_in_measured_range() {
        let cal = Calibration::default();
        for o in 2..=4 {
            let idle = 1.0 - cal.op_efficiency(o);
            assert!((0.25..=0.74).contains(&idle), "o={o} idle {idle}");
        }
    }

    #[test]
    fn config_validation_catches_core_overflow() {
        let c = Catalogs::builtin();
        let t2 = c.find_server("t2").unwrap();
        assert!(host_cfg(10, 2, 64).validate(t2).is_ok());
        assert!(host_cfg(11, 2, 64).validate(t2).is_err());
        assert!(host_cfg(0, 2, 64).validate(t2).is_err());
        let mut cfg = host_cfg(1, 1, 64);
        cfg.accel = Some(AccelConfig {
            co_located: 1,
            fused_batch: 64,
            fusion_timeout_s: 12.5e-3,
        });
        assert!(cfg.validate(t2).is_err()); // strategy does not use accel
    }
}

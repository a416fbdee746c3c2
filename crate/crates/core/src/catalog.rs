//! Model and server catalogs plus footprint arithmetic.
//!
//! Houses the six builtin recommendation-model architectures and the ten
//! heterogeneous server types, together with the static sizing math
//! (embedding/dense-weight footprints, per-item compute and traffic
//! estimates) that the performance model and partitioner build on.
//!
//! Ranges such as row counts and lookups-per-table are realized as
//! deterministic midpoints for sizing; the load generator samples per-query
//! values from the same ranges.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

/// Inclusive integer range, e.g. rows per table "1M - 5M".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub lo: u64,
    pub hi: u64,
}

impl Span {
    pub const fn new(lo: u64, hi: u64) -> Self {
        Span { lo, hi }
    }

    /// Deterministic midpoint used for all static sizing arithmetic.
    pub fn midpoint(&self) -> f64 {
        (self.lo as f64 + self.hi as f64) / 2.0
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Attention block kind in the dense sub-graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// No attention (the DLRM family and MT-WnD).
    None,
    /// Stacked fully-connected attention over the behavior sequence (DIN).
    Fc,
    /// GRU-based interest evolution over the behavior sequence (DIEN).
    Gru,
}

/// Which embedding-size column of the model catalog to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    Prod,
    Small,
}

/// A recommendation model's architecture parameters.
///
/// For models with attention (`attention_kind != None`), `lookups_per_table`
/// describes the single behavior-sequence table (table index 0); the
/// remaining tables are one-hot. For pooling models every table draws from
/// the range, and for one-hot models without attention the range must be
/// `[1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub service: String,
    pub num_emb_tables: u32,
    pub emb_rows_prod: Span,
    pub emb_rows_small: Span,
    /// Embedding row width in elements.
    pub emb_dim: u32,
    /// Sparse indices per query item (per table for pooling models; for the
    /// sequence table of attention models).
    pub lookups_per_table: Span,
    /// Gather-Reduce pooling (true) vs one-hot / unreduced lookups (false).
    pub has_pooling: bool,
    pub attention_kind: AttentionKind,
    /// Bottom FC stack layer widths (input first), empty if absent.
    pub bottom_fc: Vec<u32>,
    /// Predict FC stack layer widths (input first).
    pub predict_fc: Vec<u32>,
    /// Replicated predict towers (the N in "N x (1024-512-256)").
    pub predict_fc_replicas: u32,
    /// Tail-latency target for this service.
    pub sla_ms: f64,
}

impl ModelSpec {
    /// Row-count range for the chosen size class.
    pub fn emb_rows(&self, class: SizeClass) -> Span {
        match class {
            SizeClass::Prod => self.emb_rows_prod,
            SizeClass::Small => self.emb_rows_small,
        }
    }

    /// Expected sequence length for attention models (midpoint), else 0.
    pub fn seq_len_mid(&self) -> f64 {
        match self.attention_kind {
            AttentionKind::None => 0.0,
            _ => self.lookups_per_table.midpoint(),
        }
    }

    /// Expected lookups per query item for each table.
    ///
    /// Pooling models draw every table from the catalog range; attention
    /// models have one sequence table (index 0) plus one-hot tables; plain
    /// one-hot models look up exactly one row per table.
    pub fn table_lookup_mids(&self) -> Vec<f64> {
        let n = self.num_emb_tables as usize;
        if self.has_pooling {
            vec![self.lookups_per_table.midpoint(); n]
        } else if self.attention_kind != AttentionKind::None {
            let mut v = vec![1.0; n];
            if n > 0 {
                v[0] = self.lookups_per_table.midpoint();
            }
            v
        } else {
            vec![1.0; n]
        }
    }

    /// Expected total sparse indices per query item across all tables.
    pub fn indices_per_item(&self) -> f64 {
        self.table_lookup_mids().iter().sum()
    }

    /// Expected embedding bytes gathered per query item.
    pub fn sparse_bytes_per_item(&self, elem_bytes: u32) -> f64 {
        self.indices_per_item() * self.emb_dim as f64 * elem_bytes as f64
    }

    /// Dense-feature input bytes per query item (continuous features,
    /// approximated as one embedding-row width).
    pub fn dense_feature_bytes(&self, elem_bytes: u32) -> f64 {
        (self.emb_dim * elem_bytes) as f64
    }

    /// Multiply-accumulates per query item in the dense sub-graph
    /// (FC stacks plus attention).
    pub fn dense_macs_per_item(&self) -> f64 {
        fc_macs(&self.bottom_fc)
            + fc_macs(&self.predict_fc) * self.predict_fc_replicas as f64
            + self.attention_macs_per_item()
    }

    /// FLOPs per query item (2 per MAC).
    pub fn dense_flops_per_item(&self) -> f64 {
        2.0 * self.dense_macs_per_item()
    }

    fn attention_macs_per_item(&self) -> f64 {
        let dim2 = (self.emb_dim as f64) * (self.emb_dim as f64);
        match self.attention_kind {
            AttentionKind::None => 0.0,
            // Two stacked FC layers in the attention unit per sequence step.
            AttentionKind::Fc => self.seq_len_mid() * 4.0 * dim2,
            // Attention unit plus GRU recurrence (3 gates, two matrices each).
            AttentionKind::Gru => self.seq_len_mid() * 10.0 * dim2,
        }
    }

    /// Dense weight bytes (FC stacks plus attention parameters).
    pub fn dense_weight_bytes(&self, elem_bytes: u32) -> u64 {
        let dim2 = (self.emb_dim as u64) * (self.emb_dim as u64);
        let att = match self.attention_kind {
            AttentionKind::None => 0,
            AttentionKind::Fc => 4 * dim2,
            AttentionKind::Gru => 10 * dim2,
        };
        let weights = fc_macs(&self.bottom_fc)
            + fc_macs(&self.predict_fc) * self.predict_fc_replicas as f64;
        (weights as u64 + att) * elem_bytes as u64
    }

    /// Rough operator count of the dense sub-graph plus the gather, used for
    /// kernel-launch overhead on accelerators.
    pub fn op_count(&self) -> u32 {
        let fc_layers = |w: &[u32]| w.len().saturating_sub(1) as u32;
        let att = match self.attention_kind {
            AttentionKind::None => 0,
            AttentionKind::Fc => 2,
            AttentionKind::Gru => 4,
        };
        1 + fc_layers(&self.bottom_fc) + fc_layers(&self.predict_fc) + att
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let bad = |field: &'static str, reason: &'static str| {
            Err(CatalogError::InvalidSpec {
                name: self.name.clone(),
                field,
                reason,
            })
        };
        if self.name.is_empty() {
            return bad("name", "must be non-empty");
        }
        if self.num_emb_tables == 0 {
            return bad("num_emb_tables", "must be positive");
        }
        if self.emb_dim == 0 {
            return bad("emb_dim", "must be positive");
        }
        for (field, span) in [
            ("emb_rows_prod", self.emb_rows_prod),
            ("emb_rows_small", self.emb_rows_small),
            ("lookups_per_table", self.lookups_per_table),
        ] {
            if span.lo == 0 || span.lo > span.hi {
                return bad(field, "range must be positive with lo <= hi");
            }
        }
        if !self.has_pooling
            && self.attention_kind == AttentionKind::None
            && self.lookups_per_table != Span::new(1, 1)
        {
            return bad("lookups_per_table", "one-hot tables look up exactly one row");
        }
        for (field, stack) in [("bottom_fc", &self.bottom_fc), ("predict_fc", &self.predict_fc)] {
            if stack.iter().any(|&w| w == 0) {
                return bad(field, "layer widths must be positive");
            }
        }
        if self.predict_fc_replicas == 0 {
            return bad("predict_fc_replicas", "must be positive");
        }
        if !(self.sla_ms > 0.0) {
            return bad("sla_ms", "must be positive");
        }
        Ok(())
    }
}

fn fc_macs(widths: &[u32]) -> f64 {
    widths
        .windows(2)
        .map(|w| w[0] as f64 * w[1] as f64)
        .sum()
}

/// Host CPU parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuSpec {
    pub cores: u32,
    pub freq_ghz: f64,
    pub tdp_w: f64,
    /// Peak FLOPs per core per cycle (FMA-vector width).
    pub peak_flops_per_core: f64,
}

/// Host memory parameters; `nmp_factor > 1` marks near-memory-processing
/// DIMMs that multiply effective bandwidth for Gather-Reduce pooling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorySpec {
    pub channels: u32,
    pub dimms_per_channel: u32,
    pub ranks_per_dimm: u32,
    pub capacity_gb: f64,
    pub tdp_w: f64,
    pub bandwidth_gbps: f64,
    pub nmp_factor: u32,
}

/// Attached accelerator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSpec {
    pub sms: u32,
    pub boost_mhz: f64,
    pub hbm_gb: f64,
    pub hbm_bw_gbps: f64,
    pub pcie_gbps: f64,
    pub tdp_w: f64,
    pub peak_tflops: f64,
}

/// A heterogeneous server type's hardware parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerSpec {
    pub name: String,
    /// Number of servers of this type available to the cluster (N_h).
    pub availability: u32,
    pub cpu: CpuSpec,
    pub memory: MemorySpec,
    pub accel: Option<AccelSpec>,
}

/// Bytes per decimal gigabyte; catalogs quote GB/GB-per-second decimally.
pub const GB: f64 = 1e9;

impl ServerSpec {
    pub fn mem_bytes(&self) -> f64 {
        self.memory.capacity_gb * GB
    }

    pub fn hbm_bytes(&self) -> f64 {
        self.accel.map(|a| a.hbm_gb * GB).unwrap_or(0.0)
    }

    /// Sum of component TDPs (upper bound for any power reading).
    pub fn tdp_total_w(&self) -> f64 {
        self.cpu.tdp_w + self.memory.tdp_w + self.accel.map(|a| a.tdp_w).unwrap_or(0.0)
    }

    /// Peak dense throughput of one core in FLOPs per second.
    pub fn core_flops(&self) -> f64 {
        self.cpu.peak_flops_per_core * self.cpu.freq_ghz * 1e9
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let bad = |field: &'static str, reason: &'static str| {
            Err(CatalogError::InvalidSpec {
                name: self.name.clone(),
                field,
                reason,
            })
        };
        if self.name.is_empty() {
            return bad("name", "must be non-empty");
        }
        if self.cpu.cores == 0 {
            return bad("cpu.cores", "must be positive");
        }
        if !(self.cpu.freq_ghz > 0.0) || !(self.cpu.tdp_w > 0.0) || !(self.cpu.peak_flops_per_core > 0.0)
        {
            return bad("cpu", "frequency, TDP and peak FLOPs must be positive");
        }
        if !matches!(self.memory.nmp_factor, 1 | 2 | 4 | 8) {
            return bad("memory.nmp_factor", "must be one of 1, 2, 4, 8");
        }
        if !(self.memory.capacity_gb > 0.0) || !(self.memory.bandwidth_gbps > 0.0) {
            return bad("memory", "capacity and bandwidth must be positive");
        }
        if let Some(a) = &self.accel {
            if !(a.hbm_gb > 0.0) || !(a.pcie_gbps > 0.0) || !(a.peak_tflops > 0.0) {
                return bad("accel", "memory, PCIe and peak TFLOPS must be positive");
            }
        }
        Ok(())
    }
}

/// Total model bytes for the chosen size class: embeddings at range-midpoint
/// rows plus dense weights.
pub fn model_footprint(model: &ModelSpec, class: SizeClass, bytes_per_element: u32) -> u64 {
    embedding_bytes(model, class, bytes_per_element) + model.dense_weight_bytes(bytes_per_element)
}

/// Embedding bytes alone (all tables at midpoint rows).
pub fn embedding_bytes(model: &ModelSpec, class: SizeClass, bytes_per_element: u32) -> u64 {
    let rows = model.emb_rows(class).midpoint();
    let per_table = rows * model.emb_dim as f64 * bytes_per_element as f64;
    fmath::round(per_table * model.num_emb_tables as f64) as u64
}

/// Catalog validation failure naming the offending spec and field.
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogError {
    InvalidSpec {
        name: String,
        field: &'static str,
        reason: &'static str,
    },
    UnknownModel(String),
    UnknownServer(String),
    Duplicate(String),
}

impl core::fmt::Display for CatalogError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CatalogError::InvalidSpec { name, field, reason } => {
                write!(f, "invalid spec `{name}`: {field} {reason}")
            }
            CatalogError::UnknownModel(n) => write!(f, "unknown model `{n}`"),
            CatalogError::UnknownServer(n) => write!(f, "unknown server `{n}`"),
            CatalogError::Duplicate(n) => write!(f, "duplicate catalog entry `{n}`"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CatalogError {}

/// The loaded model and server catalogs.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalogs {
    pub models: Vec<ModelSpec>,
    pub servers: Vec<ServerSpec>,
}

impl Catalogs {
    /// The builtin catalogs: six models, ten server types.
    pub fn builtin() -> Self {
        Catalogs {
            models: builtin_models(),
            servers: builtin_servers(),
        }
    }

    /// Case-insensitive model lookup; accepts the short alias without the
    /// family prefix (`rmc1` for `dlrm-rmc1`).
    pub fn find_model(&self, name: &str) -> Result<&ModelSpec, CatalogError> {
        self.models
            .iter()
            .find(|m| name_matches(&m.name, name))
            .ok_or_else(|| CatalogError::UnknownModel(String::from(name)))
    }

    /// Case-insensitive server lookup.
    pub fn find_server(&self, name: &str) -> Result<&ServerSpec, CatalogError> {
        self.servers
            .iter()
            .find(|s| name_matches(&s.name, name))
            .ok_or_else(|| CatalogError::UnknownServer(String::from(name)))
    }

    /// Replace the spec with the same name, or append a new one.
    pub fn upsert_model(&mut self, spec: ModelSpec) {
        match self.models.iter_mut().find(|m| m.name == spec.name) {
            Some(slot) => *slot = spec,
            None => self.models.push(spec),
        }
    }

    /// Replace the spec with the same name, or append a new one.
    pub fn upsert_server(&mut self, spec: ServerSpec) {
        match self.servers.iter_mut().find(|s| s.name == spec.name) {
            Some(slot) => *slot = spec,
            None => self.servers.push(spec),
        }
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        for m in &self.models {
            m.validate()?;
        }
        for s in &self.servers {
            s.validate()?;
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(CatalogError::Duplicate(m.name.clone()));
            }
        }
        for (i, s) in self.servers.iter().enumerate() {
            if self.servers[..i].iter().any(|o| o.name == s.name) {
                return Err(CatalogError::Duplicate(s.name.clone()));
            }
        }
        Ok(())
    }
}

fn name_matches(catalog_name: &str, query: &str) -> bool {
    if catalog_name.eq_ignore_ascii_case(query) {
        return true;
    }
    // Allow `rmc1` to match `dlrm-rmc1`.
    if let Some(short) = catalog_name.split_once('-').map(|(_, rest)| rest) {
        if catalog_name.starts_with("dlrm-") && short.eq_ignore_ascii_case(query) {
            return true;
        }
    }
    false
}

/// The six builtin recommendation models.
pub fn builtin_models() -> Vec<ModelSpec> {
    let m = |name: &str,
             service: &str,
             tables: u32,
             rows_prod: (u64, u64),
             rows_small: (u64, u64),
             dim: u32,
             lookups: (u64, u64),
             pooling: bool,
             attention: AttentionKind,
             bottom: &[u32],
             predict: &[u32],
             replicas: u32,
             sla_ms: f64| ModelSpec {
        name: String::from(name),
        service: String::from(service),
        num_emb_tables: tables,
        emb_rows_prod: Span::new(rows_prod.0, rows_prod.1),
        emb_rows_small: Span::new(rows_small.0, rows_small.1),
        emb_dim: dim,
        lookups_per_table: Span::new(lookups.0, lookups.1),
        has_pooling: pooling,
        attention_kind: attention,
        bottom_fc: bottom.to_vec(),
        predict_fc: predict.to_vec(),
        predict_fc_replicas: replicas,
        sla_ms,
    };
    vec![
        m(
            "dlrm-rmc1",
            "social-media",
            10,
            (1_000_000, 5_000_000),
            (1_000_000, 1_000_000),
            32,
            (20, 160),
            true,
            AttentionKind::None,
            &[256, 128, 32],
            &[256, 64, 1],
            1,
            20.0,
        ),
        m(
            "dlrm-rmc2",
            "social-media",
            100,
            (1_000_000, 5_000_000),
            (1_000_000, 1_000_000),
            32,
            (20, 160),
            true,
            AttentionKind::None,
            &[256, 128, 32],
            &[512, 128, 1],
            1,
            50.0,
        ),
        m(
            "dlrm-rmc3",
            "social-media",
            10,
            (10_000_000, 20_000_000),
            (1_000_000, 1_000_000),
            32,
            (20, 50),
            true,
            AttentionKind::None,
            &[2560, 512, 32],
            &[512, 128, 1],
            1,
            50.0,
        ),
        m(
            "din",
            "e-commerce",
            3,
            (100_000, 600_000_000),
            (100_000, 1_000_000),
            32,
            (100, 1000),
            false,
            AttentionKind::Fc,
            &[],
            &[200, 80, 2],
            1,
            50.0,
        ),
        m(
            "dien",
            "e-commerce",
            3,
            (100_000, 600_000_000),
            (100_000, 1_000_000),
            32,
            (100, 1000),
            false,
            AttentionKind::Gru,
            &[],
            &[200, 80, 2],
            1,
            100.0,
        ),
        m(
            "mt-wnd",
            "video",
            26,
            (3_000_000, 40_000_000),
            (1_000_000, 1_000_000),
            16,
            (1, 1),
            false,
            AttentionKind::None,
            &[],
            &[1024, 512, 256],
            8,
            100.0,
        ),
    ]
}

/// The ten builtin server types.
pub fn builtin_servers() -> Vec<ServerSpec> {
    let cpu_t1 = CpuSpec {
        cores: 18,
        freq_ghz: 1.6,
        tdp_w: 86.0,
        peak_flops_per_core: 32.0,
    };
    let cpu_t2 = CpuSpec {
        cores: 20,
        freq_ghz: 2.0,
        tdp_w: 125.0,
        peak_flops_per_core: 32.0,
    };
    let mem = |dpc: u32, rpd: u32, cap: f64, tdp: f64, bw: f64, nmp: u32| MemorySpec {
        channels: 4,
        dimms_per_channel: dpc,
        ranks_per_dimm: rpd,
        capacity_gb: cap,
        tdp_w: tdp,
        bandwidth_gbps: bw,
        nmp_factor: nmp,
    };
    let ddr4_t1 = mem(1, 1, 64.0, 28.0, 76.8, 1);
    let ddr4_t2 = mem(1, 2, 128.0, 50.0, 85.2, 1);
    let nmp_x2 = mem(1, 2, 128.0, 50.0, 85.2, 2);
    let nmp_x4 = mem(2, 2, 256.0, 100.0, 85.2, 4);
    let nmp_x8 = mem(4, 2, 512.0, 200.0, 85.2, 8);
    let p100 = AccelSpec {
        sms: 56,
        boost_mhz: 1480.0,
        hbm_gb: 16.0,
        hbm_bw_gbps: 900.0,
        pcie_gbps: 16.0,
        tdp_w: 300.0,
        peak_tflops: 9.3,
    };
    let v100 = AccelSpec {
        sms: 80,
        boost_mhz: 1530.0,
        hbm_gb: 16.0,
        hbm_bw_gbps: 900.0,
        pcie_gbps: 16.0,
        tdp_w: 300.0,
        peak_tflops: 14.0,
    };
    let srv = |name: &str, avail: u32, cpu: CpuSpec, memory: MemorySpec, accel: Option<AccelSpec>| {
        ServerSpec {
            name: String::from(name),
            availability: avail,
            cpu,
            memory,
            accel,
        }
    };
    vec![
        srv("t1", 100, cpu_t1, ddr4_t1, None),
        srv("t2", 100, cpu_t2, ddr4_t2, None),
        srv("t3", 15, cpu_t2, nmp_x2, None),
        srv("t4", 10, cpu_t2, nmp_x4, None),
        srv("t5", 5, cpu_t2, nmp_x8, None),
        srv("t6", 10, cpu_t1, ddr4_t1, Some(p100)),
        srv("t7", 5, cpu_t2, ddr4_t2, Some(v100)),
        srv("t8", 6, cpu_t2, nmp_x2, Some(v100)),
        srv("t9", 4, cpu_t2, nmp_x4, Some(v100)),
        srv("t10", 2, cpu_t2, nmp_x8, Some(v100)),
    ]
}

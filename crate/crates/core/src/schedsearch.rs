//! Offline profiling: gradient-based search over parallelism configurations.
//!
//! For each (model, server, strategy) the search walks the discrete space of
//! thread count `m`, op-parallelism `o`, and sub-batch size `d` (plus the
//! accelerator-side pair for pipelined strategies), maximizing
//! latency-bounded throughput. The walk is a hill-climb: from `(m=1, d=min)`
//! it repeatedly evaluates the three forward neighbors `{d+1 level, m+1,
//! both}` and moves to the best strictly-improving one that meets the SLA
//! and power budget; an outer loop sweeps `o` upward until the per-`o` peak
//! stops improving. A brute-force sweep of the same grid serves as the
//! testing oracle, and [`profile_all`] assembles the per-pair best tuples
//! into the [`EfficiencyTable`] consumed by the provisioning stage.
//!
//! All evaluations go through a [`SearchContext`] that memoizes measured
//! operating points (the grid is integer-keyed) and counts unique evaluator
//! calls, which is how search cost is compared against the oracle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::catalog::{ModelSpec, ServerSpec, SizeClass};
use crate::partitioner::{
    build_access_profile, enumerate_strategies, partition_model, AccessProfile, PartitionPlan,
};
use crate::perfmodel::{
    AccelConfig, Calibration, ConfigError, LeftoverStrategy, PoolConfig, SchedConfig, Strategy,
};
use crate::serversim::{measure_latency_bounded_qps, BoundedQps, Evaluator};

/// Geometric sub-batch grid shared by host and accelerator batch axes.
pub const BATCH_GRID: [u32; 9] = [16, 32, 64, 128, 256, 512, 1024, 2048, 4096];

/// Most model instances that may share one accelerator.
pub const ACCEL_THREAD_MAX: u32 = 8;

/// Best measured operating point of one (model, server, strategy).
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTuple {
    pub qps: f64,
    pub power_w: f64,
    pub strategy: Strategy,
    pub cfg: SchedConfig,
    /// No grid point met the SLA within the power budget; `qps` is 0 and
    /// `cfg` is the search's starting point.
    pub violation: bool,
}

/// Outcome recorded for one (model, server) pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PairEntry {
    Best(EfficiencyTuple),
    /// The pair cannot serve this model at all (capacity, SLA, or plan
    /// failure); the reason is kept for the report.
    Unprofiled { reason: String },
}

/// Per-(model, server) efficiency tuples for the whole catalog cross
/// product; the offline stage's product and the online stage's input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EfficiencyTable {
    pub entries: BTreeMap<(String, String), PairEntry>,
}

impl EfficiencyTable {
    /// The profiled tuple for a pair, if the pair was profiled successfully.
    pub fn get(&self, model: &str, server: &str) -> Option<&EfficiencyTuple> {
        match self.entries.get(&(model.to_string(), server.to_string())) {
            Some(PairEntry::Best(t)) => Some(t),
            _ => None,
        }
    }

    pub fn insert(&mut self, model: &str, server: &str, entry: PairEntry) {
        self.entries
            .insert((model.to_string(), server.to_string()), entry);
    }

    /// Serialize as line-oriented text: one record per pair.
    ///
    /// `model server ok qps power strategy host sparse accel timeout`
    /// with `-` for absent pools, or `model server failed <reason...>`.
    /// Floats print in shortest round-trip form so parsing is lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# efficiency-table v1\n");
        for ((model, server), entry) in &self.entries {
            match entry {
                PairEntry::Best(t) => {
                    let host = fmt_pool(&t.cfg.host);
                    let sparse = t
                        .cfg
                        .sparse_host
                        .as_ref()
                        .map(fmt_pool)
                        .unwrap_or_else(|| String::from("-"));
                    let (accel, timeout) = match &t.cfg.accel {
                        Some(a) => (
                            format!("{}x{}", a.co_located, a.fused_batch),
                            format!("{}", a.fusion_timeout_s),
                        ),
                        None => (String::from("-"), String::from("-")),
                    };
                    out.push_str(&format!(
                        "{model} {server} ok {} {} {} {host} {sparse} {accel} {timeout}\n",
                        t.qps,
                        t.power_w,
                        t.strategy.label(),
                    ));
                }
                PairEntry::Unprofiled { reason } => {
                    out.push_str(&format!("{model} {server} failed {reason}\n"));
                }
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<EfficiencyTable, ConfigError> {
        let bad = |line: &str, what: &str| ConfigError {
            reason: format!("efficiency table: {what} in line `{line}`"),
        };
        let mut table = EfficiencyTable::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (model, server, status) = match (parts.next(), parts.next(), parts.next()) {
                (Some(m), Some(s), Some(st)) => (m, s, st),
                _ => return Err(bad(line, "missing columns")),
            };
            let entry = match status {
                "failed" => PairEntry::Unprofiled {
                    reason: parts.collect::<Vec<_>>().join(" "),
                },
                "ok" => {
                    let mut field = || parts.next().ok_or_else(|| bad(line, "missing columns"));
                    let qps: f64 = field()?
                        .parse()
                        .map_err(|_| bad(line, "unparseable qps"))?;
                    let power_w: f64 = field()?
                        .parse()
                        .map_err(|_| bad(line, "unparseable power"))?;
                    let strategy = Strategy::parse(field()?)
                        .ok_or_else(|| bad(line, "unknown strategy"))?;
                    let host =
                        parse_pool(field()?).ok_or_else(|| bad(line, "unparseable host pool"))?;
                    let sparse_tok = field()?;
                    let sparse_host = if sparse_tok == "-" {
                        None
                    } else {
                        Some(parse_pool(sparse_tok).ok_or_else(|| bad(line, "unparseable pool"))?)
                    };
                    let accel_tok = field()?;
                    let timeout_tok = field()?;
                    let accel = if accel_tok == "-" {
                        None
                    } else {
                        let (m, b) = accel_tok
                            .split_once('x')
                            .ok_or_else(|| bad(line, "unparseable accel"))?;
                        Some(AccelConfig {
                            co_located: m.parse().map_err(|_| bad(line, "unparseable accel"))?,
                            fused_batch: b.parse().map_err(|_| bad(line, "unparseable accel"))?,
                            fusion_timeout_s: timeout_tok
                                .parse()
                                .map_err(|_| bad(line, "unparseable timeout"))?,
                        })
                    };
                    PairEntry::Best(EfficiencyTuple {
                        qps,
                        power_w,
                        strategy,
                        cfg: SchedConfig {
                            strategy,
                            host,
                            sparse_host,
                            accel,
                        },
                        violation: false,
                    })
                }
                _ => return Err(bad(line, "unknown status")),
            };
            table.entries.insert(
                (model.to_string(), server.to_string()),
                entry,
            );
        }
        Ok(table)
    }
}

fn fmt_pool(p: &PoolConfig) -> String {
    format!("{}x{}x{}", p.threads, p.cores_per_thread, p.batch)
}

fn parse_pool(tok: &str) -> Option<PoolConfig> {
    let mut it = tok.split('x');
    let pool = PoolConfig {
        threads: it.next()?.parse().ok()?,
        cores_per_thread: it.next()?.parse().ok()?,
        batch: it.next()?.parse().ok()?,
    };
    if it.next().is_some() {
        return None;
    }
    Some(pool)
}

fn batch_index(grid: &[u32], b: u32) -> Option<usize> {
    grid.iter().position(|&g| g == b)
}

// ---------------------------------------------------------------------------
// Grid construction.
// ---------------------------------------------------------------------------

/// Build a concrete config at grid point `(m, o, d)` (plus the accelerator
/// point where the strategy has one), applying the derived-pool rules:
/// sparse-dense pipelines on the host use every core not claimed by the
/// dense pool (or by accelerator helpers) as single-core gather threads at
/// the same batch size. Returns `None` when the point violates hardware
/// bounds.
fn make_cfg(
    strategy: Strategy,
    server: &ServerSpec,
    m: u32,
    o: u32,
    d: u32,
    accel_point: Option<(u32, u32)>,
    fusion_timeout_s: f64,
) -> Option<SchedConfig> {
    let cores = server.cpu.cores;
    if m < 1 || o < 1 || m.checked_mul(o)? > cores {
        return None;
    }
    let host = PoolConfig {
        threads: m,
        cores_per_thread: o,
        batch: d,
    };
    let accel = match (strategy.uses_accel(), accel_point) {
        (true, Some((ma, da))) => {
            if !(1..=ACCEL_THREAD_MAX).contains(&ma) || server.accel.is_none() {
                return None;
            }
            Some(AccelConfig {
                co_located: ma,
                fused_batch: da,
                fusion_timeout_s,
            })
        }
        (false, None) => None,
        _ => return None,
    };
    let helper = accel.map(|a| a.co_located).unwrap_or(0);
    let sparse_host = match strategy {
        Strategy::SdPipelineHostOnly
        | Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly) => {
            let claimed = m * o + helper;
            if claimed >= cores {
                return None;
            }
            Some(PoolConfig {
                threads: cores - claimed,
                cores_per_thread: 1,
                batch: d,
            })
        }
        _ => {
            if m * o + helper > cores {
                return None;
            }
            None
        }
    };
    Some(SchedConfig {
        strategy,
        host,
        sparse_host,
        accel,
    })
}

/// The forward neighbors of `cfg` on the host-side `(m, d)` grid: batch up
/// `step` levels, `step` more threads, and both at once, keeping derived
/// pools consistent and dropping moves that leave the hardware bounds.
pub fn candidate_moves(
    cfg: &SchedConfig,
    step: u32,
    server: &ServerSpec,
    batch_grid: &[u32],
) -> Result<Vec<SchedConfig>, ConfigError> {
    if step == 0 {
        return Err(ConfigError {
            reason: String::from("candidate step must be at least 1"),
        });
    }
    let d_idx = batch_index(batch_grid, cfg.host.batch).ok_or_else(|| ConfigError {
        reason: format!("batch {} is not on the search grid", cfg.host.batch),
    })?;
    let m = cfg.host.threads;
    let o = cfg.host.cores_per_thread;
    let accel_point = cfg.accel.map(|a| (a.co_located, a.fused_batch));
    let timeout = cfg
        .accel
        .map(|a| a.fusion_timeout_s)
        .unwrap_or(f64::INFINITY);
    let next_d = d_idx
        .checked_add(step as usize)
        .and_then(|i| batch_grid.get(i).copied());
    let mut out = Vec::new();
    let mut push = |m2: u32, d2: Option<u32>| {
        if let Some(d2) = d2 {
            if let Some(c) = make_cfg(cfg.strategy, server, m2, o, d2, accel_point, timeout) {
                out.push(c);
            }
        }
    };
    push(m, next_d);
    push(m + step, Some(cfg.host.batch));
    push(m + step, next_d);
    Ok(out)
}

/// Forward neighbors on the accelerator-side `(m, d)` grid, used by the
/// nested search of pipelined strategies.
fn accel_candidate_moves(
    cfg: &SchedConfig,
    step: u32,
    server: &ServerSpec,
    batch_grid: &[u32],
) -> Vec<SchedConfig> {
    let Some(a) = cfg.accel else {
        return Vec::new();
    };
    let Some(d_idx) = batch_index(batch_grid, a.fused_batch) else {
        return Vec::new();
    };
    let next_d = d_idx
        .checked_add(step as usize)
        .and_then(|i| batch_grid.get(i).copied());
    let mut out = Vec::new();
    let mut push = |ma: u32, da: Option<u32>| {
        if let Some(da) = da {
            if let Some(c) = make_cfg(
                cfg.strategy,
                server,
                cfg.host.threads,
                cfg.host.cores_per_thread,
                cfg.host.batch,
                Some((ma, da)),
                a.fusion_timeout_s,
            ) {
                out.push(c);
            }
        }
    };
    push(a.co_located, next_d);
    push(a.co_located + step, Some(a.fused_batch));
    push(a.co_located + step, next_d);
    out
}

// ---------------------------------------------------------------------------
// Memoizing evaluation context.
// ---------------------------------------------------------------------------

/// Integer identity of a grid point (strategy discriminant, host m/o/d,
/// sparse threads, accelerator m/d).
type PointKey = (u8, u32, u32, u32, u32, u32, u32);

fn point_key(cfg: &SchedConfig) -> PointKey {
    let tag = match cfg.strategy {
        Strategy::ModelBased => 0,
        Strategy::SdPipelineHostOnly => 1,
        Strategy::SdPipelineHostAccel => 2,
        Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased) => 3,
        Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly) => 4,
    };
    (
        tag,
        cfg.host.threads,
        cfg.host.cores_per_thread,
        cfg.host.batch,
        cfg.sparse_host.map(|p| p.threads).unwrap_or(0),
        cfg.accel.map(|a| a.co_located).unwrap_or(0),
        cfg.accel.map(|a| a.fused_batch).unwrap_or(0),
    )
}

/// A feasible measured point: latency-bounded throughput and its peak power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub qps: f64,
    pub power_w: f64,
}

/// Shared evaluation state for one (model, server) profiling run: the access
/// profile, partition plans per co-location level, the measurement memo, and
/// the unique-evaluation counter used to audit search cost.
pub struct SearchContext<'a> {
    pub server: &'a ServerSpec,
    pub model: &'a ModelSpec,
    pub class: SizeClass,
    pub sla_s: f64,
    pub power_budget_w: Option<f64>,
    pub evaluator: Evaluator,
    pub seed: u64,
    pub cal: &'a Calibration,
    batch_grid: Vec<u32>,
    profile: AccessProfile,
    plans: BTreeMap<u32, Option<PartitionPlan>>,
    memo: BTreeMap<PointKey, Option<Measured>>,
    evals: u64,
}

impl<'a> SearchContext<'a> {
    pub fn new(
        server: &'a ServerSpec,
        model: &'a ModelSpec,
        class: SizeClass,
        sla_s: f64,
        power_budget_w: Option<f64>,
        evaluator: Evaluator,
        seed: u64,
        cal: &'a Calibration,
    ) -> SearchContext<'a> {
        assert!(sla_s > 0.0, "SLA must be positive");
        let profile = build_access_profile(model, class, cal.zipf_exponent, seed);
        SearchContext {
            server,
            model,
            class,
            sla_s,
            power_budget_w,
            evaluator,
            seed,
            cal,
            batch_grid: BATCH_GRID.to_vec(),
            profile,
            plans: BTreeMap::new(),
            memo: BTreeMap::new(),
            evals: 0,
        }
    }

    /// Restrict the batch axis (testing hook; the default is [`BATCH_GRID`]).
    pub fn with_batch_grid(mut self, grid: &[u32]) -> SearchContext<'a> {
        assert!(!grid.is_empty());
        self.batch_grid = grid.to_vec();
        self
    }

    /// Unique operating points measured so far (memo hits are free).
    pub fn evaluations(&self) -> u64 {
        self.evals
    }

    /// Every grid point the searches on this context have touched, one text
    /// row each in deterministic (strategy, m, o, d, …) order — the raw
    /// material for throughput-versus-configuration plots.
    pub fn visited_log(&self) -> Vec<String> {
        self.memo
            .iter()
            .map(|(k, v)| {
                let strategy = match k.0 {
                    0 => Strategy::ModelBased,
                    1 => Strategy::SdPipelineHostOnly,
                    2 => Strategy::SdPipelineHostAccel,
                    3 => Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased),
                    _ => Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly),
                };
                let head = format!(
                    "{} m {} o {} d {} sparse {} ma {} da {}",
                    strategy.label(),
                    k.1,
                    k.2,
                    k.3,
                    k.4,
                    k.5,
                    k.6
                );
                match v {
                    Some(meas) => format!("{head} qps {} power_w {}", meas.qps, meas.power_w),
                    None => format!("{head} infeasible"),
                }
            })
            .collect()
    }

    fn plan(&mut self, co_location: u32) -> Option<PartitionPlan> {
        let server = self.server;
        let model = self.model;
        let class = self.class;
        let profile = &self.profile;
        let elem = self.cal.elem_bytes;
        self.plans
            .entry(co_location)
            .or_insert_with(|| {
                partition_model(model, server, class, co_location, profile, elem).ok()
            })
            .clone()
    }

    /// Measure one grid point; `None` when the point is invalid, cannot be
    /// partitioned, or no rate satisfies the SLA and power budget.
    pub fn eval(&mut self, cfg: &SchedConfig) -> Option<Measured> {
        let key = point_key(cfg);
        if let Some(hit) = self.memo.get(&key) {
            return *hit;
        }
        let co = cfg.accel.map(|a| a.co_located).unwrap_or(1);
        let result = match self.plan(co) {
            None => None,
            Some(plan) => {
                self.evals += 1;
                match measure_latency_bounded_qps(
                    self.server,
                    self.model,
                    &plan,
                    cfg,
                    self.sla_s,
                    self.power_budget_w,
                    self.evaluator,
                    self.seed,
                    self.cal,
                ) {
                    Ok(BoundedQps {
                        qps,
                        peak_power_w,
                        violation: false,
                    }) => Some(Measured {
                        qps,
                        power_w: peak_power_w,
                    }),
                    _ => None,
                }
            }
        };
        self.memo.insert(key, result);
        result
    }

    /// Improvement threshold: simulator-backed searches ignore gradients
    /// inside the noise band.
    fn improves(&self, candidate: f64, current: f64) -> bool {
        match self.evaluator {
            Evaluator::Analytic => candidate > current,
            Evaluator::Des { .. } => candidate > current * (1.0 + self.cal.noise_band),
        }
    }
}

/// Starting point of the per-`o` climb: one host thread at the smallest
/// batch (and one accelerator instance at the smallest fused batch).
fn initial_cfg(
    strategy: Strategy,
    o: u32,
    ctx: &SearchContext<'_>,
) -> Option<SchedConfig> {
    let accel_point = strategy.uses_accel().then_some((1, ctx.batch_grid[0]));
    make_cfg(
        strategy,
        ctx.server,
        1,
        o,
        ctx.batch_grid[0],
        accel_point,
        ctx.sla_s * ctx.cal.fusion_timeout_sla_frac,
    )
}

// ---------------------------------------------------------------------------
// Searches.
// ---------------------------------------------------------------------------

/// Order two feasible points for argmax selection: higher throughput wins,
/// ties prefer lower power, then fewer threads, then smaller batch.
fn better(a: (Measured, &SchedConfig), b: (Measured, &SchedConfig)) -> bool {
    let (ma, ca) = a;
    let (mb, cb) = b;
    if ma.qps != mb.qps {
        return ma.qps > mb.qps;
    }
    if ma.power_w != mb.power_w {
        return ma.power_w < mb.power_w;
    }
    if ca.host.threads != cb.host.threads {
        return ca.host.threads < cb.host.threads;
    }
    ca.host.batch < cb.host.batch
}

/// Climb the accelerator-side `(m, d)` grid from `cfg`'s current point,
/// holding the host side fixed. Returns the best reached config and its
/// measurement, or `None` if even the current point is infeasible.
fn accel_climb(
    ctx: &mut SearchContext<'_>,
    mut cfg: SchedConfig,
) -> Option<(SchedConfig, Measured)> {
    let mut cur = ctx.eval(&cfg)?;
    loop {
        let grid = ctx.batch_grid.clone();
        let mut best: Option<(Measured, SchedConfig)> = None;
        for cand in accel_candidate_moves(&cfg, 1, ctx.server, &grid) {
            if let Some(meas) = ctx.eval(&cand) {
                let replace = match &best {
                    None => true,
                    Some((bm, bc)) => better((meas, &cand), (*bm, bc)),
                };
                if replace {
                    best = Some((meas, cand));
                }
            }
        }
        match best {
            Some((meas, cand)) if ctx.improves(meas.qps, cur.qps) => {
                cur = meas;
                cfg = cand;
            }
            _ => return Some((cfg, cur)),
        }
    }
}

/// One `P_sp(M+D)` hill-climb at fixed op-parallelism `o`. For accelerator
/// strategies every host-side move re-runs the nested accelerator climb, so
/// a host candidate is scored by the best accelerator point reachable from
/// the current one.
fn climb_at_o(
    ctx: &mut SearchContext<'_>,
    strategy: Strategy,
    o: u32,
) -> Option<(SchedConfig, Measured)> {
    let start = initial_cfg(strategy, o, ctx)?;
    let (mut cfg, mut cur) = if strategy.uses_accel() {
        accel_climb(ctx, start)?
    } else {
        let m = ctx.eval(&start)?;
        (start, m)
    };
    loop {
        let grid = ctx.batch_grid.clone();
        let cands = candidate_moves(&cfg, 1, ctx.server, &grid)
            .expect("climb steps are nonzero and stay on the grid");
        let mut best: Option<(Measured, SchedConfig)> = None;
        for cand in cands {
            let scored = if strategy.uses_accel() {
                accel_climb(ctx, cand)
            } else {
                ctx.eval(&cand).map(|m| (cand, m))
            };
            if let Some((cand, meas)) = scored {
                let replace = match &best {
                    None => true,
                    Some((bm, bc)) => better((meas, &cand), (*bm, bc)),
                };
                if replace {
                    best = Some((meas, cand));
                }
            }
        }
        match best {
            Some((meas, cand)) if ctx.improves(meas.qps, cur.qps) => {
                cur = meas;
                cfg = cand;
            }
            _ => return Some((cfg, cur)),
        }
    }
}

fn violation_tuple(strategy: Strategy, ctx: &SearchContext<'_>) -> EfficiencyTuple {
    let cfg = initial_cfg(strategy, 1, ctx).unwrap_or(SchedConfig {
        strategy,
        host: PoolConfig {
            threads: 1,
            cores_per_thread: 1,
            batch: BATCH_GRID[0],
        },
        sparse_host: None,
        accel: None,
    });
    EfficiencyTuple {
        qps: 0.0,
        power_w: 0.0,
        strategy,
        cfg,
        violation: true,
    }
}

/// Gradient-based search over `P_sp(M+D+O)` for one strategy, using and
/// updating the context's memo. Sweeps `o` ascending; each `o` restarts the
/// `(m, d)` climb from the minimum point; stops once the per-`o` peak no
/// longer improves.
pub fn gradient_search_in(ctx: &mut SearchContext<'_>, strategy: Strategy) -> EfficiencyTuple {
    let mut best: Option<(SchedConfig, Measured)> = None;
    let mut prev_peak: Option<f64> = None;
    for o in 1..=ctx.server.cpu.cores {
        if initial_cfg(strategy, o, ctx).is_none() {
            // Larger o claims even more cores; the space is exhausted.
            break;
        }
        let Some((cfg, meas)) = climb_at_o(ctx, strategy, o) else {
            if prev_peak.is_some() {
                break;
            }
            continue;
        };
        let replace = match &best {
            None => true,
            Some((bc, bm)) => better((meas, &cfg), (*bm, bc)),
        };
        if replace {
            best = Some((cfg, meas));
        }
        if let Some(prev) = prev_peak {
            if meas.qps <= prev {
                break;
            }
        }
        prev_peak = Some(meas.qps);
    }
    match best {
        Some((cfg, meas)) => EfficiencyTuple {
            qps: meas.qps,
            power_w: meas.power_w,
            strategy,
            cfg,
            violation: false,
        },
        None => violation_tuple(strategy, ctx),
    }
}

/// Exhaustive sweep of the same grid; the testing oracle. Ties break toward
/// lower power, then fewer threads, then smaller batch, scanning `o`, `m`,
/// `d` (and the accelerator grid) in ascending order.
pub fn brute_force_search_in(ctx: &mut SearchContext<'_>, strategy: Strategy) -> EfficiencyTuple {
    let grid = ctx.batch_grid.clone();
    let timeout = ctx.sla_s * ctx.cal.fusion_timeout_sla_frac;
    let mut best: Option<(SchedConfig, Measured)> = None;
    for o in 1..=ctx.server.cpu.cores {
        for m in 1..=ctx.server.cpu.cores {
            for &d in &grid {
                let accel_points: Vec<Option<(u32, u32)>> = if strategy.uses_accel() {
                    (1..=ACCEL_THREAD_MAX)
                        .flat_map(|ma| grid.iter().map(move |&da| Some((ma, da))))
                        .collect()
                } else {
                    alloc::vec![None]
                };
                for accel_point in accel_points {
                    let Some(cfg) =
                        make_cfg(strategy, ctx.server, m, o, d, accel_point, timeout)
                    else {
                        continue;
                    };
                    if let Some(meas) = ctx.eval(&cfg) {
                        let replace = match &best {
                            None => true,
                            Some((bc, bm)) => better((meas, &cfg), (*bm, bc)),
                        };
                        if replace {
                            best = Some((cfg, meas));
                        }
                    }
                }
            }
        }
    }
    match best {
        Some((cfg, meas)) => EfficiencyTuple {
            qps: meas.qps,
            power_w: meas.power_w,
            strategy,
            cfg,
            violation: false,
        },
        None => violation_tuple(strategy, ctx),
    }
}

/// Number of valid grid points `brute_force_search_in` visits for this
/// strategy on this server — the denominator of the search-cost budget.
pub fn grid_size(strategy: Strategy, server: &ServerSpec, batch_grid: &[u32]) -> u64 {
    let mut n = 0u64;
    for o in 1..=server.cpu.cores {
        for m in 1..=server.cpu.cores {
            for &d in batch_grid {
                if strategy.uses_accel() {
                    for ma in 1..=ACCEL_THREAD_MAX {
                        for &da in batch_grid {
                            if make_cfg(strategy, server, m, o, d, Some((ma, da)), 1.0).is_some() {
                                n += 1;
                            }
                        }
                    }
                } else if make_cfg(strategy, server, m, o, d, None, 1.0).is_some() {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Convenience wrapper: fresh context, one strategy.
#[allow(clippy::too_many_arguments)]
pub fn gradient_search(
    model: &ModelSpec,
    server: &ServerSpec,
    strategy: Strategy,
    class: SizeClass,
    sla_s: f64,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> EfficiencyTuple {
    let mut ctx = SearchContext::new(
        server,
        model,
        class,
        sla_s,
        power_budget_w,
        evaluator,
        seed,
        cal,
    );
    gradient_search_in(&mut ctx, strategy)
}

/// Convenience wrapper: fresh context, exhaustive oracle.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_search(
    model: &ModelSpec,
    server: &ServerSpec,
    strategy: Strategy,
    class: SizeClass,
    sla_s: f64,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> EfficiencyTuple {
    let mut ctx = SearchContext::new(
        server,
        model,
        class,
        sla_s,
        power_budget_w,
        evaluator,
        seed,
        cal,
    );
    brute_force_search_in(&mut ctx, strategy)
}

// ---------------------------------------------------------------------------
// Table construction.
// ---------------------------------------------------------------------------

/// Profile one (model, server) pair: gradient search over every strategy the
/// partitioner admits, keeping the best feasible tuple.
#[allow(clippy::too_many_arguments)]
pub fn profile_pair(
    model: &ModelSpec,
    server: &ServerSpec,
    class: SizeClass,
    sla_s: f64,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> PairEntry {
    profile_pair_logged(
        model,
        server,
        class,
        sla_s,
        power_budget_w,
        evaluator,
        seed,
        cal,
    )
    .0
}

/// [`profile_pair`] plus the full search trajectory (see
/// [`SearchContext::visited_log`]).
#[allow(clippy::too_many_arguments)]
pub fn profile_pair_logged(
    model: &ModelSpec,
    server: &ServerSpec,
    class: SizeClass,
    sla_s: f64,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> (PairEntry, Vec<String>) {
    let strategies = enumerate_strategies(model, server, class, cal.elem_bytes);
    if strategies.is_empty() {
        return (
            PairEntry::Unprofiled {
                reason: format!(
                    "model `{}` does not fit in server `{}` host memory",
                    model.name, server.name
                ),
            },
            Vec::new(),
        );
    }
    let mut ctx = SearchContext::new(
        server,
        model,
        class,
        sla_s,
        power_budget_w,
        evaluator,
        seed,
        cal,
    );
    let mut best: Option<EfficiencyTuple> = None;
    for strategy in strategies {
        let tuple = gradient_search_in(&mut ctx, strategy);
        if tuple.violation {
            continue;
        }
        let replace = match &best {
            None => true,
            Some(b) => {
                tuple.qps > b.qps || (tuple.qps == b.qps && tuple.power_w < b.power_w)
            }
        };
        if replace {
            best = Some(tuple);
        }
    }
    let entry = match best {
        Some(t) => PairEntry::Best(t),
        None => PairEntry::Unprofiled {
            reason: format!(
                "no configuration of `{}` on `{}` meets the SLA within the power budget",
                model.name, server.name
            ),
        },
    };
    (entry, ctx.visited_log())
}

/// Stable per-pair seed so pairs profile identically regardless of order.
pub fn pair_seed(base: u64, model: &str, server: &str) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for b in model.bytes().chain([0u8]).chain(server.bytes()) {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Profile the whole catalog cross product into an [`EfficiencyTable`].
/// `slas` maps model name to its tail-latency target in seconds; a missing
/// entry marks the pair unprofiled.
pub fn profile_all(
    models: &[ModelSpec],
    servers: &[ServerSpec],
    class: SizeClass,
    slas: &BTreeMap<String, f64>,
    power_budget_w: Option<f64>,
    evaluator: Evaluator,
    seed: u64,
    cal: &Calibration,
) -> EfficiencyTable {
    let mut table = EfficiencyTable::default();
    for model in models {
        for server in servers {
            let entry = match slas.get(&model.name) {
                None => PairEntry::Unprofiled {
                    reason: format!("no SLA configured for model `{}`", model.name),
                },
                Some(&sla_s) => profile_pair(
                    model,
                    server,
                    class,
                    sla_s,
                    power_budget_w,
                    evaluator,
                    pair_seed(seed, &model.name, &server.name),
                    cal,
                ),
            };
            table.insert(&model.name, &server.name, entry);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalogs;

    fn cal() -> Calibration {
        Calibration::default()
    }

    fn host_cfg(strategy: Strategy, m: u32, o: u32, d: u32, server: &ServerSpec) -> SchedConfig {
        make_cfg(strategy, server, m, o, d, None, f64::INFINITY)
            .expect("test points are on the grid")
    }

    #[test]
    fn interior_point_has_three_moves() {
        let c = Catalogs::builtin();
        let s = c.find_server("t2").unwrap();
        let cfg = host_cfg(Strategy::ModelBased, 4, 2, 64, s);
        let moves = candidate_moves(&cfg, 1, s, &BATCH_GRID).unwrap();
        assert_eq!(moves.len(), 3);
        for m in &moves {
            assert!(m != &cfg, "a move revisits the current point");
            assert!(m.validate(s).is_ok());
            assert!(
                m.host.threads > cfg.host.threads || m.host.batch > cfg.host.batch,
                "moves only go forward"
            );
        }
    }

    #[test]
    fn boundary_drops_thread_moves() {
        let c = Catalogs::builtin();
        let s = c.find_server("t2").unwrap(); // 20 cores
        let cfg = host_cfg(Strategy::ModelBased, 10, 2, 64, s);
        let moves = candidate_moves(&cfg, 1, s, &BATCH_GRID).unwrap();
        assert_eq!(moves.len(), 1);
        assert_eq!(moves[0].host.batch, 128);
        // Max batch as well: no moves remain.
        let cfg = host_cfg(Strategy::ModelBased, 10, 2, 4096, s);
        assert!(candidate_moves(&cfg, 1, s, &BATCH_GRID).unwrap().is_empty());
    }

    #[test]
    fn zero_step_is_rejected() {
        let c = Catalogs::builtin();
        let s = c.find_server("t2").unwrap();
        let cfg = host_cfg(Strategy::ModelBased, 2, 1, 32, s);
        assert!(candidate_moves(&cfg, 0, s, &BATCH_GRID).is_err());
    }

    #[test]
    fn sd_pipeline_moves_keep_sparse_pool_consistent() {
        let c = Catalogs::builtin();
        let s = c.find_server("t2").unwrap();
        let cfg = host_cfg(Strategy::SdPipelineHostOnly, 2, 2, 64, s);
        assert_eq!(cfg.sparse_host.unwrap().threads, 16);
        for m in candidate_moves(&cfg, 1, s, &BATCH_GRID).unwrap() {
            let sparse = m.sparse_host.unwrap();
            assert_eq!(
                m.host.threads * m.host.cores_per_thread + sparse.threads,
                s.cpu.cores
            );
            assert_eq!(sparse.batch, m.host.batch, "pipeline stages share d");
        }
    }

    #[test]
    fn single_point_space_returns_it() {
        let c = Catalogs::builtin();
        let mut server = c.find_server("t2").unwrap().clone();
        server.cpu.cores = 1;
        let m = c.find_model("rmc1").unwrap();
        let cal = cal();
        let mut ctx = SearchContext::new(
            &server,
            m,
            SizeClass::Prod,
            10.0, // loose SLA so the lone point is feasible
            None,
            Evaluator::Analytic,
            3,
            &cal,
        )
        .with_batch_grid(&[64]);
        let got = gradient_search_in(&mut ctx, Strategy::ModelBased);
        assert!(!got.violation);
        assert_eq!(
            (got.cfg.host.threads, got.cfg.host.cores_per_thread, got.cfg.host.batch),
            (1, 1, 64)
        );
        assert_eq!(ctx.evaluations(), 1);
    }

    #[test]
    fn impossible_sla_reports_violation_tuple() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let got = gradient_search(
            m,
            s,
            Strategy::ModelBased,
            SizeClass::Prod,
            1e-7,
            None,
            Evaluator::Analytic,
            3,
            &cal(),
        );
        assert!(got.violation);
        assert_eq!(got.qps, 0.0);
    }

    #[test]
    fn oracle_agrees_and_budget_holds_on_cpu_strategies() {
        let c = Catalogs::builtin();
        let cal = cal();
        let cases = [
            ("rmc1", "t2", Strategy::ModelBased, 0.020),
            ("rmc1", "t2", Strategy::SdPipelineHostOnly, 0.020),
            ("rmc2", "t3", Strategy::ModelBased, 0.050),
            ("mt-wnd", "t1", Strategy::SdPipelineHostOnly, 0.100),
        ];
        for (model, server, strategy, sla) in cases {
            let m = c.find_model(model).unwrap();
            let s = c.find_server(server).unwrap();
            let mk = || {
                SearchContext::new(
                    s,
                    m,
                    SizeClass::Prod,
                    sla,
                    None,
                    Evaluator::Analytic,
                    9,
                    &cal,
                )
            };
            let mut gctx = mk();
            let grad = gradient_search_in(&mut gctx, strategy);
            let mut bctx = mk();
            let oracle = brute_force_search_in(&mut bctx, strategy);
            assert!(
                oracle.qps >= grad.qps,
                "{model}/{server}: oracle below gradient"
            );
            assert_eq!(
                grad.cfg, oracle.cfg,
                "{model}/{server} {strategy:?}: gradient {:?} vs oracle {:?} ({} vs {} qps)",
                grad.cfg, oracle.cfg, grad.qps, oracle.qps
            );
            let budget = grid_size(strategy, s, &BATCH_GRID) as f64 * 0.15;
            assert!(
                (gctx.evaluations() as f64) <= budget,
                "{model}/{server}: {} evals over budget {budget}",
                gctx.evaluations()
            );
        }
    }

    #[test]
    fn accel_strategy_search_returns_feasible_nested_config() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc3").unwrap();
        let s = c.find_server("t7").unwrap();
        let got = gradient_search(
            m,
            s,
            Strategy::SdPipelineHostAccel,
            SizeClass::Prod,
            0.050,
            None,
            Evaluator::Analytic,
            9,
            &cal(),
        );
        assert!(!got.violation, "{got:?}");
        let a = got.cfg.accel.unwrap();
        assert!((1..=ACCEL_THREAD_MAX).contains(&a.co_located));
        assert!(BATCH_GRID.contains(&a.fused_batch));
        assert!(got.cfg.validate(s).is_ok());
        assert!(got.qps > 0.0);
    }

    #[test]
    fn profile_pair_flags_oversized_models() {
        let c = Catalogs::builtin();
        let din = c.find_model("din").unwrap();
        let t1 = c.find_server("t1").unwrap();
        let entry = profile_pair(
            din,
            t1,
            SizeClass::Prod,
            0.050,
            None,
            Evaluator::Analytic,
            3,
            &cal(),
        );
        assert!(matches!(entry, PairEntry::Unprofiled { .. }), "{entry:?}");
    }

    #[test]
    fn nmp_serves_one_hot_models_at_equal_qps_and_higher_power() {
        let c = Catalogs::builtin();
        let wnd = c.find_model("mt-wnd").unwrap();
        let t2 = c.find_server("t2").unwrap();
        let t3 = c.find_server("t3").unwrap(); // NMPx2, same CPU and base bandwidth
        let cal = cal();
        let run = |s| match profile_pair(
            wnd,
            s,
            SizeClass::Prod,
            0.100,
            None,
            Evaluator::Analytic,
            3,
            &cal,
        ) {
            PairEntry::Best(t) => t,
            e => panic!("unprofiled: {e:?}"),
        };
        let ddr = run(t2);
        let nmp = run(t3);
        assert!(
            (ddr.qps - nmp.qps).abs() / ddr.qps < 1e-9,
            "one-hot gathers cannot use the pooling units: {} vs {}",
            ddr.qps,
            nmp.qps
        );
        assert!(
            nmp.power_w > ddr.power_w,
            "NMP idles above DDR4: {} vs {}",
            nmp.power_w,
            ddr.power_w
        );
    }

    #[test]
    fn table_text_round_trips() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let s = c.find_server("t2").unwrap();
        let mut table = EfficiencyTable::default();
        let entry = profile_pair(
            m,
            s,
            SizeClass::Prod,
            0.020,
            None,
            Evaluator::Analytic,
            3,
            &cal(),
        );
        table.insert("rmc1", "t2", entry);
        table.insert(
            "din",
            "t1",
            PairEntry::Unprofiled {
                reason: String::from("model `din` does not fit in server `t1` host memory"),
            },
        );
        let text = table.to_text();
        let parsed = EfficiencyTable::parse_text(&text).unwrap();
        assert_eq!(parsed, table);
        assert!(table.get("rmc1", "t2").is_some());
        assert!(table.get("din", "t1").is_none());
    }

    #[test]
    fn pair_seed_is_stable_and_distinguishes_pairs() {
        assert_eq!(pair_seed(7, "rmc1", "t2"), pair_seed(7, "rmc1", "t2"));
        assert_ne!(pair_seed(7, "rmc1", "t2"), pair_seed(7, "rmc1", "t3"));
        assert_ne!(pair_seed(7, "rmc1", "t2"), pair_seed(8, "rmc1", "t2"));
        // The separator byte keeps (ab, c) and (a, bc) apart.
        assert_ne!(pair_seed(7, "ab", "c"), pair_seed(7, "a", "bc"));
    }
}

//! Online serving stage: heterogeneity-aware cluster provisioning.
//!
//! Each provisioning interval solves for the cheapest mix of server types
//! that covers every workload's forecast load: minimize total provisioned
//! power `Σ N_{h,m}·Power_{h,m}` subject to per-workload service
//! `Σ_h N_{h,m}·QPS_{h,m} ≥ load_m·(1+R%)` and per-type capacity
//! `Σ_m N_{h,m} ≤ N_h`. The LP relaxation is solved exactly by the
//! [`simplex`] core, rounded up, repaired against capacity, and guarded by
//! a min-of-two fallback so the result never costs more than the greedy
//! baseline. Random (NH), greedy, and priority-aware allocators provide the
//! comparison points, and [`run_cluster_sim`] plays any of them against
//! diurnal load traces with a server setup delay.

pub mod simplex;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loadgen::LoadTrace;
use crate::schedsearch::EfficiencyTable;
use simplex::{Cmp, Lp, LpError, LpRow};

/// One provisioning program: the efficiency tuples of `types × workloads`,
/// per-type availability, and the per-workload demand (load with the
/// over-provision rate already applied). Pairs the table cannot serve carry
/// `qps = 0` and never receive servers.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub types: Vec<String>,
    pub workloads: Vec<String>,
    /// `qps[h][m]`: latency-bounded throughput of one type-`h` server on
    /// workload `m`.
    pub qps: Vec<Vec<f64>>,
    /// `power[h][m]`: provisioned (peak) watts charged per such server.
    pub power: Vec<Vec<f64>>,
    pub availability: Vec<u32>,
    pub demand: Vec<f64>,
}

/// Integer server assignment `counts[h][m]` for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub counts: Vec<Vec<u32>>,
    pub time_s: f64,
}

/// Optimal solution of the LP relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    /// `n[h][m]`, fractional server counts.
    pub n: Vec<Vec<f64>>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProvisionError {
    /// No server type can serve this workload at all.
    Unservable { workload: String },
    /// Greedy-family allocator ran out of capacity for a workload.
    CapacityExhausted { workload: String },
    /// Rounding repair could not restore capacity feasibility.
    NoIntegerRepair,
    /// A constraint check failed by `amount`.
    Infeasible { constraint: String, amount: f64 },
    Lp(LpError),
    BadInput { reason: String },
}

impl core::fmt::Display for ProvisionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProvisionError::Unservable { workload } => {
                write!(f, "workload `{workload}` has no server type with positive throughput")
            }
            ProvisionError::CapacityExhausted { workload } => {
                write!(f, "capacity exhausted before workload `{workload}` was served")
            }
            ProvisionError::NoIntegerRepair => {
                write!(f, "no integer-feasible repair of the rounded solution exists")
            }
            ProvisionError::Infeasible { constraint, amount } => {
                write!(f, "`{constraint}` violated by {amount}")
            }
            ProvisionError::Lp(e) => write!(f, "{e}"),
            ProvisionError::BadInput { reason } => write!(f, "{reason}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ProvisionError {}

impl From<LpError> for ProvisionError {
    fn from(e: LpError) -> ProvisionError {
        ProvisionError::Lp(e)
    }
}

/// Service-constraint slack tolerated by the feasibility checker, relative
/// to demand.
const FEAS_TOL: f64 = 1e-6;

/// Build the provisioning program from profiled efficiency tuples.
/// `workloads` pairs each workload (model) name with its current load in
/// QPS; `types` pairs each server-type name with its availability `N_h`;
/// `r_percent` is the over-provision rate applied to every demand.
pub fn build_lp(
    table: &EfficiencyTable,
    workloads: &[(String, f64)],
    r_percent: f64,
    types: &[(String, u32)],
) -> Result<LpInstance, ProvisionError> {
    if workloads.is_empty() || types.is_empty() {
        return Err(ProvisionError::BadInput {
            reason: String::from("provisioning needs at least one workload and one server type"),
        });
    }
    if r_percent < 0.0 || !r_percent.is_finite() {
        return Err(ProvisionError::BadInput {
            reason: format!("over-provision rate {r_percent}% is not a nonnegative percentage"),
        });
    }
    let mut qps = vec![vec![0.0; workloads.len()]; types.len()];
    let mut power = vec![vec![0.0; workloads.len()]; types.len()];
    for (h, (tname, _)) in types.iter().enumerate() {
        for (m, (wname, _)) in workloads.iter().enumerate() {
            if let Some(t) = table.get(wname, tname) {
                qps[h][m] = t.qps;
                power[h][m] = t.power_w;
            }
        }
    }
    for (m, (wname, load)) in workloads.iter().enumerate() {
        if *load < 0.0 || !load.is_finite() {
            return Err(ProvisionError::BadInput {
                reason: format!("workload `{wname}` has load {load}"),
            });
        }
        if (0..types.len()).all(|h| qps[h][m] <= 0.0) {
            return Err(ProvisionError::Unservable {
                workload: wname.clone(),
            });
        }
    }
    Ok(LpInstance {
        types: types.iter().map(|(n, _)| n.clone()).collect(),
        workloads: workloads.iter().map(|(n, _)| n.clone()).collect(),
        qps,
        power,
        availability: types.iter().map(|&(_, a)| a).collect(),
        demand: workloads
            .iter()
            .map(|&(_, load)| load * (1.0 + r_percent / 100.0))
            .collect(),
    })
}

impl LpInstance {
    fn h(&self) -> usize {
        self.types.len()
    }

    fn m(&self) -> usize {
        self.workloads.len()
    }

    /// Variable order: `x[h*M + m] = N_{h,m}`.
    fn var(&self, h: usize, m: usize) -> usize {
        h * self.m() + m
    }

    fn to_lp(&self) -> Lp {
        let nvars = self.h() * self.m();
        let mut minimize = vec![0.0; nvars];
        for h in 0..self.h() {
            for m in 0..self.m() {
                minimize[self.var(h, m)] = self.power[h][m];
            }
        }
        let mut rows = Vec::with_capacity(self.m() + self.h());
        for m in 0..self.m() {
            let mut coeffs = vec![0.0; nvars];
            for h in 0..self.h() {
                coeffs[self.var(h, m)] = self.qps[h][m];
            }
            rows.push(LpRow {
                name: format!("service {}", self.workloads[m]),
                coeffs,
                cmp: Cmp::Ge,
                rhs: self.demand[m],
            });
        }
        for h in 0..self.h() {
            let mut coeffs = vec![0.0; nvars];
            for m in 0..self.m() {
                coeffs[self.var(h, m)] = 1.0;
            }
            rows.push(LpRow {
                name: format!("capacity {}", self.types[h]),
                coeffs,
                cmp: Cmp::Le,
                rhs: self.availability[h] as f64,
            });
        }
        Lp { minimize, rows }
    }

    /// Provisioned power of an integer assignment.
    pub fn power_of(&self, counts: &[Vec<u32>]) -> f64 {
        let mut w = 0.0;
        for h in 0..self.h() {
            for m in 0..self.m() {
                w += counts[h][m] as f64 * self.power[h][m];
            }
        }
        w
    }

    fn served(&self, counts: &[Vec<u32>], m: usize) -> f64 {
        (0..self.h()).map(|h| counts[h][m] as f64 * self.qps[h][m]).sum()
    }

    fn type_used(&self, counts: &[Vec<u32>], h: usize) -> u32 {
        counts[h].iter().sum()
    }
}

impl Allocation {
    pub fn servers(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }
}

/// Independent checker for the two constraint families (run on every matrix
/// the allocators emit): per-workload service with `FEAS_TOL` slack,
/// per-type capacity exactly, and no servers on zero-throughput pairs.
pub fn check_feasible(counts: &[Vec<u32>], inst: &LpInstance) -> Result<(), ProvisionError> {
    for m in 0..inst.m() {
        let served = inst.served(counts, m);
        if served + FEAS_TOL * inst.demand[m].max(1.0) < inst.demand[m] {
            return Err(ProvisionError::Infeasible {
                constraint: format!("service {}", inst.workloads[m]),
                amount: inst.demand[m] - served,
            });
        }
    }
    for h in 0..inst.h() {
        let used = inst.type_used(counts, h);
        if used > inst.availability[h] {
            return Err(ProvisionError::Infeasible {
                constraint: format!("capacity {}", inst.types[h]),
                amount: (used - inst.availability[h]) as f64,
            });
        }
        for m in 0..inst.m() {
            if counts[h][m] > 0 && inst.qps[h][m] <= 0.0 {
                return Err(ProvisionError::Infeasible {
                    constraint: format!(
                        "assignment {} -> {}",
                        inst.types[h], inst.workloads[m]
                    ),
                    amount: counts[h][m] as f64,
                });
            }
        }
    }
    Ok(())
}

/// Solve the LP relaxation to its optimal vertex.
pub fn solve_lp(inst: &LpInstance) -> Result<FractionalSolution, ProvisionError> {
    let sol = simplex::solve(&inst.to_lp())?;
    let mut n = vec![vec![0.0; inst.m()]; inst.h()];
    for h in 0..inst.h() {
        for m in 0..inst.m() {
            n[h][m] = sol.x[inst.var(h, m)];
        }
    }
    Ok(FractionalSolution {
        n,
        objective: sol.objective,
    })
}

/// Ranking key for the greedy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankBy {
    Qps,
    QpsPerWatt,
}

impl RankBy {
    fn key(self, inst: &LpInstance, h: usize, m: usize) -> f64 {
        match self {
            RankBy::Qps => inst.qps[h][m],
            RankBy::QpsPerWatt => {
                if inst.power[h][m] > 0.0 {
                    inst.qps[h][m] / inst.power[h][m]
                } else {
                    inst.qps[h][m]
                }
            }
        }
    }
}

fn greedy_fill(
    inst: &LpInstance,
    rank: RankBy,
    best_effort: bool,
) -> Result<Allocation, ProvisionError> {
    let mut counts = vec![vec![0u32; inst.m()]; inst.h()];
    let mut spare: Vec<u32> = inst.availability.clone();
    for m in 0..inst.m() {
        while inst.served(&counts, m) + FEAS_TOL < inst.demand[m] {
            let next = (0..inst.h())
                .filter(|&h| spare[h] > 0 && inst.qps[h][m] > 0.0)
                .max_by(|&a, &b| {
                    rank.key(inst, a, m)
                        .partial_cmp(&rank.key(inst, b, m))
                        .expect("finite ranks")
                        .then(b.cmp(&a)) // ties to the lower type index
                });
            match next {
                Some(h) => {
                    counts[h][m] += 1;
                    spare[h] -= 1;
                }
                None if best_effort => break,
                None => {
                    return Err(ProvisionError::CapacityExhausted {
                        workload: inst.workloads[m].clone(),
                    })
                }
            }
        }
    }
    Ok(Allocation { counts, time_s: 0.0 })
}

/// Heterogeneity-aware baseline: per workload, in declared order, consume
/// the highest-ranked available types until the service constraint is met.
/// Types contested across workloads therefore go first-come, first-served.
pub fn greedy_allocate(inst: &LpInstance, rank: RankBy) -> Result<Allocation, ProvisionError> {
    greedy_fill(inst, rank, false)
}

/// Like greedy, but stops at capacity exhaustion instead of failing — the
/// best-effort fallback the cluster simulation uses on infeasible intervals.
pub fn best_effort_allocate(inst: &LpInstance, rank: RankBy) -> Allocation {
    greedy_fill(inst, rank, true).expect("best-effort fill cannot fail")
}

/// Heterogeneity-oblivious baseline: one server at a time, type drawn
/// uniformly among those still available that can serve the workload.
pub fn nh_allocate(inst: &LpInstance, seed: u64) -> Result<Allocation, ProvisionError> {
    nh_allocate_rng(inst, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn nh_allocate_rng(
    inst: &LpInstance,
    rng: &mut ChaCha8Rng,
) -> Result<Allocation, ProvisionError> {
    let mut counts = vec![vec![0u32; inst.m()]; inst.h()];
    let mut spare: Vec<u32> = inst.availability.clone();
    for m in 0..inst.m() {
        while inst.served(&counts, m) + FEAS_TOL < inst.demand[m] {
            let pool: Vec<usize> = (0..inst.h())
                .filter(|&h| spare[h] > 0 && inst.qps[h][m] > 0.0)
                .collect();
            if pool.is_empty() {
                return Err(ProvisionError::CapacityExhausted {
                    workload: inst.workloads[m].clone(),
                });
            }
            let h = pool[rng.gen_range(0..pool.len())];
            counts[h][m] += 1;
            spare[h] -= 1;
        }
    }
    Ok(Allocation { counts, time_s: 0.0 })
}

/// Watts-per-QPS premium workload `m` pays if its most efficient available
/// type is given away and the load lands on its next-best type instead:
/// `gain = power_next/qps_next − power_best/qps_best`. Infinite when no
/// second type can serve the workload. Normalizing per unit of load (rather
/// than per server) is what lets a low-throughput workload outbid a
/// high-throughput one for a scarce efficient type.
fn contested_gain(inst: &LpInstance, spare: &[u32], m: usize) -> Option<(usize, f64)> {
    let per_qps = |h: usize| inst.power[h][m] / inst.qps[h][m];
    let mut ranked: Vec<usize> = (0..inst.h())
        .filter(|&h| spare[h] > 0 && inst.qps[h][m] > 0.0)
        .collect();
    ranked.sort_by(|&a, &b| {
        per_qps(a)
            .partial_cmp(&per_qps(b))
            .expect("finite rates")
            .then(a.cmp(&b))
    });
    let &best = ranked.first()?;
    let gain = match ranked.get(1) {
        None => f64::INFINITY,
        Some(&next) => per_qps(next) - per_qps(best),
    };
    Some((best, gain))
}

/// Priority-aware greedy: allocates one server at a time, always to the
/// unmet workload that would pay the largest per-QPS power premium for
/// losing its most efficient available type. Scarce efficient types
/// therefore go first to the workloads that benefit most; uncontested
/// instances reduce to plain greedy.
pub fn priority_allocate(inst: &LpInstance) -> Result<Allocation, ProvisionError> {
    let mut counts = vec![vec![0u32; inst.m()]; inst.h()];
    let mut spare: Vec<u32> = inst.availability.clone();
    loop {
        let mut pick: Option<(usize, usize, f64)> = None;
        for m in 0..inst.m() {
            if inst.served(&counts, m) + FEAS_TOL >= inst.demand[m] {
                continue;
            }
            let Some((best, gain)) = contested_gain(inst, &spare, m) else {
                return Err(ProvisionError::CapacityExhausted {
                    workload: inst.workloads[m].clone(),
                });
            };
            let replace = match pick {
                None => true,
                Some((_, _, g)) => gain > g,
            };
            if replace {
                pick = Some((m, best, gain));
            }
        }
        match pick {
            Some((m, h, _)) => {
                counts[h][m] += 1;
                spare[h] -= 1;
            }
            None => return Ok(Allocation { counts, time_s: 0.0 }),
        }
    }
}

/// Snap near-integers, otherwise round up; clamp tiny negatives.
fn ceil_snap(v: f64) -> u32 {
    let v = v.max(0.0);
    let nearest = crate::fmath::round(v);
    if (v - nearest).abs() < 1e-6 {
        nearest as u32
    } else {
        crate::fmath::ceil(v) as u32
    }
}

/// Integerize a fractional LP solution: ceiling-round, repair any capacity
/// overflow by shifting units to the cheapest (power-per-QPS) type with
/// spare room, trim units the ceiling made redundant, and never return
/// something costlier than the greedy baseline under the given ranking
/// (min-of-two guarantee).
pub fn round_and_repair(
    frac: &FractionalSolution,
    inst: &LpInstance,
    rank: RankBy,
) -> Result<Allocation, ProvisionError> {
    let mut counts = vec![vec![0u32; inst.m()]; inst.h()];
    for h in 0..inst.h() {
        for m in 0..inst.m() {
            if inst.qps[h][m] > 0.0 {
                counts[h][m] = ceil_snap(frac.n[h][m]);
            }
        }
    }
    for h in 0..inst.h() {
        while inst.type_used(&counts, h) > inst.availability[h] {
            // Cheapest repair: drop one unit of some workload on the
            // overloaded type and re-serve that workload elsewhere.
            let mut best: Option<(usize, f64)> = None;
            for m in 0..inst.m() {
                if counts[h][m] == 0 {
                    continue;
                }
                for h2 in 0..inst.h() {
                    if h2 == h
                        || inst.qps[h2][m] <= 0.0
                        || inst.type_used(&counts, h2) >= inst.availability[h2]
                    {
                        continue;
                    }
                    let penalty = inst.power[h2][m] / inst.qps[h2][m];
                    if best.map_or(true, |(_, p)| penalty < p) {
                        best = Some((m, penalty));
                    }
                }
            }
            let Some((m, _)) = best else {
                return Err(ProvisionError::NoIntegerRepair);
            };
            counts[h][m] -= 1;
            while inst.served(&counts, m) + FEAS_TOL < inst.demand[m] {
                let target = (0..inst.h())
                    .filter(|&h2| {
                        h2 != h
                            && inst.qps[h2][m] > 0.0
                            && inst.type_used(&counts, h2) < inst.availability[h2]
                    })
                    .min_by(|&a, &b| {
                        (inst.power[a][m] / inst.qps[a][m])
                            .partial_cmp(&(inst.power[b][m] / inst.qps[b][m]))
                            .expect("finite penalties")
                            .then(a.cmp(&b))
                    });
                match target {
                    Some(h2) => counts[h2][m] += 1,
                    None => return Err(ProvisionError::NoIntegerRepair),
                }
            }
        }
    }
    // Trim: the ceiling can leave a workload over-served by more than one
    // whole unit; drop the most power-hungry removable units first.
    loop {
        let mut drop: Option<(usize, usize, f64)> = None;
        for h in 0..inst.h() {
            for m in 0..inst.m() {
                if counts[h][m] == 0 {
                    continue;
                }
                let slack = inst.served(&counts, m) - inst.demand[m];
                if slack + FEAS_TOL < inst.qps[h][m] {
                    continue;
                }
                let w = inst.power[h][m];
                if drop.map_or(true, |(_, _, best)| w > best) {
                    drop = Some((h, m, w));
                }
            }
        }
        match drop {
            Some((h, m, _)) => counts[h][m] -= 1,
            None => break,
        }
    }
    check_feasible(&counts, inst)?;
    let alloc = Allocation { counts, time_s: 0.0 };
    if let Ok(greedy) = greedy_allocate(inst, rank) {
        if inst.power_of(&greedy.counts) < inst.power_of(&alloc.counts) {
            return Ok(greedy);
        }
    }
    Ok(alloc)
}

/// The full pipeline: LP relaxation, rounding, repair, trim, min-of-two.
pub fn hercules_allocate(inst: &LpInstance, rank: RankBy) -> Result<Allocation, ProvisionError> {
    round_and_repair(&solve_lp(inst)?, inst, rank)
}

// ---------------------------------------------------------------------------
// Time-stepped cluster simulation.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Hercules,
    Greedy,
    Nh,
    Priority,
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Hercules => "hercules",
            Policy::Greedy => "greedy",
            Policy::Nh => "nh",
            Policy::Priority => "priority",
        }
    }

    pub fn parse(label: &str) -> Option<Policy> {
        Some(match label {
            "hercules" => Policy::Hercules,
            "greedy" => Policy::Greedy,
            "nh" => Policy::Nh,
            "priority" => Policy::Priority,
            _ => None?,
        })
    }
}

/// Over-provision rate source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RMode {
    /// Constant percentage.
    Fixed(f64),
    /// Largest interval-over-interval growth in the trailing 24 h (the
    /// first day bootstraps from its own span, treating the trace's opening
    /// day as the operator's load profile).
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub interval_s: f64,
    pub setup_delay_s: f64,
    pub r_mode: RMode,
    /// Ranking used by the greedy policy, the min-of-two baseline inside
    /// the LP rounding, and best-effort fallbacks.
    pub rank: RankBy,
}

impl Default for SimParams {
    fn default() -> SimParams {
        SimParams {
            interval_s: 1800.0,
            setup_delay_s: 30.0,
            r_mode: RMode::Estimated,
            rank: RankBy::QpsPerWatt,
        }
    }
}

/// One provisioning interval's record.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    pub t_s: f64,
    /// Raw per-workload load read from the traces.
    pub loads: Vec<f64>,
    pub r_percent: f64,
    /// Charged allocation (active plus pending), `[h][m]`.
    pub committed: Vec<Vec<u32>>,
    /// Servers already past their setup delay, `[h][m]`.
    pub active: Vec<Vec<u32>>,
    pub power_w: f64,
    pub servers: u64,
    pub violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvisionTimeline {
    pub policy: Policy,
    pub interval_s: f64,
    pub types: Vec<String>,
    pub workloads: Vec<String>,
    /// `power[h][m]` charged per server, kept for reporting.
    pub power: Vec<Vec<f64>>,
    pub intervals: Vec<IntervalRecord>,
}

impl ProvisionTimeline {
    pub fn peak_power_w(&self) -> f64 {
        self.intervals.iter().fold(0.0, |a, r| a.max(r.power_w))
    }

    pub fn avg_power_w(&self) -> f64 {
        if self.intervals.is_empty() {
            0.0
        } else {
            self.intervals.iter().map(|r| r.power_w).sum::<f64>() / self.intervals.len() as f64
        }
    }

    pub fn peak_servers(&self) -> u64 {
        self.intervals.iter().map(|r| r.servers).max().unwrap_or(0)
    }

    pub fn avg_servers(&self) -> f64 {
        if self.intervals.is_empty() {
            0.0
        } else {
            self.intervals.iter().map(|r| r.servers as f64).sum::<f64>()
                / self.intervals.len() as f64
        }
    }

    pub fn violations(&self) -> usize {
        self.intervals.iter().filter(|r| r.violation.is_some()).count()
    }

    /// Columnar text: per-interval header lines, one row per committed
    /// (type, workload) pair, and a trailing summary block.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# provision-timeline v1\n# policy {} interval_s {}\n# columns: row t_s type workload count watts\n",
            self.policy.label(),
            self.interval_s
        );
        for r in &self.intervals {
            out.push_str(&format!(
                "at {} r_percent {} power_w {} servers {}",
                r.t_s, r.r_percent, r.power_w, r.servers
            ));
            match &r.violation {
                Some(v) => out.push_str(&format!(" violation {v}\n")),
                None => out.push('\n'),
            }
            for (h, tname) in self.types.iter().enumerate() {
                for (m, wname) in self.workloads.iter().enumerate() {
                    let c = r.committed[h][m];
                    if c > 0 {
                        out.push_str(&format!(
                            "row {} {tname} {wname} {c} {}\n",
                            r.t_s,
                            c as f64 * self.power[h][m]
                        ));
                    }
                }
            }
        }
        out.push_str(&format!(
            "summary policy {} intervals {} peak_power_w {} avg_power_w {} peak_servers {} avg_servers {} violations {}\n",
            self.policy.label(),
            self.intervals.len(),
            self.peak_power_w(),
            self.avg_power_w(),
            self.peak_servers(),
            self.avg_servers(),
            self.violations()
        ));
        out
    }
}

/// Estimated R at time `t`: the largest relative interval growth in the
/// trailing day (or the first day, early on), across all traces.
fn estimate_r_at(traces: &[LoadTrace], t: f64, interval_s: f64) -> f64 {
    let day = crate::loadgen::DAY_S;
    let (w0, w1) = if t >= day { (t - day, t) } else { (0.0, day) };
    let mut r = 0.0_f64;
    for trace in traces {
        let end = trace.end_s().min(w1);
        let mut u = w0;
        while u + interval_s <= end + 1e-9 {
            let a = trace.value_at(u);
            let b = trace.value_at(u + interval_s);
            if a > 0.0 {
                r = r.max((b - a) / a);
            }
            u += interval_s;
        }
    }
    r.max(0.0) * 100.0
}

/// Play one policy against per-workload load traces: every `interval_s` the
/// loop reads the loads, re-provisions, applies activations after
/// `setup_delay_s` (immediately at the initial deployment), and releases
/// surplus servers at once. Infeasible intervals are recorded as violations
/// and served best-effort; a service gap at a boundary (active capacity
/// below the raw load) is also a violation.
pub fn run_cluster_sim(
    table: &EfficiencyTable,
    types: &[(String, u32)],
    traces: &[LoadTrace],
    policy: Policy,
    params: &SimParams,
    seed: u64,
) -> Result<ProvisionTimeline, ProvisionError> {
    if params.interval_s <= 0.0 || params.setup_delay_s < 0.0 {
        return Err(ProvisionError::BadInput {
            reason: String::from("interval must be positive and setup delay nonnegative"),
        });
    }
    if traces.is_empty() {
        return Err(ProvisionError::BadInput {
            reason: String::from("no load traces supplied"),
        });
    }
    for trace in traces {
        trace.validate().map_err(|e| ProvisionError::BadInput {
            reason: format!("trace `{}`: {e}", trace.workload),
        })?;
        if trace.workload.is_empty() {
            return Err(ProvisionError::BadInput {
                reason: String::from("every trace must name its workload"),
            });
        }
    }
    let end = traces[0].end_s();
    if traces.iter().any(|t| (t.end_s() - end).abs() > 1e-6) {
        return Err(ProvisionError::BadInput {
            reason: String::from("traces are not aligned in time"),
        });
    }

    // Static template: validates that every workload is servable.
    let loads0: Vec<(String, f64)> = traces
        .iter()
        .map(|t| (t.workload.clone(), t.value_at(0.0)))
        .collect();
    let template = build_lp(table, &loads0, 0.0, types)?;
    let (h_n, m_n) = (template.h(), template.m());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active = vec![vec![0u32; m_n]; h_n];
    let mut pending: Vec<(f64, usize, usize, u32)> = Vec::new();
    let mut intervals = Vec::new();
    let mut step = 0u64;
    loop {
        let t = step as f64 * params.interval_s;
        if t >= end {
            break;
        }
        // Servers whose setup finished come online.
        pending.retain(|&(ready, h, m, c)| {
            if ready <= t + 1e-9 {
                active[h][m] += c;
                false
            } else {
                true
            }
        });
        let loads: Vec<f64> = traces.iter().map(|tr| tr.value_at(t)).collect();
        let mut violation: Option<String> = None;
        if step > 0 {
            for m in 0..m_n {
                let served = template.served(&active, m);
                if served + FEAS_TOL * loads[m].max(1.0) < loads[m] {
                    violation = Some(format!(
                        "service gap on {}: active {served} qps < load {} qps",
                        template.workloads[m], loads[m]
                    ));
                    break;
                }
            }
        }
        let r_percent = match params.r_mode {
            RMode::Fixed(v) => v,
            RMode::Estimated => estimate_r_at(traces, t, params.interval_s),
        };
        let mut inst = template.clone();
        for m in 0..m_n {
            inst.demand[m] = loads[m] * (1.0 + r_percent / 100.0);
        }
        let target = match policy {
            Policy::Hercules => hercules_allocate(&inst, params.rank),
            Policy::Greedy => greedy_allocate(&inst, params.rank),
            Policy::Nh => nh_allocate_rng(&inst, &mut rng),
            Policy::Priority => priority_allocate(&inst),
        };
        let target = match target {
            Ok(a) => a,
            Err(e) => {
                violation = Some(format!("allocation infeasible: {e}"));
                best_effort_allocate(&inst, params.rank)
            }
        };
        // Reconcile the cluster toward the target: activations wait out the
        // setup delay (the initial deployment precedes the simulated clock),
        // releases are immediate and cancel pending servers first.
        for h in 0..h_n {
            for m in 0..m_n {
                let queued: u32 = pending
                    .iter()
                    .filter(|&&(_, ph, pm, _)| ph == h && pm == m)
                    .map(|&(_, _, _, c)| c)
                    .sum();
                let cur = active[h][m] + queued;
                let tgt = target.counts[h][m];
                if tgt > cur {
                    let ready = if step == 0 { t } else { t + params.setup_delay_s };
                    pending.push((ready, h, m, tgt - cur));
                } else if tgt < cur {
                    let mut drop = cur - tgt;
                    for p in pending.iter_mut() {
                        if p.1 == h && p.2 == m && drop > 0 {
                            let d = p.3.min(drop);
                            p.3 -= d;
                            drop -= d;
                        }
                    }
                    pending.retain(|&(_, _, _, c)| c > 0);
                    active[h][m] -= drop;
                }
            }
        }
        pending.retain(|&(ready, h, m, c)| {
            if ready <= t + 1e-9 {
                active[h][m] += c;
                false
            } else {
                true
            }
        });
        let mut committed = active.clone();
        for &(_, h, m, c) in &pending {
            committed[h][m] += c;
        }
        let power_w = template.power_of(&committed);
        let servers = committed.iter().flatten().map(|&c| c as u64).sum();
        intervals.push(IntervalRecord {
            t_s: t,
            loads,
            r_percent,
            committed,
            active: active.clone(),
            power_w,
            servers,
            violation,
        });
        step += 1;
    }
    Ok(ProvisionTimeline {
        policy,
        interval_s: params.interval_s,
        types: template.types,
        workloads: template.workloads,
        power: template.power,
        intervals,
    })
}

// ---------------------------------------------------------------------------
// Live efficiency refresh.
// ---------------------------------------------------------------------------

/// One live measurement of a (workload, server type) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySample {
    pub model: String,
    pub server: String,
    pub qps: f64,
    pub power_w: f64,
}

/// Fold live measurements into the profiled table: QPS moves by an
/// exponential moving average with decay 0.8; the charged power budget only
/// ever decreases (it is never raised above the offline profile). Samples
/// for unknown or unprofiled pairs are ignored.
pub fn refresh_efficiency(table: &EfficiencyTable, samples: &[EfficiencySample]) -> EfficiencyTable {
    let mut out = table.clone();
    for s in samples {
        let key = (s.model.clone(), s.server.clone());
        if let Some(crate::schedsearch::PairEntry::Best(t)) = out.entries.get_mut(&key) {
            t.qps = 0.8 * t.qps + 0.2 * s.qps;
            t.power_w = t.power_w.min(0.8 * t.power_w + 0.2 * s.power_w);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::schedsearch::{EfficiencyTuple, PairEntry};
    use crate::perfmodel::{PoolConfig, SchedConfig, Strategy};

    /// Hand-built table: qps/power per (workload, type) grid.
    fn table_of(entries: &[(&str, &str, f64, f64)]) -> EfficiencyTable {
        let mut t = EfficiencyTable::default();
        for &(w, s, qps, power_w) in entries {
            let cfg = SchedConfig {
                strategy: Strategy::ModelBased,
                host: PoolConfig {
                    threads: 1,
                    cores_per_thread: 1,
                    batch: 16,
                },
                sparse_host: None,
                accel: None,
            };
            t.insert(
                w,
                s,
                PairEntry::Best(EfficiencyTuple {
                    qps,
                    power_w,
                    strategy: Strategy::ModelBased,
                    cfg,
                    violation: false,
                }),
            );
        }
        t
    }

    fn wl(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|&(n, l)| (n.to_string(), l)).collect()
    }

    fn ty(pairs: &[(&str, u32)]) -> Vec<(String, u32)> {
        pairs.iter().map(|&(n, a)| (n.to_string(), a)).collect()
    }

    #[test]
    fn dimensions_and_shape() {
        let table = table_of(&[
            ("w1", "a", 10.0, 100.0),
            ("w1", "b", 5.0, 40.0),
            ("w1", "c", 2.0, 10.0),
            ("w2", "a", 8.0, 100.0),
            ("w2", "b", 4.0, 40.0),
            ("w2", "c", 1.0, 10.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w1", 100.0), ("w2", 50.0)]),
            0.0,
            &ty(&[("a", 10), ("b", 10), ("c", 10)]),
        )
        .unwrap();
        let lp = inst.to_lp();
        assert_eq!(lp.minimize.len(), 6);
        assert_eq!(lp.rows.len(), 5);
        assert_eq!(
            lp.rows.iter().filter(|r| r.cmp == Cmp::Ge).count(),
            2,
            "one service row per workload"
        );
    }

    #[test]
    fn single_pair_solves_exactly() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let inst = build_lp(&table, &wl(&[("w", 100.0)]), 0.0, &ty(&[("t", 20)])).unwrap();
        let frac = solve_lp(&inst).unwrap();
        assert_eq!(frac.n[0][0], 10.0);
        assert_eq!(frac.objective, 500.0);
        let alloc = round_and_repair(&frac, &inst, RankBy::Qps).unwrap();
        assert_eq!(alloc.counts[0][0], 10);
    }

    #[test]
    fn zero_load_is_free() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let inst = build_lp(&table, &wl(&[("w", 0.0)]), 10.0, &ty(&[("t", 3)])).unwrap();
        assert_eq!(solve_lp(&inst).unwrap().objective, 0.0);
        for alloc in [
            greedy_allocate(&inst, RankBy::Qps).unwrap(),
            nh_allocate(&inst, 7).unwrap(),
            priority_allocate(&inst).unwrap(),
            hercules_allocate(&inst, RankBy::Qps).unwrap(),
        ] {
            assert_eq!(alloc.servers(), 0);
        }
    }

    #[test]
    fn overprovision_rate_tightens() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let base = build_lp(&table, &wl(&[("w", 95.0)]), 0.0, &ty(&[("t", 20)])).unwrap();
        let padded = build_lp(&table, &wl(&[("w", 95.0)]), 10.0, &ty(&[("t", 20)])).unwrap();
        let a = solve_lp(&base).unwrap().objective;
        let b = solve_lp(&padded).unwrap().objective;
        assert!(b > a, "{b} vs {a}");
        assert!((padded.demand[0] - 104.5).abs() < 1e-12);
    }

    #[test]
    fn unservable_workload_is_named() {
        let table = table_of(&[("w1", "t", 10.0, 50.0)]);
        let err = build_lp(
            &table,
            &wl(&[("w1", 10.0), ("ghost", 10.0)]),
            0.0,
            &ty(&[("t", 5)]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ProvisionError::Unservable {
                workload: String::from("ghost")
            }
        );
    }

    #[test]
    fn overload_certificate_names_service_row() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let inst = build_lp(&table, &wl(&[("w", 1000.0)]), 0.0, &ty(&[("t", 3)])).unwrap();
        match solve_lp(&inst) {
            Err(ProvisionError::Lp(LpError::Infeasible { row, shortfall })) => {
                assert_eq!(row, "service w");
                assert!((shortfall - 970.0).abs() < 1e-6, "{shortfall}");
            }
            other => panic!("expected certificate, got {other:?}"),
        }
        assert!(matches!(
            greedy_allocate(&inst, RankBy::Qps),
            Err(ProvisionError::CapacityExhausted { .. })
        ));
        let best = best_effort_allocate(&inst, RankBy::Qps);
        assert_eq!(best.counts[0][0], 3, "best effort drains the cluster");
    }

    #[test]
    fn ceiling_without_overflow_needs_no_repair() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let inst = build_lp(&table, &wl(&[("w", 91.0)]), 0.0, &ty(&[("t", 10)])).unwrap();
        let frac = solve_lp(&inst).unwrap();
        assert!((frac.n[0][0] - 9.1).abs() < 1e-9);
        let alloc = round_and_repair(&frac, &inst, RankBy::Qps).unwrap();
        assert_eq!(alloc.counts[0][0], 10);
    }

    #[test]
    fn repair_shifts_ceiling_overflow() {
        // One scarce efficient type shared by two workloads: the fractional
        // optimum packs it exactly; ceiling overflows it by one unit.
        let table = table_of(&[
            ("w1", "scarce", 10.0, 10.0),
            ("w2", "scarce", 10.0, 10.0),
            ("w1", "bulk", 10.0, 100.0),
            ("w2", "bulk", 10.0, 100.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w1", 5.0), ("w2", 5.0)]),
            0.0,
            &ty(&[("scarce", 1), ("bulk", 10)]),
        )
        .unwrap();
        let frac = solve_lp(&inst).unwrap();
        let alloc = round_and_repair(&frac, &inst, RankBy::Qps).unwrap();
        check_feasible(&alloc.counts, &inst).unwrap();
        assert_eq!(inst.type_used(&alloc.counts, 0), 1, "scarce capacity kept");
        assert_eq!(alloc.servers(), 2);
    }

    #[test]
    fn hercules_never_exceeds_greedy() {
        // Greedy myopically drains the high-QPS type; the LP balances.
        let table = table_of(&[
            ("w1", "fast", 100.0, 500.0),
            ("w1", "eco", 50.0, 60.0),
            ("w2", "fast", 100.0, 500.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w1", 400.0), ("w2", 300.0)]),
            0.0,
            &ty(&[("fast", 7), ("eco", 20)]),
        )
        .unwrap();
        let h = hercules_allocate(&inst, RankBy::Qps).unwrap();
        let g = greedy_allocate(&inst, RankBy::Qps).unwrap();
        check_feasible(&h.counts, &inst).unwrap();
        check_feasible(&g.counts, &inst).unwrap();
        assert!(inst.power_of(&h.counts) <= inst.power_of(&g.counts));
        // And the LP relaxation bounds every integer policy from below.
        let lower = solve_lp(&inst).unwrap().objective;
        for alloc in [&h, &g, &priority_allocate(&inst).unwrap(), &nh_allocate(&inst, 5).unwrap()] {
            assert!(inst.power_of(&alloc.counts) >= lower - 1e-9);
        }
    }

    #[test]
    fn random_instances_hold_bounds_and_feasibility() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut solved = 0;
        for _ in 0..80 {
            let h = rng.gen_range(1..=4usize);
            let m = rng.gen_range(1..=3usize);
            let mut entries = Vec::new();
            for hi in 0..h {
                for mi in 0..m {
                    if rng.gen_bool(0.85) {
                        entries.push((
                            format!("w{mi}"),
                            format!("t{hi}"),
                            rng.gen_range(5.0..200.0),
                            rng.gen_range(50.0..500.0),
                        ));
                    }
                }
            }
            let table = {
                let mut t = EfficiencyTable::default();
                for (w, s, q, p) in &entries {
                    t.insert(
                        w,
                        s,
                        PairEntry::Best(EfficiencyTuple {
                            qps: *q,
                            power_w: *p,
                            strategy: Strategy::ModelBased,
                            cfg: SchedConfig {
                                strategy: Strategy::ModelBased,
                                host: PoolConfig {
                                    threads: 1,
                                    cores_per_thread: 1,
                                    batch: 16,
                                },
                                sparse_host: None,
                                accel: None,
                            },
                            violation: false,
                        }),
                    );
                }
                t
            };
            let workloads: Vec<(String, f64)> = (0..m)
                .map(|mi| (format!("w{mi}"), rng.gen_range(0.0..2000.0)))
                .collect();
            let types: Vec<(String, u32)> =
                (0..h).map(|hi| (format!("t{hi}"), rng.gen_range(1..40))).collect();
            let Ok(inst) = build_lp(&table, &workloads, rng.gen_range(0.0..20.0), &types) else {
                continue;
            };
            let Ok(frac) = solve_lp(&inst) else { continue };
            let Ok(hercules) = round_and_repair(&frac, &inst, RankBy::Qps) else {
                continue;
            };
            solved += 1;
            check_feasible(&hercules.counts, &inst).unwrap();
            assert!(inst.power_of(&hercules.counts) >= frac.objective - 1e-9);
            if let Ok(g) = greedy_allocate(&inst, RankBy::Qps) {
                check_feasible(&g.counts, &inst).unwrap();
                assert!(inst.power_of(&hercules.counts) <= inst.power_of(&g.counts) + 1e-9);
            }
            if let Ok(p) = priority_allocate(&inst) {
                check_feasible(&p.counts, &inst).unwrap();
                assert!(inst.power_of(&p.counts) >= frac.objective - 1e-9);
            }
            if let Ok(n) = nh_allocate(&inst, 11) {
                check_feasible(&n.counts, &inst).unwrap();
            }
        }
        assert!(solved >= 30, "only {solved} random instances were solvable");
    }

    #[test]
    fn nh_is_deterministic_per_seed() {
        let table = table_of(&[
            ("w", "a", 10.0, 100.0),
            ("w", "b", 10.0, 100.0),
            ("w", "c", 10.0, 100.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w", 200.0)]),
            0.0,
            &ty(&[("a", 10), ("b", 10), ("c", 10)]),
        )
        .unwrap();
        let x = nh_allocate(&inst, 42).unwrap();
        let y = nh_allocate(&inst, 42).unwrap();
        assert_eq!(x, y);
        let z = nh_allocate(&inst, 43).unwrap();
        assert!(z == x || z.servers() == x.servers());
    }

    #[test]
    fn priority_matches_greedy_when_uncontested() {
        // Each workload prefers a different type.
        let table = table_of(&[
            ("w1", "a", 20.0, 100.0),
            ("w1", "b", 5.0, 100.0),
            ("w2", "a", 5.0, 100.0),
            ("w2", "b", 20.0, 100.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w1", 100.0), ("w2", 100.0)]),
            0.0,
            &ty(&[("a", 10), ("b", 10)]),
        )
        .unwrap();
        let p = priority_allocate(&inst).unwrap();
        let g = greedy_allocate(&inst, RankBy::Qps).unwrap();
        assert_eq!(p.counts, g.counts);
    }

    #[test]
    fn priority_gives_scarce_type_to_the_needier_workload() {
        // Both workloads rank `scarce` first; w2's fallback is terrible, so
        // w2 pays a far larger premium per lost unit and must win the
        // contested units.
        let table = table_of(&[
            ("w1", "scarce", 100.0, 100.0),
            ("w1", "decent", 90.0, 100.0),
            ("w2", "scarce", 100.0, 100.0),
            ("w2", "weak", 20.0, 100.0),
        ]);
        let inst = build_lp(
            &table,
            &wl(&[("w1", 150.0), ("w2", 150.0)]),
            0.0,
            &ty(&[("scarce", 2), ("decent", 10), ("weak", 10)]),
        )
        .unwrap();
        let p = priority_allocate(&inst).unwrap();
        check_feasible(&p.counts, &inst).unwrap();
        assert_eq!(p.counts[0][1], 2, "w2 takes every scarce unit");
        assert_eq!(p.counts[0][0], 0);
        // Greedy (descending demand, ties by order) hands them to w1 first.
        let g = greedy_allocate(&inst, RankBy::Qps).unwrap();
        assert_eq!(g.counts[0][0], 2);
        assert!(
            inst.power_of(&p.counts) <= inst.power_of(&g.counts),
            "priority is no worse on the contested instance"
        );
    }

    fn flat_trace(workload: &str, qps: f64, steps: usize, interval_s: f64) -> LoadTrace {
        LoadTrace {
            workload: workload.to_string(),
            interval_s,
            // steps+1 points fence in exactly `steps` provisioning intervals
            points: (0..=steps).map(|i| (i as f64 * interval_s, qps)).collect(),
        }
    }

    #[test]
    fn constant_load_reaches_steady_state() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let traces = [flat_trace("w", 100.0, 48, 1800.0)];
        let params = SimParams {
            r_mode: RMode::Fixed(0.0),
            ..SimParams::default()
        };
        for policy in [Policy::Hercules, Policy::Greedy, Policy::Nh, Policy::Priority] {
            let tl = run_cluster_sim(&table, &ty(&[("t", 20)]), &traces, policy, &params, 3)
                .unwrap();
            assert_eq!(tl.intervals.len(), 48);
            assert_eq!(tl.violations(), 0, "{policy:?}");
            let first = &tl.intervals[0];
            assert_eq!(first.committed[0][0], 10);
            for r in &tl.intervals {
                assert_eq!(r.committed, first.committed, "{policy:?} steady state");
                assert_eq!(r.power_w, 500.0);
            }
            // Initial deployment is immediate; afterwards active == target.
            assert_eq!(tl.intervals[0].active[0][0], 10);
        }
    }

    #[test]
    fn overprovision_rate_covers_ramp_growth() {
        // Load grows 25% per interval at the start; provisioning is
        // reactive, so only R headroom can bridge each boundary.
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let interval = 600.0;
        let ramp = |_| LoadTrace {
            workload: String::from("w"),
            interval_s: interval,
            points: (0..=24)
                .map(|i| (i as f64 * interval, 40.0 + 10.0 * i as f64))
                .collect(),
        };
        let mut params = SimParams {
            interval_s: interval,
            setup_delay_s: 0.0,
            r_mode: RMode::Fixed(25.0),
            rank: RankBy::Qps,
        };
        let covered = run_cluster_sim(
            &table,
            &ty(&[("t", 40)]),
            &[ramp(())],
            Policy::Hercules,
            &params,
            3,
        )
        .unwrap();
        assert_eq!(covered.violations(), 0);
        for r in &covered.intervals {
            assert_eq!(r.active, r.committed, "no pending with zero delay");
            assert!(r.active[0][0] as f64 * 10.0 + 1e-9 >= r.loads[0]);
        }
        // Without headroom every rising boundary leaves a service gap.
        params.r_mode = RMode::Fixed(0.0);
        let bare = run_cluster_sim(
            &table,
            &ty(&[("t", 40)]),
            &[ramp(())],
            Policy::Hercules,
            &params,
            3,
        )
        .unwrap();
        assert!(bare.violations() > 0);
    }

    #[test]
    fn setup_delay_defers_growth_activations() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let interval = 600.0;
        // Step load: 100 → 200 at the second boundary.
        let trace = LoadTrace {
            workload: String::from("w"),
            interval_s: interval,
            points: vec![(0.0, 100.0), (600.0, 200.0), (1200.0, 200.0), (1800.0, 200.0)],
        };
        let params = SimParams {
            interval_s: interval,
            setup_delay_s: 30.0,
            r_mode: RMode::Fixed(0.0),
            rank: RankBy::Qps,
        };
        let tl = run_cluster_sim(&table, &ty(&[("t", 40)]), &[trace], Policy::Greedy, &params, 3)
            .unwrap();
        // At the 600 s boundary the new servers are still pending.
        assert_eq!(tl.intervals[1].active[0][0], 10);
        assert_eq!(tl.intervals[1].committed[0][0], 20);
        // By the next boundary they are active.
        assert_eq!(tl.intervals[2].active[0][0], 20);
    }

    #[test]
    fn refresh_updates_qps_and_never_raises_power() {
        let table = table_of(&[("w", "t", 100.0, 50.0)]);
        assert_eq!(refresh_efficiency(&table, &[]), table);
        let one = refresh_efficiency(
            &table,
            &[EfficiencySample {
                model: String::from("w"),
                server: String::from("t"),
                qps: 80.0,
                power_w: 60.0,
            }],
        );
        let t1 = one.get("w", "t").unwrap();
        assert!((t1.qps - 96.0).abs() < 1e-12, "0.8·100 + 0.2·80");
        assert_eq!(t1.power_w, 50.0, "power is never raised");
        // Repeated identical samples converge to the sample.
        let mut cur = table.clone();
        let sample = EfficiencySample {
            model: String::from("w"),
            server: String::from("t"),
            qps: 80.0,
            power_w: 40.0,
        };
        for _ in 0..200 {
            cur = refresh_efficiency(&cur, &[sample.clone()]);
        }
        let t = cur.get("w", "t").unwrap();
        assert!((t.qps - 80.0).abs() < 1e-9);
        assert!((t.power_w - 40.0).abs() < 1e-9, "power EMA decreases toward 40");
    }

    #[test]
    fn timeline_text_has_rows_and_summary() {
        let table = table_of(&[("w", "t", 10.0, 50.0)]);
        let traces = [flat_trace("w", 100.0, 4, 1800.0)];
        let tl = run_cluster_sim(
            &table,
            &ty(&[("t", 20)]),
            &traces,
            Policy::Greedy,
            &SimParams {
                r_mode: RMode::Fixed(0.0),
                ..SimParams::default()
            },
            3,
        )
        .unwrap();
        let text = tl.to_text();
        assert!(text.contains("policy greedy"));
        assert!(text.contains("summary policy greedy intervals 4"));
        assert_eq!(text.matches("\nat ").count() + 1, 5, "4 interval headers");
    }
}

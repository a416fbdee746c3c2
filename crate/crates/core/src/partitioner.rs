//! Hardware-aware model partition and strategy enumeration.
//!
//! Splits a model into DenseNet, SparseNet (full embedding tables, host
//! resident) and Hot-SparseNet (the most frequently accessed rows, sized to
//! the accelerator budget per co-located thread), driven by a Zipfian access
//! profile shared with the load generator; and enumerates which scheduling
//! strategies are feasible for a (model, server) pair.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{model_footprint, ModelSpec, ServerSpec, SizeClass};
use crate::fmath;
use crate::perfmodel::{LeftoverStrategy, Strategy};

/// Largest `n` for which generalized harmonic numbers are summed exactly;
/// beyond it an Euler-Maclaurin continuation takes over.
const EXACT_HARMONIC_N: u64 = 4096;

/// Generalized harmonic number H_s(n) = sum_{i=1..n} i^{-s}.
///
/// Exact summation up to [`EXACT_HARMONIC_N`]; larger arguments use the
/// Euler-Maclaurin continuation from that base, accurate to well below 1e-12
/// relative for the exponents used here.
pub fn harmonic(n: u64, s: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let base = n.min(EXACT_HARMONIC_N);
    let mut sum = 0.0;
    for i in 1..=base {
        sum += fmath::powf(i as f64, -s);
    }
    if n <= EXACT_HARMONIC_N {
        return sum;
    }
    let (a, b) = (EXACT_HARMONIC_N as f64, n as f64);
    let integral = if (s - 1.0).abs() < 1e-12 {
        fmath::ln(b / a)
    } else {
        (fmath::powf(b, 1.0 - s) - fmath::powf(a, 1.0 - s)) / (1.0 - s)
    };
    let f = |x: f64| fmath::powf(x, -s);
    let fp = |x: f64| -s * fmath::powf(x, -s - 1.0);
    sum + integral + (f(b) - f(a)) / 2.0 + (fp(b) - fp(a)) / 12.0
}

/// Fraction of Zipf(s) accesses over `rows` rows captured by the `hot`
/// most popular rows.
pub fn zipf_hit_rate(rows: u64, hot: u64, s: f64) -> f64 {
    if rows == 0 || hot == 0 {
        return 0.0;
    }
    let hot = hot.min(rows);
    harmonic(hot, s) / harmonic(rows, s)
}

/// One table's popularity ranking: Zipf(s) over `rows` rows, with popularity
/// rank r mapped to physical row id (mul * r + add) mod rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TableProfile {
    pub rows: u64,
    /// Expected lookups per query item landing on this table.
    pub lookup_weight: f64,
    perm_mul: u64,
    perm_add: u64,
}

impl TableProfile {
    /// Physical row id of popularity rank `rank`.
    pub fn row_of_rank(&self, rank: u64) -> u64 {
        debug_assert!(rank < self.rows);
        (self
            .perm_mul
            .wrapping_mul(rank)
            .wrapping_add(self.perm_add))
            % self.rows
    }
}

/// Per-table row-frequency ranking shared by the partitioner and the load
/// generator's lookup sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessProfile {
    pub zipf_s: f64,
    pub tables: Vec<TableProfile>,
}

/// Build the Zipfian access profile for a model.
///
/// The per-table rank-to-row permutations are drawn from the seed, so the
/// ranking is deterministic per (model, seed).
pub fn build_access_profile(
    model: &ModelSpec,
    class: SizeClass,
    zipf_s: f64,
    seed: u64,
) -> AccessProfile {
    assert!(zipf_s > 0.0, "zipf exponent must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = fmath::round(model.emb_rows(class).midpoint()) as u64;
    let weights = model.table_lookup_mids();
    let tables = weights
        .into_iter()
        .map(|lookup_weight| {
            // Any multiplier coprime with `rows` permutes 0..rows; draw odd
            // candidates until one fits.
            let perm_mul = loop {
                let c = rng.gen_range(1..rows.max(2)) | 1;
                if gcd(c, rows) == 1 {
                    break c;
                }
            };
            let perm_add = rng.gen_range(0..rows.max(1));
            TableProfile {
                rows,
                lookup_weight,
                perm_mul,
                perm_add,
            }
        })
        .collect();
    AccessProfile { zipf_s, tables }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Device classes a sub-graph can be placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Device {
    Host,
    Accel,
}

/// Where each sub-graph lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub dense: Device,
    pub sparse_full: Device,
    pub sparse_hot: Option<Device>,
}

/// The three-way model split for one (model, server, co-location) choice.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub model: String,
    pub size_class: SizeClass,
    /// Accelerator threads sharing the budget (1 for host-only plans).
    pub co_location: u32,
    pub dense_bytes: u64,
    pub sparse_full_bytes: u64,
    /// Hot row count per table (popularity-rank prefix).
    pub hot_rows: Vec<u64>,
    pub hot_bytes: u64,
    /// Per-table probability that a single lookup hits the hot rows.
    pub hot_hit_rates: Vec<f64>,
    /// Expected fraction of lookups served by the hot tables.
    pub hot_hit_rate: f64,
    pub placement: Placement,
}

/// Partition failure: some sub-graph cannot be placed.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionError {
    /// Dense weights alone exceed the per-thread accelerator budget.
    DenseExceedsBudget {
        model: String,
        dense_bytes: u64,
        budget_bytes: u64,
    },
    /// Full model does not fit in host memory.
    HostCapacity {
        model: String,
        needed_bytes: u64,
        capacity_bytes: u64,
    },
}

impl core::fmt::Display for PartitionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PartitionError::DenseExceedsBudget {
                model,
                dense_bytes,
                budget_bytes,
            } => write!(
                f,
                "`{model}` dense sub-graph ({dense_bytes} B) exceeds the accelerator budget ({budget_bytes} B)"
            ),
            PartitionError::HostCapacity {
                model,
                needed_bytes,
                capacity_bytes,
            } => write!(
                f,
                "`{model}` needs {needed_bytes} B but host memory holds {capacity_bytes} B"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PartitionError {}

/// Partition `model` for `server` with `co_location` accelerator threads.
///
/// The full SparseNet always stays host-resident (it serves hot misses), so
/// host capacity is checked first. With an accelerator present, each
/// co-located thread's budget is HBM capacity / co_location; dense weights
/// are charged against it and the remainder fills hot rows greedily by
/// global access frequency.
pub fn partition_model(
    model: &ModelSpec,
    server: &ServerSpec,
    class: SizeClass,
    co_location: u32,
    profile: &AccessProfile,
    elem_bytes: u32,
) -> Result<PartitionPlan, PartitionError> {
    assert!(co_location >= 1);
    let dense_bytes = model.dense_weight_bytes(elem_bytes);
    let footprint = model_footprint(model, class, elem_bytes);
    if footprint as f64 > server.mem_bytes() {
        return Err(PartitionError::HostCapacity {
            model: model.name.clone(),
            needed_bytes: footprint,
            capacity_bytes: server.mem_bytes() as u64,
        });
    }
    let sparse_full_bytes = footprint - dense_bytes;

    let Some(_) = server.accel else {
        return Ok(PartitionPlan {
            model: model.name.clone(),
            size_class: class,
            co_location: 1,
            dense_bytes,
            sparse_full_bytes,
            hot_rows: vec![0; profile.tables.len()],
            hot_bytes: 0,
            hot_hit_rates: vec![0.0; profile.tables.len()],
            hot_hit_rate: 0.0,
            placement: Placement {
                dense: Device::Host,
                sparse_full: Device::Host,
                sparse_hot: None,
            },
        });
    };

    let budget_bytes = server.hbm_bytes() / co_location as f64;
    if dense_bytes as f64 > budget_bytes {
        return Err(PartitionError::DenseExceedsBudget {
            model: model.name.clone(),
            dense_bytes,
            budget_bytes: budget_bytes as u64,
        });
    }
    let row_bytes = (model.emb_dim * elem_bytes) as u64;
    let budget_rows = ((budget_bytes - dense_bytes as f64) / row_bytes as f64) as u64;
    let hot_rows = fill_hot_rows(profile, budget_rows);
    let hot_bytes: u64 = hot_rows.iter().sum::<u64>() * row_bytes;

    let total_weight: f64 = profile.tables.iter().map(|t| t.lookup_weight).sum();
    let hot_hit_rates: Vec<f64> = profile
        .tables
        .iter()
        .zip(&hot_rows)
        .map(|(t, &h)| zipf_hit_rate(t.rows, h, profile.zipf_s))
        .collect();
    let hot_hit_rate = profile
        .tables
        .iter()
        .zip(&hot_hit_rates)
        .map(|(t, &hit)| t.lookup_weight * hit)
        .sum::<f64>()
        / total_weight;

    Ok(PartitionPlan {
        model: model.name.clone(),
        size_class: class,
        co_location,
        dense_bytes,
        sparse_full_bytes,
        hot_rows,
        hot_bytes,
        hot_hit_rates,
        hot_hit_rate,
        placement: Placement {
            dense: Device::Accel,
            sparse_full: Device::Host,
            sparse_hot: Some(Device::Accel),
        },
    })
}

/// Greedy global hot-row fill: rows are admitted in descending access rate
/// (table lookup weight times Zipf mass), realized by water-filling a common
/// rate threshold across tables.
fn fill_hot_rows(profile: &AccessProfile, budget_rows: u64) -> Vec<u64> {
    let s = profile.zipf_s;
    let counts_at = |theta: f64| -> u64 {
        profile
            .tables
            .iter()
            .map(|t| {
                if t.lookup_weight <= 0.0 {
                    return 0;
                }
                // Largest k with weight * k^-s >= theta.
                let k = fmath::powf(t.lookup_weight / theta, 1.0 / s);
                (k as u64).min(t.rows)
            })
            .sum()
    };
    let total_rows: u64 = profile.tables.iter().map(|t| t.rows).sum();
    if budget_rows >= total_rows {
        return profile.tables.iter().map(|t| t.rows).collect();
    }
    if budget_rows == 0 {
        return vec![0; profile.tables.len()];
    }
    // Bisect the admission threshold, starting from a ceiling above every
    // table's top-row rate so the bracket always contains the answer.
    let max_w = profile
        .tables
        .iter()
        .map(|t| t.lookup_weight)
        .fold(0.0_f64, f64::max);
    let (mut lo, mut hi) = (1e-30_f64, max_w * 2.0);
    for _ in 0..200 {
        let mid = fmath::sqrt(lo * hi);
        if counts_at(mid) > budget_rows {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut hot: Vec<u64> = profile
        .tables
        .iter()
        .map(|t| {
            if t.lookup_weight <= 0.0 {
                return 0;
            }
            let k = fmath::powf(t.lookup_weight / hi, 1.0 / s);
            (k as u64).min(t.rows)
        })
        .collect();
    // Ties at the threshold admit whole groups of rows at once; settle the
    // residue one row at a time by marginal access rate.
    let mut used: u64 = hot.iter().sum();
    while used < budget_rows {
        let next = profile
            .tables
            .iter()
            .enumerate()
            .filter(|(i, t)| hot[*i] < t.rows)
            .map(|(i, t)| {
                let rate = t.lookup_weight * fmath::powf((hot[i] + 1) as f64, -s);
                (i, rate)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        match next {
            Some((i, _)) => {
                hot[i] += 1;
                used += 1;
            }
            None => break,
        }
    }
    while used > budget_rows {
        let (worst, _) = profile
            .tables
            .iter()
            .enumerate()
            .filter(|(i, _)| hot[*i] > 0)
            .map(|(i, t)| (i, t.lookup_weight * fmath::powf(hot[i] as f64, -s)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .expect("used > 0 implies a nonempty table");
        hot[worst] -= 1;
        used -= 1;
    }
    hot
}

/// All scheduling strategies worth profiling for this (model, server) pair,
/// i.e. those whose partition is feasible.
pub fn enumerate_strategies(
    model: &ModelSpec,
    server: &ServerSpec,
    class: SizeClass,
    elem_bytes: u32,
) -> Vec<Strategy> {
    let footprint = model_footprint(model, class, elem_bytes);
    // The full SparseNet is host-resident under every strategy.
    if footprint as f64 > server.mem_bytes() {
        return Vec::new();
    }
    let mut strategies = vec![Strategy::ModelBased, Strategy::SdPipelineHostOnly];
    if server.accel.is_some() {
        let dense = model.dense_weight_bytes(elem_bytes);
        if (dense as f64) <= server.hbm_bytes() {
            strategies.push(Strategy::SdPipelineHostAccel);
            strategies.push(Strategy::HotDenseOnAccel(LeftoverStrategy::ModelBased));
            strategies.push(Strategy::HotDenseOnAccel(LeftoverStrategy::SdPipelineHostOnly));
        }
    }
    strategies
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalogs;

    #[test]
    fn harmonic_matches_direct_sum_across_continuation() {
        for &s in &[0.5, 0.9, 1.0, 1.3] {
            let n = 300_000_u64; // far beyond the exact-summation cutoff
            let mut exact = 0.0;
            for i in 1..=n {
                exact += (i as f64).powf(-s);
            }
            let approx = harmonic(n, s);
            assert!(
                ((approx - exact) / exact).abs() < 1e-12,
                "s={s}: {approx} vs {exact}"
            );
        }
    }

    #[test]
    fn near_uniform_zipf_hit_tracks_fraction() {
        let hit = zipf_hit_rate(100_000, 10_000, 0.01);
        assert!((hit - 0.1).abs() < 0.02, "hit {hit}");
    }

    #[test]
    fn zipf_unit_exponent_hit_rate_from_harmonic_oracle() {
        // 1M rows, top 10% hot, s = 1.
        let hit = zipf_hit_rate(1_000_000, 100_000, 1.0);
        let mut top = 0.0;
        let mut all = 0.0;
        for i in 1..=1_000_000_u64 {
            let mass = 1.0 / i as f64;
            all += mass;
            if i <= 100_000 {
                top += mass;
            }
        }
        assert!((hit - top / all).abs() < 1e-12);
        assert!(hit > 0.8);
    }

    #[test]
    fn profile_deterministic_per_seed() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap();
        let a = build_access_profile(m, SizeClass::Prod, 0.9, 5);
        let b = build_access_profile(m, SizeClass::Prod, 0.9, 5);
        assert_eq!(a, b);
        let other = build_access_profile(m, SizeClass::Prod, 0.9, 6);
        assert_ne!(a, other);
        // Permutations cover distinct rows.
        let t = &a.tables[0];
        let ids: alloc::collections::BTreeSet<u64> = (0..1000).map(|r| t.row_of_rank(r)).collect();
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn rmc3_on_v100_budget_rule() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc3").unwrap();
        let t7 = c.find_server("t7").unwrap();
        let profile = build_access_profile(m, SizeClass::Prod, 0.9, 1);
        let mut last_hit = 1.0_f64;
        let mut last_bytes = u64::MAX;
        for co in [1_u32, 2, 4] {
            let plan = partition_model(m, t7, SizeClass::Prod, co, &profile, 4).unwrap();
            let budget = t7.hbm_bytes() / co as f64 - plan.dense_bytes as f64;
            assert!(plan.hot_bytes as f64 <= budget, "co={co}");
            // 19.2 GB of embeddings never fully fit 16 GB.
            assert!(plan.hot_bytes < plan.sparse_full_bytes);
            assert!(plan.hot_hit_rate > 0.0 && plan.hot_hit_rate < 1.0);
            assert!(plan.hot_hit_rate <= last_hit + 1e-12);
            assert!(plan.hot_bytes <= last_bytes);
            last_hit = plan.hot_hit_rate;
            last_bytes = plan.hot_bytes;
        }
    }

    #[test]
    fn small_model_fits_fully_with_unit_hit_rate() {
        let c = Catalogs::builtin();
        let m = c.find_model("rmc1").unwrap(); // 3.84 GB prod embeddings
        let t7 = c.find_server("t7").unwrap();
        let profile = build_access_profile(m, SizeClass::Prod, 0.9, 1);
        let plan = partition_model(m, t7, SizeClass::Prod, 1, &profile, 4).unwrap();
        let full_rows: u64 = profile.tables.iter().map(|t| t.rows).sum();
        assert_eq!(plan.hot_rows.iter().sum::<u64>(), full_rows);
        assert_eq!(plan.hot_hit_rate, 1.0);
    }

    #[test]
    fn hot_set_matches_sort_oracle() {
        // Small synthetic model so the oracle can enumerate every row.
        let c = Catalogs::builtin();
        let mut m = c.find_model("rmc1").unwrap().clone();
        m.num_emb_tables = 3;
        m.emb_rows_prod = crate::catalog::Span::new(1000, 1000);
        let profile = build_access_profile(&m, SizeClass::Prod, 0.9, 9);
        let budget_rows = 700_u64;
        let hot = super::fill_hot_rows(&profile, budget_rows);
        assert_eq!(hot.iter().sum::<u64>(), budget_rows);

        // Oracle: list every (table, rank) with its access rate, sort
        // descending, take the top `budget_rows`.
        let mut rates: Vec<(usize, u64, f64)> = Vec::new();
        for (ti, t) in profile.tables.iter().enumerate() {
            for rank in 0..t.rows {
                rates.push((ti, rank, t.lookup_weight * ((rank + 1) as f64).powf(-0.9)));
            }
        }
        rates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut oracle = alloc::vec![0_u64; 3];
        for (ti, _, _) in rates.iter().take(budget_rows as usize) {
            oracle[*ti] += 1;
        }
        // Ties at the admission boundary may fall either way; total matches
        // and per-table counts agree within the tied band.
        for (h, o) in hot.iter().zip(&oracle) {
            assert!((*h as i64 - *o as i64).abs() <= 1, "{hot:?} vs {oracle:?}");
        }
    }

    #[test]
    fn strategies_per_server_class() {
        let c = Catalogs::builtin();
        let rmc1 = c.find_model("rmc1").unwrap();
        let t2 = c.find_server("t2").unwrap();
        let t7 = c.find_server("t7").unwrap();
        assert_eq!(enumerate_strategies(rmc1, t2, SizeClass::Prod, 4).len(), 2);
        assert!(enumerate_strategies(rmc1, t7, SizeClass::Prod, 4).len() >= 3);

        // DIN's 115 GB prod footprint fits neither T1's nor T6's 64 GB.
        let din = c.find_model("din").unwrap();
        let t1 = c.find_server("t1").unwrap();
        let t6 = c.find_server("t6").unwrap();
        assert!(enumerate_strategies(din, t1, SizeClass::Prod, 4).is_empty());
        assert!(enumerate_strategies(din, t6, SizeClass::Prod, 4).is_empty());
        assert!(!enumerate_strategies(din, t7, SizeClass::Prod, 4).is_empty());

        // A dense net larger than HBM knocks out the accelerator strategies.
        let mut fat = rmc1.clone();
        fat.predict_fc = alloc::vec![65_536, 65_536, 65_536];
        let s = enumerate_strategies(&fat, t7, SizeClass::Prod, 4);
        assert!(s.iter().all(|st| !st.uses_accel()), "{s:?}");
    }

    #[test]
    fn partition_errors_are_reported() {
        let c = Catalogs::builtin();
        let din = c.find_model("din").unwrap();
        let t1 = c.find_server("t1").unwrap();
        let profile = build_access_profile(din, SizeClass::Prod, 0.9, 1);
        assert!(matches!(
            partition_model(din, t1, SizeClass::Prod, 1, &profile, 4),
            Err(PartitionError::HostCapacity { .. })
        ));

        let mut fat = c.find_model("rmc1").unwrap().clone();
        fat.predict_fc = alloc::vec![65_536, 65_536, 65_536];
        let t7 = c.find_server("t7").unwrap();
        let p2 = build_access_profile(&fat, SizeClass::Prod, 0.9, 1);
        assert!(matches!(
            partition_model(&fat, t7, SizeClass::Prod, 1, &p2, 4),
            Err(PartitionError::DenseExceedsBudget { .. })
        ));
    }
}

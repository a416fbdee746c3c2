//! Scenario configuration: one TOML file per experiment, every field
//! optional with sensible defaults, CLI flags taking precedence.

use std::collections::BTreeMap;

use serde::Deserialize;

use hercules_core::catalog::{Catalogs, SizeClass};
use hercules_core::perfmodel::Calibration;
use hercules_core::provisioner::{Policy, RMode, RankBy, SimParams};
use hercules_core::serversim::Evaluator;

use crate::fsio::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub seed: u64,
    /// Tail-latency targets in milliseconds, overriding the catalog values.
    pub slas_ms: BTreeMap<String, f64>,
    /// Performance-model constants overridden by field name.
    pub calibration: BTreeMap<String, f64>,
    pub profile: ProfileSection,
    pub serve: ServeSection,
    pub evolve: EvolveSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: String::from("default"),
            seed: 42,
            slas_ms: BTreeMap::new(),
            calibration: BTreeMap::new(),
            profile: ProfileSection::default(),
            serve: ServeSection::default(),
            evolve: EvolveSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// Model names to profile; empty means the whole catalog.
    pub models: Vec<String>,
    /// Server-type names to profile; empty means the whole catalog.
    pub servers: Vec<String>,
    /// Embedding-table size class: `prod` or `small`.
    pub class: String,
    /// Per-server power cap in watts; omit for unbounded.
    pub power_budget_w: Option<f64>,
    /// `analytic` (closed-form) or `des` (discrete-event measurement).
    pub evaluator: String,
    /// Measurement window when `evaluator = "des"`.
    pub des_duration_s: f64,
    /// Output file name (inside the out directory).
    pub table_file: String,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            models: Vec::new(),
            servers: Vec::new(),
            class: String::from("prod"),
            power_budget_w: None,
            evaluator: String::from("analytic"),
            des_duration_s: 5.0,
            table_file: String::from("efficiency-table.txt"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSection {
    /// Efficiency table to provision from; defaults to the profile output.
    pub table_file: Option<String>,
    pub policies: Vec<String>,
    pub interval_s: f64,
    pub setup_delay_s: f64,
    /// Fixed over-provision rate in percent; omit to estimate from the
    /// trailing day of each trace.
    pub r_percent: Option<f64>,
    /// Greedy ranking: `qps` or `qps-per-watt`.
    pub rank_by: String,
    /// Per-type server counts; empty means the catalog availabilities.
    pub availability: BTreeMap<String, u32>,
    pub workloads: Vec<WorkloadSection>,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            table_file: None,
            policies: vec![
                String::from("nh"),
                String::from("greedy"),
                String::from("priority"),
                String::from("hercules"),
            ],
            interval_s: 1800.0,
            setup_delay_s: 30.0,
            r_percent: None,
            rank_by: String::from("qps-per-watt"),
            availability: BTreeMap::new(),
            workloads: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub model: String,
    /// Diurnal trace parameters, used when no trace file is given.
    pub peak_qps: f64,
    pub days: u32,
    pub trough_ratio: f64,
    pub noise: f64,
    /// Load an existing `time_s,qps` file instead of generating.
    pub trace_file: Option<String>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            model: String::new(),
            peak_qps: 50_000.0,
            days: 7,
            trough_ratio: 0.4,
            noise: 0.02,
            trace_file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    /// Daily snapshots; the routed fraction ramps linearly 0 → 1 over them.
    pub days: u32,
    /// (base model, successor model) routing pairs.
    pub pairs: Vec<(String, String)>,
    /// Peak QPS of each base workload before any routing.
    pub peak_qps: f64,
    pub trace_days: u32,
    pub trough_ratio: f64,
    pub noise: f64,
    pub interval_s: f64,
    pub setup_delay_s: f64,
    pub r_percent: Option<f64>,
    /// Per-type server counts; empty means the catalog availabilities. The
    /// CPU-only variant drops every type with an accelerator.
    pub availability: BTreeMap<String, u32>,
    pub table_file: Option<String>,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            days: 6,
            pairs: vec![
                (String::from("rmc1"), String::from("din")),
                (String::from("rmc2"), String::from("dien")),
                (String::from("rmc3"), String::from("mt-wnd")),
            ],
            peak_qps: 50_000.0,
            trace_days: 1,
            trough_ratio: 0.4,
            noise: 0.0,
            interval_s: 1800.0,
            setup_delay_s: 30.0,
            r_percent: None,
            availability: BTreeMap::new(),
            table_file: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse_toml(text: &str) -> Result<ExperimentConfig, Failure> {
        toml::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))
    }

    pub fn size_class(&self) -> Result<SizeClass, Failure> {
        match self.profile.class.as_str() {
            "prod" => Ok(SizeClass::Prod),
            "small" => Ok(SizeClass::Small),
            other => Err(Failure::config(format!(
                "class `{other}` is not one of: prod, small"
            ))),
        }
    }

    pub fn evaluator(&self) -> Result<Evaluator, Failure> {
        match self.profile.evaluator.as_str() {
            "analytic" => Ok(Evaluator::Analytic),
            "des" => {
                if self.profile.des_duration_s <= 0.0 {
                    return Err(Failure::config(String::from(
                        "des_duration_s must be positive",
                    )));
                }
                Ok(Evaluator::Des {
                    duration_s: self.profile.des_duration_s,
                })
            }
            other => Err(Failure::config(format!(
                "evaluator `{other}` is not one of: analytic, des"
            ))),
        }
    }

    pub fn rank_by(&self) -> Result<RankBy, Failure> {
        match self.serve.rank_by.as_str() {
            "qps" => Ok(RankBy::Qps),
            "qps-per-watt" => Ok(RankBy::QpsPerWatt),
            other => Err(Failure::config(format!(
                "rank_by `{other}` is not one of: qps, qps-per-watt"
            ))),
        }
    }

    pub fn policies(&self, override_list: &[String]) -> Result<Vec<Policy>, Failure> {
        let names = if override_list.is_empty() {
            &self.serve.policies
        } else {
            override_list
        };
        if names.is_empty() {
            return Err(Failure::config(String::from("no policies requested")));
        }
        let mut out = Vec::new();
        for name in names {
            match Policy::parse(name) {
                Some(p) if !out.contains(&p) => out.push(p),
                Some(_) => {}
                None => {
                    return Err(Failure::config(format!(
                        "policy `{name}` is not one of: hercules, greedy, nh, priority"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn sim_params(&self) -> Result<SimParams, Failure> {
        if self.serve.interval_s <= 0.0 || self.serve.setup_delay_s < 0.0 {
            return Err(Failure::config(String::from(
                "interval_s must be positive and setup_delay_s nonnegative",
            )));
        }
        Ok(SimParams {
            interval_s: self.serve.interval_s,
            setup_delay_s: self.serve.setup_delay_s,
            r_mode: match self.serve.r_percent {
                Some(v) if v < 0.0 => {
                    return Err(Failure::config(String::from(
                        "r_percent must be nonnegative",
                    )))
                }
                Some(v) => RMode::Fixed(v),
                None => RMode::Estimated,
            },
            rank: self.rank_by()?,
        })
    }

    /// Tail-latency target in seconds for one model: config override first
    /// (keys may use catalog aliases), catalog default second.
    pub fn sla_s(&self, catalogs: &Catalogs, model: &str) -> Result<f64, Failure> {
        let spec = catalogs
            .find_model(model)
            .map_err(|e| Failure::config(e.to_string()))?;
        let override_ms = self.slas_ms.iter().find_map(|(k, &ms)| {
            catalogs
                .find_model(k)
                .ok()
                .filter(|m| m.name == spec.name)
                .map(|_| ms)
        });
        let ms = override_ms.unwrap_or(spec.sla_ms);
        if ms <= 0.0 {
            return Err(Failure::config(format!("SLA for `{model}` must be positive")));
        }
        Ok(ms / 1000.0)
    }

    /// The performance-model constants with config overrides applied.
    pub fn calibration(&self) -> Result<Calibration, Failure> {
        let mut cal = Calibration::default();
        for (name, &v) in &self.calibration {
            let as_u32 = || -> Result<u32, Failure> {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Failure::config(format!(
                        "calibration `{name}` must be a nonnegative integer"
                    )))
                }
            };
            match name.as_str() {
                "elem_bytes" => cal.elem_bytes = as_u32()?,
                "index_bytes" => cal.index_bytes = as_u32()?,
                "eff_floor" => cal.eff_floor = v,
                "interf_alpha" => cal.interf_alpha = v,
                "interf_beta" => cal.interf_beta = v,
                "mps_base" => cal.mps_base = v,
                "mps_span" => cal.mps_span = v,
                "idle_frac_cpu" => cal.idle_frac_cpu = v,
                "idle_frac_mem" => cal.idle_frac_mem = v,
                "idle_frac_accel" => cal.idle_frac_accel = v,
                "nmp_idle_power_w" => cal.nmp_idle_power_w = v,
                "pcie_efficiency" => cal.pcie_efficiency = v,
                "launch_overhead_s" => cal.launch_overhead_s = v,
                "dispatch_overhead_s" => cal.dispatch_overhead_s = v,
                "thread_gather_gbps" => cal.thread_gather_gbps = v,
                "bw_thread_penalty" => cal.bw_thread_penalty = v,
                "op_fusion_discount" => cal.op_fusion_discount = v,
                "fusion_timeout_sla_frac" => cal.fusion_timeout_sla_frac = v,
                "tail_percentile" => cal.tail_percentile = v,
                "warmup_frac" => cal.warmup_frac = v,
                "queue_factor" => cal.queue_factor = v,
                "size_ln_mu" => cal.size_ln_mu = v,
                "size_ln_sigma" => cal.size_ln_sigma = v,
                "size_min" => cal.size_min = as_u32()?,
                "size_max" => cal.size_max = as_u32()?,
                "zipf_exponent" => cal.zipf_exponent = v,
                "noise_band" => cal.noise_band = v,
                "search_iters" => cal.search_iters = as_u32()?,
                "bracket_tol" => cal.bracket_tol = v,
                other => {
                    return Err(Failure::config(format!(
                        "calibration has no scalar constant named `{other}`"
                    )))
                }
            }
        }
        Ok(cal)
    }

    /// Resolve an availability map to catalog-ordered `(type, count)` pairs
    /// under canonical type names; an empty map means every catalog server
    /// at its default count.
    pub fn resolve_availability(
        catalogs: &Catalogs,
        map: &BTreeMap<String, u32>,
    ) -> Result<Vec<(String, u32)>, Failure> {
        let mut canonical: BTreeMap<String, u32> = BTreeMap::new();
        for (name, &count) in map {
            let spec = catalogs
                .find_server(name)
                .map_err(|e| Failure::config(e.to_string()))?;
            if canonical.insert(spec.name.clone(), count).is_some() {
                return Err(Failure::config(format!(
                    "availability lists server type `{}` twice",
                    spec.name
                )));
            }
        }
        let out: Vec<(String, u32)> = catalogs
            .servers
            .iter()
            .filter_map(|s| match canonical.get(&s.name) {
                Some(&count) => Some((s.name.clone(), count)),
                None if canonical.is_empty() => Some((s.name.clone(), s.availability)),
                None => None,
            })
            .collect();
        if out.is_empty() {
            return Err(Failure::config(String::from("availability resolves to no types")));
        }
        Ok(out)
    }

    /// Full semantic validation against the builtin catalogs.
    pub fn validate(&self, catalogs: &Catalogs) -> Result<(), Failure> {
        self.size_class()?;
        self.evaluator()?;
        self.rank_by()?;
        self.sim_params()?;
        self.policies(&[])?;
        self.calibration()?;
        for name in self.profile.models.iter().chain(self.slas_ms.keys()) {
            catalogs
                .find_model(name)
                .map_err(|e| Failure::config(e.to_string()))?;
        }
        for name in &self.profile.servers {
            catalogs
                .find_server(name)
                .map_err(|e| Failure::config(e.to_string()))?;
        }
        for (name, &ms) in &self.slas_ms {
            if ms <= 0.0 {
                return Err(Failure::config(format!("SLA for `{name}` must be positive")));
            }
        }
        Self::resolve_availability(catalogs, &self.serve.availability)?;
        Self::resolve_availability(catalogs, &self.evolve.availability)?;
        for w in &self.serve.workloads {
            catalogs
                .find_model(&w.model)
                .map_err(|e| Failure::config(e.to_string()))?;
            if w.trace_file.is_none() {
                if w.peak_qps <= 0.0 {
                    return Err(Failure::config(format!(
                        "workload `{}` needs a positive peak_qps or a trace_file",
                        w.model
                    )));
                }
                if !(w.trough_ratio > 0.0 && w.trough_ratio < 1.0) {
                    return Err(Failure::config(format!(
                        "workload `{}` trough_ratio must lie in (0, 1)",
                        w.model
                    )));
                }
                if w.noise < 0.0 || w.days == 0 {
                    return Err(Failure::config(format!(
                        "workload `{}` needs nonnegative noise and at least one day",
                        w.model
                    )));
                }
            }
        }
        let mut seen = Vec::new();
        for w in &self.serve.workloads {
            if seen.contains(&&w.model) {
                return Err(Failure::config(format!(
                    "workload `{}` is listed twice",
                    w.model
                )));
            }
            seen.push(&w.model);
        }
        let gen_days: Vec<u32> = self
            .serve
            .workloads
            .iter()
            .filter(|w| w.trace_file.is_none())
            .map(|w| w.days)
            .collect();
        if gen_days.windows(2).any(|p| p[0] != p[1]) {
            return Err(Failure::config(String::from(
                "generated workload traces must all span the same number of days",
            )));
        }
        let ev = &self.evolve;
        if ev.days < 2 {
            return Err(Failure::config(String::from(
                "evolve.days must be at least 2 (start and end snapshots)",
            )));
        }
        if ev.peak_qps <= 0.0 || ev.trace_days == 0 {
            return Err(Failure::config(String::from(
                "evolve needs a positive peak_qps and at least one trace day",
            )));
        }
        if !(ev.trough_ratio > 0.0 && ev.trough_ratio < 1.0) || ev.noise < 0.0 {
            return Err(Failure::config(String::from(
                "evolve trough_ratio must lie in (0, 1) and noise be nonnegative",
            )));
        }
        if ev.interval_s <= 0.0 || ev.setup_delay_s < 0.0 {
            return Err(Failure::config(String::from(
                "evolve interval_s must be positive and setup_delay_s nonnegative",
            )));
        }
        if let Some(r) = ev.r_percent {
            if r < 0.0 {
                return Err(Failure::config(String::from(
                    "evolve r_percent must be nonnegative",
                )));
            }
        }
        let mut names = Vec::new();
        for (base, next) in &ev.pairs {
            catalogs
                .find_model(base)
                .map_err(|e| Failure::config(e.to_string()))?;
            catalogs
                .find_model(next)
                .map_err(|e| Failure::config(e.to_string()))?;
            if base == next {
                return Err(Failure::config(format!(
                    "evolution pair routes `{base}` to itself"
                )));
            }
            for n in [base, next] {
                if names.contains(&n) {
                    return Err(Failure::config(format!(
                        "model `{n}` appears in more than one evolution pair"
                    )));
                }
                names.push(n);
            }
        }
        Ok(())
    }
}

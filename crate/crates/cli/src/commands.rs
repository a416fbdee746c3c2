//! The experiment commands: offline profiling, cluster-scenario serving,
//! model-evolution sweeps, trace generation, and config validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use hercules_core::catalog::{Catalogs, ModelSpec, ServerSpec};
use hercules_core::loadgen::{gen_diurnal_trace, LoadTrace};
use hercules_core::provisioner::{
    run_cluster_sim, Policy, ProvisionError, ProvisionTimeline, RMode, RankBy, SimParams,
};
use hercules_core::schedsearch::{pair_seed, profile_pair_logged, EfficiencyTable, PairEntry};

use crate::config::ExperimentConfig;
use crate::fsio::{atomic_write, read_file, Failure};

fn provision_failure(e: ProvisionError) -> Failure {
    match e {
        ProvisionError::BadInput { .. } => Failure::config(e.to_string()),
        _ => Failure::infeasible(e.to_string()),
    }
}

/// Resolve configured names to catalog specs; an empty list means all.
fn pick_models(
    catalogs: &Catalogs,
    names: &[String],
) -> Result<Vec<ModelSpec>, Failure> {
    if names.is_empty() {
        return Ok(catalogs.models.clone());
    }
    names
        .iter()
        .map(|n| {
            catalogs
                .find_model(n)
                .cloned()
                .map_err(|e| Failure::config(e.to_string()))
        })
        .collect()
}

fn pick_servers(
    catalogs: &Catalogs,
    names: &[String],
) -> Result<Vec<ServerSpec>, Failure> {
    if names.is_empty() {
        return Ok(catalogs.servers.clone());
    }
    names
        .iter()
        .map(|n| {
            catalogs
                .find_server(n)
                .cloned()
                .map_err(|e| Failure::config(e.to_string()))
        })
        .collect()
}

/// File-safe `<model>-<server>` stem for per-pair outputs.
fn pair_stem(model: &str, server: &str) -> String {
    format!("{model}-{server}")
}

pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let catalogs = Catalogs::builtin();
    cfg.validate(&catalogs)?;
    println!(
        "config ok: scenario `{}`, {} workload(s), {} evolution pair(s)",
        cfg.scenario,
        cfg.serve.workloads.len(),
        cfg.evolve.pairs.len()
    );
    Ok(())
}

/// Offline stage: profile every requested (model, server) pair in parallel,
/// write the efficiency table plus one search-trajectory log per pair.
pub fn cmd_profile(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
    models_flag: &[String],
    servers_flag: &[String],
) -> Result<(), Failure> {
    let catalogs = Catalogs::builtin();
    cfg.validate(&catalogs)?;
    let models = pick_models(
        &catalogs,
        if models_flag.is_empty() {
            &cfg.profile.models
        } else {
            models_flag
        },
    )?;
    let servers = pick_servers(
        &catalogs,
        if servers_flag.is_empty() {
            &cfg.profile.servers
        } else {
            servers_flag
        },
    )?;
    let class = cfg.size_class()?;
    let evaluator = cfg.evaluator()?;
    let cal = cfg.calibration()?;
    let budget = cfg.profile.power_budget_w;
    let mut slas = BTreeMap::new();
    for m in &models {
        slas.insert(m.name.clone(), cfg.sla_s(&catalogs, &m.name)?);
    }

    let pairs: Vec<(&ModelSpec, &ServerSpec)> = models
        .iter()
        .flat_map(|m| servers.iter().map(move |s| (m, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::internal(format!("thread pool: {e}")))?;
    let mut results: Vec<((String, String), PairEntry, Vec<String>)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(model, server)| {
                let sla_s = slas[&model.name];
                let seed = pair_seed(cfg.seed, &model.name, &server.name);
                let (entry, log) = profile_pair_logged(
                    model, server, class, sla_s, budget, evaluator, seed, &cal,
                );
                ((model.name.clone(), server.name.clone()), entry, log)
            })
            .collect()
    });
    results.sort_by(|a, b| a.0.cmp(&b.0));

    let mut table = EfficiencyTable::default();
    for ((model, server), entry, _) in &results {
        table.insert(model, server, entry.clone());
    }
    let table_path = out_dir.join(&cfg.profile.table_file);
    atomic_write(&table_path, &table.to_text())?;

    let log_dir = out_dir.join("search-logs");
    for ((model, server), entry, log) in &results {
        let mut text = format!(
            "# search-log v1\n# model {model} server {server} seed {}\n\
             # columns: strategy m o d sparse ma da (qps <q> power_w <w> | infeasible)\n",
            pair_seed(cfg.seed, model, server)
        );
        match entry {
            PairEntry::Best(t) => text.push_str(&format!(
                "chosen {} qps {} power_w {}\n",
                t.strategy.label(),
                t.qps,
                t.power_w
            )),
            PairEntry::Unprofiled { reason } => {
                text.push_str(&format!("chosen none: {reason}\n"))
            }
        }
        for row in log {
            text.push_str(row);
            text.push('\n');
        }
        atomic_write(&log_dir.join(format!("{}.txt", pair_stem(model, server))), &text)?;
    }

    println!(
        "profiled {} pair(s) -> {}",
        results.len(),
        table_path.display()
    );
    println!("search logs -> {}", log_dir.display());
    Ok(())
}

/// The serve-section traces in workload order, canonical names attached.
fn serve_traces(
    cfg: &ExperimentConfig,
    catalogs: &Catalogs,
) -> Result<Vec<LoadTrace>, Failure> {
    if cfg.serve.workloads.is_empty() {
        return Err(Failure::config(String::from(
            "no [[serve.workloads]] configured",
        )));
    }
    let mut traces = Vec::new();
    for w in &cfg.serve.workloads {
        let name = catalogs
            .find_model(&w.model)
            .map_err(|e| Failure::config(e.to_string()))?
            .name
            .clone();
        let mut trace = match &w.trace_file {
            Some(file) => {
                let text = read_file(Path::new(file))?;
                LoadTrace::parse_csv(&text)
                    .map_err(|e| Failure::config(format!("trace `{file}`: {e}")))?
            }
            None => gen_diurnal_trace(
                w.peak_qps,
                w.days,
                w.trough_ratio,
                w.noise,
                cfg.serve.interval_s,
                pair_seed(cfg.seed, &name, "trace"),
            ),
        };
        trace.workload = name;
        traces.push(trace);
    }
    Ok(traces)
}

fn load_table(cfg: &ExperimentConfig, out_dir: &Path, file: Option<&str>) -> Result<(EfficiencyTable, PathBuf), Failure> {
    let name = file.unwrap_or(&cfg.profile.table_file);
    let path = if Path::new(name).is_absolute() {
        PathBuf::from(name)
    } else {
        out_dir.join(name)
    };
    if !path.exists() {
        return Err(Failure::config(format!(
            "efficiency table `{}` not found — run `hercules profile` first",
            path.display()
        )));
    }
    let table = EfficiencyTable::parse_text(&read_file(&path)?)
        .map_err(|e| Failure::config(format!("table `{}`: {e}", path.display())))?;
    Ok((table, path))
}

/// Percent saved by `ours` relative to `base` (guarding zero baselines).
fn savings_pct(base: f64, ours: f64) -> f64 {
    if base > 0.0 {
        100.0 * (1.0 - ours / base)
    } else {
        0.0
    }
}

/// Online stage: play every requested policy over the scenario traces and
/// report peak/average provisioned power with hercules-versus-baseline
/// savings.
pub fn cmd_serve(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    policies_flag: &[String],
) -> Result<(), Failure> {
    let catalogs = Catalogs::builtin();
    cfg.validate(&catalogs)?;
    let (table, _) = load_table(cfg, out_dir, cfg.serve.table_file.as_deref())?;
    let types = ExperimentConfig::resolve_availability(&catalogs, &cfg.serve.availability)?;
    let traces = serve_traces(cfg, &catalogs)?;
    let params = cfg.sim_params()?;
    let policies = cfg.policies(policies_flag)?;

    let mut timelines: Vec<ProvisionTimeline> = Vec::new();
    for &policy in &policies {
        let tl = run_cluster_sim(&table, &types, &traces, policy, &params, cfg.seed)
            .map_err(provision_failure)?;
        atomic_write(
            &out_dir.join(format!("timeline-{}.txt", policy.label())),
            &tl.to_text(),
        )?;
        timelines.push(tl);
    }

    let mut summary = format!(
        "# serve-summary v1\n# scenario {} seed {}\n",
        cfg.scenario, cfg.seed
    );
    for tl in &timelines {
        summary.push_str(&format!(
            "policy {} peak_power_w {} avg_power_w {} peak_servers {} avg_servers {} violations {}\n",
            tl.policy.label(),
            tl.peak_power_w(),
            tl.avg_power_w(),
            tl.peak_servers(),
            tl.avg_servers(),
            tl.violations()
        ));
    }
    if let Some(ours) = timelines.iter().find(|t| t.policy == Policy::Hercules) {
        for base in &timelines {
            if base.policy == Policy::Hercules {
                continue;
            }
            summary.push_str(&format!(
                "savings hercules-vs-{} peak_power_pct {:.2} avg_power_pct {:.2} peak_servers_pct {:.2} avg_servers_pct {:.2}\n",
                base.policy.label(),
                savings_pct(base.peak_power_w(), ours.peak_power_w()),
                savings_pct(base.avg_power_w(), ours.avg_power_w()),
                savings_pct(base.peak_servers() as f64, ours.peak_servers() as f64),
                savings_pct(base.avg_servers(), ours.avg_servers()),
            ));
        }
    }
    atomic_write(&out_dir.join("serve-summary.txt"), &summary)?;
    print!("{summary}");
    println!("timelines -> {}", out_dir.display());
    Ok(())
}

/// Write the scenario's load traces as standalone `time_s,qps` files.
pub fn cmd_trace_gen(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), Failure> {
    let catalogs = Catalogs::builtin();
    cfg.validate(&catalogs)?;
    let traces = serve_traces(cfg, &catalogs)?;
    for trace in &traces {
        atomic_write(
            &out_dir.join(format!("trace-{}.csv", trace.workload)),
            &trace.to_csv(),
        )?;
    }
    println!("wrote {} trace(s) -> {}", traces.len(), out_dir.display());
    Ok(())
}

/// Model-evolution sweep: per daily snapshot, route a linearly growing load
/// fraction from each base model to its successor and provision both the
/// full (accelerated) cluster and its CPU-only subset with the LP policy.
pub fn cmd_evolve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), Failure> {
    let catalogs = Catalogs::builtin();
    cfg.validate(&catalogs)?;
    let ev = &cfg.evolve;
    let (table, _) = load_table(cfg, out_dir, ev.table_file.as_deref())?;
    let full = ExperimentConfig::resolve_availability(&catalogs, &ev.availability)?;
    let cpu_only: Vec<(String, u32)> = full
        .iter()
        .filter(|(name, _)| {
            catalogs
                .find_server(name)
                .map(|s| s.accel.is_none())
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    if cpu_only.is_empty() {
        return Err(Failure::config(String::from(
            "the evolution sweep needs at least one CPU-only server type",
        )));
    }
    let pairs: Vec<(String, String)> = ev
        .pairs
        .iter()
        .map(|(a, b)| {
            Ok((
                catalogs
                    .find_model(a)
                    .map_err(|e| Failure::config(e.to_string()))?
                    .name
                    .clone(),
                catalogs
                    .find_model(b)
                    .map_err(|e| Failure::config(e.to_string()))?
                    .name
                    .clone(),
            ))
        })
        .collect::<Result<_, Failure>>()?;
    let params = SimParams {
        interval_s: ev.interval_s,
        setup_delay_s: ev.setup_delay_s,
        r_mode: match ev.r_percent {
            Some(v) => RMode::Fixed(v),
            None => RMode::Estimated,
        },
        rank: RankBy::Qps,
    };

    let mut out = format!(
        "# evolution v1\n# scenario {} seed {} days {} peak_qps {}\n# pairs {}\n",
        cfg.scenario,
        cfg.seed,
        ev.days,
        ev.peak_qps,
        pairs
            .iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    let mut firsts: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    let mut lasts: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for day in 0..ev.days {
        let fraction = day as f64 / (ev.days - 1) as f64;
        let mut traces = Vec::new();
        for (base, next) in &pairs {
            for (name, peak) in [
                (base, ev.peak_qps * (1.0 - fraction)),
                (next, ev.peak_qps * fraction),
            ] {
                let mut trace = gen_diurnal_trace(
                    peak,
                    ev.trace_days,
                    ev.trough_ratio,
                    ev.noise,
                    ev.interval_s,
                    pair_seed(cfg.seed, name, "trace"),
                );
                trace.workload = name.clone();
                traces.push(trace);
            }
        }
        for (cluster, types) in [("cpu", &cpu_only), ("accel", &full)] {
            let tl = run_cluster_sim(&table, types, &traces, Policy::Hercules, &params, cfg.seed)
                .map_err(provision_failure)?;
            out.push_str(&format!(
                "day {day} fraction {fraction} cluster {cluster} peak_servers {} avg_servers {} peak_power_w {} avg_power_w {} violations {}\n",
                tl.peak_servers(),
                tl.avg_servers(),
                tl.peak_power_w(),
                tl.avg_power_w(),
                tl.violations()
            ));
            let point = (tl.peak_power_w(), tl.peak_servers());
            firsts.entry(cluster).or_insert(point);
            lasts.insert(cluster, point);
        }
    }
    for (cluster, (p0, s0)) in &firsts {
        let (p1, s1) = lasts[cluster];
        let ratio = |a: f64, b: f64| if a > 0.0 { b / a } else { 0.0 };
        out.push_str(&format!(
            "trend cluster {cluster} capacity_x {:.2} power_x {:.2}\n",
            ratio(*s0 as f64, s1 as f64),
            ratio(*p0, p1)
        ));
    }
    atomic_write(&out_dir.join("evolution.txt"), &out)?;
    print!("{out}");
    Ok(())
}

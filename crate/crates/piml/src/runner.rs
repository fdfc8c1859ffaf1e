//! Experiment execution: turns a validated config into artifacts on disk
//! (history CSVs, summary JSON, checkpoints, manifest) and hosts the sweep
//! driver and the standalone invariant suite behind the `check` verb.
//!
//! Determinism contract: everything written to CSV is a pure function of
//! the config (timing lives only in the manifest), floats are printed with
//! 17 significant digits, so re-running a config reproduces the files
//! byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DataParallelConfig, ExperimentConfig, GraphConfig, RunMode, XpinnConfigSection};
use crate::error::{Error, Result};
use crate::graph::{
    build_complex, curl1, diffusion_step, div_adj, fit_diffusion, fit_flux_model, grad0,
    Cochain, OrientedGraph,
};
use crate::network::{save_checkpoint, Mlp};
use crate::pinn::{eval_grid, train, TrainHistory};
use crate::problems::{l2_relative_error, sample_collocation, ProblemSpec};
use crate::xpinn::{
    build_subdomains, data_parallel_train, interface_loss, partition, stitch_predict, xpinn_train,
    InterfaceSet, Subdomain, XpinnConfig,
};

/// 17-significant-digit float formatting shared by all CSV artifacts.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

const HISTORY_HEADER: &str = "epoch,loss_f,loss_b,loss_i,loss_g_total,total,l2_rel_error";

fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in &history.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            fmt_float(r.loss_f),
            fmt_float(r.loss_b),
            fmt_float(r.loss_i),
            fmt_float(r.loss_g_total),
            fmt_float(r.total),
            fmt_float(r.l2_rel_error),
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct RunSummary {
    pub problem: String,
    pub mode: String,
    pub seed: u64,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss_i: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_r_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_b_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subdomain_totals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_losses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stitched_l2_rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_fit_loss: Option<f64>,
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config is serializable");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct Manifest {
    config_sha256: String,
    code_version: &'static str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

fn make_nets(cfg: &ExperimentConfig, spec: &ProblemSpec, seed: u64) -> Result<Vec<Mlp>> {
    let dim = spec.domain.dim();
    let mut sizes = Vec::with_capacity(cfg.network.hidden.len() + 2);
    sizes.push(dim);
    sizes.extend_from_slice(&cfg.network.hidden);
    sizes.push(1);
    (0..spec.n_fields)
        .map(|f| {
            Ok(Mlp::init(&sizes, cfg.network.activation, seed.wrapping_add(f as u64))?
                .with_adaptive_slope(cfg.network.adaptive_slope)
                // Large-magnitude fields are learned as O(1) deviations
                // from their static offset.
                .with_output_transform(1.0, spec.field_offsets[f]))
        })
        .collect()
}

/// Execute one experiment into `out_dir`. Returns the summary that was
/// also written to `summary.json`.
pub fn run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads_override: Option<usize>,
) -> Result<RunSummary> {
    let mode = cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let started = unix_ms();
    std::fs::create_dir_all(out_dir)?;

    let mut summary = RunSummary {
        problem: cfg.problem.clone(),
        mode: cfg.mode.clone(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        ..RunSummary::default()
    };

    match mode {
        RunMode::Vanilla | RunMode::Sa | RunMode::Gpinn => {
            run_single(&cfg, mode, out_dir, &mut summary)?
        }
        RunMode::Xpinn => run_xpinn(&cfg, out_dir, threads_override, &mut summary)?,
        RunMode::DataParallel => run_data_parallel(&cfg, out_dir, &mut summary)?,
        RunMode::GraphDiffusion => run_graph_diffusion(&cfg, out_dir, &mut summary)?,
        RunMode::GraphFlux => run_graph_flux(&cfg, out_dir, &mut summary)?,
    }

    write_file(
        &out_dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    let manifest = Manifest {
        config_sha256: config_hash(&cfg),
        code_version: env!("CARGO_PKG_VERSION"),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
    };
    write_file(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(summary)
}

fn record_finals(summary: &mut RunSummary, history: &TrainHistory) {
    if let Some(last) = history.records.last() {
        summary.final_total = Some(last.total);
        summary.final_loss_f = Some(last.loss_f);
        summary.final_loss_b = Some(last.loss_b);
        summary.final_loss_i = Some(last.loss_i);
        summary.l2_rel_error = Some(last.l2_rel_error);
    }
}

fn run_single(
    cfg: &ExperimentConfig,
    mode: RunMode,
    out_dir: &Path,
    summary: &mut RunSummary,
) -> Result<()> {
    let spec = cfg.problem_spec()?;
    let weights = cfg.loss_weights(spec.domain.dim())?;
    let colloc = sample_collocation(&spec, cfg.collocation.counts(), cfg.collocation.strategy, cfg.seed)?;
    let mut nets = make_nets(cfg, &spec, cfg.seed)?;
    let (history, sa) = train(
        &mut nets,
        &spec,
        &colloc,
        &weights,
        mode.pinn_mode().expect("training mode"),
        cfg.epochs,
        cfg.optimizer.lr,
        cfg.optimizer.eta_lambda,
    )?;
    write_file(&out_dir.join("history.csv"), &history_csv(&history))?;
    for (f, net) in nets.iter().enumerate() {
        save_checkpoint(net, &out_dir.join(format!("net_{f}.json")))?;
    }
    record_finals(summary, &history);
    if let Some(sa) = sa {
        summary.lambda_r_median = median(sa.lambda_r());
        summary.lambda_b_median = median(&sa.lambda_b());
        write_file(
            &out_dir.join("sa_weights.json"),
            &serde_json::to_string_pretty(&sa.values())?,
        )?;
    }
    Ok(())
}

fn xpinn_setup(
    cfg: &ExperimentConfig,
    x: &XpinnConfigSection,
) -> Result<(ProblemSpec, Vec<Subdomain>, Vec<InterfaceSet>)> {
    let spec = cfg.problem_spec()?;
    let (regions, interfaces) =
        partition(&spec.domain, &x.cuts, x.interface_points, x.interface_weight)?;
    let seed = cfg.seed;
    let cfg2 = cfg.clone();
    let spec2 = spec.clone();
    let subs = build_subdomains(
        &spec,
        &regions,
        &move |id| make_nets(&cfg2, &spec2, seed.wrapping_add(1000 * (id as u64 + 1))),
        cfg.collocation.counts(),
        cfg.collocation.strategy,
        seed,
        cfg.optimizer.lr,
    )?;
    Ok((spec, subs, interfaces))
}

fn run_xpinn(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads_override: Option<usize>,
    summary: &mut RunSummary,
) -> Result<()> {
    let x = cfg.xpinn.as_ref().expect("validated");
    let (spec, mut subs, interfaces) = xpinn_setup(cfg, x)?;
    let xcfg = XpinnConfig {
        mode: x.interface_mode,
        epochs: cfg.epochs,
        threads: threads_override.unwrap_or(x.threads),
        weights: cfg.loss_weights(spec.domain.dim())?,
    };
    let histories = xpinn_train(&spec, &mut subs, &interfaces, &xcfg)?;
    for (i, history) in histories.iter().enumerate() {
        write_file(&out_dir.join(format!("history_sub{i}.csv")), &history_csv(history))?;
    }
    for sub in &subs {
        for (f, net) in sub.nets.iter().enumerate() {
            save_checkpoint(net, &out_dir.join(format!("net_sub{}_{f}.json", sub.id)))?;
        }
    }
    summary.subdomain_totals =
        Some(histories.iter().filter_map(|h| h.final_total()).collect());
    summary.interface_losses = Some(
        interfaces
            .iter()
            .map(|it| {
                interface_loss(
                    &spec,
                    &subs[it.pair.0].nets,
                    &subs[it.pair.1].nets,
                    it,
                    x.interface_mode,
                )
            })
            .collect::<Result<Vec<_>>>()?,
    );
    if spec.exact.is_some() {
        let pts = eval_grid(&spec, 201);
        let exact: Vec<f64> = spec.exact_values(&pts)?.into_iter().map(|v| v[0]).collect();
        let pred = pts
            .iter()
            .map(|p| Ok(stitch_predict(&subs, p)?[0]))
            .collect::<Result<Vec<f64>>>()?;
        summary.stitched_l2_rel_error = Some(l2_relative_error(&pred, &exact)?);
    }
    Ok(())
}

fn run_data_parallel(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    summary: &mut RunSummary,
) -> Result<()> {
    let dp: &DataParallelConfig = cfg.data_parallel.as_ref().expect("validated");
    let spec = cfg.problem_spec()?;
    let weights = cfg.loss_weights(spec.domain.dim())?;
    let colloc = sample_collocation(&spec, cfg.collocation.counts(), cfg.collocation.strategy, cfg.seed)?;
    let mut nets = make_nets(cfg, &spec, cfg.seed)?;
    let history = data_parallel_train(
        &mut nets,
        &spec,
        &colloc,
        &weights,
        dp.replicas,
        cfg.epochs,
        cfg.optimizer.lr,
        dp.pad,
    )?;
    write_file(&out_dir.join("history.csv"), &history_csv(&history))?;
    for (f, net) in nets.iter().enumerate() {
        save_checkpoint(net, &out_dir.join(format!("net_{f}.json")))?;
    }
    record_finals(summary, &history);
    Ok(())
}

fn graph_from_config(g: &GraphConfig) -> Result<OrientedGraph> {
    OrientedGraph::from_edge_list(&g.edge_list)
}

fn run_graph_diffusion(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    summary: &mut RunSummary,
) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let gcfg = cfg.graph.as_ref().expect("validated");
    let g = graph_from_config(gcfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut trajectory = vec![x.clone()];
    for _ in 1..gcfg.snapshots.max(2) {
        x = diffusion_step(&g, &x, gcfg.alpha)?;
        trajectory.push(x.clone());
    }
    let alpha_hat = fit_diffusion(&g, &trajectory)?;

    let mut csv = String::from("snapshot");
    for i in 0..g.n_nodes() {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (n, snap) in trajectory.iter().enumerate() {
        let _ = write!(csv, "{n}");
        for v in snap {
            let _ = write!(csv, ",{}", fmt_float(*v));
        }
        csv.push('\n');
    }
    write_file(&out_dir.join("trajectory.csv"), &csv)?;
    summary.alpha_true = Some(gcfg.alpha);
    summary.alpha_hat = Some(alpha_hat);
    Ok(())
}

fn run_graph_flux(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    summary: &mut RunSummary,
) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let gcfg = cfg.graph.as_ref().expect("validated");
    let g = graph_from_config(gcfg)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = gcfg.cubic_coefficient;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..gcfg.pairs)
        .map(|_| {
            let u: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let gu = grad0(&g, &u)?;
            let flux = Cochain {
                degree: 1,
                values: gu.values.iter().map(|v| v + c * v * v * v).collect(),
            };
            Ok((u, div_adj(&g, &flux)?.values))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sizes = vec![1];
    sizes.extend_from_slice(&gcfg.flux_hidden);
    sizes.push(1);
    let mut net = Mlp::init(&sizes, cfg.network.activation, cfg.seed)?;
    let loss = fit_flux_model(&g, &pairs, &mut net, cfg.epochs, cfg.optimizer.lr)?;
    save_checkpoint(&net, &out_dir.join("flux_net.json"))?;
    summary.flux_fit_loss = Some(loss);
    Ok(())
}

/// Apply one sweep override to a copy of the config.
fn apply_override(cfg: &ExperimentConfig, parameter: &str, value: &serde_json::Value) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    let bad = |msg: String| Error::Config { path: format!("sweep.values ({parameter})"), msg };
    match parameter {
        "weights.w_g" => {
            let w = value.as_f64().ok_or_else(|| bad(format!("expected a number, got {value}")))?;
            let dim = out.problem_spec()?.domain.dim();
            let mut weights = out.loss_weights(dim)?;
            weights.w_g = vec![w; dim];
            out.weights = Some(weights);
        }
        "collocation.interior" => {
            let n = value.as_u64().ok_or_else(|| bad(format!("expected an integer, got {value}")))?;
            out.collocation.interior = n as usize;
        }
        "optimizer.lr" => {
            let lr = value.as_f64().ok_or_else(|| bad(format!("expected a number, got {value}")))?;
            out.optimizer.lr = lr;
        }
        "epochs" => {
            let n = value.as_u64().ok_or_else(|| bad(format!("expected an integer, got {value}")))?;
            out.epochs = n as usize;
        }
        "seed" => {
            let n = value.as_u64().ok_or_else(|| bad(format!("expected an integer, got {value}")))?;
            out.seed = n;
        }
        other => {
            return Err(Error::Config {
                path: "sweep.parameter".into(),
                msg: format!(
                    "unsupported sweep parameter `{other}` (expected weights.w_g, collocation.interior, optimizer.lr, epochs, or seed)"
                ),
            })
        }
    }
    Ok(out)
}

/// Run the config once per sweep value; failed cells are recorded and the
/// sweep continues. Writes `sweep.csv` plus one artifact directory per cell.
pub fn sweep(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads_override: Option<usize>,
) -> Result<PathBuf> {
    let sweep_cfg = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config { path: "sweep".into(), msg: "sweep verb needs a sweep section".into() })?;
    if sweep_cfg.values.is_empty() {
        return Err(Error::EmptySet("sweep grid".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut table = String::from("cell,parameter,value,status,final_total,l2_rel_error\n");
    for (k, value) in sweep_cfg.values.iter().enumerate() {
        let row = apply_override(cfg, &sweep_cfg.parameter, value)
            .and_then(|cell_cfg| run(&cell_cfg, &out_dir.join(format!("cell_{k}")), seed_override, threads_override));
        match row {
            Ok(summary) => {
                let _ = writeln!(
                    table,
                    "{k},{},{value},ok,{},{}",
                    sweep_cfg.parameter,
                    summary.final_total.map(fmt_float).unwrap_or_default(),
                    summary
                        .l2_rel_error
                        .or(summary.stitched_l2_rel_error)
                        .map(fmt_float)
                        .unwrap_or_default(),
                );
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                let _ = writeln!(table, "{k},{},{value},failed: {msg},,", sweep_cfg.parameter);
            }
        }
    }
    let path = out_dir.join("sweep.csv");
    write_file(&path, &table)?;
    Ok(path)
}

/// Fast standalone invariant suite behind the `check` CLI verb. Prints one
/// line per invariant; returns an error if any fails.
pub fn check() -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut failures = 0;
    let mut report = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "pass" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Residual autodiff against finite differences on the 1D Poisson problem.
    {
        let spec = crate::problems::poisson1d_spec(1.0)?;
        let net = Mlp::init(&[1, 8, 1], crate::network::Activation::Tanh, 1)?;
        let mut worst: f64 = 0.0;
        for k in 0..5 {
            let x = 0.1 + 0.15 * k as f64;
            let ad = crate::pinn::pde_residual(std::slice::from_ref(&net), &spec, &[x])?;
            let f = |p: &[f64]| crate::pinn::pde_residual(std::slice::from_ref(&net), &spec, p).unwrap();
            let fd = crate::tape::fd_check(&f, &[x], &[0], 1e-4, ad);
            worst = worst.max(fd);
        }
        report("pde residual matches finite differences", worst <= 1e-4);
    }

    // Exactness / telescoping / adjointness on random graphs.
    {
        let mut ok = true;
        for _ in 0..20 {
            let n = rng.gen_range(3..12);
            let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            for i in 0..n {
                for j in i + 2..n {
                    if rng.gen_bool(0.3) {
                        edges.push((i, j));
                    }
                }
            }
            let g = OrientedGraph::new(n, &edges, None)?;
            let c = build_complex(&g);
            let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let psi = Cochain {
                degree: 1,
                values: (0..g.n_edges()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            };
            let gphi = grad0(&g, &phi)?;
            ok &= curl1(&c, &gphi)?.values.iter().all(|v| v.abs() <= 1e-13);
            ok &= div_adj(&g, &psi)?.values.iter().sum::<f64>().abs() <= 1e-13;
            let lhs: f64 = gphi.values.iter().zip(&psi.values).map(|(a, b)| a * b).sum();
            let rhs: f64 = phi.iter().zip(&div_adj(&g, &psi)?.values).map(|(a, b)| a * b).sum();
            ok &= (lhs + rhs).abs() <= 1e-12;
        }
        report("graph calculus exactness, telescoping, adjointness", ok);
    }

    // Attention rows normalize; eigendecomposition reconstructs.
    {
        let g = OrientedGraph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)], None)?;
        let mut h = crate::linalg::Mat::zeros(5, 2);
        for v in h.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut w = crate::linalg::Mat::zeros(2, 3);
        for v in w.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let head = crate::gnn::AttentionHead {
            w,
            a: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let alpha = crate::gnn::gat_attention(&g, &h, &head, true)?;
        let rows_ok = (0..5).all(|i| {
            ((0..5).map(|j| alpha[(i, j)]).sum::<f64>() - 1.0).abs() <= 1e-12
        });
        report("attention rows sum to one", rows_ok);

        let l = crate::graph::graph_laplacian_matrix(&g);
        let (u, lam) = crate::gnn::laplacian_eigendecomp(&l)?;
        let mut d = crate::linalg::Mat::zeros(5, 5);
        for (i, &v) in lam.iter().enumerate() {
            d[(i, i)] = v;
        }
        let rebuilt = u.matmul(&d)?.matmul(&u.transpose())?;
        let err: f64 = rebuilt
            .data
            .iter()
            .zip(&l.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        report("laplacian eigendecomposition reconstructs", err <= 1e-10);
    }

    // Collocation sampling is a pure function of the seed.
    {
        let spec = crate::problems::poisson1d_spec(1.0)?;
        let counts = crate::problems::CollocationCounts { interior: 25, boundary: 4, data: 0, grad: 0 };
        let a = sample_collocation(&spec, counts, crate::problems::Strategy::UniformRandom, 9)?;
        let b = sample_collocation(&spec, counts, crate::problems::Strategy::UniformRandom, 9)?;
        report("collocation sampling is seed-deterministic", a.interior == b.interior && a.boundary == b.boundary);
    }

    if failures > 0 {
        return Err(Error::Config {
            path: "check".into(),
            msg: format!("{failures} invariant(s) failed"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_cfg(epochs: usize) -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "problem": "poisson1d",
            "mode": "vanilla",
            "seed": 4,
            "epochs": epochs,
            "network": {"hidden": [8]},
            "collocation": {"interior": 16, "boundary": 2}
        }))
        .unwrap()
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = poisson_cfg(5);
        run(&cfg, &dir.path().join("a"), None, None).unwrap();
        run(&cfg, &dir.path().join("b"), None, None).unwrap();
        let a = std::fs::read(dir.path().join("a/history.csv")).unwrap();
        let b = std::fs::read(dir.path().join("b/history.csv")).unwrap();
        assert_eq!(a, b);
        let sa = std::fs::read(dir.path().join("a/summary.json")).unwrap();
        let sb = std::fs::read(dir.path().join("b/summary.json")).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn zero_epochs_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        run(&poisson_cfg(0), dir.path(), None, None).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(csv, format!("{HISTORY_HEADER}\n"));
    }

    #[test]
    fn seed_override_changes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = poisson_cfg(3);
        run(&cfg, &dir.path().join("a"), None, None).unwrap();
        run(&cfg, &dir.path().join("b"), Some(99), None).unwrap();
        let a = std::fs::read(dir.path().join("a/history.csv")).unwrap();
        let b = std::fs::read(dir.path().join("b/history.csv")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn xpinn_run_emits_per_subdomain_histories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "problem": "poisson1d",
            "mode": "xpinn",
            "seed": 1,
            "epochs": 4,
            "network": {"hidden": [6]},
            "collocation": {"interior": 8, "boundary": 1},
            "xpinn": {"cuts": [0.5], "interface_points": 1}
        }))
        .unwrap();
        let summary = run(&cfg, dir.path(), None, None).unwrap();
        assert!(dir.path().join("history_sub0.csv").exists());
        assert!(dir.path().join("history_sub1.csv").exists());
        assert!(dir.path().join("net_sub0_0.json").exists());
        assert_eq!(summary.subdomain_totals.as_ref().unwrap().len(), 2);
        assert_eq!(summary.interface_losses.as_ref().unwrap().len(), 1);
        assert!(summary.stitched_l2_rel_error.is_some());
    }

    #[test]
    fn graph_diffusion_run_recovers_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "problem": "none",
            "mode": "graph_diffusion",
            "seed": 8,
            "epochs": 0,
            "graph": {"edge_list": "0 1\n1 2\n2 3\n0 3", "alpha": 0.2, "snapshots": 5}
        }))
        .unwrap();
        let summary = run(&cfg, dir.path(), None, None).unwrap();
        assert!((summary.alpha_hat.unwrap() - 0.2).abs() <= 1e-10);
        assert!(dir.path().join("trajectory.csv").exists());
    }

    #[test]
    fn sweep_writes_one_row_per_value_and_survives_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = poisson_cfg(2);
        cfg.sweep = Some(crate::config::SweepConfig {
            parameter: "collocation.interior".into(),
            values: vec![8.into(), 12.into(), 0.into()],
        });
        let path = sweep(&cfg, dir.path(), None, None).unwrap();
        let table = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4, "{table}");
        assert!(lines[1].contains(",ok,"));
        assert!(lines[2].contains(",ok,"));
        // Zero interior points with w_f > 0 cannot train.
        assert!(lines[3].contains("failed"), "{table}");
    }

    #[test]
    fn empty_sweep_grid_is_an_error() {
        let mut cfg = poisson_cfg(1);
        cfg.sweep = Some(crate::config::SweepConfig { parameter: "seed".into(), values: vec![] });
        assert!(sweep(&cfg, tempfile::tempdir().unwrap().path(), None, None).is_err());
    }

    #[test]
    fn invariant_suite_passes() {
        check().unwrap();
    }
}

//! Acceptance suite: one test per release criterion, each printing a single
//! pass/fail line with its measured values (run with `--nocapture` to see
//! them). Tolerances are pinned in the assertions, not configurable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use piml::gnn::{
    gat_attention, gat_layer, laplacian_eigendecomp, mpnn_message, mpnn_update,
    normalized_laplacian, readout, AttentionHead, GatParams, HeadCombine,
};
use piml::graph::{
    build_complex, curl1, diffusion_step, div_adj, fit_diffusion, fit_flux_model, fit_stencil,
    gmls_lift, grad0, graph_laplacian_matrix, nonlinear_flux_solve, Cochain,
    OrientedGraph,
};
use piml::jet::JetSpace;
use piml::linalg::{lu_solve, Mat};
use piml::network::{Activation, Mlp};
use piml::pinn::{eval_grid, train, LossWeights, Mode};
use piml::problems::{
    bl_ode_spec, diffusion_reaction_spec, heat_conduction_spec, poisson1d_spec,
    sample_collocation, CollocationCounts, ProblemSpec, Strategy,
};
use piml::tape::{fd_check, TapeGraph};
use piml::xpinn::{
    build_subdomains, interface_loss, partition, stitch_predict, xpinn_train,
    DataParallelTrainer, InterfaceMode, Subdomain, XpinnConfig,
};

fn verdict(criterion: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "{}: criterion {criterion} ({name}) — {detail}",
        if ok { "pass" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

/// ∂r/∂x_axis of the PDE residual, computed on a tape one derivative order
/// above the residual's own needs.
fn residual_axis_derivative(
    nets: &[Mlp],
    spec: &ProblemSpec,
    p: &[f64],
    axis: usize,
) -> f64 {
    let mut tape = TapeGraph::new(spec.spatial_dim(), spec.max_deriv_order + 1);
    let inputs = tape.seeded_point(p);
    let mut fields = Vec::new();
    let mut base = 0;
    for net in nets {
        fields.push(net.emit(&mut tape, base, &inputs).unwrap()[0]);
        base += net.n_params();
    }
    let r = (spec.residual)(&mut tape, &fields, &inputs).unwrap();
    let dr = tape.deriv(r, axis).unwrap();
    let params: Vec<f64> = nets.iter().flat_map(|n| n.flat_params()).collect();
    tape.eval_outputs(&params, &[], &[dr]).unwrap()[0]
}

fn interior_point(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..spec.spatial_dim())
        .map(|a| {
            let (lo, hi) = (spec.domain.lo()[a], spec.domain.hi()[a]);
            let margin = 0.01 * (hi - lo);
            rng.gen_range(lo + margin..hi - margin)
        })
        .collect()
}

#[test]
fn criterion_01_autodiff_matches_finite_differences() {
    let specs = vec![
        bl_ode_spec(0.01).unwrap(),
        diffusion_reaction_spec().unwrap(),
        poisson1d_spec(1.3).unwrap(),
        heat_conduction_spec(None).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for spec in &specs {
        let dim = spec.spatial_dim();
        for seed in 0..3u64 {
            let nets: Vec<Mlp> = (0..spec.n_fields)
                .map(|f| Mlp::init(&[dim, 6, 1], Activation::Tanh, 10 * seed + f as u64).unwrap())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..10 {
                let p = interior_point(spec, &mut rng);
                for axis in 0..dim {
                    let ad = residual_axis_derivative(&nets, spec, &p, axis);
                    let f = |x: &[f64]| piml::pinn::pde_residual(&nets, spec, x).unwrap();
                    let mut index = vec![0u8; dim];
                    index[axis] = 1;
                    let rel = fd_check(&f, &p, &index, 1e-4, ad);
                    worst = worst.max(rel);
                }
            }
        }
    }
    verdict(
        1,
        "autodiff vs finite differences",
        worst <= 1e-4,
        &format!("worst relative error {worst:.3e} (tolerance 1e-4, h = 1e-4)"),
    );
}

fn random_graph(rng: &mut ChaCha8Rng, max_n: usize) -> OrientedGraph {
    let n = rng.gen_range(3..=max_n);
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.gen_bool(0.25) {
                edges.push((i, j));
            }
        }
    }
    OrientedGraph::new(n, &edges, None).unwrap()
}

#[test]
fn criterion_02_graph_calculus_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_curl: f64 = 0.0;
    let mut worst_div: f64 = 0.0;
    let mut worst_adjoint: f64 = 0.0;
    for trial in 0..50 {
        let g = random_graph(&mut rng, 30);
        let c = build_complex(&g);

        // Integer inputs: curl∘grad and the divergence sum are exactly zero
        // because every intermediate is integer arithmetic.
        let phi_int: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-5..=5) as f64).collect();
        let gphi = grad0(&g, &phi_int).unwrap();
        assert!(
            curl1(&c, &gphi).unwrap().values.iter().all(|v| *v == 0.0),
            "trial {trial}: integer curl∘grad not exactly zero"
        );
        let psi_int = Cochain {
            degree: 1,
            values: (0..g.n_edges()).map(|_| rng.gen_range(-5..=5) as f64).collect(),
        };
        assert_eq!(
            div_adj(&g, &psi_int).unwrap().values.iter().sum::<f64>(),
            0.0,
            "trial {trial}: integer divergence sum not exactly zero"
        );

        // Float inputs: same identities within rounding.
        let phi: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let psi = Cochain {
            degree: 1,
            values: (0..g.n_edges()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        };
        let gphi = grad0(&g, &phi).unwrap();
        for v in &curl1(&c, &gphi).unwrap().values {
            worst_curl = worst_curl.max(v.abs());
        }
        worst_div = worst_div.max(div_adj(&g, &psi).unwrap().values.iter().sum::<f64>().abs());

        // ⟨grad φ, ψ⟩ = −⟨φ, grad*ψ⟩ (grad* is the negated true adjoint).
        let lhs: f64 = gphi.values.iter().zip(&psi.values).map(|(a, b)| a * b).sum();
        let rhs: f64 = phi
            .iter()
            .zip(&div_adj(&g, &psi).unwrap().values)
            .map(|(a, b)| a * b)
            .sum();
        worst_adjoint = worst_adjoint.max((lhs + rhs).abs());
    }
    verdict(
        2,
        "combinatorial calculus exactness",
        worst_curl <= 1e-13 && worst_div <= 1e-13 && worst_adjoint <= 1e-12,
        &format!(
            "curl∘grad {worst_curl:.3e} (≤1e-13), Σdiv {worst_div:.3e} (≤1e-13), adjointness {worst_adjoint:.3e} (≤1e-12)"
        ),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sinusoidal network whose first-layer spatial frequencies sweep 1..=scale_x
/// deterministically so every run covers the target's highest spatial mode;
/// phases and time-frequencies stay seed-random.
fn fourier_net(hidden: usize, scale_x: f64, scale_t: f64, seed: u64) -> Mlp {
    let mut net = Mlp::init(&[2, hidden, 1], Activation::Sin, seed).unwrap();
    let mut p = net.flat_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    let bands = scale_x as usize;
    for i in 0..hidden {
        let freq = ((i % bands) + 1) as f64;
        p[2 * i] = if i % 2 == 0 { freq } else { -freq };
        p[2 * i + 1] = rng.gen_range(-scale_t..scale_t);
        // first-layer biases act as phases
        p[2 * hidden + i] = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    }
    net.read_flat(&p);
    net
}

#[test]
fn criterion_03_gpinn_beats_pinn_on_diffusion_reaction() {
    let spec = diffusion_reaction_spec().unwrap();
    let epochs = 8000;
    let lr = 1e-2;
    let run = |mode: Mode, w_g: f64, seed: u64| -> f64 {
        let counts = CollocationCounts { interior: 40, boundary: 90, data: 0, grad: 40 };
        let colloc = sample_collocation(&spec, counts, Strategy::UniformRandom, seed).unwrap();
        let weights = LossWeights { w_f: 1.0, w_b: 1.0, w_i: 0.0, w_g: vec![w_g, w_g] };
        let mut nets = vec![fourier_net(64, 10.0, 2.0, seed)];
        let (h, _) = train(&mut nets, &spec, &colloc, &weights, mode, epochs, lr, 0.0).unwrap();
        h.records.last().unwrap().l2_rel_error
    };
    let seeds = [1u64, 2, 3];
    let pinn = median(seeds.iter().map(|&s| run(Mode::Vanilla, 0.0, s)).collect());
    let gpinn = median(seeds.iter().map(|&s| run(Mode::Gpinn, 0.01, s)).collect());
    verdict(
        3,
        "gradient-enhanced vs vanilla training",
        gpinn <= pinn && gpinn <= 5e-2,
        &format!(
            "median L2 rel error over 3 seeds: gradient-enhanced {gpinn:.3e} vs vanilla {pinn:.3e} (need ordering and ≤5e-2)"
        ),
    );
}

#[test]
fn criterion_04_self_adaptive_captures_boundary_layer() {
    let nu = 1e-2;
    let spec = bl_ode_spec(nu).unwrap();
    let counts = CollocationCounts { interior: 64, boundary: 8, data: 0, grad: 0 };
    let colloc = sample_collocation(&spec, counts, Strategy::Equispaced, 0).unwrap();
    let weights = LossWeights::ones(1);
    let epochs = 3000;
    let lr = 5e-3;

    let max_err_near_right = |nets: &[Mlp]| -> f64 {
        let pts: Vec<Vec<f64>> = (0..=50).map(|i| vec![0.9 + 0.1 * i as f64 / 50.0]).collect();
        let exact = spec.exact_values(&pts).unwrap();
        pts.iter()
            .zip(&exact)
            .map(|(p, e)| (nets[0].forward(p).unwrap()[0] - e[0]).abs())
            .fold(0.0f64, f64::max)
    };

    let mut vanilla = vec![Mlp::init(&[1, 20, 20, 1], Activation::Tanh, 7).unwrap()];
    train(&mut vanilla, &spec, &colloc, &weights, Mode::Vanilla, epochs, lr, 0.0).unwrap();
    let mut sa = vec![Mlp::init(&[1, 20, 20, 1], Activation::Tanh, 7).unwrap()];
    let (_, sa_weights) =
        train(&mut sa, &spec, &colloc, &weights, Mode::Sa, epochs, lr, 0.1).unwrap();
    let sa_weights = sa_weights.unwrap();

    let err_vanilla = max_err_near_right(&vanilla);
    let err_sa = max_err_near_right(&sa);

    // λ medians: boundary λ plus residual λ inside the layers (|x| ≥ 0.9)
    // against residual λ elsewhere.
    let lambda_r = sa_weights.lambda_r();
    let mut stiff: Vec<f64> = sa_weights.lambda_b();
    let mut interior = Vec::new();
    for (p, l) in colloc.interior.iter().zip(lambda_r) {
        if p[0].abs() >= 0.9 {
            stiff.push(*l);
        } else {
            interior.push(*l);
        }
    }
    let stiff_median = median(stiff);
    let interior_median = median(interior);

    verdict(
        4,
        "self-adaptive boundary layer",
        err_sa < err_vanilla && stiff_median >= 2.0 * interior_median,
        &format!(
            "max error on [0.9,1]: self-adaptive {err_sa:.3e} vs vanilla {err_vanilla:.3e}; λ medians: boundary/layer {stiff_median:.3} vs interior {interior_median:.3} (need ≥2×)"
        ),
    );
}

#[test]
fn criterion_05_domain_decomposition_consistency() {
    let k = 4.0;
    let spec = poisson1d_spec(k).unwrap();
    let weights = LossWeights::ones(1);

    // Two subdomains with a shared interface at 0.5. The second-order
    // problem leaves a slope jump at a single interface point unconstrained
    // under solution-average plus residual continuity alone, so the
    // quantitative run couples through the flux-continuity interface term.
    let (regions, interfaces) = partition(&spec.domain, &[0.5], 1, 20.0).unwrap();
    let make_nets = |id: usize| -> piml::Result<Vec<Mlp>> {
        Ok(vec![Mlp::init(&[1, 16, 1], Activation::Sin, 50 + id as u64)?])
    };
    let counts = CollocationCounts { interior: 24, boundary: 2, data: 0, grad: 0 };
    let mut subs =
        build_subdomains(&spec, &regions, &make_nets, counts, Strategy::Equispaced, 0, 5e-3)
            .unwrap();
    let cfg = XpinnConfig {
        mode: InterfaceMode::Cpinn,
        epochs: 2000,
        threads: 1,
        weights: weights.clone(),
    };
    xpinn_train(&spec, &mut subs, &interfaces, &cfg).unwrap();

    let mismatch =
        interface_loss(&spec, &subs[0].nets, &subs[1].nets, &interfaces[0], InterfaceMode::Cpinn)
            .unwrap();
    let grid = eval_grid(&spec, 201);
    let exact: Vec<f64> = spec.exact_values(&grid).unwrap().into_iter().map(|v| v[0]).collect();
    let pred: Vec<f64> =
        grid.iter().map(|p| stitch_predict(&subs, p).unwrap()[0]).collect();
    let stitched = piml::problems::l2_relative_error(&pred, &exact).unwrap();

    // One subdomain covering the whole domain must match the plain trainer
    // bit for bit.
    let colloc = sample_collocation(
        &spec,
        CollocationCounts { interior: 20, boundary: 2, data: 0, grad: 0 },
        Strategy::UniformRandom,
        3,
    )
    .unwrap();
    let nets0 = vec![Mlp::init(&[1, 10, 1], Activation::Tanh, 11).unwrap()];
    let mut plain = nets0.clone();
    let (hist_plain, _) =
        train(&mut plain, &spec, &colloc, &weights, Mode::Vanilla, 50, 1e-3, 0.0).unwrap();
    let mut single = vec![Subdomain {
        id: 0,
        region: spec.domain.clone(),
        nets: nets0,
        colloc,
        lr: 1e-3,
    }];
    let cfg1 = XpinnConfig { mode: InterfaceMode::Xpinn, epochs: 50, threads: 1, weights };
    let hist_single = xpinn_train(&spec, &mut single, &[], &cfg1).unwrap();
    let bit_identical = hist_plain.loss_table() == hist_single[0].loss_table()
        && plain[0].flat_params() == single[0].nets[0].flat_params();

    verdict(
        5,
        "domain decomposition",
        mismatch <= 1e-2 && stitched <= 5e-2 && bit_identical,
        &format!(
            "interface mismatch {mismatch:.3e} (≤1e-2), stitched L2 {stitched:.3e} (≤5e-2), single-subdomain bit-identical: {bit_identical}"
        ),
    );
}

#[test]
fn criterion_06_data_parallel_gradient_identity() {
    let spec = poisson1d_spec(2.0).unwrap();
    let colloc = sample_collocation(
        &spec,
        CollocationCounts { interior: 16, boundary: 2, data: 0, grad: 0 },
        Strategy::UniformRandom,
        6,
    )
    .unwrap();
    let weights = LossWeights::ones(1);
    let nets = vec![Mlp::init(&[1, 8, 1], Activation::Tanh, 6).unwrap()];

    // Full-batch single-trainer gradient.
    let program =
        piml::pinn::build_loss_program(&spec, &nets, &colloc, &weights, Mode::Vanilla).unwrap();
    let params = nets[0].flat_params();
    let mut ws = program.workspace();
    let mut single = vec![0.0; program.n_params()];
    program.eval_grad(&params, &mut ws, &mut single).unwrap();

    // Interior term is a mean over points, so the equal-chunk average of
    // replica gradients must reproduce it.
    let mut dp = DataParallelTrainer::new(&spec, &nets, &colloc, &weights, 2, 1e-3, false).unwrap();
    let chunks = dp.chunk_gradients(0).unwrap();
    let averaged = piml::xpinn::allreduce_mean(&chunks).unwrap();
    let worst = averaged
        .iter()
        .zip(&single)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // Replica parameters stay bitwise identical across epochs.
    let mut replicas_identical = true;
    for epoch in 0..20 {
        dp.step(epoch).unwrap();
        replicas_identical &= dp.replica_params(0) == dp.replica_params(1);
    }

    verdict(
        6,
        "data-parallel identity",
        worst <= 1e-12 && replicas_identical,
        &format!(
            "max |averaged − single| {worst:.3e} (≤1e-12 per coordinate), replicas bitwise identical over 20 epochs: {replicas_identical}"
        ),
    );
}

/// Two-subdomain inverse conductivity run; returns the L2 relative error of
/// the recovered conductivity field over the full rectangle.
fn heat_inverse_k_error(
    hidden: &[usize],
    interior: usize,
    data: usize,
    w_i: f64,
    epochs: usize,
    lr: f64,
) -> f64 {
    let spec = heat_conduction_spec(None).unwrap();
    let weights = LossWeights { w_f: 1.0, w_b: 1.0, w_i, w_g: vec![0.0, 0.0] };
    let cut = spec.domain.lo()[0] + 0.5 * (spec.domain.hi()[0] - spec.domain.lo()[0]);
    let (regions, interfaces) = partition(&spec.domain, &[cut], 12, 20.0).unwrap();
    let mut sizes = vec![2];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let make_nets = |id: usize| -> piml::Result<Vec<Mlp>> {
        (0..2u64)
            .map(|f| {
                Mlp::init(&sizes, Activation::Tanh, 70 + 10 * id as u64 + f)
                    .map(|n| n.with_output_transform(1.0, 20.0))
            })
            .collect()
    };
    // `data` interior temperature observations per subdomain; conductivity
    // data lands on each subdomain's boundary faces.
    let counts = CollocationCounts { interior, boundary: 64, data, grad: 0 };
    let mut subs =
        build_subdomains(&spec, &regions, &make_nets, counts, Strategy::UniformRandom, 0, lr)
            .unwrap();
    let cfg = XpinnConfig { mode: InterfaceMode::Xpinn, epochs, threads: 1, weights };
    xpinn_train(&spec, &mut subs, &interfaces, &cfg).unwrap();

    let grid = eval_grid(&spec, 441);
    let exact_k: Vec<f64> = spec.exact_values(&grid).unwrap().into_iter().map(|v| v[1]).collect();
    let pred_k: Vec<f64> =
        grid.iter().map(|p| stitch_predict(&subs, p).unwrap()[1]).collect();
    piml::problems::l2_relative_error(&pred_k, &exact_k).unwrap()
}

#[test]
fn criterion_07_inverse_heat_conduction() {
    // 250 temperature observations per subdomain = 500 total.
    let k_err = heat_inverse_k_error(&[16], 100, 250, 1.0, 1200, 5e-3);
    verdict(
        7,
        "inverse conductivity recovery",
        k_err <= 5e-2,
        &format!("recovered conductivity L2 rel error {k_err:.3e} (≤5e-2)"),
    );
}

#[test]
fn criterion_08_graph_flux_recovery() {
    // (a) Diffusion-rate recovery from a synthesized trajectory.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 12);
    let alpha = 0.05;
    let mut x: Vec<f64> = (0..g.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut trajectory = vec![x.clone()];
    for _ in 0..6 {
        x = diffusion_step(&g, &x, alpha).unwrap();
        trajectory.push(x.clone());
    }
    let alpha_hat = fit_diffusion(&g, &trajectory).unwrap();
    let alpha_err = (alpha_hat - alpha).abs();

    // (b) Zero nonlinear part: the Newton solve must match a direct linear
    // solve of the gauged Laplacian system.
    let n = g.n_nodes();
    let mut f0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean: f64 = f0.iter().sum::<f64>() / n as f64;
    for v in f0.iter_mut() {
        *v -= mean;
    }
    let u = nonlinear_flux_solve(&g, &f0, None).unwrap();
    // laplacian0 = −(D − A); with u(0) = 0 the reduced system is
    // (D − A)[1.., 1..] u[1..] = −f0[1..].
    let l = graph_laplacian_matrix(&g);
    let mut reduced = Mat::zeros(n - 1, n - 1);
    for i in 1..n {
        for j in 1..n {
            reduced[(i - 1, j - 1)] = l[(i, j)];
        }
    }
    let rhs: Vec<f64> = f0[1..].iter().map(|v| -v).collect();
    let direct = lu_solve(&reduced, &rhs).unwrap();
    let mut linear_err = u[0].abs();
    for (a, b) in u[1..].iter().zip(&direct) {
        linear_err = linear_err.max((a - b).abs());
    }

    // (c) Cubic edge-flux model fit: data from total flux g + 0.5g³.
    let mut graph_rng = ChaCha8Rng::seed_from_u64(100);
    let g2 = random_graph(&mut graph_rng, 10);
    let c = 0.5;
    let mut pair_rng = ChaCha8Rng::seed_from_u64(23);
    let mut pairs = Vec::new();
    for _ in 0..6 {
        let u: Vec<f64> = (0..g2.n_nodes()).map(|_| pair_rng.gen_range(-0.5..0.5)).collect();
        let gu = grad0(&g2, &u).unwrap();
        let flux = Cochain {
            degree: 1,
            values: gu.values.iter().map(|v| v + c * v * v * v).collect(),
        };
        pairs.push((u, div_adj(&g2, &flux).unwrap().values));
    }
    let mut net = Mlp::init(&[1, 8, 1], Activation::Tanh, 7).unwrap();
    let fit_loss = fit_flux_model(&g2, &pairs, &mut net, 3000, 1e-2).unwrap();

    verdict(
        8,
        "graph flux recovery",
        alpha_err <= 1e-9 && linear_err <= 1e-9 && fit_loss <= 1e-3,
        &format!(
            "diffusion rate error {alpha_err:.3e} (≤1e-9), linear-oracle gap {linear_err:.3e} (≤1e-9), cubic-flux fit residual {fit_loss:.3e} (≤1e-3)"
        ),
    );
}

#[test]
fn criterion_09_stencil_and_polynomial_lift() {
    // Shared stencil on a 1D path with consistent second-difference data.
    let n = 12;
    let h = 0.1;
    let neighborhoods: Vec<Vec<usize>> = (1..n - 1).map(|i| vec![i - 1, i, i + 1]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut samples = Vec::new();
    for _ in 0..8 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lx: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    (x[i - 1] - 2.0 * x[i] + x[i + 1]) / (h * h)
                }
            })
            .collect();
        // Target vector is indexed like the neighborhoods (interior nodes).
        samples.push((x, lx[1..n - 1].to_vec()));
    }
    let stencils = fit_stencil(&samples, &neighborhoods, true).unwrap();
    let expected = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
    let stencil_err = stencils[0]
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // Moving-least-squares lift reproduces a degree-2 polynomial: every
    // recovered coefficient equals the Taylor coefficient at the center.
    let poly = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * x + x * y - 0.3 * y * y;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for i in 0..7 {
        for j in 0..7 {
            let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
            points.push(vec![x, y]);
            values.push(poly(x, y));
        }
    }
    let centers = vec![vec![0.75, 0.75], vec![0.5, 1.0]];
    let lifted = gmls_lift(&centers, &points, &values, 2, 0.6).unwrap();
    let space = JetSpace::new(2, 2);
    let mut lift_err: f64 = 0.0;
    for (center, coeffs) in centers.iter().zip(&lifted) {
        let (cx, cy) = (center[0], center[1]);
        for (alpha, got) in space.indices().iter().zip(coeffs) {
            // Taylor coefficient D^α p / α! of the quadratic at the center.
            let want = match (alpha[0], alpha[1]) {
                (0, 0) => poly(cx, cy),
                (1, 0) => 2.0 + cx + cy,
                (0, 1) => -1.0 + cx - 0.6 * cy,
                (2, 0) => 0.5,
                (1, 1) => 1.0,
                (0, 2) => -0.3,
                _ => unreachable!("degree-2 basis"),
            };
            lift_err = lift_err.max((got - want).abs());
        }
    }

    verdict(
        9,
        "stencil and polynomial lift",
        stencil_err <= 1e-8 && lift_err <= 1e-10,
        &format!(
            "second-difference stencil error {stencil_err:.3e} (≤1e-8), polynomial reproduction error {lift_err:.3e} (≤1e-10)"
        ),
    );
}

fn random_features(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    m
}

fn permute_rows(h: &Mat, perm: &[usize]) -> Mat {
    let mut out = Mat::zeros(h.rows, h.cols);
    for (new, &old) in perm.iter().enumerate() {
        for c in 0..h.cols {
            out[(new, c)] = h[(old, c)];
        }
    }
    out
}

fn permute_graph(g: &OrientedGraph, perm: &[usize]) -> OrientedGraph {
    // perm[new] = old; relabel every edge accordingly.
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(i, j)| (inv[i], inv[j])).collect();
    OrientedGraph::new(g.n_nodes(), &edges, None).unwrap()
}

#[test]
fn criterion_10_gnn_layer_properties() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m_net = Mlp::init(&[6, 8, 3], Activation::Tanh, 1).unwrap();
    let u_net = Mlp::init(&[6, 8, 3], Activation::Tanh, 2).unwrap();

    let mut worst_row: f64 = 0.0;
    let mut worst_equiv: f64 = 0.0;
    let mut worst_readout: f64 = 0.0;
    for _ in 0..20 {
        let g = random_graph(&mut rng, 9);
        let n = g.n_nodes();
        let h = random_features(&mut rng, n, 3);
        let head = AttentionHead {
            w: random_features(&mut rng, 3, 3),
            a: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let params = GatParams {
            heads: vec![head.clone()],
            combine: HeadCombine::Average,
            self_loops: true,
            tanh_activation: true,
        };

        // Attention rows are probability distributions.
        let alpha = gat_attention(&g, &h, &head, true).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| alpha[(i, j)]).sum();
            worst_row = worst_row.max((row - 1.0).abs());
        }

        // Permutation equivariance of MPNN and GAT; invariance of readout.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let gp = permute_graph(&g, &perm);
        let hp = permute_rows(&h, &perm);

        let msg = mpnn_message(&g, &h, None, &m_net).unwrap();
        let out = mpnn_update(&h, &msg, &u_net).unwrap();
        let msg_p = mpnn_message(&gp, &hp, None, &m_net).unwrap();
        let out_p = mpnn_update(&hp, &msg_p, &u_net).unwrap();
        let gat = gat_layer(&g, &h, &params).unwrap();
        let gat_p = gat_layer(&gp, &hp, &params).unwrap();
        for (permuted, original) in [(out_p, &out), (gat_p, &gat)] {
            let back = permute_rows(original, &perm);
            for (a, b) in permuted.data.iter().zip(&back.data) {
                worst_equiv = worst_equiv.max((a - b).abs());
            }
        }
        for (a, b) in readout(&out).unwrap().iter().zip(readout(
            &permute_rows(&out, &perm),
        ).unwrap()) {
            worst_readout = worst_readout.max((a - b).abs());
        }
    }

    // Eigendecomposition reconstructs the Laplacian; normalized spectrum
    // stays inside [0, 2].
    let g = random_graph(&mut rng, 12);
    let l = graph_laplacian_matrix(&g);
    let (u, lam) = laplacian_eigendecomp(&l).unwrap();
    let mut d = Mat::zeros(l.rows, l.cols);
    for (i, &v) in lam.iter().enumerate() {
        d[(i, i)] = v;
    }
    let rebuilt = u.matmul(&d).unwrap().matmul(&u.transpose()).unwrap();
    let recon_err = rebuilt
        .data
        .iter()
        .zip(&l.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let (_, norm_lam) = laplacian_eigendecomp(&normalized_laplacian(&g)).unwrap();
    let spectrum_ok = norm_lam.iter().all(|&v| v >= -1e-10 && v <= 2.0 + 1e-10);

    verdict(
        10,
        "gnn layer properties",
        worst_row <= 1e-12
            && worst_equiv <= 1e-12
            && worst_readout <= 1e-12
            && recon_err <= 1e-10
            && spectrum_ok,
        &format!(
            "attention row sums off by {worst_row:.3e} (≤1e-12), equivariance gap {worst_equiv:.3e} (≤1e-12), readout gap {worst_readout:.3e}, eigen reconstruction {recon_err:.3e} (≤1e-10), normalized spectrum in [0,2]: {spectrum_ok}"
        ),
    );
}

#[test]
fn criterion_11_runs_are_byte_identical() {
    let configs = [
        serde_json::json!({
            "problem": "poisson1d",
            "mode": "vanilla",
            "seed": 5,
            "epochs": 20,
            "network": {"hidden": [8]},
            "collocation": {"interior": 16, "boundary": 2}
        }),
        serde_json::json!({
            "problem": "poisson1d",
            "mode": "xpinn",
            "seed": 5,
            "epochs": 10,
            "network": {"hidden": [6]},
            "collocation": {"interior": 10, "boundary": 2},
            "xpinn": {"cuts": [0.5], "interface_points": 1}
        }),
        serde_json::json!({
            "problem": "none",
            "mode": "graph_diffusion",
            "seed": 5,
            "epochs": 0,
            "graph": {"edge_list": "0 1\n1 2\n2 3\n0 3\n1 3"}
        }),
    ];
    let mut compared = 0;
    for (k, v) in configs.iter().enumerate() {
        let cfg: piml::config::ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
        cfg.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join(format!("a{k}"));
        let b = dir.path().join(format!("b{k}"));
        piml::runner::run(&cfg, &a, None, None).unwrap();
        piml::runner::run(&cfg, &b, None, None).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(&a)
            .unwrap()
            .filter_map(|e| {
                let name = e.unwrap().file_name().into_string().unwrap();
                name.ends_with(".csv").then_some(name)
            })
            .collect();
        names.sort();
        assert!(!names.is_empty(), "run {k} produced no CSV artifacts");
        for name in names {
            let fa = std::fs::read(a.join(&name)).unwrap();
            let fb = std::fs::read(b.join(&name)).unwrap();
            assert_eq!(fa, fb, "run {k}: {name} differs between identical runs");
            compared += 1;
        }
    }
    verdict(
        11,
        "byte-identical reruns",
        true,
        &format!("{compared} CSV artifacts byte-identical across repeated runs"),
    );
}

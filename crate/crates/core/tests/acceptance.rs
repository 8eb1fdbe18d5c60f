//! Acceptance suite: one line per criterion, `PASS` only when both the
//! numerical condition and the time budget hold.

use std::time::{Duration, Instant};

use fluflow::classify::completion_consistency_check;
use fluflow::completion::{soft_impute, CompletionConfig};
use fluflow::data::{standardize_columns, FeatureMatrix, FlowPair, KernelCoefficients, MortalityVector};
use fluflow::encode::{select_bottleneck, Autoencoder, AutoencoderTemplate, LayerPlan};
use fluflow::linalg::Svd;
use fluflow::pca::{fit_pca, reconstruction_error_curve};
use fluflow::pipeline::config::world_config_text;
use fluflow::pipeline::{run_pipeline, PipelineConfig};
use fluflow::pipeline::chain::{run_chain, ChainConfig};
use fluflow::regress::robustness::robustness_from_baseline;
use fluflow::regress::{bootstrap_cv, build_flow_design, fit_rectified, ols_fit, select_features, P_THRESHOLD};
use fluflow::rng::indexed_stream;
use fluflow::spectral::{detect_period, dft_values};
use fluflow::synth::{gen_low_rank, gen_nonlinear_manifold, gen_periodic_series, gen_planted_world, region_codes, PlantedConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn normal_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn completion_recovery() -> Outcome {
    let (panel, full) = gen_low_rank(100, 200, 5, 0.3, 0.0, 1).unwrap();
    let smax = panel.values().singular_values().max();
    let path: Vec<f64> = (0..16).map(|i| 0.5 * smax * (3e-3f64).powf(i as f64 / 15.0)).collect();
    let cfg = CompletionConfig {
        lambda_path: Some(path),
        max_iter: 500,
        ..Default::default()
    };
    let res = soft_impute(&panel, &cfg).unwrap();
    let err = (&res.completed - &full).norm() / full.norm();
    outcome(err < 1e-2 && res.rank == 5, format!("relative error {err:.3e}, rank {}", res.rank))
}

fn svm_consistency() -> Outcome {
    let mut wins = 0;
    let mut details = Vec::new();
    for seed in 0..5 {
        let world = gen_planted_world(&PlantedConfig {
            missing_frac: 0.6,
            kernel_scale: 0.0,
            seed,
            ..Default::default()
        })
        .unwrap();
        let (standardized, _) = standardize_columns(&world.panel).unwrap();
        let completion = soft_impute(&standardized, &CompletionConfig::default()).unwrap();
        let r = completion_consistency_check(&standardized, &completion, &world.labels, &Default::default()).unwrap();
        if r.acc_completed >= 0.9 && r.acc_completed >= r.acc_raw {
            wins += 1;
        }
        details.push(format!("{:.2}/{:.2}", r.acc_completed, r.acc_raw));
    }
    outcome(wins >= 3, format!("{wins}/5 seeds, completed/raw accuracy {}", details.join(" ")))
}

fn periodicity() -> Outcome {
    let mut worst_ratio = f64::INFINITY;
    let mut hits = 0;
    for seed in 0..20 {
        let s = gen_periodic_series("R", 260, 52.0, 5.0, 2.0, seed).unwrap();
        let (_, est) = detect_period(&s, 1).unwrap();
        if est.peak_k == 5 && est.peak_ratio > 3.0 {
            hits += 1;
        }
        worst_ratio = worst_ratio.min(est.peak_ratio);
    }
    outcome(hits == 20, format!("{hits}/20 at k = 5, smallest peak ratio {worst_ratio:.2}"))
}

fn dft_invariants() -> Outcome {
    let mut rng = indexed_stream(4, "acceptance-dft", 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(8..300);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (a, b): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let xs = dft_values(&x).unwrap();
        let ys = dft_values(&y).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = xs.coefficients().iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        worst = worst.max((time - freq).abs() / time);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let cs = dft_values(&combo).unwrap();
        let scale = 1.0 + xs.coefficients().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for k in 1..=n {
            let want = xs.coefficient(k) * a + ys.coefficient(k) * b;
            worst = worst.max((cs.coefficient(k) - want).norm() / scale);
        }
    }
    outcome(worst < 1e-9, format!("largest relative deviation {worst:.2e}"))
}

fn gradient_check() -> Outcome {
    let mut rng = indexed_stream(5, "acceptance-grad", 0);
    let x = normal_matrix(5, 8, &mut rng);
    let mut model = Autoencoder::initialize(&[8, 6, 3], 11);
    let analytic = model.gradient(&x).unwrap();
    let theta = model.parameters();
    let h = 1e-6;
    let mut numeric = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let mut p = theta.clone();
        p[i] = theta[i] + h;
        model.set_parameters(&p).unwrap();
        let up = model.loss(&x).unwrap();
        p[i] = theta[i] - h;
        model.set_parameters(&p).unwrap();
        let down = model.loss(&x).unwrap();
        numeric[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    let rel = diff / norm;
    outcome(rel < 1e-5, format!("relative error {rel:.2e} over {} parameters", theta.len()))
}

struct BottleneckRun {
    ae: Vec<Vec<f64>>,
    pca: Vec<Vec<f64>>,
    best: Vec<usize>,
}

fn manifold_runs() -> BottleneckRun {
    let ks = [1, 2, 3, 4, 5, 6];
    let mut run = BottleneckRun {
        ae: Vec::new(),
        pca: Vec::new(),
        best: Vec::new(),
    };
    for seed in 0..5 {
        let x = gen_nonlinear_manifold(200, 30, 3, seed).unwrap();
        let template = AutoencoderTemplate {
            plan: LayerPlan::Explicit(vec![28, 20]),
            seed,
            epochs: 4000,
            batch_size: 32,
            learning_rate: 0.03,
        };
        let sel = select_bottleneck(&x, &ks, &template).unwrap();
        run.ae.push(sel.table.iter().map(|e| e.loss).collect());
        run.pca.push(reconstruction_error_curve(&x, &ks).unwrap());
        run.best.push(sel.best_k);
    }
    run
}

fn autoencoder_beats_pca(run: &BottleneckRun) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..6 {
        let ae = median(run.ae.iter().map(|v| v[k]).collect());
        let pca = median(run.pca.iter().map(|v| v[k]).collect());
        ok &= ae < pca;
        parts.push(format!("k{}: {ae:.4}<{pca:.4}", k + 1));
    }
    outcome(ok, format!("median loss {}", parts.join(" ")))
}

fn bic_selection(run: &BottleneckRun) -> Outcome {
    let hits = run.best.iter().filter(|&&k| k == 3).count();
    outcome(hits >= 3, format!("best k per seed {:?}", run.best))
}

fn pca_matches_svd() -> Outcome {
    let mut rng = indexed_stream(8, "acceptance-pca", 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(20..60);
        let d = rng.gen_range(3..12);
        let scales: Vec<f64> = (0..d).map(|j| 1.0 + 0.5 * (d - j) as f64).collect();
        let x = DMatrix::from_fn(n, d, |_, j| scales[j] * { let v: f64 = StandardNormal.sample(&mut rng); v });
        let k = d.min(4);
        let model = fit_pca(&x, k).unwrap();
        let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
        let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let svd = Svd::new(&centred).unwrap();
        for c in 0..k {
            let ours = model.components.row(c).transpose();
            let theirs = svd.v_t.row(c).transpose();
            let gap = (&ours - &theirs).amax().min((&ours + &theirs).amax());
            worst = worst.max(gap);
        }
    }
    outcome(worst < 1e-8, format!("largest component deviation {worst:.2e}"))
}

fn flow_design_oracle() -> Outcome {
    let mut rng = indexed_stream(9, "acceptance-flow", 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let regions = region_codes(n);
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
        let mut t = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
        m.fill_diagonal(0.0);
        t.fill_diagonal(0.0);
        let z = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let flows = FlowPair::new(regions.clone(), m.clone(), t.clone()).unwrap();
        let phi = build_flow_design(&MortalityVector::from_scores(regions, z.clone()).unwrap(), &flows)
            .unwrap()
            .phi;
        for i in 0..n {
            for (block, f) in [&m, &t].into_iter().enumerate() {
                let mut acc = [0.0; 4];
                for j in 0..n {
                    acc[0] += f[(i, j)] * z[j];
                    acc[1] += z[i] * f[(i, j)] * z[j];
                    acc[2] += f[(i, j)] * z[j] * z[j];
                    acc[3] += z[i] * f[(i, j)] * z[j] * z[j];
                }
                for c in 0..4 {
                    worst = worst.max((phi[(i, 4 * block + c)] - acc[c]).abs());
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("largest entry deviation {worst:.2e}"))
}

fn kernel_gap(a: &KernelCoefficients, b: &KernelCoefficients) -> f64 {
    a.to_array().iter().zip(b.to_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn deconvolution_recovery() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (noise, tol) in [(0.0, 1e-6), (0.01, 0.05)] {
        let world = gen_planted_world(&PlantedConfig {
            k_features: 6,
            noise_sigma: noise,
            seed: 10,
            ..Default::default()
        })
        .unwrap();
        let fit = fit_rectified(&world.features, &world.z_observed, &world.flows).unwrap();
        let a_gap = (&fit.a - &world.true_a).amax();
        let k_gap = kernel_gap(fit.kernel.as_ref().unwrap(), &world.true_kernel);
        ok &= a_gap.max(k_gap) < tol;
        details.push(format!("sigma {noise}: |a| {a_gap:.1e}, |kappa| {k_gap:.1e}"));
    }
    outcome(ok, details.join("; "))
}

fn bootstrap_comparison() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (label, flow_density) in [("flow-effect", 0.1), ("flow-free", 0.0)] {
        let world = gen_planted_world(&PlantedConfig {
            flow_density,
            noise_sigma: 0.05,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let r = bootstrap_cv(&world.features, &world.z_observed, &world.flows, 200, 11).unwrap();
        let diff = r.mean_difference();
        let se = r.pooled_standard_error();
        let pass = if flow_density > 0.0 { diff < -2.0 * se } else { diff.abs() <= 2.0 * se };
        ok &= pass;
        details.push(format!("{label}: rect-plain {diff:.3e}, 2SE {:.3e}", 2.0 * se));
    }
    outcome(ok, details.join("; "))
}

fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

fn p_value_filter() -> Outcome {
    let mut exact = 0;
    let mut kept_sets = Vec::new();
    for seed in 0..5 {
        let world = gen_planted_world(&PlantedConfig {
            k_features: 3,
            n_null: 3,
            noise_sigma: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let fit = fit_rectified(&world.features, &world.z_observed, &world.flows).unwrap();
        let sel = select_features(&world.features, &world.z_observed, Some(&world.flows), &fit, P_THRESHOLD).unwrap();
        let truth: Vec<usize> = (1..world.true_a.len()).filter(|&j| world.true_a[j] != 0.0).collect();
        if sel.kept == truth {
            exact += 1;
        }
        kept_sets.push(format!("{:?}", sel.kept));
    }
    let mut rng = indexed_stream(12, "acceptance-null", 0);
    let regions = region_codes(183);
    let mut p = Vec::with_capacity(5000);
    for _ in 0..5000 {
        let b = normal_matrix(183, 3, &mut rng);
        let fm = FeatureMatrix::from_features(regions.clone(), &b).unwrap();
        let z = MortalityVector::from_scores(regions.clone(), normal_matrix(183, 1, &mut rng).column(0).into()).unwrap();
        p.push(ols_fit(&fm, &z).unwrap().p_values[0]);
    }
    let ks = ks_uniform(p);
    outcome(
        exact >= 3 && ks < 0.03,
        format!("support exact in {exact}/5 seeds {}; null KS statistic {ks:.4}", kept_sets.join(" ")),
    )
}

fn robustness_protocol() -> Outcome {
    let mut ok = [0, 0];
    let mut parts = Vec::new();
    for seed in 0..5 {
        let world = gen_planted_world(&PlantedConfig {
            noise_sigma: 0.1,
            code_spread: 3.0,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cfg = ChainConfig {
            autoencoder: AutoencoderTemplate {
                plan: LayerPlan::Explicit(Vec::new()),
                seed,
                epochs: 1000,
                batch_size: 32,
                learning_rate: 0.01,
            },
            bottleneck: 3,
            pca_components: 3,
            ..Default::default()
        };
        let base = run_chain(&world.panel, &world.z_observed, Some(&world.flows), &cfg).unwrap();
        let rep = robustness_from_baseline(&base, &cfg, &world.panel, &world.z_observed, Some(&world.flows), 1, seed)
            .unwrap();
        let mut seed_parts = Vec::new();
        for (i, trial) in rep.trials.iter().enumerate() {
            if trial.max_perturbation.is_some_and(|m| m < 0.05) {
                ok[i] += 1;
            }
            seed_parts.push(trial.max_perturbation.map_or("ambiguous".to_string(), |m| format!("{m:.3}")));
        }
        parts.push(format!("[{}]", seed_parts.join(",")));
    }
    outcome(
        ok[0] >= 4 && ok[1] >= 4,
        format!("under 5%: column {}/5, region {}/5; per seed {}", ok[0], ok[1], parts.join(" ")),
    )
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_planted_world(&PlantedConfig {
        seed: 14,
        noise_sigma: 0.05,
        ..Default::default()
    })
    .unwrap();
    world.write_files(dir.path()).unwrap();
    let mut hashes = Vec::new();
    for out in ["run_a", "run_b"] {
        let cfg = PipelineConfig::parse(&world_config_text(14, out), dir.path()).unwrap();
        let manifest = run_pipeline(&cfg).unwrap();
        hashes.push(manifest.hashes());
    }
    let expected = ["out.txt", "out_selected.txt", "residual.txt", "bootstrap.csv", "feature_1.csv"];
    let listed = expected.iter().all(|f| hashes[0].iter().any(|(name, _)| name == f));
    outcome(
        hashes[0] == hashes[1] && listed,
        format!("{} files, identical hashes: {}", hashes[0].len(), hashes[0] == hashes[1]),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, budget: Duration, elapsed: Duration, o: Outcome| {
        let in_time = elapsed <= budget;
        let pass = o.passed && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} ({:.2} s, budget {} s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    };
    let secs = Duration::from_secs;
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (t.elapsed(), o)
    };

    let (t, o) = timed(&completion_recovery);
    report(1, "matrix completion recovery", secs(30), t, o);
    let (t, o) = timed(&svm_consistency);
    report(2, "svm consistency check", secs(10), t, o);
    let (t, o) = timed(&periodicity);
    report(3, "planted period detection", secs(1), t, o);
    let (t, o) = timed(&dft_invariants);
    report(4, "dft parseval and linearity", secs(1), t, o);
    let (t, o) = timed(&gradient_check);
    report(5, "autoencoder gradient check", secs(5), t, o);
    let start = Instant::now();
    let run = manifold_runs();
    let shared = start.elapsed();
    report(6, "autoencoder beats pca on a nonlinear manifold", secs(300), shared, autoencoder_beats_pca(&run));
    report(7, "bic picks the planted dimension", secs(600), shared, bic_selection(&run));
    let (t, o) = timed(&pca_matches_svd);
    report(8, "deflation pca matches svd", secs(10), t, o);
    let (t, o) = timed(&flow_design_oracle);
    report(9, "flow design matches the loop oracle", secs(1), t, o);
    let (t, o) = timed(&deconvolution_recovery);
    report(10, "joint deconvolution recovery", secs(10), t, o);
    let (t, o) = timed(&bootstrap_comparison);
    report(11, "bootstrap model comparison", secs(120), t, o);
    let (t, o) = timed(&p_value_filter);
    report(12, "p-value filter and null uniformity", secs(300), t, o);
    let (t, o) = timed(&robustness_protocol);
    report(13, "robustness to appended noise", secs(900), t, o);
    let (t, o) = timed(&end_to_end_determinism);
    report(14, "end-to-end determinism", secs(1200), t, o);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

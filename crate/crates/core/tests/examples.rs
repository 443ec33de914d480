//! Worked examples for every module, checked against independent oracles
//! (direct formulas, brute-force loops, finite differences, densification).

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use fourier_ed_core::basis::{self, BasisSpec, LocalBasis, Side};
use fourier_ed_core::fim::{self, FimEstimate, FimSource};
use fourier_ed_core::linalg;
use fourier_ed_core::model::FactoredModel;
use fourier_ed_core::modelgen::{self, SpectralModel};
use fourier_ed_core::rng::{angles, substream};
use fourier_ed_core::structure::{self, DenseModel, StructureConstants, SvdFactors};
use fourier_ed_core::tensornet::{self, TensorLayout, TensorizedModel};
use fourier_ed_core::training::{self, TrainingConfig, TrainingSet};
use ndarray::Array2;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn dense_model(spec: &BasisSpec, seed: u64) -> DenseModel<f64> {
    let mut rng = substream(seed, &[]);
    let g = structure::random_structure_constants(spec, &mut rng).unwrap();
    DenseModel::new(spec.clone(), structure::svd_decompose(&g).unwrap()).unwrap()
}

fn fd_gradient<M: FactoredModel<f64>>(model: &M, x: &[f64], theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[j] += h;
            m[j] -= h;
            (model.evaluate(x, &p).unwrap() - model.evaluate(x, &m).unwrap()) / (2.0 * h)
        })
        .collect()
}

// basis

#[test]
fn local_input_basis_values() {
    let spec = BasisSpec::new(1, 1, vec![1], vec![1], true, true).unwrap();
    assert_eq!(basis::eval_local_input_basis(&spec, 0.0f64), vec![1.0, SQRT_2, 0.0]);

    let spec = BasisSpec::new(1, 1, vec![1, 2], vec![1], true, true).unwrap();
    let v = basis::eval_local_input_basis(&spec, FRAC_PI_2);
    let expect = [1.0, 0.0, -SQRT_2, SQRT_2, 0.0];
    for (a, b) in v.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }

    let spec = BasisSpec::fourier_1d(8, 1).unwrap();
    let x = 0.37f64;
    let v = basis::eval_local_input_basis(&spec, x);
    assert_eq!(v.len(), 17);
    assert_eq!(v[0], 1.0);
    for w in 1..=8 {
        assert!((v[w] - SQRT_2 * (w as f64 * x).cos()).abs() < 1e-15);
        assert!((v[8 + w] - SQRT_2 * (w as f64 * x).sin()).abs() < 1e-15);
    }
}

#[test]
fn product_basis_is_kronecker() {
    let spec = BasisSpec::new(2, 2, vec![1], vec![1], true, true).unwrap();
    let e = basis::eval_product_basis(&spec, &[0.0f64, 0.0], Side::Inputs).unwrap();
    let l = [1.0, SQRT_2, 0.0];
    for a in 0..3 {
        for b in 0..3 {
            assert!((e[a * 3 + b] - l[a] * l[b]).abs() < 1e-15);
        }
    }
    let theta = [0.4f64, -2.1];
    let iota = basis::eval_product_basis(&spec, &theta, Side::Params).unwrap();
    let l1 = basis::eval_local_param_basis(&spec, theta[0]);
    let l2 = basis::eval_local_param_basis(&spec, theta[1]);
    for (a, x) in l1.iter().enumerate() {
        for (b, y) in l2.iter().enumerate() {
            assert!((iota[a * 3 + b] - x * y).abs() < 1e-15);
        }
    }
    let err = basis::eval_product_basis(&spec, &[0.0f64], Side::Inputs).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('1'), "{msg}");
}

#[test]
fn derivative_tensor_examples() {
    let spec = BasisSpec::new(1, 1, vec![1], vec![1], true, true).unwrap();
    let b: Array2<f64> = basis::derivative_tensor(&spec);
    assert_eq!(b, ndarray::array![[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]);

    let local = LocalBasis::new(vec![1, 2], true).unwrap();
    let b: Array2<f64> = local.derivative_matrix();
    let mut expect = Array2::<f64>::zeros((5, 5));
    expect[[1, 3]] = -1.0;
    expect[[3, 1]] = 1.0;
    expect[[2, 4]] = -2.0;
    expect[[4, 2]] = 2.0;
    assert_eq!(b, expect);

    let local = LocalBasis::new(vec![1, 3, 4], true).unwrap();
    let b: Array2<f64> = local.derivative_matrix();
    let h = 1e-5;
    for k in 0..100 {
        let t = -PI + 2.0 * PI * k as f64 / 100.0;
        let p = local.eval(t + h);
        let m = local.eval(t - h);
        let exact = b.dot(&ndarray::Array1::from(local.eval(t)));
        for i in 0..local.dim() {
            assert!(((p[i] - m[i]) / (2.0 * h) - exact[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn trapezoid_gram_is_identity() {
    for freqs in [vec![1], vec![1, 2], vec![1, 2, 3, 4, 5, 6, 7, 8], (1..=17).collect()] {
        let local = LocalBasis::new(freqs, true).unwrap();
        let n = 2 * local.max_freq() as usize + 1;
        let g: Array2<f64> = basis::local_gram(&local, n);
        let defect = (&g - &Array2::<f64>::eye(local.dim())).iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(defect < 1e-10, "d={} defect={defect}", local.dim());
    }
}

// structure

#[test]
fn random_constants_moments() {
    let spec = BasisSpec::fourier_1d(8, 7).unwrap();
    let mut rng = substream(3, &[]);
    let g: StructureConstants<f64> = structure::random_structure_constants(&spec, &mut rng).unwrap();
    assert_eq!(g.gamma.dim(), (17, 2187));
    let n = g.gamma.len() as f64;
    let mean = g.gamma.sum() / n;
    let var = g.gamma.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 0.02, "{mean}");
    assert!(var > 0.32 && var < 0.35, "{var}");
}

#[test]
fn rank_one_and_random_svd() {
    let spec = BasisSpec::new(1, 2, vec![1], vec![1], true, true).unwrap();
    let u = [1.0, -2.0, 0.5];
    let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
    let gamma = Array2::from_shape_fn((3, 9), |(i, j)| u[i] * v[j]);
    let f = structure::svd_decompose(&StructureConstants::new(gamma, spec).unwrap()).unwrap();
    let expect = linalg::norm(&u) * linalg::norm(&v);
    assert!((f.s[0] - expect).abs() < 1e-12);
    assert!(f.s[1].abs() < 1e-12 && f.s[2].abs() < 1e-12);

    // 4 x 8 against eigenvalues of the Gram matrix.
    let spec = BasisSpec::new(1, 1, vec![1], vec![1, 2, 3], false, true).unwrap();
    let gamma = Array2::from_shape_fn((2, 7), |(i, j)| ((i * 7 + j) as f64 * 1.3).cos());
    let g = StructureConstants::new(gamma.clone(), spec).unwrap();
    let f = structure::svd_decompose(&g).unwrap();
    let (eig, _) = linalg::symmetric_eigen(&gamma.dot(&gamma.t()));
    for (s, e) in f.s.iter().zip(&eig) {
        assert!((s * s - e).abs() < 1e-10);
    }
}

#[test]
fn factored_evaluation_matches_double_sum() {
    let spec = BasisSpec::new(2, 2, vec![1], vec![1, 2], true, true).unwrap();
    let mut rng = substream(5, &[]);
    let g: StructureConstants<f64> = structure::random_structure_constants(&spec, &mut rng).unwrap();
    let f = structure::svd_decompose(&g).unwrap();
    let x = [0.3, -1.1];
    let theta = [2.2, 0.4];
    let e = basis::eval_product_basis(&spec, &x, Side::Inputs).unwrap();
    let iota = basis::eval_product_basis(&spec, &theta, Side::Params).unwrap();
    let mut brute = 0.0;
    for mu in 0..e.len() {
        for nu in 0..iota.len() {
            brute += e[mu] * g.gamma[[mu, nu]] * iota[nu];
        }
    }
    let via = structure::evaluate_model(&f, &spec, &x, &theta).unwrap();
    assert!(close(via, brute, 1e-10));
    assert!(close(g.evaluate(&x, &theta).unwrap(), brute, 1e-12));
}

#[test]
fn dense_gradient_matches_finite_differences() {
    // d̃ = 2, 3, 5
    for (seed, param_freqs, constant) in [(1u64, vec![1], false), (2, vec![1], true), (3, vec![1, 2], true)] {
        let spec = BasisSpec::new(1, 3, vec![1, 2], param_freqs, true, constant).unwrap();
        let model = dense_model(&spec, seed);
        let mut rng = substream(seed, &[9]);
        let x = angles(&mut rng, 1);
        let theta = angles(&mut rng, 3);
        let g = model.gradient(&x, &theta).unwrap();
        let fd = fd_gradient(&model, &x, &theta, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!(close(*a, *b, 1e-6), "{a} vs {b}");
        }
    }
}

// fim

fn single_coupling_model(s: f64) -> DenseModel<f64> {
    let spec = BasisSpec::new(1, 1, vec![1], vec![1], true, true).unwrap();
    let mut gamma = Array2::zeros((3, 3));
    gamma[[1, 2]] = s;
    let g = StructureConstants::new(gamma, spec.clone()).unwrap();
    DenseModel::new(spec, structure::svd_decompose(&g).unwrap()).unwrap()
}

#[test]
fn single_parameter_fim() {
    let model = single_coupling_model(1.0);
    let q = fim::fim_quadrature(&model, &[0.0], 3).unwrap();
    assert!((q.matrix[[0, 0]] - 2.0).abs() < 1e-12);
    let a = fim::fim_analytic(&model, &[0.0]).unwrap();
    assert!((a.matrix[[0, 0]] - 2.0).abs() < 1e-12);
    let t = 0.8f64;
    let a = fim::fim_analytic(&model, &[t]).unwrap();
    assert!((a.matrix[[0, 0]] - 2.0 * t.cos().powi(2)).abs() < 1e-12);
    assert!(matches!(
        fim::fim_quadrature(&model, &[0.0], 2),
        Err(fourier_ed_core::Error::GridTooCoarse { required: 3, .. })
    ));
}

#[test]
fn analytic_fim_matches_quadruple_loop() {
    let spec = BasisSpec::new(1, 2, vec![1], vec![1], true, true).unwrap();
    let model = dense_model(&spec, 17);
    let theta = [0.9, -0.4];
    let f = fim::fim_analytic(&model, &theta).unwrap();
    let v = &model.factors.v;
    let s = &model.factors.s;
    let b: Array2<f64> = basis::derivative_tensor(&spec);
    let l: Vec<Vec<f64>> = theta.iter().map(|&t| basis::eval_local_param_basis(&spec, t)).collect();
    let dl: Vec<Vec<f64>> = l.iter().map(|x| b.dot(&ndarray::Array1::from(x.clone())).to_vec()).collect();
    // ∂ι_ν/∂θ_j over the flat index ν = 3 ν₁ + ν₂.
    let d = |j: usize, nu: usize| {
        let (a, c) = (nu / 3, nu % 3);
        if j == 0 { dl[0][a] * l[1][c] } else { l[0][a] * dl[1][c] }
    };
    for j in 0..2 {
        for k in 0..2 {
            let mut acc = 0.0;
            for rho in 0..3 {
                for nu in 0..9 {
                    for nu2 in 0..9 {
                        acc += s[rho] * s[rho] * d(j, nu) * v[[nu, rho]] * v[[nu2, rho]] * d(k, nu2);
                    }
                }
            }
            assert!(close(f.matrix[[j, k]], acc, 1e-12));
        }
    }
}

#[test]
fn ed_closed_forms() {
    let m = 4;
    let z = vec![
        FimEstimate { matrix: Array2::<f64>::zeros((m, m)), theta: vec![0.0; m], source: FimSource::Normalized };
        3
    ];
    assert_eq!(fim::effective_dimension(&z, 100_000).unwrap().d_eff, 0.0);

    let c: f64 = 100.0;
    let mut rank1 = Array2::<f64>::zeros((4, 4));
    rank1[[0, 0]] = 4.0;
    let ed = fim::effective_dimension_scaled(&[rank1], c).unwrap();
    assert!((ed - 401f64.ln() / (4.0 * 100f64.ln())).abs() < 1e-12);
    assert!((ed - 0.3254).abs() < 1e-4);

    let n = 100_000u64;
    let est = fim::effective_dimension(
        &[FimEstimate { matrix: Array2::<f64>::eye(3), theta: vec![0.0; 3], source: FimSource::Normalized }],
        n,
    )
    .unwrap();
    let cn = n as f64 / (2.0 * PI * (n as f64).ln());
    assert!((est.c_n - cn).abs() < 1e-12 * cn);
    assert!((est.d_eff - (1.0 + cn).ln() / cn.ln()).abs() < 1e-12);
}

#[test]
fn rank_bounded_by_input_dimension() {
    let spec = BasisSpec::new(1, 8, vec![1], vec![1], false, true).unwrap();
    assert_eq!(spec.input_dim(), 2);
    let spec = BasisSpec::new(2, 8, vec![1], vec![1], false, true).unwrap();
    assert_eq!(spec.input_dim(), 4);
    for seed in 0..5 {
        let mut rng = substream(seed, &[]);
        let model: DenseModel<f64> =
            modelgen::unbiased_model(&spec, &structure::flat_spectrum(4), &mut rng).unwrap();
        let theta = angles(&mut rng, 8);
        let f = fim::fim_analytic(&model, &theta).unwrap();
        assert!(fim::numerical_rank(&f.matrix, 1e-8) <= 4);
    }
    assert_eq!(fim::numerical_rank(&Array2::<f64>::zeros((3, 3)), 1e-8), 0);
    assert_eq!(fim::numerical_rank(&Array2::<f64>::eye(5), 1e-8), 5);
}

#[test]
fn rmt_mean_matches_closed_form() {
    let spec = BasisSpec::new(1, 3, vec![1, 2], vec![1], true, true).unwrap();
    let mut rng = substream(21, &[]);
    let theta = angles(&mut rng, 3);
    let s = structure::flat_spectrum::<f64>(5);
    let stats = fim::rmt_statistics(&s, &spec, &theta, 200, &mut rng).unwrap();
    for j in 0..3 {
        let ratio = stats.mean[[j, j]] / stats.predicted_mean[[j, j]];
        assert!(ratio > 1.0 / 3.0 && ratio < 3.0, "{ratio}");
    }
    assert!(fim::rmt_statistics(&s, &spec, &theta, 99, &mut rng).is_err());
}

// modelgen

#[test]
fn generator_constraints_and_exactness() {
    let spec = BasisSpec::fourier_1d(8, 7).unwrap();
    let mut rng = substream(31, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 6, &mut rng).unwrap();
    let iota = basis::eval_product_basis(&spec, &gen.theta_star, Side::Params).unwrap();
    let psi = gen.target_features();
    let scale = linalg::norm(&iota);
    assert!(psi[6..].iter().all(|p| p.abs() <= 1e-9 * scale));
    assert!(linalg::orthonormality_defect(&gen.model.factors.v) < 1e-10);
    assert!((structure::purity(&gen.model.factors.s).unwrap() - 1.0 / 17.0).abs() < 1e-12);

    for xi in [1e-6, 0.5, 1.0, 2.0, 1e6] {
        let cut = modelgen::cutoff_biased_model(&gen, xi).unwrap();
        for _ in 0..20 {
            let x = angles(&mut rng, 1);
            let y = gen.eval(&x).unwrap();
            assert!((cut.evaluate(&x, &gen.theta_star).unwrap() - y).abs() < 1e-9);
            assert!((gen.model.evaluate(&x, &gen.theta_star).unwrap() - y).abs() < 1e-9);
        }
        if xi < 1e3 {
            let p_cut = structure::purity(cut.spectrum()).unwrap();
            assert!(p_cut > 1.0 / 17.0);
        }
    }
    let tiny = modelgen::cutoff_biased_model(&gen, 1e-6).unwrap();
    assert!(tiny.spectrum()[6..].iter().all(|&s| s < 1e-300));
}

#[test]
fn generator_with_single_annihilating_column() {
    let spec = BasisSpec::fourier_1d(1, 3).unwrap();
    let mut rng = substream(32, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 2, &mut rng).unwrap();
    assert!(gen.target_features()[2].abs() < 1e-12);
    assert!(gen.target_features()[1].abs() > 1e-6);
}

#[test]
fn perturbation_and_deviation() {
    let spec = BasisSpec::fourier_1d(2, 4).unwrap();
    let mut rng = substream(33, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 2, &mut rng).unwrap();
    assert_eq!(modelgen::bias_deviation(&gen, &gen).unwrap(), 0.0);
    let same = modelgen::perturb_generator(&gen, 0.0, &mut rng).unwrap();
    assert!((&same.model.factors.v - &gen.model.factors.v).iter().all(|x| x.abs() < 1e-12));
    assert!(modelgen::bias_deviation(&gen, &same).unwrap() <= 1e-10);

    let mut means = Vec::new();
    for eps in [0.0, 0.01, 0.1, 1.0] {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut r = substream(seed, &[7]);
            let p = modelgen::perturb_generator(&gen, eps, &mut r).unwrap();
            assert!(linalg::orthonormality_defect(&p.model.factors.v) < 1e-10);
            total += modelgen::bias_deviation(&gen, &p).unwrap();
        }
        means.push(total / 20.0);
    }
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}

#[test]
fn two_column_deviation_by_hand() {
    // D = 2, K = 3 (no input constant, no parameter sines): ψ differences
    // are worked out by hand below.
    let spec = BasisSpec::new(1, 1, vec![1], vec![], false, true).unwrap();
    assert_eq!(spec.d_tilde(), 1);
    let spec = BasisSpec::new(1, 1, vec![1], vec![1], false, false).unwrap();
    let u = Array2::<f64>::eye(2);
    let s = vec![0.6, 0.8];
    let v1 = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let v2 = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let m1 = DenseModel::new(spec.clone(), SvdFactors { u: u.clone(), s: s.clone(), v: v1 }).unwrap();
    let m2 = DenseModel::new(spec, SvdFactors { u, s, v: v2 }).unwrap();
    let theta = vec![0.5f64];
    let g1 = modelgen::DataGenerator::new(m1, theta.clone(), 1, 0.0).unwrap();
    let g2 = modelgen::DataGenerator::new(m2, theta, 1, 0.0).unwrap();
    // ι = √2 (cos θ, sin θ); ψ₁ − ψ₂ = √2 (cos − sin, sin − cos).
    let (c, sn) = (SQRT_2 * 0.5f64.cos(), SQRT_2 * 0.5f64.sin());
    let expect = 0.6 * (c - sn).abs() + 0.8 * (sn - c).abs();
    let got = modelgen::bias_deviation(&g1, &g2).unwrap();
    assert!((got - expect).abs() < 1e-14);
    assert_eq!(got, modelgen::bias_deviation(&g2, &g1).unwrap());
}

#[test]
fn unbiased_model_passthrough_and_miss() {
    let spec = BasisSpec::fourier_1d(3, 4).unwrap();
    let mut rng = substream(34, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 3, &mut rng).unwrap();
    let s = structure::decay_spectrum(&structure::flat_spectrum(7), 3, 1.0).unwrap();
    let model = modelgen::unbiased_model(&spec, &s, &mut rng).unwrap();
    assert_eq!(model.spectrum(), s.as_slice());
    let data = training::sample_training_set(&gen, 30, &mut rng).unwrap();
    let best = (0..200)
        .map(|_| training::mse(&model, &angles(&mut rng, 4), &data).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(best > 1e-4, "{best}");
}

// tensornet

#[test]
fn tensorized_matches_dense_after_densification() {
    let spec = BasisSpec::new(2, 3, vec![1], vec![1], true, true).unwrap();
    let layout = TensorLayout { bond_dim: 4, use_mpo: true, use_tree: true };
    let mut rng = substream(41, &[]);
    let s = structure::normalize_spectrum(&[4.0, 3.0, 2.0, 1.0]).unwrap();
    let tm = tensornet::unbiased_tensorized_model::<f64, _>(&spec, &layout, &s, &mut rng).unwrap();
    let dense_u = tm.densified_input_frame();
    let dense_v = tm.densified_v();
    assert!(linalg::orthonormality_defect(&dense_u) < 1e-10);
    assert!(linalg::orthonormality_defect(&dense_v) < 1e-10);
    for _ in 0..10 {
        let x = angles(&mut rng, 2);
        let theta = angles(&mut rng, 3);
        let e = basis::eval_product_basis(&spec, &x, Side::Inputs).unwrap();
        let iota = basis::eval_product_basis(&spec, &theta, Side::Params).unwrap();
        let phi = dense_u.t().dot(&ndarray::Array1::from(e));
        let psi = dense_v.t().dot(&ndarray::Array1::from(iota));
        let expect: f64 = (0..4).map(|r| s[r] * phi[r] * psi[r]).sum();
        assert!(close(tm.evaluate(&x, &theta).unwrap(), expect, 1e-12));
        let g = tm.gradient(&x, &theta).unwrap();
        let fd = fd_gradient(&tm, &x, &theta, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!(close(*a, *b, 1e-6));
        }
    }
    let zero = tm.with_spectrum(vec![0.0; 4]).unwrap();
    assert_eq!(zero.evaluate(&[0.1, 0.2], &[0.3, 0.4, 0.5]).unwrap(), 0.0);
}

#[test]
fn tensorized_fim_ignores_input_networks() {
    let spec = BasisSpec::new(2, 3, vec![1], vec![1], true, true).unwrap();
    let layout = TensorLayout { bond_dim: 4, use_mpo: true, use_tree: true };
    let mut rng = substream(42, &[]);
    let s = structure::flat_spectrum::<f64>(4);
    let a = tensornet::unbiased_tensorized_model::<f64, _>(&spec, &layout, &s, &mut rng).unwrap();
    let b = tensornet::unbiased_tensorized_model::<f64, _>(&spec, &layout, &s, &mut rng).unwrap();
    let b = TensorizedModel { v: a.v.clone(), ..b };
    let theta = angles(&mut rng, 3);
    let fa = fim::fim_analytic(&a, &theta).unwrap().matrix;
    let fb = fim::fim_analytic(&b, &theta).unwrap().matrix;
    let fq = fim::fim_quadrature(&a, &theta, 3).unwrap().matrix;
    for ((x, y), z) in fa.iter().zip(&fb).zip(&fq) {
        assert!((x - y).abs() < 1e-10 && (x - z).abs() < 1e-10);
    }
}

#[test]
fn biased_tensorized_generator_at_full_scale() {
    let spec = BasisSpec::new(4, 24, vec![1, 2, 3], vec![1], true, true).unwrap();
    let layout = TensorLayout { bond_dim: 30, use_mpo: true, use_tree: true };
    let mut rng = substream(43, &[]);
    let theta_star = angles(&mut rng, 24);
    let start = std::time::Instant::now();
    let gen = tensornet::biased_tensorized_generator::<f64, _>(&spec, 2, &layout, &theta_star, &mut rng).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let psi = gen.target_features();
    assert!(psi[2..].iter().all(|p| p.abs() < 1e-9));
    let cut = modelgen::cutoff_biased_model(&gen, 1.0).unwrap();
    let start = std::time::Instant::now();
    for _ in 0..50 {
        let x = angles(&mut rng, 4);
        let y = gen.eval(&x).unwrap();
        assert!((gen.model.evaluate(&x, &theta_star).unwrap() - y).abs() < 1e-9);
        assert!((cut.evaluate(&x, &theta_star).unwrap() - y).abs() < 1e-9);
    }
    // Generous bound on 100 evaluations; the per-point budget is 10 ms.
    assert!(start.elapsed().as_secs_f64() < 1.0);

    let theta = angles(&mut rng, 24);
    let x = angles(&mut rng, 4);
    let g = gen.model.gradient(&x, &theta).unwrap();
    let fd = fd_gradient(&gen.model, &x, &theta, 1e-5);
    let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-6 * (1.0 + scale));
    }
}

// training

#[test]
fn training_set_sampling() {
    let spec = BasisSpec::fourier_1d(2, 3).unwrap();
    let mut rng = substream(51, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 2, &mut rng).unwrap();
    let a = training::sample_training_set(&gen, 600, &mut substream(1, &[])).unwrap();
    let b = training::sample_training_set(&gen, 600, &mut substream(1, &[])).unwrap();
    assert_eq!(a, b);
    assert!(a.xs.iter().flatten().all(|x| (-PI..=PI).contains(x)));
    let mean = a.xs.iter().map(|x| x[0]).sum::<f64>() / 600.0;
    assert!(mean.abs() < 0.2);
    for (x, y) in a.xs.iter().zip(&a.ys) {
        assert_eq!(*y, gen.eval(x).unwrap());
    }
}

#[test]
fn zero_model_mse() {
    let spec = BasisSpec::fourier_1d(1, 1).unwrap();
    let model = DenseModel::new(
        spec.clone(),
        SvdFactors { u: Array2::eye(3), s: vec![0.0; 3], v: Array2::eye(3) },
    )
    .unwrap();
    let data = TrainingSet { xs: vec![vec![0.1], vec![2.0]], ys: vec![1.0, 1.0] };
    assert_eq!(training::mse(&model, &[0.3], &data).unwrap(), 1.0);
}

#[test]
fn training_at_the_anchor_stays_put() {
    // Labels are produced by the model itself so residuals at the anchor are
    // exactly zero. With round-off residuals instead, Adam's eps-normalized
    // step turns ~1e-15 gradients into lr-sized moves within a few steps.
    let spec = BasisSpec::fourier_1d(8, 7).unwrap();
    let mut rng = substream(52, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 6, &mut rng).unwrap();
    let xs: Vec<Vec<f64>> = (0..25).map(|_| angles(&mut rng, 1)).collect();
    let ys = xs.iter().map(|x| gen.model.evaluate(x, &gen.theta_star).unwrap()).collect();
    let data = TrainingSet { xs, ys };
    let config = TrainingConfig { epochs: 50, ..Default::default() };
    let trace =
        training::train_from(&gen.model, &data, &config, gen.theta_star.clone(), &mut rng).unwrap();
    assert!(trace.mse.iter().all(|&m| m <= 1e-18));
    assert_eq!(trace.theta, gen.theta_star);
}

#[test]
fn training_is_deterministic() {
    let spec = BasisSpec::fourier_1d(3, 4).unwrap();
    let mut rng = substream(53, &[]);
    let gen = modelgen::make_data_generator::<f64, _>(&spec, 3, &mut rng).unwrap();
    let data = training::sample_training_set(&gen, 25, &mut rng).unwrap();
    let config = TrainingConfig { epochs: 40, seed: 9, ..Default::default() };
    let a = training::train(&gen.model, &data, &config).unwrap();
    let b = training::train(&gen.model, &data, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mse.len(), 40);
    assert_eq!(a.mse_min, a.mse.iter().copied().fold(f64::INFINITY, f64::min));
}

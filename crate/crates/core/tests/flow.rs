use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svrf_autodiff::{finite_difference_check, Graph, ParameterStore};
use svrf_core::corpus::{uniform_noise_patches, PatchCorpus};
use svrf_core::flow::{train_flow, FlowTrainConfig};
use svrf_core::{Binding, FlowConfig, FlowParams};

fn small(patch_size: usize) -> FlowConfig {
    FlowConfig {
        patch_size,
        layers: 4,
        width: 16,
        s_max: 2.0,
        eps_logit: Some(1e-3),
    }
}

/// Randomly initialized couplings with every weight nudged, so no layer is
/// the identity.
fn perturbed(config: FlowConfig, seed: u64, amount: f64) -> FlowParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = FlowParams::init(config, &mut rng).unwrap();
    for (_, e) in p.store.iter_mut() {
        e.values_mut()
            .iter_mut()
            .for_each(|v| *v += rng.random_range(-amount..amount));
    }
    p
}

fn jacobian_log_det(p: &FlowParams, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let zp = p.forward(&plus).unwrap().z;
        let zm = p.forward(&minus).unwrap().z;
        for i in 0..d {
            jac[(i, j)] = (zp[i] - zm[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

#[test]
fn log_det_matches_brute_force_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..4 {
        let p = perturbed(small(2), seed, 0.3);
        let x: Vec<f64> = (0..12).map(|_| rng.random_range(0.05..0.95)).collect();
        let analytic = p.forward(&x).unwrap().log_det;
        let numeric = jacobian_log_det(&p, &x, 1e-6);
        let rel = (analytic - numeric).abs() / analytic.abs().max(1e-8);
        assert!(rel < 1e-3, "seed {seed}: {analytic} vs {numeric}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn inverse_undoes_forward(seed in 0u64..1000, patch in prop::collection::vec(0.0f64..=1.0, 12)) {
        let p = perturbed(small(2), seed, 0.3);
        let back = p.inverse(&p.forward(&patch).unwrap().z).unwrap();
        let worst = patch.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-9, "error {}", worst);
    }
}

#[test]
fn density_integrates_to_one_over_the_unit_cube() {
    let p = perturbed(small(2), 5, 0.1);
    let samples = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut total = 0.0;
    let mut x = [0.0; 12];
    for _ in 0..samples {
        x.iter_mut().for_each(|v| *v = rng.random());
        total += (-p.patch_nll(&x).unwrap()).exp();
    }
    let integral = total / samples as f64;
    assert!((integral - 1.0).abs() < 0.1, "integral {integral}");
}

#[test]
fn nll_gradient_wrt_patch_matches_finite_differences() {
    let p = perturbed(small(2), 21, 0.3);
    let mut store = ParameterStore::new();
    store
        .insert(
            "patch",
            vec![2, 12],
            (0..24).map(|k| 0.1 + 0.8 * ((k * 7) % 24) as f64 / 24.0).collect(),
        )
        .unwrap();
    let mut g = Graph::new();
    let x = g.param("patch");
    let nll = p.nll_node(&mut g, Binding::Frozen(&p.store), x).unwrap();
    let total = g.sum(nll);
    let report = finite_difference_check(&g, &store, total, 1e-6).unwrap();
    assert!(report.is_reliable());
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn nll_gradient_wrt_flow_parameters_matches_finite_differences() {
    let config = FlowConfig {
        width: 4,
        layers: 2,
        ..small(2)
    };
    let p = perturbed(config, 4, 0.3);
    let mut g = Graph::new();
    let x = g.constant(svrf_autodiff::Tensor::new(1, 12, (0..12).map(|k| 0.05 + k as f64 / 13.0).collect()).unwrap());
    let nll = p.nll_node(&mut g, Binding::Trainable, x).unwrap();
    let total = g.sum(nll);
    let report = finite_difference_check(&g, &p.store, total, 1e-6).unwrap();
    assert!(report.is_reliable());
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn training_lowers_nll_within_a_hundred_steps() {
    let corpus = PatchCorpus::bundled(8, 32, 2, 2, 0).unwrap();
    let train = FlowTrainConfig {
        steps: 100,
        batch: 32,
        log_every: 10,
        ..FlowTrainConfig::default()
    };
    let report = train_flow(&corpus, small(2), &train).unwrap();
    assert!(report.final_train_nll < report.initial_train_nll);
    assert!(report.curve.last().unwrap().1 < report.curve[0].1);
}

#[test]
fn training_is_deterministic() {
    let corpus = PatchCorpus::bundled(4, 32, 2, 2, 3).unwrap();
    let train = FlowTrainConfig {
        steps: 20,
        batch: 16,
        ..FlowTrainConfig::default()
    };
    let a = train_flow(&corpus, small(2), &train).unwrap();
    let b = train_flow(&corpus, small(2), &train).unwrap();
    assert_eq!(a, b);
}

#[test]
fn constant_patches_separate_from_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let patches: Vec<Vec<f64>> = (0..1024)
        .map(|_| {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
            (0..4).flat_map(|_| c).collect()
        })
        .collect();
    let corpus = PatchCorpus { patch_size: 2, patches };
    let train = FlowTrainConfig {
        steps: 400,
        batch: 64,
        ..FlowTrainConfig::default()
    };
    let report = train_flow(&corpus, small(2), &train).unwrap();
    let flow = report.params;
    let constant = flow.patch_nll(&[0.4, 0.6, 0.5].repeat(4)).unwrap();
    let noise = flow.mean_nll(&uniform_noise_patches(256, 2, &mut rng)).unwrap();
    assert!(noise - constant > 10.0, "constant {constant}, noise {noise}");
}

#[test]
fn held_out_corpus_beats_noise() {
    let corpus = PatchCorpus::bundled(16, 32, 2, 2, 0).unwrap();
    let train = FlowTrainConfig {
        steps: 300,
        batch: 64,
        ..FlowTrainConfig::default()
    };
    let report = train_flow(&corpus, small(2), &train).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let noise = report
        .params
        .mean_nll(&uniform_noise_patches(512, 2, &mut rng))
        .unwrap();
    assert!(
        report.held_out_nll < noise,
        "held out {}, noise {noise}",
        report.held_out_nll
    );
}

#[test]
fn latent_samples_decode_into_the_unit_cube() {
    let p = perturbed(small(2), 2, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let z: Vec<f64> = (0..12)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let x = p.inverse(&z).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        let margin = 1e-3 / (1.0 - 2e-3);
        assert!(x.iter().all(|v| (-margin..=1.0 + margin).contains(v)));
    }
}

#[test]
fn flow_checkpoint_survives_disk() {
    let p = perturbed(small(2), 6, 0.3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.ckpt");
    svrf_autodiff::checkpoint::save(&p.to_checkpoint(), &path).unwrap();
    let back = FlowParams::from_checkpoint(svrf_autodiff::checkpoint::load(&path).unwrap()).unwrap();
    let patch = vec![0.3; 12];
    assert_eq!(
        back.patch_nll(&patch).unwrap().to_bits(),
        p.patch_nll(&patch).unwrap().to_bits()
    );
}

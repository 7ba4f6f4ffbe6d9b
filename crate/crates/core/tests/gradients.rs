//! Finite-difference oracles for loss gradients and for backpropagation
//! through the whole network.

use cdwce_core::losses::{
    ce_loss, cdw_ce_loss, cdw_ce_margin_loss, co2_loss, corn_loss, ho2_loss, loss_dispatch,
    mse_reg_loss, unimodal_hinge_args,
};
use cdwce_core::model::{Activation, Head, MlpConfig, MlpModel};
use cdwce_core::numerics::softmax;
use cdwce_core::{LossKind, LossSpec, SeededRng};
use proptest::prelude::*;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn central(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[i] += H;
    down[i] -= H;
    (f(&up) - f(&down)) / (2.0 * H)
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences cannot resolve a slope below the rounding noise of
/// `f` itself, about `eps * |f| / H`. Large α makes `f` huge while
/// near-class components keep O(1) slopes.
fn fd_close(analytic: f64, numeric: f64, fx: f64) -> bool {
    rel_err(analytic, numeric) <= TOL || (analytic - numeric).abs() <= 8.0 * f64::EPSILON * fx.abs() / H
}

fn probs(logits: &[f64]) -> Vec<f64> {
    softmax(logits).unwrap().into_inner()
}

fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 3..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ce_gradient(logits in logits_strategy(), c_seed in 0usize..100) {
        let y = probs(&logits);
        let c = c_seed % y.len();
        let g = ce_loss(&y, c).unwrap().grad;
        for i in 0..y.len() {
            let n = central(|v| ce_loss(v, c).unwrap().value, &y, i);
            prop_assert!(rel_err(g[i], n) <= TOL, "component {i}: {} vs {n}", g[i]);
        }
    }

    #[test]
    fn cdw_ce_gradient(logits in logits_strategy(), c_seed in 0usize..100, alpha in 0.5f64..10.0) {
        let y = probs(&logits);
        let c = c_seed % y.len();
        let r = cdw_ce_loss(&y, c, alpha).unwrap();
        for i in 0..y.len() {
            let n = central(|v| cdw_ce_loss(v, c, alpha).unwrap().value, &y, i);
            prop_assert!(fd_close(r.grad[i], n, r.value), "component {i}: {} vs {n}", r.grad[i]);
        }
    }

    #[test]
    fn cdw_ce_margin_gradient(
        logits in logits_strategy(),
        c_seed in 0usize..100,
        alpha in 0.5f64..10.0,
        margin in 0.0f64..0.5,
    ) {
        let y = probs(&logits);
        let c = c_seed % y.len();
        // Stay clear of the clamp at 1 - eps where the gradient jumps to 0.
        prop_assume!(y.iter().all(|p| p + margin < 1.0 - 1e-4));
        let r = cdw_ce_margin_loss(&y, c, alpha, margin).unwrap();
        for i in 0..y.len() {
            let n = central(|v| cdw_ce_margin_loss(v, c, alpha, margin).unwrap().value, &y, i);
            prop_assert!(fd_close(r.grad[i], n, r.value), "component {i}: {} vs {n}", r.grad[i]);
        }
    }

    #[test]
    fn unimodal_losses_gradient(
        logits in logits_strategy(),
        c_seed in 0usize..100,
        lambda in 0.0f64..3.0,
        delta in 0.0f64..0.2,
        entropy in any::<bool>(),
    ) {
        let y = probs(&logits);
        let c = c_seed % y.len();
        let loss = |v: &[f64]| if entropy {
            ho2_loss(v, c, lambda, delta).unwrap()
        } else {
            co2_loss(v, c, lambda, delta).unwrap()
        };
        let kinks: Vec<usize> = unimodal_hinge_args(&y, c, delta)
            .into_iter()
            .filter(|(_, _, arg)| arg.abs() <= H)
            .flat_map(|(lo, hi, _)| [lo, hi])
            .collect();
        let g = loss(&y).grad;
        for i in (0..y.len()).filter(|i| !kinks.contains(i)) {
            let n = central(|v| loss(v).value, &y, i);
            prop_assert!(rel_err(g[i], n) <= TOL);
        }
    }

    #[test]
    fn corn_gradient(logits in prop::collection::vec(-5.0f64..5.0, 1..7), c_seed in 0usize..100) {
        let c = c_seed % (logits.len() + 1);
        let g = corn_loss(&logits, c).unwrap().grad;
        for i in 0..logits.len() {
            let n = central(|v| corn_loss(v, c).unwrap().value, &logits, i);
            prop_assert!(rel_err(g[i], n) <= TOL);
        }
    }

    #[test]
    fn mse_reg_gradient(raw in -8.0f64..8.0, k in 2usize..8, c_seed in 0usize..100) {
        let c = c_seed % k;
        let g = mse_reg_loss(raw, c, k).unwrap().grad[0];
        let n = central(|v| mse_reg_loss(v[0], c, k).unwrap().value, &[raw], 0);
        prop_assert!(rel_err(g, n) <= TOL);
    }
}

fn all_losses() -> Vec<LossKind> {
    vec![
        LossKind::Ce,
        LossKind::CdwCe { alpha: 3.0 },
        LossKind::CdwCeMargin { alpha: 2.0, margin: 0.05 },
        LossKind::Co2 { lambda: 1.0, delta: 0.05 },
        LossKind::Ho2 { lambda: 1.0, delta: 0.05 },
        LossKind::Corn,
        LossKind::MseReg,
    ]
}

fn random_model(rng: &mut SeededRng, config: MlpConfig) -> MlpModel {
    let mut model = MlpModel::init(config).unwrap();
    let params: Vec<f64> = (0..model.num_parameters())
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    model.set_parameters(&params).unwrap();
    model
}

fn sample_loss(model: &MlpModel, spec: &LossSpec, x: &[f64], c: usize) -> f64 {
    let pass = model.forward(x).unwrap();
    loss_dispatch(spec, pass.head_output(), c).unwrap().value
}

/// Checks d(loss ∘ forward)/dθ against central differences over every parameter.
fn check_end_to_end(model: &MlpModel, spec: &LossSpec, x: &[f64], c: usize) -> f64 {
    let pass = model.forward(x).unwrap();
    let upstream = loss_dispatch(spec, pass.head_output(), c).unwrap().grad;
    let analytic = model.backward(&pass, &upstream).unwrap().flatten();
    let theta = model.parameters();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let numeric = central(
            |t| {
                probe.set_parameters(t).unwrap();
                sample_loss(&probe, spec, x, c)
            },
            &theta,
            i,
        );
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

#[test]
fn two_two_two_network_matches_finite_differences() {
    let mut rng = SeededRng::new(7);
    let spec = LossSpec::new(LossKind::Ce, 2).unwrap();
    for draw in 0..20 {
        let config = MlpConfig {
            input_dim: 2,
            hidden_dims: vec![2],
            head: Head::Softmax { classes: 2 },
            activation: Activation::Tanh,
            init_seed: draw,
        };
        let model = random_model(&mut rng, config);
        let x = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
        let c = (rng.next_u64() % 2) as usize;
        let err = check_end_to_end(&model, &spec, &x, c);
        assert!(err <= TOL, "draw {draw}: {err}");
    }
}

#[test]
fn every_head_and_loss_pairing_matches_finite_differences() {
    let mut rng = SeededRng::new(11);
    for kind in all_losses() {
        let k = 4;
        let spec = LossSpec::new(kind, k).unwrap();
        for draw in 0..10 {
            let config = MlpConfig {
                input_dim: 3,
                hidden_dims: vec![5, 4],
                head: Head::for_loss(kind.head(), k),
                activation: Activation::Tanh,
                init_seed: draw,
            };
            let model = random_model(&mut rng, config);
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.5, 1.5)).collect();
            let c = (rng.next_u64() % k as u64) as usize;
            if let LossKind::Co2 { delta, .. } | LossKind::Ho2 { delta, .. } = kind {
                let y = model.forward(&x).unwrap().head_output().to_vec();
                if unimodal_hinge_args(&y, c, delta).iter().any(|(_, _, a)| a.abs() < 1e-4) {
                    continue;
                }
            }
            let err = check_end_to_end(&model, &spec, &x, c);
            assert!(err <= TOL, "{kind} draw {draw}: {err}");
        }
    }
}

#[test]
fn relu_network_matches_finite_differences_away_from_kinks() {
    let mut rng = SeededRng::new(13);
    let spec = LossSpec::new(LossKind::CdwCe { alpha: 5.0 }, 4).unwrap();
    let mut checked = 0;
    for draw in 0..20 {
        let model = random_model(
            &mut rng,
            MlpConfig {
                input_dim: 3,
                hidden_dims: vec![6, 5],
                head: Head::Softmax { classes: 4 },
                activation: Activation::Relu,
                init_seed: draw,
            },
        );
        let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let pass = model.forward(&x).unwrap();
        let hidden = &pass.pre_activations()[..pass.pre_activations().len() - 1];
        // Skip draws where a hidden unit sits on the ReLU kink.
        if hidden.iter().flatten().any(|z| z.abs() < 1e-4) {
            continue;
        }
        checked += 1;
        let err = check_end_to_end(&model, &spec, &x, rng.next_u64() as usize % 4);
        assert!(err <= TOL, "draw {draw}: {err}");
    }
    assert!(checked >= 10);
}

#[test]
fn small_sgd_step_reduces_sample_loss() {
    let mut rng = SeededRng::new(17);
    let lr = 1e-4;
    let mut failures = Vec::new();
    for fixture in 0..50 {
        let kind = all_losses()[fixture % 7];
        let spec = LossSpec::new(kind, 4).unwrap();
        let mut model = random_model(
            &mut rng,
            MlpConfig {
                input_dim: 4,
                hidden_dims: vec![8, 6],
                head: Head::for_loss(kind.head(), 4),
                activation: Activation::Relu,
                init_seed: fixture as u64,
            },
        );
        let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c = (rng.next_u64() % 4) as usize;
        let pass = model.forward(&x).unwrap();
        let r = loss_dispatch(&spec, pass.head_output(), c).unwrap();
        let grads = model.backward(&pass, &r.grad).unwrap();
        if grads.flatten().iter().all(|g| *g == 0.0) {
            continue;
        }
        model.apply_update(&grads, -lr);
        let after = sample_loss(&model, &spec, &x, c);
        if after >= r.value {
            failures.push((fixture, kind));
        }
    }
    assert!(failures.len() <= 2, "loss did not decrease: {failures:?}");
}

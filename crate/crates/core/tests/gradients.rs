mod common;

use common::{check_layer, randomize, rel_err, rng, random_tensor};
use grcnet::nn::{
    softmax_cross_entropy, ChannelAffine, Conv2d, CotLayer, Dense, GrcNet, InceptionBlock, Layer,
    MlpHead, ModelConfig, ResidualUnit, Shape,
};

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn assert_layer<L: Layer>(name: &str, mut layer: L, input: Shape, seed: u64) {
    let mut r = rng(seed);
    randomize(&mut layer, 0.5, &mut r);
    let x = random_tensor(input, &mut r);
    let report = check_layer(&layer, &x, STEP, FLOOR, seed + 1);
    assert!(report.checked > 0);
    assert!(
        report.worst <= TOL,
        "{name}: worst relative error {} at {}",
        report.worst,
        report.worst_at
    );
}

#[test]
fn conv2d_same_padding() {
    assert_layer("conv3x3", Conv2d::same(3, 3, 4), Shape::new(2, 6, 6, 3), 10);
}

#[test]
fn conv2d_strided_and_pointwise() {
    assert_layer("conv strided", Conv2d::new(3, 3, 2, 3, 2, 1), Shape::new(1, 7, 7, 2), 11);
    assert_layer("conv 1x1", Conv2d::pointwise(4, 3), Shape::new(2, 5, 5, 4), 12);
}

#[test]
fn dense_and_affine() {
    assert_layer("dense", Dense::new(6, 4), Shape::new(3, 1, 1, 6), 20);
    assert_layer("affine", ChannelAffine::new(3), Shape::new(2, 4, 4, 3), 21);
}

#[test]
fn residual_unit() {
    assert_layer("residual", ResidualUnit::new(4, 4), Shape::new(2, 6, 6, 4), 30);
    assert_layer("residual projection", ResidualUnit::new(3, 4), Shape::new(1, 6, 6, 3), 31);
}

#[test]
fn inception_block() {
    let block = InceptionBlock::new(4, [2, 3, 2, 2]).unwrap();
    assert_layer("inception", block, Shape::new(2, 6, 6, 4), 40);
}

#[test]
fn mlp_head() {
    assert_layer("mlp head", MlpHead::new(4, 6, 5), Shape::new(3, 4, 4, 4), 50);
}

#[test]
fn cot_layer() {
    assert_layer("cot", CotLayer::new(4, 3, 2, 2).unwrap(), Shape::new(2, 6, 6, 4), 60);
    assert_layer("cot one head", CotLayer::new(4, 3, 4, 1).unwrap(), Shape::new(1, 8, 8, 4), 61);
}

#[test]
fn softmax_cross_entropy_matches_finite_differences() {
    let logits = [0.3, -1.2, 2.0, 0.05, -0.4];
    for label in 0..5 {
        let (_, grad) = softmax_cross_entropy(&logits, label);
        for i in 0..logits.len() {
            let mut up = logits;
            up[i] += STEP;
            let mut down = logits;
            down[i] -= STEP;
            let n = (softmax_cross_entropy(&up, label).0 - softmax_cross_entropy(&down, label).0)
                / (2.0 * STEP);
            assert!(rel_err(grad[i], n, FLOOR) <= TOL, "label {label} logit {i}");
        }
    }
}

#[test]
fn tiny_full_model() {
    let cfg = ModelConfig {
        stem_channels: 4,
        inception_branch_widths: [2, 2, 2, 2],
        mlp_hidden: 6,
        seed: 3,
        ..ModelConfig::default().with_input_size(8)
    };
    let mut model = GrcNet::new(&cfg).unwrap();
    let mut r = rng(70);
    randomize(&mut model, 0.5, &mut r);
    let x = random_tensor(cfg.input_shape(2), &mut r);
    let labels = [1, 4];
    let (_, grads, _) = model.loss_and_gradients(&x, &labels).unwrap();
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|p| p.data.clone()).collect();
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    for (pi, a_param) in analytic.iter().enumerate() {
        for (i, &a) in a_param.iter().enumerate() {
            let orig = model.params()[pi].data[i];
            model.params_mut()[pi].data[i] = orig + step;
            let up = model.loss_and_gradients(&x, &labels).unwrap().0;
            model.params_mut()[pi].data[i] = orig - step;
            let down = model.loss_and_gradients(&x, &labels).unwrap().0;
            model.params_mut()[pi].data[i] = orig;
            let n = (up - down) / (2.0 * step);
            let e = rel_err(a, n, FLOOR);
            assert!(e <= TOL, "param {pi}[{i}]: analytic {a}, numeric {n}");
            worst = worst.max(e);
        }
    }
    assert!(worst.is_finite());
}

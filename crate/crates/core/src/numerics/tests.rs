use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use super::Rng;

fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for l in 0..k {
                out[i * n + j] += a.data()[i * k + l] * b.data()[l * n + j];
            }
        }
    }
    out
}

/// Compares tape gradients of `f` against central differences for every input.
fn check_gradients(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var, tol: f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(ParamId(i), t)).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    for (i, t) in inputs.iter().enumerate() {
        let eval = |x: &[f64]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, u)| {
                    let value = if j == i { Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap() } else { u.clone() };
                    tape.param(ParamId(j), &value)
                })
                .collect();
            let loss = f(&mut tape, &vars);
            tape.value(loss).data()[0]
        };
        let fd = central_difference(eval, t.data(), 1e-5);
        let analytic = grads.get(ParamId(i)).unwrap();
        assert_eq!(analytic.shape(), t.shape());
        for (a, b) in analytic.data().iter().zip(&fd) {
            let err = relative_error(*a, *b, 1e-6);
            assert!(err < tol, "input {i}: analytic {a} vs fd {b} (rel {err:e})");
        }
    }
}

/// Projects a tensor-valued output to a scalar with fixed random weights so every
/// output element contributes to the checked gradient.
fn project(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let w = random_tensor(&mut Seed(seed).rng(), &shape, 1.0);
    let w = tape.constant(w);
    let y = tape.mul(x, w).unwrap();
    tape.sum(y).unwrap()
}

#[test]
fn identity_matmul_returns_operand() {
    let b = random_tensor(&mut Seed(1).rng(), &[3, 4], 2.0);
    assert_eq!(matmul(&Tensor::identity(3), &b).unwrap(), b);
}

#[test]
fn small_matmul_by_hand() {
    let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
    let b = Tensor::from_rows(&[&[1.0], &[1.0]]).unwrap();
    assert_eq!(matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = Seed(2).rng();
    let a = random_tensor(&mut rng, &[5, 7], 1.0);
    let b = random_tensor(&mut rng, &[7, 3], 1.0);
    let c = matmul(&a, &b).unwrap();
    for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn matmul_rejects_inner_mismatch() {
    let a = Tensor::zeros(&[2, 3]);
    assert!(matches!(matmul(&a, &a), Err(NumericsError::ShapeMismatch { .. })));
}

#[test]
fn tape_matmul_transposes_match_oracle() {
    let mut rng = Seed(3).rng();
    let a = random_tensor(&mut rng, &[4, 6], 1.0);
    let b = random_tensor(&mut rng, &[5, 6], 1.0);
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.matmul_t(va, false, vb, true).unwrap();
    let mut bt = vec![0.0; 30];
    for i in 0..5 {
        for j in 0..6 {
            bt[j * 5 + i] = b.data()[i * 6 + j];
        }
    }
    let oracle = naive_matmul(&a, &Tensor::new(vec![6, 5], bt).unwrap());
    for (x, y) in tape.value(c).data().iter().zip(oracle) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_examples() {
    let ones = Tensor::full(&[2], 1.0);
    let zeros = Tensor::zeros(&[2]);
    let constant = Tensor::from_rows(&[&[4.0, 4.0]]).unwrap();
    assert_eq!(layer_norm(&constant, &ones, &zeros, LN_EPS).unwrap().data(), &[0.0, 0.0]);
    let x = Tensor::from_rows(&[&[1.0, 3.0]]).unwrap();
    assert_eq!(layer_norm(&x, &ones, &zeros, 0.0).unwrap().data(), &[-1.0, 1.0]);
    let bias = Tensor::vector(&[0.5, -2.0]).unwrap();
    let y = layer_norm(&x, &Tensor::zeros(&[2]), &bias, LN_EPS).unwrap();
    assert_eq!(y.data(), bias.data());
}

#[test]
fn softmax_examples() {
    let s = softmax(&Tensor::vector(&[0.0, 0.0, 0.0]).unwrap()).unwrap();
    for p in s.data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = softmax(&Tensor::vector(&[1.0, 2.0, 3.0]).unwrap()).unwrap();
    for (p, e) in s.data().iter().zip([0.09003057, 0.24472847, 0.66524096]) {
        assert!((p - e).abs() < 1e-8);
    }
}

#[test]
fn gelu_examples() {
    let g = gelu(&Tensor::vector(&[0.0, 1.0, 10.0]).unwrap());
    assert_eq!(g.data()[0], 0.0);
    // Φ(1) = (1 + erf(1/√2)) / 2 with erf(1/√2) = 0.682689492137086.
    assert!((g.data()[1] - 0.5 * (1.0 + 0.682689492137086)).abs() < 1e-7);
    assert!((g.data()[1] - 0.84134474).abs() < 1e-7);
    assert!((g.data()[2] - 10.0).abs() < 1e-9);
}

#[test]
fn dropout_examples() {
    let x = random_tensor(&mut Seed(4).rng(), &[6, 5], 1.0);
    let mut rng = Seed(5).rng();
    assert_eq!(dropout(&x, 0.5, &mut rng, false).unwrap(), x);
    assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
    let a = dropout(&x, 0.5, &mut Seed(6).rng(), true).unwrap();
    let b = dropout(&x, 0.5, &mut Seed(6).rng(), true).unwrap();
    assert_eq!(a, b);
    for (y, v) in a.data().iter().zip(x.data()) {
        assert!(*y == 0.0 || *y == 2.0 * v);
    }
    assert!(dropout(&x, 1.0, &mut rng, true).is_err());

    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let t = tape.dropout(v, 0.5, &mut Seed(6).rng(), true).unwrap();
    assert_eq!(tape.value(t), &a);
}

#[test]
fn non_finite_values_are_rejected() {
    assert!(matches!(
        Tensor::new(vec![2], vec![1.0, f64::NAN]),
        Err(NumericsError::NonFinite { .. })
    ));
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(&[800.0]).unwrap());
    assert!(matches!(tape.exp(x), Err(NumericsError::NonFinite { .. })));
}

#[test]
fn quadratic_gradient() {
    let w = Tensor::vector(&[1.5, -2.0, 0.25]).unwrap();
    let mut tape = Tape::new();
    let v = tape.param(ParamId(0), &w);
    let sq = tape.mul(v, v).unwrap();
    let loss = tape.sum(sq).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(ParamId(0)).unwrap().data(), &[3.0, -4.0, 0.5]);
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let mut tape = Tape::new();
    let a = tape.param(ParamId(0), &Tensor::vector(&[1.0, 2.0]).unwrap());
    tape.param(ParamId(1), &Tensor::zeros(&[2, 2]));
    let loss = tape.sum(a).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(ParamId(1)).unwrap(), &Tensor::zeros(&[2, 2]));
    assert!(matches!(g.get(ParamId(7)), Err(NumericsError::UnknownParam(7))));
    assert!(matches!(tape.backward(a), Err(NumericsError::NotScalar(_))));
}

#[test]
fn gradient_matmul_and_bias() {
    let mut rng = Seed(10).rng();
    let inputs = [
        random_tensor(&mut rng, &[3, 4], 1.0),
        random_tensor(&mut rng, &[4, 5], 1.0),
        random_tensor(&mut rng, &[5], 1.0),
        random_tensor(&mut rng, &[2, 4], 1.0),
    ];
    check_gradients(
        &inputs,
        |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            let y = t.add_row(y, v[2]).unwrap();
            let z = t.matmul_t(v[3], false, v[1], false).unwrap();
            let z = t.matmul_t(y, false, z, true).unwrap();
            project(t, z, 11)
        },
        1e-6,
    );
}

#[test]
fn gradient_layer_norm() {
    let mut rng = Seed(12).rng();
    let inputs = [
        random_tensor(&mut rng, &[3, 6], 2.0),
        random_tensor(&mut rng, &[6], 1.0),
        random_tensor(&mut rng, &[6], 1.0),
    ];
    check_gradients(
        &inputs,
        |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], LN_EPS).unwrap();
            project(t, y, 13)
        },
        1e-6,
    );
}

#[test]
fn gradient_softmax_gelu_exp() {
    let mut rng = Seed(14).rng();
    let inputs = [random_tensor(&mut rng, &[4, 5], 2.0)];
    check_gradients(
        &inputs,
        |t, v| {
            let s = t.softmax_rows(v[0]).unwrap();
            let g = t.gelu(v[0]).unwrap();
            let e = t.scale(v[0], 0.5).unwrap();
            let e = t.exp(e).unwrap();
            let y = t.add(s, g).unwrap();
            let y = t.sub(y, e).unwrap();
            project(t, y, 15)
        },
        1e-6,
    );
}

#[test]
fn gradient_abs_away_from_kink() {
    let inputs = [Tensor::vector(&[0.7, -1.3, 2.0, -0.2]).unwrap()];
    check_gradients(
        &inputs,
        |t, v| {
            let a = t.abs(v[0]).unwrap();
            project(t, a, 16)
        },
        1e-8,
    );
}

#[test]
fn gradient_structural_ops() {
    let mut rng = Seed(17).rng();
    let inputs = [
        random_tensor(&mut rng, &[5, 4], 1.0),
        random_tensor(&mut rng, &[2, 4], 1.0),
        random_tensor(&mut rng, &[5, 3], 1.0),
    ];
    check_gradients(
        &inputs,
        |t, v| {
            let rows = t.concat_rows(&[v[0], v[1]]).unwrap();
            let picked = t.gather_rows(rows, &[6, 0, 3, 3]).unwrap();
            let cols = t.concat_cols(&[v[0], v[2]]).unwrap();
            let sl = t.slice_cols(cols, 2, 6).unwrap();
            let pooled = t.mean_rows(sl, 1, 4).unwrap();
            let a = project(t, picked, 18);
            let b = project(t, pooled, 19);
            t.add(a, b).unwrap()
        },
        1e-6,
    );
}

#[test]
fn gradient_cross_entropy_and_dropout() {
    let mut rng = Seed(20).rng();
    let inputs = [random_tensor(&mut rng, &[1, 6], 2.0)];
    check_gradients(
        &inputs,
        |t, v| {
            let d = t.dropout(v[0], 0.5, &mut Seed(21).rng(), true).unwrap();
            t.cross_entropy(d, 2).unwrap()
        },
        1e-6,
    );
}

#[test]
fn gradient_linearized_matches_its_jacobian() {
    // f(x) = (x0·x1, sin x2) recorded through its Jacobian.
    let x = Tensor::vector(&[0.4, -1.1, 0.9]).unwrap();
    let mut tape = Tape::new();
    let v = tape.param(ParamId(0), &x);
    let d = x.data();
    let value = Tensor::vector(&[d[0] * d[1], d[2].sin()]).unwrap();
    let jac = vec![d[1], d[0], 0.0, 0.0, 0.0, d[2].cos()];
    let y = tape.linearized(v, value, jac).unwrap();
    let w = tape.constant(Tensor::vector(&[2.0, -3.0]).unwrap());
    let y = tape.mul(y, w).unwrap();
    let loss = tape.sum(y).unwrap();
    let g = tape.backward(loss).unwrap();
    let expected = [2.0 * d[1], 2.0 * d[0], -3.0 * d[2].cos()];
    for (a, b) in g.get(ParamId(0)).unwrap().data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn repeated_operations_are_bitwise_identical() {
    let mut rng = Seed(22).rng();
    let x = random_tensor(&mut rng, &[4, 8], 3.0);
    let g = Tensor::full(&[8], 1.0);
    let b = Tensor::zeros(&[8]);
    assert_eq!(layer_norm(&x, &g, &b, LN_EPS).unwrap(), layer_norm(&x, &g, &b, LN_EPS).unwrap());
    assert_eq!(softmax(&x).unwrap(), softmax(&x).unwrap());
    assert_eq!(gelu(&x), gelu(&x));
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
        let t = Tensor::vector(&z).unwrap();
        let s = softmax(&t).unwrap();
        prop_assert!(s.data().iter().all(|p| *p >= 0.0));
        prop_assert!((s.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let arg = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
        prop_assert_eq!(arg(s.data()), arg(&z));
        let shifted = Tensor::vector(&z.iter().map(|v| v + c).collect::<Vec<_>>()).unwrap();
        let s2 = softmax(&shifted).unwrap();
        prop_assert!(s.max_abs_diff(&s2) < 1e-12);
    }

    #[test]
    fn layer_norm_rows_are_centred(rows in 1usize..5, d in 2usize..10, seed in 0u64..1000) {
        let x = random_tensor(&mut Seed(seed).rng(), &[rows, d], 10.0);
        let y = layer_norm(&x, &Tensor::full(&[d], 1.0), &Tensor::zeros(&[d]), LN_EPS).unwrap();
        for r in 0..rows {
            let mean = y.row(r).iter().sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn matmul_agrees_with_oracle(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in 0u64..1000) {
        let mut rng = Seed(seed).rng();
        let a = random_tensor(&mut rng, &[m, k], 1.0);
        let b = random_tensor(&mut rng, &[k, n], 1.0);
        let c = matmul(&a, &b).unwrap();
        for (x, y) in c.data().iter().zip(naive_matmul(&a, &b)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_inputs;
use super::*;

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn assert_fd(inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>) {
    let report = check_inputs(inputs, FD_H, build).unwrap();
    assert!(report.max_rel_err() < FD_TOL, "{:?}", report.entries);
}

/// Weighted sum so every output element gets a distinct upstream gradient.
fn probe(g: &mut Graph, y: Var, seed: u64) -> Result<Var, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, g.shape(y));
    let w = g.constant(&w);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

#[test]
fn matmul_identity_and_annihilator() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 3]);
    let mut g = Graph::new();
    let id = g
        .constant_from(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.])
        .unwrap();
    let zero = g.constant(&Tensor::zeros(&[3, 3]));
    let av = g.constant(&a);
    let ia = g.matmul(id, av).unwrap();
    assert_eq!(g.value(ia), a.values());
    let za = g.matmul(zero, av).unwrap();
    assert!(g.value(za).iter().all(|&v| v == 0.0));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 3]);
    let b = rand_tensor(&mut rng, &[3, 2]);
    let mut oracle = [0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            for p in 0..3 {
                oracle[i * 2 + j] += a.values()[i * 3 + p] * b.values()[p * 2 + j];
            }
        }
    }
    let mut g = Graph::new();
    let (av, bv) = (g.constant(&a), g.constant(&b));
    let c = g.matmul(av, bv).unwrap();
    for (x, y) in g.value(c).iter().zip(oracle) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(&Tensor::zeros(&[2, 3]));
    let b = g.constant(&Tensor::zeros(&[2, 3]));
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
}

#[test]
fn elementwise_sign_and_symmetry_cases() {
    let mut g = Graph::new();
    let x = g.constant_from(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
    let r = g.relu(x);
    assert_eq!(g.value(r), &[0.0, 0.0, 2.0]);
    let z = g.constant(&Tensor::scalar(0.0));
    let s = g.sigmoid(z);
    assert_eq!(g.value(s), &[0.5]);
}

#[test]
fn incompatible_broadcast_is_dimension_error() {
    let mut g = Graph::new();
    let a = g.constant(&Tensor::zeros(&[2, 3]));
    let b = g.constant(&Tensor::zeros(&[2]));
    assert!(matches!(g.add(a, b), Err(AutodiffError::Dimension { .. })));
}

#[test]
fn add_backward_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[2, 3]);
    let b = rand_tensor(&mut rng, &[2, 3]);
    let mut g = Graph::new();
    let av = g.leaf(&a.clone().with_grad());
    let bv = g.leaf(&b.clone().with_grad());
    let s = g.add(av, bv).unwrap();
    let l = g.sum(s);
    let grads = g.backward(l).unwrap();
    assert!(grads.get(av).unwrap().iter().all(|&v| v == 1.0));
    assert_fd(&[a, b], |g, v| {
        let s = g.add(v[0], v[1])?;
        Ok(g.sum(s))
    });
}

#[test]
fn binary_ops_with_broadcast_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&mut rng, &[2, 3, 4]);
    let row = rand_tensor(&mut rng, &[4]);
    let col = Tensor::new(
        &[2, 3, 1],
        (0..6).map(|_| rng.random_range(0.5..1.5)).collect(),
    )
    .unwrap();
    assert_fd(&[a.clone(), row.clone()], |g, v| {
        let y = g.add(v[0], v[1])?;
        probe(g, y, 10)
    });
    assert_fd(&[a.clone(), row], |g, v| {
        let y = g.sub(v[0], v[1])?;
        probe(g, y, 11)
    });
    assert_fd(&[a.clone(), col.clone()], |g, v| {
        let y = g.mul(v[0], v[1])?;
        probe(g, y, 12)
    });
    assert_fd(&[a, col], |g, v| {
        let y = g.div(v[0], v[1])?;
        probe(g, y, 13)
    });
}

#[test]
fn unary_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[3, 4]);
    let pos = Tensor::new(&[5], (0..5).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
    let inner = Tensor::new(&[5], (0..5).map(|_| rng.random_range(-0.9..0.9)).collect()).unwrap();
    type Unary = fn(&mut Graph, Var) -> Var;
    let ops: [(&str, Unary); 6] = [
        ("relu", |g, x| g.relu(x)),
        ("sigmoid", |g, x| g.sigmoid(x)),
        ("tanh", |g, x| g.tanh(x)),
        ("abs", |g, x| g.abs(x)),
        ("affine", |g, x| g.affine(x, -2.5, 0.3)),
        ("clamp", |g, x| g.clamp(x, -0.5, 0.5)),
    ];
    for (name, op) in ops {
        let r = check_inputs(std::slice::from_ref(&x), FD_H, |g, v| {
            let y = op(g, v[0]);
            probe(g, y, 20)
        })
        .unwrap();
        assert!(r.max_rel_err() < FD_TOL, "{name}: {:?}", r.entries);
    }
    assert_fd(&[pos], |g, v| {
        let y = g.sqrt(v[0]);
        probe(g, y, 21)
    });
    assert_fd(&[inner], |g, v| {
        let y = g.acos(v[0]);
        probe(g, y, 22)
    });
}

#[test]
fn softmax_uniform_and_stable() {
    let mut g = Graph::new();
    let x = g.constant_from(&[3], vec![0.0; 3]).unwrap();
    let s = g.softmax(x, 0).unwrap();
    assert!(g.value(s).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    let big = g.constant_from(&[2], vec![1000.0, 1000.0]).unwrap();
    let s = g.softmax(big, 0).unwrap();
    assert_eq!(g.value(s), &[0.5, 0.5]);
}

/// exp/sum evaluated with compensated (Neumaier) summation on shifted inputs.
fn softmax_oracle(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in &e {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    let total = sum + comp;
    e.iter().map(|v| v / total).collect()
}

#[test]
fn softmax_matches_direct_formula_and_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[4]);
    let mut g = Graph::new();
    let xv = g.constant(&x);
    let s = g.softmax(xv, 0).unwrap();
    for (a, b) in g.value(s).iter().zip(softmax_oracle(x.values())) {
        assert!((a - b).abs() < 1e-12);
    }
    let m = rand_tensor(&mut rng, &[3, 5, 2]);
    for axis in 0..3 {
        let mut g = Graph::new();
        let mv = g.constant(&m);
        let shifted = g.affine(mv, 1.0, 7.25);
        let a = g.softmax(mv, axis).unwrap();
        let b = g.softmax(shifted, axis).unwrap();
        for (p, q) in g.value(a).iter().zip(g.value(b)) {
            assert!((p - q).abs() < 1e-12);
        }
        let sums = g.sum_axis(a, axis, false).unwrap();
        assert!(g.value(sums).iter().all(|v| (v - 1.0).abs() < 1e-12));
        let r = check_inputs(std::slice::from_ref(&m), FD_H, |g, v| {
            let y = g.softmax(v[0], axis)?;
            probe(g, y, 30 + axis as u64)
        })
        .unwrap();
        assert!(r.max_rel_err() < FD_TOL, "axis {axis}: {:?}", r.entries);
    }
}

#[test]
fn concat_layout_identity_and_gradient_routing() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, &[2, 3]);
    let b = rand_tensor(&mut rng, &[2, 5]);
    let mut g = Graph::new();
    let (av, bv) = (
        g.leaf(&a.clone().with_grad()),
        g.leaf(&b.clone().with_grad()),
    );
    let c = g.concat_last_axis(&[av, bv]).unwrap();
    assert_eq!(g.shape(c), &[2, 8]);
    assert_eq!(&g.value(c)[0..3], &a.values()[0..3]);
    assert_eq!(&g.value(c)[8..11], &a.values()[3..6]);
    let single = g.concat_last_axis(&[av]).unwrap();
    assert_eq!(g.value(single), a.values());
    let l = g.sum(c);
    let grads = g.backward(l).unwrap();
    assert!(grads
        .get(av)
        .unwrap()
        .iter()
        .chain(grads.get(bv).unwrap())
        .all(|&v| v == 1.0));
    assert_fd(&[a, b], |g, v| {
        let c = g.concat_last_axis(&[v[0], v[1]])?;
        Ok(g.sum(c))
    });
    let mut g = Graph::new();
    let x = g.constant(&Tensor::zeros(&[2, 3]));
    let y = g.constant(&Tensor::zeros(&[3, 3]));
    assert!(matches!(
        g.concat_last_axis(&[x, y]),
        Err(AutodiffError::Dimension { .. })
    ));
}

#[test]
fn structural_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&mut rng, &[2, 3, 4]);
    assert_fd(std::slice::from_ref(&x), |g, v| {
        let y = g.permute(v[0], &[2, 0, 1])?;
        probe(g, y, 40)
    });
    assert_fd(std::slice::from_ref(&x), |g, v| {
        let y = g.reshape(v[0], &[6, 4])?;
        let y = g.gather_rows(y, &[5, 0, 0, 3])?;
        probe(g, y, 41)
    });
    assert_fd(std::slice::from_ref(&x), |g, v| {
        let y = g.slice_last_axis(v[0], 1, 2)?;
        probe(g, y, 42)
    });
    for axis in 0..3 {
        assert_fd(std::slice::from_ref(&x), |g, v| {
            let y = g.sum_axis(v[0], axis, axis == 1)?;
            probe(g, y, 43)
        });
    }
    assert_fd(std::slice::from_ref(&x), |g, v| Ok(g.mean(v[0])));
    let a = rand_tensor(&mut rng, &[4, 3]);
    let b = rand_tensor(&mut rng, &[4, 3]);
    assert_fd(&[a, b], |g, v| {
        let y = g.cross(v[0], v[1])?;
        probe(g, y, 44)
    });
}

#[test]
fn permute_moves_elements() {
    let mut g = Graph::new();
    let x = g
        .constant_from(&[2, 3], (0..6).map(f64::from).collect())
        .unwrap();
    let t = g.permute(x, &[1, 0]).unwrap();
    assert_eq!(g.shape(t), &[3, 2]);
    assert_eq!(g.value(t), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
}

#[test]
fn matmul_and_bmm_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4, 2]);
    assert_fd(&[a, b], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        probe(g, y, 50)
    });
    let a = rand_tensor(&mut rng, &[2, 3, 4]);
    let b = rand_tensor(&mut rng, &[2, 4, 5]);
    assert_fd(&[a, b], |g, v| {
        let y = g.bmm(v[0], v[1])?;
        probe(g, y, 51)
    });
}

#[test]
fn linear_layer_identity_zero_input_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_tensor(&mut rng, &[2, 2, 3]);
    let mut g = Graph::new();
    let xv = g.constant(&x);
    let eye = g
        .constant_from(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.])
        .unwrap();
    let zb = g.constant(&Tensor::zeros(&[3]));
    let y = linear(&mut g, xv, eye, zb).unwrap();
    assert_eq!(g.value(y), x.values());
    assert_eq!(g.shape(y), &[2, 2, 3]);

    let w = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4]);
    let zero = g.constant(&Tensor::zeros(&[5, 3]));
    let (wv, bv) = (g.constant(&w), g.constant(&b));
    let y = linear(&mut g, zero, wv, bv).unwrap();
    for r in 0..5 {
        assert_eq!(&g.value(y)[r * 4..r * 4 + 4], b.values());
    }
    assert_fd(&[x, w, b], |g, v| {
        let y = linear(g, v[0], v[1], v[2])?;
        let y = g.tanh(y);
        probe(g, y, 60)
    });
    let mut g = Graph::new();
    let xv = g.constant(&Tensor::zeros(&[2, 5]));
    let wv = g.constant(&Tensor::zeros(&[4, 3]));
    let bv = g.constant(&Tensor::zeros(&[3]));
    assert!(linear(&mut g, xv, wv, bv).is_err());
}

#[test]
fn dropout_modes_and_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, &[100]);
    let mut g = Graph::new();
    let xv = g.constant(&x);
    let eval = dropout(&mut g, xv, 0.2, false, 1).unwrap();
    assert_eq!(g.value(eval), x.values());
    for training in [true, false] {
        let y = dropout(&mut g, xv, 0.0, training, 1).unwrap();
        assert_eq!(g.value(y), x.values());
    }
    assert!(matches!(
        dropout(&mut g, xv, 1.0, true, 1),
        Err(AutodiffError::Config(_))
    ));
    assert!(matches!(
        dropout(&mut g, xv, -0.1, true, 1),
        Err(AutodiffError::Config(_))
    ));

    // binomial oracle: survivors ~ Bin(n, 0.8)
    let n = 100_000usize;
    let mask = dropout_mask(n, 0.2, 42).unwrap();
    let kept = mask.iter().filter(|&&m| m != 0.0).count() as f64;
    let sd = (n as f64 * 0.8 * 0.2).sqrt();
    assert!((kept - 0.8 * n as f64).abs() < 3.0 * sd, "kept {kept}");
    assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-15));
    assert_eq!(mask, dropout_mask(n, 0.2, 42).unwrap());
}

#[test]
fn backward_on_simple_functionals() {
    let x = Tensor::new(&[4], vec![1.0, -2.0, 0.5, 3.0])
        .unwrap()
        .with_grad();
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let s = g.sum(xv);
    let gr = g.backward(s).unwrap();
    assert_eq!(gr.get(xv).unwrap(), &[1.0; 4]);
    let sq = g.mul(xv, xv).unwrap();
    let l = g.sum(sq);
    let gr = g.backward(l).unwrap();
    let want: Vec<f64> = x.values().iter().map(|v| 2.0 * v).collect();
    assert_eq!(gr.get(xv).unwrap(), want.as_slice());
    assert!(matches!(g.backward(sq), Err(AutodiffError::Contract(_))));
}

#[test]
fn fan_out_accumulates_both_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = rand_tensor(&mut rng, &[3, 3]);
    assert_fd(&[x], |g, v| {
        let a = g.tanh(v[0]);
        let b = g.matmul(v[0], v[0])?;
        let c = g.add(a, b)?;
        let d = g.mul(c, v[0])?;
        probe(g, d, 70)
    });
}

#[test]
fn composite_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let w1 = store.register("w1", rand_tensor(&mut rng, &[4, 6]));
    let b1 = store.register("b1", rand_tensor(&mut rng, &[6]));
    let w2 = store.register("w2", rand_tensor(&mut rng, &[6, 2]));
    let b2 = store.register("b2", rand_tensor(&mut rng, &[2]));
    let x = rand_tensor(&mut rng, &[5, 4]);
    let target = rand_tensor(&mut rng, &[5, 2]);
    let build = |g: &mut Graph, s: &ParamStore| -> Result<Var, AutodiffError> {
        let xv = g.constant(&x);
        let t = g.constant(&target);
        let (a, b, c, d) = (
            g.param(s, w1),
            g.param(s, b1),
            g.param(s, w2),
            g.param(s, b2),
        );
        let h = linear(g, xv, a, b)?;
        let h = g.sigmoid(h);
        let y = linear(g, h, c, d)?;
        let diff = g.sub(y, t)?;
        let sq = g.mul(diff, diff)?;
        Ok(g.mean(sq))
    };
    let ids: Vec<_> = store.ids().collect();
    let report = gradcheck::check_params(&store, &ids, 1e-5, None, build).unwrap();
    assert!(report.max_rel_err() < 1e-4, "{:?}", report.entries);
}

#[test]
fn identical_inputs_give_bitwise_identical_gradients() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = rand_tensor(&mut rng, &[6, 5]).with_grad();
        let mut g = Graph::new();
        let xv = g.leaf(&x);
        let y = g.softmax(xv, 1).unwrap();
        let y = dropout(&mut g, y, 0.2, true, 99).unwrap();
        let l = probe(&mut g, y, 80).unwrap();
        let gr = g.backward(l).unwrap();
        (g.value(l).to_vec(), gr.get(xv).unwrap().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(
        a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(
        a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn frozen_params_receive_no_gradient() {
    let mut store = ParamStore::new();
    let w = store.register("w", Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    store.get_mut(w).set_requires_grad(false);
    let mut g = Graph::new();
    let wv = g.param(&store, w);
    let l = g.sum(wv);
    let gr = g.backward(l).unwrap();
    gr.accumulate_into(&mut store);
    assert!(store.get(w).grad().is_none());
}

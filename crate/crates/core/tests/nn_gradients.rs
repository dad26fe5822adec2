use gme_core::nn::gradcheck::check_gradients;
use gme_core::nn::{gru_gate, GruParams, Init, LstmParams, ParamStore, Tape, Tensor, LEAKY_SLOPE};
use gme_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn assert_close(report: &gme_core::nn::gradcheck::GradReport) {
    for p in &report.params {
        assert!(
            p.relative_error < TOL,
            "{}: relative error {} (max diff {})",
            p.name,
            p.relative_error,
            p.max_abs_diff
        );
    }
}

#[test]
fn linear_layer_gradients() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let w = store.add("w", 3, 5, Init::UniformFanIn, &mut r).unwrap();
    let b = store.add("b", 1, 3, Init::UniformFanIn, &mut r).unwrap();
    let x = random(4, 5, &mut r);
    let report = check_gradients(&mut store, 1e-5, |tape, s| {
        let xv = tape.constant(x.clone());
        let (wv, bv) = (tape.param(s, w), tape.param(s, b));
        let y = tape.linear(xv, wv, bv)?;
        let y = tape.tanh(y);
        Ok(tape.sum(y))
    })
    .unwrap();
    assert_close(&report);
}

#[test]
fn linear_matches_hand_computed_affine_map() {
    let mut store = ParamStore::new();
    let w = store
        .insert(
            "w",
            Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]], 2).unwrap(),
            Init::Zeros,
        )
        .unwrap();
    let b = store
        .insert("b", Tensor::row(vec![0.25, -3.0]), Init::Zeros)
        .unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::row(vec![3.0, 4.0]));
    let (wv, bv) = (tape.param(&store, w), tape.param(&store, b));
    let y = tape.linear(x, wv, bv).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0 + 8.0 + 0.25, -3.0 + 2.0 - 3.0]);
}

#[test]
fn lstm_over_24_steps_gradients() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let lstm = LstmParams::new(&mut store, "lstm", 1, 4, &mut r).unwrap();
    let head = store.add("head", 1, 4, Init::UniformFanIn, &mut r).unwrap();
    let steps: Vec<Tensor> = (0..24).map(|_| random(3, 1, &mut r)).collect();
    let report = check_gradients(&mut store, 1e-5, |tape, s| {
        let xs: Vec<_> = steps.iter().map(|t| tape.constant(t.clone())).collect();
        let h = lstm.run(tape, s, &xs)?;
        let hw = tape.param(s, head);
        let y = tape.matmul_t(h, hw)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    assert_close(&report);
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn lstm_forward_matches_scalar_reference() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let lstm = LstmParams::new(&mut store, "lstm", 2, 3, &mut r).unwrap();
    let xs: Vec<Vec<f64>> = (0..5)
        .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();

    let w_ih = store.value(lstm.w_ih).clone();
    let w_hh = store.value(lstm.w_hh).clone();
    let bias = store.value(lstm.bias).clone();
    let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
    for x in &xs {
        let pre: Vec<f64> = (0..12)
            .map(|g| {
                bias.get(0, g)
                    + (0..2).map(|k| w_ih.get(g, k) * x[k]).sum::<f64>()
                    + (0..3).map(|k| w_hh.get(g, k) * h[k]).sum::<f64>()
            })
            .collect();
        for j in 0..3 {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[3 + j]);
            let g = pre[6 + j].tanh();
            let o = sigmoid(pre[9 + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
    }

    let mut tape = Tape::new();
    let steps: Vec<_> = xs
        .iter()
        .map(|x| tape.constant(Tensor::row(x.clone())))
        .collect();
    let out = lstm.run(&mut tape, &store, &steps).unwrap();
    for (a, b) in tape.value(out).data().iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
    // forget-gate bias starts at one
    assert_eq!(&bias.data()[3..6], &[1.0, 1.0, 1.0]);
    assert!(bias.data()[..3]
        .iter()
        .chain(&bias.data()[6..])
        .all(|&v| v == 0.0));
}

#[test]
fn gru_gate_gradients() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let gru = GruParams::new(&mut store, "gru", 4, &mut r).unwrap();
    let a = random(3, 4, &mut r);
    let h = random(3, 4, &mut r);
    let report = check_gradients(&mut store, 1e-5, |tape, s| {
        let (av, hv) = (tape.constant(a.clone()), tape.constant(h.clone()));
        let mut out = gru_gate(tape, s, &gru, av, hv)?;
        out = gru_gate(tape, s, &gru, av, out)?;
        let sq = tape.mul(out, out)?;
        Ok(tape.sum(sq))
    })
    .unwrap();
    assert_close(&report);
}

#[test]
fn gru_with_zero_weights_halves_toward_zero() {
    // All-zero matrices give z = r = 1/2 and a zero candidate, so the update
    // is exactly h / 2.
    let mut r = rng();
    let mut store = ParamStore::new();
    let gru = GruParams::new(&mut store, "gru", 3, &mut r).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let h0 = random(2, 3, &mut r);
    let mut tape = Tape::new();
    let a = tape.constant(random(2, 3, &mut r));
    let h = tape.constant(h0.clone());
    let out = gru_gate(&mut tape, &store, &gru, a, h).unwrap();
    for (o, x) in tape.value(out).data().iter().zip(h0.data()) {
        assert!((o - x / 2.0).abs() < 1e-15);
    }
}

#[test]
fn attention_softmax_gradients_and_normalization() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let logits = store
        .add("logits", 1, 6, Init::UniformFanIn, &mut r)
        .unwrap();
    let weights = random(1, 6, &mut r);
    let report = check_gradients(&mut store, 1e-5, |tape, s| {
        let l = tape.param(s, logits);
        let l = tape.scale(l, 3.0);
        let a = tape.attention_softmax(l)?;
        let w = tape.constant(weights.clone());
        let y = tape.mul(a, w)?;
        Ok(tape.sum(y))
    })
    .unwrap();
    assert_close(&report);

    let mut tape = Tape::new();
    let l = tape.constant(random(1, 9, &mut r));
    let a = tape.attention_softmax(l).unwrap();
    let total: f64 = tape.value(a).data().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(tape.value(a).data().iter().all(|&v| v > 0.0));

    let l = tape.constant(Tensor::zeros(1, 0));
    assert!(matches!(tape.attention_softmax(l), Err(Error::Empty(_))));
}

#[test]
fn attention_applies_leaky_rectifier_before_softmax() {
    let mut tape = Tape::new();
    let l = tape.constant(Tensor::row(vec![1.0, -2.0]));
    let a = tape.attention_softmax(l).unwrap();
    let e = [1.0f64.exp(), (-2.0 * LEAKY_SLOPE).exp()];
    let expected = e[0] / (e[0] + e[1]);
    assert!((tape.value(a).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn masked_softmax_ignores_masked_entries() {
    let mut tape = Tape::new();
    let x =
        tape.constant(Tensor::from_rows(&[vec![1.0, 50.0, 2.0], vec![0.0, 0.0, 0.0]], 3).unwrap());
    let y = tape
        .masked_softmax(x, vec![true, false, true, false, false, false])
        .unwrap();
    let v = tape.value(y);
    assert_eq!(v.get(0, 1), 0.0);
    assert!((v.get(0, 0) + v.get(0, 2) - 1.0).abs() < 1e-12);
    assert_eq!(v.row_slice(1), &[0.0, 0.0, 0.0]);
}

#[test]
fn mae_and_structural_op_gradients() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let p = store.add("p", 5, 3, Init::UniformFanIn, &mut r).unwrap();
    let q = store.add("q", 1, 3, Init::UniformFanIn, &mut r).unwrap();
    let c = store.add("c", 5, 1, Init::UniformFanIn, &mut r).unwrap();
    let target = Tensor::filled(4, 1, 3.0);
    let report = check_gradients(&mut store, 1e-6, |tape, s| {
        let (pv, qv, cv) = (tape.param(s, p), tape.param(s, q), tape.param(s, c));
        let pq = tape.add_row(pv, qv)?;
        let scaled = tape.mul_col(pq, cv)?;
        let gathered = tape.gather_rows(scaled, vec![4, 0, 0, 2])?;
        let seg = tape.segment_sum(gathered, vec![vec![0, 1], vec![], vec![2, 3], vec![1]])?;
        let cat = tape.concat_cols(&[seg, gathered])?;
        let sl = tape.slice_cols(cat, 1, 4)?;
        let t = tape.transpose(sl);
        let m = tape.mean_rows(t);
        let oa = tape.outer_add(cv, m)?;
        let act = tape.leaky_relu(oa, 0.2);
        let act = tape.relu(act);
        let s2 = tape.sigmoid(act);
        let w = tape.matmul_ex(s2, true, s2, false)?;
        let w = tape.slice_cols(w, 0, 1)?;
        let red = tape.sub(w, w)?;
        let red = tape.add(red, w)?;
        let col = tape.slice_cols(red, 0, 1)?;
        let col = tape.gather_rows(col, vec![0, 1, 2, 3])?;
        let tv = tape.constant(target.clone());
        tape.mae(col, tv)
    })
    .unwrap();
    assert_close(&report);
}

#[test]
fn matmul_transpose_variants_gradients() {
    let mut r = rng();
    let mut store = ParamStore::new();
    let a = store.add("a", 3, 4, Init::UniformFanIn, &mut r).unwrap();
    let b = store.add("b", 4, 3, Init::UniformFanIn, &mut r).unwrap();
    for (ta, tb) in [(false, false), (true, true), (false, true), (true, false)] {
        let report = check_gradients(&mut store, 1e-5, |tape, s| {
            let (av, bv) = (tape.param(s, a), tape.param(s, b));
            // choose a compatible pairing for every flag combination
            let y = match (ta, tb) {
                (false, false) | (true, true) => tape.matmul_ex(av, ta, bv, tb)?,
                (false, true) => {
                    let bt = tape.transpose(bv);
                    tape.matmul_ex(av, false, bt, true)?
                }
                (true, false) => {
                    let at = tape.transpose(av);
                    tape.matmul_ex(at, true, bv, false)?
                }
            };
            let y = tape.tanh(y);
            Ok(tape.sum(y))
        })
        .unwrap();
        assert_close(&report);
    }
}

#[test]
fn backward_twice_is_an_error() {
    let mut store = ParamStore::new();
    let w = store.insert("w", Tensor::scalar(2.0), Init::Zeros).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let y = tape.mul(wv, wv).unwrap();
    tape.backward(y, &mut store).unwrap();
    assert_eq!(store.grad(w).unwrap().item(), 4.0);
    assert!(matches!(
        tape.backward(y, &mut store),
        Err(Error::TapeConsumed)
    ));
}

#[test]
fn backward_requires_scalar_and_zero_fills_unused_params() {
    let mut store = ParamStore::new();
    let w = store
        .insert("w", Tensor::row(vec![1.0, 2.0]), Init::Zeros)
        .unwrap();
    let unused = store
        .insert("u", Tensor::row(vec![5.0]), Init::Zeros)
        .unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    assert!(matches!(
        tape.backward(wv, &mut store),
        Err(Error::Shape(_))
    ));
    let s = tape.sum(wv);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(unused).unwrap().data(), &[0.0]);
    assert_eq!(store.grad(w).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn dropout_is_identity_outside_training() {
    let mut r = rng();
    let mut tape = Tape::new();
    let x = tape.constant(random(4, 6, &mut r));
    assert_eq!(tape.dropout(x, 0.9, false, &mut r).unwrap(), x);
    assert_eq!(tape.dropout(x, 1.0, true, &mut r).unwrap(), x);
    assert!(tape.dropout(x, 0.0, true, &mut r).is_err());

    let ones = tape.constant(Tensor::filled(200, 50, 1.0));
    let d = tape.dropout(ones, 0.9, true, &mut r).unwrap();
    let v = tape.value(d);
    let kept = v.data().iter().filter(|&&x| x != 0.0).count() as f64 / v.len() as f64;
    assert!((kept - 0.9).abs() < 0.02, "kept fraction {kept}");
    assert!(v
        .data()
        .iter()
        .all(|&x| x == 0.0 || (x - 1.0 / 0.9).abs() < 1e-12));
}

#[test]
fn shape_errors_are_reported() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let b = tape.constant(Tensor::zeros(3, 2));
    assert!(matches!(tape.add(a, b), Err(Error::Shape(_))));
    assert!(matches!(tape.matmul(a, a), Err(Error::Shape(_))));
    assert!(tape.matmul(a, b).is_ok());
    assert!(matches!(tape.slice_cols(a, 2, 2), Err(Error::Shape(_))));
}

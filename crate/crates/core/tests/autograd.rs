mod common;

use xpatch::autograd::Tape;

#[test]
fn repeated_backward_after_reset_is_bitwise_identical() {
    let mut r = common::rng(4);
    let (x, w, b) = (
        common::rand_tensor(&mut r, &[5, 6]),
        common::rand_tensor(&mut r, &[6, 3]),
        common::rand_tensor(&mut r, &[3]),
    );
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(&x), tape.leaf(&w), tape.leaf(&b));
    let h = tape.linear(xv, wv, Some(bv)).unwrap();
    let h = tape.gelu(h);
    let loss = common::readout(&mut tape, h, 4).unwrap();

    tape.backward(loss).unwrap();
    let first: Vec<Vec<f64>> = [xv, wv, bv].iter().map(|v| tape.grad(*v).unwrap().to_vec()).collect();
    tape.backward(loss).unwrap();
    let doubled = tape.grad(wv).unwrap().to_vec();
    for (d, f) in doubled.iter().zip(&first[1]) {
        assert_eq!(*d, 2.0 * f);
    }
    tape.zero_grads();
    tape.backward(loss).unwrap();
    for (v, f) in [xv, wv, bv].iter().zip(&first) {
        let again: Vec<u64> = tape.grad(*v).unwrap().iter().map(|g| g.to_bits()).collect();
        let first: Vec<u64> = f.iter().map(|g| g.to_bits()).collect();
        assert_eq!(again, first);
    }
}

#[test]
fn pooling_is_a_projection_under_repeat_upsampling() {
    let mut r = common::rng(8);
    for len in [4, 8, 9, 32] {
        let x = common::rand_tensor(&mut r, &[3, len]);
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let pooled = tape.avg_pool1d(xv, 2, 2).unwrap();
        let half = len / 2;
        let index = (0..3 * 2 * half).map(|i| (i / (2 * half)) * half + (i % (2 * half)) / 2).collect();
        let up = tape.gather(pooled, index, vec![3, 2 * half]).unwrap();
        let again = tape.avg_pool1d(up, 2, 2).unwrap();
        assert_eq!(tape.value(again), tape.value(pooled), "len {len}");
    }
}

#[test]
fn forward_is_deterministic() {
    let mut r = common::rng(1);
    let x = common::rand_tensor(&mut r, &[4, 16]);
    let model = xpatch::model::XPatch::new(common::tiny_config(), 2).unwrap();
    let a = model.predict(&x).unwrap();
    let b = model.predict(&x).unwrap();
    assert_eq!(a, b);
}

use std::rc::Rc;

use super::{Shape, Tape, Tensor};
use crate::error::Error;

fn t64(dims: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(dims, data.to_vec()).unwrap()
}

fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
        assert!(
            (a - e).abs() <= tol,
            "index {i}: {a} vs {e} (tol {tol})"
        );
    }
}

/// Central finite differences of `f` w.r.t. the leaf values `x`, compared
/// against the analytic gradient produced by `backward`. Inputs must keep the
/// composite differentiable near `x`.
fn check_grad(x_dims: &[usize], x_vals: &[f64], f: impl Fn(&Tensor<f64>) -> Tensor<f64>) {
    let tape = Tape::new();
    let leaf = tape.leaf(&t64(x_dims, x_vals));
    let loss = f(&leaf);
    assert_eq!(loss.numel(), 1, "test loss must be scalar");
    let grads = loss.backward().unwrap();
    let analytic = grads.get(&leaf).expect("leaf gradient").data().to_vec();

    let h = 1e-5;
    for i in 0..x_vals.len() {
        let mut plus = x_vals.to_vec();
        plus[i] += h;
        let mut minus = x_vals.to_vec();
        minus[i] -= h;
        let fp = f(&t64(x_dims, &plus)).item().unwrap();
        let fm = f(&t64(x_dims, &minus)).item().unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        let rel = (analytic[i] - fd).abs() / denom;
        assert!(
            rel < 1e-6,
            "coordinate {i}: analytic {} vs fd {fd}, rel {rel}",
            analytic[i]
        );
    }
}

#[test]
fn shape_rejects_zero_or_empty() {
    assert!(Shape::new(&[]).is_err());
    assert!(Shape::new(&[3, 0]).is_err());
    assert_eq!(Shape::new(&[2, 3]).unwrap().numel(), 6);
}

#[test]
fn matmul_identity_passthrough() {
    let eye = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let b = t64(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
    let out = eye.matmul(&b).unwrap();
    assert_eq!(out.data(), b.data());
}

#[test]
fn matmul_hand_arithmetic() {
    let a = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let b = t64(&[2, 1], &[1.0, 1.0]);
    let out = a.matmul(&b).unwrap();
    assert_eq!(out.dims(), &[2, 1]);
    assert_eq!(out.data(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let a = t64(&[2, 3], &[0.0; 6]);
    let b = t64(&[2, 2], &[0.0; 4]);
    let err = a.matmul(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let b_vals = [0.3, -1.2, 0.7, 2.1, -0.4, 0.9];
    for seed in 0..3u64 {
        let a_vals: Vec<f64> = (0..6)
            .map(|i| ((seed * 31 + i) as f64 * 0.37).sin())
            .collect();
        check_grad(&[2, 3], &a_vals, |a| {
            let b = t64(&[3, 2], &b_vals);
            a.matmul(&b).unwrap().sum_all().unwrap()
        });
    }
}

#[test]
fn softmax_symmetry_and_closed_form() {
    let out = t64(&[2], &[0.0, 0.0]).softmax(0).unwrap();
    assert_eq!(out.data(), &[0.5, 0.5]);

    let out = t64(&[2], &[0.0, 3.0f64.ln()]).softmax(0).unwrap();
    assert_close(out.data(), &[0.25, 0.75], 1e-12);
}

#[test]
fn softmax_shift_invariance_and_row_sums() {
    let x = t64(&[2, 3], &[0.1, -2.0, 1.4, 3.0, 0.0, -0.7]);
    let shifted = x.add_scalar(17.5).unwrap();
    let a = x.softmax(1).unwrap();
    let b = shifted.softmax(1).unwrap();
    assert_close(a.data(), b.data(), 1e-12);
    for row in 0..2 {
        let sum: f64 = a.data()[row * 3..(row + 1) * 3].iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}

#[test]
fn softmax_rejects_non_finite() {
    let x = t64(&[2], &[f64::NAN, 0.0]);
    assert!(matches!(x.softmax(0), Err(Error::Numeric(_))));
}

#[test]
fn elementwise_basics() {
    let x = t64(&[3], &[-1.0, 0.0, 2.0]);
    assert_eq!(x.relu().unwrap().data(), &[0.0, 0.0, 2.0]);
    assert_eq!(Tensor::scalar(0.0f64).sigmoid().unwrap().data(), &[0.5]);
    let y = x.add(&Tensor::zeros(&[3]).unwrap()).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn broadcast_add_and_incompatible_shapes() {
    let a = t64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let row = t64(&[3], &[10.0, 20.0, 30.0]);
    let out = a.add(&row).unwrap();
    assert_eq!(out.data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);

    let bad = t64(&[2], &[0.0, 0.0]);
    assert!(matches!(a.add(&bad), Err(Error::Dimension { .. })));
}

#[test]
fn reshape_preserves_row_major_order() {
    let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
    let x = t64(&[2, 6], &vals);
    let y = x.reshape(&[3, 4]).unwrap();
    assert_eq!(y.data(), &vals[..]);
    assert!(x.reshape(&[5, 2]).is_err());
}

#[test]
fn transpose_involution() {
    let x = t64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let y = x.transpose().unwrap().transpose().unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn concat_extent_arithmetic() {
    let a = t64(&[2, 3], &[1.0; 6]);
    let b = t64(&[1, 3], &[2.0; 3]);
    let out = Tensor::concat(&[&a, &b], 0).unwrap();
    assert_eq!(out.dims(), &[3, 3]);
    assert_eq!(&out.data()[6..], &[2.0; 3]);

    let bad = t64(&[1, 2], &[0.0; 2]);
    assert!(Tensor::concat(&[&a, &bad], 0).is_err());
}

#[test]
fn slice_and_gather_roundtrip() {
    let vals: Vec<f64> = (0..24).map(|v| v as f64).collect();
    let x = t64(&[2, 3, 4], &vals);
    let s = x.slice(1, 1, 2).unwrap();
    assert_eq!(s.dims(), &[2, 2, 4]);
    assert_eq!(&s.data()[..4], &[4.0, 5.0, 6.0, 7.0]);

    let map: Vec<usize> = (0..24).rev().collect();
    let g = x.gather(Rc::new(map), &[24]).unwrap();
    assert_eq!(g.data()[0], 23.0);
}

#[test]
fn backward_of_sum_is_ones() {
    let tape = Tape::new();
    let x = tape.leaf(&t64(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
    let loss = x.sum_all().unwrap();
    let grads = loss.backward().unwrap();
    assert_eq!(grads.get(&x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn backward_of_quadratic_is_two_x() {
    let tape = Tape::new();
    let vals = [1.0, -2.0, 3.0, 0.5];
    let x = tape.leaf(&t64(&[4], &vals));
    let loss = x.mul(&x).unwrap().sum_all().unwrap();
    let grads = loss.backward().unwrap();
    let expected: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
    assert_close(grads.get(&x).unwrap().data(), &expected, 1e-12);
}

#[test]
fn backward_requires_scalar_taped_loss() {
    let tape = Tape::new();
    let x = tape.leaf(&t64(&[2], &[1.0, 2.0]));
    assert!(matches!(x.backward(), Err(Error::Contract(_))));
    let untaped = t64(&[1], &[3.0]);
    assert!(matches!(untaped.backward(), Err(Error::Contract(_))));
}

#[test]
fn second_backward_on_same_tape_is_rejected() {
    let tape = Tape::new();
    let x = tape.leaf(&t64(&[2], &[1.0, 2.0]));
    let loss = x.sum_all().unwrap();
    loss.backward().unwrap();
    assert!(matches!(loss.backward(), Err(Error::Contract(_))));
}

#[test]
fn mixing_two_tapes_is_rejected() {
    let t1 = Tape::new();
    let t2 = Tape::new();
    let a = t1.leaf(&t64(&[2], &[1.0, 2.0]));
    let b = t2.leaf(&t64(&[2], &[3.0, 4.0]));
    assert!(matches!(a.add(&b), Err(Error::Contract(_))));
}

#[test]
fn composite_gradient_matches_finite_differences() {
    // softmax -> mul -> mean over a 3-op composite, several seeds
    for seed in 0..10u64 {
        let vals: Vec<f64> = (0..6)
            .map(|i| ((seed * 131 + i * 17) as f64 * 0.193).sin() * 2.0)
            .collect();
        check_grad(&[2, 3], &vals, |x| {
            let s = x.softmax(1).unwrap();
            let y = s.mul(x).unwrap();
            y.mean_all().unwrap()
        });
    }
}

#[test]
fn gradient_checks_for_remaining_primitives() {
    let vals: Vec<f64> = (0..12)
        .map(|i| (i as f64 * 0.71).sin() * 1.5 + 0.1)
        .collect();

    check_grad(&[3, 4], &vals, |x| x.relu().unwrap().mul(x).unwrap().sum_all().unwrap());
    check_grad(&[3, 4], &vals, |x| x.sigmoid().unwrap().sum_all().unwrap());
    check_grad(&[3, 4], &vals, |x| x.gelu().unwrap().sum_all().unwrap());
    check_grad(&[3, 4], &vals, |x| x.abs().unwrap().mean_all().unwrap());
    check_grad(&[3, 4], &vals, |x| {
        x.mul(x).unwrap().add_scalar(0.3).unwrap().sqrt().unwrap().sum_all().unwrap()
    });
    check_grad(&[3, 4], &vals, |x| {
        let denom = x.mul(x).unwrap().add_scalar(1.0).unwrap();
        x.div(&denom).unwrap().sum_all().unwrap()
    });
    check_grad(&[3, 4], &vals, |x| {
        x.permute(&[1, 0]).unwrap().slice(0, 1, 2).unwrap().sum_all().unwrap()
    });
    let weights: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos() + 0.2).collect();
    check_grad(&[3, 4], &vals, |x| {
        let parts = [x.slice(0, 0, 1).unwrap(), x.slice(0, 1, 2).unwrap()];
        let w = t64(&[3, 4], &weights);
        Tensor::concat(&[&parts[1], &parts[0]], 0)
            .unwrap()
            .mul(&w)
            .unwrap()
            .sum_all()
            .unwrap()
    });
    check_grad(&[3, 4], &vals, |x| x.sum_axis(1).unwrap().mul(&x.sum_axis(1).unwrap()).unwrap().sum_all().unwrap());
    check_grad(&[3, 4], &vals, |x| {
        let map: Vec<usize> = (0..12).rev().collect();
        x.gather(Rc::new(map), &[12]).unwrap().mul(&x.reshape(&[12]).unwrap()).unwrap().mean_all().unwrap()
    });
}

#[test]
fn conv2d_gradient_and_contracts() {
    // identity via delta kernel
    let x_vals: Vec<f64> = (0..18).map(|v| v as f64 * 0.25 - 2.0).collect();
    let x = t64(&[2, 3, 3], &x_vals);
    let mut w = vec![0.0; 2 * 2 * 3 * 3];
    // center tap of each channel's own kernel
    w[0 * 2 * 9 + 0 * 9 + 4] = 1.0;
    w[1 * 2 * 9 + 1 * 9 + 4] = 1.0;
    let weight = t64(&[2, 2, 3, 3], &w);
    let bias = Tensor::zeros(&[2]).unwrap();
    let out = x.conv2d(&weight, &bias).unwrap();
    assert_eq!(out.data(), x.data());

    // all-ones 3x3 kernel on constant map: 9c interior
    let c = 0.5f64;
    let xc = Tensor::full(&[1, 5, 5], c).unwrap();
    let ones = Tensor::full(&[1, 1, 3, 3], 1.0).unwrap();
    let out = xc.conv2d(&ones, &Tensor::zeros(&[1]).unwrap()).unwrap();
    assert!((out.data()[12] - 9.0 * c).abs() < 1e-12); // center pixel
    assert!((out.data()[0] - 4.0 * c).abs() < 1e-12); // corner: 2x2 window

    // even kernel rejected
    let even = Tensor::zeros(&[1, 2, 2, 2]).unwrap();
    assert!(matches!(
        t64(&[2, 3, 3], &x_vals).conv2d(&even, &bias),
        Err(Error::Dimension { .. }) | Err(Error::Contract(_))
    ));

    // gradient wrt input, weight, and bias
    let w_vals: Vec<f64> = (0..18).map(|i| (i as f64 * 0.41).cos() * 0.5).collect();
    let pix_w: Vec<f64> = (0..9).map(|i| (i as f64 * 0.77).sin() + 0.4).collect();
    check_grad(&[2, 3, 3], &x_vals, |x| {
        let w = t64(&[1, 2, 3, 3], &w_vals);
        let b = t64(&[1], &[0.2]);
        let pw = t64(&[1, 3, 3], &pix_w);
        x.conv2d(&w, &b).unwrap().mul(&pw).unwrap().sum_all().unwrap()
    });
    check_grad(&[1, 2, 3, 3], &w_vals, |w| {
        let x = t64(&[2, 3, 3], &x_vals);
        x.conv2d(w, &t64(&[1], &[0.2])).unwrap().sum_all().unwrap()
    });
}

#[test]
fn bilinear_resize_gradient_and_constant_preservation() {
    let xc = Tensor::full(&[1, 3, 3], 2.5).unwrap();
    let out = xc.bilinear_resize(6, 6).unwrap();
    for &v in out.data() {
        assert!((v - 2.5f64).abs() < 1e-12);
    }

    let vals: Vec<f64> = (0..12).map(|i| (i as f64 * 0.9).sin()).collect();
    let pix_w: Vec<f64> = (0..48).map(|i| (i as f64 * 0.31).cos() + 0.1).collect();
    check_grad(&[1, 3, 4], &vals, |x| {
        let pw = t64(&[1, 6, 8], &pix_w);
        x.bilinear_resize(6, 8).unwrap().mul(&pw).unwrap().sum_all().unwrap()
    });
}

#[test]
fn masked_fill_axis_semantics_and_gradient() {
    let vals: Vec<f64> = (0..24).map(|v| v as f64).collect();
    let x = t64(&[2, 4, 3], &vals); // T=2, L=4, C=3
    let fill = t64(&[3], &[-1.0, -2.0, -3.0]);
    let mask = [true, false, false, true];
    let out = x.masked_fill_axis(1, &mask, &fill).unwrap();
    for t in 0..2 {
        for l in 0..4 {
            let base = (t * 4 + l) * 3;
            if mask[l] {
                assert_eq!(&out.data()[base..base + 3], fill.data());
            } else {
                assert_eq!(&out.data()[base..base + 3], &vals[base..base + 3]);
            }
        }
    }

    let slot_w: Vec<f64> = (0..24).map(|i| (i as f64 * 0.53).sin() + 0.3).collect();
    check_grad(&[3], &[-1.0, -2.0, -3.0], |fill| {
        let x = t64(&[2, 4, 3], &vals);
        let w = t64(&[2, 4, 3], &slot_w);
        let out = x.masked_fill_axis(1, &mask, fill).unwrap();
        out.mul(&w).unwrap().sum_all().unwrap()
    });
    check_grad(&[2, 4, 3], &vals, |x| {
        let fill = t64(&[3], &[-1.0, -2.0, -3.0]);
        let w = t64(&[2, 4, 3], &slot_w);
        let out = x.masked_fill_axis(0, &[false, true], &fill).unwrap();
        out.mul(&w).unwrap().sum_all().unwrap()
    });
}

#[test]
fn determinism_identical_inputs_identical_bits() {
    let vals: Vec<f64> = (0..64).map(|i| (i as f64 * 0.123).sin()).collect();
    let run = || {
        let x = t64(&[8, 8], &vals);
        let y = x.matmul(&x).unwrap().softmax(1).unwrap().gelu().unwrap();
        y.data().to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

use std::collections::BTreeMap;

use super::*;
use crate::loss::{finite_diff_check, FdOptions};
use crate::tensor::{Tape, Tensor};

fn t64(dims: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(dims, data.to_vec()).unwrap()
}

fn wave(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| ((seed * 37 + i as u64 * 13) as f64 * 0.217).sin())
        .collect()
}

/// Gradient-check a block composition: loss must be a pure function of the
/// bound parameters given the fixed input.
fn check_param_grads(
    store: &ParamStore<f64>,
    loss: impl Fn(&ParamStore<f64>, &Bound<f64>) -> Tensor<f64>,
    tol: f64,
) {
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let out = loss(store, &bound);
    let grads = out.backward().unwrap();
    let analytic: BTreeMap<String, Tensor<f64>> = bound.collect_grads(&grads);
    let opts = FdOptions {
        coords_per_tensor: 8,
        tol,
        // attention blocks have structurally-zero gradients (e.g. key biases)
        // where finite differences only produce noise
        denom_floor: 1e-4,
        ..FdOptions::default()
    };
    let report = finite_diff_check(
        store,
        &analytic,
        |p| {
            let frozen = p.bind_frozen();
            loss(p, &frozen).item()
        },
        &opts,
    )
    .unwrap();
    assert!(report.pass, "{}", report.format());
}

#[test]
fn linear_identity_and_hand_values() {
    let mut store: ParamStore<f64> = ParamStore::new(1);
    let lin = Linear::new(&mut store, "lin", 2, 2).unwrap();
    store
        .set("lin.w", t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]))
        .unwrap();
    let p = store.bind_frozen();
    let x = t64(&[3, 2], &[1.0, 2.0, -0.5, 0.25, 3.0, -3.0]);
    let out = lin.forward(&p, &x).unwrap();
    assert_eq!(out.data(), x.data());

    // x=[1,2], w=[[1,1],[1,-1]], b=0 -> [3,-1]
    store
        .set("lin.w", t64(&[2, 2], &[1.0, 1.0, 1.0, -1.0]))
        .unwrap();
    let p = store.bind_frozen();
    let out = lin.forward(&p, &t64(&[1, 2], &[1.0, 2.0])).unwrap();
    assert_eq!(out.data(), &[3.0, -1.0]);

    let err = lin.forward(&p, &t64(&[1, 3], &[0.0; 3])).unwrap_err();
    assert!(err.to_string().contains("expected 2"), "{err}");
}

#[test]
fn linear_weight_gradient() {
    let mut store: ParamStore<f64> = ParamStore::new(7);
    let lin = Linear::new(&mut store, "lin", 3, 2).unwrap();
    let x_vals = wave(6, 3);
    check_param_grads(
        &store,
        |_, p| {
            let x = t64(&[2, 3], &x_vals);
            let y = lin.forward(p, &x).unwrap();
            y.mul(&y).unwrap().mean_all().unwrap()
        },
        1e-6,
    );
}

#[test]
fn conv_layer_zero_weights_zero_output() {
    let mut store: ParamStore<f64> = ParamStore::new(2);
    let conv = Conv2dLayer::new(&mut store, "c", 2, 3, 3).unwrap();
    store.set("c.w", Tensor::zeros(&[3, 2, 3, 3]).unwrap()).unwrap();
    let p = store.bind_frozen();
    let x = t64(&[2, 4, 4], &wave(32, 5));
    let out = conv.forward(&p, &x).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));

    assert!(Conv2dLayer::new(&mut store, "even", 2, 3, 4).is_err());
}

#[test]
fn layer_norm_contracts_and_statistics() {
    let mut store: ParamStore<f64> = ParamStore::new(3);
    let ln = LayerNorm::new(&mut store, "ln", 4).unwrap();
    let p = store.bind_frozen();

    let constant = Tensor::full(&[4], 2.5).unwrap();
    let out = ln.forward(&p, &constant).unwrap();
    for &v in out.data() {
        assert!(v.abs() < 1e-6, "constant input should normalize to ~0, got {v}");
    }

    let two = LayerNorm::new(&mut store, "ln2", 2).unwrap();
    let out = two.forward(&p_with(&store), &t64(&[2], &[1.0, -1.0])).unwrap();
    assert!((out.data()[0] - 1.0).abs() < 1e-4);
    assert!((out.data()[1] + 1.0).abs() < 1e-4);

    let x = t64(&[5, 4], &wave(20, 11));
    let out = ln.forward(&p_with(&store), &x).unwrap();
    for row in 0..5 {
        let vals = &out.data()[row * 4..(row + 1) * 4];
        let mean: f64 = vals.iter().sum::<f64>() / 4.0;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    assert!(LayerNorm::new(&mut store, "ln1", 1).is_err());
}

fn p_with(store: &ParamStore<f64>) -> Bound<f64> {
    store.bind_frozen()
}

#[test]
fn mhsa_single_token_reduces_to_value_path() {
    let mut store: ParamStore<f64> = ParamStore::new(5);
    let attn = Mhsa::new(&mut store, "attn", 8, 2).unwrap();
    let p = store.bind_frozen();
    let x = t64(&[1, 8], &wave(8, 2));

    let out = attn.forward(&p, &x).unwrap();

    // With N=1 attention weight is 1: out = (x Wv + bv) Wo + bo
    let wv = p.get("attn.wv.w").unwrap();
    let bv = p.get("attn.wv.b").unwrap();
    let wo = p.get("attn.wo.w").unwrap();
    let bo = p.get("attn.wo.b").unwrap();
    let reference = x
        .matmul(wv)
        .unwrap()
        .add(bv)
        .unwrap()
        .matmul(wo)
        .unwrap()
        .add(bo)
        .unwrap();
    for (a, b) in out.data().iter().zip(reference.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn mhsa_identical_tokens_produce_identical_outputs() {
    let mut store: ParamStore<f64> = ParamStore::new(6);
    let attn = Mhsa::new(&mut store, "attn", 8, 4).unwrap();
    let p = store.bind_frozen();
    let row = wave(8, 9);
    let mut vals = Vec::new();
    for _ in 0..5 {
        vals.extend_from_slice(&row);
    }
    let out = attn.forward(&p, &t64(&[5, 8], &vals)).unwrap();
    let first = &out.data()[..8];
    for tok in 1..5 {
        assert_eq!(&out.data()[tok * 8..(tok + 1) * 8], first);
    }
}

#[test]
fn mhsa_matches_brute_force_oracle() {
    let mut store: ParamStore<f64> = ParamStore::new(8);
    let attn = Mhsa::new(&mut store, "attn", 4, 1).unwrap();
    let p = store.bind_frozen();
    let x_vals = wave(8, 21);
    let x = t64(&[2, 4], &x_vals);
    let out = attn.forward(&p, &x).unwrap();

    // brute force: q = xWq+bq, k, v; softmax(q k^T / sqrt(4)) v; out proj
    let get = |n: &str| p.get(n).unwrap().data().to_vec();
    let (wq, bq) = (get("attn.wq.w"), get("attn.wq.b"));
    let (wk, bk) = (get("attn.wk.w"), get("attn.wk.b"));
    let (wv, bv) = (get("attn.wv.w"), get("attn.wv.b"));
    let (wo, bo) = (get("attn.wo.w"), get("attn.wo.b"));
    let proj = |w: &[f64], b: &[f64]| {
        let mut out = vec![0.0; 8];
        for n in 0..2 {
            for j in 0..4 {
                let mut acc = b[j];
                for i in 0..4 {
                    acc += x_vals[n * 4 + i] * w[i * 4 + j];
                }
                out[n * 4 + j] = acc;
            }
        }
        out
    };
    let (q, k, v) = (proj(&wq, &bq), proj(&wk, &bk), proj(&wv, &bv));
    let mut ctx = vec![0.0; 8];
    for n in 0..2 {
        let mut scores = [0.0f64; 2];
        for m in 0..2 {
            let mut dot = 0.0;
            for d in 0..4 {
                dot += q[n * 4 + d] * k[m * 4 + d];
            }
            scores[m] = dot / 2.0; // sqrt(4)
        }
        let mx = scores[0].max(scores[1]);
        let e = [(scores[0] - mx).exp(), (scores[1] - mx).exp()];
        let z = e[0] + e[1];
        for d in 0..4 {
            ctx[n * 4 + d] = (e[0] * v[d] + e[1] * v[4 + d]) / z;
        }
    }
    let mut reference = vec![0.0; 8];
    for n in 0..2 {
        for j in 0..4 {
            let mut acc = bo[j];
            for i in 0..4 {
                acc += ctx[n * 4 + i] * wo[i * 4 + j];
            }
            reference[n * 4 + j] = acc;
        }
    }
    for (a, b) in out.data().iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn mhsa_is_permutation_equivariant() {
    let mut store: ParamStore<f64> = ParamStore::new(10);
    let attn = Mhsa::new(&mut store, "attn", 8, 2).unwrap();
    let p = store.bind_frozen();
    let vals = wave(32, 4);
    let x = t64(&[4, 8], &vals);
    let out = attn.forward(&p, &x).unwrap();

    let perm = [2usize, 0, 3, 1];
    let permuted_vals: Vec<f64> = perm
        .iter()
        .flat_map(|&i| vals[i * 8..(i + 1) * 8].to_vec())
        .collect();
    let out_perm = attn.forward(&p, &t64(&[4, 8], &permuted_vals)).unwrap();
    for (slot, &src) in perm.iter().enumerate() {
        let a = &out_perm.data()[slot * 8..(slot + 1) * 8];
        let b = &out.data()[src * 8..(src + 1) * 8];
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    assert!(Mhsa::new(&mut store, "bad", 6, 4).is_err());
}

#[test]
fn ffn_zero_params_and_shape() {
    let mut store: ParamStore<f64> = ParamStore::new(4);
    let ffn = Ffn::new(&mut store, "ffn", 4, 4).unwrap();
    for name in ["ffn.lin1.w", "ffn.lin2.w"] {
        let dims = store.get(name).unwrap().dims().to_vec();
        store.set(name, Tensor::zeros(&dims).unwrap()).unwrap();
    }
    let p = store.bind_frozen();
    let x = t64(&[7, 4], &wave(28, 1));
    let out = ffn.forward(&p, &x).unwrap();
    assert_eq!(out.dims(), &[7, 4]);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn transformer_block_gradient() {
    let mut store: ParamStore<f64> = ParamStore::new(12);
    let block = TransformerBlock::new(&mut store, "blk", 4, 2, 2).unwrap();
    let x_vals = wave(12, 6);
    check_param_grads(
        &store,
        |_, p| {
            let x = t64(&[3, 4], &x_vals);
            let y = block.forward(p, &x).unwrap();
            y.mul(&y).unwrap().mean_all().unwrap()
        },
        1e-6,
    );
}

#[test]
fn patch_embed_token_counts_and_zero_frame() {
    let mut store: ParamStore<f64> = ParamStore::new(13);
    let pe = PatchEmbed::new(&mut store, "pe", 8, 16).unwrap();
    let p = store.bind_frozen();

    let single = Tensor::zeros(&[3, 8, 8]).unwrap();
    assert_eq!(pe.forward(&p, &single).unwrap().dims(), &[1, 16]);

    let frame = Tensor::zeros(&[3, 64, 48]).unwrap();
    let tokens = pe.forward(&p, &frame).unwrap();
    assert_eq!(tokens.dims(), &[48, 16]);
    assert!(tokens.data().iter().all(|&v| v == 0.0));

    let odd = Tensor::zeros(&[3, 60, 48]).unwrap();
    assert!(pe.forward(&p, &odd).is_err());
}

#[test]
fn sincos_table_reference_values_and_injectivity() {
    let table: Tensor<f64> = sincos_spatial(8, 6, 64, SpatialPeMode::TwoD).unwrap();
    // grid position (0,0): all sin channels 0, cos channels 1
    let first = &table.data()[..64];
    for i in 0..32 {
        assert_eq!(first[2 * i], 0.0);
        assert_eq!(first[2 * i + 1], 1.0);
    }
    // row 1, col 0: first row-frequency channel holds sin(1)
    let row1 = &table.data()[6 * 64..6 * 64 + 64];
    assert!((row1[0] - 1.0f64.sin()).abs() < 1e-12);

    // all 48 grid positions distinct
    for a in 0..48 {
        for b in a + 1..48 {
            let ta = &table.data()[a * 64..(a + 1) * 64];
            let tb = &table.data()[b * 64..(b + 1) * 64];
            assert!(
                ta.iter().zip(tb).any(|(x, y)| (x - y).abs() > 1e-9),
                "positions {a} and {b} share an encoding"
            );
        }
    }

    assert!(sincos_spatial::<f64>(8, 6, 63, SpatialPeMode::OneD).is_err());
    assert!(sincos_spatial::<f64>(8, 6, 62, SpatialPeMode::TwoD).is_err());
}

#[test]
fn positional_encodings_toggles() {
    let mut store: ParamStore<f64> = ParamStore::new(20);
    let off = PositionalEncodings::new(
        &mut store,
        "pe_off",
        2,
        2,
        8,
        4,
        SpatialPeMode::TwoD,
        false,
        false,
    )
    .unwrap();
    let both = PositionalEncodings::new(
        &mut store, "pe_on", 2, 2, 8, 4, SpatialPeMode::TwoD, true, true,
    )
    .unwrap();
    let spatial_only = PositionalEncodings::new(
        &mut store, "pe_s", 2, 2, 8, 4, SpatialPeMode::TwoD, true, false,
    )
    .unwrap();
    let p = store.bind_frozen();

    let vals = wave(3 * 4 * 8, 30);
    let tokens = t64(&[3, 4, 8], &vals);

    // both toggles off: identity
    let out = off.add_to(&p, &tokens).unwrap();
    assert_eq!(out.data(), tokens.data());

    // zero tokens: output equals the encoding grid
    let zero = Tensor::zeros(&[3, 4, 8]).unwrap();
    let enc = both.add_to(&p, &zero).unwrap();
    let spatial: Tensor<f64> = sincos_spatial(2, 2, 8, SpatialPeMode::TwoD).unwrap();
    let temporal = p.get("pe_on.temporal").unwrap();
    for t in 0..3 {
        for l in 0..4 {
            for c in 0..8 {
                let expect = spatial.data()[l * 8 + c] + temporal.data()[t * 8 + c];
                let got = enc.data()[(t * 4 + l) * 8 + c];
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    // spatial toggle shifts each l identically across t
    let s_out = spatial_only.add_to(&p, &tokens).unwrap();
    for l in 0..4 {
        for c in 0..8 {
            let d0 = s_out.data()[(l) * 8 + c] - tokens.data()[(l) * 8 + c];
            for t in 1..3 {
                let dt = s_out.data()[(t * 4 + l) * 8 + c] - tokens.data()[(t * 4 + l) * 8 + c];
                assert!((dt - d0).abs() < 1e-12);
            }
        }
    }

    // T beyond capacity is a contract error
    let long = Tensor::zeros(&[5, 4, 8]).unwrap();
    assert!(both.add_to(&p, &long).is_err());
}

#[test]
fn param_names_are_unique_and_sorted() {
    let mut store: ParamStore<f64> = ParamStore::new(0);
    Linear::new(&mut store, "a", 2, 2).unwrap();
    assert!(store.add("a.w", &[2], Init::Zeros).is_err());
    let names = store.names();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

use super::*;
use pharmvig_core::rng::seeded;

fn check(params: &ParamStore, build: impl Fn(&mut Graph) -> NodeId) {
    let mut grads = GradStore::for_params(params);
    {
        let mut g = Graph::eval(params);
        let root = build(&mut g);
        g.backward(root, &mut grads);
    }
    let eval = |ps: &ParamStore| -> f64 {
        let mut g = Graph::eval(ps);
        let root = build(&mut g);
        g.value(root).scalar() as f64
    };
    let eps = 1e-2f32;
    let mut ps = params.clone();
    let ids: Vec<ParamId> = params.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for j in 0..params.get(id).len() {
            let orig = ps.get(id).data[j];
            ps.get_mut(id).data[j] = orig + eps;
            let up = eval(&ps);
            ps.get_mut(id).data[j] = orig - eps;
            let down = eval(&ps);
            ps.get_mut(id).data[j] = orig;
            let numeric = (up - down) / (2.0 * eps as f64);
            let analytic = grads.get(id).data[j] as f64;
            let tol = 2e-3 + 2e-2 * numeric.abs().max(analytic.abs());
            assert!(
                (numeric - analytic).abs() <= tol,
                "{}[{j}]: analytic {analytic} numeric {numeric}",
                params.name(id)
            );
        }
    }
}

fn store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
    let mut rng = seeded(seed);
    let mut ps = ParamStore::new();
    for &(n, r, c) in shapes {
        ps.insert(n, normal_tensor(r, c, 0.7, &mut rng)).unwrap();
    }
    ps
}

#[test]
fn dense_layers_and_activations() {
    let ps = store(&[("x", 3, 4), ("w", 4, 5), ("b", 1, 5), ("w2", 5, 3), ("b2", 1, 3)], 1);
    let (x, w, b, w2, b2) =
        (ps.id("x").unwrap(), ps.id("w").unwrap(), ps.id("b").unwrap(), ps.id("w2").unwrap(), ps.id("b2").unwrap());
    for act in 0..4 {
        check(&ps, |g| {
            let xn = g.param(x);
            let h = g.linear(xn, w, b);
            let h = match act {
                0 => g.gelu(h),
                1 => g.tanh(h),
                2 => g.sigmoid(h),
                _ => g.relu(h),
            };
            let o = g.linear(h, w2, b2);
            g.cross_entropy(o, &[Some(0), None, Some(2)], 0.5)
        });
    }
}

#[test]
fn layer_norm_softmax_and_attention_shapes() {
    let ps = store(&[("x", 4, 6), ("gamma", 1, 6), ("beta", 1, 6), ("k", 4, 6), ("t", 6, 2)], 2);
    let ids: Vec<ParamId> = ["x", "gamma", "beta", "k", "t"].iter().map(|n| ps.id(n).unwrap()).collect();
    check(&ps, |g| {
        let x = g.param(ids[0]);
        let n = g.layer_norm(x, ids[1], ids[2], 1e-5);
        let k = g.param(ids[3]);
        let s = g.matmul_bt(n, k);
        let s = g.scale(s, 0.5);
        let p = g.softmax_rows(s);
        let ctx = g.matmul(p, k);
        let ctx = g.add(ctx, n);
        let tp = g.param(ids[4]);
        let o = g.matmul(ctx, tp);
        g.cross_entropy(o, &[Some(1), Some(0), Some(1), Some(0)], 0.25)
    });
}

#[test]
fn slicing_concat_max_gather_mul() {
    let ps = store(&[("emb", 7, 4), ("w", 4, 6), ("v", 1, 3)], 3);
    let (emb, w, v) = (ps.id("emb").unwrap(), ps.id("w").unwrap(), ps.id("v").unwrap());
    check(&ps, |g| {
        let e = g.gather(emb, &[3, 1, 3, 6, 0]);
        let wn = g.param(w);
        let h = g.matmul(e, wn);
        let a = g.slice_cols(h, 0, 3);
        let b = g.slice_cols(h, 3, 3);
        let b = g.sigmoid(b);
        let ab = g.mul(a, b);
        let top = g.slice_rows(ab, 1, 3);
        let m = g.max_rows(top);
        let vn = g.param(v);
        let m = g.mul(m, vn);
        let c = g.concat_cols(&[m, vn]);
        g.cross_entropy(c, &[Some(4)], 1.0)
    });
}

#[test]
fn dropout_is_identity_in_eval_and_scaled_in_train() {
    let ps = store(&[("x", 50, 40)], 4);
    let x = ps.id("x").unwrap();
    let mut g = Graph::eval(&ps);
    let xn = g.param(x);
    let d = g.dropout(xn, 0.5);
    assert_eq!(g.value(d), ps.get(x));

    let mut rng = seeded(5);
    let mut g = Graph::train(&ps, &mut rng);
    let xn = g.param(x);
    let d = g.dropout(xn, 0.5);
    let out = g.value(d);
    let zeros = out.data.iter().filter(|v| **v == 0.0).count();
    assert!((800..1200).contains(&zeros), "{zeros}");
    for (o, i) in out.data.iter().zip(&ps.get(x).data) {
        assert!(*o == 0.0 || (*o - 2.0 * i).abs() < 1e-6);
    }
}

#[test]
fn cross_entropy_matches_log_softmax() {
    let mut ps = ParamStore::new();
    let l = ps.insert("l", Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0])).unwrap();
    let mut g = Graph::eval(&ps);
    let ln = g.param(l);
    let loss = g.cross_entropy(ln, &[Some(0)], 1.0);
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    let expect = z.ln() - 1.0;
    assert!((g.value(loss).scalar() as f64 - expect).abs() < 1e-5);
}

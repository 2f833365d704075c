//! Finite-difference verification of analytic gradients.

use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::ParamSet;
use crate::error::Result;
use crate::util::rng_from;

/// Compare analytic gradients of `f` with central differences on
/// `n_probes` coordinates. Each probe picks a parameter tensor uniformly,
/// then a coordinate inside it. Returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &mut ParamSet, h: f64, n_probes: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new(p);
        let loss = f(&mut g)?;
        Ok(g.scalar(loss))
    };
    let analytic = {
        let mut g = Graph::new(params);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let candidates: Vec<usize> = (0..params.len()).filter(|&i| !params.tensor(i).is_empty()).collect();
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let mut rng = rng_from(seed, &["grad-check"]);
    let mut worst: f64 = 0.0;
    for _ in 0..n_probes {
        let id = candidates[rng.random_range(0..candidates.len())];
        let j = rng.random_range(0..params.tensor(id).len());
        let orig = params.tensor(id).data[j];
        params.tensor_mut(id).data[j] = orig + h;
        let up = eval(params)?;
        params.tensor_mut(id).data[j] = orig - h;
        let down = eval(params)?;
        params.tensor_mut(id).data[j] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get(id)[j];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{encoder_forward, init_encoder, EncoderConfig};
    use crate::nn::tensor::Tensor;
    use rand_distr::{Distribution, Normal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, &["noise"]);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn random_params(shapes: &[(&str, &[usize])], seed: u64) -> ParamSet {
        let mut p = ParamSet::new();
        for (k, (name, shape)) in shapes.iter().enumerate() {
            let n = shape.iter().product();
            p.add(name, Tensor::new(shape, noise(n, seed + k as u64)).unwrap());
        }
        p
    }

    #[test]
    fn quadratic() {
        let mut p = ParamSet::new();
        p.add("t", Tensor::new(&[1, 1], vec![3.0]).unwrap());
        let f = |g: &mut Graph| {
            let t = g.param("t")?;
            let sq = g.linear(t, t, None)?;
            Ok(g.sum(sq))
        };
        {
            let mut g = Graph::new(&p);
            let loss = f(&mut g).unwrap();
            assert_eq!(g.scalar(loss), 9.0);
            assert_eq!(g.backward(loss).unwrap().get(0), &[6.0]);
        }
        assert!(grad_check(f, &mut p, 1e-5, 5, 1).unwrap() < 1e-9);
    }

    #[test]
    fn constant_objective() {
        let mut p = random_params(&[("w", &[2, 2])], 0);
        let f = |g: &mut Graph| {
            let x = g.input(&[2], vec![1.0, 2.0])?;
            Ok(g.sum(x))
        };
        assert_eq!(grad_check(f, &mut p, 1e-5, 10, 2).unwrap(), 0.0);
    }

    #[test]
    fn sum_of_linear_gives_input() {
        let p = random_params(&[("w", &[3, 2])], 1);
        let mut g = Graph::new(&p);
        let x = g.input(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let w = g.param("w").unwrap();
        let y = g.linear(x, w, None).unwrap();
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(0), &[1.0, 1.0, -2.0, -2.0, 0.5, 0.5]);
        assert!(g.backward(loss).is_err());
    }

    #[test]
    fn bce_gradient_at_zero() {
        let p = random_params(&[("z", &[1])], 0);
        let mut p = p;
        p.tensor_mut(0).data[0] = 0.0;
        let mut g = Graph::new(&p);
        let z = g.param("z").unwrap();
        let loss = g.bce_loss(z, &[1.0]).unwrap();
        assert!((g.scalar(loss) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g.backward(loss).unwrap().get(0), &[-0.5]);

        let mut g = Graph::new(&p);
        let z = g.param("z").unwrap();
        let loss = g.bce_loss(z, &[0.0]).unwrap();
        assert_eq!(g.backward(loss).unwrap().get(0), &[0.5]);

        let mut g = Graph::new(&p);
        let z = g.input(&[1], vec![30.0]).unwrap();
        let loss = g.bce_loss(z, &[1.0]).unwrap();
        assert!(g.scalar(loss) < 1e-12 && g.scalar(loss) >= 0.0);
    }

    fn check<F: Fn(&mut Graph) -> Result<Var>>(f: F, shapes: &[(&str, &[usize])]) {
        let mut p = random_params(shapes, 11);
        let err = grad_check(f, &mut p, 1e-5, 40, 5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn linear_and_add_layers() {
        check(
            |g| {
                let x = g.param("x")?;
                let w = g.param("w")?;
                let b = g.param("b")?;
                let y = g.linear(x, w, Some(b))?;
                let y2 = g.add(y, y)?;
                let c = g.param("c")?;
                let y3 = g.add_broadcast(y2, c)?;
                g.bce_loss(y3, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
            },
            &[("x", &[2, 3, 4]), ("w", &[4, 1]), ("b", &[1]), ("c", &[3, 1])],
        );
    }

    #[test]
    fn layer_norm_and_relu() {
        check(
            |g| {
                let x = g.param("x")?;
                let (ga, be) = (g.param("g")?, g.param("b")?);
                let y = g.layer_norm(x, ga, be)?;
                let y = g.relu(y);
                let w = g.param("w")?;
                let z = g.linear(y, w, None)?;
                g.bce_loss(z, &[1.0, 0.0, 1.0])
            },
            &[("x", &[3, 5]), ("g", &[5]), ("b", &[5]), ("w", &[5, 1])],
        );
    }

    #[test]
    fn embeddings_concat_and_prepend() {
        check(
            |g| {
                let t = g.param("table")?;
                let e = g.embedding(t, &[0, 2, 2, 1], &[2, 2])?;
                let x = g.param("x")?;
                let (w, b) = (g.param("sw")?, g.param("sb")?);
                let s = g.scalar_embed(x, w, b)?;
                let c = g.concat_seq(s, e)?;
                let cls = g.param("cls")?;
                let c = g.prepend_row(cls, c)?;
                let first = g.select_first(c)?;
                let all = g.reshape(c, &[2 * 4 * 3])?;
                let tot = g.sum(all);
                let v = g.param("v")?;
                let z = g.linear(first, v, None)?;
                let l = g.bce_loss(z, &[1.0, 0.0])?;
                let r = g.input(&[1, 1], vec![0.01])?;
                let tot = g.reshape(tot, &[1, 1])?;
                let scaled = g.linear(tot, r, None)?;
                let l = g.reshape(l, &[1, 1])?;
                let l = g.add(l, scaled)?;
                Ok(g.sum(l))
            },
            &[("table", &[3, 3]), ("x", &[2, 1]), ("sw", &[3]), ("sb", &[3]), ("cls", &[3]), ("v", &[3, 1])],
        );
    }

    #[test]
    fn attention_with_mask() {
        check(
            |g| {
                let (q, k, v) = (g.param("q")?, g.param("k")?, g.param("v")?);
                let a = g.attention(q, k, v, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0], 2)?;
                let w = g.param("w")?;
                let z = g.linear(a, w, None)?;
                g.bce_loss(z, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
            },
            &[("q", &[2, 3, 4]), ("k", &[2, 3, 4]), ("v", &[2, 3, 4]), ("w", &[4, 1])],
        );
    }

    #[test]
    fn two_layer_encoder_with_bce() {
        let cfg = EncoderConfig::new(8, 2, 2);
        let mut p = random_params(&[("x", &[2, 4, 8]), ("head", &[8, 1])], 21);
        init_encoder(&mut p, &cfg, &mut rng_from(4, &["enc"])).unwrap();
        let f = |g: &mut Graph| {
            let x = g.param("x")?;
            let out = encoder_forward(g, x, &[1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0], &cfg)?;
            let cls = g.select_first(out.out)?;
            let head = g.param("head")?;
            let z = g.linear(cls, head, None)?;
            g.bce_loss(z, &[1.0, 0.0])
        };
        let err = grad_check(f, &mut p, 1e-5, 50, 9).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}

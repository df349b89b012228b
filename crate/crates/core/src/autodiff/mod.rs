//! Dense reverse-mode automatic differentiation, cosine-annealed SGD and
//! parameter checkpoints.

pub mod checkpoint;
mod optim;
mod tape;
mod tensor;

pub use optim::{sgd_step, SgdState};
pub use tape::{Bound, Tape, Targets, Var};
pub use tensor::{grad_dot, Gradient, ParamSet, Tensor};

use crate::error::Result;

/// A computation over bound parameters and a single input.
///
/// Graphs are plain closures so composition is function composition.
pub trait Graph: Fn(&mut Tape, &Bound, Var) -> Result<Var> {}
impl<F: Fn(&mut Tape, &Bound, Var) -> Result<Var>> Graph for F {}

/// Result of running a graph: the tape plus the handle of its output.
pub struct Forward {
    pub tape: Tape,
    pub output: Var,
}

impl Forward {
    pub fn value(&self) -> &Tensor {
        self.tape.value(self.output)
    }

    /// Gradient of the (scalar) output with respect to every parameter.
    pub fn backward(&self) -> Result<Gradient> {
        self.tape.backward(self.output)
    }
}

/// Binds `params`, feeds `inputs` as a constant and evaluates `graph`.
pub fn forward_graph(params: &ParamSet, inputs: &Tensor, graph: impl Graph) -> Result<Forward> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let x = tape.constant(inputs.clone());
    let output = graph(&mut tape, &bound, x)?;
    Ok(Forward { tape, output })
}

/// Gradient of the scalar `loss` recorded on `tape`.
pub fn backward(tape: &Tape, loss: Var) -> Result<Gradient> {
    tape.backward(loss)
}

/// Mean cross-entropy of `softmax(logits)` against `targets`, evaluated
/// off-tape.
pub fn cross_entropy(logits: &Tensor, targets: Targets) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone());
    let l = tape.cross_entropy(z, targets, None)?;
    tape.value(l).item()
}

/// Central-difference estimate of the gradient of a scalar-valued graph.
pub fn finite_diff_grad(params: &ParamSet, inputs: &Tensor, graph: impl Graph, h: f64) -> Result<Gradient> {
    let eval = |p: &ParamSet| -> Result<f64> { forward_graph(p, inputs, &graph)?.value().item() };
    let mut grad = params.zero_gradient();
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.get(name)?.numel();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        grad.insert(name.clone(), Tensor::new(params.get(name)?.shape().to_vec(), g)?);
    }
    Ok(grad)
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &Gradient, b: &Gradient, floor: f64) -> Result<f64> {
    let mut diff = a.clone();
    diff.add_scaled(b, -1.0)?;
    let scale = a.sq_norm().sqrt().max(b.sq_norm().sqrt()).max(floor);
    Ok(diff.sq_norm().sqrt() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_of(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamSet {
        let mut p = ParamSet::new();
        for (n, s, d) in entries {
            p.insert(*n, Tensor::new(s.clone(), d.clone()).unwrap());
        }
        p
    }

    #[test]
    fn identity_graph_is_bitwise() {
        let x = Tensor::new(vec![2, 3], vec![1.5, -0.25, 3.0, 1e-300, -7.0, 0.1]).unwrap();
        let f = forward_graph(&ParamSet::new(), &x, |_: &mut Tape, _: &Bound, x| Ok(x)).unwrap();
        assert_eq!(f.value(), &x);
    }

    #[test]
    fn zero_linear_gives_zero() {
        let p = params_of(&[("w", vec![3, 2], vec![0.0; 6]), ("b", vec![2], vec![0.0; 2])]);
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap();
        let f = forward_graph(&p, &x, |t: &mut Tape, b: &Bound, x| {
            t.linear(x, b.get("w")?, Some(b.get("b")?))
        })
        .unwrap();
        assert!(f.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let p = params_of(&[("w", vec![4, 2], vec![0.0; 8])]);
        let x = Tensor::zeros(&[2, 3]);
        let err = forward_graph(&p, &x, |t: &mut Tape, b: &Bound, x| t.matmul(x, b.get("w")?))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Shape { op: "matmul", .. }));
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let p = params_of(&[("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]), ("b", vec![3], vec![0.5; 3])]);
        let f = forward_graph(&p, &Tensor::scalar(0.0), |t: &mut Tape, b: &Bound, _| {
            let sa = t.sum(b.get("a")?);
            let sb = t.sum(b.get("b")?);
            t.add(sa, sb)
        })
        .unwrap();
        let g = f.backward().unwrap();
        for (_, t) in g.iter() {
            assert!(t.data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = params_of(&[("w", vec![2], vec![1.0, 2.0])]);
        let f = forward_graph(&p, &Tensor::full(&[1, 3], 2.0), |t: &mut Tape, _: &Bound, x| Ok(t.sum(x))).unwrap();
        let g = f.backward().unwrap();
        assert!(g.mirrors(&p));
        assert_eq!(g.sq_norm(), 0.0);
        let fd = finite_diff_grad(&p, &Tensor::full(&[1, 3], 2.0), |t: &mut Tape, _: &Bound, x| Ok(t.sum(x)), 1e-5).unwrap();
        assert!(fd.iter().all(|(_, t)| t.data().iter().all(|v| v.abs() < 1e-8)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let p = params_of(&[("w", vec![2], vec![1.0, 2.0])]);
        let f = forward_graph(&p, &Tensor::zeros(&[1, 2]), |_: &mut Tape, b: &Bound, _| b.get("w")).unwrap();
        assert!(matches!(f.backward(), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn finite_difference_of_square() {
        let p = params_of(&[("w", vec![1, 1], vec![3.0])]);
        let g = finite_diff_grad(&p, &Tensor::zeros(&[1, 1]), |t: &mut Tape, b: &Bound, _| {
            let w = b.get("w")?;
            let sq = t.mul(w, w)?;
            Ok(t.sum(sq))
        }, 1e-5)
        .unwrap();
        assert!((g.get("w").unwrap().data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let uniform = Tensor::zeros(&[3, 4]);
        let v = cross_entropy(&uniform, Targets::Indices(vec![0, 3, 2])).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);

        let z = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let v = cross_entropy(&z, Targets::Indices(vec![0])).unwrap();
        assert!((v - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((v - 0.3133).abs() < 1e-4);

        let z = Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let m = z.data().iter().copied().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.data().iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        let entropy: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
        let v = cross_entropy(&z, Targets::Probs(Tensor::new(vec![1, 3], p).unwrap())).unwrap();
        assert!((v - entropy).abs() < 1e-12);

        assert!(matches!(
            cross_entropy(&uniform, Targets::Indices(vec![0, 4, 1])),
            Err(Error::TargetOutOfRange { target: 4, classes: 4 })
        ));
    }

    #[test]
    fn softmax_ce_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = params_of(&[("w", vec![4, 3], w)]);
        let x = Tensor::new(vec![1, 4], x).unwrap();
        let graph = |t: &mut Tape, b: &Bound, x: Var| {
            let z = t.matmul(x, b.get("w")?)?;
            t.cross_entropy(z, Targets::Indices(vec![2]), None)
        };
        let g = forward_graph(&p, &x, graph).unwrap().backward().unwrap();
        let fd = finite_diff_grad(&p, &x, graph, 1e-5).unwrap();
        for (a, b) in g.get("w").unwrap().data().iter().zip(fd.get("w").unwrap().data()) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-8), "{} vs {}", a, b);
        }
    }

    #[test]
    fn softmax_rows_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..50).map(|_| rng.random_range(-20.0..20.0)).collect();
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![5, 10], data).unwrap());
        let y = t.softmax(x).unwrap();
        for row in t.value(y).rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn masked_softmax_zeroes_masked_columns() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1, 3], vec![1.0, 5.0, 2.0]).unwrap());
        let y = t.masked_softmax(x, &[true, false, true]).unwrap();
        let row = t.value(y).row(0);
        assert_eq!(row[1], 0.0);
        assert!((row[0] + row[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_ce_all_zero_weights() {
        let p = params_of(&[("z", vec![2, 3], vec![0.1, 0.2, 0.3, -1.0, 0.0, 1.0])]);
        let f = forward_graph(&p, &Tensor::scalar(0.0), |t: &mut Tape, b: &Bound, _| {
            t.cross_entropy(b.get("z")?, Targets::Indices(vec![0, 1]), Some(vec![0.0, 0.0]))
        })
        .unwrap();
        assert_eq!(f.value().item().unwrap(), 0.0);
        assert_eq!(f.backward().unwrap().sq_norm(), 0.0);
    }
}

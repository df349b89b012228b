//! Finite-difference verification of every differentiable primitive and of
//! the composed training objectives.
//!
//! Each check draws seeded random instances, reduces the primitive's output
//! to a scalar through a fixed random projection, and compares the tape
//! gradient against central differences by norm-wise relative error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_grad, forward_graph, relative_error, Bound, ParamSet, Tape, Targets, Tensor, Var};
use crate::error::Result;
use crate::nets::{self, NetworkConfig, TemporalConfig};
use crate::seed::rng_for;
use crate::spatial::{feedback_loss_graph, student_loss_graph, supervised_loss_graph, teacher_loss_graph};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub instances: usize,
    pub seed: u64,
    /// Negates the analytic gradient of the named check, standing in for a
    /// sign error in its backward rule.
    pub inject_sign_bug: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { instances: 100, seed: 0, inject_sign_bug: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst <= TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.worst).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed()).collect()
    }
}

type GraphFn = Box<dyn Fn(&mut Tape, &Bound, Var) -> Result<Var>>;

/// One random instance: parameters to differentiate, a constant input and
/// the graph producing a scalar.
struct Instance {
    params: ParamSet,
    input: Tensor,
    graph: GraphFn,
    /// Graph evaluated by finite differences when it must differ from
    /// `graph` (detached targets frozen at the base parameters).
    reference: Option<GraphFn>,
}

type Builder = fn(&mut ChaCha8Rng) -> Instance;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches")
}

/// Values bounded away from zero, so relu kinks sit far outside `±STEP`.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape, 0.05, 1.5);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..6))
}

/// Scalar reduction `Σ out ⊙ R` with a fixed random `R`.
fn project(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let m = tape.mul(out, rv)?;
    Ok(tape.sum(m))
}

fn one(name: &str, t: Tensor) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert(name, t);
    p
}

fn two(a: (&str, Tensor), b: (&str, Tensor)) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert(a.0, a.1);
    p.insert(b.0, b.1);
    p
}

fn simple(params: ParamSet, graph: impl Fn(&mut Tape, &Bound, Var) -> Result<Var> + 'static) -> Instance {
    Instance { params, input: Tensor::scalar(0.0), graph: Box::new(graph), reference: None }
}

fn unary(rng: &mut ChaCha8Rng, op: fn(&mut Tape, Var) -> Result<Var>, out_shape: fn(usize, usize) -> [usize; 2]) -> Instance {
    let (r, c) = dims(rng);
    let a = away_from_zero(rng, &[r, c]);
    let proj = uniform(rng, &out_shape(r, c), -1.0, 1.0);
    simple(one("a", a), move |t, b, _| {
        let y = op(t, b.get("a")?)?;
        project(t, y, &proj)
    })
}

fn binary_same(rng: &mut ChaCha8Rng, op: fn(&mut Tape, Var, Var) -> Result<Var>) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let bb = uniform(rng, &[r, c], -1.5, 1.5);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(two(("a", a), ("b", bb)), move |t, b, _| {
        let y = op(t, b.get("a")?, b.get("b")?)?;
        project(t, y, &proj)
    })
}

fn same(r: usize, c: usize) -> [usize; 2] {
    [r, c]
}

fn check_matmul(rng: &mut ChaCha8Rng) -> Instance {
    let (r, k) = dims(rng);
    let c = rng.random_range(1..5);
    let a = uniform(rng, &[r, k], -1.5, 1.5);
    let w = uniform(rng, &[k, c], -1.5, 1.5);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(two(("a", a), ("w", w)), move |t, b, _| {
        let y = t.matmul(b.get("a")?, b.get("w")?)?;
        project(t, y, &proj)
    })
}

fn check_add_row(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let v = uniform(rng, &[c], -1.5, 1.5);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(two(("a", a), ("v", v)), move |t, b, _| {
        let y = t.add_row(b.get("a")?, b.get("v")?)?;
        project(t, y, &proj)
    })
}

fn check_linear(rng: &mut ChaCha8Rng) -> Instance {
    let (r, k) = dims(rng);
    let c = rng.random_range(1..5);
    let mut p = ParamSet::new();
    p.insert("w", uniform(rng, &[k, c], -1.5, 1.5));
    p.insert("b", uniform(rng, &[c], -1.5, 1.5));
    let x = uniform(rng, &[r, k], -1.5, 1.5);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    Instance {
        params: p,
        input: x,
        graph: Box::new(move |t, b, x| {
            let y = t.linear(x, b.get("w")?, Some(b.get("b")?))?;
            project(t, y, &proj)
        }),
        reference: None,
    }
}

fn check_scale(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let s = rng.random_range(-2.0..2.0);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(one("a", a), move |t, b, _| {
        let y = t.scale(b.get("a")?, s);
        project(t, y, &proj)
    })
}

fn check_slice_cols(rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let c = rng.random_range(2..7);
    let start = rng.random_range(0..c - 1);
    let len = rng.random_range(1..=c - start);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let proj = uniform(rng, &[r, len], -1.0, 1.0);
    simple(one("a", a), move |t, b, _| {
        let y = t.slice_cols(b.get("a")?, start, len)?;
        project(t, y, &proj)
    })
}

fn check_concat_cols(rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let (c1, c2) = (rng.random_range(1..4), rng.random_range(1..4));
    let a = uniform(rng, &[r, c1], -1.5, 1.5);
    let bb = uniform(rng, &[r, c2], -1.5, 1.5);
    let proj = uniform(rng, &[r, c1 + c2], -1.0, 1.0);
    simple(two(("a", a), ("b", bb)), move |t, b, _| {
        let y = t.concat_cols(&[b.get("a")?, b.get("b")?])?;
        project(t, y, &proj)
    })
}

fn check_concat_rows(rng: &mut ChaCha8Rng) -> Instance {
    let c = rng.random_range(1..5);
    let (r1, r2) = (rng.random_range(1..4), rng.random_range(1..4));
    let a = uniform(rng, &[r1, c], -1.5, 1.5);
    let bb = uniform(rng, &[r2, c], -1.5, 1.5);
    let proj = uniform(rng, &[r1 + r2, c], -1.0, 1.0);
    simple(two(("a", a), ("b", bb)), move |t, b, _| {
        let y = t.concat_rows(&[b.get("a")?, b.get("b")?])?;
        project(t, y, &proj)
    })
}

fn random_mask(rng: &mut ChaCha8Rng, c: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..c).map(|_| rng.random_bool(0.6)).collect();
    let keep = rng.random_range(0..c);
    m[keep] = true;
    m
}

fn check_masked_softmax(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -2.0, 2.0);
    let mask = random_mask(rng, c);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(one("a", a), move |t, b, _| {
        let y = t.masked_softmax(b.get("a")?, &mask)?;
        project(t, y, &proj)
    })
}

fn check_layer_norm(rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let c = rng.random_range(2..7);
    let mut p = ParamSet::new();
    p.insert("x", uniform(rng, &[r, c], -2.0, 2.0));
    p.insert("g", uniform(rng, &[c], 0.5, 1.5));
    p.insert("b", uniform(rng, &[c], -0.5, 0.5));
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    simple(p, move |t, b, _| {
        let y = t.layer_norm(b.get("x")?, b.get("g")?, b.get("b")?, 1e-5)?;
        project(t, y, &proj)
    })
}

fn check_sum(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let s = rng.random_range(-2.0..2.0);
    simple(one("a", a), move |t, b, _| {
        let y = t.sum(b.get("a")?);
        // A non-unit outer factor makes the upstream gradient non-trivial.
        let y2 = t.mul(y, y)?;
        Ok(t.scale(y2, s))
    })
}

fn check_detach(rng: &mut ChaCha8Rng) -> Instance {
    let (r, c) = dims(rng);
    let a = uniform(rng, &[r, c], -1.5, 1.5);
    let proj = uniform(rng, &[r, c], -1.0, 1.0);
    let frozen = a.clone();
    Instance {
        params: one("a", a),
        input: Tensor::scalar(0.0),
        // `a ⊙ detach(a)`: only the first factor carries gradient.
        graph: Box::new({
            let proj = proj.clone();
            move |t, b, _| {
                let a = b.get("a")?;
                let d = t.detach(a);
                let y = t.mul(a, d)?;
                project(t, y, &proj)
            }
        }),
        reference: Some(Box::new(move |t, b, _| {
            let c = t.constant(frozen.clone());
            let y = t.mul(b.get("a")?, c)?;
            project(t, y, &proj)
        })),
    }
}

fn classes(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

fn check_ce_indices(rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let c = rng.random_range(2..6);
    let z = uniform(rng, &[r, c], -2.0, 2.0);
    let y = classes(rng, r, c);
    let weights: Option<Vec<f64>> =
        rng.random_bool(0.5).then(|| (0..r).map(|_| rng.random_range(0.1..2.0)).collect());
    simple(one("z", z), move |t, b, _| t.cross_entropy(b.get("z")?, Targets::Indices(y.clone()), weights.clone()))
}

fn check_ce_probs(rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.random_range(1..5);
    let c = rng.random_range(2..6);
    let z = uniform(rng, &[r, c], -2.0, 2.0);
    let mut p = uniform(rng, &[r, c], 0.01, 1.0);
    for i in 0..r {
        let s: f64 = p.row(i).iter().sum();
        p.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v /= s);
    }
    simple(one("z", z), move |t, b, _| t.cross_entropy(b.get("z")?, Targets::Probs(p.clone()), None))
}

fn small_network(rng: &mut ChaCha8Rng) -> (NetworkConfig, ParamSet) {
    let cfg = NetworkConfig {
        input_dim: rng.random_range(2..5),
        hidden_dims: vec![rng.random_range(3..7)],
        num_classes: rng.random_range(2..5),
        use_bias: true,
        seed: rng.random(),
    };
    let mut p = nets::init_network(&cfg).expect("valid config");
    // Non-zero biases exercise every path through the backbone.
    for (name, t) in p.iter_mut() {
        if name.ends_with(".b") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    (cfg, p)
}

fn batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    uniform(rng, &[n, d], -1.5, 1.5)
}

fn check_student_objective(rng: &mut ChaCha8Rng) -> Instance {
    let (cfg, params) = small_network(rng);
    let n = rng.random_range(1..6);
    let xs = batch(rng, n, cfg.input_dim);
    let pseudo = classes(rng, n, cfg.num_classes);
    Instance {
        params,
        input: xs,
        graph: Box::new(move |t, b, x| student_loss_graph(t, b, x, &pseudo, None)),
        reference: None,
    }
}

fn check_teacher_objective(rng: &mut ChaCha8Rng) -> Instance {
    let (cfg, params) = small_network(rng);
    let (nb, nu) = (rng.random_range(1..6), rng.random_range(1..6));
    let xb = batch(rng, nb, cfg.input_dim);
    let yb = classes(rng, nb, cfg.num_classes);
    let xw = batch(rng, nu, cfg.input_dim);
    let xs = batch(rng, nu, cfg.input_dim);
    let pseudo = classes(rng, nu, cfg.num_classes);
    let f = rng.random_range(-1.0..1.0);
    // The consistency target is the teacher's weak-view distribution at the
    // base parameters, held fixed under perturbation.
    let target = {
        let z = nets::predict_logits(&params, &xw).expect("shapes agree");
        let mut t = Tape::new();
        let zv = t.constant(z);
        let p = t.softmax(zv).expect("2-D");
        t.value(p).clone()
    };
    let (xb2, yb2, xw2, xs2, pseudo2) = (xb.clone(), yb.clone(), xw.clone(), xs.clone(), pseudo.clone());
    Instance {
        params,
        input: Tensor::scalar(0.0),
        graph: Box::new(move |t, b, _| {
            let (xb, xw, xs) = (t.constant(xb.clone()), t.constant(xw.clone()), t.constant(xs.clone()));
            Ok(teacher_loss_graph(t, b, xb, &yb, xw, xs, &pseudo, f)?.total)
        }),
        reference: Some(Box::new(move |t, b, _| {
            let (xb, xw, xs) = (t.constant(xb2.clone()), t.constant(xw2.clone()), t.constant(xs2.clone()));
            let l_s = supervised_loss_graph(t, b, xb, &yb2)?;
            let zs = nets::logits(t, b, xs)?;
            let l_c = t.cross_entropy(zs, Targets::Probs(target.clone()), None)?;
            let l_f = feedback_loss_graph(t, b, xw, &pseudo2, f)?;
            let partial = t.add(l_s, l_c)?;
            t.add(partial, l_f)
        })),
    }
}

fn check_temporal_model(rng: &mut ChaCha8Rng) -> Instance {
    let cfg = TemporalConfig {
        model_dim: 4,
        num_heads: 2,
        num_layers: 1,
        ffn_dim: 6,
        max_clip_len: 8,
        use_positional_encoding: true,
        seed: rng.random(),
    };
    let (feat, c) = (rng.random_range(2..4), rng.random_range(2..4));
    let mut params = nets::init_temporal_model(&cfg, feat, c).expect("valid config");
    for (name, t) in params.iter_mut() {
        if name.ends_with(".b") || name.ends_with("b1") || name.ends_with("b2") || name.ends_with(".bo") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    let len = rng.random_range(1..6);
    let clip = batch(rng, len, feat);
    let mask = random_mask(rng, len);
    let labels = classes(rng, len, c);
    let weights: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Instance {
        params,
        input: clip,
        graph: Box::new(move |t, b, x| {
            let z = nets::temporal_logits(t, b, x, &mask, &cfg)?;
            t.cross_entropy(z, Targets::Indices(labels.clone()), Some(weights.clone()))
        }),
        reference: None,
    }
}

fn check_add(rng: &mut ChaCha8Rng) -> Instance {
    binary_same(rng, |t, a, b| t.add(a, b))
}

fn check_mul(rng: &mut ChaCha8Rng) -> Instance {
    binary_same(rng, |t, a, b| t.mul(a, b))
}

fn check_relu(rng: &mut ChaCha8Rng) -> Instance {
    unary(rng, |t, a| Ok(t.relu(a)), same)
}

fn check_transpose(rng: &mut ChaCha8Rng) -> Instance {
    unary(rng, |t, a| t.transpose(a), |r, c| [c, r])
}

fn check_softmax(rng: &mut ChaCha8Rng) -> Instance {
    unary(rng, |t, a| t.softmax(a), same)
}

fn check_log_softmax(rng: &mut ChaCha8Rng) -> Instance {
    unary(rng, |t, a| t.log_softmax(a), same)
}

/// Every check, in report order.
const CHECKS: [(&str, Builder); 22] = [
    ("matmul", check_matmul),
    ("add", check_add),
    ("mul", check_mul),
    ("add_row", check_add_row),
    ("linear", check_linear),
    ("scale", check_scale),
    ("relu", check_relu),
    ("transpose", check_transpose),
    ("slice_cols", check_slice_cols),
    ("concat_cols", check_concat_cols),
    ("concat_rows", check_concat_rows),
    ("softmax", check_softmax),
    ("masked_softmax", check_masked_softmax),
    ("log_softmax", check_log_softmax),
    ("layer_norm", check_layer_norm),
    ("sum", check_sum),
    ("detach", check_detach),
    ("cross_entropy_indices", check_ce_indices),
    ("cross_entropy_probs", check_ce_probs),
    ("student_objective", check_student_objective),
    ("teacher_objective", check_teacher_objective),
    ("temporal_model", check_temporal_model),
];

/// Names of every check, in report order.
pub fn check_names() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|c| c.0)
}

fn instance_error(inst: &Instance, negate: bool) -> Result<f64> {
    let mut analytic = forward_graph(&inst.params, &inst.input, &inst.graph)?.backward()?;
    if negate {
        analytic = analytic.scaled(-1.0);
    }
    let numeric = match &inst.reference {
        Some(r) => finite_diff_grad(&inst.params, &inst.input, r, STEP)?,
        None => finite_diff_grad(&inst.params, &inst.input, &inst.graph, STEP)?,
    };
    relative_error(&analytic, &numeric, FLOOR)
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut checks = Vec::with_capacity(CHECKS.len());
    for (k, (name, build)) in CHECKS.iter().enumerate() {
        let mut rng = rng_for(opts.seed, k as u64);
        let negate = opts.inject_sign_bug.as_deref() == Some(*name);
        let mut worst = 0.0f64;
        for _ in 0..opts.instances {
            let inst = build(&mut rng);
            let e = instance_error(&inst, negate)?;
            // NaN must register as a failure.
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
        }
        checks.push(CheckResult { name, instances: opts.instances, worst });
    }
    Ok(GradcheckReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut names: Vec<&str> = CHECKS.iter().map(|c| c.0).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), CHECKS.len());
    }

    #[test]
    fn short_run_passes_and_injection_fails() {
        let r = run_gradcheck(&GradcheckOptions { instances: 5, seed: 1, inject_sign_bug: None }).unwrap();
        assert!(r.passed(), "{:?}", r.failures());
        let bad = run_gradcheck(&GradcheckOptions { instances: 2, seed: 1, inject_sign_bug: Some("relu".into()) }).unwrap();
        assert_eq!(bad.failures().iter().map(|c| c.name).collect::<Vec<_>>(), vec!["relu"]);
    }
}

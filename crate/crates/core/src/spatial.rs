//! Spatial pretraining: a teacher pseudo-labels weakly augmented unlabeled
//! features, a student learns from them on the strong view, and the teacher
//! is rewarded or penalized by how well the student's update aligns with the
//! student's gradient on a class-balanced labeled batch.
//!
//! Each [`spatial_step`] runs five phases in a fixed order:
//!
//! 1. [`draw_step_batch`]: balanced labeled batch, unlabeled batch, both views.
//! 2. [`pseudo_label`] with the teacher on the weak view.
//! 3. [`student_phase`]: one student SGD step on [`loss_u`] (teacher untouched).
//! 4. [`feedback_phase`]: labeled gradient at the updated student, dotted with
//!    the gradient used in phase 3.
//! 5. [`teacher_phase`]: one teacher SGD step on `loss_s + loss_c + loss_f`
//!    (student untouched).

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_dot, sgd_step, Bound, Gradient, ParamSet, SgdState, Tape, Targets, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{self, argmax, NetworkConfig};
use crate::seed::Stream;
use crate::synthdata::{smp_balanced, strong_augment, weak_augment, AugmentConfig, LabeledSample, UnlabeledSample};
use crate::table::{self, fmt_f64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialHyper {
    /// Student base learning rate.
    pub eta_s: f64,
    /// Teacher base learning rate.
    pub eta_t: f64,
    pub min_lr: f64,
    pub momentum: f64,
    /// Labeled samples per class in each balanced batch.
    pub n_per_class: usize,
    /// Unlabeled samples per step.
    pub unlabeled_batch: usize,
    pub total_steps: usize,
    /// Pseudo-labels whose teacher confidence falls below this are dropped
    /// from the student loss. `None` keeps every pseudo-label.
    pub confidence_threshold: Option<f64>,
    /// Save checkpoints every this many steps; 0 disables intermediate saves.
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
    /// Seeds batch draws and augmentation.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SpatialHyper {
    fn default() -> Self {
        SpatialHyper {
            eta_s: 3e-2,
            eta_t: 1e-2,
            min_lr: 0.0,
            momentum: 0.9,
            n_per_class: 8,
            unlabeled_batch: 32,
            total_steps: 2000,
            confidence_threshold: None,
            checkpoint_every: 0,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl SpatialHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_s > 0.0 && self.eta_t > 0.0) {
            return Err(Error::Config("spatial.eta_s and spatial.eta_t must be > 0".into()));
        }
        if self.n_per_class < 1 || self.unlabeled_batch < 1 {
            return Err(Error::Config("spatial.n_per_class and spatial.unlabeled_batch must be >= 1".into()));
        }
        if let Some(t) = self.confidence_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("spatial.confidence_threshold {} outside [0, 1]", t)));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SpatialHyper { seed, ..self.clone() }
    }
}

/// Per-step scalars. `l_teacher_total = l_s + l_c + l_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub step: usize,
    pub l_u: f64,
    pub l_s: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub l_teacher_total: f64,
    pub f: f64,
    pub lr_s: f64,
    pub lr_t: f64,
}

pub struct SpatialData<'a> {
    pub labeled: &'a [LabeledSample],
    pub unlabeled: &'a [UnlabeledSample],
    pub num_classes: usize,
}

pub struct SpatialState {
    pub teacher: ParamSet,
    pub student: ParamSet,
    pub teacher_opt: SgdState,
    pub student_opt: SgdState,
    pub rng: ChaCha8Rng,
    pub step: usize,
}

impl SpatialState {
    pub fn new(hyper: &SpatialHyper, teacher: ParamSet, student: ParamSet) -> Result<Self> {
        hyper.validate()?;
        if !teacher.same_structure(&student) {
            return Err(Error::StructureMismatch("teacher and student must share one architecture".into()));
        }
        Ok(SpatialState {
            teacher,
            student,
            teacher_opt: SgdState::new(hyper.eta_t, hyper.min_lr.min(hyper.eta_t), hyper.total_steps, hyper.momentum)?,
            student_opt: SgdState::new(hyper.eta_s, hyper.min_lr.min(hyper.eta_s), hyper.total_steps, hyper.momentum)?,
            rng: ChaCha8Rng::seed_from_u64(hyper.seed),
            step: 0,
        })
    }

    /// Teacher and student initialized from independent sub-seeds of `master`.
    pub fn init(hyper: &SpatialHyper, network: &NetworkConfig, master: u64) -> Result<Self> {
        let teacher = nets::init_network(&network.with_seed(Stream::Teacher.seed(master)))?;
        let student = nets::init_network(&network.with_seed(Stream::Student.seed(master)))?;
        SpatialState::new(hyper, teacher, student)
    }
}

fn rows_tensor<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Result<Tensor> {
    let rows: Vec<&Vec<f64>> = rows.collect();
    Tensor::from_rows(&rows)
}

fn labeled_tensors(batch: &[LabeledSample]) -> Result<(Tensor, Vec<usize>)> {
    Ok((rows_tensor(batch.iter().map(|s| &s.x))?, batch.iter().map(|s| s.y).collect()))
}

/// Scalar value and parameter gradient of a loss recorded by `build`.
fn value_and_grad(params: &ParamSet, build: impl FnOnce(&mut Tape, &Bound) -> Result<Var>) -> Result<(f64, Gradient)> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = build(&mut tape, &bound)?;
    Ok((tape.value(loss).item()?, tape.backward(loss)?))
}

fn value_of(params: &ParamSet, build: impl FnOnce(&mut Tape, &Bound) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = build(&mut tape, &bound)?;
    tape.value(loss).item()
}

// ---- loss graphs ----

/// Student objective on the strong view; `weights` masks pseudo-labels.
pub fn student_loss_graph(
    tape: &mut Tape,
    bound: &Bound,
    x_strong: Var,
    pseudo: &[usize],
    weights: Option<Vec<f64>>,
) -> Result<Var> {
    let z = nets::logits(tape, bound, x_strong)?;
    tape.cross_entropy(z, Targets::Indices(pseudo.to_vec()), weights)
}

/// Supervised cross-entropy on labeled features.
pub fn supervised_loss_graph(tape: &mut Tape, bound: &Bound, x: Var, y: &[usize]) -> Result<Var> {
    let z = nets::logits(tape, bound, x)?;
    tape.cross_entropy(z, Targets::Indices(y.to_vec()), None)
}

/// Cross-entropy from the teacher's (detached) weak-view distribution to its
/// strong-view prediction, given the already recorded weak-view logits.
fn consistency_from_logits(tape: &mut Tape, bound: &Bound, weak_logits: Var, x_strong: Var) -> Result<Var> {
    let p = tape.softmax(weak_logits)?;
    let target = tape.value(p).clone();
    let z_strong = nets::logits(tape, bound, x_strong)?;
    tape.cross_entropy(z_strong, Targets::Probs(target), None)
}

pub fn consistency_loss_graph(tape: &mut Tape, bound: &Bound, x_weak: Var, x_strong: Var) -> Result<Var> {
    let zw = nets::logits(tape, bound, x_weak)?;
    consistency_from_logits(tape, bound, zw, x_strong)
}

/// `f · CE(pseudo, T(x))` with `f` a constant.
pub fn feedback_loss_graph(tape: &mut Tape, bound: &Bound, x: Var, pseudo: &[usize], f: f64) -> Result<Var> {
    let z = nets::logits(tape, bound, x)?;
    let ce = tape.cross_entropy(z, Targets::Indices(pseudo.to_vec()), None)?;
    Ok(tape.scale(ce, f))
}

/// Handles of the teacher objective's terms on one tape.
#[derive(Clone, Copy, Debug)]
pub struct TeacherTerms {
    pub l_s: Var,
    pub l_c: Var,
    pub l_f: Var,
    pub total: Var,
}

/// Records `loss_s(x_b, y_b) + loss_c(x_weak, x_strong) + f · CE(pseudo, T(x_weak))`.
#[allow(clippy::too_many_arguments)]
pub fn teacher_loss_graph(
    tape: &mut Tape,
    bound: &Bound,
    x_balanced: Var,
    y_balanced: &[usize],
    x_weak: Var,
    x_strong: Var,
    pseudo: &[usize],
    f: f64,
) -> Result<TeacherTerms> {
    let l_s = supervised_loss_graph(tape, bound, x_balanced, y_balanced)?;
    let zw = nets::logits(tape, bound, x_weak)?;
    let l_c = consistency_from_logits(tape, bound, zw, x_strong)?;
    let ce_f = tape.cross_entropy(zw, Targets::Indices(pseudo.to_vec()), None)?;
    let l_f = tape.scale(ce_f, f);
    let partial = tape.add(l_s, l_c)?;
    let total = tape.add(partial, l_f)?;
    Ok(TeacherTerms { l_s, l_c, l_f, total })
}

// ---- value-level losses ----

/// Hard pseudo-labels: the teacher's argmax on each row, ties to the lowest class.
pub fn pseudo_label(teacher: &ParamSet, x_weak: &Tensor) -> Result<Vec<usize>> {
    Ok(nets::predict_logits(teacher, x_weak)?.rows().map(argmax).collect())
}

/// Per-row weights for the student loss: 1 when the teacher's top
/// probability reaches `threshold`, else 0.
pub fn confidence_weights(teacher: &ParamSet, x_weak: &Tensor, threshold: f64) -> Result<Vec<f64>> {
    let z = nets::predict_logits(teacher, x_weak)?;
    Ok(z.rows()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            if 1.0 / s >= threshold {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

pub fn loss_u(student: &ParamSet, x_strong: &Tensor, pseudo: &[usize]) -> Result<f64> {
    value_of(student, |t, b| {
        let x = t.constant(x_strong.clone());
        student_loss_graph(t, b, x, pseudo, None)
    })
}

pub fn loss_s(teacher: &ParamSet, batch: &[LabeledSample]) -> Result<f64> {
    let (x, y) = labeled_tensors(batch)?;
    value_of(teacher, |t, b| {
        let x = t.constant(x);
        supervised_loss_graph(t, b, x, &y)
    })
}

pub fn loss_c(teacher: &ParamSet, x_weak: &Tensor, x_strong: &Tensor) -> Result<f64> {
    value_of(teacher, |t, b| {
        let w = t.constant(x_weak.clone());
        let s = t.constant(x_strong.clone());
        consistency_loss_graph(t, b, w, s)
    })
}

pub fn loss_f(teacher: &ParamSet, x: &Tensor, pseudo: &[usize], f: f64) -> Result<f64> {
    value_of(teacher, |t, b| {
        let x = t.constant(x.clone());
        feedback_loss_graph(t, b, x, pseudo, f)
    })
}

/// `eta_s · ⟨g_new, g_old⟩`. Positive when the pseudo-labeled update moved the
/// student along its labeled-data descent direction.
pub fn feedback_coefficient(g_new: &Gradient, g_old: &Gradient, eta_s: f64) -> Result<f64> {
    Ok(eta_s * grad_dot(g_new, g_old)?)
}

// ---- step phases ----

pub struct StepBatch {
    pub balanced: Vec<LabeledSample>,
    pub weak: Tensor,
    pub strong: Tensor,
}

pub fn draw_step_batch(rng: &mut ChaCha8Rng, data: &SpatialData, hyper: &SpatialHyper) -> Result<StepBatch> {
    if data.unlabeled.is_empty() {
        return Err(Error::Empty("unlabeled pool"));
    }
    if data.labeled.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    let balanced = smp_balanced(data.labeled, data.num_classes, hyper.n_per_class, rng)?;
    let picks: Vec<&UnlabeledSample> = (0..hyper.unlabeled_batch)
        .map(|_| data.unlabeled.choose(rng).expect("pool is non-empty"))
        .collect();
    let mut weak = Vec::with_capacity(picks.len());
    let mut strong = Vec::with_capacity(picks.len());
    for s in picks {
        weak.push(weak_augment(&s.x, &hyper.augment, rng));
        strong.push(strong_augment(&s.x, &hyper.augment, rng));
    }
    Ok(StepBatch { balanced, weak: Tensor::from_rows(&weak)?, strong: Tensor::from_rows(&strong)? })
}

pub struct StudentUpdate {
    pub pseudo: Vec<usize>,
    pub l_u: f64,
    /// Gradient the student step applied: the old student's pseudo-label gradient.
    pub g_old: Gradient,
    pub lr_s: f64,
}

/// Pseudo-labels the weak view and takes one student step on the strong
/// view. Reads the teacher, writes only the student.
pub fn student_phase(state: &mut SpatialState, batch: &StepBatch, hyper: &SpatialHyper) -> Result<StudentUpdate> {
    let pseudo = pseudo_label(&state.teacher, &batch.weak)?;
    let weights = match hyper.confidence_threshold {
        Some(th) => Some(confidence_weights(&state.teacher, &batch.weak, th)?),
        None => None,
    };
    let (l_u, g_old) = value_and_grad(&state.student, |t, b| {
        let x = t.constant(batch.strong.clone());
        student_loss_graph(t, b, x, &pseudo, weights)
    })?;
    let lr_s = state.student_opt.current_lr();
    sgd_step(&mut state.student, &g_old, &mut state.student_opt)?;
    Ok(StudentUpdate { pseudo, l_u, g_old, lr_s })
}

/// Gradient of the balanced labeled loss at the current student.
pub fn labeled_gradient(student: &ParamSet, batch: &[LabeledSample]) -> Result<(f64, Gradient)> {
    let (x, y) = labeled_tensors(batch)?;
    value_and_grad(student, |t, b| {
        let x = t.constant(x);
        supervised_loss_graph(t, b, x, &y)
    })
}

/// The feedback coefficient for the update just taken.
pub fn feedback_phase(state: &SpatialState, batch: &StepBatch, update: &StudentUpdate) -> Result<f64> {
    let (_, g_new) = labeled_gradient(&state.student, &batch.balanced)?;
    feedback_coefficient(&g_new, &update.g_old, update.lr_s)
}

pub struct TeacherUpdate {
    pub l_s: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub l_total: f64,
    pub lr_t: f64,
}

/// One teacher step on the full teacher objective with `f` fixed.
pub fn teacher_phase(state: &mut SpatialState, batch: &StepBatch, pseudo: &[usize], f: f64) -> Result<TeacherUpdate> {
    let (xb, yb) = labeled_tensors(&batch.balanced)?;
    let mut tape = Tape::new();
    let bound = tape.bind(&state.teacher);
    let xb = tape.constant(xb);
    let xw = tape.constant(batch.weak.clone());
    let xs = tape.constant(batch.strong.clone());
    let terms = teacher_loss_graph(&mut tape, &bound, xb, &yb, xw, xs, pseudo, f)?;
    let grad = tape.backward(terms.total)?;
    let lr_t = state.teacher_opt.current_lr();
    sgd_step(&mut state.teacher, &grad, &mut state.teacher_opt)?;
    Ok(TeacherUpdate {
        l_s: tape.value(terms.l_s).item()?,
        l_c: tape.value(terms.l_c).item()?,
        l_f: tape.value(terms.l_f).item()?,
        l_total: tape.value(terms.total).item()?,
        lr_t,
    })
}

/// Exactly one student update followed by one teacher update.
pub fn spatial_step(state: &mut SpatialState, data: &SpatialData, hyper: &SpatialHyper) -> Result<LossBreakdown> {
    let batch = draw_step_batch(&mut state.rng, data, hyper)?;
    let student = student_phase(state, &batch, hyper)?;
    let f = feedback_phase(state, &batch, &student)?;
    if !f.is_finite() {
        return Err(Error::Invariant(format!("non-finite feedback coefficient at step {}", state.step)));
    }
    let teacher = teacher_phase(state, &batch, &student.pseudo, f)?;
    let out = LossBreakdown {
        step: state.step,
        l_u: student.l_u,
        l_s: teacher.l_s,
        l_c: teacher.l_c,
        l_f: teacher.l_f,
        l_teacher_total: teacher.l_total,
        f,
        lr_s: student.lr_s,
        lr_t: teacher.lr_t,
    };
    state.step += 1;
    Ok(out)
}

pub struct SpatialRun {
    pub teacher: ParamSet,
    pub student: ParamSet,
    pub log: Vec<LossBreakdown>,
}

/// Runs `hyper.total_steps` steps from `state`. `on_checkpoint` is called
/// after every `hyper.checkpoint_every`-th step.
pub fn train_spatial(
    mut state: SpatialState,
    data: &SpatialData,
    hyper: &SpatialHyper,
    mut on_checkpoint: impl FnMut(&SpatialState) -> Result<()>,
) -> Result<SpatialRun> {
    let mut log = Vec::with_capacity(hyper.total_steps);
    for _ in 0..hyper.total_steps {
        log.push(spatial_step(&mut state, data, hyper)?);
        if hyper.checkpoint_every > 0 && state.step.is_multiple_of(hyper.checkpoint_every) {
            on_checkpoint(&state)?;
        }
    }
    Ok(SpatialRun { teacher: state.teacher, student: state.student, log })
}

/// Supervised reference: plain cross-entropy on uniform minibatches of the
/// (imbalanced) labeled set, same architecture, student learning rate, step
/// count and batch size as the balanced batches.
pub fn train_supervised(
    network: &NetworkConfig,
    labeled: &[LabeledSample],
    hyper: &SpatialHyper,
    master: u64,
) -> Result<ParamSet> {
    hyper.validate()?;
    if labeled.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    let mut params = nets::init_network(&network.with_seed(Stream::Student.seed(master)))?;
    let mut opt = SgdState::new(hyper.eta_s, hyper.min_lr.min(hyper.eta_s), hyper.total_steps, hyper.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(Stream::Baseline.seed(master));
    let batch_size = hyper.n_per_class * network.num_classes;
    for _ in 0..hyper.total_steps {
        let batch: Vec<LabeledSample> = (0..batch_size)
            .map(|_| labeled.choose(&mut rng).expect("non-empty").clone())
            .collect();
        let (_, g) = labeled_gradient(&params, &batch)?;
        sgd_step(&mut params, &g, &mut opt)?;
    }
    Ok(params)
}

pub const LOG_HEADER: [&str; 9] = ["step", "l_u", "l_s", "l_c", "l_f", "f", "lr_s", "lr_t", "l_total"];

pub fn write_log(path: &Path, log: &[LossBreakdown]) -> Result<()> {
    let header = table::header(&LOG_HEADER);
    table::write(
        path,
        &header,
        log.iter().map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend([r.l_u, r.l_s, r.l_c, r.l_f, r.f, r.lr_s, r.lr_t, r.l_teacher_total].map(fmt_f64));
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_grad, forward_graph, relative_error};
    use crate::synthdata::{gen_labeled, gen_unlabeled, SynthConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn grad1(name: &str, v: Vec<f64>) -> Gradient {
        let mut g = Gradient::default();
        g.insert(name, Tensor::vector(v));
        g
    }

    fn params(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamSet {
        let mut p = ParamSet::new();
        for (n, s, d) in entries {
            p.insert(*n, Tensor::new(s.clone(), d.clone()).unwrap());
        }
        p
    }

    /// A linear "network" whose logits equal its input times the identity.
    fn identity_head(c: usize, scale: f64) -> ParamSet {
        let mut w = vec![0.0; c * c];
        for i in 0..c {
            w[i * c + i] = scale;
        }
        params(&[("head.w", vec![c, c], w)])
    }

    #[test]
    fn pseudo_label_dominant_and_ties() {
        let t = identity_head(3, 1.0);
        let x = Tensor::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 7.0]]).unwrap();
        assert_eq!(pseudo_label(&t, &x).unwrap(), vec![0, 0, 2]);
    }

    proptest! {
        #[test]
        fn pseudo_label_matches_brute_force(rows in prop::collection::vec(prop::collection::vec(-3i32..3, 4), 1..20)) {
            let t = identity_head(4, 1.0);
            let data: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let got = pseudo_label(&t, &Tensor::from_rows(&data).unwrap()).unwrap();
            for (r, g) in data.iter().zip(got) {
                let max = r.iter().copied().fold(f64::MIN, f64::max);
                let first = r.iter().position(|&v| v == max).unwrap();
                prop_assert_eq!(g, first);
            }
        }
    }

    #[test]
    fn loss_u_closed_forms() {
        let s = identity_head(4, 1.0);
        let v = loss_u(&s, &Tensor::zeros(&[3, 4]), &[0, 1, 3]).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);
        let x = Tensor::from_rows(&[vec![10.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 10.0, 0.0]]).unwrap();
        let v = loss_u(&s, &x, &[0, 2]).unwrap();
        assert!((v - (1.0 + 3.0 * (-10f64).exp()).ln()).abs() < 1e-15);
        let two = identity_head(2, 1.0);
        let v2 = loss_u(&two, &Tensor::from_rows(&[vec![10.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!(v2 <= 5e-5);
        let direct = crate::autodiff::cross_entropy(&x, Targets::Indices(vec![0, 2])).unwrap();
        assert_eq!(v, direct);
    }

    #[test]
    fn loss_s_closed_forms() {
        let t = identity_head(2, 1.0);
        let batch = vec![LabeledSample { x: vec![1.0, 0.0], y: 0 }];
        assert!((loss_s(&t, &batch).unwrap() - 0.3133).abs() < 1e-4);
        let batch = vec![LabeledSample { x: vec![0.0, 0.0], y: 1 }, LabeledSample { x: vec![0.0, 0.0], y: 0 }];
        assert!((loss_s(&t, &batch).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_c_null_augmentation_is_entropy() {
        let t = identity_head(3, 1.0);
        let x = Tensor::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let z = x.row(0);
        let m = z.iter().copied().fold(f64::MIN, f64::max);
        let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let p: Vec<f64> = z.iter().map(|v| (v - m).exp() / s).collect();
        let h: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
        assert!((loss_c(&t, &x, &x).unwrap() - h).abs() < 1e-12);
        let zero = Tensor::zeros(&[2, 3]);
        assert!((loss_c(&t, &zero, &zero).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_c_gradient_detaches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = NetworkConfig { input_dim: 3, hidden_dims: vec![4], num_classes: 3, use_bias: true, seed: 5 };
        let p = nets::init_network(&cfg).unwrap();
        let xw: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let xs: Vec<Vec<f64>> = xw.iter().map(|r| r.iter().map(|v| v * 1.3 - 0.1).collect()).collect();
        let xw = Tensor::from_rows(&xw).unwrap();
        let xs = Tensor::from_rows(&xs).unwrap();
        // With the teacher's weak-view distribution frozen as an input
        // constant, finite differences see only the prediction branch.
        let target = {
            let z = nets::predict_logits(&p, &xw).unwrap();
            let mut t = Tape::new();
            let zv = t.constant(z);
            let sm = t.softmax(zv).unwrap();
            t.value(sm).clone()
        };
        let frozen = |t: &mut Tape, b: &Bound, x: Var| {
            let z = nets::logits(t, b, x)?;
            t.cross_entropy(z, Targets::Probs(target.clone()), None)
        };
        let fd = finite_diff_grad(&p, &xs, frozen, 1e-5).unwrap();
        let analytic = forward_graph(&p, &xs, |t: &mut Tape, b: &Bound, s: Var| {
            let w = t.constant(xw.clone());
            consistency_loss_graph(t, b, w, s)
        })
        .unwrap()
        .backward()
        .unwrap();
        assert!(relative_error(&analytic, &fd, 1e-8).unwrap() < 1e-6);
    }

    #[test]
    fn feedback_coefficient_cases() {
        let g = grad1("w", vec![1.0, 2.0]);
        let h = grad1("w", vec![3.0, -1.0]);
        assert!((feedback_coefficient(&g, &h, 0.1).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(feedback_coefficient(&g, &grad1("w", vec![0.0, 0.0]), 1.0).unwrap(), 0.0);
        assert_eq!(feedback_coefficient(&g, &g, 1.0).unwrap(), 5.0);
        assert_eq!(feedback_coefficient(&g, &g.scaled(-1.0), 1.0).unwrap(), -5.0);
        assert_eq!(feedback_coefficient(&g, &grad1("w", vec![-2.0, 1.0]), 1.0).unwrap(), 0.0);
        assert!(feedback_coefficient(&g, &grad1("v", vec![1.0, 2.0]), 1.0).is_err());
    }

    #[test]
    fn loss_f_linear_in_f() {
        let cfg = NetworkConfig { input_dim: 3, hidden_dims: vec![4], num_classes: 3, use_bias: true, seed: 2 };
        let p = nets::init_network(&cfg).unwrap();
        let x = Tensor::from_rows(&[vec![0.5, -1.0, 0.2], vec![1.5, 0.3, -0.7]]).unwrap();
        let y = [2usize, 0];
        let grad = |f: f64| {
            forward_graph(&p, &x, |t: &mut Tape, b: &Bound, x: Var| feedback_loss_graph(t, b, x, &y, f))
                .unwrap()
                .backward()
                .unwrap()
        };
        assert_eq!(loss_f(&p, &x, &y, 0.0).unwrap(), 0.0);
        assert_eq!(grad(0.0).sq_norm(), 0.0);
        assert_eq!(grad(-1.0), grad(1.0).scaled(-1.0));
        let bare = forward_graph(&p, &x, |t: &mut Tape, b: &Bound, x: Var| {
            let z = nets::logits(t, b, x)?;
            t.cross_entropy(z, Targets::Indices(y.to_vec()), None)
        })
        .unwrap()
        .backward()
        .unwrap();
        let f = 0.37;
        assert!(relative_error(&grad(f), &bare.scaled(f), 1e-12).unwrap() < 1e-14);
    }

    fn small_problem(shift: f64) -> (SynthConfig, Vec<LabeledSample>, Vec<UnlabeledSample>) {
        let mut cfg = SynthConfig {
            num_classes: 3,
            feature_dim: 4,
            labeled_count: 60,
            unlabeled_count: 60,
            seed: 21,
            prototype_seed: 8,
            prototype_scale: 1.5,
            ..Default::default()
        };
        cfg.domain_shift.magnitude = shift;
        cfg.domain_shift.cov_scale = 1.0;
        let lab = gen_labeled(&cfg).unwrap();
        let unl = gen_unlabeled(&cfg).unwrap().samples;
        (cfg, lab, unl)
    }

    fn small_net() -> NetworkConfig {
        NetworkConfig { input_dim: 4, hidden_dims: vec![6], num_classes: 3, use_bias: true, seed: 0 }
    }

    #[test]
    fn teacher_untouched_by_student_phase_and_vice_versa() {
        let (_, lab, unl) = small_problem(1.0);
        let hyper = SpatialHyper { n_per_class: 2, unlabeled_batch: 5, total_steps: 3, ..Default::default() };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let mut st = SpatialState::init(&hyper, &small_net(), 4).unwrap();
        let batch = draw_step_batch(&mut st.rng, &data, &hyper).unwrap();
        let teacher_before = st.teacher.clone();
        let student_before = st.student.clone();
        let up = student_phase(&mut st, &batch, &hyper).unwrap();
        assert_eq!(st.teacher, teacher_before);
        assert_ne!(st.student, student_before);
        let f = feedback_phase(&st, &batch, &up).unwrap();
        let student_mid = st.student.clone();
        teacher_phase(&mut st, &batch, &up.pseudo, f).unwrap();
        assert_eq!(st.student, student_mid);
        assert_ne!(st.teacher, teacher_before);
    }

    #[test]
    fn student_update_ignores_labeled_features() {
        let (_, lab, unl) = small_problem(1.0);
        let hyper = SpatialHyper { n_per_class: 2, unlabeled_batch: 5, total_steps: 3, ..Default::default() };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let base = SpatialState::init(&hyper, &small_net(), 4).unwrap();
        let mut a = SpatialState::new(&hyper, base.teacher.clone(), base.student.clone()).unwrap();
        let mut b = SpatialState::new(&hyper, base.teacher.clone(), base.student.clone()).unwrap();
        let batch = draw_step_batch(&mut a.rng, &data, &hyper).unwrap();
        let zeroed = StepBatch {
            balanced: batch.balanced.iter().map(|s| LabeledSample { x: vec![0.0; s.x.len()], y: s.y }).collect(),
            weak: batch.weak.clone(),
            strong: batch.strong.clone(),
        };
        let ua = student_phase(&mut a, &batch, &hyper).unwrap();
        let ub = student_phase(&mut b, &zeroed, &hyper).unwrap();
        assert_eq!(ua.pseudo, ub.pseudo);
        assert_eq!(a.student, b.student);
    }

    #[test]
    fn teacher_total_decomposes_every_step() {
        let (_, lab, unl) = small_problem(1.0);
        let hyper = SpatialHyper { n_per_class: 2, unlabeled_batch: 6, total_steps: 25, ..Default::default() };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let st = SpatialState::init(&hyper, &small_net(), 1).unwrap();
        let run = train_spatial(st, &data, &hyper, |_| Ok(())).unwrap();
        assert_eq!(run.log.len(), 25);
        for (i, r) in run.log.iter().enumerate() {
            assert_eq!(r.step, i);
            assert!(r.l_u >= 0.0 && r.l_s >= 0.0 && r.f.is_finite());
            assert!((r.l_teacher_total - (r.l_s + r.l_c + r.l_f)).abs() <= 1e-12);
        }
        assert_eq!(run.log[0].lr_s, 3e-2);
        assert_eq!(run.log[0].lr_t, 1e-2);
        assert!(run.log[24].lr_s < run.log[1].lr_s);
    }

    #[test]
    fn zero_steps_returns_initial_parameters() {
        let (_, lab, unl) = small_problem(1.0);
        let hyper = SpatialHyper { total_steps: 0, ..Default::default() };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let st = SpatialState::init(&hyper, &small_net(), 1).unwrap();
        let (t0, s0) = (st.teacher.clone(), st.student.clone());
        let run = train_spatial(st, &data, &hyper, |_| Ok(())).unwrap();
        assert_eq!(run.teacher, t0);
        assert_eq!(run.student, s0);
        assert!(run.log.is_empty());
    }

    #[test]
    fn training_is_reproducible_and_checkpoints_fire() {
        let (_, lab, unl) = small_problem(1.0);
        let hyper = SpatialHyper {
            n_per_class: 2,
            unlabeled_batch: 4,
            total_steps: 12,
            checkpoint_every: 5,
            seed: 77,
            ..Default::default()
        };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let run = |collect: &mut Vec<usize>| {
            let st = SpatialState::init(&hyper, &small_net(), 9).unwrap();
            train_spatial(st, &data, &hyper, |s| {
                collect.push(s.step);
                Ok(())
            })
            .unwrap()
        };
        let mut steps = Vec::new();
        let a = run(&mut steps);
        let b = run(&mut Vec::new());
        assert_eq!(steps, vec![5, 10]);
        use crate::autodiff::checkpoint::encode;
        assert_eq!(encode(&a.student), encode(&b.student));
        assert_eq!(encode(&a.teacher), encode(&b.teacher));
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn feedback_mostly_positive_on_aligned_tasks() {
        // Pseudo-labeled data drawn from the labeled distribution itself: the
        // student's pseudo-label step should usually help on labeled data.
        let (_, lab, _) = small_problem(0.0);
        let unl: Vec<UnlabeledSample> = lab.iter().map(|s| UnlabeledSample { x: s.x.clone() }).collect();
        let hyper = SpatialHyper {
            n_per_class: 4,
            unlabeled_batch: 16,
            total_steps: 200,
            augment: AugmentConfig::identity(),
            seed: 3,
            ..Default::default()
        };
        let data = SpatialData { labeled: &lab, unlabeled: &unl, num_classes: 3 };
        let st = SpatialState::init(&hyper, &small_net(), 5).unwrap();
        let run = train_spatial(st, &data, &hyper, |_| Ok(())).unwrap();
        let positive = run.log.iter().filter(|r| r.f > 0.0).count();
        assert!(positive > 100, "only {} of 200 positive", positive);
    }

    #[test]
    fn confidence_threshold_hook() {
        let t = identity_head(2, 1.0);
        let x = Tensor::from_rows(&[vec![5.0, 0.0], vec![0.1, 0.0]]).unwrap();
        assert_eq!(confidence_weights(&t, &x, 0.9).unwrap(), vec![1.0, 0.0]);
        assert_eq!(confidence_weights(&t, &x, 0.0).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn log_file_has_expected_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let r = LossBreakdown { step: 0, l_u: 1.0, l_s: 0.5, l_c: 0.25, l_f: 0.125, l_teacher_total: 0.875, f: 0.1, lr_s: 1e-3, lr_t: 1e-2 };
        write_log(&p, &[r]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,l_u,l_s,l_c,l_f,f,lr_s,lr_t,l_total");
        assert_eq!(lines.next().unwrap(), "0,1,0.5,0.25,0.125,0.1,0.001,0.01,0.875");
    }
}

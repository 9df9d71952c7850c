//! Scene classification loss and the combined pose objective.
//!
//! Per sample:
//!
//! ```text
//! L = |p - p̂|₁·e^(-α) + α + |log q - log q̂|₁·e^(-β) + β + L_cls
//! L_cls = -log softmax(z)[k₀]
//! ```
//!
//! `q` is the head's raw 4-vector after normalization and hemisphere
//! canonicalization. `α` and `β` are learnable scalars living in the model's
//! parameter store. A batch reduces to the mean over its samples.

use thiserror::Error;

use crate::geometry::{self, GeometryError, Pose, Quaternion};
use crate::model::{ModelError, SampleGraph, Session};
use crate::numerics::{NumericsError, Tape, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("scene index {index} out of range for {scenes} logits")]
    SceneIndex { index: usize, scenes: usize },
    #[error("sample {sample}: predicted quaternion is degenerate (norm {norm:e})")]
    DegenerateQuaternion { sample: usize, norm: f64 },
    #[error("target quaternion is not a canonical unit quaternion")]
    BadTarget,
    #[error("empty batch")]
    EmptyBatch,
    #[error("{targets} targets for {outputs} outputs")]
    BatchLength { outputs: usize, targets: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ground truth for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseTarget {
    pub p: [f64; 3],
    pub q: Quaternion,
    pub scene: usize,
}

impl PoseTarget {
    pub fn new(pose: Pose, scene: usize) -> Self {
        Self {
            p: pose.p,
            q: pose.q,
            scene,
        }
    }
}

/// Tape handles of the individual loss terms of one sample (or of a batch mean).
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub cls: Var,
    pub position_l1: Var,
    pub rotation_l1: Var,
}

/// `-log softmax(z)[k0]` via log-sum-exp.
pub fn classification_loss(tape: &mut Tape, logits: Var, k0: usize) -> Result<Var, LossError> {
    let k = tape.value(logits).len();
    if k0 >= k {
        return Err(LossError::SceneIndex { index: k0, scenes: k });
    }
    Ok(tape.cross_entropy(logits, k0)?)
}

/// Combined objective for one sample. `pred` is the routed head's `1×7` output,
/// `alpha`/`beta` the loss-weight leaves.
pub fn pose_loss(
    tape: &mut Tape,
    pred: Var,
    target: &PoseTarget,
    alpha: Var,
    beta: Var,
    logits: Var,
) -> Result<LossTerms, LossError> {
    if !target.q.is_unit() || !target.q.is_canonical() {
        return Err(LossError::BadTarget);
    }
    let target_log = geometry::quat_log(target.q).map_err(|_| LossError::BadTarget)?;

    let p = tape.slice_cols(pred, 0, 3)?;
    let q_raw = tape.slice_cols(pred, 3, 7)?;

    let p_hat = tape.constant(Tensor::new(vec![1, 3], target.p.to_vec())?);
    let dp = tape.sub(p, p_hat)?;
    let dp = tape.abs(dp)?;
    let position_l1 = tape.sum(dp)?;

    let raw: [f64; 4] = tape.value(q_raw).data().try_into().expect("4 values");
    let (log_q, jac) = geometry::raw_quat_log_with_jacobian(raw).map_err(|e| match e {
        GeometryError::Degenerate(norm) => LossError::DegenerateQuaternion { sample: 0, norm },
        _ => LossError::BadTarget,
    })?;
    let log_q = tape.linearized(
        q_raw,
        Tensor::new(vec![1, 3], log_q.to_vec())?,
        jac.iter().flatten().copied().collect(),
    )?;
    let log_q_hat = tape.constant(Tensor::new(vec![1, 3], target_log.0.to_vec())?);
    let dq = tape.sub(log_q, log_q_hat)?;
    let dq = tape.abs(dq)?;
    let rotation_l1 = tape.sum(dq)?;

    let weighted_p = weighted(tape, position_l1, alpha)?;
    let weighted_q = weighted(tape, rotation_l1, beta)?;
    let cls = classification_loss(tape, logits, target.scene)?;
    let total = tape.add(weighted_p, weighted_q)?;
    let total = tape.add(total, cls)?;
    Ok(LossTerms {
        total,
        cls,
        position_l1,
        rotation_l1,
    })
}

/// `residual · e^(-s) + s`.
fn weighted(tape: &mut Tape, residual: Var, s: Var) -> Result<Var, LossError> {
    let neg = tape.scale(s, -1.0)?;
    let w = tape.exp(neg)?;
    let term = tape.mul(residual, w)?;
    Ok(tape.add(term, s)?)
}

/// Arithmetic mean of one-element terms, summed in index order.
pub fn mean(tape: &mut Tape, terms: &[Var]) -> Result<Var, LossError> {
    let (first, rest) = terms.split_first().ok_or(LossError::EmptyBatch)?;
    let mut acc = *first;
    for t in rest {
        acc = tape.add(acc, *t)?;
    }
    Ok(tape.scale(acc, 1.0 / terms.len() as f64)?)
}

/// Mean objective over a batch of forward graphs, each scored through its routed head.
pub fn batch_loss(session: &mut Session, graphs: &[SampleGraph], targets: &[PoseTarget]) -> Result<LossTerms, LossError> {
    if graphs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    if graphs.len() != targets.len() {
        return Err(LossError::BatchLength {
            outputs: graphs.len(),
            targets: targets.len(),
        });
    }
    let layout = &session.model().layout;
    let (alpha_id, beta_id) = (layout.alpha, layout.beta);
    let alpha = session.param(alpha_id);
    let beta = session.param(beta_id);
    let mut per_sample = Vec::with_capacity(graphs.len());
    for (i, (g, t)) in graphs.iter().zip(targets).enumerate() {
        let terms = pose_loss(&mut session.tape, g.routed_head(), t, alpha, beta, g.logits).map_err(|e| match e {
            LossError::DegenerateQuaternion { norm, .. } => LossError::DegenerateQuaternion { sample: i, norm },
            other => other,
        })?;
        per_sample.push(terms);
    }
    let tape = &mut session.tape;
    let pick = |f: fn(&LossTerms) -> Var| per_sample.iter().map(f).collect::<Vec<_>>();
    Ok(LossTerms {
        total: mean(tape, &pick(|t| t.total))?,
        cls: mean(tape, &pick(|t| t.cls))?,
        position_l1: mean(tape, &pick(|t| t.position_l1))?,
        rotation_l1: mean(tape, &pick(|t| t.rotation_l1))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ParamId, Tensor};

    fn scalar_param(tape: &mut Tape, id: usize, v: f64) -> Var {
        tape.param(ParamId(id), &Tensor::full(&[1], v))
    }

    fn pred(tape: &mut Tape, p: [f64; 3], q: [f64; 4]) -> Var {
        let mut v = p.to_vec();
        v.extend_from_slice(&q);
        tape.param(ParamId(10), &Tensor::new(vec![1, 7], v).unwrap())
    }

    #[test]
    fn saturated_logits_give_near_zero_cls() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::vector(&[0.0, 30.0, 0.0]).unwrap());
        let l = classification_loss(&mut tape, z, 1).unwrap();
        assert!(tape.value(l).data()[0] < 1e-9);
        assert!(matches!(classification_loss(&mut tape, z, 3), Err(LossError::SceneIndex { .. })));
    }

    #[test]
    fn uniform_logits_over_seven_scenes() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::vector(&[0.25; 7]).unwrap());
        let l = classification_loss(&mut tape, z, 4).unwrap();
        assert!((tape.value(l).data()[0] - 7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn zero_residual_total_is_alpha_plus_beta() {
        let mut tape = Tape::new();
        let q = Quaternion::new(0.5, 0.5, -0.5, 0.5);
        let target = PoseTarget {
            p: [0.1, 0.2, 0.3],
            q,
            scene: 0,
        };
        let x = pred(&mut tape, target.p, q.to_array());
        let a = scalar_param(&mut tape, 0, -4.0);
        let b = scalar_param(&mut tape, 1, -2.0);
        let z = tape.constant(Tensor::vector(&[0.0]).unwrap());
        let terms = pose_loss(&mut tape, x, &target, a, b, z).unwrap();
        assert_eq!(tape.value(terms.total).data()[0], -6.0);
        let g = tape.backward(terms.total).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data()[0], 1.0);
        assert_eq!(g.get(ParamId(1)).unwrap().data()[0], 1.0);
    }

    #[test]
    fn unit_weights_sum_residuals() {
        let mut tape = Tape::new();
        let target = PoseTarget {
            p: [0.0; 3],
            q: Quaternion::IDENTITY,
            scene: 0,
        };
        let c = std::f64::consts::FRAC_PI_8;
        let x = pred(&mut tape, [1.0, -2.0, 0.5], [c.cos(), 0.0, c.sin(), 0.0]);
        let a = scalar_param(&mut tape, 0, 0.0);
        let b = scalar_param(&mut tape, 1, 0.0);
        let z = tape.constant(Tensor::vector(&[40.0, 0.0]).unwrap());
        let terms = pose_loss(&mut tape, x, &target, a, b, z).unwrap();
        let expected = 3.5 + c;
        assert!((tape.value(terms.total).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn antipodal_prediction_gives_same_loss() {
        let target = PoseTarget {
            p: [0.0; 3],
            q: Quaternion::new(0.6, 0.0, 0.8, 0.0),
            scene: 0,
        };
        let raw = [0.3, -0.2, 0.9, 0.1];
        let eval = |r: [f64; 4]| {
            let mut tape = Tape::new();
            let x = pred(&mut tape, [0.1, 0.0, 0.0], r);
            let a = scalar_param(&mut tape, 0, -1.0);
            let b = scalar_param(&mut tape, 1, -1.0);
            let z = tape.constant(Tensor::vector(&[0.0, 0.0]).unwrap());
            let t = pose_loss(&mut tape, x, &target, a, b, z).unwrap();
            tape.value(t.total).data()[0]
        };
        assert_eq!(eval(raw), eval(raw.map(|c| -c)));
    }

    #[test]
    fn degenerate_prediction_is_an_error() {
        let mut tape = Tape::new();
        let target = PoseTarget {
            p: [0.0; 3],
            q: Quaternion::IDENTITY,
            scene: 0,
        };
        let x = pred(&mut tape, [0.0; 3], [0.0; 4]);
        let a = scalar_param(&mut tape, 0, 0.0);
        let b = scalar_param(&mut tape, 1, 0.0);
        let z = tape.constant(Tensor::vector(&[0.0]).unwrap());
        assert!(matches!(
            pose_loss(&mut tape, x, &target, a, b, z),
            Err(LossError::DegenerateQuaternion { .. })
        ));
    }

    #[test]
    fn alpha_descends_to_log_residual() {
        // Frozen residual r: d/dα (r·e^(-α) + α) = 0 at α = ln r.
        let r = 0.05_f64;
        let mut alpha = -4.0;
        for _ in 0..5000 {
            let mut tape = Tape::new();
            let res = tape.constant(Tensor::full(&[1], r));
            let a = scalar_param(&mut tape, 0, alpha);
            let l = weighted(&mut tape, res, a).unwrap();
            let g = tape.backward(l).unwrap().get(ParamId(0)).unwrap().data()[0];
            alpha -= 0.05 * g;
        }
        assert!((alpha - r.ln()).abs() < 1e-9, "{alpha} vs {}", r.ln());
    }
}

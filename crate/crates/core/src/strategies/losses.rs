use crate::error::{Error, Result};
use crate::model::Feature;
use crate::scalar::Scalar;
use crate::vocab::PAD;

/// Probabilities are floored here before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Cross-entropy of teacher-forced distributions against their targets:
/// `−Σ log p(target[t+1])` over non-pad steps, averaged over the batch.
/// `preds[b][t]` is the distribution predicting `targets[b][t + 1]`.
pub fn loss_ce<T: Scalar>(preds: &[Vec<Vec<T>>], targets: &[Vec<usize>]) -> Result<T> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Contract(format!(
            "{} prediction sequences for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let floor = T::of(LOG_FLOOR);
    let mut total = T::zero();
    for (b, (dists, target)) in preds.iter().zip(targets).enumerate() {
        for (t, &tok) in target.iter().enumerate().skip(1) {
            if tok == PAD {
                continue;
            }
            let dist = dists
                .get(t - 1)
                .ok_or_else(|| Error::Contract(format!("sample {b}: no distribution for step {}", t - 1)))?;
            let p = *dist
                .get(tok)
                .ok_or_else(|| Error::Contract(format!("sample {b}: token {tok} outside distribution")))?;
            total -= p.max(floor).ln();
        }
    }
    Ok(total / T::of(preds.len() as f64))
}

/// `β · CE(pseudo)`; the pseudo-label term of the P objective.
pub fn loss_pseudo<T: Scalar>(preds: &[Vec<Vec<T>>], pseudo_targets: &[Vec<usize>], beta: T) -> Result<T> {
    if pseudo_targets.iter().any(Vec::is_empty) {
        return Err(Error::Contract("empty pseudo-label sequence".into()));
    }
    Ok(beta * loss_ce(preds, pseudo_targets)?)
}

/// `CE(ground truth) + β · CE(pseudo)`, each term from its own teacher-forced pass.
pub fn total_pseudo_loss<T: Scalar>(
    preds: &[Vec<Vec<T>>],
    targets: &[Vec<usize>],
    pseudo_preds: &[Vec<Vec<T>>],
    pseudo_targets: &[Vec<usize>],
    beta: T,
) -> Result<T> {
    Ok(loss_ce(preds, targets)? + loss_pseudo(pseudo_preds, pseudo_targets, beta)?)
}

/// `λ · ‖f_teacher − f_student‖²`, averaged over the batch.
pub fn loss_distill<T: Scalar>(teacher: &[Feature<T>], student: &[Feature<T>], lambda: T) -> Result<T> {
    if teacher.len() != student.len() || teacher.is_empty() {
        return Err(Error::Contract("teacher and student batches differ in size".into()));
    }
    let mut total = T::zero();
    for (t, s) in teacher.iter().zip(student) {
        if t.values.len() != s.values.len() {
            return Err(Error::Contract(format!(
                "feature dimensions differ: teacher {} vs student {}",
                t.values.len(),
                s.values.len()
            )));
        }
        total += t.values.iter().zip(&s.values).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    Ok(lambda * total / T::of(teacher.len() as f64))
}

/// `CE + λ · ‖f_teacher − f_student‖²`.
pub fn total_distill_loss<T: Scalar>(
    preds: &[Vec<Vec<T>>],
    targets: &[Vec<usize>],
    teacher: &[Feature<T>],
    student: &[Feature<T>],
    lambda: T,
) -> Result<T> {
    Ok(loss_ce(preds, targets)? + loss_distill(teacher, student, lambda)?)
}

/// Gradient of `scale · CE` w.r.t. each step's logits: `scale · (p − onehot)`;
/// pad targets contribute nothing.
pub fn ce_logit_grad<T: Scalar>(probs: &[Vec<T>], target: &[usize], scale: T) -> Vec<Vec<T>> {
    probs
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let tok = target[t + 1];
            if tok == PAD {
                return vec![T::zero(); p.len()];
            }
            let mut g: Vec<T> = p.iter().map(|&v| v * scale).collect();
            g[tok] -= scale;
            g
        })
        .collect()
}

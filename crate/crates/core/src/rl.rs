//! Group-relative policy optimisation arithmetic: terminal reward, per-group
//! advantage normalisation and the clipped surrogate value.
//!
//! Ratios are trajectory-level and supplied by the caller; nothing here
//! touches a model.

use serde::{Deserialize, Serialize};

use crate::error::RlError;

pub const DEFAULT_EPSILON: f64 = 0.2;
/// Below this population std a group's advantages are all zero.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Trim, case-fold and drop one trailing period.
pub fn normalize_answer(s: &str) -> String {
    let t = s.trim().to_lowercase();
    let t = t.strip_suffix('.').unwrap_or(&t);
    t.trim_end().to_string()
}

/// 1 when the prediction matches gold after normalisation; an absent
/// prediction scores 0.
pub fn reward(predicted: Option<&str>, gold: &str) -> f64 {
    match predicted {
        Some(p) if normalize_answer(p) == normalize_answer(gold) => 1.0,
        _ => 0.0,
    }
}

/// `(r - mean) / std` with population statistics.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, RlError> {
    let g = rewards.len();
    if g < 2 {
        return Err(RlError::GroupTooSmall(g));
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `(1/G) * sum_i min(ratio_i * A_i, clip(ratio_i, 1-eps, 1+eps) * A_i)`.
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], epsilon: f64) -> Result<f64, RlError> {
    if ratios.len() != advantages.len() {
        return Err(RlError::LengthMismatch(ratios.len(), advantages.len()));
    }
    if ratios.is_empty() {
        return Err(RlError::GroupTooSmall(0));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(RlError::InvalidEpsilon(epsilon));
    }
    let mut total = 0.0;
    for (i, (&ratio, &a)) in ratios.iter().zip(advantages).enumerate() {
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(RlError::NonPositiveRatio {
                index: i,
                value: ratio,
            });
        }
        total += surrogate_term(ratio, a, epsilon);
    }
    Ok(total / ratios.len() as f64)
}

/// One summand of the clipped objective.
pub fn surrogate_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// One line of a batch input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInput {
    pub rewards: Vec<f64>,
    /// Defaults to all ones (on-policy).
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutput {
    pub advantages: Vec<f64>,
    pub objective: f64,
}

pub fn evaluate_group(input: &GroupInput) -> Result<GroupOutput, RlError> {
    if let Some(&bad) = input.rewards.iter().find(|&&r| r != 0.0 && r != 1.0) {
        return Err(RlError::InvalidReward(bad));
    }
    let advantages = group_advantages(&input.rewards)?;
    let ones;
    let ratios = match &input.ratios {
        Some(r) => r.as_slice(),
        None => {
            ones = vec![1.0; advantages.len()];
            &ones
        }
    };
    let objective = clipped_surrogate(
        ratios,
        &advantages,
        input.epsilon.unwrap_or(DEFAULT_EPSILON),
    )?;
    Ok(GroupOutput {
        advantages,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn reward_normalization() {
        assert_eq!(reward(Some("A"), "A"), 1.0);
        assert_eq!(reward(Some(" a. "), "A"), 1.0);
        assert_eq!(
            reward(Some("The cat is sleeping."), "the cat is sleeping"),
            1.0
        );
        assert_eq!(reward(Some("A.."), "A"), 0.0);
        assert_eq!(reward(Some("B"), "A"), 0.0);
        assert_eq!(reward(None, "A"), 0.0);
    }

    #[test]
    fn advantage_examples() {
        let a = group_advantages(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        for (x, y) in a.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
        }
        assert_eq!(group_advantages(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        // mean 1/4, std sqrt(3)/4
        let a = group_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let s3 = 3f64.sqrt();
        for (x, y) in a.iter().zip([s3, -1.0 / s3, -1.0 / s3, -1.0 / s3]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
        assert_eq!(group_advantages(&[1.0]), Err(RlError::GroupTooSmall(1)));
    }

    #[test]
    fn surrogate_examples() {
        assert_abs_diff_eq!(surrogate_term(1.5, 1.0, 0.2), 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(surrogate_term(0.5, -1.0, 0.2), -0.8, epsilon = 1e-12);
        let a = [1.0, -1.0, -1.0, 1.0];
        assert_eq!(clipped_surrogate(&[1.0; 4], &a, 0.2).unwrap(), 0.0);
        assert!(matches!(
            clipped_surrogate(&[1.0, 0.0], &[1.0, -1.0], 0.2),
            Err(RlError::NonPositiveRatio { index: 1, .. })
        ));
        assert_eq!(
            clipped_surrogate(&[1.0], &[1.0, 2.0], 0.2),
            Err(RlError::LengthMismatch(1, 2))
        );
        assert_eq!(
            clipped_surrogate(&[1.0], &[1.0], 1.0),
            Err(RlError::InvalidEpsilon(1.0))
        );
    }

    #[test]
    fn batch_line() {
        let input: GroupInput = serde_json::from_str(
            r#"{"rewards": [1, 0, 0, 1], "ratios": [1.5, 1, 1, 1], "epsilon": 0.2}"#,
        )
        .unwrap();
        let out = evaluate_group(&input).unwrap();
        // (1.2 - 1 - 1 + 1) / 4
        assert_abs_diff_eq!(out.objective, 0.05, epsilon = 1e-12);
        let bad = GroupInput {
            rewards: vec![0.5, 1.0],
            ratios: None,
            epsilon: None,
        };
        assert_eq!(evaluate_group(&bad), Err(RlError::InvalidReward(0.5)));
    }

    fn group() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f64), 2..16)
    }

    proptest! {
        #[test]
        fn advantages_are_standardized(r in group()) {
            let a = group_advantages(&r).unwrap();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let degenerate = r.iter().all(|&x| x == r[0]);
            if degenerate {
                prop_assert!(a.iter().all(|&x| x == 0.0));
            } else {
                prop_assert!((std - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_equivariant(r in group(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..r.len()).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
            let a = group_advantages(&r).unwrap();
            let b = group_advantages(&permuted).unwrap();
            for (j, &i) in idx.iter().enumerate() {
                prop_assert!((b[j] - a[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn surrogate_bounded_by_unclipped(
            pairs in prop::collection::vec((0.01f64..3.0, -3.0f64..3.0), 1..16),
            eps in 0.01f64..0.99,
        ) {
            let (ratios, adv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let clipped = clipped_surrogate(&ratios, &adv, eps).unwrap();
            let unclipped = ratios.iter().zip(&adv).map(|(r, a)| r * a).sum::<f64>() / ratios.len() as f64;
            prop_assert!(clipped <= unclipped + 1e-12);
            if ratios.iter().all(|r| (1.0 - eps..=1.0 + eps).contains(r)) {
                prop_assert!((clipped - unclipped).abs() < 1e-12);
            }
        }

        #[test]
        fn reward_ignores_case_and_whitespace(ans in "[A-Za-z ]{1,12}", pad_l in " {0,3}", pad_r in " {0,3}") {
            let gold = ans.trim();
            prop_assume!(!gold.is_empty());
            let pred = format!("{pad_l}{}{pad_r}", ans.to_uppercase());
            prop_assert_eq!(reward(Some(&pred), gold), 1.0);
        }
    }
}

use serde::{Deserialize, Serialize};

use super::{FaultPronenessModel, MetricsError, ModuleMetricsRecord};
use crate::model::PredicateMap;
use crate::scalar::Scalar;

pub const DEFAULT_THETA_LOW: f64 = 3.5;
pub const DEFAULT_THETA_HIGH: f64 = 0.25;

/// Per-predicate elastic-net penalty multipliers in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFactors<F> {
    pub values: Vec<F>,
    pub theta_low: F,
    pub theta_high: F,
}

impl<F: Scalar> PenaltyFactors<F> {
    /// Every predicate penalized with weight 1.
    pub fn uniform(n: usize) -> Self {
        PenaltyFactors {
            values: vec![F::one(); n],
            theta_low: F::of(DEFAULT_THETA_LOW),
            theta_high: F::of(DEFAULT_THETA_HIGH),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn check_thetas<F: Scalar>(theta_low: F, theta_high: F) -> Result<(), MetricsError> {
    let (lo, hi) = (theta_low.as_f64(), theta_high.as_f64());
    if !(3.0..=4.0).contains(&lo) {
        return Err(MetricsError::ThetaOutOfRange {
            name: "theta_low",
            value: lo,
            lo: 3.0,
            hi: 4.0,
        });
    }
    if !(0.2..=0.3).contains(&hi) {
        return Err(MetricsError::ThetaOutOfRange {
            name: "theta_high",
            value: hi,
            lo: 0.2,
            hi: 0.3,
        });
    }
    Ok(())
}

/// `1 - fp^theta_low` for `fp <= 0.5`, `1 - fp * theta_high` above.
///
/// The two branches do not meet at 0.5: at the default thetas the factor
/// drops from about 0.9116 to 0.875 there.
pub fn penalty_factor<F: Scalar>(fp: F, theta_low: F, theta_high: F) -> F {
    if fp <= F::of(0.5) {
        F::one() - fp.powf(theta_low)
    } else {
        F::one() - fp * theta_high
    }
}

pub fn penalty_factors<F: Scalar>(
    fp_per_predicate: &[F],
    theta_low: F,
    theta_high: F,
) -> Result<PenaltyFactors<F>, MetricsError> {
    check_thetas(theta_low, theta_high)?;
    let values = fp_per_predicate
        .iter()
        .map(|&fp| {
            if !(fp >= F::zero() && fp <= F::one()) {
                return Err(MetricsError::FpOutOfRange(fp.as_f64()));
            }
            Ok(penalty_factor(fp, theta_low, theta_high))
        })
        .collect::<Result<_, _>>()?;
    Ok(PenaltyFactors {
        values,
        theta_low,
        theta_high,
    })
}

/// FP of each predicate's enclosing module, in `predicate_ids` order.
pub fn predicate_fault_proneness<F: Scalar>(
    model: &FaultPronenessModel<F>,
    records: &[ModuleMetricsRecord],
    pmap: &PredicateMap,
    predicate_ids: &[String],
) -> Result<Vec<F>, MetricsError> {
    predicate_ids
        .iter()
        .map(|p| {
            let loc = pmap.get(p).ok_or_else(|| MetricsError::UnmappedPredicate(p.clone()))?;
            let rec = records
                .iter()
                .find(|r| r.module_id == loc.module_id)
                .ok_or_else(|| MetricsError::UnknownModule(loc.module_id.clone()))?;
            Ok(model.predict_fp(rec))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_values() {
        assert_eq!(penalty_factor(0.0, 3.5, 0.25), 1.0);
        let at_half = penalty_factor(0.5f64, 3.5, 0.25);
        assert!((at_half - (1.0 - 0.5f64.powf(3.5))).abs() < 1e-15);
        assert!((at_half - 0.911_611_652_351_681_6).abs() < 1e-12);
        assert!((penalty_factor(0.9f64, 3.5, 0.25) - 0.775).abs() < 1e-15);
        assert!((penalty_factor(0.500_001f64, 3.5, 0.25) - 0.875).abs() < 1e-6);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(
            penalty_factors(&[1.2f64], 3.5, 0.25),
            Err(MetricsError::FpOutOfRange(_))
        ));
        assert!(matches!(
            penalty_factors(&[f64::NAN], 3.5, 0.25),
            Err(MetricsError::FpOutOfRange(_))
        ));
        assert!(matches!(
            penalty_factors(&[0.2f64], 2.0, 0.25),
            Err(MetricsError::ThetaOutOfRange { name: "theta_low", .. })
        ));
        assert!(matches!(
            penalty_factors(&[0.2f64], 3.0, 0.35),
            Err(MetricsError::ThetaOutOfRange { name: "theta_high", .. })
        ));
    }

    proptest! {
        #[test]
        fn factors_in_unit_interval_and_monotone_per_branch(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0,
            tl in 3.0f64..=4.0, th in 0.2f64..=0.3,
        ) {
            let v = penalty_factors(&[a, b], tl, th).unwrap();
            for x in &v.values {
                prop_assert!((0.0..=1.0).contains(x));
            }
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let same_branch = (hi <= 0.5) || (lo > 0.5);
            if same_branch {
                prop_assert!(penalty_factor(lo, tl, th) >= penalty_factor(hi, tl, th));
            }
        }
    }
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// `(Pr(Y = 0), Pr(Y = 1))` for a logistic output with the given logit.
///
/// `p1` uses the branch of the logistic form that never exponentiates a
/// positive number; `p0` is its complement so the pair sums to one exactly.
pub fn binary_class_probs(logit: f64) -> (f64, f64) {
    let p1 = super::tape::stable_sigmoid(logit);
    (1.0 - p1, p1)
}

/// Binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]` with clamping.
pub fn bce_loss(p1: f64, y: bool) -> f64 {
    let p = p1.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logit_zero_is_even() {
        assert_eq!(binary_class_probs(0.0), (0.5, 0.5));
    }

    #[test]
    fn logit_ln3_gives_three_quarters() {
        let (p0, p1) = binary_class_probs(3f64.ln());
        assert!((p1 - 0.75).abs() < 1e-12);
        assert!((p0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn large_logits_saturate_without_overflow() {
        let (p0, p1) = binary_class_probs(1000.0);
        assert_eq!(p1, 1.0);
        assert_eq!(p0, 0.0);
        let (p0, p1) = binary_class_probs(-1000.0);
        assert_eq!(p1, 0.0);
        assert_eq!(p0, 1.0);
    }

    #[test]
    fn matches_textbook_form_away_from_saturation() {
        for i in -40..=40 {
            let l = i as f64 * 0.25;
            let e = (-l).exp();
            let (p0, p1) = binary_class_probs(l);
            assert!((p0 - e / (1.0 + e)).abs() < 1e-12);
            assert!((p1 - 1.0 / (1.0 + e)).abs() < 1e-12);
        }
    }

    #[test]
    fn strictly_monotone_on_a_grid() {
        let mut prev = f64::NEG_INFINITY;
        for i in -120..=120 {
            let (_, p1) = binary_class_probs(i as f64 * 0.25);
            assert!(p1 > prev);
            prev = p1;
        }
    }

    #[test]
    fn bce_closed_forms() {
        assert!(bce_loss(1.0, true) < 1e-6);
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, false) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.0, true) - 16.118095650958317).abs() < 1e-9);
        assert!((bce_loss(0.0, true) + (1e-7f64).ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn complement_is_exact(l in -50.0f64..50.0) {
            let (p0, p1) = binary_class_probs(l);
            prop_assert_eq!(p0 + p1, 1.0);
        }

        #[test]
        fn bce_is_nonnegative_and_minimised_at_label(p in 0.0f64..=1.0, y: bool) {
            let loss = bce_loss(p, y);
            prop_assert!(loss >= 0.0);
            let best = bce_loss(if y { 1.0 } else { 0.0 }, y);
            prop_assert!(best <= loss);
        }
    }
}

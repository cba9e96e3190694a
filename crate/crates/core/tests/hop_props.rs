mod common;

use proptest::prelude::*;
use rand::Rng;

use hoi_core::hop::{
    generate_candidates, hand_onset_prior, reliability, score_all, select_onset, template_target, AbstainReason,
    HopConfig, HopEvidence, HopOutcome,
};

use common::{random_motion_case, reference_argmax, reference_score, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn band_contains_the_onset_and_stays_in_the_window(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let case = random_motion_case(&mut rng);
        let cfg = HopConfig { min_reliability: rng.gen_range(0.0..0.6), ..HopConfig::default() };
        let report = hand_onset_prior(&case.track, None, case.window, &case.prior, &cfg);
        if let Some(p) = report.outcome.prior() {
            prop_assert!(case.window.contains(p.band.start) && case.window.contains(p.band.end));
            prop_assert!(p.band.start <= p.onset && p.onset <= p.band.end);
            prop_assert!((0.0..=1.0).contains(&p.reliability));
        }
    }

    #[test]
    fn selection_is_the_oracle_argmax(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let case = random_motion_case(&mut rng);
        let cfg = HopConfig::default();
        let Ok(cands) = generate_candidates(&case.track, case.window, &cfg) else { return Ok(()) };
        let target = template_target(case.window, case.prior.template_ratio);
        let scores = score_all(&cands, &case.prior, target, &case.track, case.window, &cfg);
        let reference: Vec<f64> = cands
            .iter()
            .map(|c| reference_score(c, &case.prior, target, &case.track, case.window, &cfg))
            .collect();
        for (a, b) in scores.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let sel = select_onset(&cands, &case.prior, target, &case.track, case.window, &cfg).unwrap();
        prop_assert_eq!(sel.candidate, cands[reference_argmax(&cands, &reference)]);
        prop_assert!(scores.iter().all(|&s| s <= sel.score));
        prop_assert!((0.0..=1.0).contains(&sel.margin));
        prop_assert!((0.0..=1.0).contains(&sel.local_support));
        // candidates lie in the window, sorted by (t, family)
        prop_assert!(cands.iter().all(|c| case.window.contains(c.t)));
        prop_assert!(cands.windows(2).all(|w| (w[0].t, w[0].family) < (w[1].t, w[1].family)));
    }

    #[test]
    fn abstains_exactly_when_a_threshold_fails(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let case = random_motion_case(&mut rng);
        let cfg = HopConfig {
            min_coverage: rng.gen_range(0.0..1.0),
            min_handedness: rng.gen_range(0.4..1.0),
            min_reliability: rng.gen_range(0.0..0.8),
            ..HopConfig::default()
        };
        let report = hand_onset_prior(&case.track, None, case.window, &case.prior, &cfg);
        let ev = HopEvidence::gather(&case.track, None, case.window, &case.prior);
        let coverage_ok = ev.coverage >= cfg.min_coverage;
        let handedness_ok = ev.handedness >= cfg.min_handedness;
        let kappa = report.selection.map(|s| {
            reliability(ev.aggregate(), s.score, s.margin, s.local_support, cfg.reliability_weights)
        });
        let reliable = kappa.is_some_and(|k| k >= cfg.min_reliability);
        let emitted = matches!(report.outcome, HopOutcome::Prior(_));
        prop_assert_eq!(emitted, coverage_ok && handedness_ok && reliable);
        match report.outcome {
            HopOutcome::Abstain { reason: AbstainReason::Coverage } => prop_assert!(!coverage_ok || report.selection.is_none()),
            HopOutcome::Abstain { reason: AbstainReason::Handedness } => prop_assert!(coverage_ok && !handedness_ok),
            HopOutcome::Abstain { reason: AbstainReason::Reliability } => prop_assert!(coverage_ok && handedness_ok && !reliable),
            HopOutcome::Prior(p) => prop_assert_eq!(Some(p.reliability), kappa),
        }
    }

    #[test]
    fn translation_shifts_everything(seed in any::<u64>(), delta in 1u32..10_000) {
        let mut rng = rng(seed);
        let case = random_motion_case(&mut rng);
        let cfg = HopConfig::default();
        let a = hand_onset_prior(&case.track, None, case.window, &case.prior, &cfg);
        let b = hand_onset_prior(&case.track.shifted(delta), None, case.window.shifted(delta), &case.prior, &cfg);
        prop_assert_eq!(a.target + delta, b.target);
        prop_assert_eq!(a.reliability, b.reliability);
        prop_assert_eq!(a.selection.map(|s| s.candidate.t + delta), b.selection.map(|s| s.candidate.t));
        prop_assert_eq!(a.outcome.prior().map(|p| (p.onset + delta, p.band.shifted(delta))), b.outcome.prior().map(|p| (p.onset, p.band)));
    }

    #[test]
    fn motion_scale_keeps_the_candidate_set(seed in any::<u64>(), exp in -6i32..=6) {
        let mut rng = rng(seed);
        let case = random_motion_case(&mut rng);
        let cfg = HopConfig::default();
        let scale = if case.quantized { 2f64.powi(exp) } else { rng.gen_range(0.05..20.0) };
        let a = generate_candidates(&case.track, case.window, &cfg);
        let b = generate_candidates(&case.track.scaled_motion(scale), case.window, &cfg);
        prop_assert_eq!(a, b);
    }
}

use balsam::cps::{solve_lambda, DEFAULT_MAX_ITER, DEFAULT_TOL};
use balsam::estimators::{estimate_variance, nht_total, true_variance_nht, SecondOrderStructure};
use balsam::frame::{grid_block_strata, grid_frame, GridAux};
use balsam::oracle::{empirical_design, enumerate_design};
use balsam::replicate::draw_replicates;
use balsam::{AuxSelector, Design, DesignConfig, DesignKind, Execution, InclusionProbabilities, PiSource};
use proptest::prelude::*;

/// Inclusion probabilities in (0.05, 0.95) rescaled to sum to `n`, or `None`
/// when rescaling pushes a value to 1 or above.
fn fixed_size_pi(raw: &[f64], n: usize) -> Option<InclusionProbabilities> {
    let total: f64 = raw.iter().sum();
    let pi: Vec<f64> = raw.iter().map(|p| p * n as f64 / total).collect();
    if pi.iter().any(|&p| p >= 0.98) {
        return None;
    }
    InclusionProbabilities::new(pi).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn poisson_expansion_estimator_is_unbiased(
        pi in prop::collection::vec(0.05f64..0.95, 2..9),
        y in prop::collection::vec(-50.0f64..50.0, 9),
    ) {
        let big_n = pi.len();
        let y = &y[..big_n];
        let pi = InclusionProbabilities::new(pi).unwrap();
        let d = enumerate_design(&Design::Poisson(pi.clone())).unwrap();
        let mean = d.try_expectation(|s| nht_total(s, y, &pi)).unwrap();
        prop_assert!((mean - y.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn cps_variance_forms_agree_and_estimators_are_unbiased(
        raw in prop::collection::vec(0.1f64..1.0, 4..8),
        y in prop::collection::vec(0.0f64..20.0, 8),
    ) {
        let big_n = raw.len();
        let Some(pi) = fixed_size_pi(&raw, 2) else { return Ok(()) };
        let y = &y[..big_n];
        let params = solve_lambda(&pi, 2, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let d = enumerate_design(&Design::Cps(params)).unwrap();
        let structure = SecondOrderStructure::from_enumerated(&d).unwrap();
        let truth = true_variance_nht(&structure, y).unwrap();
        let syg = truth.sen_yates_grundy.unwrap();
        prop_assert!((syg - truth.general).abs() < 1e-9 * (1.0 + syg.abs()));
        let pi_hat = InclusionProbabilities::new(d.inclusion_probabilities()).unwrap();
        for fixed in [false, true] {
            let e = d
                .try_expectation(|s| estimate_variance(s, y, &pi_hat, structure.joint(), fixed))
                .unwrap();
            prop_assert!((e - syg).abs() < 1e-8 * (1.0 + syg.abs()));
        }
    }

    #[test]
    fn closed_form_joint_probabilities_match_enumeration(
        raw in prop::collection::vec(0.1f64..1.0, 3..8),
        n in 1usize..3,
    ) {
        let big_n = raw.len();
        let Some(pi) = fixed_size_pi(&raw, n) else { return Ok(()) };
        let designs = [
            Design::Poisson(pi.clone()),
            Design::Srs { population: big_n, n },
            Design::Cps(solve_lambda(&pi, n, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()),
        ];
        for design in designs {
            let exact = enumerate_design(&design).unwrap().joint_inclusion();
            let closed = design.joint_inclusion().unwrap();
            prop_assert!((exact - closed).abs().max() < 1e-9);
        }
    }
}

#[test]
fn empirical_srs_converges_to_enumerated() {
    let design = Design::Srs { population: 6, n: 3 };
    let exact = enumerate_design(&design).unwrap();
    let empirical = empirical_design(&design, 6, 200_000, 3, Execution::Parallel).unwrap();
    assert_eq!(empirical.support().len(), 20);
    assert!(exact.total_variation(&empirical) < 0.01);
}

#[test]
fn every_design_is_reproducible_across_execution_modes() {
    let side = 8;
    let frame = grid_frame(side, GridAux::CoordsAndOne)
        .unwrap()
        .with_strata(&grid_block_strata(side, 4).unwrap())
        .unwrap();
    for kind in DesignKind::ALL {
        let mut cfg = DesignConfig::new(kind, 8);
        if matches!(kind, DesignKind::Cube | DesignKind::LocalCube) {
            cfg = cfg.with_aux(vec![AuxSelector::One, AuxSelector::Column("x".into())]);
        }
        if matches!(kind, DesignKind::Poisson | DesignKind::Cps | DesignKind::SequentialPivotal) {
            cfg = cfg.with_pi(PiSource::Proportional("x".into()));
        }
        let design = cfg.prepare(&frame).unwrap();
        let a = draw_replicates(&design, 64, 17, Execution::Sequential).unwrap();
        let b = draw_replicates(&design, 64, 17, Execution::Parallel).unwrap();
        assert_eq!(a, b, "{kind}");
        if design.fixed_size().is_some() {
            assert!(a.iter().all(|s| s.size() == 8), "{kind}");
        }
    }
}

use consensus_core::controller::{check_feasibility, suggest_params, ControllerVariant};
use consensus_core::monitor::PlantExtremes;
use consensus_core::plant::{PlantSpec, SignalSpec, UncertaintyKind, UncertaintyModelSpec};
use consensus_core::scenario::{smoke, Scenario};
use consensus_core::sim::AgentState;
use proptest::prelude::*;

fn noisy_smoke(seed: u64) -> Scenario {
    let mut s = smoke();
    s.sim.t_end_seconds = 5.0;
    s.bounds.b_min = 0.8;
    s.bounds.tau_max = 0.05;
    s.plants = vec![
        PlantSpec::DoubleIntegrator(UncertaintyModelSpec {
            kind: UncertaintyKind::Noise,
            b: SignalSpec::noise(1.0, 0.2),
            tau: SignalSpec::noise(0.0, 0.05),
            declared_b_min: 0.8,
            declared_tau_max: 0.05,
            seed: None,
        });
        2
    ];
    s.seed = seed;
    s
}

#[test]
fn runs_are_bit_identical_for_equal_seeds() {
    let a = noisy_smoke(42).run().unwrap();
    let b = noisy_smoke(42).run().unwrap();
    assert_eq!(a.trace.times, b.trace.times);
    assert_eq!(a.trace.x, b.trace.x);
    assert_eq!(a.trace.v, b.trace.v);
    assert_eq!(a.trace.u, b.trace.u);

    let c = noisy_smoke(43).run().unwrap();
    assert_ne!(a.trace.v, c.trace.v);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn velocity_tolerance_is_linear_in_dt(dt in 1e-5f64..1e-2, scale in 1.0f64..8.0, seed in 0u64..100) {
        let s = noisy_smoke(seed);
        let plants = s.build_plants().unwrap();
        let ext = PlantExtremes::of(&plants, s.sim.t_end_seconds);
        let a = ext.velocity_tolerance(&s.constraints, dt);
        let b = ext.velocity_tolerance(&s.constraints, dt * scale);
        prop_assert!(a > 0.0);
        prop_assert!((b / a - scale).abs() < 1e-9);
    }

    #[test]
    fn random_feasible_runs_respect_input_bound(
        safety in 0.1f64..0.9,
        xs in proptest::collection::vec(-2.0f64..2.0, 3),
        vs in proptest::collection::vec(-0.9f64..0.9, 3),
        seed in 0u64..1000,
    ) {
        let mut s = smoke();
        s.name = "random-ring".into();
        s.graph = consensus_core::graph::DirectedGraph::ring(3).unwrap().to_spec();
        s.constraints.v_max = 1.0;
        s.constraints.v_min = -1.0;
        s.constraints.u_max = 2.0;
        s.bounds.tau_max = 0.3;
        s.plants = (0..3)
            .map(|i| PlantSpec::DoubleIntegrator(UncertaintyModelSpec {
                kind: UncertaintyKind::Sinusoid,
                b: SignalSpec::sinusoid(1.2, 0.2, 0.9, i as f64),
                tau: SignalSpec::sinusoid(0.0, 0.3, 1.3, i as f64),
                declared_b_min: 1.0,
                declared_tau_max: 0.3,
                seed: None,
            }))
            .collect();
        let p = suggest_params(ControllerVariant::SymmetricTanh, &s.bounds, &s.constraints, 1.0, safety).unwrap();
        prop_assert!(check_feasibility(ControllerVariant::SymmetricTanh, &p, &s.bounds, &s.constraints, 1.0).all_pass());
        s.params = vec![p; 3];
        s.initial_states = xs.iter().zip(&vs).map(|(&x, &v)| AgentState { x, v, x_hat: None }).collect();
        s.sim.t_end_seconds = 8.0;
        s.sim.record_stride = 1;
        s.seed = seed;
        let out = s.run().unwrap();
        prop_assert!(out.trace.u.iter().flatten().all(|u| u.abs() <= s.constraints.u_max));
        prop_assert_eq!(out.monitor.constraints.input_violations, 0);
        prop_assert!(out.monitor.constraints.velocity_excess <= out.monitor.constraints.velocity_tolerance);
    }
}

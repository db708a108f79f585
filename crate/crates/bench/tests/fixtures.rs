use deskpilot_bench::{button_policy, button_scenario, grid_controls};
use deskpilot_core::backend::SimDesktop;
use deskpilot_core::bridge::ScriptedPolicy;
use deskpilot_core::Orchestrator;

#[test]
fn grid_controls_are_distinct() {
    let controls = grid_controls(60);
    assert_eq!(controls.len(), 60);
    assert!(controls.iter().any(|c| !c.enabled));
}

#[test]
fn button_fixture_completes() {
    let mut orch = Orchestrator::new(
        "fixture",
        Box::new(SimDesktop::new(button_scenario(48))),
        Box::new(ScriptedPolicy::new(button_policy(48))),
    );
    let outcome = orch.run_request("press the last button");
    assert!(outcome.succeeded, "{outcome:?}");
    assert_eq!(outcome.steps, 3);
    assert_eq!(orch.backend().check_hook("done"), Some(true));
}

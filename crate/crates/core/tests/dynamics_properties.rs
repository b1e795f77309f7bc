mod common;

use common::{chain_rule, permutation_invariance, saturated_irrelevance, spectator_invariance, Defects, Gen};
use qevents_core::{cut_state, History};

const HISTORIES: std::ops::Range<u64> = 0..1500;

fn check(name: &str, d: Defects) {
    assert!(d.histories >= 200, "{name}: only {} usable histories", d.histories);
    assert!(d.library < 1e-12, "{name}: library defect {:e}", d.library);
    assert!(d.oracle < 1e-12, "{name}: oracle defect {:e}", d.oracle);
}

#[test]
fn chain_rule_holds() {
    check("chain rule", chain_rule(HISTORIES));
}

#[test]
fn spacelike_joints_commute() {
    check("permutation", permutation_invariance(HISTORIES));
}

#[test]
fn spectators_change_nothing() {
    check("spectator", spectator_invariance(HISTORIES));
}

#[test]
fn saturated_events_change_nothing() {
    check("saturated", saturated_irrelevance(HISTORIES));
}

#[test]
fn generated_histories_are_well_formed() {
    for seed in 0..100 {
        let mut g = Gen::new(seed);
        let h = g.history(common::MAX_EVENTS);
        assert!(h.validate().is_empty());
        assert!(h.event_count() <= common::MAX_EVENTS);
        let s = cut_state(&h, &h.full_cut()).unwrap();
        assert!((s.composite.squared_norm() - 1.0).abs() < 1e-12);
        let doc = serde_json::to_string(&h).unwrap();
        let back: History = serde_json::from_str(&doc).unwrap();
        assert_eq!(back, h);
    }
}

mod common;

use proptest::prelude::*;

use common::*;
use dcgrid_core::scenario::{
    parse_scenario_str, read_trace, summarize, write_trace, ConfigError, ScenarioConfig,
};
use dcgrid_core::sim::{run, SimMode};

const PROFILES: &str = "[profiles]\nload = profiles/constant_load.csv\nenv = profiles/constant_env.csv\n";

fn parse(body: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_scenario_str(&format!("{body}\n{PROFILES}"), &scenarios_dir(), &[])
}

#[test]
fn shipped_scenarios_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ini") {
            let name = path.file_stem().unwrap().to_str().unwrap().to_string();
            let cfg = load(&name, &[]);
            assert_eq!(cfg.name, name);
            cfg.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn transient_mode_changes_step_defaults() {
    let cfg = parse("[sim]\nmode = transient").unwrap();
    assert_eq!(cfg.sim.mode, SimMode::Transient);
    assert_eq!((cfg.sim.dt, cfg.sim.duration), (0.001, 20.0));
    let cfg = parse("[sim]\nmode = transient\nduration = 2").unwrap();
    assert_eq!((cfg.sim.dt, cfg.sim.duration), (0.001, 2.0));
    let cfg = parse("").unwrap();
    assert_eq!((cfg.sim.dt, cfg.sim.duration), (1.0, 86_400.0));
}

#[test]
fn overrides_apply_after_the_file() {
    let o = vec!["nodes.count=2".to_string(), "flex.mode=full".to_string()];
    let cfg = parse_scenario_str(&format!("[nodes]\ncount = 6\n{PROFILES}"), &scenarios_dir(), &o).unwrap();
    assert_eq!(cfg.nodes.count, 2);
    let bad = vec!["nodes.count".to_string()];
    assert!(matches!(
        parse_scenario_str(PROFILES, &scenarios_dir(), &bad),
        Err(ConfigError::Override(_))
    ));
}

#[test]
fn per_node_initial_soc() {
    let cfg = parse("[nodes]\ncount = 3\ninitial_soc = 0.2, 0.4, 0.6").unwrap();
    assert_eq!(initial_socs(&cfg), [0.2, 0.4, 0.6]);
    assert!(parse("[nodes]\ncount = 3\ninitial_soc = 0.2, 0.4").is_err());
}

#[test]
fn injections_are_scheduled() {
    let cfg = parse("[injections]\na = 2.5 env.irradiance 300\nb = 1 node.1.online 0").unwrap();
    let mut got: Vec<_> = cfg.injections.iter().map(|c| (c.apply_at, c.path.as_str(), c.value)).collect();
    got.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(got, [(1.0, "node.1.online", 0.0), (2.5, "env.irradiance", 300.0)]);
}

#[test]
fn malformed_scenarios_are_rejected() {
    let cases: &[(&str, &str)] = &[
        ("[bogus]\nx = 1", "unknown section"),
        ("[sim]\ndtt = 1", "unknown key"),
        ("[sim]\ndt = fast", "non-numeric"),
        ("[sim]\ndt = -1", "negative step"),
        ("[sim]\nmode = quantum", "unknown mode"),
        ("[nodes]\ncount = 0", "no nodes"),
        ("[nodes]\ncount = 2\ncv_node = 2", "cv node out of range"),
        ("[nodes]\nsoc_min = 0.9\nsoc_max = 0.1", "inverted soc bounds"),
        ("[nodes]\ninitial_soc = 1.5", "soc above one"),
        ("[flex]\nmode = sometimes", "unknown flex mode"),
        ("[flex]\ngamma = -5", "negative gamma"),
        ("[supercap]\nenabled = maybe", "non-boolean"),
        ("[converter]\nv_out = 50", "buck rating"),
        ("[interchange]\nsoc_min = 95", "inverted percent bounds"),
        ("[injections]\nx = 1 env.irradiance", "missing value"),
        ("[injections]\nx = 1 node.7.soc 0.5", "unknown node"),
        ("[injections]\nx = -1 env.irradiance 5", "negative time"),
        ("[sim\ndt = 1", "syntax"),
    ];
    for (body, why) in cases {
        assert!(parse(body).is_err(), "accepted ({why}): {body:?}");
    }
    let err = parse_scenario_str("[sim]\ndt = 1\n", &scenarios_dir(), &[]).unwrap_err();
    assert!(matches!(err, ConfigError::MissingProfile(_)), "{err}");
    let err = parse_scenario_str(
        "[profiles]\nload = profiles/nope.csv\nenv = profiles/constant_env.csv\n",
        &scenarios_dir(),
        &[],
    )
    .unwrap_err();
    assert!(err.to_string().contains("nope.csv"), "{err}");
}

#[test]
fn trace_round_trips_and_summary_is_reproducible() {
    let mut cfg = load("flex_partial", &["sim.duration=3600"]);
    cfg.interchange.enabled = false;
    let trace = run(&cfg).unwrap().trace;
    let mut buf = Vec::new();
    write_trace(&trace, &mut buf).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back.len(), trace.len());
    let mut again = Vec::new();
    write_trace(&back, &mut again).unwrap();
    assert_eq!(buf, again, "formatted trace is a fixed point");

    let a = summarize(&trace, 100.0).unwrap();
    let b = summarize(&back, 100.0).unwrap();
    assert!((a.energy_pv - b.energy_pv).abs() <= 1e-6 * a.energy_pv.abs().max(1.0));
    assert!(a.balance_residual().abs() < 1e-6, "{}", a.balance_residual());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// Any node count, SoC spread and flex mode runs cleanly for a short
    /// window and keeps the safety invariants.
    #[test]
    fn short_runs_are_safe(
        count in 1usize..6,
        socs in prop::collection::vec(0.05f64..0.95, 6),
        flex in 0usize..3,
        irr in 0.0f64..1100.0,
        load_w in 0.0f64..6000.0,
    ) {
        let soc_list: Vec<String> = socs[..count].iter().map(|s| format!("{s:.4}")).collect();
        let (mode, gamma) = [("disabled", 0), ("full", 0), ("partial", 500)][flex];
        let body = format!(
            "[sim]\nduration = 600\n[nodes]\ncount = {count}\ninitial_soc = {}\n[flex]\nmode = {mode}\ngamma = {gamma}\n[interchange]\nenabled = {}\n[injections]\na = 0 env.irradiance {irr}\nb = 0 load.nonflex_power {load_w}",
            soc_list.join(", "),
            count > 1,
        );
        let cfg = parse(&body).unwrap();
        let (out, _) = execute(&cfg);
        prop_assert_eq!(out.trace.len(), 600);
        check_safety(&cfg, &out.trace).map_err(TestCaseError::fail)?;
        for r in &out.trace {
            prop_assert!(r.is_finite());
            prop_assert!(r.balance_residual().abs() < 5e-3);
        }
    }
}

/// A node charging under CC that is promoted to CV in the same step must
/// not take its CC power with it.
#[test]
fn promoted_charger_keeps_the_balance() {
    let cfg = parse(
        "[sim]\nduration = 30\n[nodes]\ncount = 2\ninitial_soc = 0.05, 0.746\n[interchange]\nenabled = true\n[injections]\na = 0 env.irradiance 100\nb = 0 load.nonflex_power 0",
    )
    .unwrap();
    let (out, _) = execute(&cfg);
    assert!(out.trace.iter().any(|r| r.nodes[1].mode == dcgrid_core::sim::ModeLabel::Cv));
    for r in &out.trace {
        assert!(r.balance_residual().abs() < 1e-9, "t={}: {r:?}", r.t);
    }
}

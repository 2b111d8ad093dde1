use std::collections::HashSet;

use e3b_core::bonus::{extract_key, KeyExtractor};
use e3b_core::env::{flood_fill, generate_layout, Action, Cell, Context, EnvConfig, GridEnv, Observation, Task};
use e3b_core::rng::SplitMix64;
use e3b_core::Error;
use proptest::prelude::*;

fn ctx(seed: u64, task: Task) -> Context {
    Context { seed, task }
}

fn random_episode(cfg: &EnvConfig, context: u64, walk_seed: u64) -> (Vec<Observation>, f64) {
    let mut env = GridEnv::new(cfg.clone(), 99).unwrap();
    let mut rng = SplitMix64::new(walk_seed);
    let mut obs = vec![env.reset(ctx(context, cfg.task)).unwrap()];
    let mut ret = 0.0;
    loop {
        let out = env.step(Action::from_index(rng.below(5)).unwrap()).unwrap();
        ret += out.reward;
        obs.push(out.obs);
        if out.done {
            return (obs, ret);
        }
    }
}

#[test]
fn three_room_layouts_are_mostly_distinct() {
    let cfg = EnvConfig::parse("multiroom-r3-s13").unwrap();
    let distinct: HashSet<String> = (0..100)
        .map(|s| generate_layout(ctx(s, Task::MultiRoom), &cfg).unwrap().render())
        .collect();
    assert!(distinct.len() >= 95, "{} distinct layouts", distinct.len());
}

#[test]
fn accepted_layouts_are_reachable() {
    for spec in ["multiroom-r3-s13", "keyuse-s9", "multiroom-r2-s9-lava2"] {
        let cfg = EnvConfig::parse(spec).unwrap();
        for s in 0..1000 {
            let l = generate_layout(ctx(s, cfg.task), &cfg).unwrap();
            let side = l.side;
            // doors and keys count as passable; lava does not
            let seen = flood_fill(&l.cells, side, l.start, |c| !matches!(c, Cell::Wall | Cell::Lava));
            assert!(seen[l.goal.1 * side + l.goal.0], "{spec} context {s} unreachable");
            for i in 0..side {
                for edge in [i, (side - 1) * side + i, i * side, i * side + side - 1] {
                    assert_eq!(l.cells[edge], Cell::Wall, "{spec} context {s} border");
                }
            }
        }
    }
}

#[test]
fn timer_makes_every_identity_key_unique() {
    let cfg = EnvConfig::parse("multiroom-r3-s13-timer").unwrap();
    for ep in 0..50 {
        let (obs, _) = random_episode(&cfg, ep, 1000 + ep);
        let keys: HashSet<Vec<u8>> = obs.iter().map(|o| extract_key(o, KeyExtractor::Identity)).collect();
        assert_eq!(keys.len(), obs.len());
    }
}

#[test]
fn without_timer_revisits_share_keys() {
    let cfg = EnvConfig::parse("multiroom-r3-s13").unwrap();
    let (obs, _) = random_episode(&cfg, 3, 4);
    let keys: HashSet<Vec<u8>> = obs.iter().map(|o| extract_key(o, KeyExtractor::Identity)).collect();
    assert!(keys.len() < obs.len());
}

#[test]
fn returns_are_zero_or_one() {
    for spec in ["multiroom-r1-s5", "multiroom-r2-s7-lava1", "keyuse-s6"] {
        let cfg = EnvConfig::parse(spec).unwrap();
        for ep in 0..200 {
            let (_, ret) = random_episode(&cfg, ep, ep * 7 + 1);
            assert!(ret == 0.0 || ret == 1.0, "{spec}: return {ret}");
        }
    }
}

#[test]
fn time_advances_by_one_and_caps() {
    let cfg = EnvConfig::parse("multiroom-r2-s7-t20").unwrap();
    let (obs, _) = random_episode(&cfg, 1, 2);
    for (k, o) in obs.iter().enumerate() {
        assert_eq!(o.t as usize, k);
    }
    assert!(obs.len() <= 21);
}

#[test]
fn stepping_a_finished_episode_is_a_contract_error() {
    let cfg = EnvConfig::parse("multiroom-r1-s5-t1").unwrap();
    let mut env = GridEnv::new(cfg, 0).unwrap();
    assert!(matches!(env.step(Action::Up), Err(Error::Contract(_))));
    env.reset(ctx(0, Task::MultiRoom)).unwrap();
    assert!(env.step(Action::Up).unwrap().done);
    assert!(matches!(env.step(Action::Up), Err(Error::Contract(_))));
}

#[test]
fn bad_specs_are_rejected() {
    for spec in [
        "",
        "maze-s9",
        "multiroom-r3-s5",
        "multiroom-r2-sx",
        "keyuse-s3",
        "multiroom-r1-s9-blue",
    ] {
        assert!(EnvConfig::parse(spec).is_err(), "{spec}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectories_are_pure_functions_of_inputs(context in any::<u64>(), walk in any::<u64>(), noise in 0usize..3) {
        let mut cfg = EnvConfig::parse("multiroom-r2-s9-timer").unwrap();
        cfg.noise_dims = noise;
        let a = random_episode(&cfg, context, walk);
        let b = random_episode(&cfg, context, walk);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn agent_stays_on_walkable_cells(context in any::<u64>(), walk in any::<u64>()) {
        let cfg = EnvConfig::parse("keyuse-s9").unwrap();
        let (obs, _) = random_episode(&cfg, context, walk);
        for o in &obs {
            let c = o.grid[o.y * o.side + o.x];
            prop_assert!(!matches!(c, Cell::Wall | Cell::DoorClosed | Cell::Key));
        }
    }
}

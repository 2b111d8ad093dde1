use e3b_core::bonus::{Algo, KeyExtractor};
use e3b_core::env::EnvConfig;
use e3b_core::nn::EncoderKind;
use e3b_core::record::RunStatus;
use e3b_core::trainer::{train, train_with, Learner, TrainConfig, TrainOptions};

fn small(algo: Algo) -> TrainConfig {
    let mut cfg = TrainConfig::new(algo, EnvConfig::parse("multiroom-r2-s7-timer").unwrap());
    cfg.num_envs = 3;
    cfg.unroll = 8;
    cfg.total_steps = 960;
    cfg.feature_dim = 8;
    cfg.encoder_hidden = vec![16];
    cfg.head_hidden = 16;
    cfg.policy_hidden = vec![16];
    cfg.seed = 5;
    cfg
}

#[test]
fn zero_beta_e3b_trains_the_same_policy_as_plain_a2c() {
    let mut a = small(Algo::E3b);
    a.bonus.beta = 0.0;
    a.entropy_cost = 0.01;
    let mut b = small(Algo::None);
    b.entropy_cost = 0.01;
    let mut la = Learner::new(a).unwrap();
    let mut lb = Learner::new(b).unwrap();
    for _ in 0..6 {
        let ia = la.iterate(false).unwrap();
        let ib = lb.iterate(false).unwrap();
        assert_eq!(ia.a2c, ib.a2c);
        assert!(ia.rollout.transitions().any(|t| t.bonus > 0.0));
        assert!(ib.rollout.transitions().all(|t| t.bonus == 0.0));
    }
    assert_eq!(la.policy, lb.policy);
}

#[test]
fn plain_a2c_builds_no_bonus_models() {
    let mut cfg = small(Algo::None);
    cfg.encoder = Some(EncoderKind::InverseDynamics);
    let mut l = Learner::new(cfg).unwrap();
    assert!(l.models.encoder.is_none() && l.models.rnd.is_none() && l.models.forward.is_none());
    assert!(l.iterate(false).unwrap().idm_loss.is_none());
}

#[test]
fn episodic_tracker_only_holds_the_current_episode() {
    let mut cfg = small(Algo::E3b);
    cfg.env = EnvConfig::parse("multiroom-r2-s7-t10").unwrap();
    let mut l = Learner::new(cfg).unwrap();
    for _ in 0..5 {
        l.iterate(false).unwrap();
        for s in &l.slots {
            assert_eq!(s.state.tracker.as_ref().unwrap().count(), s.obs.t as u64);
        }
    }
}

#[test]
fn non_episodic_tracker_keeps_every_step() {
    let mut cfg = small(Algo::E3b);
    cfg.env = EnvConfig::parse("multiroom-r2-s7-t10").unwrap();
    cfg.episodic = false;
    let mut l = Learner::new(cfg).unwrap();
    for k in 1..=5u64 {
        l.iterate(false).unwrap();
        for s in &l.slots {
            assert_eq!(s.state.tracker.as_ref().unwrap().count(), 8 * k);
        }
    }
}

#[test]
fn count_tables_reset_with_episodes() {
    let mut cfg = small(Algo::NovelD);
    cfg.bonus.extractor = KeyExtractor::Position;
    cfg.env = EnvConfig::parse("multiroom-r2-s7-t10").unwrap();
    let mut l = Learner::new(cfg).unwrap();
    for _ in 0..4 {
        l.iterate(false).unwrap();
        for s in &l.slots {
            assert!(s.state.table.as_ref().unwrap().len() as u32 <= s.obs.t);
        }
    }
}

#[test]
fn replayed_bonuses_match_for_every_algo() {
    for algo in [Algo::E3b, Algo::NovelD, Algo::Ride, Algo::Icm, Algo::Rnd, Algo::Count] {
        let out = train_with(&small(algo), TrainOptions { verify_bonuses: true }, |_| {});
        assert_eq!(
            out.record.status,
            RunStatus::Completed,
            "{algo:?}: {:?}",
            out.record.error
        );
        assert_eq!(out.bonuses_checked, 960);
        assert!(out.max_bonus_deviation <= 1e-9, "{algo:?}: {}", out.max_bonus_deviation);
    }
}

#[test]
fn encoder_variants_run() {
    for kind in [EncoderKind::OneHot, EncoderKind::RandomNet, EncoderKind::PolicyTrunk] {
        let mut cfg = small(Algo::E3b);
        cfg.encoder = Some(kind);
        let rec = train(&cfg);
        assert_eq!(rec.status, RunStatus::Completed, "{kind:?}: {:?}", rec.error);
    }
}

#[test]
fn identical_configs_give_identical_records() {
    let cfg = small(Algo::E3b);
    assert_eq!(train(&cfg), train(&cfg));
    let mut other = cfg.clone();
    other.seed = 6;
    assert_ne!(train(&cfg).metrics, train(&other).metrics);
}

#[test]
fn metric_steps_increase() {
    let rec = train(&small(Algo::Ride));
    assert!(!rec.metrics.is_empty());
    assert!(rec.metrics.windows(2).all(|w| w[0].step < w[1].step));
    assert_eq!(rec.metrics.last().unwrap().step, 960);
    assert!(rec.metrics.iter().all(|m| m.steps_per_second.is_none()));
}

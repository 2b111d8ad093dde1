//! Run-config files: flat `key = value` lines with `#` comments.
//!
//! `algo` and `env` are required; every other key overrides the per-algo
//! default. `seeds = 0,1,2` runs one job per seed. The fingerprint is the
//! SHA-256 of the sorted, fully resolved key/value pairs with `seed` left out,
//! so all seeds of one experiment share it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::bonus::{Algo, CountForm, KeyExtractor};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::EncoderKind;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn count_form_name(f: CountForm) -> &'static str {
    match f {
        CountForm::InverseSqrt => "inverse_sqrt",
        CountForm::FirstVisit => "first_visit",
    }
}

/// Canonical key/value pairs of a fully resolved config.
pub fn to_pairs(cfg: &TrainConfig) -> BTreeMap<String, String> {
    let b = &cfg.bonus;
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("algo", b.algo.name().into());
    put("env", cfg.env.to_string());
    put("extractor", b.extractor.name().into());
    put("alpha", b.alpha.to_string());
    put("beta", b.beta.to_string());
    put("ridge", b.ridge.to_string());
    put("normalize", b.normalize.to_string());
    put("count_form", count_form_name(b.count_form).into());
    put("encoder", cfg.encoder.map(EncoderKind::name).unwrap_or("none").into());
    put("feature_dim", cfg.feature_dim.to_string());
    put("encoder_hidden", list(&cfg.encoder_hidden));
    put("head_hidden", cfg.head_hidden.to_string());
    put("policy_hidden", list(&cfg.policy_hidden));
    put("gamma", cfg.gamma.to_string());
    put("unroll", cfg.unroll.to_string());
    put("num_envs", cfg.num_envs.to_string());
    put("lr", cfg.lr.to_string());
    put("rms_smoothing", cfg.rms_smoothing.to_string());
    put("rms_eps", cfg.rms_eps.to_string());
    put("entropy_cost", cfg.entropy_cost.to_string());
    put("baseline_cost", cfg.baseline_cost.to_string());
    put("max_grad_norm", cfg.max_grad_norm.to_string());
    put("reward_clip", cfg.reward_clip.to_string());
    put("total_steps", cfg.total_steps.to_string());
    put("seed", cfg.seed.to_string());
    put("episodic", cfg.episodic.to_string());
    put("encoder_update_period", cfg.encoder_update_period.to_string());
    put("inverse_coef", cfg.inverse_coef.to_string());
    put("forward_coef", cfg.forward_coef.to_string());
    put("rnd_updates", cfg.rnd_updates.to_string());
    put("log_interval", cfg.log_interval.to_string());
    put("log_timing", cfg.log_timing.to_string());
    put("trunk_frozen", cfg.trunk_frozen.to_string());
    if let Some(label) = &cfg.label {
        put("label", label.clone());
    }
    m
}

/// Hex SHA-256 over `key=value\n` lines of the sorted pairs, excluding `seed`.
pub fn fingerprint(cfg: &TrainConfig) -> String {
    let mut h = Sha256::new();
    for (k, v) in to_pairs(cfg).iter().filter(|(k, _)| k.as_str() != "seed") {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(line, key, s.trim())).collect()
}

fn apply(cfg: &mut TrainConfig, line: usize, key: &str, v: &str) -> Result<()> {
    let wrap = |e: Error| err(line, format!("{key}: {e}"));
    match key {
        "algo" | "env" => {}
        "extractor" => cfg.bonus.extractor = KeyExtractor::parse(v).map_err(wrap)?,
        "alpha" => cfg.bonus.alpha = parse_num(line, key, v)?,
        "beta" => cfg.bonus.beta = parse_num(line, key, v)?,
        "ridge" => cfg.bonus.ridge = parse_num(line, key, v)?,
        "normalize" => cfg.bonus.normalize = parse_bool(line, key, v)?,
        "count_form" => {
            cfg.bonus.count_form = match v {
                "inverse_sqrt" => CountForm::InverseSqrt,
                "first_visit" => CountForm::FirstVisit,
                _ => return Err(err(line, format!("{key}: unknown count form {v:?}"))),
            }
        }
        "encoder" => {
            cfg.encoder = if v == "none" {
                None
            } else {
                Some(EncoderKind::parse(v).map_err(wrap)?)
            }
        }
        "feature_dim" => cfg.feature_dim = parse_num(line, key, v)?,
        "encoder_hidden" => cfg.encoder_hidden = parse_list(line, key, v)?,
        "head_hidden" => cfg.head_hidden = parse_num(line, key, v)?,
        "policy_hidden" => cfg.policy_hidden = parse_list(line, key, v)?,
        "gamma" => cfg.gamma = parse_num(line, key, v)?,
        "unroll" => cfg.unroll = parse_num(line, key, v)?,
        "num_envs" => cfg.num_envs = parse_num(line, key, v)?,
        "lr" => cfg.lr = parse_num(line, key, v)?,
        "rms_smoothing" => cfg.rms_smoothing = parse_num(line, key, v)?,
        "rms_eps" => cfg.rms_eps = parse_num(line, key, v)?,
        "entropy_cost" => cfg.entropy_cost = parse_num(line, key, v)?,
        "baseline_cost" => cfg.baseline_cost = parse_num(line, key, v)?,
        "max_grad_norm" => cfg.max_grad_norm = parse_num(line, key, v)?,
        "reward_clip" => cfg.reward_clip = parse_num(line, key, v)?,
        "total_steps" => cfg.total_steps = parse_num(line, key, v)?,
        "seed" => cfg.seed = parse_num(line, key, v)?,
        "episodic" => cfg.episodic = parse_bool(line, key, v)?,
        "encoder_update_period" => cfg.encoder_update_period = parse_num(line, key, v)?,
        "inverse_coef" => cfg.inverse_coef = parse_num(line, key, v)?,
        "forward_coef" => cfg.forward_coef = parse_num(line, key, v)?,
        "rnd_updates" => cfg.rnd_updates = parse_num(line, key, v)?,
        "log_interval" => cfg.log_interval = parse_num(line, key, v)?,
        "log_timing" => cfg.log_timing = parse_bool(line, key, v)?,
        "trunk_frozen" => cfg.trunk_frozen = parse_bool(line, key, v)?,
        "label" => cfg.label = Some(v.to_string()),
        _ => return Err(err(line, format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Builds a config from `(line, key, value)` entries.
fn resolve(entries: &[(usize, String, String)]) -> Result<TrainConfig> {
    let find = |k: &str| entries.iter().find(|(_, key, _)| key == k);
    let (al, _, algo) = find("algo").ok_or_else(|| err(0, "missing required key \"algo\""))?;
    let (el, _, env) = find("env").ok_or_else(|| err(0, "missing required key \"env\""))?;
    let algo = Algo::parse(algo).map_err(|e| err(*al, format!("algo: {e}")))?;
    let env = EnvConfig::parse(env).map_err(|e| err(*el, format!("env: {e}")))?;
    let mut cfg = TrainConfig::new(algo, env);
    for (line, key, v) in entries {
        apply(&mut cfg, *line, key, v)?;
    }
    cfg.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seeds = None;
    let mut out = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, got {body:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err(line, "empty key"));
        }
        let dup = entries.iter().any(|(_, key, _)| key == k)
            || (k == "seeds" && seeds.is_some())
            || (k == "out" && out.is_some());
        if dup {
            return Err(err(line, format!("duplicate key {k:?}")));
        }
        match k {
            "seeds" => seeds = Some(parse_list::<u64>(line, k, v)?),
            "out" => out = Some(PathBuf::from(v)),
            _ => entries.push((line, k.to_string(), v.to_string())),
        }
    }
    let train = resolve(&entries)?;
    let seeds = seeds.unwrap_or_else(|| vec![train.seed]);
    if seeds.is_empty() {
        return Err(err(0, "seeds: empty list"));
    }
    Ok(RunConfig { train, seeds, out })
}

/// Rebuilds a config from the pairs stored in a run record.
pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<TrainConfig> {
    let entries: Vec<_> = pairs.iter().map(|(k, v)| (0, k.clone(), v.clone())).collect();
    resolve(&entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str =
        "# e3b on the timer task\nalgo = e3b\nenv = multiroom-r3-s13-timer   # trailing\n\ntotal_steps = 1000\n";

    #[test]
    fn parses_and_round_trips() {
        let rc = parse_config(BASIC).unwrap();
        assert_eq!(rc.train.total_steps, 1000);
        assert_eq!(rc.seeds, vec![0]);
        let back = from_pairs(&to_pairs(&rc.train)).unwrap();
        assert_eq!(back, rc.train);
    }

    #[test]
    fn errors_name_the_key_and_line() {
        let e = parse_config("algo = e3b\nenv = keyuse-s9\nlr = fast\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 3") && e.contains("lr"), "{e}");
        let e = parse_config("algo = e3b\nenv = keyuse-s9\nwarp = 9\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("warp"), "{e}");
        let e = parse_config("env = keyuse-s9\n").unwrap_err().to_string();
        assert!(e.contains("algo"), "{e}");
        assert!(parse_config("algo = e3b\nalgo = rnd\nenv = keyuse-s9\n").is_err());
    }

    #[test]
    fn fingerprint_ignores_seed_and_order() {
        let a = parse_config("algo = e3b\nenv = keyuse-s9\nseed = 1\n").unwrap();
        let b = parse_config("seed = 2\nenv = keyuse-s9\nalgo = e3b\n").unwrap();
        assert_eq!(fingerprint(&a.train), fingerprint(&b.train));
        let c = parse_config("algo = e3b\nenv = keyuse-s9\nbeta = 0.5\n").unwrap();
        assert_ne!(fingerprint(&a.train), fingerprint(&c.train));
        assert_eq!(fingerprint(&a.train).len(), 64);
    }

    #[test]
    fn seeds_list() {
        let rc = parse_config("algo = none\nenv = keyuse-s9\nseeds = 0, 1, 2, 3, 4\n").unwrap();
        assert_eq!(rc.seeds, vec![0, 1, 2, 3, 4]);
    }
}

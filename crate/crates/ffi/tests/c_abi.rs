use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use thrifty_core::critic::{CriticConfig, RiskCritic};
use thrifty_core::ensemble::{EnsembleConfig, EnsemblePolicy};
use thrifty_core::env::{Action, State};
use thrifty_core::gate::GateThresholds;
use thrifty_core::persist::{save_critic, save_policy, CheckpointMeta};
use thrifty_core::SimRng;
use thrifty_ffi::*;

const ACTION_MAX: f64 = 0.05;

fn models(seed: u64) -> (EnsemblePolicy, RiskCritic) {
    let mut rng = SimRng::seed_from_u64(seed);
    let policy = EnsemblePolicy::new(EnsembleConfig::default(), ACTION_MAX, &mut rng).unwrap();
    let critic = RiskCritic::new(CriticConfig::default(), ACTION_MAX, &mut rng).unwrap();
    (policy, critic)
}

fn thresholds() -> GateThresholds {
    GateThresholds {
        risk_intervene: 0.6,
        risk_cede: 0.4,
        novelty_intervene: 0.01,
        discrepancy_cede: 0.002,
        budget: 0.01,
    }
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    unsafe {
        thrifty_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

struct Loaded {
    policy: *mut ThriftyPolicy,
    critic: *mut ThriftyCritic,
    core_policy: EnsemblePolicy,
    core_critic: RiskCritic,
    _dir: tempfile::TempDir,
}

impl Drop for Loaded {
    fn drop(&mut self) {
        unsafe {
            thrifty_policy_free(self.policy);
            thrifty_critic_free(self.critic);
        }
    }
}

fn load(with_thresholds: bool) -> Loaded {
    let dir = tempfile::tempdir().unwrap();
    let (core_policy, core_critic) = models(3);
    let pp = dir.path().join("policy.json");
    let cp = dir.path().join("critic.json");
    save_policy(&pp, &core_policy, CheckpointMeta::default()).unwrap();
    save_critic(
        &cp,
        &core_critic,
        with_thresholds.then(thresholds),
        CheckpointMeta::default(),
    )
    .unwrap();
    let mut policy = ptr::null_mut();
    let mut critic = ptr::null_mut();
    unsafe {
        assert_eq!(
            thrifty_policy_load(c_path(&pp).as_ptr(), &mut policy),
            ThriftyStatus::Ok
        );
        assert_eq!(
            thrifty_critic_load(c_path(&cp).as_ptr(), &mut critic),
            ThriftyStatus::Ok
        );
    }
    Loaded {
        policy,
        critic,
        core_policy,
        core_critic,
        _dir: dir,
    }
}

#[test]
fn burden_and_quantile_match_hand_values() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(thrifty_burden(3.0, 5.0, 2.0, &mut out), ThriftyStatus::Ok);
        assert_eq!(out, 21.0);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(
            thrifty_nearest_rank_quantile(v.as_ptr(), v.len(), 0.9, &mut out),
            ThriftyStatus::Ok
        );
        assert_eq!(out, 9.0);
        assert_eq!(
            thrifty_nearest_rank_quantile(v.as_ptr(), v.len(), 0.5, &mut out),
            ThriftyStatus::Ok
        );
        assert_eq!(out, 5.0);
        assert_eq!(
            thrifty_nearest_rank_quantile(v.as_ptr(), 0, 0.5, &mut out),
            ThriftyStatus::InvalidArgument
        );
        assert!(last_error().contains("empty"));
    }
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            thrifty_burden(1.0, 1.0, 1.0, ptr::null_mut()),
            ThriftyStatus::NullPointer
        );
        assert_eq!(
            thrifty_nearest_rank_quantile(ptr::null(), 3, 0.5, &mut out),
            ThriftyStatus::NullPointer
        );
        assert_eq!(
            thrifty_env_reset(ptr::null_mut(), [0.0; 2].as_mut_ptr()),
            ThriftyStatus::NullPointer
        );
        assert!(last_error().contains("env"));
        thrifty_env_free(ptr::null_mut());
        thrifty_policy_free(ptr::null_mut());
        thrifty_critic_free(ptr::null_mut());
        thrifty_gate_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates_and_reports_length() {
    unsafe {
        let mut out = 0.0;
        thrifty_burden(-1.0, 1.0, 1.0, &mut out);
        let full = thrifty_last_error(ptr::null_mut(), 0);
        assert!(full > 4);
        let mut buf = [0x7f as c_char; 4];
        assert_eq!(thrifty_last_error(buf.as_mut_ptr(), buf.len()), full);
        assert_eq!(buf[3], 0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn version_string_matches_crate() {
    let v = unsafe { CStr::from_ptr(thrifty_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn env_is_deterministic_per_seed() {
    let run = |seed| unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(
            thrifty_env_new(ptr::null(), seed, &mut env),
            ThriftyStatus::Ok
        );
        let mut s = [0.0; 2];
        assert_eq!(thrifty_env_reset(env, s.as_mut_ptr()), ThriftyStatus::Ok);
        let mut trace = vec![s];
        for _ in 0..20 {
            let mut next = [0.0; 2];
            let mut goal = true;
            let a = [ACTION_MAX, 0.0];
            assert_eq!(
                thrifty_env_step(env, s.as_ptr(), a.as_ptr(), next.as_mut_ptr(), &mut goal),
                ThriftyStatus::Ok
            );
            s = next;
            trace.push(s);
        }
        thrifty_env_free(env);
        trace
    };
    assert_eq!(run(11), run(11));
    assert_ne!(run(11), run(12));
}

#[test]
fn env_goal_indicator_and_config() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(thrifty_env_new(ptr::null(), 0, &mut env), ThriftyStatus::Ok);
        let cfg = thrifty_core::env::EnvConfig::default();
        let mut inside = false;
        assert_eq!(
            thrifty_env_in_goal(env, cfg.goal_center.as_ptr(), &mut inside),
            ThriftyStatus::Ok
        );
        assert!(inside);
        assert_eq!(
            thrifty_env_in_goal(env, [0.0, 0.0].as_ptr(), &mut inside),
            ThriftyStatus::Ok
        );
        assert!(!inside);
        thrifty_env_free(env);

        let bad = CString::new("{ not json").unwrap();
        assert_eq!(
            thrifty_env_new(bad.as_ptr(), 0, &mut env),
            ThriftyStatus::Format
        );
        let custom = CString::new(r#"{"goal_radius": 0.2}"#).unwrap();
        assert_eq!(
            thrifty_env_new(custom.as_ptr(), 0, &mut env),
            ThriftyStatus::Ok
        );
        thrifty_env_free(env);
    }
}

#[test]
fn policy_and_critic_agree_with_core() {
    let m = load(true);
    for (x, y) in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.8)] {
        let s = [x, y];
        let mut a = [0.0; 2];
        let mut nov = -1.0;
        let mut risk = -1.0;
        unsafe {
            assert_eq!(
                thrifty_policy_act(m.policy, s.as_ptr(), a.as_mut_ptr(), &mut nov),
                ThriftyStatus::Ok
            );
            assert_eq!(
                thrifty_policy_act(m.policy, s.as_ptr(), a.as_mut_ptr(), ptr::null_mut()),
                ThriftyStatus::Ok
            );
            assert_eq!(
                thrifty_critic_risk(m.critic, s.as_ptr(), a.as_ptr(), &mut risk),
                ThriftyStatus::Ok
            );
        }
        let (core_a, core_nov) = m.core_policy.action_and_novelty(&State(s));
        assert_eq!(a, core_a.0);
        assert_eq!(nov, core_nov);
        assert_eq!(risk, m.core_critic.risk(&State(s), &Action(a)));
    }
}

#[test]
fn gate_causes_follow_thresholds() {
    let m = load(true);
    let s = [0.3, 0.4];
    let (a, nov) = m.core_policy.action_and_novelty(&State(s));
    let risk = m.core_critic.risk(&State(s), &a);
    let cases = [
        (nov - 1e-9, 2.0, ThriftySwitchCause::Novelty),
        (nov + 1.0, risk - 1e-9, ThriftySwitchCause::Risk),
        (nov + 1.0, 2.0, ThriftySwitchCause::None),
        // Novelty is checked first when both fire.
        (nov - 1e-9, risk - 1e-9, ThriftySwitchCause::Novelty),
    ];
    for (novelty_intervene, risk_intervene, expected) in cases {
        let t = ThriftyThresholds {
            novelty_intervene,
            risk_intervene,
            ..thresholds().into()
        };
        unsafe {
            let mut gate = ptr::null_mut();
            assert_eq!(
                thrifty_gate_new(m.policy, m.critic, &t, &mut gate),
                ThriftyStatus::Ok
            );
            let mut cause = ThriftySwitchCause::Risk;
            assert_eq!(
                thrifty_gate_intervene(gate, s.as_ptr(), &mut cause),
                ThriftyStatus::Ok
            );
            assert_eq!(cause, expected, "thresholds {t:?}");
            thrifty_gate_free(gate);
        }
    }
}

#[test]
fn gate_cede_requires_agreement_and_low_risk() {
    let m = load(true);
    let s = [0.3, 0.4];
    let robot = m.core_policy.policy_action(&State(s)).0;
    let far = [robot[0] + 0.05, robot[1]];
    let risk = m.core_critic.risk(&State(s), &Action(robot));
    let cases = [
        (1.0, risk + 1e-9, robot, true),
        (1.0, risk - 1e-9, robot, false),
        (1e-4, risk + 1e-9, far, false),
    ];
    for (discrepancy_cede, risk_cede, human, expected) in cases {
        let t = ThriftyThresholds {
            discrepancy_cede,
            risk_cede,
            ..thresholds().into()
        };
        unsafe {
            let mut gate = ptr::null_mut();
            assert_eq!(
                thrifty_gate_new(m.policy, m.critic, &t, &mut gate),
                ThriftyStatus::Ok
            );
            let mut cede = !expected;
            assert_eq!(
                thrifty_gate_cede(gate, s.as_ptr(), human.as_ptr(), &mut cede),
                ThriftyStatus::Ok
            );
            assert_eq!(cede, expected);
            thrifty_gate_free(gate);
        }
    }
}

#[test]
fn gate_uses_checkpoint_thresholds_and_outlives_inputs() {
    let m = load(true);
    unsafe {
        let mut gate = ptr::null_mut();
        assert_eq!(
            thrifty_gate_new(m.policy, m.critic, ptr::null(), &mut gate),
            ThriftyStatus::Ok
        );
        drop(m);
        let mut t = ThriftyThresholds::from(GateThresholds {
            budget: 0.0,
            ..thresholds()
        });
        assert_eq!(thrifty_gate_thresholds(gate, &mut t), ThriftyStatus::Ok);
        assert_eq!(GateThresholds::from(t), thresholds());
        let mut cause = ThriftySwitchCause::None;
        assert_eq!(
            thrifty_gate_intervene(gate, [0.5, 0.5].as_ptr(), &mut cause),
            ThriftyStatus::Ok
        );
        thrifty_gate_free(gate);
    }

    let bare = load(false);
    unsafe {
        let mut gate = ptr::null_mut();
        assert_eq!(
            thrifty_gate_new(bare.policy, bare.critic, ptr::null(), &mut gate),
            ThriftyStatus::InvalidArgument
        );
        assert!(gate.is_null());
        assert!(last_error().contains("thresholds"));
    }
}

#[test]
fn checkpoint_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, critic) = models(1);
    let pp = dir.path().join("policy.json");
    let cp = dir.path().join("critic.json");
    save_policy(&pp, &policy, CheckpointMeta::default()).unwrap();
    save_critic(&cp, &critic, None, CheckpointMeta::default()).unwrap();
    let mut p = ptr::null_mut();
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(
            thrifty_policy_load(c_path(&cp).as_ptr(), &mut p),
            ThriftyStatus::WrongKind
        );
        assert_eq!(
            thrifty_critic_load(c_path(&pp).as_ptr(), &mut c),
            ThriftyStatus::WrongKind
        );
        assert!(last_error().contains("policy-ensemble"));

        let text = std::fs::read_to_string(&pp)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        let future = dir.path().join("future.json");
        std::fs::write(&future, text).unwrap();
        assert_eq!(
            thrifty_policy_load(c_path(&future).as_ptr(), &mut p),
            ThriftyStatus::VersionMismatch
        );
        assert!(last_error().contains("version 2"));

        let missing = dir.path().join("missing.json");
        assert_eq!(
            thrifty_policy_load(c_path(&missing).as_ptr(), &mut p),
            ThriftyStatus::Io
        );
        let garbage = dir.path().join("garbage.json");
        std::fs::write(&garbage, "{").unwrap();
        assert_eq!(
            thrifty_policy_load(c_path(&garbage).as_ptr(), &mut p),
            ThriftyStatus::Format
        );
        assert!(p.is_null() && c.is_null());
        assert_eq!(
            thrifty_policy_load(ptr::null(), &mut p),
            ThriftyStatus::NullPointer
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/thrifty.h"))
            .unwrap();
    for name in [
        "thrifty_last_error",
        "thrifty_version",
        "thrifty_env_new",
        "thrifty_env_step",
        "thrifty_policy_load",
        "thrifty_critic_risk",
        "thrifty_gate_new",
        "thrifty_gate_intervene",
        "thrifty_gate_cede",
        "thrifty_nearest_rank_quantile",
        "thrifty_burden",
        "THRIFTY_STATUS_WRONG_KIND",
        "THRIFTY_SWITCH_CAUSE_RISK",
        "typedef struct ThriftyGate ThriftyGate",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs `tests/c/smoke.c` against the static library. Skipped when
/// no C compiler or built archive is available.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let Some(profile_dir) = exe.parent().and_then(Path::parent) else {
        return;
    };
    let archive = profile_dir.join("libthrifty_ffi.a");
    if !archive.exists() {
        eprintln!("skipping: {} not built", archive.display());
        return;
    }
    let out_dir = tempfile::tempdir().unwrap();
    let bin = out_dir.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "cc failed"),
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    }
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "smoke exited with {:?}",
        out.status.code()
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

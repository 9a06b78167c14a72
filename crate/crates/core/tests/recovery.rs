mod common;

use std::fs;

use common::{small_config, T0};
use recollect::dimf::Feedback;
use recollect::journal::read_journal;
use recollect::model::HOUR;
use recollect::snapshot::{encode_snapshot, read_snapshot};
use recollect::{recover, Engine, EngineConfig, EngineError, EntryId, UtteranceType};

fn populate(engine: &mut Engine, from: i64, n: usize) {
    for i in 0..n {
        let t = T0 + from * HOUR + i as i64 * HOUR;
        let user = ["ada", "bo"][i % 2];
        let text = format!("walked to the bakery {i} and felt happy about the sad rain");
        engine.ingest(user, UtteranceType::UserUtterance, &text, t).unwrap();
        if i % 9 == 8 {
            engine.compact(t).unwrap();
            engine.prune_if_needed(t).unwrap();
        }
    }
}

#[test]
fn empty_journal_recovers_empty_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j.log");
    let r = recover(&small_config(), &path, None).unwrap();
    assert!(r.state.is_empty());
    assert_eq!(r.state.last_seq(), 0);
    Engine::create(small_config(), &path).unwrap();
    let r = recover(&small_config(), &path, None).unwrap();
    assert!(r.state.is_empty() && !r.truncated_tail);
}

#[test]
fn snapshot_plus_tail_equals_full_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (journal, snap) = (dir.path().join("j.log"), dir.path().join("s.txt"));
    let mut engine = Engine::create(small_config(), &journal).unwrap();
    populate(&mut engine, 0, 60);
    engine.write_snapshot(&snap).unwrap();

    // snapshot with an empty tail
    let r = recover(&small_config(), &journal, Some(&snap)).unwrap();
    assert_eq!(encode_snapshot(&r.state), engine.snapshot_string());

    populate(&mut engine, 100, 45);
    let live = engine.snapshot_string();
    let with_snapshot = recover(&small_config(), &journal, Some(&snap)).unwrap();
    let from_scratch = recover(&small_config(), &journal, None).unwrap();
    assert_eq!(encode_snapshot(&with_snapshot.state), live);
    assert_eq!(encode_snapshot(&from_scratch.state), live);
    assert!(with_snapshot.state.check_invariants(true).is_ok());
}

#[test]
fn torn_tail_is_dropped_and_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j.log");
    let mut engine = Engine::create(small_config(), &path).unwrap();
    populate(&mut engine, 0, 20);
    let before_last = {
        let c = read_journal(&path).unwrap();
        let mut s = recollect::EngineState::new(small_config());
        for rec in &c.records[..c.records.len() - 1] {
            s.apply(rec).unwrap();
        }
        encode_snapshot(&s)
    };
    drop(engine);

    let text = fs::read_to_string(&path).unwrap();
    let last_start = text[..text.len() - 1].rfind('\n').unwrap() + 1;
    for cut in [last_start + 1, (last_start + text.len()) / 2, text.len() - 1] {
        fs::write(&path, &text[..cut]).unwrap();
        let r = recover(&small_config(), &path, None).unwrap();
        assert!(r.truncated_tail, "cut at {cut}");
        assert_eq!(r.journal_valid_len, last_start as u64);
        assert_eq!(encode_snapshot(&r.state), before_last);
    }

    // a reopened engine cuts the torn bytes and keeps appending
    let mut engine = Engine::open(small_config(), &path, None).unwrap();
    engine
        .ingest("ada", UtteranceType::UserUtterance, "back again", T0 + 100 * HOUR)
        .unwrap();
    let r = recover(&small_config(), &path, None).unwrap();
    assert!(!r.truncated_tail);
    assert_eq!(encode_snapshot(&r.state), engine.snapshot_string());
}

#[test]
fn damage_before_the_tail_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j.log");
    let mut engine = Engine::create(small_config(), &path).unwrap();
    populate(&mut engine, 0, 10);
    drop(engine);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // line 0 is the header; flip a byte inside record 4
    lines[4] = lines[4].replacen("ada", "adb", 1).replacen("bo", "bp", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    match recover(&small_config(), &path, None) {
        Err(EngineError::Corrupt { seq, .. }) => assert_eq!(seq, 4),
        other => panic!("expected corruption error, got {other:?}"),
    }
}

#[test]
fn snapshot_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.txt");
    let mut engine = Engine::in_memory(small_config()).unwrap();
    populate(&mut engine, 0, 5);
    engine.write_snapshot(&snap).unwrap();
    assert!(read_snapshot(&snap, &small_config()).is_ok());
    let other = EngineConfig {
        summary_cap_chars: 99,
        ..small_config()
    };
    assert!(matches!(read_snapshot(&snap, &other), Err(EngineError::ConfigMismatch { .. })));
}

#[test]
fn store_bytes_after_pruning_all_but_a_pinned_entry() {
    let config = EngineConfig {
        high_watermark_bytes: 2,
        low_watermark_bytes: 1,
        ..EngineConfig::default()
    };
    let mut engine = Engine::in_memory(config).unwrap();
    for i in 0..6 {
        engine
            .ingest("ada", UtteranceType::UserUtterance, &format!("note {i} about tea"), T0 + i * HOUR)
            .unwrap();
    }
    let kept = engine.apply_feedback(EntryId(3), Feedback::Pin, T0 + 7 * HOUR).unwrap();
    let report = engine.prune_user("ada", T0 + 8 * HOUR).unwrap();
    assert!(report.threshold_tau.is_infinite() && report.warning);
    assert_eq!(report.pruned_ids.len(), 5);
    // the pruned content survives as one meta entry for the week
    let metas: Vec<_> = engine.state().entries().filter(|e| e.id.is_composite()).collect();
    assert_eq!(metas.len(), 1);
    let expected = recollect::model::entry_bytes(&kept) + recollect::model::entry_bytes(metas[0]);
    assert_eq!(engine.store_bytes("ada"), expected);
    assert_eq!(report.bytes_after, expected);
}

#[test]
fn read_back_and_byte_sum_after_random_ingests() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
    let mut engine = Engine::in_memory(EngineConfig::default()).unwrap();
    assert_eq!(engine.store_bytes("nobody"), 0);
    let mut t = T0;
    for _ in 0..100 {
        t += rng.random_range(0..HOUR);
        let user = format!("u{}", rng.random_range(0..4));
        let text: String = (0..rng.random_range(0..12))
            .map(|_| ["cake ", "lonely ", "bus; ", "=x ", "happy ", "é "][rng.random_range(0..6)])
            .collect();
        let (e, _) = engine.ingest(&user, UtteranceType::UserUtterance, &text, t).unwrap();
        assert_eq!(engine.state().get(e.id), Some(&e));
        assert_eq!((e.level, e.covered_count, e.pinned), (0, 1, false));
    }
    let (total, per_user) = common::brute_force_bytes(engine.state());
    assert_eq!(engine.state().total_bytes(), total);
    for (u, b) in per_user {
        assert_eq!(engine.store_bytes(&u), b);
    }
}

#[test]
fn shared_engine_serves_readers_while_writing() {
    let shared = Engine::in_memory(small_config()).unwrap().into_shared();
    let writer = {
        let s = shared.clone();
        std::thread::spawn(move || {
            for i in 0..200 {
                s.write()
                    .ingest("ada", UtteranceType::UserUtterance, &format!("walk {i}"), T0 + i * 60)
                    .unwrap();
            }
        })
    };
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let s = shared.clone();
            std::thread::spawn(move || {
                for _ in 0..50 {
                    let view = s.view();
                    assert!(view.check_invariants(false).is_ok());
                    let _ = s.read().search(Some("ada"), "walk", 3);
                }
            })
        })
        .collect();
    writer.join().unwrap();
    for r in readers {
        r.join().unwrap();
    }
    assert_eq!(shared.read().state().len(), 200);
}

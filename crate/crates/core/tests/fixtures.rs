//! The bundled fixtures are exactly what the generator produces; run
//! `cargo run --example make_fixtures` after changing it.

mod common;

use std::fs;

use toolrec::agent::Trajectory;
use toolrec::corpus::dataset_stats;
use toolrec::synthetic::{generate, FIXTURES};

use common::{fixtures_dir, load_fixture};

#[test]
fn bundled_corpora_match_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    for shape in FIXTURES {
        let dir = tmp.path().join(shape.name);
        generate(&shape.config()).unwrap().write(&dir).unwrap();
        for entry in fs::read_dir(&dir).unwrap() {
            let fresh = entry.unwrap().path();
            let name = fresh.file_name().unwrap();
            let bundled = fixtures_dir().join(shape.name).join(name);
            assert!(
                fs::read(&bundled).unwrap() == fs::read(&fresh).unwrap(),
                "{} is stale; regenerate the fixtures",
                bundled.display()
            );
        }
    }
}

#[test]
fn loaded_fixtures_keep_their_shape() {
    for shape in FIXTURES {
        let ds = load_fixture(shape.name);
        let r = &ds.report;
        assert_eq!((r.malformed_interactions, r.malformed_items, r.malformed_users), (0, 0, 0), "{}", shape.name);
        let s = dataset_stats(&ds.interactions).unwrap();
        assert_eq!((s.n_users, s.n_items, s.n_interactions), (shape.users, shape.items, shape.interactions));
    }
}

#[test]
fn reward_fixture_is_a_single_five_call_episode() {
    let trajs: Vec<Trajectory> = toolrec::jsonl::read(&fixtures_dir().join("reward_check/trajectory.jsonl")).unwrap();
    assert_eq!(trajs.len(), 1);
    assert_eq!((trajs[0].n_tool_calls, trajs[0].rank_of_gold()), (5, Some(1)));
}

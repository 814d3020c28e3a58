//! Property suites for the tools, the step grammar and the episode loop.

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};
use toolrec::agent::{run_batch, BatchConfig, EpisodeLimits, Outcome, Step, Trajectory};
use toolrec::corpus::SplitRole;
use toolrec::pipeline::World;
use toolrec::policy::{
    parse_step, render_step, tool_message, validate_format, Action, CompletionRequest, EpisodeMeta, FinalRanking,
    FnPolicy, Message, ParsedStep, Policy, RandomPolicy, RecordingPolicy, Role, SamplingParams,
};
use toolrec::seed;
use toolrec::toolbox::{page_bounds, Observation, ToolCall, ToolContext};
use toolrec::ItemId;

use common::{crafted, ids, load_fixture};

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| World::offline(load_fixture("mini"), 7).unwrap())
}

fn reasoning() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.;:!?()'\n-]{0,60}"
}

fn json_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i32>().prop_map(Value::from),
        any::<bool>().prop_map(Value::from),
        "[a-zA-Z0-9 _.-]{0,10}".prop_map(Value::from),
        Just(Value::Null),
    ]
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        ("[a-z_]{1,20}", prop::collection::btree_map("[a-z_]{1,6}", json_value(), 0..4)).prop_map(|(name, args)| {
            Action::ToolCall(ToolCall {
                name,
                arguments: args.into_iter().collect::<Map<String, Value>>(),
            })
        }),
        prop::collection::vec("[A-Za-z0-9_.-]{1,10}", 1..12).prop_map(|v| Action::Rank {
            ranking: FinalRanking(v.into_iter().map(ItemId::new).collect()),
        }),
    ]
}

proptest! {
    #[test]
    fn rendered_steps_parse_back(reasoning in reasoning(), action in action()) {
        let step = ParsedStep { reasoning, action };
        let text = render_step(&step).unwrap();
        prop_assert_eq!(parse_step(&text).unwrap(), step);
    }

    #[test]
    fn pages_tile_the_history(n in 1..60usize, k in 1..10usize) {
        let pages = n.div_ceil(k);
        let mut covered: Vec<usize> = Vec::new();
        for m in (1..=pages).rev() {
            let (range, exhausted) = page_bounds(n, m, k);
            prop_assert!(range.len() <= k && !range.is_empty());
            prop_assert_eq!(exhausted, range.start == 0, "m={}", m);
            prop_assert_eq!(exhausted, m == pages);
            covered.extend(range);
        }
        prop_assert_eq!(covered, (0..n).collect::<Vec<_>>());
        let (past, exhausted) = page_bounds(n, pages + 1, k);
        prop_assert!(past.is_empty() && exhausted);
    }
}

#[derive(Debug, Clone)]
enum StepKind {
    Tool,
    Rank(Vec<usize>),
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    let kind = prop_oneof![
        Just(StepKind::Tool),
        prop::collection::vec(0..12usize, 8..12).prop_map(StepKind::Rank),
        Just(StepKind::Rank((0..10).collect())),
        Just(StepKind::Rank((0..10).rev().collect())),
    ];
    (
        prop::collection::vec(kind, 0..20),
        prop::sample::select(Outcome::ALL.to_vec()),
        any::<bool>(),
    )
        .prop_map(|(kinds, outcome, rejected)| {
            let items = ids(12);
            let mut t = crafted(Outcome::Ranked, 0, 1);
            t.steps = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| match k {
                    StepKind::Tool => Step {
                        t: i,
                        reasoning: "r".into(),
                        action: Action::ToolCall(ToolCall::new("user_profile_search", json!({}))),
                        observation: Some(Observation::success("user_profile_search", "p".into())),
                        raw: "x".into(),
                    },
                    StepKind::Rank(order) => Step {
                        t: i,
                        reasoning: "r".into(),
                        action: Action::Rank {
                            ranking: FinalRanking(order.iter().map(|p| items[*p].clone()).collect()),
                        },
                        observation: None,
                        raw: "y".into(),
                    },
                })
                .collect();
            t.final_ranking = t.steps.last().and_then(|s| match &s.action {
                Action::Rank { ranking } => Some(ranking.clone()),
                _ => None,
            });
            t.outcome = outcome;
            t.rejected_turn = rejected.then(|| "bad".into());
            t.n_tool_calls = t.count_tool_calls();
            t
        })
}

proptest! {
    #[test]
    fn valid_format_implies_a_permutation(t in trajectory()) {
        if validate_format(&t, 16) {
            let last = t.steps.last().unwrap();
            let Action::Rank { ranking } = &last.action else {
                return Err(TestCaseError::fail("valid trajectory must end on a ranking"));
            };
            prop_assert!(ranking.is_permutation_of(&t.candidates));
            prop_assert_eq!(t.outcome, Outcome::Ranked);
            prop_assert!(t.steps.len() <= 16);
        }
    }
}

fn random_value(rng: &mut impl Rng, users: &[&str], items: &[&str]) -> Value {
    match rng.gen_range(0..9) {
        0 => json!(rng.gen_range(-3..30)),
        1 => json!(u64::MAX),
        2 => json!(rng.gen_range(-2.0..2.0)),
        3 => json!(users.choose(rng).unwrap()),
        4 => json!(items.choose(rng).unwrap()),
        5 => json!("nobody <think>"),
        6 => json!(rng.gen::<bool>()),
        7 => Value::Null,
        _ => json!([1, "a"]),
    }
}

#[test]
fn dispatch_never_panics_on_ten_thousand_random_calls() {
    let w = world();
    let users: Vec<&str> = w.toolbox.indexes().histories.keys().map(|u| u.as_str()).collect();
    let items: Vec<&str> = w.toolbox.indexes().catalog.items.keys().map(|i| i.as_str()).collect();
    let mut names: Vec<String> = w.toolbox.registry().names().iter().map(|s| s.to_string()).collect();
    names.extend(["", " ", "USER_PROFILE_SEARCH", "user_profile_search ", "rm -rf"].map(String::from));
    let keys = ["user_id", "m", "k", "item_id", "top_k", "k1", "k2", "seed", "x"];
    let case = &w.cases(SplitRole::Test)[0];
    let ctx = ToolContext {
        user: case.split.user.clone(),
        history: case.split.train_prefix.clone(),
        held_out: Some(case.split.held_out.clone()),
        seed: 3,
    };
    let mut rng = seed::rng(2024);
    let (mut ok, mut failed) = (0, 0);
    for _ in 0..10_000 {
        let name = names.choose(&mut rng).unwrap().clone();
        let mut args = Map::new();
        for _ in 0..rng.gen_range(0..4) {
            let key = keys.choose(&mut rng).unwrap();
            args.insert(key.to_string(), random_value(&mut rng, &users, &items));
        }
        let call = ToolCall { name, arguments: args };
        let obs = w.toolbox.dispatch(&call, rng.gen_bool(0.5).then_some(&ctx));
        assert_eq!(obs.ok, obs.error.is_none(), "{call:?} -> {obs:?}");
        if obs.ok {
            ok += 1;
        } else {
            failed += 1;
            assert!(!obs.error.unwrap().is_empty());
        }
    }
    assert!(ok > 0 && failed > 0, "ok {ok}, failed {failed}");
}

#[test]
fn random_episodes_never_show_the_held_out_item() {
    let w = world();
    let mut cases = w.cases(SplitRole::Test);
    cases.extend(w.cases(SplitRole::Validation));
    let batch = BatchConfig {
        repeats: 3,
        ..BatchConfig::default()
    };
    let trajs = run_batch(&RandomPolicy { tool_calls: 12 }, &w.toolbox, &cases, &batch).unwrap();
    let mut observations = 0;
    for t in &trajs {
        assert!(!t.leaks(&t.gold), "{} leaked {}", t.case_id, t.gold);
        assert_eq!(t.n_tool_calls, t.count_tool_calls());
        for s in &t.steps {
            assert_eq!(s.observation.is_some(), matches!(s.action, Action::ToolCall(_)));
        }
        observations += t.n_tool_calls;
    }
    assert!(observations > 1000);
}

#[test]
fn each_turn_sees_exactly_the_earlier_observations() {
    let w = world();
    let cases: Vec<_> = w.cases(SplitRole::Validation).into_iter().take(6).collect();
    let policy = RecordingPolicy::new(RandomPolicy { tool_calls: 6 });
    let trajs = run_batch(&policy, &w.toolbox, &cases, &BatchConfig::default()).unwrap();
    let mut by_case: BTreeMap<String, Vec<Vec<Message>>> = BTreeMap::new();
    for (case, messages) in policy.requests() {
        by_case.entry(case).or_default().push(messages);
    }
    for t in &trajs {
        let requests = &by_case[&t.case_id];
        assert_eq!(requests.len(), t.steps.len());
        for (turn, messages) in requests.iter().enumerate() {
            let seen: Vec<&str> = messages.iter().filter(|m| m.role == Role::Tool).map(|m| m.content.as_str()).collect();
            let expect: Vec<String> = t.steps[..turn]
                .iter()
                .filter_map(|s| s.observation.as_ref().map(tool_message))
                .collect();
            assert_eq!(seen, expect, "{} turn {turn}", t.case_id);
            let said: Vec<&str> =
                messages.iter().filter(|m| m.role == Role::Assistant).map(|m| m.content.as_str()).collect();
            let raw: Vec<&str> = t.steps[..turn].iter().map(|s| s.raw.as_str()).collect();
            assert_eq!(said, raw);
        }
    }
}

#[test]
fn episodes_stop_at_the_turn_limit() {
    let w = world();
    let cases: Vec<_> = w.cases(SplitRole::Test).into_iter().take(2).collect();
    let chatty = FnPolicy::new("chatty", |_| {
        Ok("<think>more</think><tool_call>{\"name\":\"user_profile_search\"}</tool_call>".into())
    });
    for limit in [1, 5, 16] {
        let batch = BatchConfig {
            limits: EpisodeLimits {
                max_turns: limit,
                ..EpisodeLimits::default()
            },
            ..BatchConfig::default()
        };
        for t in run_batch(&chatty, &w.toolbox, &cases, &batch).unwrap() {
            assert_eq!(t.outcome, Outcome::LimitExceeded);
            assert_eq!((t.steps.len(), t.n_tool_calls), (limit, limit));
            assert!(t.final_ranking.is_none());
        }
    }
}

#[test]
fn scripted_policies_are_pure() {
    let meta = EpisodeMeta {
        case_id: "u:test".into(),
        user: "u".into(),
        candidates: ids(10),
        repeat: 0,
    };
    let mut messages = vec![Message::new(Role::System, "s"), Message::new(Role::User, "u")];
    let policy = RandomPolicy { tool_calls: 2 };
    for turn in 0..3 {
        for s in [0u64, 1, 99] {
            let req = CompletionRequest {
                messages: &messages,
                params: SamplingParams::default(),
                seed: s,
                meta: &meta,
            };
            assert_eq!(policy.complete(&req).unwrap(), policy.complete(&req.clone()).unwrap());
        }
        messages.push(Message::new(Role::Assistant, format!("turn {turn}")));
        messages.push(Message::new(Role::Tool, "obs"));
    }
}

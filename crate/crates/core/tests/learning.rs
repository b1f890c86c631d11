use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semrec::aggregate::RelationshipWeights;
use semrec::graph::{Attributes, Schema, SemanticDataset};
use semrec::learn::{evaluate, learn_weights, split_holdout, LearnedWeights, Metric, SearchSpec, TraceRow};
use semrec::normalize::AdditiveMode;
use semrec::pipeline::{build_model, BuildOptions};

const MODE_ORDER: [AdditiveMode; 5] = [
    AdditiveMode::None,
    AdditiveMode::GlobalMean,
    AdditiveMode::RowMean,
    AdditiveMode::ColMean,
    AdditiveMode::RowCol,
];

/// Users and items in planted groups. `like` (the target) and `friend`
/// follow the groups; `noise` is uniform.
fn planted(seed: u64) -> SemanticDataset {
    let schema = Schema::parse(
        "ENTITY user\nENTITY item\n\
         REL like user item unweighted asymmetric\n\
         REL friend user user unweighted symmetric\n\
         REL noise user user unweighted symmetric\n",
        Path::new("p.schema"),
    )
    .unwrap();
    let mut ds = SemanticDataset::new(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (users, items, groups) = (90, 60, 3);
    let none = Attributes::new;
    for u in 0..users {
        for i in 0..items {
            let p = if u % groups == i % groups { 0.12 } else { 0.04 };
            if rng.gen::<f64>() < p {
                ds.add_edge("like", &[&format!("u{u}"), &format!("i{i}")], None, none()).unwrap();
            }
        }
    }
    for a in 0..users {
        for b in a + 1..users {
            if rng.gen::<f64>() < if a % groups == b % groups { 0.3 } else { 0.01 } {
                ds.add_edge("friend", &[&format!("u{a}"), &format!("u{b}")], None, none()).unwrap();
            }
            if rng.gen::<f64>() < 0.1 {
                ds.add_edge("noise", &[&format!("u{a}"), &format!("u{b}")], None, none()).unwrap();
            }
        }
    }
    ds
}

fn spec(seed: u64) -> SearchSpec {
    SearchSpec {
        grid: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
        metric: Metric::Auc,
        passes: 2,
        holdout: 0.2,
        seed,
        build: BuildOptions {
            k: 6,
            seed,
            ..BuildOptions::default()
        },
    }
}

/// Best row of one coordinate step: highest metric, then smaller weight,
/// then earlier mode.
fn argmax(rows: &[&TraceRow]) -> (f64, AdditiveMode, f64) {
    let mode_rank = |m: AdditiveMode| MODE_ORDER.iter().position(|&x| x == m).unwrap();
    let best = rows
        .iter()
        .min_by(|a, b| {
            b.metric
                .partial_cmp(&a.metric)
                .unwrap()
                .then(a.weight.partial_cmp(&b.weight).unwrap())
                .then(mode_rank(a.mode).cmp(&mode_rank(b.mode)))
        })
        .unwrap();
    (best.weight, best.mode, best.metric)
}

/// Replays the trace: every coordinate step must have kept its argmax, and
/// the returned point must be the last choice for every relationship.
fn check_trace(learned: &LearnedWeights, passes: usize) {
    let mut chosen: BTreeMap<String, (f64, AdditiveMode)> = BTreeMap::new();
    let mut last_score = learned.trace[0].metric;
    assert_eq!(learned.trace[0].pass, 0);
    for pass in 1..=passes {
        let mut rels: Vec<&str> = Vec::new();
        for r in learned.trace.iter().filter(|r| r.pass == pass) {
            if !rels.contains(&r.relation.as_str()) {
                rels.push(&r.relation);
            }
        }
        for rel in rels {
            let rows: Vec<&TraceRow> = learned.trace.iter().filter(|r| r.pass == pass && r.relation == rel).collect();
            let (w, m, s) = argmax(&rows);
            assert!(s >= last_score, "pass {pass} {rel}: {s} < {last_score}");
            last_score = s;
            chosen.insert(rel.to_string(), (w, m));
        }
    }
    assert_eq!(learned.score, last_score);
    for (rel, (w, m)) in chosen {
        assert_eq!(learned.weights.get(&rel), w, "{rel}");
        assert_eq!(learned.modes[&rel], m, "{rel}");
    }
}

#[test]
fn learned_weights_beat_all_ones_and_follow_the_trace() {
    let ds = planted(1);
    let spec = spec(2);
    let learned = learn_weights(&ds, "like", &spec).unwrap();
    check_trace(&learned, spec.passes);

    // Independent re-evaluation on the same split.
    let split = split_holdout(&ds, "like", spec.holdout, spec.seed).unwrap();
    let ones = build_model(&split.train, &spec.build).unwrap();
    let baseline = evaluate(&ones, &split, Metric::Auc).unwrap();
    assert_eq!(baseline, learned.trace[0].metric);

    let opts = BuildOptions {
        weights: learned.weights.clone(),
        normalization: learned.modes.clone(),
        ..spec.build.clone()
    };
    let tuned = evaluate(&build_model(&split.train, &opts).unwrap(), &split, Metric::Auc).unwrap();
    assert_eq!(tuned, learned.score);
    assert!(tuned >= baseline, "{tuned} < {baseline}");

    assert!(learned.weights.get("friend") > 0.0, "informative relation dropped");
    assert_eq!(learned.weights.get("like"), 1.0);
    assert!(
        learned.weights.get("noise") < learned.weights.get("friend"),
        "noise {} vs friend {}",
        learned.weights.get("noise"),
        learned.weights.get("friend")
    );
}

#[test]
fn search_is_deterministic() {
    let ds = planted(3);
    let mut s = spec(4);
    s.passes = 1;
    let a = learn_weights(&ds, "like", &s).unwrap();
    let b = learn_weights(&ds, "like", &s).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.weights, b.weights);
}

#[test]
fn target_only_dataset_returns_baseline() {
    let schema = Schema::parse(
        "ENTITY user\nENTITY item\nREL like user item unweighted asymmetric\n",
        Path::new("s"),
    )
    .unwrap();
    let mut ds = SemanticDataset::new(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for u in 0..20 {
        for i in 0..15 {
            if rng.gen::<f64>() < 0.2 {
                ds.add_edge("like", &[&format!("u{u}"), &format!("i{i}")], None, Attributes::new()).unwrap();
            }
        }
    }
    let learned = learn_weights(&ds, "like", &spec(1)).unwrap();
    assert_eq!(learned.trace.len(), 1);
    assert_eq!(learned.score, learned.trace[0].metric);
    assert_eq!(learned.weights, RelationshipWeights::new().with("like", 1.0).unwrap());
}

#[test]
fn too_few_target_edges_rejected() {
    let schema = Schema::parse("ENTITY user\nENTITY item\nREL like user item unweighted asymmetric\n", Path::new("s")).unwrap();
    let mut ds = SemanticDataset::new(schema);
    ds.add_edge("like", &["u1", "i1"], None, Attributes::new()).unwrap();
    assert!(learn_weights(&ds, "like", &spec(1)).is_err());
}

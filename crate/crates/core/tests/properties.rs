mod common;

use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;

use semrec::aggregate::{reduce_hyperedges, EntityLayout, Reduction, RelationshipWeights};
use semrec::graph::{dataset_to_text, parse_dataset, Attributes, Schema, SemanticDataset, SparseMatrix};
use semrec::index::{IndexParams, RecommenderIndex, Source};
use semrec::model::LatentModel;
use semrec::normalize::{AdditiveMode, NormalizationParams};
use semrec::pipeline::{prepare, BuildOptions};

const SCHEMA: &str = "\
ENTITY user
ENTITY item
ENTITY tag
REL rating user item weighted asymmetric
REL like user item unweighted asymmetric
REL friend user user unweighted symmetric
REL follows user user positive asymmetric
REL tagged user tag item unweighted asymmetric
";

#[derive(Debug, Clone)]
struct Raw {
    users: usize,
    items: usize,
    ratings: Vec<(usize, usize, i32)>,
    likes: Vec<(usize, usize)>,
    friends: Vec<(usize, usize)>,
    follows: Vec<(usize, usize, u8)>,
    tags: Vec<(usize, usize, usize)>,
}

fn raw() -> impl Strategy<Value = Raw> {
    (2usize..9, 1usize..9).prop_flat_map(|(users, items)| {
        (
            prop::collection::vec((0..users, 0..items, 1..6i32), 1..25),
            prop::collection::vec((0..users, 0..items), 0..20),
            prop::collection::vec((0..users, 0..users), 0..12),
            prop::collection::vec((0..users, 0..users, 1..4u8), 0..12),
            prop::collection::vec((0..users, 0..3usize, 0..items), 0..10),
        )
            .prop_map(move |(ratings, likes, friends, follows, tags)| Raw {
                users,
                items,
                ratings,
                likes,
                friends,
                follows,
                tags,
            })
    })
}

fn dataset(r: &Raw) -> SemanticDataset {
    let schema = Schema::parse(SCHEMA, Path::new("props.schema")).unwrap();
    let mut ds = SemanticDataset::new(schema);
    for u in 0..r.users {
        ds.add_entity("user", &format!("u{u}"), Attributes::new()).unwrap();
    }
    for i in 0..r.items {
        ds.add_entity("item", &format!("i{i}"), Attributes::new()).unwrap();
    }
    let none = Attributes::new;
    for &(u, i, w) in &r.ratings {
        ds.add_edge("rating", &[&format!("u{u}"), &format!("i{i}")], Some(w as f64), none()).unwrap();
    }
    for &(u, i) in &r.likes {
        ds.add_edge("like", &[&format!("u{u}"), &format!("i{i}")], None, none()).unwrap();
    }
    for &(a, b) in r.friends.iter().filter(|(a, b)| a != b) {
        ds.add_edge("friend", &[&format!("u{a}"), &format!("u{b}")], None, none()).unwrap();
    }
    for &(a, b, w) in r.follows.iter().filter(|(a, b, _)| a != b) {
        ds.add_edge("follows", &[&format!("u{a}"), &format!("u{b}")], Some(w as f64), none()).unwrap();
    }
    for &(u, t, i) in &r.tags {
        ds.add_edge("tagged", &[&format!("u{u}"), &format!("t{t}"), &format!("i{i}")], None, none())
            .unwrap();
    }
    ds
}

fn sparse() -> impl Strategy<Value = SparseMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        prop::collection::btree_map((0..r, 0..c), -5.0f64..5.0, 1..30).prop_map(move |cells| {
            SparseMatrix::from_triples(r, c, cells.into_iter().map(|((i, j), v)| (i, j, v)).collect()).unwrap()
        })
    })
}

const MODES: [AdditiveMode; 5] = [
    AdditiveMode::None,
    AdditiveMode::GlobalMean,
    AdditiveMode::RowMean,
    AdditiveMode::ColMean,
    AdditiveMode::RowCol,
];

fn spectral_norm(m: &SparseMatrix) -> f64 {
    let d = common::dense(m);
    nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |i, j| d[i][j])
        .svd(false, false)
        .singular_values
        .max()
}

/// Random model over `n` entities in two types, with `d` latent columns and
/// values drawn from a few levels so ties occur.
fn random_model(n: usize, d: usize, seed: u64, coarse: bool) -> LatentModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if coarse {
                        rng.gen_range(-2i32..3) as f64 * 0.5
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let eig: Vec<f64> = (0..d).map(|c| 3.0 - c as f64 * 0.25).collect();
    let half = n / 2;
    let layout = EntityLayout::from_blocks(vec![
        ("user".into(), (0..half).map(|i| format!("u{i}")).collect()),
        ("item".into(), (half..n).map(|i| format!("i{i}")).collect()),
    ]);
    LatentModel::from_columns(eig, &cols, layout)
}

fn oracle_topk(model: &LatentModel, q: usize, rows: &[usize], k: usize, skip: &BTreeSet<usize>) -> Vec<(usize, f64)> {
    let spec = model.transformed_spectrum();
    let qv = model.row(q);
    let scores: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| !skip.contains(r))
        .map(|&r| {
            let s = model.row(r).iter().zip(qv).zip(&spec).map(|((a, b), f)| b * (f * a)).sum::<f64>();
            (r, s)
        })
        .collect();
    common::sort_topk(&scores, k)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dataset_text_round_trip(r in raw()) {
        let ds = dataset(&r);
        let text = dataset_to_text(&ds);
        let back = parse_dataset(ds.schema().clone(), &text, Path::new("rt.tsv")).unwrap();
        prop_assert!(ds.same_content(&back));
    }

    #[test]
    fn adjacency_shape_and_counts(r in raw()) {
        let ds = dataset(&r);
        let friend = ds.adjacency_matrix("friend").unwrap();
        prop_assert_eq!(&friend, &friend.transpose());
        let total: f64 = friend.triples().iter().map(|t| t.2).sum();
        prop_assert_eq!(total, 2.0 * ds.edges("friend").unwrap().len() as f64);
        let like = ds.adjacency_matrix("like").unwrap();
        let total: f64 = like.triples().iter().map(|t| t.2).sum();
        prop_assert_eq!(total, ds.edges("like").unwrap().len() as f64);
    }

    #[test]
    fn normalization_round_trip_and_pattern(m in sparse()) {
        for mode in MODES {
            let p = NormalizationParams::fit("r", &m, mode).unwrap();
            let out = p.apply(&m).unwrap();
            let pattern = |x: &SparseMatrix| x.triples().iter().map(|t| (t.0, t.1)).collect::<Vec<_>>();
            prop_assert_eq!(pattern(&out), pattern(&m));
            for (&(i, j, v), &(_, _, n)) in m.triples().iter().zip(out.triples()) {
                prop_assert!((p.denormalize(n, i, j) - v).abs() <= 1e-10 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn global_mean_centers(m in sparse()) {
        let p = NormalizationParams::fit("r", &m, AdditiveMode::GlobalMean).unwrap();
        let out = p.apply(&m).unwrap();
        let mean = out.triples().iter().map(|t| t.2).sum::<f64>() / out.nnz() as f64;
        prop_assert!(mean.abs() <= 1e-12, "mean {mean}");
    }

    #[test]
    fn scaled_blocks_have_unit_order_norm(m in sparse()) {
        let p = NormalizationParams::fit("r", &m, AdditiveMode::GlobalMean).unwrap();
        let out = p.apply(&m).unwrap();
        let norm = spectral_norm(&out);
        // An all-constant matrix centers to zero and stays zero.
        if spectral_norm(&m.map_values(|_, _, v| v - p.global_mean)) > 1e-9 {
            prop_assert!((0.5..=1.5).contains(&norm), "norm {norm}");
        }
    }

    #[test]
    fn unified_matrix_symmetric_and_linear_in_weights(r in raw(), c in prop::sample::select(vec![0.1, 3.0, 10.0])) {
        let ds = dataset(&r);
        let opts = BuildOptions::default();
        let a = prepare(&ds, &opts).unwrap().unified.matrix;
        for &(i, j, v) in a.triples() {
            prop_assert_eq!(a.get(j, i).map(f64::to_bits), Some(v.to_bits()));
        }
        let scaled = BuildOptions {
            weights: RelationshipWeights::new().scaled(ds.schema(), c).unwrap(),
            ..BuildOptions::default()
        };
        let b = prepare(&ds, &scaled).unwrap().unified.matrix;
        prop_assert_eq!(a.nnz(), b.nnz());
        for (x, y) in a.triples().iter().zip(b.triples()) {
            prop_assert_eq!((x.0, x.1), (y.0, y.1));
            prop_assert!((y.2 - c * x.2).abs() <= 1e-12 * (c * x.2).abs().max(1.0));
        }
    }

    #[test]
    fn star_on_binary_data_is_identity(r in raw()) {
        let mut r = r;
        r.tags.clear();
        let binary = SCHEMA.lines().filter(|l| !l.contains("tagged")).collect::<Vec<_>>().join("\n");
        let schema = Schema::parse(&binary, Path::new("binary.schema")).unwrap();
        let ds = parse_dataset(schema, &dataset_to_text(&dataset(&r)), Path::new("b.tsv")).unwrap();
        let star = reduce_hyperedges(&ds, Reduction::Star).unwrap();
        prop_assert!(star.same_content(&ds));
    }

    #[test]
    fn clique_emits_three_pairs_per_triple(r in raw()) {
        let ds = dataset(&r);
        let n = ds.edges("tagged").unwrap().len();
        let clique = reduce_hyperedges(&ds, Reduction::Clique).unwrap();
        let mut total = 0.0;
        for rt in clique.schema().relation_types().iter().filter(|rt| rt.name.starts_with("tagged#pair:")) {
            total += clique.edges(&rt.name).unwrap().iter().map(|e| e.weight).sum::<f64>();
        }
        prop_assert_eq!(total, 3.0 * n as f64);
        let star = reduce_hyperedges(&ds, Reduction::Star).unwrap();
        prop_assert_eq!(star.entities("tagged#hub").unwrap().len(), n);
    }

    #[test]
    fn full_budget_index_is_exact(seed in any::<u64>(), n in 2usize..300, d in 1usize..8,
                                  k in 1usize..12, b in 2usize..6, cap in 1usize..10, coarse in any::<bool>()) {
        let model = random_model(n, d, seed, coarse);
        let idx = RecommenderIndex::build(&model, &[], IndexParams { branching: b, capacity: cap, seed }).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let q = (seed as usize) % n;
        let skip = BTreeSet::from([q]);
        let got = idx.query(&model, Source::Entity(
            model.layout().entity_of(q).unwrap().0,
            model.layout().entity_of(q).unwrap().1,
        ), k, n.max(k), &skip).unwrap();
        let want = oracle_topk(&model, q, &rows, k, &skip);
        prop_assert_eq!(got.items.len(), want.len());
        prop_assert_eq!(got.truncated, want.len() < k);
        for (g, w) in got.items.iter().zip(&want) {
            prop_assert!((g.score - w.1).abs() <= 1e-12, "{} vs {}", g.score, w.1);
        }
        // Row order equal wherever scores are strictly separated; ties go to the lower row.
        for pair in got.items.windows(2) {
            prop_assert!(pair[0].score > pair[1].score || (pair[0].score == pair[1].score && pair[0].row < pair[1].row));
        }
        let got_rows: Vec<usize> = got.items.iter().map(|s| s.row).collect();
        let want_rows: Vec<usize> = want.iter().map(|s| s.0).collect();
        prop_assert_eq!(got_rows, want_rows);
    }

    #[test]
    fn leaves_partition_the_filtered_rows(seed in any::<u64>(), n in 2usize..200, b in 2usize..6, cap in 1usize..10) {
        let model = random_model(n, 4, seed, false);
        let idx = RecommenderIndex::build(&model, &["item".to_string()], IndexParams { branching: b, capacity: cap, seed }).unwrap();
        let mut seen: Vec<usize> = idx.leaves().into_iter().flatten().collect();
        seen.sort_unstable();
        let want: Vec<usize> = (n / 2..n).collect();
        prop_assert_eq!(seen, want);
    }
}


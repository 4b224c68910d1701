//! End-to-end flows across modules through the public API.

use proptest::prelude::*;
use rand::Rng;
use spatial_trees::embedding::{embed_brw, embed_continuum, normalized_tour, ContinuumEmbedding, StepDist, Tour};
use spatial_trees::excursion::{sample_normalized_excursion, Excursion, RealTree};
use spatial_trees::gw::{dfs_tour, sample_conditioned_gw, OffspringDist, OrderedTree};
use spatial_trees::reduced::{reduce_coded, reduce_discrete, d0};
use spatial_trees::rng::stream;
use spatial_trees::superprocess::{level_measure, range_cloud, sample_truncated_forest, ForestSample};
use spatial_trees::walks::{skeleton_trace, skeleton_vertices, srw, srw_on_skeleton};

#[test]
fn discrete_tree_through_reduction_and_skeleton_walks() {
    let mut rng = stream(1, 0);
    let n = 400;
    let tree = sample_conditioned_gw(n, &OffspringDist::geometric(0.5).unwrap(), &mut rng).unwrap();
    let emb = embed_brw(&tree, &StepDist::Gaussian { dim: 2, sd: 1.0 }, &mut rng).unwrap();
    let tour = dfs_tour(&tree);
    let us = [0.1, 0.45, 0.8];
    let skel = reduce_discrete(&tree, &tour, &us).unwrap();
    // graph distances along the skeleton add up to the tree distances of the marks
    let origin = skel.origin_vertices().unwrap();
    for &m in skel.marked() {
        assert_eq!(skel.depth(m), tree.depth(origin[m]) as f64);
    }
    let keep = skeleton_vertices(&tree, &skel).unwrap();
    let walk = srw_on_skeleton(&tree, &skel, 0, 500, &mut rng).unwrap();
    assert!(walk.states.iter().all(|&v| keep[v]));
    let full = srw(&tree, 0, 2000, &mut rng).unwrap();
    let trace = skeleton_trace(&tree, &skel, &full).unwrap();
    assert!(trace.states.iter().all(|&v| keep[v]));
    assert!(trace.states.windows(2).all(|w| w[0] != w[1]));

    // the same marks on the normalized tour give the same tree, rescaled
    let ct = normalized_tour(&tree, &emb).unwrap();
    let times: Vec<f64> = us.iter().map(|&u| tour.alpha_index(u).unwrap() as f64 / (2 * n) as f64).collect();
    let a = skel.with_graph_spatial(&tree, &emb, 8).unwrap().rescaled((n as f64).powf(-0.5), (n as f64).powf(-0.25));
    let b = reduce_coded(ct.tree(), &times).unwrap().with_tour_spatial(&ct, 8).unwrap();
    assert!(d0(&a, &b).unwrap() < 1e-9);
}

#[test]
fn continuum_tour_files_round_trip() {
    let mut rng = stream(2, 0);
    let exc = sample_normalized_excursion(513, &mut rng).unwrap();
    let emb = embed_continuum(&exc, 3, &mut rng).unwrap();
    let mut buf = Vec::new();
    exc.write_csv(&mut buf).unwrap();
    let back = Excursion::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.values(), exc.values());
    let mut buf = Vec::new();
    emb.write_csv(&mut buf).unwrap();
    let emb_back = ContinuumEmbedding::read_csv(buf.as_slice()).unwrap();
    assert_eq!(emb_back.positions(), emb.positions());

    let tour = Tour::from_continuum(&back, &emb_back).unwrap();
    let arc = tour.arc_extract(0.5).unwrap();
    assert!(arc.heights.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*arc.heights.last().unwrap(), tour.v()[tour.tree().index(0.5).unwrap()]);
    assert_eq!(arc.point(0), tour.r(0));
}

#[test]
fn forest_files_and_level_measures() {
    let mut rng = stream(3, 0);
    let forest = loop {
        let f = sample_truncated_forest(0.5, 2, 1025, &mut rng).unwrap();
        if f.len() >= 2 {
            break f;
        }
    };
    let dir = tempdir();
    let manifest = forest.write(&dir).unwrap();
    let back = ForestSample::read(&manifest).unwrap();
    assert_eq!(back.len(), forest.len());
    assert_eq!(back.total_tau(), forest.total_tau());
    let cloud = range_cloud(&back);
    for t in [0.1, 0.3, 0.6] {
        let a = level_measure(&forest, t, 0.05).unwrap();
        let b = level_measure(&back, t, 0.05).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(cloud.violations(&b), 0);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("spatial-trees-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contour_codes_the_tree(n in 1usize..60, seed in any::<u64>()) {
        let mut rng = stream(seed, 0);
        let tree = sample_conditioned_gw(n, &OffspringDist::poisson(), &mut rng).unwrap();
        let tour = dfs_tour(&tree);
        let back = OrderedTree::from_contour(&tour.depths).unwrap();
        prop_assert_eq!(back.offspring_word(), tree.offspring_word());
        prop_assert!(tour.pushforward_cells().iter().all(|&c| c == 2));
        let u: f64 = rng.random();
        let v = tour.uniform_vertex(u).unwrap();
        prop_assert_eq!(tour.depths[tour.alpha_index(u).unwrap()] as usize, tree.depth(v));
        // contour distances are graph distances
        let coded = RealTree::from_path(&tour.depths.iter().map(|&d| d as f64).collect::<Vec<_>>(), 1.0).unwrap();
        let (i, j) = (rng.random_range(0..tour.depths.len()), rng.random_range(0..tour.depths.len()));
        prop_assert_eq!(coded.distance_between(i, j), tree.distance(tour.visits[i], tour.visits[j]) as f64);
    }

    #[test]
    fn coded_distances_satisfy_the_four_point_condition(seed in any::<u64>()) {
        let mut rng = stream(seed, 1);
        let exc = sample_normalized_excursion(129, &mut rng).unwrap();
        let t = RealTree::new(&exc);
        let p: Vec<usize> = (0..4).map(|_| rng.random_range(0..129)).collect();
        let d = |a: usize, b: usize| t.distance_between(p[a], p[b]);
        let mut s = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
        s.sort_by(f64::total_cmp);
        prop_assert!(s[2] - s[1] <= 1e-12);
    }
}

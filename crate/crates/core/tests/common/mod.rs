//! Independent oracles and property checks shared by the integration suites
//! and the acceptance target. Each check returns a short summary on success
//! and a description of the first discrepancy on failure.

#![allow(dead_code)]

use std::collections::HashSet;

use hif::flow::{
    self, count_ip_pairs, encode_all, pair_counts, parse_flows, payload_histogram, random_flows,
    split_by_app_layer, write_flows, Codebook, FlowRecord, FEATURE_COUNT,
};
use hif::forest::{tree_rng, Node, Tree};
use hif::metrics::{auc, LabeledScore};
use hif::scoring::{aggregate, AggregationParams, NormalizedTriple};
use hif::{ForestParams, HybridForest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub const FIXTURE: &str = include_str!("../fixtures/flows.csv");

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Average unsuccessful-search length, written out from its definition.
pub fn c_oracle(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + 0.5772156649) - 2.0 * m / n as f64
}

/// One split on a root-to-leaf path: `(dimension, value, went_left)`.
pub type Constraint = (usize, f64, bool);

/// Every leaf of `tree` with the split constraints leading to it, found by
/// exhaustive enumeration rather than by descending with a query point.
pub fn leaf_regions(tree: &Tree) -> Vec<(usize, Vec<Constraint>)> {
    fn walk(
        nodes: &[Node],
        at: usize,
        path: &mut Vec<Constraint>,
        out: &mut Vec<(usize, Vec<Constraint>)>,
    ) {
        match &nodes[at] {
            Node::External(_) => out.push((at, path.clone())),
            Node::Internal {
                split_dim,
                split_val,
                right,
            } => {
                path.push((*split_dim, *split_val, true));
                walk(nodes, at + 1, path, out);
                path.pop();
                path.push((*split_dim, *split_val, false));
                walk(nodes, *right, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree.nodes(), 0, &mut Vec::new(), &mut out);
    out
}

pub fn satisfies(x: &[f64], region: &[Constraint]) -> bool {
    region
        .iter()
        .all(|&(d, v, left)| if left { x[d] < v } else { x[d] >= v })
}

/// The unique leaf region containing `x`: `(node index, depth, leaf size)`.
pub fn oracle_leaf(tree: &Tree, x: &[f64]) -> Result<(usize, usize, usize), String> {
    let hits: Vec<_> = leaf_regions(tree)
        .into_iter()
        .filter(|(_, r)| satisfies(x, r))
        .collect();
    ensure(hits.len() == 1, || {
        format!("{} leaf regions contain {x:?}", hits.len())
    })?;
    let (at, region) = &hits[0];
    let Node::External(leaf) = &tree.nodes()[*at] else {
        return Err("region does not end on a leaf".into());
    };
    Ok((*at, region.len(), leaf.size))
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn uniform_rows(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

/// Path length of every probe on every tree of small forests equals the
/// enumerated-region oracle exactly.
pub fn path_length_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut compared = 0;
    for (k, psi) in [2usize, 4, 8, 16].into_iter().enumerate() {
        let train = uniform_rows(200, 3, &mut rng);
        let forest = HybridForest::fit(&train, ForestParams::new(psi, 8, k as u64))
            .map_err(|e| e.to_string())?;
        let mut probes = uniform_rows(50, 3, &mut rng);
        probes.extend(train.iter().take(20).cloned());
        for x in &probes {
            let mut h_sum = 0.0;
            for (t, tree) in forest.trees().iter().enumerate() {
                let (at, depth, size) = oracle_leaf(tree, x)?;
                let h = depth as f64 + c_oracle(size);
                let pc = tree.path_components(x);
                ensure(pc.leaf == at && pc.depth == depth && pc.h == h, || {
                    format!(
                        "psi {psi} tree {t}: got leaf {} h {}, oracle leaf {at} h {h}",
                        pc.leaf, pc.h
                    )
                })?;
                h_sum += h;
                compared += 1;
            }
            let mean = h_sum / forest.trees().len() as f64;
            let got = forest
                .raw_scores(x)
                .map_err(|e| e.to_string())?
                .mean_path_length;
            ensure(got == mean, || {
                format!("psi {psi}: mean path {got} vs oracle {mean}")
            })?;
        }
    }
    Ok(format!("{compared} tree/probe pairs exact"))
}

/// Stored leaf sizes and centroids equal brute-force counts and means of
/// the sample points inside each leaf region.
pub fn leaf_centroid_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut leaves = 0;
    for trial in 0..40 {
        let n = 8 + trial % 57;
        let sample = uniform_rows(n, 3, &mut rng);
        let refs: Vec<&[f64]> = sample.iter().map(Vec::as_slice).collect();
        let tree = Tree::build(&refs, 0, 1 + trial % 4, &mut tree_rng(trial as u64, 0))
            .map_err(|e| e.to_string())?;
        let mut covered = 0;
        for (at, region) in leaf_regions(&tree) {
            let Node::External(leaf) = &tree.nodes()[at] else {
                unreachable!()
            };
            let inside: Vec<&Vec<f64>> = sample.iter().filter(|x| satisfies(x, &region)).collect();
            covered += inside.len();
            ensure(leaf.size == inside.len(), || {
                format!(
                    "trial {trial} leaf {at}: size {} but {} points inside",
                    leaf.size,
                    inside.len()
                )
            })?;
            match (&leaf.centroid, inside.is_empty()) {
                (None, true) => {}
                (Some(c), false) => {
                    for d in 0..3 {
                        let mean = inside.iter().map(|x| x[d]).sum::<f64>() / inside.len() as f64;
                        worst = worst.max((mean - c[d]).abs());
                    }
                }
                _ => {
                    return Err(format!(
                        "trial {trial} leaf {at}: centroid presence mismatch"
                    ))
                }
            }
            leaves += 1;
        }
        ensure(covered == n, || {
            format!("trial {trial}: regions cover {covered} of {n} points")
        })?;
    }
    ensure(worst <= 1e-12, || format!("centroid error {worst:e}"))?;
    Ok(format!("{leaves} leaves, max centroid error {worst:.1e}"))
}

/// Probability that a random anomaly outranks a random normal, ties counted half.
pub fn pairwise_auc(samples: &[LabeledScore]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in samples.iter().filter(|s| s.anomaly) {
        for n in samples.iter().filter(|s| !s.anomaly) {
            pairs += 1.0;
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn auc_pairwise_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    let trials = 300;
    for trial in 0..trials {
        let n = rng.random_range(2..=200);
        // Coarse levels on odd trials force many ties.
        let levels = if trial % 2 == 1 { 5.0 } else { 1e9 };
        let mut samples: Vec<LabeledScore> = (0..n)
            .map(|_| {
                let anomaly = rng.random_bool(0.4);
                let s = (rng.random::<f64>() * levels).floor() / levels
                    + if anomaly { 0.1 } else { 0.0 };
                LabeledScore::new(s, anomaly)
            })
            .collect();
        samples[0].anomaly = true;
        samples[1].anomaly = false;
        let got = auc(&samples).map_err(|e| e.to_string())?;
        worst = worst.max((got - pairwise_auc(&samples)).abs());
    }
    ensure(worst <= 1e-12, || format!("max AUC deviation {worst:e}"))?;
    Ok(format!(
        "{trials} samples of size <= 200, max deviation {worst:.1e}"
    ))
}

pub fn aggregate_direct_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = NormalizedTriple {
            path: rng.random_range(-0.5..1.5),
            centroid: rng.random_range(-0.5..3.0),
            anomaly_ratio: rng.random_range(-0.5..2.0),
        };
        let (a1, a2) = (rng.random::<f64>(), rng.random::<f64>());
        let p = AggregationParams::new(a1, a2).map_err(|e| e.to_string())?;
        let direct = a1 * a2 * t.path + (1.0 - a1) * a2 * t.centroid + (1.0 - a2) * t.anomaly_ratio;
        worst = worst.max((aggregate(&t, p) - direct).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 triples, max deviation {worst:.1e}"))
}

/// The hand-computed encoding of the first fixture row.
pub fn fixture_expected_first_row() -> [f64; FEATURE_COUNT] {
    let mut v = Vec::new();
    // destination payload 00 19 1a ff -> bins 0, 0, 1, 9
    v.extend([0.5, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25]);
    v.push(80.0);
    // destination flags "FA"
    v.extend([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    // direction L2R and protocol tcp_ip take the first slots
    v.extend([1.0, 0.0, 0.0, 0.0]);
    v.extend([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    // source payload "GET" -> bins 2, 2, 3
    v.extend([0.0, 0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    v.push(51234.0);
    // source flags "SA"
    v.extend([0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    // duration, dest bytes, dest packets, source bytes, source packets, pairs
    v.extend([1.5, 1200.0, 6.0, 300.0, 4.0, 1.0]);
    v.try_into().expect("50 features")
}

pub fn flow_fixture_roundtrip() -> Check {
    let parsed = parse_flows(FIXTURE.as_bytes(), true).map_err(|e| e.to_string())?;
    ensure(parsed.records.len() == 3, || {
        format!("{} fixture rows", parsed.records.len())
    })?;
    let mut cb = Codebook::new(100);
    cb.learn_categories(&parsed.records)
        .map_err(|e| e.to_string())?;
    let raw = encode_all(&parsed.records, &cb).map_err(|e| e.to_string())?;
    let expected = fixture_expected_first_row();
    for (j, (got, want)) in raw[0].0.iter().zip(expected).enumerate() {
        ensure(*got == want, || format!("feature {j}: {got} vs {want}"))?;
    }
    ensure(raw[2].0[49] == 2.0, || {
        format!("third row pairs {}", raw[2].0[49])
    })?;

    let mut text = Vec::new();
    write_flows(&parsed.records, &mut text).map_err(|e| e.to_string())?;
    let again = parse_flows(&text[..], true).map_err(|e| e.to_string())?;
    ensure(again.records == parsed.records, || {
        "parse/write/parse changed records".into()
    })?;

    cb.fit_minmax(&raw).map_err(|e| e.to_string())?;
    for v in &raw {
        let n = cb.apply_minmax(v).map_err(|e| e.to_string())?;
        ensure(n.0.iter().all(|x| (0.0..=1.0).contains(x)), || {
            "normalized outside [0,1]".into()
        })?;
    }
    Ok("3 rows encode exactly; round trip lossless".into())
}

/// Width, one-hot, flag, histogram-mass and normalization-range properties
/// over a random corpus, each layer with its own codebook.
pub fn flow_corpus_properties(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = random_flows(n, &mut rng);
    let mut encoded = 0;
    for (layer, recs) in split_by_app_layer(records) {
        let mut cb = Codebook::new(100);
        cb.learn_categories(&recs).map_err(|e| e.to_string())?;
        let raw = encode_all(&recs, &cb).map_err(|e| e.to_string())?;
        cb.fit_minmax(&raw).map_err(|e| e.to_string())?;
        for (r, v) in recs.iter().zip(&raw) {
            let x = &v.0;
            ensure(x.len() == FEATURE_COUNT, || "width".into())?;
            for (block, payload) in [(0..10, &r.dest_payload), (27..37, &r.source_payload)] {
                let mass: f64 = x[block].iter().sum();
                let want = if payload.is_empty() { 0.0 } else { 1.0 };
                ensure((mass - want).abs() <= 1e-12, || {
                    format!("{layer}: histogram mass {mass}")
                })?;
            }
            for block in [&x[17..21], &x[21..27]] {
                let hot = block.iter().filter(|&&b| b == 1.0).count();
                let zero = block.iter().filter(|&&b| b == 0.0).count();
                ensure(hot == 1 && zero == block.len() - 1, || {
                    format!("{layer}: one-hot {block:?}")
                })?;
            }
            for j in (11..17).chain(38..44) {
                ensure(x[j] == 0.0 || x[j] == 1.0, || {
                    format!("{layer}: flag {j} = {}", x[j])
                })?;
            }
            let normalized = cb.apply_minmax(v).map_err(|e| e.to_string())?;
            ensure(normalized.0.iter().all(|y| (0.0..=1.0).contains(y)), || {
                format!("{layer}: normalized feature outside [0,1]")
            })?;
            encoded += 1;
        }
    }
    ensure(encoded == n, || format!("encoded {encoded} of {n}"))?;
    Ok(format!("{n} random flows"))
}

/// Sliding-window pair counts equal a brute-force recount at every index.
pub fn pair_count_bruteforce() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut traces = 0;
    for window in [1, 7, 100, 1000] {
        for _ in 0..3 {
            let records: Vec<FlowRecord> = random_flows(500, &mut rng);
            let fast = pair_counts(&records, window);
            for (i, &got) in fast.iter().enumerate() {
                let start = (i + 1).saturating_sub(window);
                let brute = records[start..=i]
                    .iter()
                    .map(|r| (r.source_ip.clone(), r.dest_ip.clone()))
                    .collect::<HashSet<_>>()
                    .len();
                ensure(
                    got == brute && count_ip_pairs(&records, window, i) == brute,
                    || format!("window {window} index {i}: {got} vs {brute}"),
                )?;
            }
            traces += 1;
        }
    }
    Ok(format!("{traces} traces of 500 flows"))
}

/// Payload histogram against a float-free bin rule.
pub fn histogram_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let len = rng.random_range(0..300);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let mut counts = [0usize; 10];
        for &b in &payload {
            let bin = (0..10)
                .rev()
                .find(|&k| (b as usize) * 10 >= k * 256)
                .unwrap();
            counts[bin] += 1;
        }
        let h = payload_histogram(&payload);
        for k in 0..10 {
            let want = if len == 0 {
                0.0
            } else {
                counts[k] as f64 / len as f64
            };
            ensure((h[k] - want).abs() <= 1e-15, || {
                format!("bin {k}: {} vs {want}", h[k])
            })?;
        }
    }
    Ok("500 payloads".into())
}

/// Shorthand used by the flow suite.
pub fn fixture_records() -> Vec<FlowRecord> {
    flow::parse_flows(FIXTURE.as_bytes(), true).unwrap().records
}

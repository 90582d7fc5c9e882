//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hexplane::association::{AttentionInput, AttentionParams};
use hexplane::cloud::{Label, PointCloud};
use hexplane::projection::{GridCoords, NUM_PLANES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ProjectionFixture {
    pub cols: usize,
    pub rows: usize,
    pub phi_up: f64,
    pub phi_down: f64,
    /// `(point, u, v)`
    pub points: Vec<([f64; 3], f64, f64)>,
}

/// Range-view coordinates evaluated at 50 digits (see `data/projection_fixture.py`).
pub fn projection_fixture() -> ProjectionFixture {
    let text = include_str!("../data/projection_fixture.csv");
    let mut lines = text.lines();
    let header = lines.next().unwrap().trim_start_matches('#');
    let mut kv = std::collections::HashMap::new();
    for pair in header.split_whitespace() {
        let (k, v) = pair.split_once('=').unwrap();
        kv.insert(k.to_string(), v.to_string());
    }
    let points = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            ([f[0], f[1], f[2]], f[3], f[4])
        })
        .collect();
    ProjectionFixture {
        cols: kv["W"].parse().unwrap(),
        rows: kv["H"].parse().unwrap(),
        phi_up: kv["phi_up"].parse().unwrap(),
        phi_down: kv["phi_down"].parse().unwrap(),
        points,
    }
}

/// Per pixel, scan every point and keep the smallest depth, earliest index on ties.
pub fn zbuffer_oracle(coords: &GridCoords) -> (Vec<Option<u32>>, Vec<f64>) {
    let mut winners = Vec::with_capacity(coords.rows * coords.cols);
    let mut depths = Vec::with_capacity(coords.rows * coords.cols);
    for r in 0..coords.rows as u32 {
        for c in 0..coords.cols as u32 {
            let mut best: Option<(usize, f64)> = None;
            for (n, gc) in coords.coords.iter().enumerate() {
                if gc.pixel != Some((r, c)) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, d)) => gc.depth < d,
                };
                if better {
                    best = Some((n, gc.depth));
                }
            }
            winners.push(best.map(|(n, _)| n as u32));
            depths.push(best.map_or(f64::INFINITY, |(_, d)| d));
        }
    }
    (winners, depths)
}

pub struct SetScores {
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
    pub oa: f64,
}

/// IoU as `|A & B| / |A | B|` over materialized index sets, A = predicted as
/// k, B = labeled k, restricted to labeled samples.
pub fn set_scores(preds: &[u32], labels: &[Label], k: usize) -> SetScores {
    let labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let mut iou = Vec::new();
    let (mut iou_sum, mut acc_sum, mut present) = (0.0, 0.0, 0);
    for class in 0..k as u32 {
        let a: BTreeSet<usize> = labeled.iter().copied().filter(|&i| preds[i] == class).collect();
        let b: BTreeSet<usize> = labeled.iter().copied().filter(|&i| labels[i] == Some(class)).collect();
        let inter = a.intersection(&b).count();
        let union = a.union(&b).count();
        let v = (union > 0).then(|| inter as f64 / union as f64);
        iou.push(v);
        if !b.is_empty() {
            present += 1;
            iou_sum += v.unwrap();
            acc_sum += inter as f64 / b.len() as f64;
        }
    }
    let correct = labeled.iter().filter(|&&i| labels[i] == Some(preds[i])).count();
    SetScores {
        iou,
        miou: iou_sum / present as f64,
        macc: acc_sum / present as f64,
        oa: correct as f64 / labeled.len() as f64,
    }
}

/// Literal trace: rank (score desc, TP first), tabulate precision/recall after
/// each detection, and for every recall reached at a TP take the best
/// precision at any equal-or-higher recall.
pub fn ap_oracle(dets: &[(f64, bool)], num_gt: usize) -> f64 {
    let mut ranked: Vec<(f64, bool)> = dets.to_vec();
    // insertion sort keeps it obviously stable
    for i in 1..ranked.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (ranked[j - 1], ranked[j]);
            let out_of_order = b.0 > a.0 || (b.0 == a.0 && b.1 && !a.1);
            if !out_of_order {
                break;
            }
            ranked.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut table = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, hit) in &ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        table.push((tp as f64 / (tp + fp) as f64, tp as f64 / num_gt as f64, hit));
    }
    let recalls: Vec<f64> = table.iter().filter(|t| t.2).map(|t| t.1).collect();
    if recalls.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for &r in &recalls {
        let mut best = 0.0f64;
        for &(p, rr, _) in &table {
            if rr >= r {
                best = best.max(p);
            }
        }
        sum += best;
    }
    sum / recalls.len() as f64
}

/// Loop-by-loop attention forward written from the defining equations.
pub fn naive_attention(input: &AttentionInput, params: &AttentionParams) -> Vec<f64> {
    let (h, dk) = (params.heads, params.head_dim);
    let d = h * dk;
    let cp = params.w_q.shape()[0];
    let cf = params.w_k.shape()[0];
    let co = params.w_out.shape()[1];
    let wq = params.w_q.data();
    let wk = params.w_k.data();
    let wv = params.w_v.data();
    let wp = params.w_pos.data();
    let wo = params.w_out.data();
    let mut out = vec![0.0; input.num_points * co];
    for n in 0..input.num_points {
        let f = &input.point_features[n * cp..(n + 1) * cp];
        let q: Vec<f64> = (0..d).map(|j| (0..cp).map(|i| f[i] * wq[i * d + j]).sum()).collect();
        let mut keys = vec![vec![0.0; d]; NUM_PLANES];
        let mut vals = vec![vec![0.0; d]; NUM_PLANES];
        for m in 0..NUM_PLANES {
            let slot = n * NUM_PLANES + m;
            let g = &input.gathered[slot * cf..(slot + 1) * cf];
            let o = input.offsets[slot];
            for j in 0..d {
                keys[m][j] = (0..cf).map(|i| g[i] * wk[i * d + j]).sum::<f64>() + (0..3).map(|i| o[i] * wp[i * d + j]).sum::<f64>();
                vals[m][j] = (0..cf).map(|i| g[i] * wv[i * d + j]).sum();
            }
        }
        let mut concat = vec![0.0; d];
        for head in 0..h {
            let r = head * dk..(head + 1) * dk;
            let scores: Vec<Option<f64>> = (0..NUM_PLANES)
                .map(|m| {
                    input.valid[n * NUM_PLANES + m].then(|| {
                        r.clone().map(|j| q[j] * keys[m][j]).sum::<f64>() / (dk as f64).sqrt()
                    })
                })
                .collect();
            let max = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().flatten().map(|s| (s - max).exp()).sum();
            for (m, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    let a = (s - max).exp() / z;
                    for j in r.clone() {
                        concat[j] += a * vals[m][j];
                    }
                }
            }
        }
        for c in 0..co {
            let mut v: f64 = (0..d).map(|j| concat[j] * wo[j * co + c]).sum();
            if params.residual {
                v += f[c];
            }
            out[n * co + c] = v;
        }
    }
    out
}

pub fn random_cloud(seed: u64, n: usize, classes: u32) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            [
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-1.5..1.5),
            ]
        })
        .collect();
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    PointCloud::from_positions(positions).unwrap().with_labels(labels).unwrap()
}

/// Random attention instance with some planes masked (each point keeps at least one).
pub fn random_attention(seed: u64, n: usize, cp: usize, cf: usize) -> AttentionInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valid: Vec<bool> = (0..n * NUM_PLANES).map(|_| rng.random_bool(0.7)).collect();
    for p in 0..n {
        valid[p * NUM_PLANES + rng.random_range(0..NUM_PLANES)] = true;
    }
    let mut u = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let point_features = u(n * cp);
    let mut gathered = u(n * NUM_PLANES * cf);
    let offsets: Vec<[f64; 3]> = u(n * NUM_PLANES * 3).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    for (s, v) in valid.iter().enumerate() {
        if !v {
            gathered[s * cf..(s + 1) * cf].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    AttentionInput {
        num_points: n,
        point_features,
        gathered,
        offsets,
        valid,
    }
}

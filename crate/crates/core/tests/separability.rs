use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use segbias_core::kernel::{self, SCALES};
use segbias_core::separability::{
    auroc, centroid_distance, fisher_ratio, linear_probe, mmd2, pca_2d, silhouette, EmbeddingSet,
};
use segbias_core::{Error, GroupId};

const G0: GroupId = GroupId(0);
const G1: GroupId = GroupId(1);

fn set(dim: usize, rows: &[(&[f64], GroupId)]) -> EmbeddingSet {
    EmbeddingSet::new(
        dim,
        rows.iter().flat_map(|(v, _)| v.iter().copied()).collect(),
        rows.iter().map(|(_, g)| *g).collect(),
    )
    .unwrap()
}

fn gaussian_set(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64) -> EmbeddingSet {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut vectors = Vec::new();
    let mut groups = Vec::new();
    for i in 0..n {
        let g = if i % 2 == 0 { G0 } else { G1 };
        for d in 0..dim {
            let offset = if g == G1 && d == 0 { shift } else { 0.0 };
            vectors.push(normal.sample(rng) + offset);
        }
        groups.push(g);
    }
    EmbeddingSet::new(dim, vectors, groups).unwrap()
}

#[test]
fn probe_on_separable_and_constant_data() {
    let rows: Vec<(Vec<f64>, GroupId)> = (0..20)
        .map(|i| if i % 2 == 0 { (vec![-1.0], G0) } else { (vec![1.0], G1) })
        .collect();
    let refs: Vec<(&[f64], GroupId)> = rows.iter().map(|(v, g)| (v.as_slice(), *g)).collect();
    let score = linear_probe(&set(1, &refs), 5, 0).unwrap();
    assert_eq!(score.accuracy, 1.0);
    assert_eq!(score.auroc, 1.0);

    let flat = EmbeddingSet::new(2, vec![0.5; 40], (0..20).map(|i| if i % 2 == 0 { G0 } else { G1 }).collect()).unwrap();
    let score = linear_probe(&flat, 5, 0).unwrap();
    assert!((score.auroc - 0.5).abs() <= 0.1);
    assert!((score.accuracy - 0.5).abs() <= 0.1);

    assert!(linear_probe(&flat, 15, 0).is_err());
}

#[test]
fn probe_on_permuted_labels_is_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = gaussian_set(&mut rng, 60, 3, 3.0);
    let mut total = 0.0;
    for _ in 0..20 {
        let mut groups = base.groups().to_vec();
        groups.shuffle(&mut rng);
        let vectors: Vec<f64> = (0..base.len()).flat_map(|i| base.row(i).to_vec()).collect();
        let permuted = EmbeddingSet::new(3, vectors, groups).unwrap();
        total += linear_probe(&permuted, 5, 1).unwrap().auroc;
    }
    assert!((total / 20.0 - 0.5).abs() <= 0.1);
}

#[test]
fn auroc_with_ties() {
    assert_eq!(auroc(&[0.1, 0.2, 0.3, 0.4], &[false, false, true, true]), 1.0);
    assert_eq!(auroc(&[0.4, 0.3, 0.2, 0.1], &[false, false, true, true]), 0.0);
    assert_eq!(auroc(&[0.5, 0.5], &[false, true]), 0.5);
}

#[test]
fn silhouette_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tight: Vec<(Vec<f64>, GroupId)> = (0..20)
        .map(|i| {
            let c = if i % 2 == 0 { -100.0 } else { 100.0 };
            (vec![c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], if i % 2 == 0 { G0 } else { G1 })
        })
        .collect();
    let refs: Vec<(&[f64], GroupId)> = tight.iter().map(|(v, g)| (v.as_slice(), *g)).collect();
    assert!(silhouette(&set(2, &refs)).unwrap() > 0.9);

    // identical point sets in both groups interleave
    let pts = [[0.0, 0.0], [1.0, 0.5], [3.0, 1.0], [0.5, 4.0]];
    let dup: Vec<(&[f64], GroupId)> = pts
        .iter()
        .map(|p| (p.as_slice(), G0))
        .chain(pts.iter().map(|p| (p.as_slice(), G1)))
        .collect();
    assert!(silhouette(&set(2, &dup)).unwrap() <= 0.0);

    let mut medians = Vec::new();
    for _ in 0..9 {
        medians.push(silhouette(&gaussian_set(&mut rng, 40, 3, 0.0)).unwrap());
    }
    medians.sort_by(f64::total_cmp);
    assert!(medians[4].abs() < 0.1);

    let lone = set(1, &[(&[0.0], G0), (&[1.0], G1), (&[2.0], G1)]);
    assert_eq!(silhouette(&lone), Err(Error::GroupTooSmall(G0)));
}

#[test]
fn fisher_examples() {
    let e = set(1, &[(&[-1.0], G0), (&[-1.1], G0), (&[1.0], G1), (&[1.1], G1)]);
    let f = fisher_ratio(&e, 50, 0).unwrap();
    // means -1.05, 1.05, grand mean 0: S_B = 4 * 1.05^2, S_W = 4 * 0.05^2
    let expected = (4.0 * 1.05f64.powi(2)) / (4.0 * 0.05f64.powi(2));
    assert!((f.ratio - expected).abs() < 1e-9 * expected);
    assert!(!f.zero_within);

    let same = set(1, &[(&[-1.0], G0), (&[1.0], G0), (&[-1.0], G1), (&[1.0], G1)]);
    assert_eq!(fisher_ratio(&same, 10, 0).unwrap().ratio, 0.0);

    let degenerate = set(1, &[(&[0.0], G0), (&[0.0], G0), (&[1.0], G1), (&[1.0], G1)]);
    let f = fisher_ratio(&degenerate, 10, 0).unwrap();
    assert!(f.zero_within && f.ratio.is_infinite());
}

#[test]
fn fisher_permutation_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 200;
    let mut rejected = 0;
    for t in 0..trials {
        let e = gaussian_set(&mut rng, 20, 2, 0.0);
        if fisher_ratio(&e, 99, t).unwrap().p_value < 0.05 {
            rejected += 1;
        }
    }
    assert!(rejected as f64 / trials as f64 <= 0.08, "{rejected} rejections");
}

/// Direct double loop over all pairs and scales.
fn mmd_oracle(x: &[[f64; 2]], y: &[[f64; 2]]) -> f64 {
    let all: Vec<[f64; 2]> = x.iter().chain(y).copied().collect();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            d.push(((all[i][0] - all[j][0]).powi(2) + (all[i][1] - all[j][1]).powi(2)).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let sigma0 = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    let k = |a: &[f64; 2], b: &[f64; 2]| {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        SCALES
            .iter()
            .map(|&s| {
                let sigma = sigma0 * 2f64.powi(s);
                (-d2 / (2.0 * sigma * sigma)).exp()
            })
            .sum::<f64>()
    };
    let mean = |p: &[[f64; 2]], q: &[[f64; 2]]| {
        let mut s = 0.0;
        for a in p {
            for b in q {
                s += k(a, b);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

#[test]
fn mmd_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<[f64; 2]> = (0..30).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let y: Vec<[f64; 2]> = (0..25)
        .map(|_| [normal.sample(&mut rng) + 10.0, normal.sample(&mut rng)])
        .collect();
    let rows: Vec<(&[f64], GroupId)> = x
        .iter()
        .map(|p| (p.as_slice(), G0))
        .chain(y.iter().map(|p| (p.as_slice(), G1)))
        .collect();
    let m = mmd2(&set(2, &rows)).unwrap();
    assert!((m.mmd2 - mmd_oracle(&x, &y)).abs() < 1e-9);

    let xs: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
    let ys: Vec<&[f64]> = y.iter().map(|p| p.as_slice()).collect();
    let ab = kernel::mmd2(&xs, &ys, false).value;
    let ba = kernel::mmd2(&ys, &xs, false).value;
    assert!((ab - ba).abs() < 1e-12);
    assert!(kernel::mmd2(&xs, &xs, false).value.abs() < 1e-12);

    let same = set(1, &[(&[2.0], G0), (&[2.0], G0), (&[2.0], G1), (&[2.0], G1)]);
    let m = mmd2(&same).unwrap();
    assert!(m.degenerate_bandwidth);
    assert_eq!(m.sigma0, 1.0);
    assert!(mmd2(&set(1, &[(&[0.0], G0), (&[1.0], G1), (&[2.0], G1)])).is_err());
}

#[test]
fn centroid_examples() {
    let e = set(1, &[(&[-1.0], G0), (&[-1.0], G0), (&[2.0], G1)]);
    assert_eq!(centroid_distance(&e).unwrap(), 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = gaussian_set(&mut rng, 31, 4, 1.0);
    let mut means = [[0.0; 4]; 2];
    let mut n = [0.0; 2];
    for i in 0..r.len() {
        let g = r.groups()[i].0 as usize;
        n[g] += 1.0;
        for d in 0..4 {
            means[g][d] += r.row(i)[d];
        }
    }
    let dist: f64 = (0..4).map(|d| (means[0][d] / n[0] - means[1][d] / n[1]).powi(2)).sum::<f64>().sqrt();
    assert!((centroid_distance(&r).unwrap() - dist).abs() < 1e-12);
}

#[test]
fn pca_is_an_isometry_on_planar_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts: Vec<[f64; 2]> = (0..40)
        .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)])
        .collect();
    let rows: Vec<(&[f64], GroupId)> =
        pts.iter().enumerate().map(|(i, p)| (p.as_slice(), GroupId((i % 2) as u32))).collect();
    let p = pca_2d(&set(2, &rows)).unwrap();
    assert!(!p.rank_deficient);
    assert!(p.variance[0] >= p.variance[1]);
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            let a = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            let b = ((p.coords[i][0] - p.coords[j][0]).powi(2) + (p.coords[i][1] - p.coords[j][1]).powi(2)).sqrt();
            assert!((a - b).abs() < 1e-9);
        }
    }

    // duplicating the data keeps the projection
    let doubled: Vec<(&[f64], GroupId)> = rows.iter().chain(rows.iter()).copied().collect();
    let q = pca_2d(&set(2, &doubled)).unwrap();
    for i in 0..pts.len() {
        for c in 0..2 {
            assert!((p.coords[i][c] - q.coords[i][c]).abs() < 1e-9);
        }
    }
}

#[test]
fn pca_flags_collinear_data() {
    let rows: Vec<(Vec<f64>, GroupId)> = (0..10)
        .map(|i| (vec![i as f64, 2.0 * i as f64, -(i as f64)], GroupId((i % 2) as u32)))
        .collect();
    let refs: Vec<(&[f64], GroupId)> = rows.iter().map(|(v, g)| (v.as_slice(), *g)).collect();
    let p = pca_2d(&set(3, &refs)).unwrap();
    assert!(p.rank_deficient);
    assert!(p.coords.iter().all(|c| c[1] == 0.0));
    assert!(p.variance[0] > 0.0);
}

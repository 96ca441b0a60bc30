use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radsignals::clustering::{centroid_neighbors, kmeans, sq_dist, tsne_embed, TsneParams};

fn blobs(per: usize, seed: u64) -> (Vec<[f64; 4]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[0.0, 0.0, 0.0, 0.0], [3.0, 0.0, 1.0, 0.0], [0.0, 3.0, 0.0, 2.0]];
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            pts.push(std::array::from_fn(|d| centre[d] + rng.random_range(-0.3..0.3)));
            labels.push(c);
        }
    }
    (pts, labels)
}

#[test]
fn separated_blobs_stay_separated() {
    let (pts, labels) = blobs(40, 2);
    let params = TsneParams {
        perplexity: 10.0,
        iters: 600,
        ..TsneParams::default()
    };
    let res = tsne_embed(&pts, 5, &params).unwrap();
    assert!(res.kl_divergence.is_finite() && res.kl_divergence >= 0.0);
    let agree = (0..pts.len())
        .filter(|&i| {
            let nn = (0..pts.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| sq_dist(&res.coords[i], &res.coords[a]).total_cmp(&sq_dist(&res.coords[i], &res.coords[b])))
                .unwrap();
            labels[nn] == labels[i]
        })
        .count();
    assert!(agree as f64 >= 0.95 * pts.len() as f64, "{agree}/{}", pts.len());
    assert_eq!(tsne_embed(&pts, 5, &params).unwrap(), res);
}

#[test]
fn centroid_neighbours_match_a_full_sort() {
    let (pts, _) = blobs(25, 9);
    let ids: Vec<String> = (0..pts.len()).map(|i| format!("u{:03}", (i * 37) % 101)).collect();
    let model = kmeans(&pts, 3, 1, 100, 1e-9).unwrap();
    for n in [1, 7, 25, 100] {
        let got = centroid_neighbors(&model, &pts, &ids, n).unwrap();
        for (c, members) in got.iter().enumerate() {
            let mut all: Vec<usize> = (0..pts.len()).filter(|&i| model.assignments[i] == c).collect();
            all.sort_by(|&a, &b| {
                sq_dist(&pts[a], &model.centroids[c])
                    .partial_cmp(&sq_dist(&pts[b], &model.centroids[c]))
                    .unwrap()
                    .then(ids[a].cmp(&ids[b]))
            });
            all.truncate(n);
            assert_eq!(members, &all);
        }
    }
    assert!(centroid_neighbors(&model, &pts, &ids, 0).is_err());
}

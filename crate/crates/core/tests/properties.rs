use std::collections::BTreeMap;

use proptest::prelude::*;

use tm_landcover::accuracy::{accuracy_report, compare_methods, confusion_matrix, AssessOptions};
use tm_landcover::band_selection::{
    band_statistics, correlation_matrix, rank_combinations, rank_from_table, BandCombo, SortOrder,
};
use tm_landcover::classifiers::{
    classification_map_stats, classify_minimum_distance, classify_parallelepiped, train_signatures,
    ClassSignature, ClassifierConfig, OverlapRule, TrainingSet,
};
use tm_landcover::indices::{vegetation_mask, water_mask, WaterRule};
use tm_landcover::raster::{LabelRaster, MultibandImage};
use tm_landcover::scene::{generate_scene, SceneClass, SceneSpec};

fn scene(
    classes: Vec<(u16, Vec<f64>, Vec<f64>, f64)>,
    w: usize,
    h: usize,
    seed: u64,
) -> (MultibandImage, LabelRaster) {
    let classes = classes
        .into_iter()
        .map(|(label, mean, sigma, fraction)| SceneClass {
            label,
            mean,
            sigma,
            fraction,
        })
        .collect();
    generate_scene(&SceneSpec {
        classes,
        width: w,
        height: h,
        seed,
    })
    .unwrap()
}

fn arb_scene(max_bands: usize) -> impl Strategy<Value = (MultibandImage, LabelRaster)> {
    (1..=max_bands, 1usize..=4, 2usize..12, 2usize..12, any::<u64>()).prop_flat_map(|(nb, k, w, h, seed)| {
        prop::collection::vec(
            (
                prop::collection::vec(0.0..100.0f64, nb),
                prop::collection::vec(0.0..10.0f64, nb),
            ),
            k,
        )
        .prop_map(move |cls| {
            let frac = 1.0 / cls.len() as f64;
            let classes = cls
                .into_iter()
                .enumerate()
                .map(|(i, (m, s))| (i as u16 + 1, m, s, frac))
                .collect();
            scene(classes, w, h, seed)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scene_labels_come_from_spec((img, truth) in arb_scene(4)) {
        let declared = img.band_count(); // just to use img
        prop_assert!(declared >= 1);
        let k = truth.labels().iter().copied().max().unwrap();
        prop_assert!(truth.labels().iter().all(|&l| l >= 1 && l <= k));
    }

    #[test]
    fn masks_partition_pixels(vals in prop::collection::vec(0.0..10.0f64, 7 * 12)) {
        let bands: Vec<Vec<f64>> = vals.chunks(12).map(<[f64]>::to_vec).collect();
        let img = MultibandImage::new(4, 3, bands).unwrap();
        for m in [water_mask(&img, WaterRule::Ratio25).unwrap(), water_mask(&img, WaterRule::index_default()).unwrap(), vegetation_mask(&img).unwrap()] {
            prop_assert!(m.labels().iter().all(|l| [0, 1, 2].contains(l)));
            prop_assert_eq!(m.labels().len(), 12);
        }
    }

    #[test]
    fn signature_order_does_not_change_maps((img, truth) in arb_scene(3), rot in 0usize..4) {
        let t = TrainingSet::from_labelled_pixels(&img, &truth, 1).unwrap();
        let sigs = train_signatures(&t).unwrap();
        let mut permuted = sigs.clone();
        let n = permuted.len();
        permuted.rotate_left(rot % n);
        permuted.reverse();
        let md = ClassifierConfig::minimum_distance();
        prop_assert_eq!(classify_minimum_distance(&img, &sigs, &md).unwrap(), classify_minimum_distance(&img, &permuted, &md).unwrap());
        for rule in [OverlapRule::NearestMean, OverlapRule::FirstMatch, OverlapRule::Unclassified] {
            let pp = ClassifierConfig::parallelepiped().with_overlap_rule(rule);
            prop_assert_eq!(classify_parallelepiped(&img, &sigs, &pp).unwrap(), classify_parallelepiped(&img, &permuted, &pp).unwrap());
        }
    }

    #[test]
    fn min_distance_translation_invariant((img, truth) in arb_scene(3), shift in prop::collection::vec(-64.0..64.0f64, 3)) {
        let t = TrainingSet::from_labelled_pixels(&img, &truth, 1).unwrap();
        let sigs = train_signatures(&t).unwrap();
        let shift: Vec<f64> = shift.iter().map(|s| s.round()).collect();
        let moved_bands: Vec<Vec<f64>> = img.bands().iter().enumerate().map(|(b, band)| band.iter().map(|v| v + shift[b]).collect()).collect();
        let moved = MultibandImage::new(img.width(), img.height(), moved_bands).unwrap();
        let moved_sigs: Vec<ClassSignature> = sigs.iter().map(|s| {
            let mut s = s.clone();
            for (k, &b) in s.bands.clone().iter().enumerate() {
                s.mean[k] += shift[b - 1];
            }
            s
        }).collect();
        let md = ClassifierConfig::minimum_distance();
        let a = classify_minimum_distance(&img, &sigs, &md).unwrap();
        let b = classify_minimum_distance(&moved, &moved_sigs, &md).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn minmax_boxes_never_reject_training_samples((img, truth) in arb_scene(4)) {
        let t = TrainingSet::from_labelled_pixels(&img, &truth, 1).unwrap();
        let sigs = train_signatures(&t).unwrap();
        let map = classify_parallelepiped(&img, &sigs, &ClassifierConfig::parallelepiped()).unwrap();
        prop_assert!(map.labels().iter().all(|&l| l != 0));
    }

    #[test]
    fn confusion_invariants(pairs in prop::collection::vec((0u16..4, 0u16..4), 1..64)) {
        let n = pairs.len();
        let reference = LabelRaster::new(n, 1, pairs.iter().map(|p| p.0).collect()).unwrap();
        let predicted = LabelRaster::new(n, 1, pairs.iter().map(|p| p.1).collect()).unwrap();
        let cm = confusion_matrix(&reference, &predicted, false).unwrap();
        let r = accuracy_report(&cm).unwrap();
        prop_assert!(cm.trace() <= cm.total());
        prop_assert!((0.0..=1.0).contains(&r.overall_accuracy));
        prop_assert_eq!(cm.total(), n as u64);

        // row sums equal reference label histogram
        let hist = classification_map_stats(&reference);
        for (i, l) in cm.labels().iter().enumerate() {
            prop_assert_eq!(cm.row_sum(i), *hist.get(l).unwrap_or(&0) as u64);
        }

        // relabel both rasters with the same permutation
        let perm = |l: u16| [3u16, 0, 1, 2][l as usize] + 10;
        let pr = LabelRaster::new(n, 1, reference.labels().iter().map(|&l| perm(l)).collect()).unwrap();
        let pp = LabelRaster::new(n, 1, predicted.labels().iter().map(|&l| perm(l)).collect()).unwrap();
        let r2 = accuracy_report(&confusion_matrix(&pr, &pp, false).unwrap()).unwrap();
        prop_assert_eq!(r.overall_accuracy, r2.overall_accuracy);
        match (r.kappa, r2.kappa) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }

        let self_cm = confusion_matrix(&reference, &reference, false).unwrap();
        prop_assert_eq!(self_cm.trace(), self_cm.total());
    }

    #[test]
    fn membership_sums_to_r_times_k(scores in prop::collection::vec(0.0..100.0f64, 35), top in 1usize..=35) {
        let combos = tm_landcover::band_selection::enumerate_combinations(7, 3).unwrap();
        let rows: Vec<(BandCombo, f64)> = combos.into_iter().zip(scores).collect();
        let (_, m) = rank_from_table(rows, SortOrder::Descending, top).unwrap();
        prop_assert_eq!(m.values().sum::<usize>(), 3 * top);
    }
}

/// Relabelling bands permutes combos but keeps the multiset of OIF values.
#[test]
fn band_permutation_preserves_oif_multiset() {
    let (img, _) = scene(
        vec![
            (
                1,
                vec![10.0, 50.0, 30.0, 80.0, 5.0],
                vec![3.0, 8.0, 2.0, 10.0, 1.0],
                0.4,
            ),
            (
                2,
                vec![40.0, 20.0, 60.0, 10.0, 25.0],
                vec![5.0, 1.0, 7.0, 2.0, 4.0],
                0.6,
            ),
        ],
        20,
        20,
        11,
    );
    let perm = [3usize, 0, 4, 1, 2];
    let bands: Vec<Vec<f64>> = perm.iter().map(|&p| img.bands()[p].clone()).collect();
    let permuted = MultibandImage::new(20, 20, bands).unwrap();
    let mut a: Vec<f64> = rank_combinations(&img, 3, SortOrder::Ascending)
        .unwrap()
        .records
        .iter()
        .map(|r| r.oif.unwrap())
        .collect();
    let mut b: Vec<f64> = rank_combinations(&permuted, 3, SortOrder::Ascending)
        .unwrap()
        .records
        .iter()
        .map(|r| r.oif.unwrap())
        .collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs(), "{x} vs {y}");
    }
}

/// Independent bands on a large scene: every correlation is small, checked
/// against a direct Pearson computation.
#[test]
fn independent_bands_have_small_correlation() {
    let (img, _) = scene(
        vec![(1, vec![50.0; 4], vec![5.0, 10.0, 1.0, 20.0], 1.0)],
        128,
        128,
        5,
    );
    let corr = correlation_matrix(&img).unwrap();
    let n = img.pixel_count() as f64;
    for a in 1..=4 {
        for b in a + 1..=4 {
            let (xa, xb) = (img.band(a).unwrap(), img.band(b).unwrap());
            let (ma, mb) = (xa.iter().sum::<f64>() / n, xb.iter().sum::<f64>() / n);
            let cov: f64 = xa.iter().zip(xb).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = xa.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = xb.iter().map(|y| (y - mb).powi(2)).sum();
            let oracle = cov / (va * vb).sqrt();
            assert!((corr.get(a, b) - oracle).abs() < 1e-12);
            assert!(oracle.abs() < 0.1, "r({a},{b}) = {oracle}");
        }
    }
}

/// Two classes make the bands strongly correlated; band 4 gets ten times the
/// noise of the others, so it has the largest spread and the weakest
/// correlations. Every combination containing it must outrank every one
/// that does not, and all 35 scores must match a direct computation.
#[test]
fn dominant_band_tops_the_ranking() {
    let mut sigma = vec![2.0; 7];
    sigma[3] = 20.0;
    let (img, _) = scene(
        vec![
            (1, vec![100.0; 7], sigma.clone(), 0.5),
            (2, vec![110.0; 7], sigma, 0.5),
        ],
        64,
        64,
        77,
    );
    let ranking = rank_combinations(&img, 3, SortOrder::Descending).unwrap();
    assert_eq!(ranking.len(), 35);
    let with_four = ranking.records.iter().take_while(|r| r.combo.contains(4)).count();
    assert_eq!(with_four, 15, "all 15 combos containing band 4 should rank first");

    let stats = band_statistics(&img).unwrap();
    let corr = correlation_matrix(&img).unwrap();
    for rec in &ranking.records {
        let c = rec.combo.bands();
        let num: f64 = c.iter().map(|&b| stats[b - 1].stddev).sum();
        let den = corr.get(c[0], c[1]).abs() + corr.get(c[0], c[2]).abs() + corr.get(c[1], c[2]).abs();
        assert!((rec.oif.unwrap() - num / den).abs() < 1e-9 * num / den);
    }
}

#[test]
fn ranking_unchanged_by_positive_scaling() {
    let (img, _) = scene(
        vec![
            (1, vec![10.0, 50.0, 30.0, 80.0], vec![3.0, 8.0, 2.0, 10.0], 0.5),
            (2, vec![40.0, 20.0, 60.0, 10.0], vec![5.0, 1.0, 7.0, 2.0], 0.5),
        ],
        16,
        16,
        3,
    );
    let base = rank_combinations(&img, 2, SortOrder::Descending).unwrap();
    let scaled = rank_combinations(&img.scaled(7.0), 2, SortOrder::Descending).unwrap();
    let combos = |r: &tm_landcover::OifRanking| r.records.iter().map(|x| x.combo.clone()).collect::<Vec<_>>();
    assert_eq!(combos(&base), combos(&scaled));
}

fn compare_scene(sep_sigmas: f64, seed: u64) -> (MultibandImage, LabelRaster) {
    let sigma = 4.0;
    let classes = (0..3u16)
        .map(|k| {
            (
                k + 1,
                (0..4)
                    .map(|b| 50.0 + sep_sigmas * sigma * f64::from(k) + b as f64)
                    .collect(),
                vec![sigma; 4],
                1.0 / 3.0,
            )
        })
        .collect();
    scene(classes, 60, 60, seed)
}

#[test]
fn compare_methods_on_separated_scene() {
    let (img, truth) = compare_scene(10.0, 8);
    let training = TrainingSet::from_labelled_pixels(&img, &truth, 2).unwrap();
    let configs = [
        ClassifierConfig::parallelepiped(),
        ClassifierConfig::minimum_distance(),
    ];
    let rows = compare_methods(&img, &training, &truth, &configs, AssessOptions::default()).unwrap();
    assert!(rows
        .windows(2)
        .all(|w| w[0].overall_accuracy >= w[1].overall_accuracy));
    for row in &rows {
        assert!(
            row.overall_accuracy >= 0.99,
            "{}: {}",
            row.config,
            row.overall_accuracy
        );
    }

    // oracle: per-pixel nearest-mean accuracy computed directly
    let sigs = train_signatures(&training).unwrap();
    let correct = (0..img.pixel_count())
        .filter(|&p| {
            let best = sigs
                .iter()
                .min_by(|a, b| {
                    let d = |s: &ClassSignature| {
                        s.bands
                            .iter()
                            .enumerate()
                            .map(|(k, &bn)| (img.band(bn).unwrap()[p] - s.mean[k]).powi(2))
                            .sum::<f64>()
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            best.label == truth.labels()[p]
        })
        .count();
    let md = rows
        .iter()
        .find(|r| r.config == ClassifierConfig::minimum_distance())
        .unwrap();
    assert_eq!(md.overall_accuracy, correct as f64 / img.pixel_count() as f64);
}

#[test]
fn identical_configs_give_identical_rows() {
    let (img, truth) = compare_scene(3.0, 9);
    let training = TrainingSet::from_labelled_pixels(&img, &truth, 3).unwrap();
    let cfg = ClassifierConfig::minimum_distance();
    let rows = compare_methods(&img, &training, &truth, &[cfg, cfg], AssessOptions::default()).unwrap();
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn min_distance_beats_first_match_boxes_on_overlapping_classes() {
    let mut wins = BTreeMap::new();
    for seed in 0..5 {
        let (img, truth) = compare_scene(1.0, 100 + seed);
        let training = TrainingSet::from_labelled_pixels(&img, &truth, 4).unwrap();
        let first = ClassifierConfig::parallelepiped().with_overlap_rule(OverlapRule::FirstMatch);
        let rows = compare_methods(
            &img,
            &training,
            &truth,
            &[first, ClassifierConfig::minimum_distance()],
            AssessOptions::default(),
        )
        .unwrap();
        let get = |c: ClassifierConfig| rows.iter().find(|r| r.config == c).unwrap().overall_accuracy;
        let (md, pp) = (get(ClassifierConfig::minimum_distance()), get(first));
        assert!(md >= pp, "seed {seed}: mindist {md} < parallelepiped/first {pp}");
        wins.insert(seed, (md, pp));
    }
    println!("overlapping scenes (mindist, parallelepiped/first): {wins:?}");
}

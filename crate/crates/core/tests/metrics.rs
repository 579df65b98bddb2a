use fruitsize::metrics::{
    average_precision, mae, mape, mask_iou, match_instances, precision_recall_f1, r_squared, rmse, GroundTruthMask,
    MatchCounts, ScoredDetection, SizeSeries,
};
use fruitsize::MaskRegion;
use proptest::prelude::*;

fn series(actual: &[f64], predicted: &[f64]) -> SizeSeries<f64> {
    SizeSeries::new(actual.to_vec(), predicted.to_vec()).unwrap()
}

fn rect(x0: usize, x1: usize) -> MaskRegion {
    MaskRegion::from_fn(10, 4, |u, _| (x0..x1).contains(&u))
}

fn det(mask: MaskRegion, confidence: f64) -> ScoredDetection {
    ScoredDetection::new(mask, confidence, 0).unwrap()
}

fn gt(mask: MaskRegion) -> GroundTruthMask {
    GroundTruthMask { mask, image_id: 0 }
}

#[test]
fn rmse_matches_exact_integer_sum() {
    // Values on a micrometre grid, so the squared error sum is exact in i128.
    let mut state = 12345u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as i64 % 80_000
    };
    let (ya, pa): (Vec<i64>, Vec<i64>) = (0..1000).map(|_| (next() + 20_000, next() + 20_000)).unzip();
    let sse: i128 = ya.iter().zip(&pa).map(|(&y, &p)| ((p - y) as i128).pow(2)).sum();
    let exact = (sse as f64 / 1000.0).sqrt() / 1000.0;
    let abs: i128 = ya.iter().zip(&pa).map(|(&y, &p)| (p - y).abs() as i128).sum();
    let exact_mae = abs as f64 / 1000.0 / 1000.0;

    let um = |v: &[i64]| v.iter().map(|&x| x as f64 / 1000.0).collect::<Vec<_>>();
    let s = series(&um(&ya), &um(&pa));
    assert!((rmse(&s) / exact - 1.0).abs() < 1e-12);
    assert!((mae(&s) / exact_mae - 1.0).abs() < 1e-12);
}

#[test]
fn equal_residuals_make_mae_equal_rmse() {
    let s = series(&[20.0, 30.0, 40.0], &[21.5, 28.5, 41.5]);
    assert!((mae(&s) - rmse(&s)).abs() < 1e-12);
    let s = series(&[20.0, 30.0, 40.0], &[21.0, 30.0, 40.0]);
    assert!(mae(&s) < rmse(&s));
}

#[test]
fn r_squared_edge_cases() {
    let s = series(&[20.0, 30.0, 40.0], &[20.0, 30.0, 40.0]);
    assert_eq!(r_squared(&s).unwrap(), 1.0);
    assert!(r_squared(&series(&[30.0, 30.0], &[29.0, 31.0])).is_err());
    assert!(mape(&series(&[0.0, 30.0], &[1.0, 31.0])).is_err());
}

#[test]
fn higher_confidence_duplicate_wins_the_match() {
    let gts = [rect(0, 5)];
    let preds = [det(rect(0, 4), 0.6), det(rect(0, 5), 0.9)];
    let m = match_instances(&preds, &gts, 0.5).unwrap();
    assert_eq!(m.counts, MatchCounts { tp: 1, fp: 1, fn_: 0 });
    assert_eq!(m.assignment, vec![None, Some(0)]);
}

#[test]
fn ap_hand_enumerated_curves() {
    let gts = [gt(rect(0, 5))];
    // Ranked [FP, TP]: precision 1/2 at full recall.
    let ranked = [det(rect(6, 10), 0.9), det(rect(0, 5), 0.8)];
    assert!((average_precision(&ranked, &gts, 0.5).unwrap() - 0.5).abs() < 1e-12);
    // A lower-confidence duplicate only adds an FP after full recall.
    let dup = [det(rect(0, 5), 0.9), det(rect(0, 5), 0.3)];
    assert!((average_precision(&dup, &gts, 0.5).unwrap() - 1.0).abs() < 1e-12);
}

fn mask_strategy() -> impl Strategy<Value = MaskRegion> {
    prop::collection::vec(any::<bool>(), 10 * 4).prop_map(|b| MaskRegion::new(10, 4, b).unwrap())
}

proptest! {
    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((1.0..100.0f64, 1.0..100.0f64), 1..60)) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = series(&y, &p);
        prop_assert!(0.0 <= mae(&s));
        prop_assert!(mae(&s) <= rmse(&s) * (1.0 + 1e-12));
        if let Ok(r2) = r_squared(&s) {
            prop_assert!(r2 <= 1.0);
        }
    }

    #[test]
    fn mape_is_scale_invariant(pairs in prop::collection::vec((1.0..100.0f64, 1.0..100.0f64), 1..60), k in 0.01..100.0f64) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let a = mape(&series(&y, &p)).unwrap();
        let b = mape(&series(&scaled(&y), &scaled(&p))).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in mask_strategy(), b in mask_strategy()) {
        let ab = mask_iou(&a, &b).unwrap();
        prop_assert_eq!(ab, mask_iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if a.count() > 0 {
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn prf_matches_enumeration(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        // Enumerate outcomes: each prediction is a hit or a miss, each truth found or not.
        let preds: Vec<bool> = (0..tp + fp).map(|i| i < tp).collect();
        let truths: Vec<bool> = (0..tp + fn_).map(|i| i < tp).collect();
        let frac = |v: &[bool]| if v.is_empty() { 0.0 } else { v.iter().filter(|&&x| x).count() as f64 / v.len() as f64 };
        let (p, r) = (frac(&preds), frac(&truths));
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let got = precision_recall_f1(MatchCounts { tp, fp, fn_ });
        prop_assert_eq!(got, (p, r, f1));
    }

    #[test]
    fn ap_ignores_monotone_rescoring(
        preds in prop::collection::vec((mask_strategy(), 0.0..1.0f64), 1..8),
        truths in prop::collection::vec(mask_strategy(), 1..4),
    ) {
        let gts: Vec<GroundTruthMask> = truths.into_iter().map(gt).collect();
        let a: Vec<ScoredDetection> = preds.iter().map(|(m, c)| det(m.clone(), *c)).collect();
        let b: Vec<ScoredDetection> = preds.iter().map(|(m, c)| det(m.clone(), c * c)).collect();
        let ap = average_precision(&a, &gts, 0.5).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
        prop_assert_eq!(ap, average_precision(&b, &gts, 0.5).unwrap());
    }
}

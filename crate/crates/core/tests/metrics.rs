mod oracles;

use glanceseg::eval::{dice, pr_curve, Confusion};
use glanceseg::{CandidateMask, Mask, PixelPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-pixel maximum confidence over the covering masks.
fn scores_of(preds: &[CandidateMask], w: u32, h: u32) -> Vec<Option<f64>> {
    let mut out = vec![None; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            for m in preds {
                if m.contains(PixelPoint::new(x, y)) {
                    let s: &mut Option<f64> = &mut out[(y * w + x) as usize];
                    *s = Some(s.map_or(m.confidence, |c| c.max(m.confidence)));
                }
            }
        }
    }
    out
}

fn check(preds: &[CandidateMask], gt: &Mask) {
    let (w, h) = gt.dims();
    let want = oracles::aupr_bruteforce(&scores_of(preds, w, h), gt.bits());
    let got = pr_curve(preds, gt).unwrap().aupr;
    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
}

fn mask_from_bits(w: u32, h: u32, bits: u64) -> Mask {
    Mask::from_bits(w, h, (0..w * h).map(|i| bits >> i & 1 == 1).collect()).unwrap()
}

#[test]
fn aupr_exhaustive_on_tiny_grids() {
    let levels = [None, Some(0.25), Some(0.5), Some(0.75)];
    for (w, h) in [(1u32, 1u32), (2, 1), (3, 1), (2, 2)] {
        let n = (w * h) as usize;
        for gt_bits in 1..(1u64 << n) {
            let gt = mask_from_bits(w, h, gt_bits);
            for code in 0..4usize.pow(n as u32) {
                let mut preds = Vec::new();
                for (k, conf) in levels.iter().enumerate().skip(1) {
                    let px: Vec<PixelPoint> = (0..n)
                        .filter(|i| code / 4usize.pow(*i as u32) % 4 == k)
                        .map(|i| PixelPoint::new(i as u32 % w, i as u32 / w))
                        .collect();
                    if let Some(m) = CandidateMask::from_pixels((w, h), &px, conf.unwrap(), PixelPoint::new(0, 0)) {
                        preds.push(m);
                    }
                }
                if preds.is_empty() {
                    assert_eq!(pr_curve(&preds, &gt).unwrap().aupr, 0.0);
                } else {
                    check(&preds, &gt);
                }
            }
        }
    }
}

#[test]
fn aupr_random_overlapping_masks_up_to_10x10() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for w in 1..=10u32 {
        for h in 1..=10u32 {
            for _ in 0..10 {
                let gt = Mask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.3)).collect()).unwrap();
                if gt.is_empty() {
                    continue;
                }
                let preds: Vec<CandidateMask> = (0..rng.random_range(1..5))
                    .filter_map(|_| {
                        let m = Mask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.4)).collect()).unwrap();
                        // coarse levels force ties
                        let conf = rng.random_range(0..5) as f64 / 4.0;
                        CandidateMask::from_mask(&m, conf, PixelPoint::new(0, 0))
                    })
                    .collect();
                check(&preds, &gt);
            }
        }
    }
}

#[test]
fn aupr_of_perfect_prediction_is_one() {
    let gt = mask_from_bits(4, 3, 0b0110_0110_0000);
    let pred = CandidateMask::from_mask(&gt, 0.7, PixelPoint::new(1, 1)).unwrap();
    assert_eq!(pr_curve(&[pred], &gt).unwrap().aupr, 1.0);
}

#[test]
fn dice_matches_oracle_and_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let (w, h) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let a = Mask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        let b = Mask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        let d = dice(&a, &b).unwrap();
        assert!((d - oracles::dice_bruteforce(a.bits(), b.bits())).abs() <= 1e-12);
        assert_eq!(d, dice(&b, &a).unwrap());
        assert_eq!(Confusion::of(&a, &b).unwrap().dice(), d);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let empty = Mask::new(w, h);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        if !a.is_empty() {
            assert_eq!(dice(&a, &empty).unwrap(), 0.0);
            assert_eq!(dice(&empty, &a).unwrap(), 0.0);
        }
        let mut complement = Mask::new(w, h);
        for (i, &bit) in a.bits().iter().enumerate() {
            complement.set(i as u32 % w, i as u32 / w, !bit);
        }
        if !a.is_empty() && !complement.is_empty() {
            assert_eq!(dice(&a, &complement).unwrap(), 0.0);
        }
    }
}

#[test]
fn dimension_mismatch_rejected() {
    assert!(dice(&Mask::new(3, 3), &Mask::new(3, 4)).is_err());
}

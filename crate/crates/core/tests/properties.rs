mod oracles;

use glanceseg::dkf::apply_dkf;
use glanceseg::eval::{dice, pr_curve};
use glanceseg::gaze::build_gaze_map;
use glanceseg::prompts::{generate_prompts, make_grid};
use glanceseg::saliency::{fuse, ft_saliency, mbd_raw, mbd_saliency};
use glanceseg::segmenter::rle;
use glanceseg::{CandidateMask, Frame, GazeAccumulator, GazeSample, GazeTrace, GrayMap, Mask, PipelineConfig, PixelPoint};
use proptest::prelude::*;

fn mask_strategy(max_side: u32) -> impl Strategy<Value = Mask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), (w * h) as usize)
            .prop_map(move |bits| Mask::from_bits(w, h, bits).unwrap())
    })
}

fn frame_strategy() -> impl Strategy<Value = Frame> {
    (8u32..=24, 8u32..=24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |px| Frame::new(w, h, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rle_round_trips(m in mask_strategy(20)) {
        let counts = rle::encode(&m);
        prop_assert_eq!(counts.iter().map(|&c| c as u64).sum::<u64>(), (m.width() * m.height()) as u64);
        prop_assert_eq!(counts[0] == 0, m.get(0, 0));
        prop_assert_eq!(rle::decode(&counts, m.width(), m.height()).unwrap(), m);
    }

    #[test]
    fn accumulator_matches_batch(
        pts in proptest::collection::vec((0.0f64..120.0, 0.0f64..90.0, any::<bool>()), 1..30),
        chunk in 1usize..8,
    ) {
        let samples: Vec<GazeSample> = pts
            .iter()
            .enumerate()
            .map(|(k, &(x, y, valid))| GazeSample { valid, ..GazeSample::new(k as f64, x, y) })
            .collect();
        let trace = GazeTrace::new("p", samples.clone());
        let mut acc = GazeAccumulator::new((120, 90), 25.0).unwrap();
        for c in samples.chunks(chunk) {
            acc.extend(c);
        }
        match build_gaze_map(&trace, (120, 90), 25.0) {
            Ok(batch) => prop_assert_eq!(acc.snapshot(), batch),
            Err(_) => prop_assert_eq!(acc.deposited(), 0),
        }
    }

    #[test]
    fn prompts_lie_on_grid_and_in_mask(m in mask_strategy(40), n in 2u32..60) {
        let set = generate_prompts(&m, n).unwrap();
        let grid = make_grid(m.dims(), n).unwrap();
        for w in set.points.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for p in &set.points {
            prop_assert!(m.get(p.x, p.y));
            prop_assert!(grid.contains(p));
        }
        let expected = grid.iter().filter(|p| m.get(p.x, p.y)).count();
        prop_assert_eq!(set.len(), expected);
    }

    #[test]
    fn saliency_maps_in_unit_range(f in frame_strategy()) {
        let ft = ft_saliency(&f).unwrap();
        let mbd = mbd_saliency(&f, 8).unwrap();
        let fused = fuse(&ft, &mbd, 0.5, 0.5).unwrap();
        for s in [&ft, &mbd, &fused] {
            prop_assert!(s.map.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mbd_never_below_exact(
        (w, h, values) in (3u32..10, 3u32..10).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), proptest::collection::vec((0u8..=255).prop_map(f64::from), (w * h) as usize))
        }),
    ) {
        let exact = oracles::mbd_exact(&values, w as usize, h as usize);
        let (approx, _) = mbd_raw(&GrayMap::new(w, h, values).unwrap(), 100);
        for (a, e) in approx.values().iter().zip(&exact) {
            prop_assert!(*a >= *e);
        }
    }

    #[test]
    fn dkf_accepts_a_subset(f in frame_strategy(), masks in proptest::collection::vec((0u32..4, 0u32..4, 1u32..5, 1u32..5), 0..6)) {
        let cands: Vec<CandidateMask> = masks
            .iter()
            .map(|&(x, y, w, h)| {
                let px: Vec<PixelPoint> = (y..y + h)
                    .flat_map(|yy| (x..x + w).map(move |xx| PixelPoint::new(xx, yy)))
                    .collect();
                CandidateMask::from_pixels(f.dims(), &px, 0.5, px[0]).unwrap()
            })
            .collect();
        let out = apply_dkf(&cands, &f, PixelPoint::new(0, 0), f.dims(), &PipelineConfig::default()).unwrap();
        prop_assert_eq!(out.report.len(), cands.len());
        let kept: Vec<&CandidateMask> = cands.iter().zip(&out.report).filter(|(_, r)| r.accepted).map(|(c, _)| c).collect();
        prop_assert_eq!(out.accepted.len(), kept.len());
        for (a, c) in out.accepted.iter().zip(kept) {
            prop_assert_eq!(a, c);
        }
    }

    #[test]
    fn pr_recall_monotone_and_dice_bounded(
        gt in mask_strategy(10),
        raw in proptest::collection::vec((proptest::collection::vec(any::<bool>(), 100), 0.0f64..1.0), 1..4),
    ) {
        let (w, h) = gt.dims();
        let preds: Vec<CandidateMask> = raw
            .iter()
            .filter_map(|(bits, c)| {
                let m = Mask::from_bits(w, h, bits[..(w * h) as usize].to_vec()).unwrap();
                CandidateMask::from_mask(&m, *c, PixelPoint::new(0, 0))
            })
            .collect();
        if !gt.is_empty() {
            let curve = pr_curve(&preds, &gt).unwrap();
            for pair in curve.points.windows(2) {
                prop_assert!(pair[0].recall <= pair[1].recall);
                prop_assert!(pair[0].threshold > pair[1].threshold);
            }
            prop_assert!(curve.points.iter().all(|p| (0.0..=1.0).contains(&p.precision)));
            prop_assert!((0.0..=1.0).contains(&curve.aupr));
        }
        for p in &preds {
            let d = dice(&p.to_mask(), &gt).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}

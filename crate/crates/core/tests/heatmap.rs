mod common;

use centroid_core::heatmap::{decode, decode_peaks, encode, gaussian_patch, Heatmap, KernelSpec, Point, PointSet};
use common::{encode_oracle, rng};
use proptest::prelude::*;
use rand::Rng;

fn set(w: usize, h: usize, pts: &[(f64, f64)]) -> PointSet {
    PointSet::new(w, h, pts.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
}

fn rounded(pts: &[Point]) -> Vec<(i64, i64)> {
    let mut v: Vec<_> = pts.iter().map(Point::pixel).collect();
    v.sort_unstable();
    v
}

/// Rejection-samples `n` points at least `sep` apart and `margin` from every border.
fn separated(r: &mut impl Rng, n: usize, w: usize, h: usize, sep: f64, margin: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    while out.len() < n {
        let p = Point::new(
            r.gen_range(margin..w as f64 - 1.0 - margin).round(),
            r.gen_range(margin..h as f64 - 1.0 - margin).round(),
        );
        if out.iter().all(|q| q.distance(&p) > sep) {
            out.push(p);
        }
    }
    out
}

#[test]
fn two_close_points_match_oracle() {
    let spec = KernelSpec::with_sigma(5.0).unwrap();
    let ps = set(40, 40, &[(16.0, 20.0), (24.0, 20.0)]);
    let hm = encode(&ps, &spec);
    let want = encode_oracle(ps.points(), 40, 40, &spec);
    for (a, b) in hm.values().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
    let a = encode(&set(40, 40, &[(16.0, 20.0)]), &spec);
    let b = encode(&set(40, 40, &[(24.0, 20.0)]), &spec);
    for i in 0..hm.values().len() {
        assert_eq!(hm.values()[i], a.values()[i].max(b.values()[i]));
    }
}

#[test]
fn isolated_point_round_trip() {
    let spec = KernelSpec::with_sigma(5.0).unwrap();
    let hm = encode(&set(128, 128, &[(64.0, 64.0)]), &spec);
    let back = decode(&hm, 0.5, 5).unwrap();
    assert_eq!(back.points(), &[Point::new(64.0, 64.0)]);
}

#[test]
fn fifty_points_round_trip() {
    let spec = KernelSpec::with_sigma(5.0).unwrap();
    let r = spec.radius() as f64;
    let pts = separated(&mut rng(50), 50, 512, 512, 2.0 * r, 0.0);
    let hm = encode(&PointSet::new(512, 512, pts.clone()).unwrap(), &spec);
    let back = decode(&hm, 0.5, 5).unwrap();
    assert_eq!(rounded(back.points()), rounded(&pts));
}

#[test]
fn subpixel_points_decode_to_their_pixel() {
    let spec = KernelSpec::with_sigma(3.0).unwrap();
    let hm = encode(&set(64, 64, &[(20.4, 30.6)]), &spec);
    let back = decode(&hm, 0.5, 1).unwrap();
    assert_eq!(back.points(), &[Point::new(20.0, 31.0)]);
}

#[test]
fn decode_scores_are_heatmap_values() {
    let hm = Heatmap::new(4, 1, vec![0.6, 0.1, 0.1, 0.9]).unwrap();
    let peaks = decode_peaks(&hm, 0.5, 1).unwrap();
    assert_eq!(peaks.len(), 2);
    assert_eq!((peaks[0].x, peaks[0].score), (3.0, 0.9));
    assert_eq!((peaks[1].x, peaks[1].score), (0.0, 0.6));
    assert!(decode_peaks(&hm, 0.0, 1).is_err());
    assert!(decode_peaks(&hm, 1.0, 1).is_err());
}

#[test]
fn patch_is_symmetric_and_monotone() {
    let patch = gaussian_patch(&KernelSpec::with_sigma(4.0).unwrap());
    let r = patch.radius() as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = patch.at(dx, dy);
            assert_eq!(v, patch.at(-dx, dy));
            assert_eq!(v, patch.at(dy, dx));
            if dx > 0 {
                assert!(v <= patch.at(dx - 1, dy));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_in_unit_range(
        pts in prop::collection::vec((0.0f64..47.0, 0.0f64..31.0), 0..12),
        sigma in 0.5f64..8.0,
    ) {
        let ps = PointSet::new(48, 32, pts.iter().map(|&(x, y)| Point::new(x, y)).collect());
        prop_assume!(ps.is_ok());
        let hm = encode(&ps.unwrap(), &KernelSpec::with_sigma(sigma).unwrap());
        prop_assert!(hm.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn encode_matches_oracle(
        w in 1usize..=32, h in 1usize..=32,
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..6),
        sigma in 0.5f64..6.0, trunc in 1.0f64..4.0,
    ) {
        let pts: Vec<Point> = raw.iter().map(|&(u, v)| Point::new(u * (w - 1) as f64, v * (h - 1) as f64)).collect();
        let ps = PointSet::new(w, h, pts);
        prop_assume!(ps.is_ok());
        let ps = ps.unwrap();
        let spec = KernelSpec::new(sigma, trunc).unwrap();
        let hm = encode(&ps, &spec);
        let want = encode_oracle(ps.points(), w, h, &spec);
        for (a, b) in hm.values().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn max_fusion_composes(
        p in prop::collection::vec((0u32..64, 0u32..64), 1..6),
        q in prop::collection::vec((0u32..64, 0u32..64), 1..6),
        sigma in 1.0f64..6.0,
    ) {
        let to = |v: &[(u32, u32)]| v.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect::<Vec<_>>();
        let (pp, qq) = (to(&p), to(&q));
        let mut all = pp.clone();
        all.extend(qq.iter().copied());
        let union = PointSet::new(64, 64, all);
        prop_assume!(union.is_ok());
        let spec = KernelSpec::with_sigma(sigma).unwrap();
        let u = encode(&union.unwrap(), &spec);
        let a = encode(&PointSet::new(64, 64, pp).unwrap(), &spec);
        let b = encode(&PointSet::new(64, 64, qq).unwrap(), &spec);
        for i in 0..u.values().len() {
            prop_assert_eq!(u.values()[i], a.values()[i].max(b.values()[i]));
        }
    }

    #[test]
    fn round_trip_well_separated(seed in any::<u64>(), n in 1usize..8, sigma in 1.0f64..4.0) {
        let spec = KernelSpec::with_sigma(sigma).unwrap();
        let r = spec.radius() as f64;
        let pts = separated(&mut rng(seed), n, 160, 160, 2.0 * r + 1.0, r);
        let hm = encode(&PointSet::new(160, 160, pts.clone()).unwrap(), &spec);
        let back = decode(&hm, 0.5, 1).unwrap();
        prop_assert_eq!(rounded(back.points()), rounded(&pts));
    }

    #[test]
    fn translation_equivariant(
        pts in prop::collection::vec((20u32..44, 20u32..44), 1..5),
        dx in -10i64..=10, dy in -10i64..=10,
    ) {
        let spec = KernelSpec::with_sigma(2.0).unwrap();
        let base: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect();
        let ps = PointSet::new(64, 64, base.clone());
        prop_assume!(ps.is_ok());
        let moved: Vec<Point> = base.iter().map(|p| Point::new(p.x + dx as f64, p.y + dy as f64)).collect();
        let a = encode(&ps.unwrap(), &spec);
        let b = encode(&PointSet::new(64, 64, moved).unwrap(), &spec);
        for y in 0..64i64 {
            for x in 0..64i64 {
                let (sx, sy) = (x - dx, y - dy);
                let want = if (0..64).contains(&sx) && (0..64).contains(&sy) {
                    a.get(sx as usize, sy as usize)
                } else {
                    0.0
                };
                prop_assert_eq!(b.get(x as usize, y as usize), want);
            }
        }
    }
}

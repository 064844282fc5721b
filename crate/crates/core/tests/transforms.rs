mod common;

use std::f64::consts::PI;

use common::{max_abs_diff, random_image};
use proptest::prelude::*;
use tomoprior::transforms::{analyze, synthesize, Basis, BasisKind};
use tomoprior::Image;

/// Orthonormal DCT-II by the defining double sum; coefficient (kx, ky) at
/// `ky * w + kx`.
fn dct_direct(img: &Image) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; w * h];
    for ky in 0..h {
        for kx in 0..w {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += img.get(x, y)
                        * (PI * (2 * x + 1) as f64 * kx as f64 / (2 * w) as f64).cos()
                        * (PI * (2 * y + 1) as f64 * ky as f64 / (2 * h) as f64).cos();
                }
            }
            out[ky * w + kx] = a(kx, w) * a(ky, h) * s;
        }
    }
    out
}

/// Pyramid Haar from 2x2 block sums and differences: at each level the
/// approximation block splits into approximation (top left), horizontal
/// detail (top right), vertical detail (bottom left) and diagonal detail.
/// Images are zero-padded to a centred power-of-two square.
fn haar_pyramid(img: &Image) -> Vec<f64> {
    let n = img.width().max(img.height()).next_power_of_two();
    let (ox, oy) = ((n - img.width()) / 2, (n - img.height()) / 2);
    let mut cur = vec![0.0; n * n];
    for y in 0..img.height() {
        for x in 0..img.width() {
            cur[(y + oy) * n + x + ox] = img.get(x, y);
        }
    }
    let mut out = cur.clone();
    let mut len = n;
    while len >= 2 {
        let half = len / 2;
        let mut approx = vec![0.0; half * half];
        for by in 0..half {
            for bx in 0..half {
                let p = |dx: usize, dy: usize| cur[(2 * by + dy) * n + 2 * bx + dx];
                let (a, b, c, d) = (p(0, 0), p(1, 0), p(0, 1), p(1, 1));
                approx[by * half + bx] = (a + b + c + d) / 2.0;
                out[by * n + half + bx] = (a - b + c - d) / 2.0;
                out[(half + by) * n + bx] = (a + b - c - d) / 2.0;
                out[(half + by) * n + half + bx] = (a - b - c + d) / 2.0;
            }
        }
        for by in 0..half {
            for bx in 0..half {
                cur[by * n + bx] = approx[by * half + bx];
                out[by * n + bx] = approx[by * half + bx];
            }
        }
        len = half;
    }
    out
}

#[test]
fn dct_matches_defining_sum() {
    for (w, h, seed) in [(8, 8, 1), (5, 7, 2), (1, 6, 3), (9, 1, 4)] {
        let img = random_image(w, h, seed, -1.0, 1.0);
        let got = analyze(&img, BasisKind::Dct2).unwrap();
        assert!(max_abs_diff(&got.data, &dct_direct(&img)) <= 1e-12, "{w}x{h}");
    }
}

#[test]
fn haar_matches_block_pyramid() {
    for (w, h, seed) in [(8, 8, 5), (4, 4, 6), (16, 16, 7), (5, 3, 8), (1, 1, 9)] {
        let img = random_image(w, h, seed, -1.0, 1.0);
        let got = analyze(&img, BasisKind::Haar2).unwrap();
        assert!(max_abs_diff(&got.data, &haar_pyramid(&img)) <= 1e-12, "{w}x{h}");
    }
}

#[test]
fn atoms_are_orthonormal() {
    for (kind, w, h) in [(BasisKind::Dct2, 6, 4), (BasisKind::Haar2, 4, 4), (BasisKind::Haar2, 3, 2)] {
        let b = Basis::new(kind, w, h).unwrap();
        let n = b.coeff_len();
        let atoms: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut c = vec![0.0; n];
                c[i] = 1.0;
                b.synthesize_raw(&c)
            })
            .collect();
        if b.coeff_len() == b.image_len() {
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = atoms[i].iter().zip(&atoms[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() <= 1e-12, "{kind:?} ({i},{j}) {d}");
                }
            }
        } else {
            // padded grids: synthesis is the cropped adjoint, so atoms span
            // the image but are not orthonormal
            for x in 0..b.image_len() {
                let mut e = vec![0.0; b.image_len()];
                e[x] = 1.0;
                let back = b.synthesize_raw(&b.analyze_raw(&e));
                assert!(max_abs_diff(&back, &e) <= 1e-12);
            }
        }
    }
}

#[test]
fn free_functions_agree_with_bound_basis() {
    let img = random_image(12, 10, 11, 0.0, 1.0);
    for kind in [BasisKind::Dct2, BasisKind::Haar2] {
        let c = analyze(&img, kind).unwrap();
        let b = Basis::new(kind, 12, 10).unwrap();
        assert_eq!(c.data, b.analyze_raw(img.data()));
        let back = synthesize(&c, 12, 10).unwrap();
        assert!(max_abs_diff(back.data(), img.data()) <= 1e-12);
    }
}

fn kind_strategy() -> impl Strategy<Value = BasisKind> {
    prop_oneof![Just(BasisKind::Dct2), Just(BasisKind::Haar2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_and_round_trip(kind in kind_strategy(), w in 1usize..24, h in 1usize..24, seed in 0u64..10_000) {
        let img = random_image(w, h, seed, -5.0, 5.0);
        let c = analyze(&img, kind).unwrap();
        let energy: f64 = c.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((energy - img.norm()).abs() <= 1e-10 * img.norm().max(1.0));
        let back = synthesize(&c, w, h).unwrap();
        prop_assert!(max_abs_diff(back.data(), img.data()) <= 1e-10);
    }

    #[test]
    fn analysis_is_linear(kind in kind_strategy(), w in 1usize..12, h in 1usize..12, seed in 0u64..10_000, a in -3.0f64..3.0) {
        let x = random_image(w, h, seed, -1.0, 1.0);
        let y = random_image(w, h, seed + 1, -1.0, 1.0);
        let b = Basis::new(kind, w, h).unwrap();
        let lhs = b.analyze_raw(x.lincomb(a, &y, 1.0).data());
        let cx = b.analyze_raw(x.data());
        let cy = b.analyze_raw(y.data());
        let rhs: Vec<f64> = cx.iter().zip(&cy).map(|(u, v)| a * u + v).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-11);
    }

    #[test]
    fn synthesis_is_the_adjoint_of_analysis(kind in kind_strategy(), w in 1usize..12, h in 1usize..12, seed in 0u64..10_000) {
        let b = Basis::new(kind, w, h).unwrap();
        let x = random_image(w, h, seed, -1.0, 1.0);
        let theta = random_image(b.coeff_len(), 1, seed + 7, -1.0, 1.0);
        let lhs: f64 = b.analyze_raw(x.data()).iter().zip(theta.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(b.synthesize_raw(theta.data())).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }
}

//! Property-based invariants over randomized inputs.

use csc_core::container::{Container, Section};
use csc_core::image::{
    extract_patch, normalize_by_weights, place_patch_accumulate, psnr, Boundary, Image, PatchIndex,
};
use csc_core::pursuit::soft_threshold;
use proptest::prelude::*;

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero(y in -1e6f64..1e6, tau in 0.0f64..1e3) {
        let s = soft_threshold(y, tau);
        prop_assert!(s.abs() <= y.abs());
        prop_assert!(s * y >= 0.0);
        prop_assert!((y.abs() - s.abs() - tau.min(y.abs())).abs() < 1e-9);
    }

    #[test]
    fn psnr_symmetric_and_monotone_in_mse(
        data in prop::collection::vec(0.0f64..255.0, 16),
        delta1 in 0.1f64..50.0,
        extra in 0.1f64..50.0,
    ) {
        let a = Image::from_vec(4, 4, data).unwrap();
        let b = a.map(|v| v + delta1);
        let c = a.map(|v| v + delta1 + extra);
        prop_assert_eq!(psnr(&a, &b, 255.0).unwrap(), psnr(&b, &a, 255.0).unwrap());
        prop_assert!(psnr(&a, &b, 255.0).unwrap() > psnr(&a, &c, 255.0).unwrap());
    }

    #[test]
    fn extract_place_normalize_round_trips(
        data in prop::collection::vec(-1e3f64..1e3, 36),
        row in 0usize..6,
        col in 0usize..6,
        size in 1usize..4,
    ) {
        let img = Image::from_vec(6, 6, data).unwrap();
        let idx = PatchIndex::new(row, col, size);
        let patch = extract_patch(&img, idx, Boundary::Periodic).unwrap();
        let mut acc = Image::zeros(6, 6);
        let mut wts = Image::zeros(6, 6);
        place_patch_accumulate(&mut acc, &mut wts, idx, &patch, Boundary::Periodic).unwrap();
        let avg = normalize_by_weights(&acc, &wts);
        for r in 0..size {
            for c in 0..size {
                let (tr, tc) = ((row + r) % 6, (col + c) % 6);
                prop_assert_eq!(avg.get(tr, tc), img.get(tr, tc));
            }
        }
    }

    #[test]
    fn container_payloads_round_trip_bit_exact(
        data in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 12),
        meta in "[a-z]{1,8}",
    ) {
        let image = Image::from_vec(3, 4, data).unwrap();
        let c = Container {
            metadata: vec![("key".into(), meta)],
            sections: vec![Section::FloatImage { name: "img".into(), image: image.clone() }],
        };
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&bytes, &back.to_bytes());
        match back.find("img").unwrap() {
            Section::FloatImage { image: img2, .. } => {
                for (a, b) in image.data().iter().zip(img2.data()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            _ => prop_assert!(false),
        }
    }
}

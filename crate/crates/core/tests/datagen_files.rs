use mofkit_core::datagen::{
    generate, generate_dataset, make_sample, read_dataset, sample_cut, write_dataset, SamplerConfig, HEADER_BYTES,
    RECORD_BYTES,
};
use mofkit_core::geom::{moments_from_plane, plane_with_volume, AnglePair};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn streamed_file_equals_in_memory_generation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SamplerConfig::default();
    let n = 150_000;
    let a = dir.path().join("a.mofd");
    let b = dir.path().join("b.mofd");
    generate_dataset(n, 9, &cfg, &a).unwrap();
    let (ds, _) = generate(n, 9, &cfg).unwrap();
    write_dataset(&ds, &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes.len() as u64, HEADER_BYTES + n as u64 * RECORD_BYTES);
    assert_eq!(&bytes[..4], b"MOFD");
    assert_eq!(read_dataset(&a).unwrap(), ds);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let cfg = SamplerConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate(200_000, 3, &cfg).unwrap().0)
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn truncated_and_corrupted_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mofd");
    let (ds, _) = generate(1000, 1, &SamplerConfig::default()).unwrap();
    write_dataset(&ds, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    assert!(read_dataset(&path).is_err());

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(read_dataset(&path).is_err());

    // Swap the stored guess of the first record for a wrong one; the
    // spot check samples index 0.
    let mut bad = bytes;
    let at = HEADER_BYTES as usize;
    bad[at..at + 8].copy_from_slice(&0.3f64.to_le_bytes());
    std::fs::write(&path, &bad).unwrap();
    assert!(read_dataset(&path).is_err());
}

#[test]
fn first_draw_is_reproducible() {
    let cfg = SamplerConfig::default();
    let a = sample_cut(&mut ChaCha8Rng::seed_from_u64(42), &cfg);
    let b = sample_cut(&mut ChaCha8Rng::seed_from_u64(42), &cfg);
    assert_eq!(a.0.phi.to_bits(), b.0.phi.to_bits());
    assert_eq!(a.0.theta.to_bits(), b.0.theta.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}

#[test]
fn strata_are_evenly_filled() {
    let cfg = SamplerConfig::default();
    let (ds, _) = generate(1_000_000, 1, &cfg).unwrap();
    let mut counts = vec![0u32; 16 * 16 * 16];
    let bin = |v: f64, lo: f64, hi: f64| (((v - lo) / (hi - lo) * 16.0) as usize).min(15);
    for s in &ds.samples {
        let t = s.true_angles();
        let i = bin(t.phi, 0.0, std::f64::consts::PI);
        let j = bin(t.theta, -std::f64::consts::PI, std::f64::consts::PI);
        let k = bin(s.vol_frac, cfg.c_min, cfg.c_max);
        counts[i + 16 * (j + 16 * k)] += 1;
    }
    let max = *counts.iter().max().unwrap() as f64;
    let min = *counts.iter().min().unwrap() as f64;
    assert!(max / min < 1.2, "{max} / {min}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sample_rebuilds_generating_centroid(
        phi in 0.0f64..std::f64::consts::PI,
        theta in -std::f64::consts::PI..std::f64::consts::PI,
        c in 1e-3f64..0.999,
    ) {
        let truth = AnglePair::new(phi, theta);
        let s = make_sample(truth, c).unwrap();
        let exact = moments_from_plane(&plane_with_volume(&truth.normal(), c).unwrap());
        let back = moments_from_plane(&plane_with_volume(&s.true_angles().normal(), c).unwrap());
        prop_assert!((exact.centroid - back.centroid).amax() <= 1e-10);
        prop_assert!(s.dtheta > -std::f64::consts::PI && s.dtheta <= std::f64::consts::PI);
    }
}

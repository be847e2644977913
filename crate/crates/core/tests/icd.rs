mod oracles;

use metasynth_core::metrics::{icd, icd_gradient, IcdParams, SimilarityPair};
use metasynth_core::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct RawPair {
    truth: Vec<f64>,
    generated: Vec<f64>,
}

#[derive(Deserialize)]
struct Case {
    pairs: Vec<RawPair>,
    icd: String,
}

fn pair(t: &[f64], g: &[f64]) -> SimilarityPair {
    SimilarityPair::new(EmbeddingVector::new(t.to_vec()).unwrap(), EmbeddingVector::new(g.to_vec()).unwrap())
}

// Values evaluated at 50 significant digits (fixtures/make_icd_fixture.py).
#[test]
fn pinned_cases() {
    let cases: Vec<Case> = serde_json::from_str(include_str!("fixtures/icd_cases.json")).unwrap();
    assert!(cases.len() >= 10);
    for (i, c) in cases.iter().enumerate() {
        let pairs: Vec<SimilarityPair> = c.pairs.iter().map(|p| pair(&p.truth, &p.generated)).collect();
        let want: f64 = c.icd.parse().unwrap();
        let got = icd(&pairs, &IcdParams::default()).unwrap();
        let tol = 1e-12 * want.abs().max(1.0);
        assert!((got - want).abs() <= tol, "case {i}: got {got:e}, want {want:e}");
    }
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_batch(rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = rng.random_range(4..=64);
    let n = rng.random_range(1..=4);
    (0..n)
        .map(|_| loop {
            // Keep similarities away from the clamp at zero, where ICD is not
            // differentiable.
            let t = random_vec(rng, dim);
            let mut g = random_vec(rng, dim);
            for (gi, ti) in g.iter_mut().zip(&t) {
                *gi += 0.8 * ti;
            }
            if oracles::cosine(&t, &g) > 0.05 {
                break (t, g);
            }
        })
        .collect()
}

#[test]
fn matches_reference_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let batch = random_batch(&mut rng);
        let pairs: Vec<SimilarityPair> = batch.iter().map(|(t, g)| pair(t, g)).collect();
        let got = icd(&pairs, &IcdParams::default()).unwrap();
        let want = oracles::icd_reference(&batch, 1e-8);
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = IcdParams::default();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let batch = random_batch(&mut rng);
        let pairs: Vec<SimilarityPair> = batch.iter().map(|(t, g)| pair(t, g)).collect();
        let grad = icd_gradient(&pairs, &params).unwrap();
        for (b, (t, g)) in batch.iter().enumerate() {
            let mut fd = vec![0.0; g.len()];
            for (d, slot) in fd.iter_mut().enumerate() {
                let at = |delta: f64| {
                    let mut shifted = batch.clone();
                    shifted[b].1[d] = g[d] + delta;
                    oracles::icd_reference(&shifted, 1e-8)
                };
                *slot = (at(h) - at(-h)) / (2.0 * h);
            }
            let diff: f64 = grad[b].iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(diff / scale);
            assert_eq!(t.len(), grad[b].len());
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn gradient_of_orthogonal_direction_shrinks_loss() {
    let t = [1.0, 0.0, 0.0, 0.0];
    let g = [0.6, 0.8, 0.0, 0.0];
    let pairs = [pair(&t, &g)];
    let grad = icd_gradient(&pairs, &IcdParams::default()).unwrap();
    let step: Vec<f64> = g.iter().zip(&grad[0]).map(|(x, d)| x - 1e-3 * d).collect();
    let before = icd(&pairs, &IcdParams::default()).unwrap();
    let after = icd(&[pair(&t, &step)], &IcdParams::default()).unwrap();
    assert!(after < before);
}

use bloch_homog::bloch::{default_t_ladder, extract_threshold_coeffs, FiberContext};
use bloch_homog::germ::GermContext;
use bloch_homog::{effective, gallery};

fn cross_validate(entry: &gallery::GalleryEntry, fiber_k: usize, thetas: &[Vec<f64>]) -> (f64, f64) {
    let m = &entry.model;
    let eff = effective::compute(m, entry.cutoff).unwrap();
    let germ = GermContext::new(m, &eff).unwrap();
    let ctx = FiberContext::new(m, fiber_k, None).unwrap();
    let p = m.threshold_params();
    let t0 = if m.has_f() { p.t0 } else { p.t_hat0 };
    let (mut eg, mut em) = (0.0f64, 0.0f64);
    for th in thetas {
        let (g, c) = germ.correctors(th).unwrap();
        let fit = extract_threshold_coeffs(&ctx, th, &default_t_ladder(t0)).unwrap();
        for l in 0..m.n() {
            if g.clusters.iter().any(|cl| cl.len() > 1 && cl.contains(&l)) {
                continue;
            }
            eg = eg.max((g.gamma[l] - fit[l].gamma).abs());
            em = em.max((c.mu[l] - fit[l].mu).abs());
        }
    }
    (eg, em)
}

#[test]
fn band_fit_matches_germ_example_8_7() {
    let e = gallery::example_8_7().unwrap();
    let (eg, em) = cross_validate(&e, 8, &[vec![0.6, 0.8], vec![1.0, 0.0], vec![-0.28, 0.96]]);
    assert!(eg < 1e-6 && em < 1e-5, "{eg} {em}");
}

#[test]
fn band_fit_matches_germ_example_15_1() {
    let e = gallery::example_15_1(0.2).unwrap();
    let (eg, em) = cross_validate(&e, 12, &[vec![0.6, 0.8], vec![0.0, 1.0]]);
    assert!(eg < 1e-6 && em < 1e-5, "{eg} {em}");
}

#[test]
fn band_fit_matches_germ_pauli_component() {
    let l = bloch_homog::lattice::Lattice::square(2);
    let phi = gallery::pauli_16_2_phi(&l, 1.0 / 16.0).unwrap();
    let mut e = gallery::pauli_example_16_2(1.0 / 16.0).unwrap();
    e.model = gallery::pauli_component(&l, &phi, 1.0).unwrap();
    let (eg, em) = cross_validate(&e, 12, &[vec![0.6, 0.8], vec![0.0, 1.0]]);
    assert!(eg < 1e-6 && em < 1e-5, "{eg} {em}");
}

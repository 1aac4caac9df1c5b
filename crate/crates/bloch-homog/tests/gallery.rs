use bloch_homog::gallery;

#[test]
fn every_reference_is_reproduced() {
    for name in gallery::names() {
        let Ok(entry) = gallery::by_name(name, &[]) else {
            continue;
        };
        for c in gallery::verify(&entry).unwrap() {
            assert!(c.passed, "{name}: {} expected {:?} got {:?}", c.name, c.expected, c.computed);
        }
    }
}

#[test]
fn spin_blocks_match_dedicated_formulas() {
    use bloch_homog::{effective, germ::GermContext, lattice::Lattice};
    let l = Lattice::square(2);
    let phi = gallery::pauli_16_2_phi(&l, 1.0 / 16.0).unwrap();
    let cf = gallery::pauli_closed_forms(&l, &phi).unwrap();
    let entry = gallery::pauli_example_16_2(1.0 / 16.0).unwrap();
    let eff = effective::compute(&entry.model, 24).unwrap();
    let ctx = GermContext::new(&entry.model, &eff).unwrap();
    for th in [[0.6, 0.8], [1.0, 0.0], [0.0, 1.0], [-0.28, 0.96]] {
        let n = ctx.n_hat(&th);
        // the first spin component carries the P- block
        assert!((n[(0, 0)].re - cf.n_q_minus(&th)).abs() < 1e-12);
        assert!((n[(1, 1)].re - cf.n_q_plus(&th)).abs() < 1e-12);
        assert!(n[(0, 1)].norm() < 1e-12);
        for sign in [1.0, -1.0] {
            let m = gallery::pauli_component(&l, &phi, sign).unwrap();
            let e = effective::compute(&m, 24).unwrap();
            let c = GermContext::new(&m, &e).unwrap();
            let (g, corr) = c.correctors(&th).unwrap();
            let (want_n, want_mu) = if sign > 0.0 {
                (cf.n_q_plus(&th), cf.mu_plus(&th))
            } else {
                (cf.n_q_minus(&th), cf.mu_minus(&th))
            };
            assert!((corr.n_hat[(0, 0)].re - want_n).abs() < 1e-12);
            assert!((corr.mu[0] - want_mu).abs() < 1e-12);
            assert!((g.gamma[0] - cf.gamma).abs() < 1e-12);
        }
        assert!((cf.mu_plus(&th) - cf.mu_minus(&th)).abs() < 1e-12);
    }
}

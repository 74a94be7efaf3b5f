mod common;

use common::*;
use hybridlink::dynamics::{DonorParams, IonParams};
use hybridlink::photonics::{donor_photon, ion_photon, overlap};
use hybridlink::pulse::PulseShape;
use proptest::prelude::*;

fn ion_with(pulse: PulseShape<f64>) -> IonParams<f64> {
    IonParams { pulse, ..fig4_ion() }
}

#[test]
fn fig4_overlap_at_printed_parameters() {
    let d = fig4_donor();
    let i = fig4_ion();
    let o = overlap(&ion_photon(&i, &i.default_grid()).unwrap(), &donor_photon(&d, &d.default_grid()).unwrap());
    assert!(o.re >= 0.95, "{o}");
    assert!(o.norm() <= 1.0);
}

#[test]
fn donor_phase_rotates_overlap() {
    let d = fig4_donor();
    let i = fig4_ion();
    let ion = ion_photon(&i, &i.default_grid()).unwrap();
    let base = overlap(&ion, &donor_photon(&d, &d.default_grid()).unwrap());
    for delta in [0.3, -1.9, 2.8] {
        let shifted = DonorParams { pulse: PulseShape { theta0: d.pulse.theta0 + delta, ..d.pulse }, ..d };
        let o = overlap(&ion, &donor_photon(&shifted, &shifted.default_grid()).unwrap());
        let turn = (o / base).arg();
        assert!((turn + delta).abs() < 1e-8, "{delta}: {turn}");
        assert!((o.norm() - base.norm()).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hermitian_symmetry_and_bound(ds in -4.0..4.0f64, dt in -6.0..6.0f64, th in -0.05..0.05f64) {
        let a = ion_photon(&fig4_ion(), &fig4_ion().default_grid()).unwrap();
        let p = fig4_ion().pulse;
        let other = ion_with(PulseShape { sigma1: p.sigma1 + ds, tau: p.tau + dt, theta1: th, ..p });
        let b = ion_photon(&other, &other.default_grid()).unwrap();
        let ab = overlap(&a, &b);
        let ba = overlap(&b, &a);
        prop_assert!((ab - ba.conj()).norm() < 1e-12);
        // Cauchy–Schwarz for normalized photons
        prop_assert!(ab.norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn ion_phase_rotates_overlap(delta in -3.0..3.0f64) {
        let i = fig4_ion();
        let fixed = ion_photon(&ion_with(PulseShape { tau: 30.0, ..i.pulse }), &i.default_grid()).unwrap();
        let a = ion_photon(&i, &i.default_grid()).unwrap();
        let shifted = ion_with(PulseShape { theta0: i.pulse.theta0 + delta, ..i.pulse });
        let b = ion_photon(&shifted, &shifted.default_grid()).unwrap();
        let o0 = overlap(&a, &fixed);
        let o1 = overlap(&b, &fixed);
        // the free photon is the bra: O turns by +δ
        let turn = (o1 / o0).arg();
        let wrapped = (turn - delta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        prop_assert!(wrapped.abs() < 1e-8, "{} vs {}", turn, delta);
        prop_assert!((o1.norm() - o0.norm()).abs() < 1e-8);
    }

    #[test]
    fn joint_time_shift_keeps_modulus(shift in 0.5..20.0f64) {
        let i = fig4_ion();
        let other = ion_with(PulseShape { sigma2: 9.0, tau: 31.0, theta1: 0.01, ..i.pulse });
        let o0 = overlap(
            &ion_photon(&i, &i.default_grid()).unwrap(),
            &ion_photon(&other, &other.default_grid()).unwrap(),
        );
        let i2 = ion_with(i.pulse.shifted(shift));
        let other2 = ion_with(other.pulse.shifted(shift));
        let o1 = overlap(
            &ion_photon(&i2, &i2.default_grid()).unwrap(),
            &ion_photon(&other2, &other2.default_grid()).unwrap(),
        );
        prop_assert!((o1.norm() - o0.norm()).abs() < 1e-6, "{} vs {}", o1.norm(), o0.norm());
    }

    #[test]
    fn photons_are_normalized(ds in -3.0..3.0f64, dh in 0.0..4.0f64) {
        let p = fig4_ion().pulse;
        let ion = ion_with(PulseShape { sigma2: p.sigma2 + ds, t_hold: dh, ..p });
        let photon = ion_photon(&ion, &ion.default_grid()).unwrap();
        prop_assert!((photon.norm_sqr() - 1.0).abs() < 1e-6);
        prop_assert!(photon.p_emit > 0.0 && photon.p_emit <= 1.0);
    }
}

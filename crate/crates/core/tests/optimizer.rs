mod common;

use std::f64::consts::PI;

use common::*;
use hybridlink::dynamics::{IonParams, TimeGrid};
use hybridlink::optimizer::{optimize_against, optimize_pulse, Emitter, OptimizationSpec, Orientation, PulseBounds, Side};
use hybridlink::photonics::overlap;
use hybridlink::pulse::PulseShape;

fn weak_ion() -> IonParams<f64> {
    let i = fig4_ion();
    IonParams { pulse: PulseShape { omega_max: 0.03, ..i.pulse }, ..i }
}

#[test]
fn phase_offset_is_undone_analytically() {
    let settings = TimeGrid::new(0.0, 1.0);
    let fixed_sys = weak_ion();
    let fixed = fixed_sys.photon(&fixed_sys.pulse, &settings).unwrap();
    let offset = IonParams { pulse: PulseShape { theta0: fixed_sys.pulse.theta0 + PI, ..fixed_sys.pulse }, ..fixed_sys };
    let spec = OptimizationSpec {
        free_side: Side::Ion,
        fixed_pulse: fixed_sys.pulse,
        bounds: PulseBounds { theta0: [-2.0 * PI, 2.0 * PI], ..PulseBounds::around(&fixed_sys.pulse) },
        target_p1: fixed.p_emit,
        p1_tolerance: 1e-9,
        max_evaluations: 2,
        seed: 0,
        restarts: 0,
        max_sweeps: 1,
    };
    let r = optimize_against(&spec, &offset, &fixed, Orientation::FreeBra, &settings).unwrap();
    // the very first evaluation already carries the corrected phase
    assert!((r.start.re_overlap - 1.0).abs() < 1e-9);
    let again = overlap(&offset.photon(&r.pulse, &settings).unwrap(), &fixed);
    assert!(again.arg().abs() < 1e-6, "{}", again.arg());
    assert!((again.re - 1.0).abs() < 1e-8);
}

#[test]
fn ion_side_can_be_free() {
    let donor = fig4_donor();
    let ion = fig4_ion();
    let spec = OptimizationSpec {
        free_side: Side::Ion,
        fixed_pulse: donor.pulse,
        bounds: PulseBounds::around(&ion.pulse),
        target_p1: 0.05,
        p1_tolerance: 1e-4,
        max_evaluations: 25,
        seed: 9,
        restarts: 0,
        max_sweeps: 1,
    };
    let r = optimize_pulse(&spec, &donor, &ion, &TimeGrid::new(0.0, 1.0)).unwrap();
    assert!(spec.bounds.contains(&r.pulse));
    assert!((r.p1 - 0.05).abs() <= 1e-4);
    assert!(r.re_overlap >= r.start.re_overlap - 1e-9);
    assert!(r.arg_overlap.abs() < 1e-6);
}

#[test]
fn silent_fixed_side_is_rejected() {
    let donor = fig4_donor();
    let ion = fig4_ion();
    let spec = OptimizationSpec {
        free_side: Side::Donor,
        fixed_pulse: PulseShape { omega_max: 0.0, ..ion.pulse },
        bounds: PulseBounds::around(&donor.pulse),
        target_p1: 0.05,
        p1_tolerance: 1e-4,
        max_evaluations: 5,
        seed: 0,
        restarts: 0,
        max_sweeps: 1,
    };
    assert!(optimize_pulse(&spec, &donor, &ion, &TimeGrid::new(0.0, 1.0)).is_err());
}

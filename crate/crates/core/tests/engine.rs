use proptest::prelude::*;
use xhammer::circuit::CrossbarInstance;
use xhammer::device::{DeviceParams, DeviceState};
use xhammer::engine::{run_attack, run_pulse_train, PulseProgram};
use xhammer::thermal::AlphaKernel;
use xhammer::{Cell, CellGrid};

const AMBIENT: f64 = 300.0;

fn kernel(nn: f64, diag: f64) -> AlphaKernel {
    let mut entries = vec![((0, 0), 1.0)];
    for o in [(0, 1), (0, -1), (1, 0), (-1, 0)] {
        entries.push((o, nn));
    }
    for o in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        entries.push((o, diag));
    }
    AlphaKernel::from_offsets(AMBIENT, 1e7, entries)
}

fn xbar(k: AlphaKernel, wire: f64) -> CrossbarInstance {
    let params = DeviceParams {
        k0: 2e13,
        ..DeviceParams::default()
    };
    let mut states = CellGrid::filled(3, 3, DeviceState::hrs(&params, AMBIENT));
    states[(1, 1)] = DeviceState::lrs(&params, AMBIENT);
    CrossbarInstance::new(states, params, k, wire, AMBIENT).unwrap()
}

fn program(v: f64, len_ns: f64) -> PulseProgram {
    PulseProgram::single(Cell::new(1, 1), Cell::new(1, 2), v, len_ns * 1e-9, 20_000)
}

#[test]
fn pulse_length_product_is_invariant() {
    let x = xbar(kernel(0.03, 0.01), 0.0);
    let products: Vec<f64> = [15.0, 25.0, 40.0, 80.0]
        .iter()
        .map(|&l| {
            run_attack(&x, &program(1.05, l))
                .unwrap()
                .pulses_to_flip
                .unwrap() as f64
                * l
        })
        .collect();
    let mean = products.iter().sum::<f64>() / 4.0;
    for p in products {
        assert!((p / mean - 1.0).abs() < 0.01, "{p} vs {mean}");
    }
}

#[test]
fn duty_cycle_does_not_change_pulse_count() {
    let x = xbar(kernel(0.03, 0.01), 0.0);
    let mut p = program(1.05, 20.0);
    let counts: Vec<Option<u64>> = [1.0, 0.5, 0.1]
        .iter()
        .map(|&d| {
            p.duty_cycle = d;
            run_attack(&x, &p).unwrap().pulses_to_flip
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
}

#[test]
fn aggressor_stays_saturated_and_victim_is_heated() {
    let x = xbar(kernel(0.03, 0.01), 0.0);
    let mut p = program(1.05, 20.0);
    p.max_pulses = 30;
    let r = run_pulse_train(&x, &p, true).unwrap();
    assert_eq!(r.pulses_applied, 30);
    assert_eq!(r.final_states[(1, 1)].x, 1.0);
    for s in r.trace.unwrap() {
        assert!(s.victim_t > AMBIENT);
    }
}

#[test]
fn small_wire_resistance_matches_ideal_drivers() {
    let ideal = run_attack(&xbar(kernel(0.03, 0.01), 0.0), &program(1.05, 20.0)).unwrap();
    let wired = run_attack(&xbar(kernel(0.03, 0.01), 1e-3), &program(1.05, 20.0)).unwrap();
    let (a, b) = (ideal.pulses_to_flip.unwrap(), wired.pulses_to_flip.unwrap());
    assert!(a.abs_diff(b) <= 1, "{a} vs {b}");
    let slow = run_attack(&xbar(kernel(0.03, 0.01), 50.0), &program(1.05, 20.0)).unwrap();
    assert!(slow.pulses_to_flip.unwrap() > a);
}

#[test]
fn simultaneous_aggressors_flip_faster_than_one() {
    let x = {
        let params = DeviceParams {
            k0: 2e13,
            ..DeviceParams::default()
        };
        let mut states = CellGrid::filled(3, 3, DeviceState::hrs(&params, AMBIENT));
        states[(1, 0)] = DeviceState::lrs(&params, AMBIENT);
        states[(1, 2)] = DeviceState::lrs(&params, AMBIENT);
        CrossbarInstance::new(states, params, kernel(0.03, 0.01), 0.0, AMBIENT).unwrap()
    };
    let single = PulseProgram::single(Cell::new(1, 0), Cell::new(1, 1), 1.05, 20e-9, 20_000);
    let both = PulseProgram {
        aggressors: vec![Cell::new(1, 0), Cell::new(1, 2)],
        ..single.clone()
    };
    let a = run_attack(&x, &single).unwrap().pulses_to_flip.unwrap();
    let b = run_attack(&x, &both).unwrap().pulses_to_flip.unwrap();
    assert!(b < a, "{b} !< {a}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn more_coupling_never_needs_more_pulses(nn in 0.0f64..0.08, extra in 0.0f64..0.05, diag in 0.0f64..0.03) {
        let weak = run_attack(&xbar(kernel(nn, diag), 0.0), &program(1.05, 20.0)).unwrap();
        let strong = run_attack(&xbar(kernel(nn + extra, diag), 0.0), &program(1.05, 20.0)).unwrap();
        prop_assert!(strong.pulses_to_flip.unwrap() <= weak.pulses_to_flip.unwrap());
    }

    #[test]
    fn higher_amplitude_never_needs_more_pulses(v in 0.9f64..1.2, dv in 0.0f64..0.2) {
        let x = xbar(kernel(0.03, 0.01), 0.0);
        let lo = run_attack(&x, &program(v, 20.0)).unwrap();
        let hi = run_attack(&x, &program(v + dv, 20.0)).unwrap();
        prop_assert!(hi.pulses_to_flip.unwrap() <= lo.pulses_to_flip.unwrap());
    }

    #[test]
    fn victim_state_never_decreases(nn in 0.0f64..0.08, len in 5.0f64..60.0) {
        let mut p = program(1.05, len);
        p.max_pulses = 150;
        let r = run_pulse_train(&xbar(kernel(nn, 0.0), 0.0), &p, true).unwrap();
        let xs: Vec<f64> = r.trace.unwrap().iter().map(|s| s.victim_x).collect();
        prop_assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(xs.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn reruns_are_bit_identical(nn in 0.0f64..0.08, len in 5.0f64..60.0) {
        let x = xbar(kernel(nn, 0.01), 0.0);
        let mut p = program(1.05, len);
        p.max_pulses = 80;
        let a = run_pulse_train(&x, &p, true).unwrap();
        let b = run_pulse_train(&x, &p, true).unwrap();
        prop_assert_eq!(a, b);
    }
}

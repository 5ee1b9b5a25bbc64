use rnls::diagnostics::Condition;
use rnls::experiments::*;
use rnls::integrator::{EvolutionState, Integrator, Status};
use rnls::operators::NonlinearityModel;
use rnls::{GridSpec, OperatorSet, PhysicsParams, WaveField};

use num_complex::Complex64;

#[test]
fn supercritical_mass_blowup_time_is_rotation_independent() {
    let g = GridSpec::cubic(2, 6.0, 256).unwrap();
    let times: Vec<f64> = [0.0, 0.8]
        .iter()
        .map(|&om| {
            let cfg = SweepConfig::new(
                g,
                PhysicsParams::power(2, 3.0, 1.0, 1.0, om),
                Family::ScaledQ,
                vec![1.1],
            );
            let row = threshold_sweep(&cfg).unwrap().rows.remove(0);
            assert_eq!(row.outcome, Outcome::Blowup);
            row.t_detect.unwrap()
        })
        .collect();
    assert!((times[0] - times[1]).abs() <= 0.05 * times[0], "{times:?}");
}

#[test]
fn above_threshold_stability_run_blows_up() {
    let g = GridSpec::cubic(2, 6.0, 256).unwrap();
    let p = PhysicsParams::power(2, 3.0, 1.0, 1.0, 0.5);
    let mut cfg = StabilityConfig::new(g, p, 1.05, 1e-2);
    cfg.directions = vec![Direction::Dipole];
    let res = stability_run(&cfg).unwrap();
    assert!(!res.minimizer);
    assert_eq!(res.runs[0].status, Status::BlowupDetected);
    assert_eq!(res.verdict, StabilityVerdict::Blowup);
}

#[test]
fn inhomogeneous_gap_and_subthreshold_global() {
    let g = GridSpec::cubic(2, 6.0, 128).unwrap();
    let p =
        PhysicsParams::power(2, 3.0, 1.0, 1.0, 0.5).with_model(NonlinearityModel::Inhomogeneous {
            lambda0: 1.0,
            m: 2.0,
        });
    let mut cfg = SweepConfig::new(g, p, Family::ScaledQ, vec![0.6]);
    cfg.periods = 1.0;
    let res = inhomogeneous_threshold(&cfg).unwrap();
    let (qmax, qmin) = res.gap.unwrap();
    assert!(qmax < qmin);
    // Masses scale like lambda^{-1} in two dimensions.
    assert!((qmax * qmax * 2.0 - qmin * qmin).abs() < 1e-6 * qmin * qmin);
    assert_eq!(res.rows[0].outcome, Outcome::Global);
    assert_eq!(res.rows[0].verdict.condition, Condition::None);
}

#[test]
fn slow_rotation_vortex_energies_increase() {
    let cfg = VortexConfig {
        grid: GridSpec::cubic(2, 10.0, 64).unwrap(),
        gamma: 1.0,
        omega: 0.5,
        k: 1.0,
        a: 4.0,
        m_list: (0..=6).collect(),
    };
    let r = vortex_counterexample(&cfg).unwrap();
    assert!(r.rows.windows(2).all(|w| w[1].energy > w[0].energy));
    assert!(!r.strictly_decreasing);
}

#[test]
fn off_centre_angular_drift_is_second_order() {
    let g = GridSpec::cubic(2, 8.0, 128).unwrap();
    let p = PhysicsParams::power(2, 3.0, 1.0, 1.0, 0.5);
    let drift = |dt: f64| {
        let u0 = WaveField::from_fn(g, |x| {
            let r2 = (x[0] - 0.5).powi(2) + 1.3 * x[1] * x[1];
            Complex64::new(1.2 * (-r2 / 2.0).exp(), 0.0)
        });
        let mut st = EvolutionState::new(u0, p.clone(), dt);
        let mut it = Integrator::new(OperatorSet::new(g, p.clone()).unwrap());
        let s = it.evolve(&mut st, trap_period(1.0)).unwrap();
        s.iter()
            .map(|r| (r.angular - s[0].angular).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (drift(1e-3), drift(5e-4));
    assert!((3.0..5.0).contains(&(coarse / fine)), "{coarse:e} {fine:e}");
}

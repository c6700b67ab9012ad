mod common;

use std::f64::consts::PI;

use common::{instances, rel};
use swipt_core::model::{compute_harvested_power, compute_sinr, ChannelRealization, DemandProfile};
use swipt_core::powermin::{
    build_swipt_sdr, is_feasible, solve_powermin, IrMethod, PowerMinOptions, PowerMinStatus,
    SubsetSelection,
};
use swipt_core::sdp::{self, SdpStatus};
use swipt_core::Complex64;

fn energy(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.re * z.re + z.im * z.im).sum()
}

#[test]
fn relaxation_reproduces_single_user_closed_forms() {
    let opts = PowerMinOptions::default();
    for s in instances(4, 1, 1, 11, 20) {
        let (ch, dm) = (&s.channels, &s.demands);
        let expected = [
            dm.gamma[0] * ch.noise_var(0) / energy(ch.h(0)),
            dm.q[0] / energy(ch.g(0)),
        ];
        for (subset, want) in [
            SubsetSelection::new(&[0], &[]),
            SubsetSelection::new(&[], &[0]),
        ]
        .iter()
        .zip(expected)
        {
            let problem = build_swipt_sdr(ch, dm, subset).unwrap();
            let sol = sdp::solve(&problem, &opts.sdp).unwrap();
            assert_eq!(sol.status, SdpStatus::Optimal);
            assert!(
                rel(sol.objective, want) < 1e-6,
                "{} vs {want}",
                sol.objective
            );
            let p = solve_powermin(ch, dm, subset, &opts)
                .unwrap()
                .p_min
                .unwrap();
            assert!(rel(p, want) < 1e-12);
        }
    }
}

#[test]
fn duality_and_relaxation_agree_on_information_only_sets() {
    let udd = PowerMinOptions::default();
    let sdr = PowerMinOptions {
        ir_method: IrMethod::Sdr,
        ..udd
    };
    let all = SubsetSelection::new(&[0, 1, 2], &[]);
    let mut solved = 0;
    for s in instances(4, 3, 0, 12, 25) {
        let a = solve_powermin(&s.channels, &s.demands, &all, &udd).unwrap();
        let b = solve_powermin(&s.channels, &s.demands, &all, &sdr).unwrap();
        assert_eq!(a.status, b.status, "{:?} vs {:?}", a.p_min, b.p_min);
        if let (Some(pa), Some(pb)) = (a.p_min, b.p_min) {
            assert!(rel(pa, pb) < 1e-3, "{pa} vs {pb}");
            solved += 1;
        }
    }
    assert!(solved > 5);
}

#[test]
fn returned_beams_meet_every_demand() {
    let opts = PowerMinOptions::default();
    for s in instances(4, 2, 2, 13, 15) {
        let (ch, dm) = (&s.channels, &s.demands);
        let subset = SubsetSelection::new(&[0, 1], &[0, 1]);
        let r = solve_powermin(ch, dm, &subset, &opts).unwrap();
        let Some(sol) = r.solution else {
            assert_eq!(r.status, PowerMinStatus::Infeasible);
            continue;
        };
        for i in 0..2 {
            assert!(compute_sinr(&sol, ch, i).unwrap() >= dm.gamma[i] * (1.0 - 1e-6));
        }
        for j in 0..2 {
            assert!(compute_harvested_power(&sol, ch, j).unwrap() >= dm.q[j] * (1.0 - 1e-6));
        }
        assert!(rel(sol.total_power(), r.p_min.unwrap()) < 1e-12);
    }
}

/// Best power over a `n x n` grid of unit directions
/// `(cos a, sin a e^{i phi})`, each scaled just enough for every ER.
fn grid_energy_beam(ch: &ChannelRealization, dm: &DemandProfile, n: usize) -> f64 {
    let mut best = f64::INFINITY;
    for ia in 0..n {
        let a = 0.5 * PI * ia as f64 / (n - 1) as f64;
        for ip in 0..n {
            let phi = 2.0 * PI * ip as f64 / n as f64;
            let u = [
                Complex64::new(a.cos(), 0.0),
                Complex64::from_polar(a.sin(), phi),
            ];
            let mut p: f64 = 0.0;
            for (j, q) in dm.q.iter().enumerate() {
                let g = ch.g(j);
                let inner = g[0].conj() * u[0] + g[1].conj() * u[1];
                p = p.max(q / inner.norm_sqr());
            }
            best = best.min(p);
        }
    }
    best
}

#[test]
fn two_antenna_energy_beam_matches_a_grid_search() {
    let opts = PowerMinOptions::default();
    let subset = SubsetSelection::new(&[], &[0, 1]);
    for s in instances(2, 0, 2, 14, 10) {
        let p = solve_powermin(&s.channels, &s.demands, &subset, &opts)
            .unwrap()
            .p_min
            .unwrap();
        let grid = grid_energy_beam(&s.channels, &s.demands, 100);
        // the grid only ever overestimates the optimum
        assert!(p <= grid * (1.0 + 1e-9), "{p} vs {grid}");
        assert!(rel(p, grid) < 5e-3, "{p} vs {grid}");
    }
}

#[test]
fn feasible_sets_are_closed_under_subsets() {
    let opts = PowerMinOptions::default();
    for s in instances(4, 3, 2, 15, 4) {
        let k = 5;
        let solved: Vec<(bool, Option<f64>)> = (0..1u64 << k)
            .map(|mask| {
                let subset = SubsetSelection::from_mask(mask, 3);
                let p = solve_powermin(&s.channels, &s.demands, &subset, &opts)
                    .unwrap()
                    .p_min;
                let ok = is_feasible(&s.channels, &s.demands, &subset, 3.0, &opts)
                    .unwrap()
                    .0;
                (ok, p)
            })
            .collect();
        for mask in 0..1u64 << k {
            let (ok, p) = solved[mask as usize];
            let mut sub = mask;
            while sub != 0 {
                sub = (sub - 1) & mask;
                let (sub_ok, sub_p) = solved[sub as usize];
                assert!(!ok || sub_ok, "{sub:b} infeasible inside feasible {mask:b}");
                if let Some(pm) = p {
                    let ps = sub_p.expect("subset of a solvable set");
                    assert!(
                        ps <= pm * (1.0 + 1e-4),
                        "{sub:b} needs {ps}, {mask:b} needs {pm}"
                    );
                }
            }
        }
    }
}

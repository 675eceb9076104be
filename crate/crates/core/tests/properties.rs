use crspec_core::channel_rng::{cscg_matrix, Role};
use crspec_core::harness::emit::{read_csv, write_csv};
use crspec_core::harness::ResultRow;
use crspec_core::matkernel::{self, hermitian_part, CMatrix};
use crspec_core::mimo;
use crspec_core::model::{ChannelSet, Covariance};
use crspec_core::multichannel::{gen_ofdm_channels, multitone_optimal, tone_subproblem, ToneSet};
use crspec_core::theory::{capacity_loss_actual, capacity_loss_bound, PrimaryLink};
use crspec_core::waterfill::standard_wf;
use proptest::prelude::*;

fn channels(mts: usize, mrs: usize, k: usize, pt: f64, gamma: f64, seed: u64) -> ChannelSet {
    let h = cscg_matrix(mrs, mts, 1.0, seed, 0, Role::H);
    let g = (0..k).map(|i| cscg_matrix(1, mts, 0.1, seed, 0, Role::G(i))).collect();
    ChannelSet::new(h, g, pt, vec![gamma; k]).unwrap()
}

fn random_psd(n: usize, seed: u64, slot: usize) -> CMatrix {
    let a = cscg_matrix(n, n, 1.0, seed, 1, Role::Primary(slot));
    hermitian_part(&(&a * a.adjoint()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn capacity_grows_with_power(seed in any::<u64>(), pt in 0.1f64..100.0, gamma in 0.01f64..1.0) {
        let cs = channels(3, 2, 1, pt, gamma, seed);
        let a = mimo::optimal_covariance(&cs).unwrap().rate;
        let b = mimo::optimal_covariance(&cs.with_power_budget(2.0 * pt)).unwrap().rate;
        prop_assert!(b >= a - 1e-7 * a.max(1.0));
    }

    #[test]
    fn rate_is_independent_of_evaluation_order(seed in any::<u64>(), n in 1usize..5, m in 1usize..5) {
        let h = cscg_matrix(m, n, 1.0, seed, 0, Role::H);
        let s = random_psd(n, seed, 0);
        let direct = matkernel::log2_det_i_plus(&h, &s);
        // det(I + H S H^H) = det(I + S^{1/2} H^H H S^{1/2})
        let (v, d) = matkernel::herm_eig(&s).unwrap();
        let root: Vec<f64> = d.iter().map(|x| x.max(0.0).sqrt()).collect();
        let r = &v * matkernel::real_diag(&root) * v.adjoint();
        let inner = hermitian_part(&(&r * h.adjoint() * &h * &r));
        let other = matkernel::ln_det_hpd(&(matkernel::identity(n) + inner)) / std::f64::consts::LN_2;
        prop_assert!((direct - other).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn null_projector_is_an_orthogonal_projector(seed in any::<u64>(), k in 0usize..4) {
        let m = cscg_matrix(k.max(1), 4, 1.0, seed, 0, Role::G(0));
        let u = matkernel::svd(&m).unwrap().u.columns(0, k).into_owned();
        let p = matkernel::null_projector(&u).unwrap();
        prop_assert!(matkernel::max_abs(&(&p * &p - &p)) < 1e-12);
        prop_assert!(matkernel::max_abs(&(p.adjoint() - &p)) < 1e-14);
        prop_assert!(matkernel::max_abs(&(u.adjoint() * &p)) < 1e-12);
        prop_assert!((matkernel::trace_re(&p) - (4 - k) as f64).abs() < 1e-12);
    }

    #[test]
    fn method_ordering(seed in any::<u64>(), pt in 0.5f64..100.0, gamma in 0.01f64..1.0, k in 1usize..3) {
        let cs = channels(4, 3, k, pt, gamma, seed);
        let free = mimo::unconstrained_capacity(&cs).unwrap().rate;
        let opt = mimo::optimal_covariance(&cs).unwrap();
        prop_assert!(free >= opt.rate - 1e-6);
        prop_assert!(opt.violation(&cs) <= 1e-9);
        let structured = [
            mimo::dsvd(&cs).unwrap(),
            mimo::psvd(&cs).unwrap(),
            mimo::best_hybrid(&cs).unwrap().1,
            mimo::white_spectrum(&cs).unwrap(),
        ];
        for r in &structured {
            prop_assert!(opt.rate >= r.rate - 1e-6, "{} {} > {}", r.method, r.rate, opt.rate);
            prop_assert!(r.violation(&cs) <= 1e-9, "{} violates caps", r.method);
        }
    }

    #[test]
    fn tone_power_falls_as_price_rises(seed in any::<u64>(), gamma in 0.0f64..1.0) {
        let h = cscg_matrix(2, 2, 1.0, seed, 0, Role::H);
        let g = cscg_matrix(1, 2, 0.1, seed, 0, Role::G(0));
        let mut prev = f64::INFINITY;
        for nu in [0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let p = tone_subproblem(&h, &g, nu, gamma).unwrap().trace();
            prop_assert!(p <= prev * (1.0 + 1e-9) + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn tone_order_does_not_matter(seed in any::<u64>(), shift in 1usize..8, pt in 1.0f64..50.0) {
        let tones = gen_ofdm_channels(2, 2, 3, 8, 1.0, 0.1, seed, 0).unwrap();
        let mut rotated = tones.clone();
        rotated.rotate_left(shift);
        let a = multitone_optimal(&ToneSet::new(tones, pt, 0.1).unwrap()).unwrap();
        let b = multitone_optimal(&ToneSet::new(rotated, pt, 0.1).unwrap()).unwrap();
        prop_assert!((a.rate() - b.rate()).abs() <= 1e-9 * a.rate());
    }

    #[test]
    fn water_filling_spends_the_budget(gains in prop::collection::vec(0.01f64..10.0, 1..8), p in 0.0f64..50.0) {
        let a = standard_wf(&gains, p).unwrap();
        prop_assert!((a.power() - p).abs() <= 1e-9 * p.max(1.0));
        // Active channels share one water level.
        let level: Vec<f64> = a.sigma.iter().zip(&gains).filter(|(s, _)| **s > 0.0).map(|(s, g)| s + 1.0 / g).collect();
        for w in level.windows(2) {
            prop_assert!((w[0] - w[1]).abs() <= 1e-9 * w[0]);
        }
    }

    #[test]
    fn primary_loss_never_exceeds_bound(seed in any::<u64>(), fill in 0.0f64..1.0, gamma in 0.001f64..10.0, phi in 0.1f64..5.0) {
        let h_k = cscg_matrix(2, 3, 1.0, seed, 2, Role::Primary(0));
        let g_k = cscg_matrix(2, 3, 0.1, seed, 2, Role::Primary(1));
        let s = random_psd(3, seed, 2);
        let q = matkernel::trace_re(&(&g_k * &s * g_k.adjoint()));
        let s = Covariance::new(s.scale(fill * gamma / q)).unwrap();
        let link = PrimaryLink::new(h_k, Covariance::new(random_psd(3, seed, 3)).unwrap(), phi, g_k, s).unwrap();
        prop_assert!(capacity_loss_actual(&link).unwrap() <= capacity_loss_bound(2, 3, gamma, phi) + 1e-12);
    }

    #[test]
    fn csv_round_trip_is_stable(
        rows in prop::collection::vec((0.01f64..1e4, 0.0f64..50.0, 0.0f64..1.0, 1usize..5000, any::<u64>()), 0..6)
    ) {
        let rows: Vec<ResultRow> = rows
            .into_iter()
            .map(|(pt, rate, sem, trials, seed)| ResultRow {
                scenario: "custom".into(),
                method: "d-svd".into(),
                pt,
                snr_db: 10.0 * pt.log10(),
                rate_mean: rate,
                rate_sem: sem,
                trials,
                seed,
            })
            .collect();
        let mut first = Vec::new();
        write_csv(&rows, &mut first).unwrap();
        let back = read_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_csv(&back, &mut second).unwrap();
        prop_assert_eq!(first, second);
        for (a, b) in rows.iter().zip(&back) {
            prop_assert!((a.pt - b.pt).abs() <= 1e-8 * a.pt);
            prop_assert!((a.rate_mean - b.rate_mean).abs() <= 1e-8 * a.rate_mean.max(1e-5));
            prop_assert_eq!(a.seed, b.seed);
        }
    }
}

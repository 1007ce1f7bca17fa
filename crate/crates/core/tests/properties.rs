use mcfdm::bench::{run_convergence, run_price, JobSpec, MethodSelection};
use mcfdm::model::{build_grid, MarketParams, Method, OptionContract, OptionKind, SMaxPolicy};
use mcfdm::monte_carlo::{price_monte_carlo, price_monte_carlo_with_payoff, McConfig};
use mcfdm::oracle::black_scholes_price;
use mcfdm::scheme::{solve_mcfdm, SolveOptions, ThetaConfig};

fn market() -> MarketParams {
    MarketParams::new(0.05, 0.25).unwrap()
}

#[test]
fn mc_standard_error_halves_with_four_times_paths() {
    let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let se = |n| {
            price_monte_carlo(&c, &market(), &McConfig { n_paths: n, seed, ..Default::default() })
                .unwrap()
                .diagnostics
                .std_error
                .unwrap()
        };
        ratios.push(se(20_000) / se(80_000));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2.0).abs() <= 0.4, "{ratios:?}");
}

#[test]
fn mc_discounted_terminal_price_is_martingale() {
    for seed in [1, 2, 3] {
        for steps in [1, 8] {
            let cfg = McConfig { seed, n_time_steps: steps, n_paths: 50_000, ..Default::default() };
            let (mean, se) = price_monte_carlo_with_payoff(&market(), 7.0, 1.0, &cfg, |s| s).unwrap();
            assert!((mean - 7.0).abs() <= 3.0 * se.unwrap(), "seed {seed} steps {steps}: {mean}");
        }
    }
}

#[test]
fn mcfdm_error_shrinks_under_refinement() {
    let c = OptionContract::call(7.0, 7.5, 1.0).unwrap();
    let err = |n, m| {
        let g = build_grid(&c, n, m, SMaxPolicy::Auto).unwrap();
        solve_mcfdm(&c, &market(), &g, &ThetaConfig::default(), SolveOptions::default())
            .unwrap()
            .result
            .abs_error
            .unwrap()
    };
    let coarse = err(50, 500);
    let mid = err(100, 2000);
    let fine = err(200, 8000);
    assert!(coarse > mid && mid > fine, "{coarse} {mid} {fine}");
    assert!(fine < 1e-4);
}

#[test]
fn mcfdm_put_call_parity() {
    for (spot, strike) in [(5.0, 5.5), (7.0, 7.5), (10.0, 8.0)] {
        for t in [0.25, 0.5, 1.0] {
            let call = OptionContract::call(spot, strike, t).unwrap();
            let put = call.mirrored();
            let price = |c: &OptionContract| {
                let g = build_grid(c, 100, 1000, SMaxPolicy::Auto).unwrap();
                solve_mcfdm(c, &market(), &g, &ThetaConfig::default(), SolveOptions::default())
                    .unwrap()
                    .result
                    .price
            };
            let gap = price(&call) - price(&put) - (spot - strike * (-0.05 * t).exp());
            assert!(gap.abs() <= 5e-3, "S={spot} K={strike} T={t}: {gap}");
        }
    }
}

#[test]
fn convergence_report_isolates_unstable_grid() {
    let job = JobSpec::new(OptionKind::Call, 7.0, 7.5, 1.0, 0.05, 0.25).with_method(MethodSelection::Mcfdm);
    let report = run_convergence(&[(50, 500), (100, 2000), (200, 2000), (200, 8000)], &job).unwrap();
    assert_eq!(report.rows.len(), 4);
    let failed: Vec<_> = report.rows.iter().filter(|r| r.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].n_space, Some(200));
    assert_eq!(failed[0].n_time, Some(2000));
    assert!(report.has_stability_failure());
    let ok = report.rows.iter().filter(|r| r.price.is_some()).count();
    assert_eq!(ok, 3);
}

#[test]
fn all_methods_agree_with_closed_form() {
    for kind in [OptionKind::Call, OptionKind::Put] {
        let job = JobSpec::new(kind, 5.0, 5.5, 0.5, 0.05, 0.25);
        let results = run_price(&job).unwrap();
        let methods: Vec<Method> = results.iter().map(|r| r.method).collect();
        assert_eq!(methods, [Method::Exact, Method::Mcfdm, Method::Cfdm, Method::MonteCarlo]);
        let exact = black_scholes_price(&job.contract().unwrap(), &job.market().unwrap());
        for r in &results {
            let tol = match r.method {
                Method::MonteCarlo => 4.0 * r.diagnostics.std_error.unwrap(),
                _ => 1e-2,
            };
            assert!((r.price - exact).abs() <= tol, "{:?} {}", r.method, r.price);
        }
    }
}

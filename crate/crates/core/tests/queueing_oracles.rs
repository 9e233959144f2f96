//! Simulator outputs against textbook formulas computed here from scratch.

use hetlb::desim::{simulate_mmn, simulate_pooled_jffs, simulate_separate};
use hetlb::stats::mean_ci;
use hetlb::{PolicyId, SimConfig, SystemSpec};

/// Erlang-C mean response time of M/M/c with unit servers and offered load `a`.
fn erlang_c_response(c: usize, a: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..c {
        term *= a / k as f64;
        sum += term;
    }
    let last = term * a / c as f64 * c as f64 / (c as f64 - a);
    let wait_prob = last / (sum + last);
    1.0 + wait_prob / (c as f64 - a)
}

fn replicate(cfg: &SimConfig, sim: fn(&SimConfig) -> Result<hetlb::RunMetrics, hetlb::SimError>) -> (f64, f64) {
    let vals: Vec<f64> = (0..8).map(|s| sim(&cfg.clone().seed(100 + s)).unwrap().mean_response_time).collect();
    let e = mean_ci(&vals);
    (e.mean, e.half_width)
}

#[test]
fn single_server_is_mm1() {
    for lambda in [0.3, 0.6] {
        let spec = SystemSpec::from_rates(&[1.0], &[1.0], 1, lambda).unwrap();
        for policy in [PolicyId::SaJsq, PolicyId::Jsq, PolicyId::Sed] {
            let (m, hw) = replicate(&SimConfig::new(spec.clone(), policy).arrivals(100_000), simulate_separate);
            let exact = 1.0 / (1.0 - lambda);
            assert!((m - exact).abs() <= 3.0 * hw + 0.01 * exact, "lambda {lambda}: {m} vs {exact}");
        }
    }
}

#[test]
fn mmn_matches_erlang_c() {
    for (n, lambda) in [(5usize, 0.7), (20, 0.9)] {
        let spec = SystemSpec::two_speed_reference(n.max(5), lambda).unwrap().with_servers(n).unwrap();
        let (m, hw) = replicate(&SimConfig::new(spec, PolicyId::SaJsq).arrivals(200_000), simulate_mmn);
        let exact = erlang_c_response(n, n as f64 * lambda);
        assert!((m - exact).abs() <= 3.0 * hw + 0.01 * exact, "N={n}: {m} vs {exact}");
    }
}

#[test]
fn homogeneous_pooled_farm_is_mmn() {
    // one speed class: JFFS pooling is plain M/M/N
    let spec = SystemSpec::from_rates(&[1.0], &[1.0], 10, 0.8).unwrap();
    let (m, hw) = replicate(&SimConfig::new(spec, PolicyId::SaJsq).arrivals(200_000), simulate_pooled_jffs);
    let exact = erlang_c_response(10, 8.0);
    assert!((m - exact).abs() <= 3.0 * hw + 0.01 * exact, "{m} vs {exact}");
}

#[test]
fn little_law_holds_in_every_run() {
    let spec = SystemSpec::two_speed_reference(50, 0.8).unwrap();
    for policy in [PolicyId::SaJsq, PolicyId::SqD(2)] {
        let m = simulate_separate(&SimConfig::new(spec.clone(), policy).arrivals(200_000).seed(3)).unwrap();
        let little = m.mean_jobs_scaled / spec.lambda();
        assert!((m.mean_response_time - little).abs() < 0.03 * little, "{} vs {little}", m.mean_response_time);
    }
}

#[test]
fn identical_configs_are_bit_identical() {
    let cfg = SimConfig::new(SystemSpec::half_split_reference(30, 0.85).unwrap(), PolicyId::SqPerPool(vec![2, 2]))
        .arrivals(30_000)
        .seed(42);
    assert_eq!(simulate_separate(&cfg).unwrap(), simulate_separate(&cfg).unwrap());
    assert_ne!(simulate_separate(&cfg).unwrap(), simulate_separate(&cfg.clone().seed(43)).unwrap());
}

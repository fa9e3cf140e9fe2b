use cutofflab_core::analysis::separation_profile;
use cutofflab_core::asymptotics::predict_mixing;
use cutofflab_core::green;
use cutofflab_core::sde::{sample, sample_tau, Scheme, SimConfig};
use cutofflab_core::{build_default, make_power_curvature, make_sphere};

#[test]
fn eps_doubling_is_absorbed_by_the_correction() {
    let w = make_sphere();
    let t = build_default(&w, 8).unwrap();
    let cfg = SimConfig::new(&w, 8, Scheme::Autonomous, 2000, 77);
    let a = sample_tau(&t, &cfg).unwrap();
    let b = sample_tau(
        &t,
        &SimConfig {
            eps_abs: 2.0 * cfg.eps_abs,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert!(
        (a.mean() - b.mean()).abs() < a.se(),
        "{} {} se {}",
        a.mean(),
        b.mean(),
        a.se()
    );
    assert!(b.bias_correction > a.bias_correction);
}

#[test]
fn sample_variance_matches_quadrature() {
    for (w, n) in [
        (make_sphere(), 8u32),
        (make_power_curvature(-0.5, 1.0).unwrap(), 16),
    ] {
        let t = build_default(&w, n).unwrap();
        let s = sample_tau(&t, &SimConfig::new(&w, n, Scheme::Autonomous, 2000, 5)).unwrap();
        let (q_mean, (q_var, _)) = (green::mean_tau(&t), green::var_tau(&t));
        let m = s.raw_mean();
        let m4 = s.samples.iter().map(|x| (x - m).powi(4)).sum::<f64>() / s.len() as f64;
        let var_se = ((m4 - s.variance().powi(2)) / s.len() as f64).sqrt();
        assert!(
            (s.mean() - q_mean).abs() <= 3.0 * s.se(),
            "{}: mean",
            w.key()
        );
        assert!(
            (s.variance() - q_var).abs() <= 5.0 * var_se,
            "{}: var {} vs {q_var}",
            w.key(),
            s.variance()
        );
    }
}

#[test]
fn radii_stay_positive_for_every_scheme() {
    let w = make_sphere();
    let t = build_default(&w, 3).unwrap();
    for scheme in [
        Scheme::Autonomous,
        Scheme::FullCoupling,
        Scheme::FullDecoupling,
    ] {
        let s = sample(&t, &SimConfig::new(&w, 3, scheme, 200, 9)).unwrap();
        assert!(
            s.samples.iter().all(|x| x.is_finite() && *x > 0.0),
            "{scheme}"
        );
        assert_eq!(s.containment_violations, 0, "{scheme}");
    }
}

fn profile_at_twice_an(paths: u64) -> (f64, f64) {
    let w = make_sphere();
    let n = 1024;
    let t = build_default(&w, n).unwrap();
    let s = sample_tau(&t, &SimConfig::new(&w, n, Scheme::Autonomous, paths, 1024)).unwrap();
    let an = predict_mixing(&w, n).unwrap();
    let p = separation_profile(&t, &s, &[0.0, 2.0 * an]).unwrap();
    assert_eq!(p.rows[0].sep_mc, 1.0);
    (p.rows[1].sep_mc, p.rows[1].cheb_bound.unwrap())
}

#[test]
fn sphere_profile_has_dropped_by_twice_the_mixing_time() {
    let (sep, cheb) = profile_at_twice_an(300);
    assert!(sep <= 0.1 && cheb <= 0.1, "{sep} {cheb}");
}

#[test]
#[ignore = "10^4 paths at n = 1024 take several minutes"]
fn sphere_profile_full_sample() {
    let (sep, cheb) = profile_at_twice_an(10_000);
    println!("P[tau > 2 a_n] = {sep}, Chebyshev {cheb}");
    assert!(sep <= 0.1);
}

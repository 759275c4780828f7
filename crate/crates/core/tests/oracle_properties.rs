use attractor_lab::oracles::{barenblatt, comparison_closed_form, BarenblattParams};
use proptest::prelude::*;

fn rk4(q0: f64, beta: f64, h: f64, span: f64) -> f64 {
    let f = |y: f64| -h * y.max(0.0).powf(beta);
    let (mut y, mut t) = (q0, 0.0);
    while t < span {
        let rate = h * beta * y.max(1e-12).powf(beta - 1.0);
        let dt = (0.005 / rate).clamp(1e-9, 2e-3).min(span - t);
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn closed_form_solves_the_comparison_ode(q0 in 0.05f64..10.0, beta in 1.1f64..4.0, h in 0.1f64..4.0, span in 0.05f64..2.0) {
        let exact = comparison_closed_form(q0, beta, h * span).unwrap();
        prop_assert!((rk4(q0, beta, h, span) - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn closed_form_is_a_monotone_semigroup(q0 in 0.05f64..10.0, beta in 1.1f64..4.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let two = comparison_closed_form(comparison_closed_form(q0, beta, a).unwrap(), beta, b).unwrap();
        let one = comparison_closed_form(q0, beta, a + b).unwrap();
        prop_assert!((two - one).abs() <= 1e-12 * one.max(1e-300));
        prop_assert!(comparison_closed_form(2.0 * q0, beta, a).unwrap() >= comparison_closed_form(q0, beta, a).unwrap());
        prop_assert!(comparison_closed_form(f64::INFINITY, beta, a + 1e-3).unwrap() >= one.min(comparison_closed_form(q0, beta, a + 1e-3).unwrap()));
    }
}

/// Weak form `∫∫ U φ_t − |U_x|^{α−2} U_x φ_x = 0` for a test function supported
/// inside the bump on `t ∈ [1, 2]`.
#[test]
fn barenblatt_satisfies_the_weak_equation() {
    let alpha = 3.0;
    let p = BarenblattParams::new(alpha, 1, 1.0).unwrap();
    let n = 4000;
    let (x0, x1) = (-1.5, 1.5);
    let hx = (x1 - x0) / n as f64;
    let nt = 400;
    let ht = 1.0 / nt as f64;
    let pi = std::f64::consts::PI;
    let phi_x = |x: f64| ((pi * (x - x0) / (x1 - x0)).sin()).powi(2);
    let dphi_x = |x: f64| pi / (x1 - x0) * (2.0 * pi * (x - x0) / (x1 - x0)).sin();
    let phi_t = |t: f64| ((pi * (t - 1.0)).sin()).powi(2);
    let dphi_t = |t: f64| pi * (2.0 * pi * (t - 1.0)).sin();
    let (mut residual, mut scale) = (0.0, 0.0);
    for j in 0..nt {
        let t = 1.0 + (j as f64 + 0.5) * ht;
        for i in 0..n {
            let x = x0 + (i as f64 + 0.5) * hx;
            let u = barenblatt(t, x.abs(), &p).unwrap();
            let ux = (barenblatt(t, (x + 0.5 * hx).abs(), &p).unwrap() - barenblatt(t, (x - 0.5 * hx).abs(), &p).unwrap()) / hx;
            let a = u * phi_x(x) * dphi_t(t);
            let b = ux.abs().powf(alpha - 2.0) * ux * dphi_x(x) * phi_t(t);
            residual += (a - b) * hx * ht;
            scale += a.abs() * hx * ht;
        }
    }
    assert!(residual.abs() / scale <= 1e-3, "relative weak residual {}", residual.abs() / scale);
}

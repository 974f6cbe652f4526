//! Central finite-difference gradient oracle.
//!
//! Only calls the scalar loss function; it never touches a backward pass, so
//! it stays independent of the analytic gradients it is compared against.

use super::Params;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so exact-zero gradients compare absolutely.
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn set_element<P: Params + ?Sized>(
    params: &mut P,
    tensor: usize,
    elem: usize,
    value: Option<f64>,
) -> f64 {
    let mut t = 0;
    let mut old = 0.0;
    params.visit_mut(&mut |_, a| {
        if t == tensor {
            let slot = a.iter_mut().nth(elem).expect("element index in range");
            old = *slot;
            if let Some(v) = value {
                *slot = v;
            }
        }
        t += 1;
    });
    old
}

/// Compares `analytic` against central differences of `loss` at every element of
/// every tensor of `params` accepted by `select`.
pub fn check<P: Params + ?Sized>(
    params: &mut P,
    analytic: &P,
    loss: &mut dyn FnMut(&P) -> f64,
    select: &dyn Fn(&str) -> bool,
    step: f64,
    floor: f64,
) -> GradCheckReport {
    let mut entries = Vec::new();
    analytic.visit(&mut |name, a| {
        entries.push((name.to_string(), a.iter().copied().collect::<Vec<_>>()))
    });

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (t, (name, grads)) in entries.iter().enumerate() {
        if !select(name) {
            continue;
        }
        for (e, &g) in grads.iter().enumerate() {
            let x0 = set_element(params, t, e, None);
            set_element(params, t, e, Some(x0 + step));
            let up = loss(params);
            set_element(params, t, e, Some(x0 - step));
            let down = loss(params);
            set_element(params, t, e, Some(x0));
            let numeric = (up - down) / (2.0 * step);
            let rel = relative_error(g, numeric, floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), e, g, numeric));
            }
        }
    }
    report
}

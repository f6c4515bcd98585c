//! Chebyshev interpolation on the extreme points `cos(pi m / N)`, which nest
//! when `N` doubles.

use crate::util::NeumaierSum;

pub(super) fn lobatto_nodes(order: usize) -> Vec<f64> {
    if order == 0 {
        return vec![0.0];
    }
    (0..=order)
        .map(|m| (std::f64::consts::PI * m as f64 / order as f64).cos())
        .collect()
}

/// Node values at the doubled order, reusing the values already known.
pub(super) fn refine<F: FnMut(f64) -> T, T: Clone>(old: &[T], order: usize, mut f: F) -> Vec<T> {
    let nodes = lobatto_nodes(order);
    (0..=order)
        .map(|m| if m % 2 == 0 { old[m / 2].clone() } else { f(nodes[m]) })
        .collect()
}

/// Chebyshev coefficients of the interpolant through the node values.
#[cfg(test)]
pub(super) fn coefficients(values: &[f64]) -> Vec<f64> {
    let order = values.len() - 1;
    if order == 0 {
        return vec![values[0]];
    }
    let n = order as f64;
    (0..=order)
        .map(|j| {
            let mut s = NeumaierSum::default();
            for (m, v) in values.iter().enumerate() {
                let w = if m == 0 || m == order { 0.5 } else { 1.0 };
                s.add(w * v * (std::f64::consts::PI * (j * m) as f64 / n).cos());
            }
            let c = 2.0 * s.value() / n;
            if j == 0 || j == order {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

/// Checks that the last three Chebyshev coefficients of node values at a
/// fixed order are below `tol * max(1, max |value|)`.
pub(super) struct TailCheck {
    order: usize,
    cos: Vec<[f64; 3]>,
    tol: f64,
}

impl TailCheck {
    pub fn new(order: usize, tol: f64) -> TailCheck {
        let n = order as f64;
        let cos = (0..=order)
            .map(|m| {
                let w = if m == 0 || m == order { 0.5 } else { 1.0 };
                let mut row = [0.0; 3];
                for (r, j) in row.iter_mut().zip(order.saturating_sub(2)..=order) {
                    let half = if j == order { 0.5 } else { 1.0 };
                    *r = half * w * 2.0 / n * (std::f64::consts::PI * (j * m) as f64 / n).cos();
                }
                row
            })
            .collect();
        TailCheck { order, cos, tol }
    }

    pub fn resolved(&self, values: &[f64]) -> bool {
        if self.order < 3 {
            return self.order == 0;
        }
        let scale = values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let mut tail = [NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default()];
        for (v, row) in values.iter().zip(&self.cos) {
            for (t, c) in tail.iter_mut().zip(row) {
                t.add(v * c);
            }
        }
        tail.iter().all(|t| t.value().abs() <= self.tol * scale)
    }
}

/// Barycentric interpolation weights at `y` in `[-1, 1]` for the given order:
/// the interpolant is `sum_m lambda_m f_m`.
pub(super) fn barycentric(order: usize, nodes: &[f64], y: f64, lambda: &mut [f64]) {
    if order == 0 {
        lambda[0] = 1.0;
        return;
    }
    if let Some(hit) = nodes.iter().position(|&x| x == y) {
        lambda.iter_mut().for_each(|l| *l = 0.0);
        lambda[hit] = 1.0;
        return;
    }
    let mut total = 0.0;
    for (m, (l, x)) in lambda.iter_mut().zip(nodes).enumerate() {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let half = if m == 0 || m == order { 0.5 } else { 1.0 };
        *l = sign * half / (y - x);
        total += *l;
    }
    lambda.iter_mut().for_each(|l| *l /= total);
}

/// Values of the smooth vector function `f` at every point, from Chebyshev
/// interpolation over `[min, max]` at the first order in `orders` whose node
/// values all pass the tail check at `tol`. `None` when the points do not
/// span an interval, when no order resolves, or when an order would need
/// more than half as many evaluations as there are points.
pub fn interpolate<F: Fn(f64) -> Vec<f64>>(points: &[f64], f: F, orders: &[usize], tol: f64) -> Option<Vec<Vec<f64>>> {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) || !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let at = |y: f64| f(mid + half * y);
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut previous = None;
    for &order in orders {
        if 2 * order > points.len() {
            return None;
        }
        values = match previous {
            Some(p) if order == 2 * p => refine(&values, order, at),
            _ => lobatto_nodes(order).into_iter().map(at).collect(),
        };
        previous = Some(order);
        let width = values[0].len();
        let columns: Vec<Vec<f64>> = (0..width).map(|j| values.iter().map(|v| v[j]).collect()).collect();
        let check = TailCheck::new(order, tol);
        if columns.iter().all(|c| check.resolved(c)) {
            let nodes = lobatto_nodes(order);
            let mut lambda = vec![0.0; order + 1];
            return Some(
                points
                    .iter()
                    .map(|&x| {
                        let y = ((x - mid) / half).clamp(-1.0, 1.0);
                        barycentric(order, &nodes, y, &mut lambda);
                        columns
                            .iter()
                            .map(|c| lambda.iter().zip(c).map(|(l, v)| l * v).sum())
                            .collect()
                    })
                    .collect(),
            );
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_function() {
        let f = |u: f64| (-(2.0 * u).exp()).exp() + 0.3 * (-(0.5 * u).exp()).exp();
        let g = |y: f64| f(0.1 + 1.2 * y);
        let mut vals: Vec<f64> = lobatto_nodes(16).into_iter().map(g).collect();
        for order in [32, 64] {
            vals = refine(&vals, order, g);
        }
        assert!(TailCheck::new(64, 1e-13).resolved(&vals));
        let c = coefficients(&vals);
        assert!(c[62..].iter().all(|x| x.abs() <= 1e-13));
        let nodes = lobatto_nodes(64);
        let mut lambda = vec![0.0; 65];
        for i in 0..=50 {
            let y = -1.0 + 2.0 * i as f64 / 50.0;
            barycentric(64, &nodes, y, &mut lambda);
            let p: f64 = lambda.iter().zip(&vals).map(|(l, v)| l * v).sum();
            assert!((p - g(y)).abs() < 1e-13);
        }
    }

    #[test]
    fn detects_unresolved() {
        let vals: Vec<f64> = lobatto_nodes(8).into_iter().map(|y| (30.0 * y).sin()).collect();
        assert!(!TailCheck::new(8, 1e-13).resolved(&vals));
    }
}

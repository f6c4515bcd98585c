//! Disease-free survival and cumulative incidences on the merged age grid.

use crate::multistate::{MultiStateFit, Strategy};
use crate::step::StepFunction;
use crate::util::NeumaierSum;

use super::Window;

/// Union of the 0->1 and 0->2 jump times up to a horizon, with the baseline
/// increments already multiplied by the screening term of the strategy.
#[derive(Debug, Clone)]
pub(super) struct AgeGrid {
    pub times: Vec<f64>,
    pub a01: Vec<f64>,
    pub a02: Vec<f64>,
    pub b01: Vec<f64>,
    pub b02: Vec<f64>,
    /// Grid positions of the 0->1 jumps.
    pub onset: Vec<usize>,
    /// Grid positions of the 0->2 jumps.
    pub death: Vec<usize>,
}

impl AgeGrid {
    pub fn new(fit: &MultiStateFit, s: Strategy, horizon: f64) -> AgeGrid {
        let f1 = &fit.fit01;
        let f2 = &fit.fit02;
        let (t1, d1) = (f1.baseline.times(), f1.baseline.increments());
        let (t2, d2) = (f2.baseline.times(), f2.baseline.increments());
        let n1 = f1.baseline.count_le(horizon);
        let n2 = f2.baseline.count_le(horizon);
        let mut g = AgeGrid {
            times: Vec::with_capacity(n1 + n2),
            a01: Vec::with_capacity(n1 + n2),
            a02: Vec::with_capacity(n1 + n2),
            b01: Vec::with_capacity(n1 + n2),
            b02: Vec::with_capacity(n1 + n2),
            onset: Vec::with_capacity(n1),
            death: Vec::with_capacity(n2),
        };
        let adj = |beta: f64, t: f64, d: f64| {
            let z = if s.screened_by(t) { 1.0 } else { 0.0 };
            d * (beta * z).exp()
        };
        let (mut i, mut j) = (0, 0);
        let (mut c1, mut c2) = (0.0, 0.0);
        while i < n1 || j < n2 {
            let next1 = if i < n1 { t1[i] } else { f64::INFINITY };
            let next2 = if j < n2 { t2[j] } else { f64::INFINITY };
            let t = next1.min(next2);
            let m = g.times.len();
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            if next1 == t {
                a1 = adj(f1.screen_coef(), t, d1[i]);
                g.onset.push(m);
                i += 1;
            }
            if next2 == t {
                a2 = adj(f2.screen_coef(), t, d2[j]);
                g.death.push(m);
                j += 1;
            }
            c1 += a1;
            c2 += a2;
            g.times.push(t);
            g.a01.push(a1);
            g.a02.push(a2);
            g.b01.push(c1);
            g.b02.push(c2);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn subject(&self, fit: &MultiStateFit, x: &[f64]) -> SubjectCurve {
        let e01 = dot(fit.fit01.x_coefs(), x).exp();
        let e02 = dot(fit.fit02.x_coefs(), x).exp();
        let n = self.len();
        let mut p1 = Vec::with_capacity(n);
        let mut df_t = Vec::with_capacity(n);
        let mut df_02 = Vec::with_capacity(n);
        let mut prev = 1.0;
        for m in 0..n {
            let cur = (-e01 * self.b01[m] - e02 * self.b02[m]).exp();
            let drop = (prev - cur).max(0.0);
            let h1 = e01 * self.a01[m];
            let h2 = e02 * self.a02[m];
            let tot = h1 + h2;
            if tot > 0.0 {
                df_t.push(drop * (h1 / tot));
                df_02.push(drop * (h2 / tot));
            } else {
                df_t.push(0.0);
                df_02.push(0.0);
            }
            p1.push(cur);
            prev = cur;
        }
        SubjectCurve {
            p1,
            df_t,
            df_02,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-subject `P1` after each grid point and the cumulative-incidence jumps.
///
/// The drop of `P1` at a grid point is shared between disease and death in
/// proportion to the two hazard increments, so `P1 + F_T + F_02 = 1` holds
/// to rounding at every age.
#[derive(Debug, Clone)]
pub(super) struct SubjectCurve {
    pub p1: Vec<f64>,
    pub df_t: Vec<f64>,
    pub df_02: Vec<f64>,
}

impl SubjectCurve {
    pub fn cif(&self, grid: &AgeGrid, disease: bool) -> StepFunction {
        let (pos, df) = if disease {
            (&grid.onset, &self.df_t)
        } else {
            (&grid.death, &self.df_02)
        };
        let times = pos.iter().map(|&m| grid.times[m]).collect();
        let inc = pos.iter().map(|&m| df[m]).collect();
        StepFunction::new(times, inc).expect("grid times are increasing")
    }

    /// `P1` at age `u` (right-continuous).
    pub fn p1_at(&self, grid: &AgeGrid, u: f64) -> f64 {
        match grid.times.partition_point(|&g| g <= u) {
            0 => 1.0,
            k => self.p1[k - 1],
        }
    }

    pub fn p1_sum_at(&self, grid: &AgeGrid, ages: &[f64]) -> f64 {
        let s: NeumaierSum = ages.iter().map(|&e| self.p1_at(grid, e)).collect();
        s.value()
    }

    /// `int_{t0}^{t} P1(u) du`, exact for the step function.
    pub fn p1_integral(&self, grid: &AgeGrid, w: Window) -> f64 {
        let mut acc = NeumaierSum::default();
        let mut left = w.t0;
        let mut value = 1.0;
        for (m, &g) in grid.times.iter().enumerate() {
            if g > w.t {
                break;
            }
            if g > left {
                acc.add(value * (g - left));
                left = g;
            }
            value = self.p1[m];
        }
        if w.t > left {
            acc.add(value * (w.t - left));
        }
        acc.value()
    }

    /// `int_{t0}^{t} F_02(u) du`.
    pub fn l02(&self, grid: &AgeGrid, w: Window) -> f64 {
        let mut acc = NeumaierSum::default();
        for &m in &grid.death {
            let g = grid.times[m];
            if g > w.t {
                break;
            }
            acc.add(self.df_02[m] * (w.t - g.max(w.t0)));
        }
        acc.value()
    }
}

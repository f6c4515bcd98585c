//! Disease-state terms: sums over disease-onset jumps of expectations over the
//! fitted sojourn distribution.
//!
//! For onset at `v` with sojourn multiplier `c`, the sojourn survival is the
//! step function `S(w) = exp(-c C(w))`, which keeps the mass `S(w_K)` of no
//! death within the fitted support. Two routes evaluate `E q(v + W)`:
//!
//! * exact: summation by parts over the sojourn jumps,
//!   `omega_0 + sum_k omega_k exp(-c C_k)` with `omega_0 = q_1`,
//!   `omega_k = q_{k+1} - q_k` and `omega_K = q_inf - q_K`;
//! * tabulated: every payoff is a combination of `Psi(tau) = int_0^tau S` at a
//!   few offsets and of point values `S(tau)`. The prefix integrals
//!   `I_k(c) = Psi(w_k)` are smooth in `log c` and are tabulated once at
//!   Chebyshev nodes covering every onset block and subject, with a tail check
//!   that falls back to the exact route.

use crate::multistate::{MultiStateFit, Strategy};
use crate::util::NeumaierSum;

use super::cheb;
use super::curves::{AgeGrid, SubjectCurve};
use super::{EvalMethod, QualityProfile, Window};

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Functional {
    /// Time alive with disease.
    Time,
    /// Time dead after disease.
    Lost,
    Quality(QualityProfile),
    QualityLost(QualityProfile),
    /// Screening epochs (already clipped to the window) spent alive with disease.
    Count(Vec<f64>),
}

fn overlap(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    (hi.min(b) - lo.max(a)).max(0.0)
}

impl Functional {
    /// Deaths later than `t + lookahead` have the same payoff as no death.
    fn lookahead(&self) -> f64 {
        match self {
            Functional::Quality(_) => 1.0,
            _ => 0.0,
        }
    }

    /// Payoff over `[lo, t]` for onset at `v` and death at `d` (`+inf` for
    /// none), with `lo >= v`.
    fn q(&self, v: f64, lo: f64, t: f64, d: f64) -> f64 {
        match self {
            Functional::Time => (t.min(d) - lo).max(0.0),
            Functional::Lost => (t - lo.max(d)).max(0.0),
            Functional::Quality(p) => {
                if p.a == p.b && p.b == p.c {
                    return p.a * (t.min(d) - lo).max(0.0);
                }
                if d == f64::INFINITY {
                    return p.a * overlap(lo, t, v, v + 1.0) + p.b * overlap(lo, t, v + 1.0, f64::INFINITY);
                }
                let dur = d - v;
                if dur > 2.0 {
                    p.a * overlap(lo, t, v, v + 1.0)
                        + p.b * overlap(lo, t, v + 1.0, d - 1.0)
                        + p.c * overlap(lo, t, d - 1.0, d)
                } else if dur > 1.0 {
                    p.a * overlap(lo, t, v, d - 1.0) + p.c * overlap(lo, t, d - 1.0, d)
                } else {
                    p.c * overlap(lo, t, v, d)
                }
            }
            Functional::QualityLost(p) => {
                let from = lo.max(d);
                if p.a == p.b {
                    return p.a * (t - from).max(0.0);
                }
                p.a * overlap(from, t, v, v + 1.0) + p.b * overlap(from, t, v + 1.0, f64::INFINITY)
            }
            Functional::Count(epochs) => epochs.iter().filter(|&&e| e >= lo && e <= t && e < d).count() as f64,
        }
    }
}

/// Offsets `tau` at which a block needs `Psi` or `S`, deduplicated.
#[derive(Debug, Clone, Default)]
struct Points {
    taus: Vec<f64>,
}

impl Points {
    fn at(&mut self, tau: f64) -> usize {
        if let Some(i) = self.taus.iter().position(|&x| x == tau) {
            return i;
        }
        self.taus.push(tau);
        self.taus.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// `Psi(tau)`.
    Integral,
    /// `S(tau)`.
    Survival,
}

/// `constant + sum coef * Psi|S(tau)` for one functional and one block.
#[derive(Debug, Clone, Default)]
struct Combo {
    constant: f64,
    terms: Vec<(usize, Kind, f64)>,
}

impl Combo {
    fn psi(&mut self, pts: &mut Points, tau: f64, coef: f64) {
        let i = pts.at(tau);
        self.terms.push((i, Kind::Integral, coef));
    }

    /// `coef * int_lo^hi S`.
    fn span(&mut self, pts: &mut Points, lo: f64, hi: f64, coef: f64) {
        if hi > lo && coef != 0.0 {
            self.psi(pts, hi, coef);
            self.psi(pts, lo, -coef);
        }
    }
}

impl Functional {
    /// Combination for onset at `v` over `[lo, t]`, in sojourn offsets
    /// `a = lo - v` and `b = t - v`.
    fn combo(&self, v: f64, lo: f64, t: f64, pts: &mut Points) -> Combo {
        let (a, b) = (lo - v, t - v);
        let mut c = Combo::default();
        match self {
            Functional::Time => c.span(pts, a, b, 1.0),
            Functional::Lost => {
                c.constant = b - a;
                c.span(pts, a, b, -1.0);
            }
            Functional::Quality(p) => {
                if p.a == p.b && p.b == p.c {
                    c.span(pts, a, b, p.a);
                } else {
                    // Expected score at offset r is g(r) S(r + 1) + c (S(r) - S(r + 1))
                    // with g = a on [0, 1] and b beyond.
                    c.span(pts, a, b, p.c);
                    c.span(pts, a + 1.0, b + 1.0, -p.c);
                    c.span(pts, a.min(1.0) + 1.0, b.min(1.0) + 1.0, p.a);
                    c.span(pts, a.max(1.0) + 1.0, b.max(1.0) + 1.0, p.b);
                }
            }
            Functional::QualityLost(p) => {
                if p.a == p.b {
                    c.constant = p.a * (b - a);
                    c.span(pts, a, b, -p.a);
                } else {
                    c.constant = p.a * overlap(a, b, 0.0, 1.0) + p.b * overlap(a, b, 1.0, f64::INFINITY);
                    c.span(pts, a.min(1.0), b.min(1.0), -p.a);
                    c.span(pts, a.max(1.0), b.max(1.0), -p.b);
                }
            }
            Functional::Count(epochs) => {
                for &e in epochs.iter().filter(|&&e| e >= lo && e <= t) {
                    let i = pts.at(e - v);
                    c.terms.push((i, Kind::Survival, 1.0));
                }
            }
        }
        c
    }
}

/// Fitted 1->3 baseline with a leading zero: `w_0 = 0`, `C_0 = 0`.
#[derive(Debug, Clone)]
struct Baseline {
    w: Vec<f64>,
    cum: Vec<f64>,
}

impl Baseline {
    /// Number of jumps at or before `tau`.
    fn index(&self, tau: f64) -> usize {
        self.w[1..].partition_point(|&x| x <= tau)
    }

    /// `I_0, ..., I_K` at multiplier `c`.
    fn integrals(&self, c: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len());
        let mut acc = NeumaierSum::default();
        out.push(0.0);
        for k in 1..self.w.len() {
            acc.add((self.w[k] - self.w[k - 1]) * (-c * self.cum[k - 1]).exp());
            out.push(acc.value());
        }
        out
    }
}

/// `I_k` at Chebyshev nodes in `log c`.
#[derive(Debug, Clone)]
struct Table {
    mid: f64,
    half: f64,
    order: usize,
    nodes: Vec<f64>,
    /// Row `k` holds `I_k` at every node.
    rows: Vec<Vec<f64>>,
}

const TABLE_ORDERS: [usize; 4] = [16, 32, 64, 128];
const TABLE_TAIL: f64 = 1e-13;

impl Table {
    /// `rows` limits the tail check to the prefix integrals that are used.
    fn build(base: &Baseline, lmin: f64, lmax: f64, rows: usize) -> Option<Table> {
        let (mid, half) = (0.5 * (lmin + lmax), 0.5 * (lmax - lmin));
        let at = |y: f64| {
            let mut v = base.integrals((mid + half * y).exp());
            v.truncate(rows);
            v
        };
        if half == 0.0 {
            return Some(Table {
                mid,
                half: 1.0,
                order: 0,
                nodes: vec![0.0],
                rows: at(0.0).into_iter().map(|v| vec![v]).collect(),
            });
        }
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (i, &order) in TABLE_ORDERS.iter().enumerate() {
            cols = if i == 0 {
                cheb::lobatto_nodes(order).into_iter().map(at).collect()
            } else {
                cheb::refine(&cols, order, at)
            };
            let rows: Vec<Vec<f64>> = (0..rows).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
            let check = cheb::TailCheck::new(order, TABLE_TAIL);
            if rows.iter().all(|r| check.resolved(r)) {
                return Some(Table {
                    mid,
                    half,
                    order,
                    nodes: cheb::lobatto_nodes(order),
                    rows,
                });
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
struct Block {
    /// Grid position of the onset jump.
    pos: usize,
    /// Log sojourn multiplier without the covariate term.
    a: f64,
    /// Exact route: number of sojourn jumps that can change the payoff and,
    /// per functional, the `k + 1` summation weights.
    k: usize,
    omega: Vec<Vec<f64>>,
    /// Tabulated route: `(jump index, tau - w_index)` per offset.
    points: Vec<(usize, f64)>,
    combos: Vec<Combo>,
}

impl Block {
    fn exact(&self, cum: &[f64], c: f64, out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o = w[0];
        }
        for k in 1..=self.k {
            let e = (-c * cum[k]).exp();
            for (o, w) in out.iter_mut().zip(&self.omega) {
                *o += w[k] * e;
            }
        }
    }

    fn tabulated(&self, base: &Baseline, table: &Table, ell: f64, scratch: &mut Scratch, out: &mut [f64]) {
        let c = ell.exp();
        let y = ((ell - table.mid) / table.half).clamp(-1.0, 1.0);
        cheb::barycentric(table.order, &table.nodes, y, &mut scratch.lambda);
        scratch.psi.clear();
        for &(k, dt) in &self.points {
            let s = (-c * base.cum[k]).exp();
            let i: f64 = scratch.lambda.iter().zip(&table.rows[k]).map(|(l, v)| l * v).sum();
            scratch.psi.push((i + dt * s, s));
        }
        for (o, combo) in out.iter_mut().zip(&self.combos) {
            let mut acc = combo.constant;
            for &(i, kind, coef) in &combo.terms {
                acc += coef
                    * match kind {
                        Kind::Integral => scratch.psi[i].0,
                        Kind::Survival => scratch.psi[i].1,
                    };
            }
            *o = acc;
        }
    }
}

struct Scratch {
    lambda: Vec<f64>,
    psi: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub(super) struct SojournEngine {
    blocks: Vec<Block>,
    base: Baseline,
    table: Option<Table>,
    gamma: Vec<f64>,
    nf: usize,
}

impl SojournEngine {
    pub fn new(
        fit: &MultiStateFit,
        grid: &AgeGrid,
        s: Strategy,
        window: Window,
        functionals: &[Functional],
        xs: &[&[f64]],
        method: EvalMethod,
    ) -> SojournEngine {
        let f13 = &fit.fit13;
        let gamma = f13.x_coefs().to_vec();
        let mut base = Baseline {
            w: vec![0.0],
            cum: vec![0.0],
        };
        base.w.extend_from_slice(f13.baseline.times());
        base.cum.extend_from_slice(f13.baseline.cumulative());
        let lookahead = functionals.iter().map(Functional::lookahead).fold(0.0, f64::max);

        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            let u: f64 = gamma.iter().zip(x.iter()).map(|(g, v)| g * v).sum();
            umin = umin.min(u);
            umax = umax.max(u);
        }

        let mut blocks: Vec<Block> = grid
            .onset
            .iter()
            .map(|&pos| {
                let v = grid.times[pos];
                let z = if s.screened_by(v) { 1.0 } else { 0.0 };
                Block {
                    pos,
                    a: f13.screen_coef() * z + f13.onset_coef().unwrap_or(0.0) * v,
                    k: 0,
                    omega: Vec::new(),
                    points: Vec::new(),
                    combos: Vec::new(),
                }
            })
            .collect();

        let mut table = None;
        if method == EvalMethod::Auto && !blocks.is_empty() && umin.is_finite() {
            let mut used = 1;
            for b in &mut blocks {
                let v = grid.times[b.pos];
                let lo = window.t0.max(v);
                let mut pts = Points::default();
                b.combos = functionals.iter().map(|f| f.combo(v, lo, window.t, &mut pts)).collect();
                b.points = pts
                    .taus
                    .iter()
                    .map(|&tau| {
                        let k = base.index(tau);
                        used = used.max(k + 1);
                        (k, tau - base.w[k])
                    })
                    .collect();
            }
            let (amin, amax) = blocks
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.a), hi.max(b.a)));
            table = Table::build(&base, amin + umin, amax + umax, used);
        }

        if table.is_none() {
            let wt = &base.w[1..];
            for b in &mut blocks {
                let v = grid.times[b.pos];
                let lo = window.t0.max(v);
                let k = base.index(window.t + lookahead - v);
                b.k = k;
                b.omega = functionals
                    .iter()
                    .map(|f| {
                        let q: Vec<f64> = wt[..k].iter().map(|w| f.q(v, lo, window.t, v + w)).collect();
                        let q_inf = f.q(v, lo, window.t, f64::INFINITY);
                        let mut om = Vec::with_capacity(k + 1);
                        om.push(if k == 0 { q_inf } else { q[0] });
                        for i in 1..=k {
                            om.push(if i < k { q[i] - q[i - 1] } else { q_inf - q[k - 1] });
                        }
                        om
                    })
                    .collect();
            }
        }
        SojournEngine {
            blocks,
            base,
            table,
            gamma,
            nf: functionals.len(),
        }
    }

    /// `sum_j dF_T(v_j) E q_f(D | v_j)` for each functional.
    pub fn values(&self, curve: &SubjectCurve, x: &[f64]) -> Vec<f64> {
        let u: f64 = self.gamma.iter().zip(x).map(|(g, v)| g * v).sum();
        let mut acc = vec![NeumaierSum::default(); self.nf];
        let mut buf = vec![0.0; self.nf];
        let mut scratch = Scratch {
            lambda: vec![0.0; self.table.as_ref().map_or(0, |t| t.order + 1)],
            psi: Vec::new(),
        };
        for b in &self.blocks {
            let df = curve.df_t[b.pos];
            if df == 0.0 {
                continue;
            }
            match &self.table {
                Some(t) => b.tabulated(&self.base, t, b.a + u, &mut scratch, &mut buf),
                None => b.exact(&self.base.cum, (b.a + u).exp(), &mut buf),
            }
            for (a, v) in acc.iter_mut().zip(&buf) {
                a.add(df * v);
            }
        }
        acc.iter().map(NeumaierSum::value).collect()
    }
}

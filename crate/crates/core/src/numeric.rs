//! Small numeric routines shared by the solvers: golden-section search,
//! concave maximization over the simplex, and projected subgradient descent.

use crate::experiment::simplex_grid;
use crate::rng;
use rand::Rng;

/// Inverse golden ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// NaN compares as −∞ so that it never wins a maximization.
#[inline]
pub fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`,
/// endpoints included. Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, sanitize(f(lo)));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = sanitize(f(x));
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Result of maximizing a concave function over the simplex.
#[derive(Debug, Clone)]
pub struct SimplexMax {
    pub point: Vec<f64>,
    pub value: f64,
    /// Largest improvement found by local probing after refinement.
    pub gap: f64,
    pub approximate: bool,
}

/// Gap above which a numeric maximum is flagged approximate.
pub const ASCENT_GAP_TOL: f64 = 1e-7;

/// Maximize a concave `phi` over Δ_k: grid seeding, then nested golden
/// sections (k ≤ 4) or pairwise exact line searches (k ≥ 5).
pub fn maximize_concave_on_simplex(phi: &dyn Fn(&[f64]) -> f64, k: usize) -> SimplexMax {
    let res = seed_resolution(k);
    let mut best_pt = vec![1.0 / k as f64; k];
    let mut best = sanitize(phi(&best_pt));
    for v in simplex_grid(k, res).expect("valid grid") {
        let fv = sanitize(phi(&v));
        if fv > best {
            best = fv;
            best_pt = v.into_vec();
        }
    }

    let (pt, val) = if k <= 4 {
        let iters = if k <= 3 { 64 } else { 44 };
        let mut buf = vec![0.0; k];
        let mut out = vec![0.0; k];
        let v = nested_golden(phi, &mut buf, 0, 1.0, iters, &mut out);
        (out, v)
    } else {
        pairwise_ascent(phi, best_pt.clone())
    };
    if val > best {
        best = val;
        best_pt = pt;
    }
    // Pairwise polish from the best point catches golden-section drift.
    let (pt, val) = pairwise_ascent_sweeps(phi, best_pt.clone(), best, 3);
    if val > best {
        best = val;
        best_pt = pt;
    }
    let gap = probe_gap(phi, &best_pt, best);
    SimplexMax { point: best_pt, value: best, gap, approximate: gap > ASCENT_GAP_TOL || !best.is_finite() }
}

fn seed_resolution(k: usize) -> usize {
    let mut r = 20;
    while r > 1 && crate::experiment::binomial(r + k - 1, k - 1) > 20_000 {
        r -= 1;
    }
    r
}

// Maximizes over coordinates depth..k with `rem` mass left; writes the
// maximizing tail into `out[depth..]`.
fn nested_golden(
    phi: &dyn Fn(&[f64]) -> f64,
    buf: &mut Vec<f64>,
    depth: usize,
    rem: f64,
    iters: usize,
    out: &mut Vec<f64>,
) -> f64 {
    let k = buf.len();
    if depth == k - 1 {
        buf[depth] = rem;
        out.copy_from_slice(buf);
        return sanitize(phi(buf));
    }
    let mut scratch = vec![0.0; k];
    let eval = |x: f64, buf: &mut Vec<f64>, scratch: &mut Vec<f64>| {
        buf[depth] = x;
        nested_golden(phi, buf, depth + 1, (rem - x).max(0.0), iters, scratch)
    };
    if rem <= 0.0 {
        return eval(0.0, buf, out);
    }
    let (mut a, mut b) = (0.0, rem);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, buf, &mut scratch);
    let mut fd = eval(d, buf, &mut scratch);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, buf, &mut scratch);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, buf, &mut scratch);
        }
    }
    let mut best_x = if fc >= fd { c } else { d };
    let mut best_v = fc.max(fd);
    for x in [0.0, rem] {
        let v = eval(x, buf, &mut scratch);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    // Re-run at the winner to record the full maximizing point.
    let v = eval(best_x, buf, out);
    v.max(best_v)
}

fn pairwise_ascent(phi: &dyn Fn(&[f64]) -> f64, start: Vec<f64>) -> (Vec<f64>, f64) {
    let v = sanitize(phi(&start));
    pairwise_ascent_sweeps(phi, start, v, 500)
}

fn pairwise_ascent_sweeps(phi: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, mut fx: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let k = x.len();
    let mut y = x.clone();
    for _ in 0..sweeps {
        let before = fx;
        for i in 0..k {
            for j in (i + 1)..k {
                let (lo, hi) = (-x[i], x[j]);
                if hi - lo <= 0.0 {
                    continue;
                }
                let (s, v) = golden_max(
                    |s| {
                        y.copy_from_slice(&x);
                        y[i] = (x[i] + s).max(0.0);
                        y[j] = (x[j] - s).max(0.0);
                        phi(&y)
                    },
                    lo,
                    hi,
                    60,
                );
                if v > fx {
                    let xi = (x[i] + s).max(0.0);
                    let xj = (x[j] - s).max(0.0);
                    x[i] = xi;
                    x[j] = xj;
                    fx = v;
                }
            }
        }
        if !(fx - before > 1e-15 * (1.0 + fx.abs())) {
            break;
        }
    }
    (x, fx)
}

/// Largest improvement found by short pairwise moves away from `x`.
fn probe_gap(phi: &dyn Fn(&[f64]) -> f64, x: &[f64], fx: f64) -> f64 {
    if !fx.is_finite() {
        return f64::INFINITY;
    }
    let k = x.len();
    let mut y = x.to_vec();
    let mut gap: f64 = 0.0;
    for &h in &[1e-3, 1e-5, 1e-7] {
        for i in 0..k {
            for j in 0..k {
                if i == j || x[j] < h {
                    continue;
                }
                y.copy_from_slice(x);
                y[i] += h;
                y[j] -= h;
                let v = sanitize(phi(&y));
                gap = gap.max(v - fx);
            }
        }
    }
    gap.max(0.0)
}

/// Maximize a concave `phi` over {p ∈ Δ_k : p_j ≤ caps_j}. Needs Σ caps ≥ 1.
pub fn maximize_concave_on_capped_simplex(phi: &dyn Fn(&[f64]) -> f64, caps: &[f64]) -> SimplexMax {
    let k = caps.len();
    // The least constrained coordinate absorbs the leftover mass.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| caps[a].partial_cmp(&caps[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut tail_caps = vec![0.0; k + 1];
    for d in (0..k).rev() {
        tail_caps[d] = tail_caps[d + 1] + caps[order[d]].min(1.0);
    }
    // Greedy feasible start: fill the loosest coordinates first.
    let mut start = vec![0.0; k];
    let mut rem = 1.0;
    for &j in order.iter().rev() {
        let v = caps[j].min(rem).max(0.0);
        start[j] = v;
        rem -= v;
    }
    let mut best_pt = start;
    let mut best = sanitize(phi(&best_pt));
    let (pt, val) = if k <= 4 {
        let iters = if k <= 3 { 64 } else { 44 };
        let mut buf = vec![0.0; k];
        let mut out = vec![0.0; k];
        let ctx = Capped { phi, caps, order: &order, tail_caps: &tail_caps, iters };
        let v = ctx.nested(&mut buf, 0, 1.0, &mut out);
        (out, v)
    } else {
        capped_pairwise(phi, caps, best_pt.clone(), best, 500)
    };
    if val > best {
        best = val;
        best_pt = pt;
    }
    let (pt, val) = capped_pairwise(phi, caps, best_pt.clone(), best, 3);
    if val > best {
        best = val;
        best_pt = pt;
    }
    let gap = capped_probe_gap(phi, caps, &best_pt, best);
    SimplexMax { point: best_pt, value: best, gap, approximate: gap > ASCENT_GAP_TOL || !best.is_finite() }
}

struct Capped<'a> {
    phi: &'a dyn Fn(&[f64]) -> f64,
    caps: &'a [f64],
    order: &'a [usize],
    tail_caps: &'a [f64],
    iters: usize,
}

impl Capped<'_> {
    fn nested(&self, buf: &mut Vec<f64>, depth: usize, rem: f64, out: &mut Vec<f64>) -> f64 {
        let k = buf.len();
        let j = self.order[depth];
        if depth == k - 1 {
            buf[j] = rem;
            out.copy_from_slice(buf);
            return if rem <= self.caps[j] + 1e-15 { sanitize((self.phi)(buf)) } else { f64::NEG_INFINITY };
        }
        let lo = (rem - self.tail_caps[depth + 1]).max(0.0);
        let hi = self.caps[j].min(rem);
        let mut scratch = vec![0.0; k];
        let eval = |x: f64, buf: &mut Vec<f64>, scratch: &mut Vec<f64>| {
            buf[j] = x;
            self.nested(buf, depth + 1, (rem - x).max(0.0), scratch)
        };
        if hi <= lo {
            return eval(lo.min(hi.max(0.0)), buf, out);
        }
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c, buf, &mut scratch);
        let mut fd = eval(d, buf, &mut scratch);
        for _ in 0..self.iters {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c, buf, &mut scratch);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d, buf, &mut scratch);
            }
        }
        let mut best_x = if fc >= fd { c } else { d };
        let mut best_v = fc.max(fd);
        for x in [lo, hi] {
            let v = eval(x, buf, &mut scratch);
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
        let v = eval(best_x, buf, out);
        v.max(best_v)
    }
}

fn capped_pairwise(phi: &dyn Fn(&[f64]) -> f64, caps: &[f64], mut x: Vec<f64>, mut fx: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let k = x.len();
    let mut y = x.clone();
    for _ in 0..sweeps {
        let before = fx;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                // Move s ≥ 0 from j to i.
                let hi = x[j].min(caps[i] - x[i]);
                if hi <= 0.0 {
                    continue;
                }
                let (s, v) = golden_max(
                    |s| {
                        y.copy_from_slice(&x);
                        y[i] += s;
                        y[j] = (x[j] - s).max(0.0);
                        phi(&y)
                    },
                    0.0,
                    hi,
                    60,
                );
                if v > fx {
                    x[i] += s;
                    x[j] = (x[j] - s).max(0.0);
                    fx = v;
                }
            }
        }
        if !(fx - before > 1e-15 * (1.0 + fx.abs())) {
            break;
        }
    }
    (x, fx)
}

fn capped_probe_gap(phi: &dyn Fn(&[f64]) -> f64, caps: &[f64], x: &[f64], fx: f64) -> f64 {
    if !fx.is_finite() {
        return f64::INFINITY;
    }
    let k = x.len();
    let mut y = x.to_vec();
    let mut gap: f64 = 0.0;
    for &h in &[1e-3, 1e-5, 1e-7] {
        for i in 0..k {
            for j in 0..k {
                if i == j || x[j] < h || x[i] + h > caps[i] {
                    continue;
                }
                y.copy_from_slice(x);
                y[i] += h;
                y[j] -= h;
                gap = gap.max(sanitize(phi(&y)) - fx);
            }
        }
    }
    gap.max(0.0)
}

/// Options for [`projected_subgradient`].
#[derive(Debug, Clone, Copy)]
pub struct SubgradientOptions {
    pub starts: usize,
    pub iters: usize,
    pub radius: f64,
    pub seed: u64,
}

impl SubgradientOptions {
    /// Defaults for a k-class problem: 4 starts, 5000 iterations, radius 10k.
    pub fn for_k(k: usize) -> Self {
        Self { starts: 4, iters: 5000, radius: 10.0 * k as f64, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SubgradientResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Certified lower bound on the minimum over the feasible set within the
    /// solver ball (−∞ when none is available).
    pub lower_bound: f64,
}

/// Minimize a convex function given by `oracle(x) -> (f(x), g ∈ ∂f(x))`
/// over a convex set given by its Euclidean projection `project`.
///
/// `sum_zero` marks feasible sets inside {1ᵀx = 0}; it sharpens the
/// lower bound f(x) − gᵀx − R‖Pg‖ collected along the iterates.
pub fn projected_subgradient(
    oracle: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    project: &dyn Fn(&mut [f64]),
    dim: usize,
    seeds: &[Vec<f64>],
    sum_zero: bool,
    opts: SubgradientOptions,
) -> SubgradientResult {
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    starts.extend(seeds.iter().cloned());
    for s in 0..opts.starts.saturating_sub(1) {
        let mut r = rng::stream(opts.seed, s as u64);
        let scale = opts.radius / 10.0;
        starts.push((0..dim).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect());
    }

    let mut best = SubgradientResult { x: vec![0.0; dim], value: f64::INFINITY, lower_bound: f64::NEG_INFINITY };
    for start in starts {
        let mut x = start;
        project(&mut x);
        let mut fx_best = f64::INFINITY;
        let mut x_best = x.clone();
        for t in 0..opts.iters {
            let (fx, mut g) = oracle(&x);
            if fx < fx_best {
                fx_best = fx;
                x_best.copy_from_slice(&x);
            }
            if sum_zero {
                let mean = g.iter().sum::<f64>() / dim as f64;
                g.iter_mut().for_each(|v| *v -= mean);
            }
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if fx.is_finite() {
                let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
                let lb = fx - gx - opts.radius * gnorm;
                if lb > best.lower_bound {
                    best.lower_bound = lb;
                }
            }
            if gnorm == 0.0 || !fx.is_finite() {
                if gnorm == 0.0 && fx.is_finite() {
                    best.lower_bound = best.lower_bound.max(fx);
                }
                break;
            }
            let step = (opts.radius / 10.0) / ((t + 1) as f64).sqrt() / gnorm;
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= step * gi;
            }
            project(&mut x);
        }
        if fx_best < best.value {
            best.value = fx_best;
            best.x = x_best;
        }
    }
    best
}

/// Project onto {1ᵀx = 0} ∩ {‖x‖ ≤ radius}.
pub fn project_sum_zero_ball(x: &mut [f64], radius: f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    scale_into_ball(x, radius);
}

/// Shrink toward the origin into the ball of the given radius.
pub fn scale_into_ball(x: &mut [f64], radius: f64) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > radius {
        x.iter_mut().for_each(|v| *v *= radius / n);
    }
}

/// Project onto the cone {x_i ≥ x_j for all j}.
///
/// The projection keeps entries below a level τ and clips those above it,
/// with τ solving (τ − x_i) = Σ_{j≠i} (x_j − τ)₊.
pub fn project_max_cone(x: &mut [f64], i: usize) {
    let xi = x[i];
    let mut others: Vec<f64> = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
    others.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if others.first().is_none_or(|&top| top <= xi) {
        return;
    }
    // With the top t others clipped, τ = (x_i + Σ_top) / (t + 1).
    let mut sum = xi;
    let mut tau = xi;
    for (t, &v) in others.iter().enumerate() {
        sum += v;
        let cand = sum / (t + 2) as f64;
        let next = others.get(t + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if next <= cand {
            tau = cand;
            break;
        }
    }
    for (j, v) in x.iter_mut().enumerate() {
        if j == i {
            *v = tau;
        } else if *v > tau {
            *v = tau;
        }
    }
}

/// Stable log Σ e^{x_j}.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of x.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_and_boundary_maxima() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 80);
        assert!((x - 0.3).abs() < 1e-8 && v.abs() < 1e-15);
        let (x, _) = golden_max(|x| x, 0.0, 2.0, 10);
        assert_eq!(x, 2.0);
    }

    #[test]
    fn simplex_max_of_entropy_is_uniform() {
        let h = |p: &[f64]| -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>();
        let r = maximize_concave_on_simplex(&h, 3);
        assert!((r.value - 3f64.ln()).abs() < 1e-12, "{}", r.value);
        assert!(!r.approximate);
    }

    #[test]
    fn simplex_max_of_kinked_function() {
        // 1 − max π + πᵀα at α = (0.2, 0, 0): maximizer ties the top two.
        let f = |p: &[f64]| p[0] * 0.2 + 1.0 - p.iter().cloned().fold(f64::MIN, f64::max);
        let r = maximize_concave_on_simplex(&f, 3);
        // 1 + max{0.2 − 1, 0.1 − 1/2, 0.2/3 − 1/3} = 11/15
        assert!((r.value - 11.0 / 15.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn capped_max_respects_caps() {
        let f = |p: &[f64]| 1.0 - p.iter().cloned().fold(f64::MIN, f64::max);
        let r = maximize_concave_on_capped_simplex(&f, &[0.5, 0.3, f64::INFINITY]);
        assert!((r.value - 0.65).abs() < 1e-9, "{}", r.value);
        assert!(r.point[1] <= 0.3 + 1e-15);
        let h = |p: &[f64]| -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>();
        let caps = [0.1, 0.1, 0.1, 0.1, f64::INFINITY];
        let r = maximize_concave_on_capped_simplex(&h, &caps);
        let want = -(4.0 * 0.1 * 0.1f64.ln() + 0.6 * 0.6f64.ln());
        assert!((r.value - want).abs() < 1e-9, "{} vs {want}", r.value);
    }

    #[test]
    fn cone_projection_examples() {
        let mut x = vec![0.0, 1.0, 0.0];
        project_max_cone(&mut x, 0);
        assert_eq!(x, vec![0.5, 0.5, 0.0]);
        let mut x = vec![0.0, 3.0, 2.0];
        project_max_cone(&mut x, 0);
        let tau = 5.0 / 3.0;
        assert!(x.iter().all(|&v| (v - tau).abs() < 1e-15));
        let mut x = vec![2.0, 1.0, 0.0];
        project_max_cone(&mut x, 0);
        assert_eq!(x, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn subgradient_minimizes_abs_sum() {
        let oracle = |x: &[f64]| {
            let f = (x[0] - 1.0).abs() + (x[1] + 1.0).abs();
            (f, vec![(x[0] - 1.0).signum(), (x[1] + 1.0).signum()])
        };
        let r = projected_subgradient(&oracle, &|x| scale_into_ball(x, 10.0), 2, &[], false, SubgradientOptions::for_k(2));
        assert!(r.value < 1e-2);
        assert!(r.lower_bound <= r.value);
    }
}

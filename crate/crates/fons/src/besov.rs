//! Increment statistics: L^p increment norms, sampled Besov seminorms,
//! structure functions, the β-model predictions, and the effective-exponent
//! classifier that stands in for the Constantin–E–Titi criterion.

use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ScalingFit};
use crate::grid::{integrate, shift, Field, LatticeVector, PeriodicGrid, TimeField, MAX_DIM};
use crate::numeric::CompensatedSum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::io::Write;

/// Sampled lattice directions: the d axis vectors plus seeded random
/// integer vectors. A rung ℓ maps to the lattice step round(ℓn/|w|)·w,
/// so the realized |h| tracks ℓ as closely as the lattice allows.
#[derive(Clone, Debug)]
pub struct DirectionSet {
    dirs: Vec<[i64; MAX_DIM]>,
    d: usize,
}

impl DirectionSet {
    /// Axis directions only.
    pub fn axes(grid: &PeriodicGrid) -> Self {
        let d = grid.d();
        let mut dirs = Vec::with_capacity(d);
        for a in 0..d {
            let mut w = [0i64; MAX_DIM];
            w[a] = 1;
            dirs.push(w);
        }
        Self { dirs, d }
    }

    /// Axis directions plus `extra` distinct random vectors with entries in
    /// {-2,...,2}, excluding anything collinear with what is already there.
    pub fn with_random(grid: &PeriodicGrid, extra: usize, seed: u64) -> Self {
        let mut out = Self::axes(grid);
        if grid.d() == 1 || extra == 0 {
            // On the circle every direction is the axis.
            return out;
        }
        let d = grid.d();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut guard = 0;
        while out.dirs.len() < d + extra && guard < 1000 {
            guard += 1;
            let mut w = [0i64; MAX_DIM];
            for slot in w.iter_mut().take(d) {
                *slot = rng.gen_range(-2i64..=2);
            }
            if w.iter().all(|&x| x == 0) {
                continue;
            }
            let collinear = out.dirs.iter().any(|&u| {
                // u and w collinear iff all 2x2 minors vanish.
                (0..d).all(|i| {
                    (0..d).all(|j| u[i] * w[j] == u[j] * w[i])
                })
            });
            if !collinear {
                out.dirs.push(w);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64; MAX_DIM]> {
        self.dirs.iter()
    }

    /// Lattice step realizing scale ℓ along direction `w`, or None when the
    /// rung rounds below one node.
    pub fn lattice_step(&self, grid: &PeriodicGrid, w: &[i64; MAX_DIM], ell: f64) -> Option<LatticeVector> {
        let norm: f64 = (0..self.d).map(|a| (w[a] * w[a]) as f64).sum::<f64>().sqrt();
        let m = (ell * grid.n() as f64 / norm).round() as i64;
        if m == 0 {
            return None;
        }
        let steps: Vec<i64> = (0..self.d).map(|a| m * w[a]).collect();
        LatticeVector::from_steps(grid, &steps).ok()
    }
}

/// v(x+h) - v(x), componentwise.
fn increments(f: &Field, h: &LatticeVector) -> Result<Field> {
    let mut s = shift(f, h)?;
    for (o, &v) in s.samples_mut().iter_mut().zip(f.samples()) {
        *o -= v;
    }
    Ok(s)
}

/// L^p norm of the increment v(x+h) - v(x). The zero shift is allowed and
/// gives 0.
pub fn increment_norm(f: &Field, h: &LatticeVector, p: f64) -> Result<f64> {
    if h.is_zero() {
        return Ok(0.0);
    }
    integrate(&increments(f, h)?, p)
}

/// Mean over nodes of |increment|^p (the p-th moment, not the norm).
fn increment_moment(inc: &Field, p: f64) -> f64 {
    let count = inc.grid().node_count();
    let mut acc = CompensatedSum::new();
    for node in 0..count {
        let m = inc.magnitude(node);
        acc.add(if p == 2.0 {
            m * m
        } else if p == 3.0 {
            m * m * m
        } else {
            m.powf(p)
        });
    }
    acc.value() / count as f64
}

/// One rung of a seminorm ladder: the nominal scale, the realized lattice
/// magnitude, the maximizing direction, and the max ratio there.
#[derive(Clone, Debug, Serialize)]
pub struct RungMax {
    pub scale: f64,
    pub h_len: f64,
    pub steps: Vec<i64>,
    pub value: f64,
}

/// Sampled Besov seminorm sup_h ||f(net+h)-f||_p / |h|^θ over a dyadic ladder
/// and a direction set.
#[derive(Clone, Debug, Serialize)]
pub struct BesovSeminorm {
    pub theta: f64,
    pub p: f64,
    pub value: f64,
    pub maximizer: Option<RungMax>,
    pub per_rung: Vec<RungMax>,
}

/// Ratios use the realized lattice |h|, not the nominal rung. Ladder rungs
/// must lie in [1/n, 1/4].
pub fn besov_seminorm(
    f: &Field,
    theta: f64,
    p: f64,
    ladder: &[f64],
    dirs: &DirectionSet,
) -> Result<BesovSeminorm> {
    if ladder.is_empty() {
        return Err(Error::DegenerateLadder("empty ladder".into()));
    }
    let grid = f.grid();
    let h0 = grid.spacing();
    for &ell in ladder {
        if !(ell >= h0 * (1.0 - 1e-9) && ell <= 0.25 * (1.0 + 1e-9)) {
            return Err(Error::DegenerateLadder(format!(
                "rung {ell} outside [1/n, 1/4]"
            )));
        }
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0,1], got {theta}"
        )));
    }
    let mut per_rung: Vec<RungMax> = Vec::with_capacity(ladder.len());
    for &ell in ladder {
        let mut best: Option<RungMax> = None;
        for w in dirs.iter() {
            let Some(h) = dirs.lattice_step(grid, w, ell) else {
                continue;
            };
            let len = h.length(grid);
            let ratio = increment_norm(f, &h, p)? / len.powf(theta);
            if best.as_ref().map_or(true, |b| ratio > b.value) {
                best = Some(RungMax {
                    scale: ell,
                    h_len: len,
                    steps: h.steps().to_vec(),
                    value: ratio,
                });
            }
        }
        if let Some(b) = best {
            per_rung.push(b);
        }
    }
    if per_rung.is_empty() {
        return Err(Error::DegenerateLadder(
            "no ladder rung is representable on the lattice".into(),
        ));
    }
    let maximizer = per_rung
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .cloned();
    Ok(BesovSeminorm {
        theta,
        p,
        value: maximizer.as_ref().map_or(0.0, |m| m.value),
        maximizer,
        per_rung,
    })
}

/// Structure functions S_p(ℓ) averaged over space, sampled directions, and
/// time slices.
#[derive(Clone, Debug, Serialize)]
pub struct StructureTable {
    pub scales: Vec<f64>,
    pub orders: Vec<f64>,
    /// values[pi][li] = S_{orders[pi]}(scales[li])
    pub values: Vec<Vec<f64>>,
    pub direction_count: usize,
    pub slice_count: usize,
}

impl StructureTable {
    /// One row per (p, ℓ): `p,scale,value`.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p,scale,value")?;
        for (pi, &p) in self.orders.iter().enumerate() {
            for (li, &ell) in self.scales.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    crate::numeric::fmt_g17(p),
                    crate::numeric::fmt_g17(ell),
                    crate::numeric::fmt_g17(self.values[pi][li])
                )?;
            }
        }
        Ok(())
    }

    /// Scaling fit of S_p(ℓ) against ℓ for one order.
    pub fn fit_order(&self, pi: usize) -> Result<ScalingFit> {
        let pts: Vec<(f64, f64)> = self
            .scales
            .iter()
            .zip(&self.values[pi])
            .map(|(&x, &y)| (x, y))
            .collect();
        fit_exponent(&pts)
    }
}

/// S_p(ℓ) = ⟨|v(x+ℓe) - v(x)|^p⟩. Every computed table is checked against
/// the power-mean inequality: S_p(ℓ)^{1/p} non-decreasing in p.
pub fn structure_function(
    v: &TimeField,
    ladder: &[f64],
    orders: &[f64],
    extra_directions: usize,
    seed: u64,
) -> Result<StructureTable> {
    let grid = v.grid();
    if ladder.is_empty() {
        return Err(Error::DegenerateLadder("empty ladder".into()));
    }
    for &ell in ladder {
        let nodes = ell * grid.n() as f64;
        if nodes < 1.0 - 1e-9 {
            return Err(Error::DegenerateLadder(format!(
                "rung {ell} is below one node"
            )));
        }
    }
    if orders.is_empty() {
        return Err(Error::InvalidParameter("need at least one order p".into()));
    }
    for &p in orders {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("order p={p} must be >= 1")));
        }
    }
    let dirs = DirectionSet::with_random(grid, extra_directions, seed);
    let mut sums = vec![vec![CompensatedSum::new(); ladder.len()]; orders.len()];
    let mut counts = vec![0usize; ladder.len()];
    for slice in v.slices() {
        for (li, &ell) in ladder.iter().enumerate() {
            for w in dirs.iter() {
                let Some(h) = dirs.lattice_step(grid, w, ell) else {
                    continue;
                };
                let inc = increments(slice, &h)?;
                for (pi, &p) in orders.iter().enumerate() {
                    sums[pi][li].add(increment_moment(&inc, p));
                }
                counts[li] += 1;
            }
        }
    }
    let mut values = vec![vec![0.0f64; ladder.len()]; orders.len()];
    for pi in 0..orders.len() {
        for li in 0..ladder.len() {
            if counts[li] == 0 {
                return Err(Error::DegenerateLadder(format!(
                    "rung {} has no representable direction",
                    ladder[li]
                )));
            }
            values[pi][li] = sums[pi][li].value() / counts[li] as f64;
        }
    }
    let table = StructureTable {
        scales: ladder.to_vec(),
        orders: orders.to_vec(),
        values,
        direction_count: dirs.len(),
        slice_count: v.slices().len(),
    };
    assert_power_mean_monotonicity(&table)?;
    Ok(table)
}

fn assert_power_mean_monotonicity(t: &StructureTable) -> Result<()> {
    let mut order_idx: Vec<usize> = (0..t.orders.len()).collect();
    order_idx.sort_by(|&a, &b| t.orders[a].total_cmp(&t.orders[b]));
    for li in 0..t.scales.len() {
        for pair in order_idx.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let lo = t.values[a][li].powf(1.0 / t.orders[a]);
            let hi = t.values[b][li].powf(1.0 / t.orders[b]);
            if lo > hi * (1.0 + 1e-9) + 1e-300 {
                return Err(Error::InvalidField(format!(
                    "power-mean monotonicity violated at scale {}: S_{}^(1/p) = {lo} > {hi}",
                    t.scales[li], t.orders[a]
                )));
            }
        }
    }
    Ok(())
}

/// β-model structure-function exponent ζ*_p = 3 - γ + (p/3)(γ - 2).
///
/// Evaluated in the factored form (3-γ)(1-p/3) + p/3 so the 4/5-law value
/// ζ*_3 = 1 and the K41 limit ζ*_p(γ=3) = p/3 are exact in f64. Stated for
/// d = 3 only.
pub fn beta_model_zeta(gamma: f64, p: f64, d: usize) -> Result<f64> {
    if d != 3 {
        return Err(Error::BetaModelDimension(d));
    }
    if !(0.0..=3.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [0,3], got {gamma}"
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    Ok((3.0 - gamma) * (1.0 - p / 3.0) + p / 3.0)
}

/// Hölder exponent of a typical β-model increment, θ = (γ-2)/3.
pub fn beta_model_holder(gamma: f64) -> Result<f64> {
    if !(2.0..=3.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in [2,3], got {gamma}"
        )));
    }
    Ok((gamma - 2.0) / 3.0)
}

/// The sharp dimension γ = 2 + 3θ; inverse of `beta_model_holder`.
pub fn sharp_gamma(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0, 1/3), got {theta}"
        )));
    }
    Ok(2.0 + 3.0 * theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityVerdict {
    Conservative,
    NonConservative,
    Inconclusive,
}

/// The classifier: fitted exponent of the time-integrated cubed increment
/// against |h|, with the conservative verdict at exponent > 1 + margin.
#[derive(Clone, Debug, Serialize)]
pub struct EffectiveExponent {
    pub fit: ScalingFit,
    pub verdict: RegularityVerdict,
    /// 3x the fit's slope standard error.
    pub margin: f64,
    /// (realized |h|, time-integrated worst-direction cubed increment).
    pub points: Vec<(f64, f64)>,
}

/// Surrogate for membership in L³((0,T); B^{1/3+}_{3,∞}): per rung, take the
/// worst direction's ∫ Σ_t ||v(·+h)-v||_p^p Δt, fit against |h|, and compare
/// the exponent to 1. The verdict is meaningful at p = 3, where exponent
/// 1 + α with α > 0 is the conservative regime.
pub fn effective_exponent(
    v: &TimeField,
    p: f64,
    ladder: &[f64],
    dirs: &DirectionSet,
) -> Result<EffectiveExponent> {
    let grid = v.grid();
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    let dt = v.dt();
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(ladder.len());
    for &ell in ladder {
        let mut best: Option<(f64, f64)> = None;
        for w in dirs.iter() {
            let Some(h) = dirs.lattice_step(grid, w, ell) else {
                continue;
            };
            let len = h.length(grid);
            let mut acc = CompensatedSum::new();
            for slice in v.slices() {
                let inc = increments(slice, &h)?;
                acc.add(increment_moment(&inc, p));
            }
            let integral = acc.value() * dt;
            if best.map_or(true, |(_, y)| integral > y) {
                best = Some((len, integral));
            }
        }
        if let Some(pt) = best {
            points.push(pt);
        }
    }
    let fit = fit_exponent(&points)?;
    let margin = 3.0 * fit.std_error;
    let verdict = if fit.exponent > 1.0 + margin {
        RegularityVerdict::Conservative
    } else if fit.exponent < 1.0 - margin {
        RegularityVerdict::NonConservative
    } else {
        RegularityVerdict::Inconclusive
    };
    Ok(EffectiveExponent {
        fit,
        verdict,
        margin,
        points,
    })
}

/// Per-slice Hölder estimate: fit of the max-over-directions sup-norm
/// increment against |h|.
pub fn holder_exponent_fit(f: &Field, ladder: &[f64], dirs: &DirectionSet) -> Result<ScalingFit> {
    let grid = f.grid();
    let mut pts = Vec::with_capacity(ladder.len());
    for &ell in ladder {
        let mut best: Option<(f64, f64)> = None;
        for w in dirs.iter() {
            let Some(h) = dirs.lattice_step(grid, w, ell) else {
                continue;
            };
            let len = h.length(grid);
            let val = increment_norm(f, &h, f64::INFINITY)?;
            if best.map_or(true, |(_, y)| val > y) {
                best = Some((len, val));
            }
        }
        if let Some(pt) = best {
            pts.push(pt);
        }
    }
    fit_exponent(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::dyadic_ladder;
    use std::f64::consts::TAU;

    fn grid(d: usize, n: usize) -> PeriodicGrid {
        PeriodicGrid::new(d, n).unwrap()
    }

    #[test]
    fn increment_norm_examples() {
        let g = grid(1, 256);
        let c = Field::from_fn(g, 1, |_, _| 4.2).unwrap();
        let h = LatticeVector::from_steps(&g, &[32]).unwrap();
        assert_eq!(increment_norm(&c, &h, 2.0).unwrap(), 0.0);

        // sin(2pi(x+1/2)) - sin(2pi x) = -2 sin(2pi x).
        let f = Field::from_fn(g, 1, |x, _| (TAU * x[0]).sin()).unwrap();
        let half = LatticeVector::from_steps(&g, &[128]).unwrap();
        let got = increment_norm(&f, &half, 2.0).unwrap();
        assert!((got - (2f64).sqrt()).abs() < 1e-6, "{got}");

        // Half-torus indicator jumps at two nodes.
        let ind = Field::from_fn(g, 1, |x, _| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let one = LatticeVector::from_steps(&g, &[1]).unwrap();
        assert!((increment_norm(&ind, &one, 1.0).unwrap() - 2.0 / 256.0).abs() < 1e-15);

        // Zero shift allowed.
        let zero = LatticeVector::from_steps(&g, &[0]).unwrap();
        assert_eq!(increment_norm(&f, &zero, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn increment_norm_triangle_bound() {
        let g = grid(2, 32);
        let f = Field::from_fn(g, 2, |x, c| {
            ((x[0] * 3.0 + x[1]) * 5.0 + c as f64).sin()
        })
        .unwrap();
        let bound = 2.0 * integrate(&f, 3.0).unwrap();
        for steps in [[1i64, 0], [5, 9], [16, 16], [-3, 7]] {
            let h = LatticeVector::from_steps(&g, &steps).unwrap();
            assert!(increment_norm(&f, &h, 3.0).unwrap() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn seminorm_of_constant_is_zero() {
        let g = grid(1, 64);
        let c = Field::from_fn(g, 1, |_, _| -7.0).unwrap();
        let dirs = DirectionSet::axes(&g);
        let s = besov_seminorm(&c, 0.3, 3.0, &dyadic_ladder(2, 5), &dirs).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn smooth_field_maximizer_at_largest_rung() {
        let g = grid(1, 512);
        let f = Field::from_fn(g, 1, |x, _| (TAU * x[0]).sin()).unwrap();
        let dirs = DirectionSet::axes(&g);
        let s = besov_seminorm(&f, 0.3, 2.0, &dyadic_ladder(2, 7), &dirs).unwrap();
        let m = s.maximizer.unwrap();
        assert_eq!(m.scale, 0.25, "smooth ratio ~ |h|^(1-theta) peaks at the top rung");
    }

    #[test]
    fn seminorm_monotone_nondecreasing_in_theta() {
        // All rungs are <= 1/4 < 1, so dividing by |h|^theta grows with theta.
        let g = grid(1, 1024);
        let f = Field::from_fn(g, 1, |x, _| {
            (TAU * x[0]).sin() + 0.3 * (TAU * 9.0 * x[0]).cos()
        })
        .unwrap();
        let dirs = DirectionSet::axes(&g);
        let ladder = dyadic_ladder(2, 8);
        let mut last = 0.0;
        for i in 0..=10 {
            let theta = i as f64 * 0.1;
            let s = besov_seminorm(&f, theta, 3.0, &ladder, &dirs).unwrap();
            assert!(
                s.value >= last * (1.0 - 1e-12),
                "theta={theta}: {} < {last}",
                s.value
            );
            last = s.value;
        }
    }

    fn lacunary(g: PeriodicGrid, theta: f64, levels: u32) -> Field {
        Field::from_fn(g, 1, |x, _| {
            (0..=levels)
                .map(|j| {
                    let f = (2f64).powi(j as i32);
                    f.powf(-theta) * (TAU * f * x[0] + 0.7 * j as f64).sin()
                })
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn seminorm_detects_excess_theta_as_growth() {
        // For theta above the field's exponent the per-rung ratios grow as
        // the rung shrinks, like |h|^(theta0 - theta); at or below theta0
        // they stay bounded.
        let g = grid(1, 4096);
        let theta0 = 0.25;
        let f = lacunary(g, theta0, 9);
        let dirs = DirectionSet::axes(&g);
        let ladder = dyadic_ladder(2, 9);

        let probe = |theta: f64| {
            let s = besov_seminorm(&f, theta, 3.0, &ladder, &dirs).unwrap();
            let pts: Vec<(f64, f64)> = s.per_rung.iter().map(|r| (r.h_len, r.value)).collect();
            fit_exponent(&pts).unwrap().exponent
        };
        let at_theta0 = probe(theta0);
        let above = probe(0.8);
        assert!(at_theta0.abs() < 0.12, "bounded ladder at theta0, slope {at_theta0}");
        assert!(
            above < -(0.8 - theta0) + 0.15,
            "ratios must blow up like |h|^(theta0-theta), slope {above}"
        );
    }

    #[test]
    fn structure_function_single_mode_closed_form() {
        let g = grid(1, 512);
        let f = Field::from_fn(g, 1, |x, _| (TAU * x[0]).sin()).unwrap();
        let v = TimeField::new(vec![f], 1.0).unwrap();
        let ladder = dyadic_ladder(2, 6);
        let t = structure_function(&v, &ladder, &[2.0], 0, 1).unwrap();
        for (li, &ell) in t.scales.iter().enumerate() {
            let want = 2.0 * (std::f64::consts::PI * ell).sin().powi(2);
            assert!(
                (t.values[0][li] - want).abs() < 1e-9,
                "S_2({ell}) = {} want {want}",
                t.values[0][li]
            );
        }
    }

    #[test]
    fn structure_function_constant_field_is_zero() {
        let g = grid(2, 32);
        let f = Field::from_fn(g, 2, |_, c| c as f64).unwrap();
        let v = TimeField::new(vec![f.clone(), f], 1.0).unwrap();
        let t = structure_function(&v, &dyadic_ladder(2, 4), &[1.0, 2.0, 3.0], 2, 9).unwrap();
        assert!(t.values.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(t.slice_count, 2);
        assert!(t.direction_count >= 2);
    }

    #[test]
    fn structure_function_smooth_scaling() {
        let g = grid(1, 2048);
        let f = Field::from_fn(g, 1, |x, _| (TAU * x[0]).sin()).unwrap();
        let v = TimeField::new(vec![f], 1.0).unwrap();
        let t = structure_function(&v, &dyadic_ladder(5, 9), &[1.0, 2.0, 3.0], 0, 1).unwrap();
        for (pi, &p) in t.orders.iter().enumerate() {
            let fit = t.fit_order(pi).unwrap();
            assert!(
                (fit.exponent - p).abs() < 0.1,
                "zeta_{p} = {} for a smooth field",
                fit.exponent
            );
        }
    }

    #[test]
    fn structure_function_lacunary_scaling() {
        let g = grid(1, 8192);
        let theta = 0.25;
        let f = lacunary(g, theta, 11);
        let v = TimeField::new(vec![f], 1.0).unwrap();
        let t = structure_function(&v, &dyadic_ladder(3, 9), &[1.0, 2.0, 3.0], 0, 1).unwrap();
        for (pi, &p) in t.orders.iter().enumerate() {
            let fit = t.fit_order(pi).unwrap();
            assert!(
                (fit.exponent - p * theta).abs() < 0.1,
                "zeta_{p} = {} want {}",
                fit.exponent,
                p * theta
            );
        }
    }

    #[test]
    fn structure_table_csv_shape() {
        let g = grid(1, 64);
        let f = Field::from_fn(g, 1, |x, _| x[0]).unwrap();
        let v = TimeField::new(vec![f], 1.0).unwrap();
        let t = structure_function(&v, &[0.25, 0.125], &[1.0, 3.0], 0, 1).unwrap();
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.starts_with("p,scale,value\n"));
    }

    #[test]
    fn beta_model_fourth_fifth_law_is_exact() {
        for i in 0..=1000 {
            let gamma = 2.0 + i as f64 / 1000.0;
            assert_eq!(beta_model_zeta(gamma, 3.0, 3).unwrap(), 1.0, "gamma={gamma}");
        }
    }

    #[test]
    fn beta_model_values() {
        // K41 recovery at gamma = 3.
        for p in [1.0, 2.0, 3.0, 6.0, 9.0] {
            assert_eq!(beta_model_zeta(3.0, p, 3).unwrap(), p / 3.0);
        }
        assert!((beta_model_zeta(2.5, 6.0, 3).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            beta_model_zeta(2.5, 2.0, 2),
            Err(Error::BetaModelDimension(2))
        ));
        assert!(beta_model_zeta(3.5, 2.0, 3).is_err());
    }

    #[test]
    fn holder_and_sharp_gamma_inverse() {
        assert!((sharp_gamma(0.2).unwrap() - 2.6).abs() < 1e-15);
        assert!((beta_model_holder(3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        for i in 1..100 {
            let gamma = 2.0 + i as f64 / 100.0;
            let round = sharp_gamma(beta_model_holder(gamma).unwrap()).unwrap();
            assert!((round - gamma).abs() < 1e-15);
        }
        assert!(beta_model_holder(1.9).is_err());
        assert!(sharp_gamma(0.4).is_err());
        assert!(sharp_gamma(0.0).is_err());
    }

    #[test]
    fn effective_exponent_smooth_is_conservative() {
        let g = grid(1, 2048);
        let f = Field::from_fn(g, 1, |x, _| (TAU * x[0]).sin()).unwrap();
        let v = TimeField::new(vec![f.clone(), f], 0.5).unwrap();
        let dirs = DirectionSet::axes(&g);
        let e = effective_exponent(&v, 3.0, &dyadic_ladder(4, 9), &dirs).unwrap();
        assert!((e.fit.exponent - 3.0).abs() < 0.15, "{}", e.fit.exponent);
        assert_eq!(e.verdict, RegularityVerdict::Conservative);
    }

    #[test]
    fn effective_exponent_lacunary_is_nonconservative() {
        let g = grid(1, 8192);
        let f = lacunary(g, 0.25, 11);
        let v = TimeField::new(vec![f], 1.0).unwrap();
        let dirs = DirectionSet::axes(&g);
        let e = effective_exponent(&v, 3.0, &dyadic_ladder(3, 9), &dirs).unwrap();
        assert!(
            (e.fit.exponent - 0.75).abs() < 0.1,
            "3 theta = 0.75, got {}",
            e.fit.exponent
        );
        assert_eq!(e.verdict, RegularityVerdict::NonConservative);
    }

    #[test]
    fn holder_fit_recovers_lacunary_exponent() {
        let g = grid(1, 8192);
        let f = lacunary(g, 0.25, 11);
        let dirs = DirectionSet::axes(&g);
        let fit = holder_exponent_fit(&f, &dyadic_ladder(3, 9), &dirs).unwrap();
        assert!((fit.exponent - 0.25).abs() < 0.05, "{}", fit.exponent);
    }

    #[test]
    fn direction_set_shapes() {
        let g1 = grid(1, 64);
        assert_eq!(DirectionSet::with_random(&g1, 5, 3).len(), 1);
        let g2 = grid(2, 64);
        let ds = DirectionSet::with_random(&g2, 3, 3);
        assert_eq!(ds.len(), 5);
        // No two directions collinear.
        let dirs: Vec<_> = ds.iter().collect();
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                let (u, w) = (dirs[i], dirs[j]);
                let collinear = (0..2).all(|a| (0..2).all(|b| u[a] * w[b] == u[b] * w[a]));
                assert!(!collinear, "{u:?} {w:?}");
            }
        }
        // Rung below one node unrepresentable, then skipped.
        assert!(ds.lattice_step(&g2, &[1, 0, 0], 0.001).is_none());
    }
}

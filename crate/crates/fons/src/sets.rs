//! Singular sets on the torus: generators, exact periodic distance fields,
//! neighborhood volumes, and Minkowski dimension estimates.
//!
//! Sets live at grid resolution as node masks. A truncated fractal at depth
//! k is the honest object at resolution n; every downstream quantity
//! (distances, volumes, split integrals) is a functional of the mask.

use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ScalingFit};
use crate::grid::{Field, PeriodicGrid, MAX_DIM};
use once_cell::sync::OnceCell;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;
use std::sync::Arc;

/// JSON descriptor {kind, parameters, seed} recording how a set was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTag {
    pub kind: String,
    pub parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GeneratorTag {
    fn new(kind: &str, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            kind: kind.to_string(),
            parameters,
            seed,
        }
    }
}

/// Per-axis factor of a product set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisKind {
    /// The whole circle along this axis.
    Full,
    /// The single coordinate 0.
    Point,
    /// Depth-truncated Cantor set: remove the middle `removed` fraction,
    /// keep two side intervals of ratio r_c = (1 - removed)/2, recurse.
    Cantor { removed: f64, depth: u32 },
}

impl AxisKind {
    fn dimension(&self) -> f64 {
        match self {
            AxisKind::Full => 1.0,
            AxisKind::Point => 0.0,
            // Depth 0 removes nothing: the factor is the whole circle.
            AxisKind::Cantor { depth: 0, .. } => 1.0,
            AxisKind::Cantor { removed, .. } => {
                let rc = (1.0 - removed) / 2.0;
                (2f64).ln() / (1.0 / rc).ln()
            }
        }
    }
}

/// Node mask for a closed set S at grid resolution, with its construction
/// descriptor and, where known, the analytic dimension for oracle checks.
#[derive(Clone, Debug)]
pub struct SingularSet {
    grid: PeriodicGrid,
    mask: Vec<bool>,
    tag: GeneratorTag,
    analytic_dim: Option<f64>,
    dist: OnceCell<DistanceField>,
}

impl SingularSet {
    pub fn from_mask(
        grid: PeriodicGrid,
        mask: Vec<bool>,
        tag: GeneratorTag,
        analytic_dim: Option<f64>,
    ) -> Result<Self> {
        if mask.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries for {} nodes",
                mask.len(),
                grid.node_count()
            )));
        }
        Ok(Self {
            grid,
            mask,
            tag,
            analytic_dim,
            dist: OnceCell::new(),
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.mask
    }

    pub fn occupied_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn tag(&self) -> &GeneratorTag {
        &self.tag
    }

    pub fn analytic_dim(&self) -> Option<f64> {
        self.analytic_dim
    }

    /// Occupancy as a 0/1 scalar field, for the binary container.
    pub fn to_field(&self) -> Field {
        let samples = self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Field::from_samples(self.grid, 1, samples).expect("mask length matches grid")
    }

    /// Reinterpret a 0/1 scalar field as a set mask (values > 0.5 occupied).
    pub fn from_field(f: &Field) -> Result<Self> {
        if f.components() != 1 {
            return Err(Error::InvalidParameter(
                "set mask must be a scalar field".into(),
            ));
        }
        let mask = f.samples().iter().map(|&v| v > 0.5).collect();
        Self::from_mask(
            *f.grid(),
            mask,
            GeneratorTag::new("imported", json!({}), None),
            None,
        )
    }

    /// Exact periodic distance field, computed once and cached.
    /// Errors on the empty set; callers implement the dist = 1 convention.
    pub fn distance_field(&self) -> Result<&DistanceField> {
        if self.is_empty() {
            return Err(Error::EmptySetDistance);
        }
        Ok(self
            .dist
            .get_or_init(|| DistanceField::compute(&self.grid, &self.mask)))
    }
}

/// Family {S_t}: members tagged by time index, piecewise constant between
/// tagged indices. At most one member per index; all on one grid.
#[derive(Clone, Debug)]
pub struct SingularSetFamily {
    members: Vec<(usize, Arc<SingularSet>)>,
    horizon: f64,
}

impl SingularSetFamily {
    pub fn new(members: Vec<(usize, SingularSet)>, horizon: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("family needs at least one member".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let grid = *members[0].1.grid();
        let mut seen = BTreeSet::new();
        let mut out: Vec<(usize, Arc<SingularSet>)> = members
            .into_iter()
            .map(|(k, s)| (k, Arc::new(s)))
            .collect();
        out.sort_by_key(|(k, _)| *k);
        for (k, s) in &out {
            if !seen.insert(*k) {
                return Err(Error::InvalidParameter(format!(
                    "family has two members at time index {k}"
                )));
            }
            if *s.grid() != grid {
                return Err(Error::InvalidGrid(
                    "family members must share one grid".into(),
                ));
            }
        }
        Ok(Self {
            members: out,
            horizon,
        })
    }

    /// Single set held at every time.
    pub fn constant(set: SingularSet, horizon: f64) -> Result<Self> {
        Self::new(vec![(0, set)], horizon)
    }

    pub fn members(&self) -> &[(usize, Arc<SingularSet>)] {
        &self.members
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.members[0].1.grid()
    }

    /// The set governing slice k: the member with the largest time index
    /// <= k, or the earliest member when k precedes all of them.
    pub fn set_for_slice(&self, k: usize) -> &SingularSet {
        let mut best = &self.members[0].1;
        for (idx, s) in &self.members {
            if *idx <= k {
                best = s;
            } else {
                break;
            }
        }
        best
    }

    pub fn all_empty(&self) -> bool {
        self.members.iter().all(|(_, s)| s.is_empty())
    }
}

/// Families serialize as a summary (tags and counts), not raw masks; the
/// binary container carries the masks themselves.
impl Serialize for SingularSetFamily {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let members: Vec<serde_json::Value> = self
            .members
            .iter()
            .map(|(k, s)| {
                json!({
                    "time_index": k,
                    "generator": s.tag(),
                    "occupied": s.occupied_count(),
                    "analytic_dim": s.analytic_dim(),
                })
            })
            .collect();
        let mut st = ser.serialize_struct("SingularSetFamily", 2)?;
        st.serialize_field("horizon", &self.horizon)?;
        st.serialize_field("members", &members)?;
        st.end()
    }
}

/// Exact periodic Euclidean distance to the nearest occupied node.
#[derive(Clone, Debug)]
pub struct DistanceField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl DistanceField {
    fn compute(grid: &PeriodicGrid, mask: &[bool]) -> Self {
        let mut sq: Vec<f64> = mask
            .iter()
            .map(|&b| if b { 0.0 } else { f64::INFINITY })
            .collect();
        for axis in 0..grid.d() {
            edt_axis_pass(&mut sq, grid, axis);
        }
        let h = grid.spacing();
        let values = sq.iter().map(|&s| s.sqrt() * h).collect();
        Self { grid: *grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }
}

/// One separable pass of the Felzenszwalb-Huttenlocher transform along
/// `axis`, on squared distances in node units. Periodicity is handled by
/// unrolling one period on each side: parabola sites live at positions
/// 0..3n with values f[j mod n], and outputs are read at n..2n. The nearest
/// wrapped source is always within +-n of the query, so this is exact.
fn edt_axis_pass(vals: &mut [f64], grid: &PeriodicGrid, axis: usize) {
    let n = grid.n();
    let stride = grid.axis_stride(axis);
    let lines = grid.node_count() / n;
    let mut line = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    let mut sites: Vec<usize> = Vec::with_capacity(3 * n);
    let mut bounds: Vec<f64> = Vec::with_capacity(3 * n + 1);
    let block = stride * n;
    for l in 0..lines {
        let base = (l / stride) * block + (l % stride);
        for i in 0..n {
            line[i] = vals[base + i * stride];
        }
        edt_line_periodic(&line, &mut out, &mut sites, &mut bounds);
        for i in 0..n {
            vals[base + i * stride] = out[i];
        }
    }
}

fn edt_line_periodic(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    let n = f.len();
    sites.clear();
    bounds.clear();
    for j in 0..3 * n {
        let fj = f[j % n];
        if !fj.is_finite() {
            continue;
        }
        let jj = j as f64;
        loop {
            match sites.last() {
                None => {
                    sites.push(j);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pp = p as f64;
                    let fp = f[p % n];
                    let s = ((fj + jj * jj) - (fp + pp * pp)) / (2.0 * (jj - pp));
                    if s <= *bounds.last().unwrap() {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(j);
                        bounds.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    bounds.push(f64::INFINITY);
    let mut k = 0usize;
    for q in n..2 * n {
        let qq = q as f64;
        while bounds[k + 1] < qq {
            k += 1;
        }
        let p = sites[k];
        let dx = qq - p as f64;
        out[q - n] = dx * dx + f[p % n];
    }
}

pub fn make_empty(grid: PeriodicGrid) -> SingularSet {
    SingularSet {
        mask: vec![false; grid.node_count()],
        grid,
        tag: GeneratorTag::new("empty", json!({}), None),
        analytic_dim: None,
        dist: OnceCell::new(),
    }
}

pub fn make_full(grid: PeriodicGrid) -> SingularSet {
    SingularSet {
        mask: vec![true; grid.node_count()],
        grid,
        tag: GeneratorTag::new("full", json!({}), None),
        analytic_dim: Some(grid.d() as f64),
        dist: OnceCell::new(),
    }
}

/// `count` distinct nodes drawn uniformly with a seeded generator.
pub fn make_point_cloud(grid: PeriodicGrid, count: usize, seed: u64) -> Result<SingularSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("point cloud needs count >= 1".into()));
    }
    if count > grid.node_count() {
        return Err(Error::InvalidParameter(format!(
            "count {count} exceeds node count {}",
            grid.node_count()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    while chosen.len() < count {
        chosen.insert(rng.gen_range(0..grid.node_count()));
    }
    let mut mask = vec![false; grid.node_count()];
    for idx in chosen {
        mask[idx] = true;
    }
    Ok(SingularSet {
        grid,
        mask,
        tag: GeneratorTag::new("point_cloud", json!({ "count": count }), Some(seed)),
        analytic_dim: Some(0.0),
        dist: OnceCell::new(),
    })
}

/// The coordinate hyperplane {x_axis = 0}.
pub fn make_hyperplane(grid: PeriodicGrid, axis: usize) -> Result<SingularSet> {
    if axis >= grid.d() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for d={}",
            grid.d()
        )));
    }
    let d = grid.d();
    let mut mask = vec![false; grid.node_count()];
    let mut ix = [0usize; MAX_DIM];
    for (idx, m) in mask.iter_mut().enumerate() {
        grid.unflat(idx, &mut ix[..d]);
        *m = ix[axis] == 0;
    }
    Ok(SingularSet {
        grid,
        mask,
        tag: GeneratorTag::new("hyperplane", json!({ "axis": axis }), None),
        analytic_dim: Some((d - 1) as f64),
        dist: OnceCell::new(),
    })
}

/// Product of a depth-truncated Cantor set along `axes` with full circles
/// along the remaining axes. The middle `removed` fraction of each interval
/// is deleted at every level, so the per-side retained ratio is
/// r_c = (1 - removed)/2 and each Cantor axis contributes
/// log 2 / log(1/r_c) to the analytic dimension.
pub fn make_cantor(
    grid: PeriodicGrid,
    removed: f64,
    depth: u32,
    axes: &[usize],
) -> Result<SingularSet> {
    if !(removed > 0.0 && removed < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "removed fraction must lie in (0,1), got {removed}"
        )));
    }
    if axes.is_empty() {
        return Err(Error::InvalidParameter("cantor product needs at least one axis".into()));
    }
    let mut kinds = vec![AxisKind::Full; grid.d()];
    for &a in axes {
        if a >= grid.d() {
            return Err(Error::InvalidParameter(format!(
                "axis {a} out of range for d={}",
                grid.d()
            )));
        }
        if kinds[a] != AxisKind::Full {
            return Err(Error::InvalidParameter(format!("axis {a} repeated")));
        }
        kinds[a] = AxisKind::Cantor { removed, depth };
    }
    let mut set = make_axis_product(grid, &kinds)?;
    set.tag = GeneratorTag::new(
        "cantor_product",
        json!({ "removed": removed, "depth": depth, "axes": axes }),
        None,
    );
    Ok(set)
}

/// General per-axis product generator; `make_cantor`, the hyperplane sweep
/// targets, and the threshold sweep all reduce to this.
pub fn make_axis_product(grid: PeriodicGrid, kinds: &[AxisKind]) -> Result<SingularSet> {
    if kinds.len() != grid.d() {
        return Err(Error::InvalidParameter(format!(
            "{} axis kinds for d={}",
            kinds.len(),
            grid.d()
        )));
    }
    let n = grid.n();
    let mut axis_masks: Vec<Vec<bool>> = Vec::with_capacity(grid.d());
    for kind in kinds {
        axis_masks.push(match kind {
            AxisKind::Full => vec![true; n],
            AxisKind::Point => {
                let mut m = vec![false; n];
                m[0] = true;
                m
            }
            AxisKind::Cantor { removed, depth } => cantor_axis_mask(n, *removed, *depth)?,
        });
    }
    let d = grid.d();
    let mut mask = vec![false; grid.node_count()];
    let mut ix = [0usize; MAX_DIM];
    for (idx, m) in mask.iter_mut().enumerate() {
        grid.unflat(idx, &mut ix[..d]);
        *m = (0..d).all(|a| axis_masks[a][ix[a]]);
    }
    let dim = kinds.iter().map(AxisKind::dimension).sum();
    Ok(SingularSet {
        grid,
        mask,
        tag: GeneratorTag::new("axis_product", json!({ "axes": kinds }), None),
        analytic_dim: Some(dim),
        dist: OnceCell::new(),
    })
}

/// Closed-interval recursion for one Cantor axis: keep the two side
/// intervals of each parent, mark every node whose coordinate lies in a
/// surviving interval. Intervals must stay at least one node wide.
fn cantor_axis_mask(n: usize, removed: f64, depth: u32) -> Result<Vec<bool>> {
    let rc = (1.0 - removed) / 2.0;
    if rc.powi(depth as i32) * (n as f64) < 1.0 - 1e-9 {
        return Err(Error::ResolutionExhausted(format!(
            "depth {depth} makes intervals narrower than 1/{n}"
        )));
    }
    let mut intervals: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for &(a, len) in &intervals {
            let keep = rc * len;
            next.push((a, keep));
            next.push((a + len - keep, keep));
        }
        intervals = next;
    }
    let mut mask = vec![false; n];
    let nf = n as f64;
    let eta = 1e-12;
    for &(a, len) in &intervals {
        let lo = ((a - eta) * nf).ceil() as i64;
        let hi = ((a + len + eta) * nf).floor() as i64;
        for i in lo..=hi {
            mask[i.rem_euclid(n as i64) as usize] = true;
        }
    }
    Ok(mask)
}

/// Product set hitting a requested dimension: floor(gamma) full axes, one
/// Cantor axis carrying the fractional part (retained ratio 2^(-1/frac)),
/// points on the rest. Depth is the deepest the resolution allows.
pub fn set_for_gamma_target(grid: PeriodicGrid, gamma: f64) -> Result<SingularSet> {
    let d = grid.d();
    if !(0.0..=d as f64).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma target {gamma} outside [0, {d}]"
        )));
    }
    let full_axes = gamma.floor() as usize;
    let frac = gamma - gamma.floor();
    let mut kinds = Vec::with_capacity(d);
    for _ in 0..full_axes {
        kinds.push(AxisKind::Full);
    }
    if frac > 1e-9 {
        let rc = (2f64).powf(-1.0 / frac);
        let removed = 1.0 - 2.0 * rc;
        let depth = ((grid.n() as f64).ln() / (1.0 / rc).ln()).floor().max(1.0) as u32;
        kinds.push(AxisKind::Cantor { removed, depth });
    }
    while kinds.len() < d {
        kinds.push(AxisKind::Point);
    }
    let mut set = make_axis_product(grid, &kinds)?;
    set.tag.parameters["gamma_target"] = json!(gamma);
    set.analytic_dim = Some(full_axes as f64 + if frac > 1e-9 { frac } else { 0.0 });
    Ok(set)
}

/// Lebesgue measure of the closed ε-neighborhood {dist <= ε}:
/// node count times n^-d.
pub fn neighborhood_volume(s: &SingularSet, eps: f64) -> Result<f64> {
    let h = s.grid().spacing();
    if !(eps >= h * (1.0 - 1e-12)) {
        return Err(Error::SubResolutionEpsilon { eps, spacing: h });
    }
    let dist = s.distance_field()?;
    let cut = eps * (1.0 + 1e-12);
    let count = dist.values().iter().filter(|&&v| v <= cut).count();
    Ok(count as f64 * s.grid().cell_volume())
}

fn check_ladder(grid: &PeriodicGrid, ladder: &[f64]) -> Result<()> {
    if ladder.len() < 4 {
        return Err(Error::DegenerateLadder(format!(
            "need at least 4 rungs, got {}",
            ladder.len()
        )));
    }
    let h = grid.spacing();
    for &eps in ladder {
        if !(eps >= h * (1.0 - 1e-9) && eps <= 0.25 * (1.0 + 1e-9)) {
            return Err(Error::DegenerateLadder(format!(
                "rung {eps} outside [spacing={h}, 1/4]"
            )));
        }
    }
    Ok(())
}

/// Regress log volume against log ε over the ladder. The returned fit's
/// `exponent` is the dimension estimate γ̂ = d - slope; residual, std_error,
/// range, and counts all describe the underlying volume regression.
pub fn minkowski_dimension(s: &SingularSet, ladder: &[f64]) -> Result<ScalingFit> {
    check_ladder(s.grid(), ladder)?;
    let pts: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&eps| neighborhood_volume(s, eps).map(|v| (eps, v)))
        .collect::<Result<_>>()?;
    let mut fit = fit_exponent(&pts)?;
    fit.exponent = s.grid().d() as f64 - fit.exponent;
    Ok(fit)
}

/// Default ε ladder for dimension estimates: 2^-j for j from 3 up to
/// log2(n) - 3, capped at 11. Starting at 1/8 keeps coarse rungs from
/// swallowing the largest gaps of the sets built here; stopping three
/// octaves above the spacing keeps the volume counts out of the lattice
/// regime.
pub fn default_dimension_ladder(grid: &PeriodicGrid) -> Vec<f64> {
    let j_max = (grid.n().trailing_zeros() - 3).min(11);
    crate::numeric::dyadic_ladder(3, j_max)
}

/// Uniform-in-time variant: per rung, the max of member volumes (the
/// essential sup over t), then the same regression. Empty members have
/// empty neighborhoods and contribute volume zero.
pub fn uniform_minkowski_dimension(
    fam: &SingularSetFamily,
    ladder: &[f64],
) -> Result<ScalingFit> {
    let grid = fam.grid();
    check_ladder(grid, ladder)?;
    for (_, s) in fam.members() {
        if s.grid() != grid {
            return Err(Error::InvalidGrid("family members on mixed grids".into()));
        }
    }
    let mut pts = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let mut vmax = 0.0f64;
        for (_, s) in fam.members() {
            let v = if s.is_empty() {
                0.0
            } else {
                neighborhood_volume(s, eps)?
            };
            if v > vmax {
                vmax = v;
            }
        }
        pts.push((eps, vmax));
    }
    let mut fit = fit_exponent(&pts)?;
    fit.exponent = grid.d() as f64 - fit.exponent;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::dyadic_ladder;

    fn grid(d: usize, n: usize) -> PeriodicGrid {
        PeriodicGrid::new(d, n).unwrap()
    }

    /// O(n^d * |S|) torus-metric nearest-neighbor search.
    fn brute_force_distance(g: &PeriodicGrid, mask: &[bool]) -> Vec<f64> {
        let d = g.d();
        let n = g.n() as i64;
        let occupied: Vec<[usize; MAX_DIM]> = (0..g.node_count())
            .filter(|&i| mask[i])
            .map(|i| {
                let mut ix = [0usize; MAX_DIM];
                g.unflat(i, &mut ix[..d]);
                ix
            })
            .collect();
        let mut ix = [0usize; MAX_DIM];
        (0..g.node_count())
            .map(|idx| {
                g.unflat(idx, &mut ix[..d]);
                let mut best = i64::MAX;
                for occ in &occupied {
                    let mut s = 0i64;
                    for a in 0..d {
                        let delta = (ix[a] as i64 - occ[a] as i64).rem_euclid(n);
                        let w = delta.min(n - delta);
                        s += w * w;
                    }
                    best = best.min(s);
                }
                (best as f64).sqrt() * g.spacing()
            })
            .collect()
    }

    #[test]
    fn distance_matches_brute_force_exactly() {
        // Oracle equivalence on small grids in every dimension.
        let cases: Vec<(usize, usize, u64)> =
            vec![(1, 64, 11), (2, 32, 12), (2, 64, 13), (3, 16, 14)];
        for (d, n, seed) in cases {
            let g = grid(d, n);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut mask = vec![false; g.node_count()];
            let count = 1 + rng.gen_range(0..g.node_count() / 7);
            for _ in 0..count {
                let i = rng.gen_range(0..g.node_count());
                mask[i] = true;
            }
            let set = SingularSet::from_mask(
                g,
                mask.clone(),
                GeneratorTag::new("test", json!({}), None),
                None,
            )
            .unwrap();
            let fast = set.distance_field().unwrap();
            let slow = brute_force_distance(&g, &mask);
            for (i, (&a, &b)) in fast.values().iter().zip(&slow).enumerate() {
                assert_eq!(
                    a.to_bits(),
                    b.to_bits(),
                    "d={d} n={n} node {i}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn single_point_distances_on_t1() {
        let g = grid(1, 8);
        let mut mask = vec![false; 8];
        mask[0] = true;
        let set =
            SingularSet::from_mask(g, mask, GeneratorTag::new("test", json!({}), None), None)
                .unwrap();
        let want = [0.0, 0.125, 0.25, 0.375, 0.5, 0.375, 0.25, 0.125];
        assert_eq!(set.distance_field().unwrap().values(), &want);
    }

    #[test]
    fn full_torus_distance_is_zero() {
        let set = make_full(grid(2, 16));
        assert!(set.distance_field().unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hyperplane_distance_peaks_at_half() {
        let g = grid(2, 32);
        let set = make_hyperplane(g, 0).unwrap();
        let dist = set.distance_field().unwrap();
        let mut ix = [0usize; MAX_DIM];
        let mut peak = 0.0f64;
        for idx in 0..g.node_count() {
            g.unflat(idx, &mut ix[..2]);
            let expect = (ix[0].min(32 - ix[0])) as f64 / 32.0;
            assert_eq!(dist.at(idx), expect);
            peak = peak.max(dist.at(idx));
        }
        assert_eq!(peak, 0.5);
    }

    #[test]
    fn distance_is_one_lipschitz_on_lattice() {
        let g = grid(2, 64);
        let set = make_point_cloud(g, 5, 31).unwrap();
        let dist = set.distance_field().unwrap();
        let h = g.spacing();
        let mut ix = [0usize; MAX_DIM];
        let mut jx = [0usize; MAX_DIM];
        for idx in 0..g.node_count() {
            g.unflat(idx, &mut ix[..2]);
            for a in 0..2 {
                jx.copy_from_slice(&ix);
                jx[a] = (ix[a] + 1) % 64;
                let nb = g.flat(&jx[..2]);
                assert!(
                    (dist.at(idx) - dist.at(nb)).abs() <= h * (1.0 + 1e-9),
                    "jump at node {idx}"
                );
            }
        }
    }

    #[test]
    fn empty_set_has_no_distance_field() {
        let set = make_empty(grid(1, 16));
        assert!(set.is_empty());
        match set.distance_field() {
            Err(Error::EmptySetDistance) => {}
            other => panic!("expected EmptySetDistance, got {other:?}"),
        }
    }

    #[test]
    fn cantor_depth_zero_is_full_torus() {
        let set = make_cantor(grid(1, 16), 1.0 / 3.0, 0, &[0]).unwrap();
        assert_eq!(set.occupied_count(), 16);
        assert_eq!(set.analytic_dim(), Some(1.0));
    }

    #[test]
    fn cantor_analytic_dims() {
        let third = 1.0 / 3.0;
        let want = (2f64).ln() / (3f64).ln();
        let s1 = make_cantor(grid(1, 256), third, 4, &[0]).unwrap();
        assert!((s1.analytic_dim().unwrap() - want).abs() < 1e-12);
        let s3 = make_cantor(grid(3, 32), third, 2, &[1]).unwrap();
        assert!((s3.analytic_dim().unwrap() - (2.0 + want)).abs() < 1e-12);
    }

    #[test]
    fn cantor_depth_beyond_resolution_errors() {
        let err = make_cantor(grid(1, 16), 1.0 / 3.0, 4, &[0]).unwrap_err();
        assert!(err.to_string().contains("resolution exhausted"), "{err}");
    }

    #[test]
    fn cantor_level_one_mask() {
        let g = grid(1, 64);
        let set = make_cantor(g, 0.5, 1, &[0]).unwrap();
        // Keep [0, 1/4] and [3/4, 1]: nodes 0..=16 and 48..=63 (and node 0
        // again via the wrapped right endpoint).
        for i in 0..64 {
            let inside = i <= 16 || i >= 48;
            assert_eq!(set.occupancy()[i], inside, "node {i}");
        }
    }

    #[test]
    fn point_cloud_is_seeded_and_sized() {
        let g = grid(2, 64);
        let a = make_point_cloud(g, 7, 99).unwrap();
        let b = make_point_cloud(g, 7, 99).unwrap();
        let c = make_point_cloud(g, 7, 100).unwrap();
        assert_eq!(a.occupancy(), b.occupancy());
        assert_ne!(a.occupancy(), c.occupancy());
        assert_eq!(a.occupied_count(), 7);
        assert_eq!(a.analytic_dim(), Some(0.0));
        assert!(make_point_cloud(g, 0, 1).is_err());
    }

    #[test]
    fn neighborhood_volume_examples() {
        // Single point in T^1, eps = 0.1: interval of length 2*eps.
        let g = grid(1, 1024);
        let mut mask = vec![false; 1024];
        mask[100] = true;
        let s =
            SingularSet::from_mask(g, mask, GeneratorTag::new("test", json!({}), None), None)
                .unwrap();
        let v = neighborhood_volume(&s, 0.1).unwrap();
        assert!((v - 0.2).abs() <= 2.0 / 1024.0, "{v}");

        // Hyperplane in T^3, eps = 0.1: slab of width 2*eps.
        let g3 = grid(3, 32);
        let hp = make_hyperplane(g3, 0).unwrap();
        let v3 = neighborhood_volume(&hp, 0.1).unwrap();
        assert!((v3 - 0.2).abs() <= 2.0 / 32.0, "{v3}");

        // Sub-resolution eps rejected.
        assert!(matches!(
            neighborhood_volume(&hp, 0.001),
            Err(Error::SubResolutionEpsilon { .. })
        ));
    }

    #[test]
    fn neighborhood_volume_monotone_and_bounded() {
        let g = grid(2, 128);
        let s = make_point_cloud(g, 3, 5).unwrap();
        let mut last = 0.0;
        for j in (2..=6).rev() {
            let v = neighborhood_volume(&s, (2f64).powi(-j)).unwrap();
            assert!(v >= last);
            assert!(v <= 1.0);
            last = v;
        }
        // Spacing-scale volume covers at least the occupied nodes.
        let v0 = neighborhood_volume(&s, g.spacing()).unwrap();
        assert!(v0 >= 3.0 * g.cell_volume());
    }

    #[test]
    fn cantor_neighborhood_volume_scale() {
        // At eps = w/2 with w the depth-k interval width, the neighborhood
        // measures about 2^k * 2w = 2 * (2/3)^k.
        let g = grid(1, 4096);
        let k = 5;
        let s = make_cantor(g, 1.0 / 3.0, k, &[0]).unwrap();
        let w = (1.0f64 / 3.0).powi(k as i32);
        let v = neighborhood_volume(&s, w / 2.0).unwrap();
        let base = (2.0f64 / 3.0).powi(k as i32);
        assert!(v >= base && v <= 3.0 * base, "v={v}, base={base}");
    }

    #[test]
    fn minkowski_dimension_trivial_cases() {
        let ladder = dyadic_ladder(2, 6);
        let full = make_full(grid(2, 256));
        let fit = minkowski_dimension(&full, &ladder).unwrap();
        assert!((fit.exponent - 2.0).abs() < 0.05, "{}", fit.exponent);

        let g = grid(2, 1024);
        let mut mask = vec![false; g.node_count()];
        mask[g.flat(&[517, 243])] = true;
        let pt =
            SingularSet::from_mask(g, mask, GeneratorTag::new("test", json!({}), None), None)
                .unwrap();
        let fit = minkowski_dimension(&pt, &dyadic_ladder(2, 7)).unwrap();
        assert!(fit.exponent.abs() < 0.1, "{}", fit.exponent);
    }

    #[test]
    fn minkowski_dimension_middle_thirds() {
        // Rungs start at 2^-5: by eps = 1/4 the level-1 gap is swallowed and
        // the volume saturates, which would flatten the slope. The fine end
        // stays above the depth-8 interval width 3^-8.
        let g = grid(1, 65536);
        let s = make_cantor(g, 1.0 / 3.0, 8, &[0]).unwrap();
        let fit = minkowski_dimension(&s, &dyadic_ladder(5, 12)).unwrap();
        let want = (2f64).ln() / (3f64).ln();
        assert!(
            (fit.exponent - want).abs() < 0.03,
            "gamma_hat={} want={want}",
            fit.exponent
        );
    }

    #[test]
    fn box_counting_cross_check() {
        // Independent estimator: count occupied boxes of side 2^-j.
        let g = grid(1, 65536);
        let s = make_cantor(g, 1.0 / 3.0, 8, &[0]).unwrap();
        let mut pts = Vec::new();
        for j in 3..=10u32 {
            let b = 65536usize >> j;
            let mut boxes = vec![false; 1usize << j];
            for (i, &occ) in s.occupancy().iter().enumerate() {
                if occ {
                    boxes[i / b] = true;
                }
            }
            let count = boxes.iter().filter(|&&x| x).count();
            pts.push(((2f64).powi(-(j as i32)), count as f64));
        }
        let fit = fit_exponent(&pts).unwrap();
        let box_dim = -fit.exponent;
        let mink = minkowski_dimension(&s, &dyadic_ladder(2, 11)).unwrap().exponent;
        let want = (2f64).ln() / (3f64).ln();
        assert!((box_dim - want).abs() < 0.05, "box dim {box_dim}");
        assert!((box_dim - mink).abs() < 0.05, "box {box_dim} vs mink {mink}");
    }

    #[test]
    fn product_set_dimension_adds() {
        let g = grid(2, 2048);
        let s = make_cantor(g, 1.0 / 3.0, 6, &[1]).unwrap();
        let want = 1.0 + (2f64).ln() / (3f64).ln();
        assert!((s.analytic_dim().unwrap() - want).abs() < 1e-12);
        let fit = minkowski_dimension(&s, &dyadic_ladder(5, 9)).unwrap();
        assert!(
            (fit.exponent - want).abs() < 0.06,
            "gamma_hat={} want={want}",
            fit.exponent
        );
    }

    #[test]
    fn gamma_target_hits_requested_dimension() {
        let g = grid(2, 2048);
        for &target in &[0.5, 1.0, 1.3] {
            let s = set_for_gamma_target(g, target).unwrap();
            let a = s.analytic_dim().unwrap();
            assert!((a - target).abs() < 1e-9, "target {target} got {a}");
        }
        assert!(set_for_gamma_target(g, 2.5).is_err());
    }

    #[test]
    fn uniform_dimension_takes_the_envelope() {
        let g = grid(2, 256);
        let ladder = dyadic_ladder(2, 6);
        let point = make_point_cloud(g, 1, 3).unwrap();
        let plane = make_hyperplane(g, 0).unwrap();
        let single = minkowski_dimension(&plane, &ladder).unwrap().exponent;

        let fam = SingularSetFamily::new(
            vec![(0, point.clone()), (1, plane.clone()), (2, point.clone())],
            1.0,
        )
        .unwrap();
        let fit = uniform_minkowski_dimension(&fam, &ladder).unwrap();
        assert!((fit.exponent - 1.0).abs() < 0.1, "{}", fit.exponent);
        assert!(fit.exponent >= single - 0.05);

        // One-member family equals the member's estimate.
        let solo = SingularSetFamily::constant(plane, 1.0).unwrap();
        let fit1 = uniform_minkowski_dimension(&solo, &ladder).unwrap();
        assert!((fit1.exponent - single).abs() < 1e-12);
    }

    #[test]
    fn family_rules_enforced() {
        let g = grid(1, 16);
        let a = make_point_cloud(g, 1, 1).unwrap();
        let b = make_point_cloud(grid(1, 32), 1, 1).unwrap();
        assert!(SingularSetFamily::new(vec![(0, a.clone()), (0, a.clone())], 1.0).is_err());
        assert!(SingularSetFamily::new(vec![(0, a.clone()), (1, b)], 1.0).is_err());
        assert!(SingularSetFamily::new(vec![], 1.0).is_err());
        let fam = SingularSetFamily::new(vec![(2, a.clone()), (0, a)], 1.0).unwrap();
        assert_eq!(fam.members()[0].0, 0);
        assert_eq!(fam.set_for_slice(1).tag().kind, "point_cloud");
    }

    #[test]
    fn ladder_validation() {
        let s = make_full(grid(1, 64));
        assert!(minkowski_dimension(&s, &dyadic_ladder(2, 4)).is_err()); // 3 rungs
        assert!(minkowski_dimension(&s, &[0.3, 0.2, 0.1, 0.05]).is_err()); // > 1/4
        assert!(minkowski_dimension(&s, &[0.25, 0.125, 0.01, 0.001]).is_err()); // < spacing
    }

    #[test]
    fn mask_round_trips_through_field() {
        let g = grid(2, 16);
        let s = make_point_cloud(g, 9, 41).unwrap();
        let f = s.to_field();
        let back = SingularSet::from_field(&f).unwrap();
        assert_eq!(back.occupancy(), s.occupancy());
    }

    #[test]
    fn generator_tag_serializes_as_descriptor() {
        let g = grid(1, 64);
        let s = make_point_cloud(g, 2, 7).unwrap();
        let v = serde_json::to_value(s.tag()).unwrap();
        assert_eq!(v["kind"], "point_cloud");
        assert_eq!(v["parameters"]["count"], 2);
        assert_eq!(v["seed"], 7);
    }
}

//! Periodic grids on the unit torus and sampled fields over them.
//!
//! A `PeriodicGrid` discretizes [0,1)^d with n equispaced nodes per axis,
//! n a power of two so dyadic shifts land exactly on nodes. Fields store
//! samples row-major with the component index fastest.

use crate::error::{Error, Result};
use crate::numeric::{is_power_of_two, CompensatedSum};
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    d: usize,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::InvalidGrid(format!("d must be 1, 2, or 3, got {d}")));
        }
        if n < 4 || !is_power_of_two(n) {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 4, got {n}"
            )));
        }
        Ok(Self { d, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Quadrature weight of one node, n^-d.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Row-major flat index of multi-index `ix` (length d, each in [0, n)).
    #[inline]
    pub fn flat(&self, ix: &[usize]) -> usize {
        debug_assert_eq!(ix.len(), self.d);
        let mut idx = 0usize;
        for &i in ix {
            debug_assert!(i < self.n);
            idx = idx * self.n + i;
        }
        idx
    }

    /// Inverse of `flat`.
    #[inline]
    pub fn unflat(&self, mut idx: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.d);
        for a in (0..self.d).rev() {
            out[a] = idx % self.n;
            idx /= self.n;
        }
    }

    /// Coordinates of node `ix` in [0,1)^d.
    #[inline]
    pub fn coords(&self, ix: &[usize], out: &mut [f64]) {
        let h = self.spacing();
        for a in 0..self.d {
            out[a] = ix[a] as f64 * h;
        }
    }

    /// Stride of axis `a` in the flat layout (component stride not included).
    #[inline]
    pub fn axis_stride(&self, a: usize) -> usize {
        self.n.pow((self.d - 1 - a) as u32)
    }
}

/// Integer lattice displacement; `shift` and increment norms move fields by
/// whole nodes so periodicity stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeVector {
    steps: [i64; MAX_DIM],
    d: usize,
}

impl LatticeVector {
    pub fn from_steps(grid: &PeriodicGrid, steps: &[i64]) -> Result<Self> {
        if steps.len() != grid.d() {
            return Err(Error::OffGridShift(format!(
                "shift has {} entries on a {}-dimensional grid",
                steps.len(),
                grid.d()
            )));
        }
        let mut s = [0i64; MAX_DIM];
        s[..steps.len()].copy_from_slice(steps);
        Ok(Self {
            steps: s,
            d: grid.d(),
        })
    }

    /// Parse a real displacement as a lattice vector. Each entry must be an
    /// integer multiple of the spacing to within 1e-9 nodes.
    pub fn from_displacement(grid: &PeriodicGrid, disp: &[f64]) -> Result<Self> {
        if disp.len() != grid.d() {
            return Err(Error::OffGridShift(format!(
                "displacement has {} entries on a {}-dimensional grid",
                disp.len(),
                grid.d()
            )));
        }
        let n = grid.n() as f64;
        let mut steps = [0i64; MAX_DIM];
        for (a, &x) in disp.iter().enumerate() {
            let nodes = x * n;
            let rounded = nodes.round();
            if (nodes - rounded).abs() > 1e-9 {
                return Err(Error::OffGridShift(format!(
                    "component {a} = {x} is not a multiple of 1/{}",
                    grid.n()
                )));
            }
            steps[a] = rounded as i64;
        }
        Ok(Self {
            steps,
            d: grid.d(),
        })
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps[..self.d]
    }

    /// Euclidean length in torus units.
    pub fn length(&self, grid: &PeriodicGrid) -> f64 {
        let s2: f64 = self.steps().iter().map(|&s| (s * s) as f64).sum();
        s2.sqrt() * grid.spacing()
    }

    pub fn is_zero(&self) -> bool {
        self.steps().iter().all(|&s| s == 0)
    }
}

/// Sampled field on a periodic grid. `components` is 1 (scalar) or d
/// (vector). Layout: `samples[node * components + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    components: usize,
    samples: Vec<f64>,
    time_index: Option<i64>,
}

impl Field {
    pub fn zeros(grid: PeriodicGrid, components: usize) -> Result<Self> {
        Self::check_components(&grid, components)?;
        Ok(Self {
            samples: vec![0.0; grid.node_count() * components],
            grid,
            components,
            time_index: None,
        })
    }

    pub fn from_samples(grid: PeriodicGrid, components: usize, samples: Vec<f64>) -> Result<Self> {
        Self::check_components(&grid, components)?;
        let want = grid.node_count() * components;
        if samples.len() != want {
            return Err(Error::InvalidField(format!(
                "expected {want} samples, got {}",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite sample {bad}")));
        }
        Ok(Self {
            grid,
            components,
            samples,
            time_index: None,
        })
    }

    /// Evaluate `f(coords, component)` at every node.
    pub fn from_fn<F>(grid: PeriodicGrid, components: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], usize) -> f64,
    {
        Self::check_components(&grid, components)?;
        let d = grid.d();
        let mut ix = [0usize; MAX_DIM];
        let mut x = [0f64; MAX_DIM];
        let mut samples = Vec::with_capacity(grid.node_count() * components);
        for idx in 0..grid.node_count() {
            grid.unflat(idx, &mut ix[..d]);
            grid.coords(&ix[..d], &mut x[..d]);
            for c in 0..components {
                let v = f(&x[..d], c);
                if !v.is_finite() {
                    return Err(Error::InvalidField(format!(
                        "non-finite sample {v} at node {:?} component {c}",
                        &ix[..d]
                    )));
                }
                samples.push(v);
            }
        }
        Ok(Self {
            grid,
            components,
            samples,
            time_index: None,
        })
    }

    fn check_components(grid: &PeriodicGrid, components: usize) -> Result<()> {
        if components == 1 || components == grid.d() {
            Ok(())
        } else {
            Err(Error::InvalidField(format!(
                "components must be 1 or d={}, got {components}",
                grid.d()
            )))
        }
    }

    /// Crate-internal constructor for tensor-packed channel counts (d*d
    /// commutators and the like) that from_samples would reject.
    pub(crate) fn packed(grid: PeriodicGrid, components: usize, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.node_count() * components);
        Self {
            grid,
            components,
            samples,
            time_index: None,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn time_index(&self) -> Option<i64> {
        self.time_index
    }

    pub fn set_time_index(&mut self, t: Option<i64>) {
        self.time_index = t;
    }

    #[inline]
    pub fn value(&self, node: usize, c: usize) -> f64 {
        self.samples[node * self.components + c]
    }

    /// Euclidean magnitude of the value at a node.
    #[inline]
    pub fn magnitude(&self, node: usize) -> f64 {
        let base = node * self.components;
        if self.components == 1 {
            self.samples[base].abs()
        } else {
            let mut s = 0.0;
            for c in 0..self.components {
                let v = self.samples[base + c];
                s += v * v;
            }
            s.sqrt()
        }
    }
}

/// Gradient with the derivative index fastest: output component `c*d + a`
/// holds the centered difference of input component `c` along axis `a`,
/// so for a vector field the output packs the Jacobian row-major.
pub fn gradient(f: &Field) -> Field {
    let grid = *f.grid();
    let d = grid.d();
    let n = grid.n();
    let comps = f.components();
    let out_comps = comps * d;
    let scale = n as f64 / 2.0;
    let mut out = vec![0.0; grid.node_count() * out_comps];
    let mut ix = [0usize; MAX_DIM];
    let mut jx = [0usize; MAX_DIM];
    for idx in 0..grid.node_count() {
        grid.unflat(idx, &mut ix[..d]);
        for a in 0..d {
            jx[..d].copy_from_slice(&ix[..d]);
            jx[a] = (ix[a] + 1) % n;
            let fwd = grid.flat(&jx[..d]);
            jx[a] = (ix[a] + n - 1) % n;
            let bwd = grid.flat(&jx[..d]);
            for c in 0..comps {
                out[idx * out_comps + c * d + a] =
                    (f.value(fwd, c) - f.value(bwd, c)) * scale;
            }
        }
    }
    // Jacobian-packed output has comps*d channels, which is neither 1 nor d
    // in general, so it is built directly rather than through from_samples.
    Field {
        grid,
        components: out_comps,
        samples: out,
        time_index: f.time_index(),
    }
}

impl Field {
    /// Frobenius norm of the value at a node: same as `magnitude`, named for
    /// Jacobian-packed fields.
    #[inline]
    pub fn frobenius(&self, node: usize) -> f64 {
        let base = node * self.components;
        let mut s = 0.0;
        for c in 0..self.components {
            let v = self.samples[base + c];
            s += v * v;
        }
        s.sqrt()
    }
}

/// L^p norm over the torus, p in [1, inf]. Vector values enter through
/// their Euclidean magnitude; p = inf is the max norm.
pub fn integrate(f: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    let count = f.grid().node_count();
    if p.is_infinite() {
        let mut m = 0.0f64;
        for node in 0..count {
            let v = f.magnitude(node);
            if !v.is_finite() {
                return Err(Error::InvalidField("non-finite sample".into()));
            }
            if v > m {
                m = v;
            }
        }
        return Ok(m);
    }
    let w = f.grid().cell_volume();
    let mut acc = CompensatedSum::new();
    if p == 2.0 && f.components() > 1 {
        for node in 0..count {
            let base = node * f.components();
            for c in 0..f.components() {
                let v = f.samples[base + c];
                acc.add(v * v);
            }
        }
    } else {
        for node in 0..count {
            let m = f.magnitude(node);
            acc.add(if p == 1.0 {
                m
            } else if p == 2.0 {
                m * m
            } else if p == 3.0 {
                m * m * m
            } else {
                m.powf(p)
            });
        }
    }
    let total = acc.value() * w;
    if !total.is_finite() {
        return Err(Error::InvalidField("non-finite norm".into()));
    }
    Ok(total.powf(1.0 / p))
}

/// Cyclic shift: result(x) = f(x + h). Exact permutation of samples.
pub fn shift(f: &Field, h: &LatticeVector) -> Result<Field> {
    let grid = *f.grid();
    let d = grid.d();
    if h.steps().len() != d {
        return Err(Error::OffGridShift(format!(
            "shift dimension {} does not match grid dimension {d}",
            h.steps().len()
        )));
    }
    let n = grid.n() as i64;
    let mut off = [0usize; MAX_DIM];
    for a in 0..d {
        off[a] = h.steps()[a].rem_euclid(n) as usize;
    }
    let comps = f.components();
    let mut out = vec![0.0; f.samples.len()];
    let mut ix = [0usize; MAX_DIM];
    let mut jx = [0usize; MAX_DIM];
    for idx in 0..grid.node_count() {
        grid.unflat(idx, &mut ix[..d]);
        for a in 0..d {
            jx[a] = (ix[a] + off[a]) % grid.n();
        }
        let src = grid.flat(&jx[..d]);
        out[idx * comps..(idx + 1) * comps]
            .copy_from_slice(&f.samples[src * comps..(src + 1) * comps]);
    }
    Ok(Field {
        grid,
        components: comps,
        samples: out,
        time_index: f.time_index(),
    })
}

/// Kinetic energy (1/2)||v||_{L^2}^2.
pub fn kinetic_energy(f: &Field) -> Result<f64> {
    let l2 = integrate(f, 2.0)?;
    Ok(0.5 * l2 * l2)
}

/// A field sampled at M equispaced times t_k = k*horizon/M.
#[derive(Clone, Debug)]
pub struct TimeField {
    slices: Vec<Field>,
    horizon: f64,
}

impl TimeField {
    pub fn new(slices: Vec<Field>, horizon: f64) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidField("time field needs at least one slice".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let g0 = *slices[0].grid();
        let c0 = slices[0].components();
        for (k, s) in slices.iter().enumerate() {
            if *s.grid() != g0 || s.components() != c0 {
                return Err(Error::InvalidField(format!(
                    "slice {k} disagrees with slice 0 on grid or components"
                )));
            }
        }
        Ok(Self { slices, horizon })
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.slices.len() as f64
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.slices[0].grid()
    }

    pub fn components(&self) -> usize {
        self.slices[0].components()
    }

    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, n: usize) -> PeriodicGrid {
        PeriodicGrid::new(d, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(PeriodicGrid::new(0, 16).is_err());
        assert!(PeriodicGrid::new(4, 16).is_err());
        assert!(PeriodicGrid::new(2, 12).is_err());
        assert!(PeriodicGrid::new(2, 2).is_err());
        assert!(PeriodicGrid::new(3, 4).is_ok());
    }

    #[test]
    fn flat_unflat_round_trip() {
        let g = grid(3, 8);
        let mut ix = [0usize; 3];
        for idx in [0usize, 1, 7, 8, 63, 64, 511] {
            g.unflat(idx, &mut ix);
            assert_eq!(g.flat(&ix), idx);
        }
    }

    #[test]
    fn integrate_sin_squared_is_half() {
        // The discrete mean of sin^2(2 pi x) over equispaced nodes is exactly
        // 1/2 for n >= 4, so the L^2 norm is sqrt(1/2) up to rounding.
        let g = grid(1, 64);
        let f = Field::from_fn(g, 1, |x, _| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
        let l2 = integrate(&f, 2.0).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-15, "{l2}");
    }

    #[test]
    fn integrate_max_norm() {
        let g = grid(2, 8);
        let mut f = Field::zeros(g, 1).unwrap();
        f.samples_mut()[17] = -3.5;
        assert_eq!(integrate(&f, f64::INFINITY).unwrap(), 3.5);
    }

    #[test]
    fn integrate_rejects_p_below_one() {
        let g = grid(1, 8);
        let f = Field::zeros(g, 1).unwrap();
        assert!(integrate(&f, 0.5).is_err());
        assert!(integrate(&f, f64::NAN).is_err());
    }

    #[test]
    fn shift_round_trip_is_exact() {
        let g = grid(2, 16);
        let f = Field::from_fn(g, 2, |x, c| {
            (x[0] * 7.0 + x[1] * 3.0 + c as f64).sin() * 1.37
        })
        .unwrap();
        let h = LatticeVector::from_steps(&g, &[5, -3]).unwrap();
        let back = LatticeVector::from_steps(&g, &[-5, 3]).unwrap();
        let f2 = shift(&shift(&f, &h).unwrap(), &back).unwrap();
        assert_eq!(f.samples(), f2.samples());
    }

    #[test]
    fn shift_wraps_periodically() {
        let g = grid(1, 8);
        let f =
            Field::from_samples(g, 1, (0..8).map(|i| i as f64).collect()).unwrap();
        let h = LatticeVector::from_steps(&g, &[3]).unwrap();
        let s = shift(&f, &h).unwrap();
        // result(x) = f(x + 3/8): node 6 reads node (6+3) mod 8 = 1.
        assert_eq!(s.value(6, 0), 1.0);
        assert_eq!(s.value(7, 0), 2.0);
    }

    #[test]
    fn off_grid_displacement_rejected() {
        let g = grid(1, 8);
        assert!(LatticeVector::from_displacement(&g, &[0.25]).is_ok());
        let err = LatticeVector::from_displacement(&g, &[0.3]).unwrap_err();
        assert!(err.to_string().contains("off-grid shift"), "{err}");
    }

    #[test]
    fn gradient_of_linear_mode_matches_cosine() {
        // d/dx sin(2 pi x) sampled by centered differences has the discrete
        // symbol n sin(2 pi / n), within (2 pi)^3 / (6 n^2) of 2 pi cos.
        let g = grid(1, 256);
        let f = Field::from_fn(g, 1, |x, _| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
        let df = gradient(&f);
        let tau = 2.0 * std::f64::consts::PI;
        let mut worst = 0.0f64;
        for i in 0..256 {
            let x = i as f64 / 256.0;
            let sym = 256.0 * (tau / 256.0).sin();
            let want = sym * (tau * x).cos();
            worst = worst.max((df.value(i, 0) - want).abs());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid(3, 8);
        let f = Field::from_fn(g, 3, |_, c| c as f64 + 1.0).unwrap();
        let df = gradient(&f);
        assert_eq!(df.components(), 9);
        assert!(df.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kinetic_energy_of_unit_constant() {
        let g = grid(2, 16);
        let f = Field::from_fn(g, 2, |_, c| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!((kinetic_energy(&f).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = grid(1, 8);
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::from_samples(g, 1, v).is_err());
    }

    #[test]
    fn time_field_checks_consistency() {
        let g = grid(1, 8);
        let a = Field::zeros(g, 1).unwrap();
        let b = Field::zeros(grid(1, 16), 1).unwrap();
        assert!(TimeField::new(vec![a.clone(), b], 1.0).is_err());
        let tf = TimeField::new(vec![a.clone(), a], 2.0).unwrap();
        assert_eq!(tf.dt(), 1.0);
        assert_eq!(tf.time_of(1), 1.0);
    }
}

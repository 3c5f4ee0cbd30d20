//! Velocity-field constructors realizing exact (θ, κ) hypothesis pairs:
//! globally θ-Hölder, smooth off the singular set, with gradient blow-up
//! dist^-κ, plus smooth and space-filling (Weierstrass) control fields.

use crate::besov::{holder_exponent_fit, DirectionSet};
use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ScalingFit};
use crate::grid::{gradient, integrate, Field, PeriodicGrid, TimeField, MAX_DIM};
use crate::harness::{gamma_threshold, Integrability};
use crate::sets::{uniform_minkowski_dimension,DistanceField, SingularSetFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Modulation amplitude of the unit-vector field e(x). Small enough that
/// the |∇e| term stays inside the 4·C·dist^-κ gradient budget.
const MODULATION: f64 = 0.15;

/// How the field blows up approaching the singular set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlowupProfile {
    /// dist^β · sin(dist^-α + φ) with β = θ(1+α), giving κ = (1+α)(1-θ).
    /// α = 0 is the pure cusp dist^θ with the natural rate κ = 1-θ.
    Oscillatory { alpha: f64 },
    /// dist^(1-κ): Hölder-(1-κ) profile for the range κ < 1-θ, smoother
    /// than θ requires. Exercises blow-up rates below the natural one.
    Flattened { kappa: f64 },
}

/// C(t), sampled per slice. Both profiles are in L³((0,T)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeProfile {
    Constant { value: f64 },
    /// scale · t^(-1/4), sampled at slice midpoints (k+1/2)·Δt so the first
    /// slice stays finite.
    IntegrableSingularity { scale: f64 },
}

impl AmplitudeProfile {
    pub fn sample(&self, k: usize, slices: usize, horizon: f64) -> f64 {
        match self {
            AmplitudeProfile::Constant { value } => *value,
            AmplitudeProfile::IntegrableSingularity { scale } => {
                let dt = horizon / slices as f64;
                let t = (k as f64 + 0.5) * dt;
                scale * t.powf(-0.25)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisSpec {
    pub theta: f64,
    pub profile: BlowupProfile,
    pub amplitude: AmplitudeProfile,
    /// Number of time slices to synthesize.
    pub slices: usize,
    pub seed: u64,
    pub family: SingularSetFamily,
}

impl SynthesisSpec {
    /// The blow-up rate κ realized by the profile.
    pub fn kappa(&self) -> f64 {
        match self.profile {
            BlowupProfile::Oscillatory { alpha } => (1.0 + alpha) * (1.0 - self.theta),
            BlowupProfile::Flattened { kappa } => kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0, 1/3), got {}",
                self.theta
            )));
        }
        match self.profile {
            BlowupProfile::Oscillatory { alpha } => {
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "oscillation rate alpha must be >= 0, got {alpha}"
                    )));
                }
            }
            BlowupProfile::Flattened { kappa } => {
                if !(0.0..1.0 - self.theta).contains(&kappa) {
                    return Err(Error::InvalidParameter(format!(
                        "flattened profile covers 0 <= kappa < 1-theta, got {kappa}"
                    )));
                }
            }
        }
        match self.amplitude {
            AmplitudeProfile::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "amplitude must be positive, got {value}"
                    )));
                }
            }
            AmplitudeProfile::IntegrableSingularity { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "amplitude scale must be positive, got {scale}"
                    )));
                }
            }
        }
        if self.slices == 0 {
            return Err(Error::InvalidParameter("need at least one slice".into()));
        }
        Ok(())
    }
}

/// Slice-k RNG stream: one generator, stream index = time index.
fn slice_rng(seed: u64, k: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Smooth unit-vector modulation: e = a/|a| with
/// a_i(x) = 1 + MODULATION·sin(2π x_{(i+1) mod d} + ψ_i).
/// In d = 1 this is identically 1.
fn modulation(d: usize, x: &[f64], psi: &[f64; MAX_DIM], out: &mut [f64; MAX_DIM]) {
    let mut norm2 = 0.0;
    for i in 0..d {
        let xi = x[(i + 1) % d];
        let a = 1.0 + MODULATION * (TAU * xi + psi[i]).sin();
        out[i] = a;
        norm2 += a * a;
    }
    let inv = 1.0 / norm2.sqrt();
    for v in out.iter_mut().take(d) {
        *v *= inv;
    }
}

fn blowup_value(profile: &BlowupProfile, theta: f64, dist: f64, phase: f64) -> f64 {
    if dist == 0.0 {
        return 0.0;
    }
    match *profile {
        BlowupProfile::Oscillatory { alpha } => {
            let beta = theta * (1.0 + alpha);
            let base = dist.powf(beta);
            if alpha > 0.0 {
                base * (dist.powf(-alpha) + phase).sin()
            } else {
                // At alpha = 0 the sine factor is a constant; folding it
                // into the amplitude keeps slices from being accidentally
                // scaled by sin(1 + φ) ≈ 0.
                base
            }
        }
        BlowupProfile::Flattened { kappa } => dist.powf(1.0 - kappa),
    }
}

/// Build the singular family field: per slice,
/// v(x,t) = C(t) · profile(dist(x, S_t)) · e(x,t).
/// Slices whose set is empty fall back to a smooth field normalized to
/// ‖∇v(t)‖_∞ = C(t) (the dist ≡ 1 convention).
pub fn singular_field(spec: &SynthesisSpec) -> Result<TimeField> {
    spec.validate()?;
    let grid = *spec.family.grid();
    let d = grid.d();
    let horizon = spec.family.horizon();
    let mut slices = Vec::with_capacity(spec.slices);
    for k in 0..spec.slices {
        let set = spec.family.set_for_slice(k);
        let c_t = spec.amplitude.sample(k, spec.slices, horizon);
        let mut rng = slice_rng(spec.seed, k);
        let phase: f64 = rng.gen_range(0.0..TAU);
        let mut psi = [0f64; MAX_DIM];
        for p in psi.iter_mut().take(d) {
            *p = rng.gen_range(0.0..TAU);
        }
        let mut slice = if set.is_empty() {
            let modes = (grid.n() / 4).clamp(1, 4);
            let raw = smooth_field(grid, modes, spec.seed.wrapping_add(0x5eed).wrapping_add(k as u64))?;
            let grad_max = integrate(&gradient(&raw), f64::INFINITY)?;
            let scale = if grad_max > 0.0 { c_t / grad_max } else { 0.0 };
            let samples = raw.samples().iter().map(|&v| v * scale).collect();
            Field::from_samples(grid, raw.components(), samples)?
        } else {
            let dist = set.distance_field()?;
            let mut e = [0f64; MAX_DIM];
            let mut samples = vec![0.0f64; grid.node_count() * d];
            let mut ix = [0usize; MAX_DIM];
            let mut x = [0f64; MAX_DIM];
            for node in 0..grid.node_count() {
                grid.unflat(node, &mut ix[..d]);
                grid.coords(&ix[..d], &mut x[..d]);
                let p = c_t * blowup_value(&spec.profile, spec.theta, dist.at(node), phase);
                modulation(d, &x[..d], &psi, &mut e);
                for c in 0..d {
                    samples[node * d + c] = p * e[c];
                }
            }
            Field::from_samples(grid, d, samples)?
        };
        slice.set_time_index(Some(k as i64));
        slices.push(slice);
    }
    TimeField::new(slices, horizon)
}

/// Random band-limited trigonometric polynomial, one mode budget per
/// component, amplitudes decaying like 1/(1+|k|²).
pub fn smooth_field(grid: PeriodicGrid, modes: usize, seed: u64) -> Result<Field> {
    if modes == 0 || modes > grid.n() / 4 {
        return Err(Error::ResolutionExhausted(format!(
            "mode budget {modes} outside [1, n/4 = {}]",
            grid.n() / 4
        )));
    }
    let d = grid.d();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = modes as i64;
    struct Mode {
        k: [i64; MAX_DIM],
        amp: f64,
        phase: f64,
    }
    let mut comps: Vec<Vec<Mode>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut list = Vec::with_capacity(modes);
        while list.len() < modes {
            let mut k = [0i64; MAX_DIM];
            for slot in k.iter_mut().take(d) {
                *slot = rng.gen_range(-m..=m);
            }
            if k.iter().all(|&x| x == 0) {
                continue;
            }
            let k2: f64 = k.iter().map(|&x| (x * x) as f64).sum();
            list.push(Mode {
                k,
                amp: rng.gen_range(0.5..1.5) / (1.0 + k2),
                phase: rng.gen_range(0.0..TAU),
            });
        }
        comps.push(list);
    }
    Field::from_fn(grid, d, |x, c| {
        comps[c]
            .iter()
            .map(|mode| {
                let arg: f64 = (0..d).map(|a| mode.k[a] as f64 * x[a]).sum();
                mode.amp * (TAU * arg + mode.phase).sin()
            })
            .sum()
    })
}

/// Lacunary field Σ_{j<=levels} 2^{-jθ} sin(2^j·2π⟨k_j, x⟩ + φ_j) with unit
/// lattice directions k_j: θ-Hölder uniformly in levels and nowhere better.
/// The singular set is the whole torus.
pub fn weierstrass_field(
    grid: PeriodicGrid,
    theta: f64,
    levels: u32,
    seed: u64,
) -> Result<Field> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0,1), got {theta}"
        )));
    }
    let max_levels = grid.n().trailing_zeros().saturating_sub(2);
    if levels > max_levels {
        return Err(Error::ResolutionExhausted(format!(
            "levels {levels} exceeds log2(n) - 2 = {max_levels}"
        )));
    }
    let d = grid.d();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut phases = vec![vec![0.0f64; (levels + 1) as usize]; d];
    let mut axes = vec![vec![0usize; (levels + 1) as usize]; d];
    for c in 0..d {
        for j in 0..=levels as usize {
            phases[c][j] = rng.gen_range(0.0..TAU);
            axes[c][j] = rng.gen_range(0..d);
        }
    }
    Field::from_fn(grid, d, |x, c| {
        (0..=levels as usize)
            .map(|j| {
                let freq = (1u64 << j) as f64;
                freq.powf(-theta) * (freq * TAU * x[axes[c][j]] + phases[c][j]).sin()
            })
            .sum()
    })
}

/// Base triad shape at unit frequency, component c of d. Component 0 carries
/// modes (1,0,..) and (1,1,0,..), component 1 carries (1,0,..) and (0,1,..);
/// the rest are zero. In one dimension: sin + first harmonic.
fn triad_component(x: &[f64], c: usize) -> f64 {
    if x.len() == 1 {
        return (TAU * x[0]).sin() + (2.0 * TAU * x[0]).sin();
    }
    match c {
        0 => (TAU * x[0]).sin() + (TAU * (x[0] + x[1])).sin(),
        1 => (TAU * x[0]).sin() + (TAU * x[1]).sin(),
        _ => 0.0,
    }
}

/// Fixed low-frequency trigonometric control field whose modes form a
/// resonant triad (k1 + k2 = k3), so the cubic contraction driving the
/// energy flux does not integrate to zero the way it does for generic
/// random mode sets.
pub fn triad_field(grid: PeriodicGrid) -> Result<Field> {
    if grid.n() < 16 {
        return Err(Error::ResolutionExhausted(format!(
            "triad field needs n >= 16, got {}",
            grid.n()
        )));
    }
    Field::from_fn(grid, grid.d(), |x, c| triad_component(x, c))
}

/// Self-similar lacunary field Σ_{j<levels} 2^{-jθ} t(2^j x) built from the
/// triad shape t: θ-Hölder like a Weierstrass sum, but with phase-coherent
/// dyadic levels so the energy flux scales like δ^{3θ-1} instead of
/// cancelling between random phases.
pub fn cascade_field(grid: PeriodicGrid, theta: f64, levels: u32) -> Result<Field> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0,1), got {theta}"
        )));
    }
    let max_levels = grid.n().trailing_zeros().saturating_sub(2);
    if levels == 0 || levels > max_levels {
        return Err(Error::ResolutionExhausted(format!(
            "levels must lie in [1, log2(n) - 2 = {max_levels}], got {levels}"
        )));
    }
    let d = grid.d();
    let mut y = [0f64; crate::grid::MAX_DIM];
    Field::from_fn(grid, d, move |x, c| {
        (0..levels)
            .map(|j| {
                let scale = (1u64 << j) as f64;
                for (ya, xa) in y[..d].iter_mut().zip(x) {
                    *ya = (xa * scale).fract();
                }
                scale.powf(-theta) * triad_component(&y[..d], c)
            })
            .sum()
    })
}

/// Everything measured about a synthesized field against the hypotheses it
/// was built to satisfy. Failures are recorded, never raised.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// Uniform-in-time dimension estimate; None for an all-empty family.
    pub gamma_hat: Option<f64>,
    pub gamma_fit: Option<ScalingFit>,
    pub theta_target: f64,
    /// Mean of per-slice Hölder fits.
    pub theta_hat: f64,
    pub theta_slice_range: (f64, f64),
    pub kappa_target: f64,
    /// -slope of the shell-max gradient fit; 0 by convention when the
    /// family is empty (no shells exist).
    pub kappa_hat: Option<f64>,
    pub kappa_fit: Option<ScalingFit>,
    /// Finest shell edge kept in the κ fit after the oscillation-resolution
    /// cut (only for oscillatory profiles with α > 0).
    pub kappa_shell_cut: Option<f64>,
    pub space_filling: bool,
    /// Measured dimension sits below the conservation threshold.
    pub dim_ok: bool,
    /// Measured κ̂ within the admissible blow-up budget.
    pub kappa_ok: bool,
    /// Field at least as regular as the declared θ.
    pub holder_ok: bool,
    pub threshold: f64,
}

/// Dyadic shells covering the annulus [4/n, 1/8], optionally cut where an
/// oscillatory profile is no longer resolved by the grid.
fn gradient_shells(
    grid: &PeriodicGrid,
    alpha: f64,
) -> (u32, u32, Option<f64>) {
    let i_max_res = grid.n().trailing_zeros() - 2; // lower edge 4/n
    let i_min = 4u32; // upper edge 1/8
    let mut cut = None;
    let mut i_max = i_max_res;
    if alpha > 0.0 {
        // Keep node-to-node phase change of sin(dist^-α) below π/4:
        // resolved when dist >= (8α/n)^(1/(1+α)).
        let d_res = (8.0 * alpha / grid.n() as f64).powf(1.0 / (1.0 + alpha));
        let i_res = (1.0 / d_res).log2().floor() as u32;
        if i_res < i_max {
            i_max = i_res;
            cut = Some((2f64).powi(-(i_res as i32)));
        }
    }
    (i_min, i_max, cut)
}

/// Fit of log max-per-shell |∇v| against log dist over dyadic shells in
/// [4/n, 1/8]. Values are pre-scaled by the caller (per-slice 1/C(t)).
fn shell_gradient_fit(
    shell_max: &[(f64, f64)],
) -> Result<ScalingFit> {
    fit_exponent(shell_max)
}

/// Measure a synthesized TimeField against the conservation hypotheses:
/// dimension estimate, per-slice Hölder exponent, gradient blow-up slope,
/// and the pass/fail of the κ and dimension conditions at measured values.
pub fn verify_hypotheses(
    v: &TimeField,
    fam: &SingularSetFamily,
    spec: &SynthesisSpec,
    r: Integrability,
) -> Result<HypothesisReport> {
    let grid = v.grid();
    if grid != fam.grid() {
        return Err(Error::InvalidGrid(
            "field and family grids disagree".into(),
        ));
    }
    let d = grid.d();
    let theta = spec.theta;
    let kappa_target = spec.kappa();
    let threshold = gamma_threshold(theta, r, kappa_target, d).unwrap_or(f64::NAN);

    // Dimension of the family.
    let (gamma_hat, gamma_fit) = if fam.all_empty() {
        (None, None)
    } else {
        let ladder = crate::sets::default_dimension_ladder(grid);
        let fit = uniform_minkowski_dimension(fam, &ladder)?;
        (Some(fit.exponent), Some(fit))
    };

    // Per-slice Hölder exponents from sup-norm increments.
    let dirs = DirectionSet::with_random(grid, 2, spec.seed ^ 0x7d1);
    let j_max = grid.n().trailing_zeros() - 2;
    let ladder =
        crate::numeric::dyadic_ladder(3, j_max.min(12));
    let mut theta_min = f64::INFINITY;
    let mut theta_max = f64::NEG_INFINITY;
    let mut theta_sum = 0.0;
    for slice in v.slices() {
        let fit = holder_exponent_fit(slice, &ladder, &dirs)?;
        theta_min = theta_min.min(fit.exponent);
        theta_max = theta_max.max(fit.exponent);
        theta_sum += fit.exponent;
    }
    let theta_hat = theta_sum / v.slices().len() as f64;

    // Gradient blow-up slope over dyadic shells, envelope over slices,
    // normalized per slice by C(t).
    let alpha = match spec.profile {
        BlowupProfile::Oscillatory { alpha } => alpha,
        BlowupProfile::Flattened { .. } => 0.0,
    };
    let (kappa_hat, kappa_fit, kappa_shell_cut) = if fam.all_empty() {
        (Some(0.0), None, None)
    } else {
        let (i_min, i_max, cut) = gradient_shells(grid, alpha);
        if i_max < i_min + 3 {
            // Too few resolved shells to fit; record nothing rather than a
            // garbage slope.
            (None, None, cut)
        } else {
            let shells = (i_max - i_min + 1) as usize;
            let mut env = vec![0.0f64; shells];
            for (k, slice) in v.slices().iter().enumerate() {
                let set = fam.set_for_slice(k);
                if set.is_empty() {
                    continue;
                }
                let dist = set.distance_field()?;
                let c_t = spec.amplitude.sample(k, v.slices().len(), fam.horizon());
                let grad = gradient(slice);
                for node in 0..grid.node_count() {
                    let dval = dist.at(node);
                    if dval <= 0.0 {
                        continue;
                    }
                    let i = (-dval.log2()).ceil() as i64;
                    if i < i_min as i64 || i > i_max as i64 {
                        continue;
                    }
                    let idx = (i - i_min as i64) as usize;
                    let g = grad.frobenius(node) / c_t;
                    if g > env[idx] {
                        env[idx] = g;
                    }
                }
            }
            let pts: Vec<(f64, f64)> = (0..shells)
                .map(|idx| {
                    let i = i_min + idx as u32;
                    // Geometric midpoint of the shell [2^-i, 2^-i+1].
                    ((2f64).powf(-(i as f64) + 0.5), env[idx])
                })
                .collect();
            // A set that fills the torus (or leaves too few populated
            // shells) has no measurable blow-up rate; record nothing.
            match shell_gradient_fit(&pts) {
                Ok(fit) => (Some(-fit.exponent), Some(fit), cut),
                Err(Error::InsufficientScalingRange { .. })
                | Err(Error::DegenerateLadder(_)) => (None, None, cut),
                Err(e) => return Err(e),
            }
        }
    };

    let space_filling = gamma_hat.map_or(false, |g| g >= d as f64 - 0.1);
    let dim_ok = match gamma_hat {
        None => true, // empty set: Lipschitz regime, the dimension bound is vacuous
        Some(g) => threshold.is_finite() && g < threshold,
    };
    let kappa_bound = r.ratio_inverse() * d as f64 * (1.0 - theta) / (1.0 - 3.0 * theta);
    let kappa_ok = kappa_hat.map_or(true, |k| k < kappa_bound);
    let holder_ok = theta_hat >= theta - 0.05;

    Ok(HypothesisReport {
        gamma_hat,
        gamma_fit,
        theta_target: theta,
        theta_hat,
        theta_slice_range: (theta_min, theta_max),
        kappa_target,
        kappa_hat,
        kappa_fit,
        kappa_shell_cut,
        space_filling,
        dim_ok,
        kappa_ok,
        holder_ok,
        threshold,
    })
}

/// Slope of log|∇v| against log dist for one slice over the annulus
/// [4/n, 1/8], shells cut where an oscillation of rate α aliases.
pub fn gradient_blowup_fit(
    slice: &Field,
    dist: &DistanceField,
    alpha: f64,
) -> Result<ScalingFit> {
    let grid = slice.grid();
    let (i_min, i_max, _) = gradient_shells(grid, alpha);
    if i_max < i_min + 3 {
        return Err(Error::InsufficientScalingRange {
            got: (i_max.saturating_sub(i_min) + 1) as usize,
            need: 4,
        });
    }
    let shells = (i_max - i_min + 1) as usize;
    let mut env = vec![0.0f64; shells];
    let grad = gradient(slice);
    for node in 0..grid.node_count() {
        let dval = dist.at(node);
        if dval <= 0.0 {
            continue;
        }
        let i = (-dval.log2()).ceil() as i64;
        if i < i_min as i64 || i > i_max as i64 {
            continue;
        }
        let g = grad.frobenius(node);
        let idx = (i - i_min as i64) as usize;
        if g > env[idx] {
            env[idx] = g;
        }
    }
    let pts: Vec<(f64, f64)> = (0..shells)
        .map(|idx| {
            let i = i_min + idx as u32;
            ((2f64).powf(-(i as f64) + 0.5), env[idx])
        })
        .collect();
    shell_gradient_fit(&pts)
}

//! End-to-end experiment orchestration: the dimension threshold Γ(θ, r, κ, d),
//! the ε(h) selection, the I/II/III increment decomposition, dyadic annulus
//! sums, regime verdicts, threshold sweeps, and report serialization.

use crate::error::{Error, Result};
use crate::fit::{fit_exponent, ScalingFit};
use crate::flux::{flux_scaling, FluxReport};
use crate::grid::{shift, Field, LatticeVector, PeriodicGrid, TimeField, MAX_DIM};
use crate::numeric::{fmt_g17, CompensatedSum};
use crate::sets::{
    make_cantor, make_empty, make_full, make_hyperplane, make_point_cloud, set_for_gamma_target,
    SingularSet, SingularSetFamily,
};
use crate::synthesis::{
    singular_field, smooth_field, verify_hypotheses, weierstrass_field, AmplitudeProfile,
    BlowupProfile, HypothesisReport, SynthesisSpec,
};
use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// The time-integrability exponent r of C(t), with r = ∞ first-class
/// (the Hölder case). Serializes as a number or the string "inf".
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrability {
    Finite(f64),
    Infinite,
}

impl Integrability {
    /// q = r/(r−1); 1 for r = ∞.
    pub fn ratio(&self) -> f64 {
        match self {
            Integrability::Infinite => 1.0,
            Integrability::Finite(r) => r / (r - 1.0),
        }
    }

    /// (r−1)/r = 1/q; 1 for r = ∞.
    pub fn ratio_inverse(&self) -> f64 {
        match self {
            Integrability::Infinite => 1.0,
            Integrability::Finite(r) => (r - 1.0) / r,
        }
    }

    /// The raw exponent as a float (∞ for Infinite).
    pub fn lebesgue(&self) -> f64 {
        match self {
            Integrability::Infinite => f64::INFINITY,
            Integrability::Finite(r) => *r,
        }
    }

    fn label(&self) -> String {
        match self {
            Integrability::Infinite => "inf".into(),
            Integrability::Finite(r) => format!("{r}"),
        }
    }
}

impl Serialize for Integrability {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Integrability::Infinite => ser.serialize_str("inf"),
            Integrability::Finite(r) => ser.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Integrability {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Integrability;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number > 1 or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Integrability, E> {
                Ok(Integrability::Finite(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Integrability, E> {
                Ok(Integrability::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Integrability, E> {
                Ok(Integrability::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Integrability, E> {
                if v == "inf" || v == "infinity" {
                    Ok(Integrability::Infinite)
                } else {
                    Err(E::custom(format!("unknown integrability \"{v}\"")))
                }
            }
        }
        de.deserialize_any(V)
    }
}

/// Branch test κ ≤ 1−θ with an ulp-scale tolerance: the junction value
/// κ = 1−θ must land on the first branch even when 1−θ rounds just below
/// the stored κ (e.g. θ = 0.2, κ = 0.8).
pub(crate) fn natural_rate_branch(theta: f64, kappa: f64) -> bool {
    kappa <= (1.0 - theta) * (1.0 + 1e-12)
}

/// The dimension threshold Γ(θ, r, κ, d):
/// d − q(1−3θ) for κ ≤ 1−θ, else d − (κ/(1−θ))·q·(1−3θ), with q = r/(r−1).
/// An answer ≤ 0 means the hypotheses admit no set at all.
pub fn gamma_threshold(theta: f64, r: Integrability, kappa: f64, d: usize) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0, 1/3), got {theta}"
        )));
    }
    if let Integrability::Finite(rv) = r {
        if !(rv > 1.0 && rv.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "integrability exponent must satisfy r > 1, got {rv}"
            )));
        }
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be finite and >= 0, got {kappa}"
        )));
    }
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "dimension must lie in 1..={MAX_DIM}, got {d}"
        )));
    }
    let q = r.ratio();
    let threshold = if natural_rate_branch(theta, kappa) {
        d as f64 - q * (1.0 - 3.0 * theta)
    } else {
        d as f64 - (kappa / (1.0 - theta)) * q * (1.0 - 3.0 * theta)
    };
    if threshold <= 0.0 {
        return Err(Error::EmptyTheoremRegime {
            threshold,
            theta,
            r: r.label(),
            kappa,
            d,
        });
    }
    Ok(threshold)
}

/// ε(h): 2|h| when κ ≤ 1−θ, else 2|h|^((1−θ)/κ). The output always
/// satisfies 2|h| ≤ ε; a result at or beyond ε₀ is an error.
pub fn epsilon_select(h: f64, theta: f64, kappa: f64, eps0: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "shift magnitude must lie in (0,1), got {h}"
        )));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps0 must lie in (0,1), got {eps0}"
        )));
    }
    let eps = if natural_rate_branch(theta, kappa) {
        2.0 * h
    } else {
        2.0 * h.powf((1.0 - theta) / kappa)
    };
    if eps >= eps0 {
        return Err(Error::HTooLargeForEps0 { h, eps0 });
    }
    Ok(eps)
}

/// Cubed-increment mass split over {dist ≤ ε}, {ε < dist ≤ ε₀}, {dist > ε₀}.
/// The three index sets partition the grid against one shared distance
/// field; an empty set uses the dist ≡ 1 convention (I = II = 0 when
/// ε₀ < 1).
pub fn term_decomposition(
    v: &Field,
    s: &SingularSet,
    h: &LatticeVector,
    eps: f64,
    eps0: f64,
) -> Result<(f64, f64, f64)> {
    let grid = v.grid();
    if grid != s.grid() {
        return Err(Error::InvalidGrid(
            "field and singular set grids disagree".into(),
        ));
    }
    let hmag = h.length(grid);
    if !(2.0 * hmag <= eps * (1.0 + 1e-12) && eps < eps0) {
        return Err(Error::InvalidParameter(format!(
            "need 2|h| <= eps < eps0, got |h|={hmag}, eps={eps}, eps0={eps0}"
        )));
    }
    let shifted = shift(v, h)?;
    let comps = v.components();
    let mut term_i = CompensatedSum::new();
    let mut term_ii = CompensatedSum::new();
    let mut term_iii = CompensatedSum::new();
    let dist = if s.is_empty() {
        None
    } else {
        Some(s.distance_field()?)
    };
    for node in 0..grid.node_count() {
        let mut m2 = 0.0;
        for c in 0..comps {
            let dvc = shifted.samples()[node * comps + c] - v.samples()[node * comps + c];
            m2 += dvc * dvc;
        }
        let cubed = m2 * m2.sqrt();
        let dval = dist.map_or(1.0, |df| df.at(node));
        if dval <= eps {
            term_i.add(cubed);
        } else if dval <= eps0 {
            term_ii.add(cubed);
        } else {
            term_iii.add(cubed);
        }
    }
    let vol = grid.cell_volume();
    Ok((
        term_i.value() * vol,
        term_ii.value() * vol,
        term_iii.value() * vol,
    ))
}

/// Shell-weighted mass of the annulus {ε < dist ≤ ε₀} together with the
/// direct integral it bounds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AnnulusSum {
    /// Σ_i 2^{iκq} · volume(A_i) over dyadic shells A_i = {2^{−i} ≤ dist < 2^{−i+1}}
    /// clipped to the annulus.
    pub shell_sum: f64,
    /// Σ_{ε < dist ≤ ε₀} dist^{−κq} · n^{−d}. The two bound each other
    /// within a factor 2^{κq}.
    pub direct: f64,
}

/// Dyadic shell decomposition of the annulus integral from the proof's
/// middle term. The finest shell index j satisfies ε/2 ≤ 2^{−j} ≤ ε and
/// must stay above the grid scale.
pub fn dyadic_annulus_sum(
    s: &SingularSet,
    kappa: f64,
    r: Integrability,
    eps: f64,
    eps0: f64,
) -> Result<AnnulusSum> {
    if !(eps > 0.0 && eps < eps0 && eps0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < eps < eps0 < 1, got eps={eps}, eps0={eps0}"
        )));
    }
    let grid = s.grid();
    let j = (-eps.log2()).ceil() as u32;
    if (2f64).powi(-(j as i32)) < 2.0 / grid.n() as f64 {
        return Err(Error::UnresolvedShells { i: j });
    }
    if s.is_empty() {
        // dist ≡ 1 > ε₀: the annulus is empty.
        return Ok(AnnulusSum {
            shell_sum: 0.0,
            direct: 0.0,
        });
    }
    let i_min = (-eps0.log2()).ceil() as i64;
    let kq = kappa * r.ratio();
    let dist = s.distance_field()?;
    let shells = (j as i64 - i_min + 1).max(0) as usize;
    let mut counts = vec![0u64; shells];
    let mut direct = CompensatedSum::new();
    for node in 0..grid.node_count() {
        let dval = dist.at(node);
        if !(dval > eps && dval <= eps0) {
            continue;
        }
        let i = (-dval.log2()).ceil() as i64;
        let idx = (i - i_min).clamp(0, shells as i64 - 1) as usize;
        counts[idx] += 1;
        direct.add(dval.powf(-kq));
    }
    let mut shell = CompensatedSum::new();
    for (idx, &c) in counts.iter().enumerate() {
        let i = i_min + idx as i64;
        shell.add((kq * i as f64).exp2() * c as f64);
    }
    let vol = grid.cell_volume();
    Ok(AnnulusSum {
        shell_sum: shell.value() * vol,
        direct: direct.value() * vol,
    })
}

/// Which singular set an experiment runs against.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDescriptor {
    Empty,
    Full,
    PointCloud { count: usize },
    Hyperplane { axis: usize },
    Cantor { removed: f64, depth: u32, axes: Vec<usize> },
    GammaTarget { gamma: f64 },
}

impl SetDescriptor {
    pub fn build(&self, grid: PeriodicGrid, seed: u64) -> Result<SingularSet> {
        match self {
            SetDescriptor::Empty => Ok(make_empty(grid)),
            SetDescriptor::Full => Ok(make_full(grid)),
            SetDescriptor::PointCloud { count } => make_point_cloud(grid, *count, seed),
            SetDescriptor::Hyperplane { axis } => make_hyperplane(grid, *axis),
            SetDescriptor::Cantor {
                removed,
                depth,
                axes,
            } => make_cantor(grid, *removed, *depth, axes),
            SetDescriptor::GammaTarget { gamma } => set_for_gamma_target(grid, *gamma),
        }
    }

    /// The γ target when the descriptor carries one.
    pub fn gamma_target(&self) -> Option<f64> {
        match self {
            SetDescriptor::GammaTarget { gamma } => Some(*gamma),
            _ => None,
        }
    }
}

/// Which velocity field the experiment synthesizes over the set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// The blow-up profile field; its profile is derived from (θ, κ):
    /// κ ≥ 1−θ oscillatory with α = κ/(1−θ) − 1, else flattened.
    Singular,
    Weierstrass { levels: u32 },
    Smooth { modes: usize },
}

fn derived_profile(theta: f64, kappa: f64) -> BlowupProfile {
    if kappa >= 1.0 - theta {
        BlowupProfile::Oscillatory {
            alpha: kappa / (1.0 - theta) - 1.0,
        }
    } else {
        BlowupProfile::Flattened { kappa }
    }
}

fn default_eps0() -> f64 {
    0.125
}

fn default_horizon() -> f64 {
    1.0
}

fn default_amplitude() -> AmplitudeProfile {
    AmplitudeProfile::Constant { value: 1.0 }
}

/// Optional flux-split probe appended to a run (δ = ε ladder).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FluxProbe {
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    pub theta: f64,
    pub r: Integrability,
    pub kappa: f64,
    pub set: SetDescriptor,
    pub field: FieldKind,
    pub slices: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub h_ladder: Vec<f64>,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: AmplitudeProfile,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<FluxProbe>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        PeriodicGrid::new(self.d, self.n)?;
        if !(self.theta > 0.0 && self.theta < 1.0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0, 1/3), got {}",
                self.theta
            )));
        }
        let r_min = 3.0 / (2.0 + 3.0 * self.theta);
        if !(self.r.lebesgue() > r_min) {
            return Err(Error::InvalidParameter(format!(
                "integrability exponent must exceed 3/(2+3theta) = {r_min}, got {}",
                self.r.label()
            )));
        }
        // κ compatibility is exactly positivity of the threshold.
        gamma_threshold(self.theta, self.r, self.kappa, self.d)?;
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps0 must lie in (0,1), got {}",
                self.eps0
            )));
        }
        if self.h_ladder.len() < 4 {
            return Err(Error::InsufficientScalingRange {
                got: self.h_ladder.len(),
                need: 4,
            });
        }
        let spacing = 1.0 / self.n as f64;
        for &h in &self.h_ladder {
            if !(h > 0.0 && h < self.eps0 / 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "every |h| rung must lie in (0, eps0/2), got {h} with eps0 {}",
                    self.eps0
                )));
            }
            if h < spacing * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "|h| rung {h} is below the grid spacing {spacing}"
                )));
            }
        }
        if self.slices == 0 {
            return Err(Error::InvalidParameter("need at least one slice".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some(probe) = &self.flux {
            if probe.deltas.is_empty() {
                return Err(Error::InvalidParameter("empty flux delta ladder".into()));
            }
        }
        Ok(())
    }

    /// The synthesis spec this config induces over a built family.
    pub fn synthesis_spec(&self, fam: &SingularSetFamily) -> SynthesisSpec {
        SynthesisSpec {
            theta: self.theta,
            profile: derived_profile(self.theta, self.kappa),
            amplitude: self.amplitude,
            slices: self.slices,
            seed: self.seed,
            family: fam.clone(),
        }
    }
}

/// Verdict of a run, stated as a regime consistency check (never as a proof
/// that energy is conserved; no PDE is solved here).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeVerdict {
    /// Empty singular set: the Lipschitz argument applies directly.
    ConservativeLipschitz,
    /// γ̂ below threshold and α̂ > 0: consistent with the theorem.
    TheoremRegimeConservative,
    /// Dimension at or above threshold, or the increment budget failed.
    OutsideRegime,
    /// γ̂ within fit error of the threshold: unresolvable at this grid.
    Inconclusive,
}

impl fmt::Display for RegimeVerdict {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let s = match self {
            RegimeVerdict::ConservativeLipschitz => "conservative (Lipschitz regime)",
            RegimeVerdict::TheoremRegimeConservative => "theorem regime, conservative",
            RegimeVerdict::OutsideRegime => "outside regime",
            RegimeVerdict::Inconclusive => "inconclusive (near threshold)",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TermRow {
    pub time_index: usize,
    pub t: f64,
    pub h: f64,
    pub eps: f64,
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HIntegral {
    pub h: f64,
    pub eps: f64,
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    pub total: f64,
}

/// Per-(t, h) decomposition values plus their Δt-weighted time integrals.
#[derive(Clone, Debug, Serialize, Default)]
pub struct TermBreakdown {
    pub rows: Vec<TermRow>,
    pub integrals: Vec<HIntegral>,
}

impl TermBreakdown {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,h,eps,I,II,III\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_g17(row.t),
                fmt_g17(row.h),
                fmt_g17(row.eps),
                fmt_g17(row.i),
                fmt_g17(row.ii),
                fmt_g17(row.iii)
            ));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub threshold: f64,
    pub gamma_hat: Option<f64>,
    pub theta_hat: f64,
    pub kappa_hat: Option<f64>,
    /// α̂ from the fitted exponent 1 + α̂ of the time-integrated totals.
    pub alpha_hat: f64,
    pub exponent_fit: ScalingFit,
    /// Fit of the near-set term I alone (the budget term).
    pub term_i_fit: Option<ScalingFit>,
    /// First-branch increment budget 3θ + (d−γ̂)(r−1)/r when applicable.
    pub budget_bound: Option<f64>,
    pub hypotheses: HypothesisReport,
    pub verdict: RegimeVerdict,
    pub verdict_note: String,
    pub breakdown: TermBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux: Option<FluxReport>,
}

fn axis_steps(grid: &PeriodicGrid, h: f64) -> Result<i64> {
    let steps = (h * grid.n() as f64).round() as i64;
    if steps < 1 {
        return Err(Error::OffGridShift(format!(
            "|h| = {h} rounds to zero nodes at n = {}",
            grid.n()
        )));
    }
    Ok(steps)
}

/// One h rung: ε selection plus the per-slice decomposition, averaged over
/// the d axis directions at the realized lattice magnitude.
fn decompose_rung(
    cfg: &ExperimentConfig,
    grid: &PeriodicGrid,
    v: &TimeField,
    fam: &SingularSetFamily,
    h: f64,
) -> Result<(Vec<TermRow>, HIntegral)> {
    let d = grid.d();
    let steps = axis_steps(grid, h)?;
    let h_real = steps as f64 / grid.n() as f64;
    let eps = epsilon_select(h_real, cfg.theta, cfg.kappa, cfg.eps0)?;
    let dt = v.dt();
    let mut rows = Vec::with_capacity(v.slices().len());
    let mut int_i = CompensatedSum::new();
    let mut int_ii = CompensatedSum::new();
    let mut int_iii = CompensatedSum::new();
    for (k, slice) in v.slices().iter().enumerate() {
        let set = fam.set_for_slice(k);
        let mut acc = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
        for axis in 0..d {
            let mut sv = [0i64; MAX_DIM];
            sv[axis] = steps;
            let hvec = LatticeVector::from_steps(grid, &sv[..d])?;
            let (a, b, c) = term_decomposition(slice, set, &hvec, eps, cfg.eps0)?;
            acc[0].add(a);
            acc[1].add(b);
            acc[2].add(c);
        }
        let inv = 1.0 / d as f64;
        let (i, ii, iii) = (
            acc[0].value() * inv,
            acc[1].value() * inv,
            acc[2].value() * inv,
        );
        rows.push(TermRow {
            time_index: k,
            t: v.time_of(k),
            h: h_real,
            eps,
            i,
            ii,
            iii,
        });
        int_i.add(i * dt);
        int_ii.add(ii * dt);
        int_iii.add(iii * dt);
    }
    let (i, ii, iii) = (int_i.value(), int_ii.value(), int_iii.value());
    Ok((
        rows,
        HIntegral {
            h: h_real,
            eps,
            i,
            ii,
            iii,
            total: i + ii + iii,
        },
    ))
}

fn synthesize(
    cfg: &ExperimentConfig,
    fam: &SingularSetFamily,
) -> Result<(TimeField, SynthesisSpec)> {
    let grid = *fam.grid();
    let spec = cfg.synthesis_spec(fam);
    let v = match &cfg.field {
        FieldKind::Singular => singular_field(&spec)?,
        FieldKind::Weierstrass { levels } => {
            let mut slices = Vec::with_capacity(cfg.slices);
            for k in 0..cfg.slices {
                let c_t = cfg.amplitude.sample(k, cfg.slices, cfg.horizon);
                let mut f =
                    weierstrass_field(grid, cfg.theta, *levels, cfg.seed.wrapping_add(k as u64))?;
                for x in f.samples_mut() {
                    *x *= c_t;
                }
                f.set_time_index(Some(k as i64));
                slices.push(f);
            }
            TimeField::new(slices, cfg.horizon)?
        }
        FieldKind::Smooth { modes } => {
            let mut slices = Vec::with_capacity(cfg.slices);
            for k in 0..cfg.slices {
                let c_t = cfg.amplitude.sample(k, cfg.slices, cfg.horizon);
                let raw = smooth_field(grid, *modes, cfg.seed.wrapping_add(k as u64))?;
                let grad_max =
                    crate::grid::integrate(&crate::grid::gradient(&raw), f64::INFINITY)?;
                let scale = if grad_max > 0.0 { c_t / grad_max } else { 0.0 };
                let samples = raw.samples().iter().map(|&x| x * scale).collect();
                let mut f = Field::from_samples(grid, raw.components(), samples)?;
                f.set_time_index(Some(k as i64));
                slices.push(f);
            }
            TimeField::new(slices, cfg.horizon)?
        }
    };
    Ok((v, spec))
}

/// The full pipeline: build set and field, verify hypotheses, evaluate the
/// threshold, decompose increments per (h, t), fit the integrated totals,
/// and state the regime verdict. Stage names are attached to errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = PeriodicGrid::new(cfg.d, cfg.n)?;
    let set = cfg
        .set
        .build(grid, cfg.seed)
        .map_err(|e| e.in_stage("set"))?;
    let fam = SingularSetFamily::constant(set, cfg.horizon).map_err(|e| e.in_stage("set"))?;

    let (v, spec) = synthesize(cfg, &fam).map_err(|e| e.in_stage("field"))?;

    let hypotheses =
        verify_hypotheses(&v, &fam, &spec, cfg.r).map_err(|e| e.in_stage("hypotheses"))?;
    let threshold = gamma_threshold(cfg.theta, cfg.r, cfg.kappa, cfg.d)
        .map_err(|e| e.in_stage("threshold"))?;

    let rungs: Vec<(Vec<TermRow>, HIntegral)> = cfg
        .h_ladder
        .par_iter()
        .map(|&h| decompose_rung(cfg, &grid, &v, &fam, h))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("decomposition"))?;
    let mut breakdown = TermBreakdown::default();
    for (rows, integral) in rungs {
        breakdown.rows.extend(rows);
        breakdown.integrals.push(integral);
    }

    let total_pts: Vec<(f64, f64)> = breakdown
        .integrals
        .iter()
        .map(|r| (r.h, r.total))
        .collect();
    let exponent_fit = fit_exponent(&total_pts).map_err(|e| e.in_stage("fit"))?;
    let alpha_hat = exponent_fit.exponent - 1.0;
    let term_i_pts: Vec<(f64, f64)> = breakdown.integrals.iter().map(|r| (r.h, r.i)).collect();
    let term_i_fit = match fit_exponent(&term_i_pts) {
        Ok(f) => Some(f),
        Err(Error::InsufficientScalingRange { .. }) | Err(Error::DegenerateLadder(_)) => None,
        Err(e) => return Err(e.in_stage("fit")),
    };
    let budget_bound = match (natural_rate_branch(cfg.theta, cfg.kappa), hypotheses.gamma_hat) {
        (true, Some(g)) => {
            Some(3.0 * cfg.theta + (cfg.d as f64 - g) * cfg.r.ratio_inverse())
        }
        _ => None,
    };

    let gamma_band = hypotheses
        .gamma_fit
        .as_ref()
        .map_or(0.0, |f| 2.0 * f.std_error);
    let verdict = if fam.all_empty() {
        RegimeVerdict::ConservativeLipschitz
    } else {
        let g = hypotheses.gamma_hat.unwrap_or(cfg.d as f64);
        if (g - threshold).abs() <= gamma_band {
            RegimeVerdict::Inconclusive
        } else if g < threshold && alpha_hat > 0.0 {
            RegimeVerdict::TheoremRegimeConservative
        } else {
            RegimeVerdict::OutsideRegime
        }
    };
    let sharp = cfg.d as f64 - 1.0 + 3.0 * cfg.theta;
    let verdict_note = format!(
        "contrapositive reading: anomalous dissipation with this regularity requires gamma_hat >= {} (the d-dimensional analog of 2+3theta)",
        fmt_g17(sharp)
    );

    let flux = match &cfg.flux {
        Some(probe) => Some(
            flux_scaling(&v.slices()[0], fam.set_for_slice(0), &probe.deltas)
                .map_err(|e| e.in_stage("flux"))?,
        ),
        None => None,
    };

    Ok(ExperimentReport {
        config: cfg.clone(),
        threshold,
        gamma_hat: hypotheses.gamma_hat,
        theta_hat: hypotheses.theta_hat,
        kappa_hat: hypotheses.kappa_hat,
        alpha_hat,
        exponent_fit,
        term_i_fit,
        budget_bound,
        hypotheses,
        verdict,
        verdict_note,
        breakdown,
        flux,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub gamma_target: f64,
    pub gamma_hat: Option<f64>,
    pub alpha_hat: f64,
    pub alpha_err: f64,
    pub verdict: RegimeVerdict,
    /// α̂ statistically indistinguishable from zero (or verdict near
    /// threshold): the run cannot resolve the regime.
    pub inconclusive: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub threshold: f64,
    /// Rows sorted by γ target.
    pub rows: Vec<SweepRow>,
    /// α̂ decreasing along γ̂ within combined fit errors.
    pub decreasing_within_error: bool,
    /// γ estimate where α̂ crosses zero (linear interpolation), when the
    /// sign changes along the sweep.
    pub crossing_estimate: Option<f64>,
}

/// Run the base experiment across a list of γ targets and report the trend
/// of α̂ against the measured dimension.
pub fn threshold_sweep(base: &ExperimentConfig, targets: &[f64]) -> Result<SweepTable> {
    if targets.len() < 3 {
        return Err(Error::NeedThreeTargets(targets.len()));
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = gamma_threshold(base.theta, base.r, base.kappa, base.d)?;
    let mut rows = Vec::with_capacity(sorted.len());
    for &gamma in &sorted {
        let mut cfg = base.clone();
        cfg.set = SetDescriptor::GammaTarget { gamma };
        let report = run_experiment(&cfg)?;
        let alpha_err = 3.0 * report.exponent_fit.std_error;
        let inconclusive = report.alpha_hat.abs() <= alpha_err
            || report.verdict == RegimeVerdict::Inconclusive;
        rows.push(SweepRow {
            gamma_target: gamma,
            gamma_hat: report.gamma_hat,
            alpha_hat: report.alpha_hat,
            alpha_err,
            verdict: report.verdict,
            inconclusive,
        });
    }
    let mut decreasing = true;
    for w in rows.windows(2) {
        if w[1].alpha_hat >= w[0].alpha_hat + w[0].alpha_err + w[1].alpha_err {
            decreasing = false;
        }
    }
    let mut crossing = None;
    for w in rows.windows(2) {
        let (a0, a1) = (w[0].alpha_hat, w[1].alpha_hat);
        if a0 > 0.0 && a1 <= 0.0 {
            let (g0, g1) = (
                w[0].gamma_hat.unwrap_or(w[0].gamma_target),
                w[1].gamma_hat.unwrap_or(w[1].gamma_target),
            );
            crossing = Some(g0 + (g1 - g0) * a0 / (a0 - a1));
            break;
        }
    }
    Ok(SweepTable {
        threshold,
        rows,
        decreasing_within_error: decreasing,
        crossing_estimate: crossing,
    })
}

/// Write report.json, terms.csv, flux.csv (when present), and the field and
/// set artifacts under `dir`.
pub fn write_report_dir(
    dir: &Path,
    report: &ExperimentReport,
    v: &TimeField,
    fam: &SingularSetFamily,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    fs::write(dir.join("terms.csv"), report.breakdown.to_csv())?;
    if let Some(flux) = &report.flux {
        fs::write(dir.join("flux.csv"), flux.to_csv())?;
    }
    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    for (k, slice) in v.slices().iter().enumerate() {
        crate::io::write_field_path(fields.join(format!("slice_{k:03}.fons")), slice)?;
    }
    let sets = dir.join("sets");
    fs::create_dir_all(&sets)?;
    for (idx, member) in fam.members() {
        let mut mask = member.to_field();
        mask.set_time_index(Some(*idx as i64));
        crate::io::write_field_path(sets.join(format!("member_{idx:03}.fons")), &mask)?;
    }
    let mut meta = fs::File::create(dir.join("family.json"))?;
    let doc = serde_json::json!({
        "horizon": fam.horizon(),
        "members": fam
            .members()
            .iter()
            .map(|(idx, s)| {
                serde_json::json!({
                    "time_index": idx,
                    "generator": s.tag(),
                    "occupied": s.occupied_count(),
                    "analytic_dim": s.analytic_dim(),
                })
            })
            .collect::<Vec<_>>(),
    });
    writeln!(meta, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Rebuild the experiment's field and family for artifact serialization
/// (the report itself does not carry the samples).
pub fn materialize(cfg: &ExperimentConfig) -> Result<(TimeField, SingularSetFamily)> {
    let grid = PeriodicGrid::new(cfg.d, cfg.n)?;
    let set = cfg.set.build(grid, cfg.seed)?;
    let fam = SingularSetFamily::constant(set, cfg.horizon)?;
    let (v, _) = synthesize(cfg, &fam)?;
    Ok((v, fam))
}

//! Test functions `f_ε`, smoothness scales and the per-scale external fields `u_j`.

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::{
    grad_n_max, laplacian_nn, norm_c2j, LatticeField, StepDistribution, TorusLattice,
};
use crate::multiscale::CovarianceDecomposition;
use crate::spectral::{continuum_green_form, covariance_ctilde, CovarianceParams, RadialBump};

/// Values of `|g|` below this are treated as outside the support.
pub const TRUNCATION: f64 = 1e-14;

/// Relative threshold defining the effective support of `u_j`.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

/// `f = ∂_i g` with `g` a radial bump centred at `centre`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothTestFunction {
    pub bump: RadialBump,
    pub centre: (f64, f64),
    /// 0 for `∂_1`, 1 for `∂_2`.
    pub direction: usize,
}

impl SmoothTestFunction {
    pub fn gaussian(width: f64, direction: usize) -> Self {
        Self {
            bump: RadialBump::Gaussian { width },
            centre: (0.0, 0.0),
            direction,
        }
    }

    pub fn polynomial(radius: f64, direction: usize) -> Self {
        Self {
            bump: RadialBump::Polynomial { radius, power: 4 },
            centre: (0.0, 0.0),
            direction,
        }
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.centre.0, y - self.centre.1);
        self.bump.value((dx * dx + dy * dy).sqrt())
    }

    fn g_truncated(&self, x: f64, y: f64) -> f64 {
        let v = self.g(x, y);
        if v.abs() < TRUNCATION {
            0.0
        } else {
            v
        }
    }

    /// `f(x) = ∂_i g(x)`.
    pub fn f(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.centre.0, y - self.centre.1);
        let r2 = dx * dx + dy * dy;
        let c = if self.direction == 0 { dx } else { dy };
        match self.bump {
            RadialBump::Gaussian { width } => {
                -c / (width * width) * (-r2 / (2.0 * width * width)).exp()
            }
            RadialBump::Polynomial { radius, power } => {
                let t = 1.0 - r2 / (radius * radius);
                if t <= 0.0 {
                    0.0
                } else {
                    -2.0 * power as f64 * c / (radius * radius) * t.powi(power as i32 - 1)
                }
            }
        }
    }

    /// Radius (continuum units, from the centre) outside which `|g| < TRUNCATION`.
    pub fn support_radius(&self) -> f64 {
        self.bump.cutoff_radius(TRUNCATION) + self.centre.0.abs().max(self.centre.1.abs())
    }

    /// `(f, (-Δ_{R²})^{-1} f)`.
    pub fn green_form(&self, tolerance: f64) -> Result<(f64, f64)> {
        continuum_green_form(&self.bump, 1.0, tolerance)
    }
}

/// Lattice test function with its mean correction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeTestFunction {
    pub field: LatticeField,
    pub eps: f64,
    /// Mean removed on the support after truncation.
    pub mean_correction: f64,
}

/// `f_ε(x) = ε(g(εx + εe_i) - g(εx))` on a torus of side `side`, sites taken in
/// centred coordinates, then made exactly mean-zero on its support.
pub fn build_feps(f: &SmoothTestFunction, eps: f64, side: usize) -> Result<LatticeTestFunction> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("ε = {eps} must lie in (0, 1)")));
    }
    let radius = f.support_radius() / eps + 1.0;
    if side as f64 <= 2.0 * radius {
        return Err(Error::SupportTooLarge(format!(
            "support radius {radius:.1} does not fit side {side}"
        )));
    }
    let centred = |c: usize| {
        if 2 * c > side {
            c as f64 - side as f64
        } else {
            c as f64
        }
    };
    let (ex, ey) = if f.direction == 0 {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let mut field = LatticeField::from_fn(side, |x, y| {
        let (x, y) = (centred(x), centred(y));
        eps * (f.g_truncated(eps * (x + ex), eps * (y + ey)) - f.g_truncated(eps * x, eps * y))
    });
    let support = field.support();
    let mean = if support.is_empty() {
        0.0
    } else {
        support.iter().map(|&s| field.at(s)).sum::<f64>() / support.len() as f64
    };
    for &s in &support {
        field.set(s, field.at(s) - mean);
    }
    Ok(LatticeTestFunction {
        field,
        eps,
        mean_correction: mean,
    })
}

/// `max_{k≤2} ‖(ε^{-1}∇)^k f_ε‖_∞ / ε²`.
pub fn feps_constant(t: &LatticeTestFunction) -> f64 {
    (0..=2)
        .map(|k| grad_n_max(&t.field, k) / t.eps.powi(k as i32))
        .fold(0.0, f64::max)
        / (t.eps * t.eps)
}

/// Smallest wrapped interval covering the occupied coordinates: `(start, extent)`.
fn circular_cover(occupied: &[bool]) -> (usize, usize) {
    let n = occupied.len();
    let Some(first) = occupied.iter().position(|&o| o) else {
        return (0, 0);
    };
    let mut best_gap = 0;
    let mut best_end = first;
    let mut gap = 0;
    for k in 1..=n {
        let i = (first + k) % n;
        if occupied[i] {
            if gap > best_gap {
                best_gap = gap;
                best_end = i;
            }
            gap = 0;
        } else {
            gap += 1;
        }
    }
    if best_gap == 0 {
        return (0, n);
    }
    (best_end, n - best_gap)
}

/// Bounding box of `supp f ∪ supp Δf` on the torus: `(x0, y0, extent_x, extent_y)`.
pub fn support_box(f: &LatticeField) -> Result<(usize, usize, usize, usize)> {
    let side = f.side();
    let lap = laplacian_nn(f)?;
    let mut cols = vec![false; side];
    let mut rows = vec![false; side];
    for i in 0..f.len() {
        if f.at(i) != 0.0 || lap.at(i) != 0.0 {
            cols[i % side] = true;
            rows[i / side] = true;
        }
    }
    let (x0, ex) = circular_cover(&cols);
    let (y0, ey) = circular_cover(&rows);
    if 2 * ex > side || 2 * ey > side {
        return Err(Error::SupportTooLarge(format!(
            "support extent {}x{} on side {side}",
            ex, ey
        )));
    }
    Ok((x0, y0, ex, ey))
}

/// Smallest `j ≥ 1` with `supp f ∪ supp Δf` inside a square of side `L^j/4`, capped at `N`.
pub fn smoothness_scale(f: &LatticeField, lattice: &TorusLattice) -> Result<u32> {
    if f.side() != lattice.side() {
        return Err(Error::SizeMismatch {
            expected: lattice.side(),
            got: f.side(),
        });
    }
    let (_, _, ex, ey) = support_box(f)?;
    let extent = ex.max(ey);
    Ok((1..=lattice.scales())
        .find(|&j| 4 * extent <= lattice.block_side(j))
        .unwrap_or(lattice.scales()))
}

/// Coordinate `c` minimising `max_{j_f≤j≤N} |c mod L^j - (L^j-1)/2| / L^j`.
pub fn centring_point(lattice: &TorusLattice, j_f: u32) -> usize {
    let cost = |c: usize| {
        (j_f.max(1)..=lattice.scales())
            .map(|j| {
                let b = lattice.block_side(j) as f64;
                ((c % lattice.block_side(j)) as f64 - (b - 1.0) / 2.0).abs() / b
            })
            .fold(0.0, f64::max)
    };
    (0..lattice.side())
        .min_by(|&a, &b| cost(a).total_cmp(&cost(b)))
        .unwrap_or(0)
}

/// Per-scale support diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScaleDiagnostic {
    pub scale: u32,
    /// Distance from the effective support of `u_j` to the boundary of the
    /// `j`-block containing the centre; infinite at the top scale, negative if
    /// the support leaves the block.
    pub margin: f64,
    /// `margin > 4`.
    pub within_block: bool,
    /// `‖u_j‖_{C²_j}`.
    pub c2_norm: f64,
}

/// `u_j` for `j_start ≤ j ≤ N` and the data they were built from.
#[derive(Debug, Clone)]
pub struct ExternalFieldSchedule {
    pub lattice: TorusLattice,
    /// Centred copy of the input.
    pub f: LatticeField,
    /// Translation applied to the input.
    pub shift: (i64, i64),
    pub centre: usize,
    pub j_f: u32,
    pub j_start: u32,
    /// `j_start < j_f`: the schedule starts below the smoothness scale.
    pub below_smoothness_scale: bool,
    /// `u[j-1] = u_j`, zero for `j < j_start`.
    pub u: Vec<LatticeField>,
    pub s: f64,
    pub gamma: f64,
    pub diagnostics: Vec<ScaleDiagnostic>,
    /// `κ_L max_j ‖u_j‖_{C²_j}`.
    pub m_u: f64,
}

impl ExternalFieldSchedule {
    pub fn u(&self, j: u32) -> &LatticeField {
        &self.u[j as usize - 1]
    }

    /// `Σ_j u_j`.
    pub fn total(&self) -> LatticeField {
        let mut acc = LatticeField::zeros(self.f.side());
        for u in &self.u {
            acc = acc.add(u);
        }
        acc
    }

    /// All scales at or above `j_start` satisfy the single-block support condition.
    pub fn assumption_holds(&self) -> bool {
        self.diagnostics.iter().all(|d| d.within_block)
    }
}

/// Schedule starting at the smoothness scale; requires `j_f < N`.
pub fn build_schedule(
    f: &LatticeField,
    dec: &CovarianceDecomposition,
    s: f64,
    gamma: f64,
) -> Result<ExternalFieldSchedule> {
    let j_f = smoothness_scale(f, dec.lattice())?;
    if j_f >= dec.scales() {
        return Err(Error::Precondition(format!(
            "smoothness scale {j_f} is not below N = {}",
            dec.scales()
        )));
    }
    build_schedule_at(f, dec, s, gamma, j_f)
}

/// Schedule starting at a chosen `1 ≤ j_start < N`.
pub fn build_schedule_at(
    f: &LatticeField,
    dec: &CovarianceDecomposition,
    s: f64,
    gamma: f64,
    j_start: u32,
) -> Result<ExternalFieldSchedule> {
    let lattice = *dec.lattice();
    let n = dec.scales();
    if j_start == 0 || j_start >= n {
        return Err(Error::ScaleOutOfRange {
            scale: j_start,
            scales: n,
        });
    }
    let total = f.sum();
    if total.abs() > 1e-10 {
        return Err(Error::NonzeroMean(total / f.len() as f64));
    }
    let j_f = smoothness_scale(f, &lattice)?;
    let (x0, y0, ex, ey) = support_box(f)?;
    let centre = centring_point(&lattice, j_f);
    let shift = (
        centre as i64 - (x0 + ex.saturating_sub(1) / 2) as i64,
        centre as i64 - (y0 + ey.saturating_sub(1) / 2) as i64,
    );
    let fc = f.translated(shift.0, shift.1);
    let g = fc.axpy(s * gamma, &laplacian_nn(&fc)?);

    let fft = Fft2::new(lattice.side());
    let side = lattice.side();
    let mut u = vec![LatticeField::zeros(side); n as usize];
    let low = dec.partial_sum(j_start)?;
    u[j_start as usize - 1] = fc
        .scale(gamma)
        .add(&fft.apply_multiplier(low.multiplier().values(), &g));
    for j in j_start + 1..=n {
        u[j as usize - 1] = fft.apply_multiplier(dec.gamma(j)?.multiplier().values(), &g);
    }

    let diagnostics: Vec<ScaleDiagnostic> = (j_start..=n)
        .map(|j| scale_diagnostic(&lattice, &u[j as usize - 1], j, centre))
        .collect();
    let kappa = 1.0 / (lattice.base() as f64).ln();
    let m_u = kappa * diagnostics.iter().map(|d| d.c2_norm).fold(0.0, f64::max);
    Ok(ExternalFieldSchedule {
        lattice,
        f: fc,
        shift,
        centre,
        j_f,
        j_start,
        below_smoothness_scale: j_start < j_f,
        u,
        s,
        gamma,
        diagnostics,
        m_u,
    })
}

fn scale_diagnostic(
    lattice: &TorusLattice,
    u: &LatticeField,
    j: u32,
    centre: usize,
) -> ScaleDiagnostic {
    let c2_norm = norm_c2j(u, lattice.base(), j);
    let b = lattice.block_side(j);
    if b == lattice.side() {
        return ScaleDiagnostic {
            scale: j,
            margin: f64::INFINITY,
            within_block: true,
            c2_norm,
        };
    }
    let lo = centre / b * b;
    let hi = lo + b - 1;
    let cut = SUPPORT_THRESHOLD * u.max_abs();
    let mut margin = f64::INFINITY;
    for i in 0..u.len() {
        if u.at(i).abs() <= cut || u.at(i) == 0.0 {
            continue;
        }
        let (x, y) = lattice.coords(i);
        let d = [
            x as i64 - lo as i64,
            hi as i64 - x as i64,
            y as i64 - lo as i64,
            hi as i64 - y as i64,
        ];
        margin = margin.min(*d.iter().min().expect("four sides") as f64);
    }
    ScaleDiagnostic {
        scale: j,
        margin,
        within_block: margin > 4.0,
        c2_norm,
    }
}

/// `max |γf + C_s(1 + sγΔ)f - Σ_j u_j|` using the undecomposed covariance.
pub fn completeness_residual(
    sched: &ExternalFieldSchedule,
    dec: &CovarianceDecomposition,
) -> Result<f64> {
    let fft = Fft2::new(sched.lattice.side());
    let g = sched
        .f
        .axpy(sched.s * sched.gamma, &laplacian_nn(&sched.f)?);
    let target = sched
        .f
        .scale(sched.gamma)
        .add(&dec.covariance().apply(&fft, &g)?);
    Ok(target.sub(&sched.total()).max_abs())
}

/// `ρ_j = ‖u_j‖_{C²_j} / (L^{2j_f} ‖f‖_{C²_{j_f}})` over `j_f ≤ j ≤ N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundsReport {
    pub ratios: Vec<(u32, f64)>,
    pub max: f64,
    pub argmax: u32,
    /// Least-squares slope of `log ρ_j` against `j`.
    pub slope: f64,
}

pub fn check_schedule_bounds(sched: &ExternalFieldSchedule) -> BoundsReport {
    let lat = &sched.lattice;
    let j0 = sched.j_f.max(sched.j_start);
    let denom =
        (lat.base() as f64).powi(2 * sched.j_f as i32) * norm_c2j(&sched.f, lat.base(), sched.j_f);
    let ratios: Vec<(u32, f64)> = (j0..=lat.scales())
        .map(|j| {
            let num = norm_c2j(sched.u(j), lat.base(), j);
            (j, if denom == 0.0 { 0.0 } else { num / denom })
        })
        .collect();
    let (argmax, max) =
        ratios.iter().copied().fold(
            (j0, 0.0),
            |acc, (j, r)| if r > acc.1 { (j, r) } else { acc },
        );
    let points: Vec<(f64, f64)> = ratios
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|&(j, r)| (j as f64, r.ln()))
        .collect();
    BoundsReport {
        ratios,
        max,
        argmax,
        slope: slope(&points),
    }
}

/// Least-squares slope; zero for fewer than two points.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// One row of the continuum-limit sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LimitRow {
    pub eps: f64,
    pub j_f: u32,
    pub quadform: f64,
    pub target: f64,
    pub ratio: f64,
}

/// `(f_ε, C̃ f_ε)` along an ε sweep with its Richardson limit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LimitTable {
    pub rows: Vec<LimitRow>,
    /// `(v_J² + s)^{-1} (f, (-Δ_{R²})^{-1} f)`.
    pub target: f64,
    pub extrapolated: f64,
    pub error: f64,
    /// The sweep is not monotone in ε.
    pub non_monotone: bool,
}

/// Richardson extrapolation in `ε²` through `(ε_1, q_1)` and `(ε_2, q_2)`.
pub fn richardson(e1: f64, q1: f64, e2: f64, q2: f64) -> f64 {
    (e1 * e1 * q2 - e2 * e2 * q1) / (e1 * e1 - e2 * e2)
}

/// Sweep over `eps` (any order) with the zero mode excluded.
pub fn quadform_ctilde_limit(
    f: &SmoothTestFunction,
    eps: &[f64],
    lattice: &TorusLattice,
    j: &StepDistribution,
    s: f64,
    gamma: f64,
) -> Result<LimitTable> {
    if eps.len() < 2 {
        return Err(Error::Config(
            "the sweep needs at least two values of ε".into(),
        ));
    }
    let side = lattice.side();
    let ct = covariance_ctilde(j, side, CovarianceParams { s, m2: 0.0, gamma })?;
    let fft = Fft2::new(side);
    let (green, _) = f.green_form(1e-10)?;
    let target = green / (j.v_squared() + s);
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::with_capacity(sorted.len());
    for &e in &sorted {
        let t = build_feps(f, e, side)?;
        let q = ct.quadratic_form(&fft, &t.field)?;
        rows.push(LimitRow {
            eps: e,
            j_f: smoothness_scale(&t.field, lattice)?,
            quadform: q,
            target,
            ratio: q / target,
        });
    }
    let k = rows.len();
    let (a, b) = (rows[k - 2], rows[k - 1]);
    let extrapolated = richardson(a.eps, a.quadform, b.eps, b.quadform);
    let error = if k >= 3 {
        let c = rows[k - 3];
        (extrapolated - richardson(c.eps, c.quadform, a.eps, a.quadform)).abs()
    } else {
        (b.quadform - a.quadform).abs()
    };
    let diffs: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].quadform - w[0].quadform)
        .collect();
    let non_monotone = diffs
        .iter()
        .any(|d| d.signum() != diffs[0].signum() && d.abs() > 1e-12 * target.abs());
    Ok(LimitTable {
        rows,
        target,
        extrapolated,
        error,
        non_monotone,
    })
}

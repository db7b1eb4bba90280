//! Inner tube volumes `vol(Ω₋ε)`, the upper inner Minkowski content and
//! dimension, the relative error `ε′(ε)`, and the slice constant `𝔐_Ω`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DomainDistance;
use crate::error::{Error, Result};
use crate::ifs_geometry::{make_p_koch, DomainKind, SnowflakeDomain};
use crate::point::{Aabb, Point};

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 1_000_000;

const MC_CHUNK: usize = 1 << 14;

/// How a tube volume was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeMethod {
    /// Closed-form upper bound for the classic snowflake.
    LapidusPearseBound,
    /// Adaptive quadtree rasterisation with certified cell classification.
    Raster,
    /// Uniform Monte Carlo sampling.
    MonteCarlo,
}

impl TubeMethod {
    /// Name used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            TubeMethod::LapidusPearseBound => "lapidus_pearse_bound",
            TubeMethod::Raster => "raster",
            TubeMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// Estimate of `vol(Ω₋ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimate {
    /// Tube width.
    pub epsilon: f64,
    /// Estimated (or bounding) volume.
    pub volume: f64,
    /// Method used.
    pub method: TubeMethod,
    /// Absolute uncertainty; zero for the certified bound.
    pub uncertainty: f64,
}

/// Content estimate with the scanned supremum of `ε′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentEstimate {
    /// Minkowski dimension.
    pub delta: f64,
    /// Upper content `M̄_δ`.
    pub content_upper: f64,
    /// Supremum of `ε′(ε)` over the scanned `ε`.
    pub eps_prime_sup: f64,
}

/// Minkowski dimension `−log_p 4` of the p-Koch curve.
pub fn minkowski_dimension(p: f64) -> Result<f64> {
    Ok(make_p_koch(p)?.delta)
}

/// Upper content bound `(723√3 + 20π)/480` of the classic snowflake.
pub fn content_upper_koch() -> f64 {
    (723.0 * 3f64.sqrt() + 20.0 * PI) / 480.0
}

/// Inradius `1/3` of the classic snowflake.
pub fn koch_inradius() -> f64 {
    1.0 / 3.0
}

/// Closed-form upper bound on `vol(K₋ε)` for the classic snowflake.
///
/// The formula holds for `ε√3 ≤ 1`; the result is clamped to `vol(K)` and
/// equals it once `ε` reaches the inradius.
pub fn lapidus_pearse_bound(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let vol = crate::ifs_geometry::area_exact(DomainKind::TriangleK, 1.0 / 3.0);
    if eps >= koch_inradius() || eps * 3f64.sqrt() > 1.0 {
        return Ok(vol);
    }
    let s3 = 3f64.sqrt();
    let delta = 4f64.ln() / 3f64.ln();
    let x = -(eps * s3).ln() / 3f64.ln();
    let fx = x - x.floor();
    let bracket = eps.powf(2.0 - delta)
        * 4f64.powf(-fx)
        * (3.0 * s3 / 40.0 * 9f64.powf(fx) + s3 / 2.0 * 3f64.powf(fx) + (PI / 3.0 - s3) / 6.0)
        - eps * eps / 3.0 * (PI / 3.0 + 2.0 * s3);
    Ok((3.0 * bracket).min(vol))
}

/// Relative deviation `ε^{δ−n} vol / content − 1`.
pub fn eps_prime(volume: f64, epsilon: f64, delta: f64, n: usize, content: f64) -> Result<f64> {
    if !(content > 0.0) {
        return Err(Error::Precondition(format!("content must be positive, got {content}")));
    }
    Ok(epsilon.powf(delta - n as f64) * volume / content - 1.0)
}

/// Tube volume of a snowflake domain by the requested method.
///
/// Raster and Monte Carlo require `hausdorff_error ≤ ε/100`; the Lapidus–Pearse
/// bound is available for the classic snowflake only.
pub fn inner_tube_volume(domain: &SnowflakeDomain, eps: f64, method: TubeMethod, seed: u64) -> Result<TubeEstimate> {
    inner_tube_volume_with(domain, &DomainDistance::new(domain), eps, method, seed, DEFAULT_SAMPLES)
}

/// [`inner_tube_volume`] with a prebuilt distance field and explicit sample count.
pub fn inner_tube_volume_with(
    domain: &SnowflakeDomain,
    field: &DomainDistance,
    eps: f64,
    method: TubeMethod,
    seed: u64,
    samples: usize,
) -> Result<TubeEstimate> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    match method {
        TubeMethod::LapidusPearseBound => {
            if !(domain.kind == DomainKind::TriangleK && crate::constants::is_classic(domain.p)) {
                return Err(Error::Unsupported("the closed-form tube bound exists only for K(1/3)".into()));
            }
            Ok(TubeEstimate { epsilon: eps, volume: lapidus_pearse_bound(eps)?, method, uncertainty: 0.0 })
        }
        TubeMethod::Raster | TubeMethod::MonteCarlo => {
            let err = domain.hausdorff_error();
            if err > eps / 100.0 {
                return Err(Error::Precondition(format!(
                    "polygon error {err:.3e} exceeds ε/100 = {:.3e}; raise the level",
                    eps / 100.0
                )));
            }
            let (volume, uncertainty) = if method == TubeMethod::Raster {
                raster_tube(domain, field, eps)
            } else {
                monte_carlo_tube(domain, field, eps, seed, samples)
            };
            let volume = volume.min(domain.area_exact);
            Ok(TubeEstimate { epsilon: eps, volume, method, uncertainty })
        }
    }
}

fn raster_tube(domain: &SnowflakeDomain, field: &DomainDistance, eps: f64) -> (f64, f64) {
    let bb = domain.bounding_box();
    let side = bb.extent().x.max(bb.extent().y);
    let min_side = eps / 128.0;
    let root = Aabb::new(bb.min, bb.min + Point::new(side, side));
    let mut level = vec![root];
    let mut vol = 0.0;
    let mut unc = 0.0;
    while !level.is_empty() {
        let results: Vec<(f64, f64, Vec<Aabb>)> = level
            .par_iter()
            .map(|&cell| classify_cell(field, cell, eps, min_side))
            .collect();
        let mut next = Vec::new();
        for (v, u, kids) in results {
            vol += v;
            unc += u;
            next.extend(kids);
        }
        level = next;
    }
    (vol, unc)
}

fn classify_cell(field: &DomainDistance, cell: Aabb, eps: f64, min_side: f64) -> (f64, f64, Vec<Aabb>) {
    let c = cell.center();
    let e = cell.extent();
    let area = e.x * e.y;
    let r = 0.5 * cell.diagonal();
    let d = field.signed_distance(c);
    let slack = r + field.err;
    if d + slack <= 0.0 || d - slack >= eps {
        return (0.0, 0.0, Vec::new());
    }
    if d - slack > 0.0 && d + slack < eps {
        return (area, 0.0, Vec::new());
    }
    if e.x <= min_side {
        let inside = d > 0.0 && d < eps;
        return (if inside { area } else { 0.0 }, area, Vec::new());
    }
    let h = e * 0.5;
    let kids = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        .iter()
        .map(|&(i, j)| {
            let lo = cell.min + Point::new(i * h.x, j * h.y);
            Aabb::new(lo, lo + h)
        })
        .collect();
    (0.0, 0.0, kids)
}

fn monte_carlo_tube(domain: &SnowflakeDomain, field: &DomainDistance, eps: f64, seed: u64, samples: usize) -> (f64, f64) {
    let bb = domain.bounding_box();
    let e = bb.extent();
    let box_area = e.x * e.y;
    let chunks = samples.div_ceil(MC_CHUNK);
    let (hits, ambiguous) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let m = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut hits = 0u64;
            let mut amb = 0u64;
            for _ in 0..m {
                let q = Point::new(bb.min.x + rng.random::<f64>() * e.x, bb.min.y + rng.random::<f64>() * e.y);
                let d = field.signed_distance(q);
                if d > 0.0 && d < eps {
                    hits += 1;
                }
                if d.abs() <= field.err || (d - eps).abs() <= field.err {
                    amb += 1;
                }
            }
            (hits, amb)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let frac = hits as f64 / n;
    let sigma = (frac * (1.0 - frac) / n).sqrt();
    (box_area * frac, box_area * (3.0 * sigma + ambiguous as f64 / n))
}

/// Estimates `δ` from tube volumes by a least-squares fit of `log vol` against `log ε`.
pub fn dimension_from_tubes(estimates: &[TubeEstimate], n: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|e| e.volume > 0.0)
        .map(|e| (e.epsilon.ln(), e.volume.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition("at least two positive tube volumes are needed".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all tube widths coincide".into()));
    }
    Ok(n as f64 - sxy / sxx)
}

/// Slice constant `𝔐` with bounds `#W_k ≤ 𝔐 2^{kδ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrakEstimate {
    /// Certified value used downstream.
    pub certified: f64,
    /// Supremum over the scanned dyadic scales of `(5√n)^{n−δ} ε_k^{δ−n} vol(Ω₋ε_k)`.
    pub scanned_sup: f64,
    /// Index `k` attaining the scanned supremum.
    pub argmax_k: i32,
    /// Scanned `k` range.
    pub k_range: (i32, i32),
    /// Supremum of `ε′` over the scanned scales.
    pub eps_prime_sup: f64,
}

/// `𝔐_K = M̄(5√2)^{2−δ}` for the classic snowflake, using `ε′ ≤ 0`, together
/// with the scan of the tube bound over `ε_k = 5√2·2^{−k}`, `k ∈ [0, 60]`.
pub fn frak_koch() -> Result<FrakEstimate> {
    let delta = 4f64.ln() / 3f64.ln();
    let content = content_upper_koch();
    let scale = (5.0 * 2f64.sqrt()).powf(2.0 - delta);
    let k_range = (0, 60);
    let mut best = (f64::NEG_INFINITY, 0);
    let mut eps_sup = f64::NEG_INFINITY;
    for k in k_range.0..=k_range.1 {
        let eps = 5.0 * 2f64.sqrt() * 2f64.powi(-k);
        let v = lapidus_pearse_bound(eps)?;
        let val = scale * eps.powf(delta - 2.0) * v;
        if val > best.0 {
            best = (val, k);
        }
        if eps * 3f64.sqrt() <= 1.0 {
            eps_sup = eps_sup.max(eps_prime(v, eps, delta, 2, content)?);
        }
    }
    Ok(FrakEstimate {
        certified: content * scale * (1.0 + eps_sup.max(0.0)),
        scanned_sup: best.0,
        argmax_k: best.1,
        k_range,
        eps_prime_sup: eps_sup,
    })
}

/// `𝔐_Ω = (5√n)^{n−δ} max(c_vol⁺ C(Ω), ε₀^{δ−n} vol Ω)` from a cover family valid for `ε ≤ ε₀`.
pub fn frak_from_cover(n: usize, delta: f64, c_vol_hi: f64, c_of_omega: f64, eps0: f64, vol: f64) -> f64 {
    let nf = n as f64;
    (5.0 * nf.sqrt()).powf(nf - delta) * (c_vol_hi * c_of_omega).max(eps0.powf(delta - nf) * vol)
}

/// Writes tube estimates as CSV with header `epsilon,volume,method,uncertainty`.
pub fn write_tube_csv<W: Write>(w: W, estimates: &[TubeEstimate]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epsilon", "volume", "method", "uncertainty"])?;
    for e in estimates {
        wr.write_record([
            e.epsilon.to_string(),
            e.volume.to_string(),
            e.method.label().to_string(),
            e.uncertainty.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

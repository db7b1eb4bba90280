//! Exact Dirichlet/Neumann eigenvalue counting for cubes and boxes, Pólya-type
//! bounds, and assembly of the two-sided counting-function bounds.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::{weyl_constant, ConstantsLedger};
use crate::error::{Error, Result};

/// Largest number of lattice rows a single count may visit.
pub const DEFAULT_WORK_BUDGET: u64 = 1 << 32;

/// Boundary condition of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Zero boundary values; indices start at 1.
    Dirichlet,
    /// Zero normal derivative; indices start at 0.
    Neumann,
}

impl Boundary {
    fn first_index(self) -> u64 {
        match self {
            Boundary::Dirichlet => 1,
            Boundary::Neumann => 0,
        }
    }
}

/// Counting query `N(s·Iⁿ, t)` for a cube of side `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountQuery {
    /// Dimension.
    pub n: usize,
    /// Side length.
    pub side: f64,
    /// Spectral parameter.
    pub t: f64,
    /// Boundary condition.
    pub bc: Boundary,
}

impl CountQuery {
    /// Creates a query after validating `n ≥ 1`, `side > 0` and finite `t`.
    pub fn new(n: usize, side: f64, t: f64, bc: Boundary) -> Result<Self> {
        let q = CountQuery { n, side, t, bc };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(Error::Domain(format!("side must be positive, got {}", self.side)));
        }
        if !self.t.is_finite() {
            return Err(Error::Domain(format!("t must be finite, got {}", self.t)));
        }
        Ok(())
    }
}

/// Integer threshold `⌊x⌋` for `x = t s²/π²`, nudged up by a few ulps so that
/// eigenvalues landing exactly on `t` are counted.
fn threshold(x: f64) -> Result<u64> {
    if !(x > 0.0) {
        return Ok(0);
    }
    let v = (x * (1.0 + 8.0 * f64::EPSILON)).floor();
    if v >= 2f64.powi(62) {
        return Err(Error::Resource(format!("lattice threshold {x:.3e} overflows the counter")));
    }
    Ok(v as u64)
}

/// `⌊√m⌋` exactly.
pub fn isqrt(m: u64) -> u64 {
    let mut r = (m as f64).sqrt() as u64;
    while r > 0 && r.checked_mul(r).is_none_or(|s| s > m) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|s| s <= m) {
        r += 1;
    }
    r
}

fn lattice_count(n: usize, m: u64, start: u64) -> u64 {
    let r = isqrt(m);
    if r < start {
        return 0;
    }
    if n == 1 {
        return r - start + 1;
    }
    (start..=r).map(|k| lattice_count(n - 1, m - k * k, start)).sum()
}

fn work_estimate(n: usize, m: u64) -> f64 {
    ((m as f64).sqrt() + 1.0).powi(n as i32 - 1)
}

/// Exact `#{k : |k|² ≤ t s²/π²}` over `ℕ₀ⁿ` (Neumann) or `ℕⁿ` (Dirichlet).
///
/// Uses dimension-recursive summation with integer square roots. Negative `t`
/// counts like `t = 0`.
pub fn count_cube(q: &CountQuery) -> Result<u64> {
    count_cube_with_budget(q, DEFAULT_WORK_BUDGET)
}

/// [`count_cube`] failing with a resource error when the enumeration would exceed `budget` rows.
pub fn count_cube_with_budget(q: &CountQuery, budget: u64) -> Result<u64> {
    q.validate()?;
    let m = threshold(q.t * q.side * q.side / (PI * PI))?;
    if work_estimate(q.n, m) > budget as f64 {
        return Err(Error::Resource(format!("count at t={:.3e} exceeds the work budget {budget}", q.t)));
    }
    Ok(lattice_count(q.n, m, q.bc.first_index()))
}

/// Exact count of eigenvalues `Σ (kᵢπ/aᵢ)² ≤ t` of a box with sides `aᵢ`.
pub fn count_box(sides: &[f64], t: f64, bc: Boundary) -> Result<u64> {
    if sides.is_empty() || sides.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
        return Err(Error::Domain(format!("box sides must be positive, got {sides:?}")));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("t must be finite, got {t}")));
    }
    let x = t / (PI * PI) * (1.0 + 8.0 * f64::EPSILON);
    let work: f64 = sides[1..].iter().map(|a| a * x.max(0.0).sqrt() + 1.0).product();
    if work > DEFAULT_WORK_BUDGET as f64 {
        return Err(Error::Resource(format!("box count at t={t:.3e} exceeds the work budget")));
    }
    Ok(box_rec(sides, x, bc.first_index()))
}

fn box_rec(sides: &[f64], x: f64, start: u64) -> u64 {
    if x < 0.0 {
        return 0;
    }
    let a = sides[0];
    let kmax = (a * x.sqrt()).floor() as u64;
    if kmax < start {
        return 0;
    }
    if sides.len() == 1 {
        return kmax - start + 1;
    }
    (start..=kmax)
        .map(|k| {
            let r = k as f64 / a;
            box_rec(&sides[1..], x - r * r, start)
        })
        .sum()
}

/// Exact count for an `a × b` rectangle.
pub fn count_rect(a: f64, b: f64, t: f64, bc: Boundary) -> Result<u64> {
    count_box(&[a, b], t, bc)
}

/// Pólya and shifted-Neumann checks for a cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyaCheck {
    /// Exact Dirichlet count.
    pub n_dirichlet: u64,
    /// Exact Neumann count.
    pub n_neumann: u64,
    /// `C_W (s²t)^{n/2}`.
    pub polya_bound: f64,
    /// Whether `N_D ≤ C_W (s² t)^{n/2}`.
    pub polya_ok: bool,
    /// `C_W (s√t + 2π√n)ⁿ`, which dominates `N_N`.
    pub shifted_upper: f64,
    /// Whether `N_N ≤ shifted_upper`.
    pub shifted_ok: bool,
}

/// Evaluates Pólya's inequality and the shifted Neumann bound for a cube.
pub fn polya_and_shift_bounds(q: &CountQuery) -> Result<PolyaCheck> {
    let nd = count_cube(&CountQuery { bc: Boundary::Dirichlet, ..*q })?;
    let nn = count_cube(&CountQuery { bc: Boundary::Neumann, ..*q })?;
    let cw = weyl_constant(q.n);
    let nf = q.n as f64;
    let t = q.t.max(0.0);
    let polya = cw * (q.side * q.side * t).powf(nf / 2.0);
    let shifted = cw * (q.side * t.sqrt() + 2.0 * PI * nf.sqrt()).powi(q.n as i32);
    Ok(PolyaCheck {
        n_dirichlet: nd,
        n_neumann: nn,
        polya_bound: polya,
        polya_ok: nd as f64 <= polya,
        shifted_upper: shifted,
        shifted_ok: nn as f64 <= shifted,
    })
}

/// Bracketing defect `Q = N_N − N_D ≥ 0` of a cube.
pub fn bracketing_defect(n: usize, side: f64, t: f64) -> Result<u64> {
    let nn = count_cube(&CountQuery::new(n, side, t, Boundary::Neumann)?)?;
    let nd = count_cube(&CountQuery::new(n, side, t, Boundary::Dirichlet)?)?;
    Ok(nn - nd)
}

/// `S₁` bound `C₃((μ+1)/C₂)^{δ/2} t^{δ/2}`, valid for `t ≥ t₀`.
pub fn s1_bound(ledger: &ConstantsLedger, t: f64) -> Result<f64> {
    check_t(ledger, t)?;
    Ok(ledger.s1_coefficient * t.powf(ledger.delta / 2.0))
}

fn check_t(ledger: &ConstantsLedger, t: f64) -> Result<()> {
    if !(t >= ledger.t0) {
        return Err(Error::Precondition(format!(
            "t = {t} lies below the certified range; requires t ≥ t0 = {}",
            ledger.t0
        )));
    }
    Ok(())
}

/// `ε` coupled to `t` by `(μ+1)t = C₂ε⁻²`.
pub fn coupled_epsilon(ledger: &ConstantsLedger, t: f64) -> f64 {
    (ledger.c2 / ((ledger.mu as f64 + 1.0) * t)).sqrt()
}

/// How the dyadic slice range `k′₋ ≤ k ≤ k₊` is turned into closed-form geometric sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceConvention {
    /// `k′₋ = ⌊−log₂(diam/√n)⌋` and `2^{k₊+1} ≤ 10√n/ε`.
    Tight,
    /// Non-integer `k′₋ = −log₂(diam/√n) − 1` and `2^{k₊+1} ≤ 20/ε`, which
    /// reproduces the displayed absolute bound for the classic snowflake.
    Published,
}

impl SliceConvention {
    /// Lower slice index (possibly non-integer).
    pub fn k_lower(self, diam: f64, n: usize) -> f64 {
        let x = -(diam / (n as f64).sqrt()).log2();
        match self {
            SliceConvention::Tight => x.floor(),
            SliceConvention::Published => x - 1.0,
        }
    }

    /// The factor `X` with `2^{k₊+1} ≤ X/ε`.
    pub fn x_factor(self, n: usize) -> f64 {
        match self {
            SliceConvention::Tight => 10.0 * (n as f64).sqrt(),
            SliceConvention::Published => 20.0,
        }
    }
}

/// Upper slice index `k₊ = ⌊log₂(5√n/ε)⌋` of the cubes outside `W_ε`.
pub fn k_upper(eps: f64, n: usize) -> i64 {
    (5.0 * (n as f64).sqrt() / eps).log2().floor() as i64
}

/// `S₂` bound `Σ_{k′₋}^{k₊} #W_k N_N(2^{−k}Iⁿ, t)`.
///
/// Uses the measured slice counts where given and exact cube counts; slices
/// without a measurement fall back to `𝔐_Ω 2^{kδ}` and the shifted bound.
pub fn s2_bound_absolute(
    ledger: &ConstantsLedger,
    slices: Option<&BTreeMap<i64, u64>>,
    t: f64,
    diam: f64,
) -> Result<f64> {
    check_t(ledger, t)?;
    let n = ledger.n;
    let eps = coupled_epsilon(ledger, t);
    let k_lo = SliceConvention::Tight.k_lower(diam, n) as i64;
    let k_hi = k_upper(eps, n);
    let mut total = 0.0;
    for k in k_lo..=k_hi {
        let side = 2f64.powi(-(k as i32));
        let per_cube = count_cube(&CountQuery::new(n, side, t, Boundary::Neumann)?)? as f64;
        let cubes = match slices.and_then(|s| s.get(&k)) {
            Some(&c) => c as f64,
            None => ledger.m_frak * 2f64.powf(k as f64 * ledger.delta),
        };
        total += cubes * per_cube;
    }
    Ok(total)
}

/// Closed-form absolute remainder `C_W(lead t^{δ/2} − Σ_j c_j t^{j/2})`, stored in units of `C_W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteBound {
    /// Slice convention used.
    pub convention: SliceConvention,
    /// Coefficient of `t^{δ/2}` in units of `C_W`.
    pub lead: f64,
    /// `S₁` share of `lead`.
    pub lead_s1: f64,
    /// Per-`j` shares of `lead` from the `S₂` geometric sums.
    pub lead_s2: Vec<f64>,
    /// Subtracted terms `(c_j, j/2)` in units of `C_W`.
    pub subtracted: Vec<BoundTerm>,
    /// Lower slice index used.
    pub k_lower: f64,
}

/// Assembles the absolute bound of the remainder in units of `C_W`.
pub fn absolute_bound(ledger: &ConstantsLedger, conv: SliceConvention) -> Result<AbsoluteBound> {
    let n = ledger.n;
    let nf = n as f64;
    let d = ledger.delta;
    let mu1 = ledger.mu as f64 + 1.0;
    let cw = weyl_constant(n);
    let k0 = conv.k_lower(ledger.inputs.diam, n);
    let x = conv.x_factor(n);
    let lead_s1 = ledger.s1_coefficient / cw;
    let mut lead_s2 = Vec::with_capacity(n);
    let mut subtracted = Vec::with_capacity(n);
    for j in 0..n {
        let e = d - j as f64;
        if e.abs() < 1e-12 {
            return Err(Error::Unsupported(format!("slice sum with δ = {j} is logarithmic")));
        }
        let binom = binomial(n, j) * (2.0 * PI * nf.sqrt()).powi((n - j) as i32) * ledger.m_frak;
        let geo = 2f64.powf(e) - 1.0;
        lead_s2.push(binom * x.powf(e) * (mu1 / ledger.c2).powf(e / 2.0) / geo);
        subtracted.push(BoundTerm { coefficient: binom * 2f64.powf(k0 * e) / geo, exponent: j as f64 / 2.0 });
    }
    Ok(AbsoluteBound {
        convention: conv,
        lead: lead_s1 + lead_s2.iter().sum::<f64>(),
        lead_s1,
        lead_s2,
        subtracted,
        k_lower: k0,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Lower bound `C_W vol t^{n/2} − 5C̃/((n−δ)(δ+1−n)) t^{δ/2}` on `N_D(Ω,t)`;
/// for `δ = n−1` the logarithmic form `C_W vol t^{n/2} − 3C̃ t^{(n−1)/2} log((2vol)^{2/n} t)`.
pub fn lower_bound_vdbl(vol: f64, delta: f64, n: usize, c_tilde: f64, t: f64) -> Result<f64> {
    let nf = n as f64;
    let weyl = weyl_constant(n) * vol * t.max(0.0).powf(nf / 2.0);
    if (delta - (nf - 1.0)).abs() < 1e-12 {
        let t_min = 4.0 / vol.powf(2.0 / nf);
        if !(t > t_min) {
            return Err(Error::Precondition(format!("logarithmic case requires t > {t_min}, got {t}")));
        }
        return Ok(weyl - 3.0 * c_tilde * t.powf((nf - 1.0) / 2.0) * ((2.0 * vol).powf(2.0 / nf) * t).ln());
    }
    Ok(weyl - vdbl_coefficient(delta, n, c_tilde)? * t.powf(delta / 2.0))
}

/// The coefficient `5C̃/((n−δ)(δ+1−n))`; a precondition error outside `n−1 < δ < n`.
pub fn vdbl_coefficient(delta: f64, n: usize, c_tilde: f64) -> Result<f64> {
    let nf = n as f64;
    if !(delta < nf && delta > nf - 1.0) {
        return Err(Error::Precondition(format!(
            "coefficient has a pole outside n−1 < δ < n (δ = {delta}, n = {n})"
        )));
    }
    Ok(5.0 * c_tilde / ((nf - delta) * (delta + 1.0 - nf)))
}

/// One term `coefficient · t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    /// Coefficient.
    pub coefficient: f64,
    /// Exponent of `t`.
    pub exponent: f64,
}

impl BoundTerm {
    /// Evaluates the term.
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficient * t.powf(self.exponent)
    }
}

fn eval_terms(terms: &[BoundTerm], t: f64) -> f64 {
    terms.iter().map(|x| x.eval(t)).sum()
}

/// Two-sided bounds on the Neumann counting function of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Domain label.
    pub domain: String,
    /// Lowest certified `t`.
    pub t0: f64,
    /// Dimension.
    pub n: usize,
    /// Minkowski dimension.
    pub delta: f64,
    /// Upper bound terms, led by `(C_W vol, n/2)`.
    pub upper: Vec<BoundTerm>,
    /// Lower bound terms, led by `(C_W vol, n/2)`.
    pub lower: Vec<BoundTerm>,
    /// Absolute remainder coefficient `C_W · lead`.
    pub m_abs: f64,
    /// Two-sided coefficient `max(M_abs, 5C̃/((n−δ)(δ+1−n)))`.
    pub m_tilde: f64,
    /// Asymptotic coefficient `M_Ω`.
    pub m_asymptotic: f64,
    /// Decomposition of the absolute bound.
    pub absolute: AbsoluteBound,
}

impl BoundReport {
    /// Assembles the report from a ledger.
    pub fn from_ledger(domain: &str, ledger: &ConstantsLedger, conv: SliceConvention) -> Result<Self> {
        let n = ledger.n;
        let nf = n as f64;
        let cw = weyl_constant(n);
        let vol = ledger.inputs.vol;
        let abs = absolute_bound(ledger, conv)?;
        let weyl = BoundTerm { coefficient: cw * vol, exponent: nf / 2.0 };
        let mut upper = vec![weyl, BoundTerm { coefficient: cw * abs.lead, exponent: ledger.delta / 2.0 }];
        upper.extend(abs.subtracted.iter().map(|s| BoundTerm { coefficient: -cw * s.coefficient, exponent: s.exponent }));
        let vdbl = vdbl_coefficient(ledger.delta, n, ledger.c_tilde)?;
        let lower = vec![weyl, BoundTerm { coefficient: -vdbl, exponent: ledger.delta / 2.0 }];
        let m_abs = cw * abs.lead;
        Ok(BoundReport {
            domain: domain.to_string(),
            t0: ledger.t0,
            n,
            delta: ledger.delta,
            upper,
            lower,
            m_abs,
            m_tilde: m_abs.max(vdbl),
            m_asymptotic: ledger.m_omega,
            absolute: abs,
        })
    }

    /// The Weyl term `C_W vol t^{n/2}`.
    pub fn weyl_term(&self, t: f64) -> f64 {
        self.upper[0].eval(t)
    }

    /// Upper bound at `t ≥ t₀`.
    pub fn upper_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(eval_terms(&self.upper, t))
    }

    /// Lower bound at `t ≥ t₀`.
    pub fn lower_at(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(eval_terms(&self.lower, t))
    }

    /// Upper bound valid for every `t ≥ 0`: the counting function is
    /// nondecreasing, so the certified bound at `max(t, t₀)` applies.
    pub fn upper_global(&self, t: f64) -> f64 {
        eval_terms(&self.upper, t.max(self.t0))
    }

    /// Remainder coefficient function `(upper(t) − C_W vol t^{n/2}) / t^{δ/2}`.
    pub fn remainder_coefficient(&self, t: f64) -> f64 {
        eval_terms(&self.upper[1..], t) / t.powf(self.delta / 2.0)
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(t >= self.t0) {
            return Err(Error::Precondition(format!("t = {t} below t0 = {}", self.t0)));
        }
        Ok(())
    }

    /// Log-spaced sample of `(t, upper, lower, weyl)` rows on `[t_min, t_max]`.
    pub fn sample(&self, t_min: f64, t_max: f64, steps: usize) -> Result<Vec<[f64; 4]>> {
        if !(t_min >= self.t0 && t_max >= t_min) || steps == 0 {
            return Err(Error::Precondition(format!(
                "need t0 = {} ≤ t_min ≤ t_max and steps ≥ 1, got [{t_min}, {t_max}] with {steps} steps",
                self.t0
            )));
        }
        (0..steps)
            .map(|i| {
                let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                let t = (t_min.ln() + f * (t_max.ln() - t_min.ln())).exp();
                Ok([t, self.upper_at(t)?, self.lower_at(t)?, self.weyl_term(t)])
            })
            .collect()
    }

    /// Writes the sample as CSV with header `t,upper,lower,weyl_term`.
    pub fn write_csv<W: Write>(&self, w: W, t_min: f64, t_max: f64, steps: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "upper", "lower", "weyl_term"])?;
        for row in self.sample(t_min, t_max, steps)? {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

//! The constants chain `C₁ → C₂ → C₃ → M_Ω` of the counting bound, the Weyl
//! constant, the base-box constant `c_E`, and Weinberger's upper bound on the
//! first non-trivial Neumann eigenvalue.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs_geometry::{base_angle, make_p_koch, DomainKind};

/// Open interval `(lo, hi)` for one of the ratios of the well-covered definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    /// Lower bound.
    pub lo: f64,
    /// Upper bound.
    pub hi: f64,
}

impl Range {
    /// Creates a range.
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }
}

/// The ten bounds `c_r^±, c_L^±, c_I^±, c_diam^±, c_vol^±` of a family of covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantRanges {
    /// `r/ε`.
    pub c_r: Range,
    /// Fibre length `L/ε`.
    pub c_l: Range,
    /// Fibre integral `I_β/ε`.
    pub c_i: Range,
    /// `diam(D)/ε`.
    pub c_diam: Range,
    /// `vol(D)/εⁿ`.
    pub c_vol: Range,
}

/// Weyl constant `C_W⁽ⁿ⁾ = 2⁻ⁿ π^{−n/2} / Γ(1 + n/2)`.
pub fn weyl_constant(n: usize) -> f64 {
    unit_ball_volume(n) / (2.0 * PI).powi(n as i32)
}

/// Volume `ωₙ = π^{n/2}/Γ(1+n/2)` of the unit ball.
pub fn unit_ball_volume(n: usize) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half(n + 2)
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half(m: usize) -> f64 {
    let mut g = if m % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if m % 2 == 0 { 1.0 } else { 0.5 };
    while 2.0 * x < m as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// The published base-box constant
/// `c_E = min(1, 4(1−2p)²p²/((3−2p)²(4p−1)))·π²`, obtained from the long rectangles alone.
pub fn c_e_rohde(p: f64) -> f64 {
    let q = 4.0 * (1.0 - 2.0 * p).powi(2) * p * p / ((3.0 - 2.0 * p).powi(2) * (4.0 * p - 1.0));
    q.min(1.0) * PI * PI
}

/// Base-box constant minimised over all three element kinds.
///
/// The base box of every element has depth `ε` and width `w`, so
/// `λ₂(E)ε² = π²/max(w/ε, 1)²`; the worst case is the lower end of `J_k`.
pub fn c_e_certified(p: f64) -> f64 {
    let a = base_angle(p);
    let short = a.tan() / p;
    let long = short + a.sin();
    let fringed = (1.0 - 2.0 * p) * a.tan() / (p * p);
    let worst = short.max(long).max(fringed).max(1.0);
    PI * PI / (worst * worst)
}

/// The bracket of the eigenvalue lower bound in units of `ε`, as a function of the
/// free parameter `α > 0`; its reciprocal bounds `λ₂(D)ε²` from below.
pub fn c1_bracket(r: &ConstantRanges, c_e: f64, beta_inf: f64, alpha: f64) -> f64 {
    let cr_hi = r.c_r.hi;
    let cr_lo = r.c_r.lo;
    cr_hi * cr_hi / c_e * (1.0 + (1.0 + alpha) * r.c_i.hi / (cr_lo * beta_inf))
        + (1.0 + 1.0 / alpha) * r.c_l.hi * r.c_i.hi / beta_inf
}

/// The fixed choice `α = √(c_E c_L⁺ c_r⁻)/c_r⁺` of the closed-form `C₁`.
pub fn c1_alpha(r: &ConstantRanges, c_e: f64) -> f64 {
    (c_e * r.c_l.hi * r.c_r.lo).sqrt() / r.c_r.hi
}

/// Closed-form `C₁` with the fixed choice of `α`.
pub fn c1(r: &ConstantRanges, c_e: f64, beta_inf: f64) -> f64 {
    1.0 / c1_bracket(r, c_e, beta_inf, c1_alpha(r, c_e))
}

/// `C₁` with `α` optimised by golden-section search; returns `(C₁, α*)`.
pub fn c1_optimized(r: &ConstantRanges, c_e: f64, beta_inf: f64) -> (f64, f64) {
    let (log_a, val) = golden_section_min(|x| c1_bracket(r, c_e, beta_inf, x.exp()), -30.0, 30.0, 1e-10);
    (1.0 / val, log_a.exp())
}

/// Eigenvalue lower bound of a well-foliated domain for a given `α > 0`:
/// `[λ₂(E)⁻¹(1 + (1+α) I/(r β_E)) + (1+α⁻¹) L I/β_D]⁻¹`.
pub fn lemma_bound(lambda_e: f64, r: f64, l: f64, i_beta: f64, beta_e: f64, beta_d: f64, alpha: f64) -> f64 {
    1.0 / ((1.0 + (1.0 + alpha) * i_beta / (r * beta_e)) / lambda_e + (1.0 + 1.0 / alpha) * l * i_beta / beta_d)
}

/// [`lemma_bound`] maximised over `α`; returns `(bound, α*)`.
pub fn lemma_bound_optimized(lambda_e: f64, r: f64, l: f64, i_beta: f64, beta_e: f64, beta_d: f64) -> (f64, f64) {
    let (log_a, val) = golden_section_min(
        |x| 1.0 / lemma_bound(lambda_e, r, l, i_beta, beta_e, beta_d, x.exp()),
        -30.0,
        30.0,
        1e-10,
    );
    (1.0 / val, log_a.exp())
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `C(Ω)` in `#I_ε ≤ C(Ω) ε^{−δ}`: `3((1−2p)/√(4p−1))^δ` for `R(p)`, three quarters of that
/// for `K(p)`, and `1` for the classic snowflake.
pub fn cover_constant(kind: DomainKind, p: f64) -> f64 {
    let delta = 4f64.ln() / (1.0 / p).ln();
    let r = 3.0 * ((1.0 - 2.0 * p) / (4.0 * p - 1.0).sqrt()).powf(delta);
    match kind {
        DomainKind::SquareR => r,
        DomainKind::TriangleK if is_classic(p) => 1.0,
        DomainKind::TriangleK => 0.75 * r,
    }
}

/// Whether `p` is the classic Koch parameter `1/3`.
pub fn is_classic(p: f64) -> bool {
    (p - 1.0 / 3.0).abs() < 1e-12
}

/// `A_Ω = 2n(2√n)^{δ−(n−1)} 𝔐_Ω Σ_{k=0}^{2} 2^{−k((n−1)−δ)}` bounding the union perimeter.
pub fn a_omega(n: usize, delta: f64, m_frak: f64) -> f64 {
    let nf = n as f64;
    let e = (nf - 1.0) - delta;
    let sum: f64 = (0..3).map(|k| 2f64.powf(-(k as f64) * e)).sum();
    2.0 * nf * (2.0 * nf.sqrt()).powf(delta - (nf - 1.0)) * m_frak * sum
}

/// Geometric inputs of the constants chain. All of them transform simply under
/// a dilation `Ω ↦ αΩ` (see [`LedgerInputs::scaled`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    /// Space dimension.
    pub n: usize,
    /// Upper inner Minkowski dimension of the boundary.
    pub delta: f64,
    /// Multiplicity of the foliated covers.
    pub mu: u32,
    /// Base-box constant.
    pub c_e: f64,
    /// Ratio ranges of the covers.
    pub ranges: ConstantRanges,
    /// Infimum of the densities.
    pub beta_inf: f64,
    /// `C(Ω)`.
    pub c_of_omega: f64,
    /// Slice constant `𝔐_Ω`.
    pub m_frak: f64,
    /// `vol(Ω)`.
    pub vol: f64,
    /// Upper bound on `diam(Ω)`.
    pub diam: f64,
    /// Largest `ε` for which the covers are certified.
    pub eps0: f64,
}

impl LedgerInputs {
    /// Inputs for the dilated domain `αΩ`: volumes scale by `αⁿ`, counting
    /// constants by `α^δ`, lengths by `α`; dimensionless ratios are unchanged.
    pub fn scaled(&self, alpha: f64) -> LedgerInputs {
        let ad = alpha.powf(self.delta);
        LedgerInputs {
            c_of_omega: self.c_of_omega * ad,
            m_frak: self.m_frak * ad,
            vol: self.vol * alpha.powi(self.n as i32),
            diam: self.diam * alpha,
            eps0: self.eps0 * alpha,
            ..self.clone()
        }
    }

    /// Validates positivity of every input.
    pub fn validate(&self) -> Result<()> {
        let r = &self.ranges;
        let vals = [
            ("delta", self.delta),
            ("c_E", self.c_e),
            ("beta_inf", self.beta_inf),
            ("C(Omega)", self.c_of_omega),
            ("M_frak", self.m_frak),
            ("vol", self.vol),
            ("diam", self.diam),
            ("eps0", self.eps0),
            ("c_r-", r.c_r.lo),
            ("c_r+", r.c_r.hi),
            ("c_L+", r.c_l.hi),
            ("c_I+", r.c_i.hi),
            ("c_diam+", r.c_diam.hi),
            ("c_vol+", r.c_vol.hi),
        ];
        let bad: Vec<String> =
            vals.iter().filter(|(_, v)| !(v.is_finite() && *v > 0.0)).map(|(k, v)| format!("{k}={v}")).collect();
        if !bad.is_empty() {
            return Err(Error::Precondition(format!("ledger inputs must be positive: {}", bad.join(", "))));
        }
        if self.n == 0 || self.mu == 0 {
            return Err(Error::Precondition("n and mu must be positive".into()));
        }
        Ok(())
    }
}

/// The fully evaluated constants chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    /// Inputs the ledger was computed from.
    pub inputs: LedgerInputs,
    /// Space dimension.
    pub n: usize,
    /// Minkowski dimension.
    pub delta: f64,
    /// Cover multiplicity.
    pub mu: u32,
    /// Base-box constant.
    pub c_e: f64,
    /// `C₁` with the closed-form choice of `α`.
    pub c1: f64,
    /// `C₁` with `α` optimised.
    pub c1_optimized: f64,
    /// Optimal `α`.
    pub alpha_optimal: f64,
    /// `C₂ = min(C₁, (√n π / c_diam⁺)²/2)`.
    pub c2: f64,
    /// `C₃ = C(Ω) + 𝔐_Ω(40√n)^δ/(2^δ−1)`.
    pub c3: f64,
    /// The variant `C(Ω) + 𝔐_Ω(√n/s)^δ((40s)^δ−1)/(2^δ−1)` with `s = c_diam⁺`.
    pub c3_proof: f64,
    /// `S₁` coefficient `C₃((μ+1)/C₂)^{δ/2}`.
    pub s1_coefficient: f64,
    /// Asymptotic remainder coefficient `M_Ω`.
    pub m_omega: f64,
    /// Slice constant `𝔐_Ω`.
    pub m_frak: f64,
    /// Perimeter constant `A_Ω`.
    pub a_omega: f64,
    /// `C(Ω)`.
    pub c_of_omega: f64,
    /// `C̃ = c_vol⁺ C(Ω)` bounding `vol(Ω₋ε) ≤ C̃ ε^{n−δ}`.
    pub c_tilde: f64,
    /// Weyl constants for dimensions `n−1` and `n`.
    pub weyl: BTreeMap<usize, f64>,
    /// Validity threshold `t₀ = C₂ ε₀⁻²/(μ+1)`.
    pub t0: f64,
}

impl ConstantsLedger {
    /// Whether the proof variant of `C₃` exceeds the closed form (it never should).
    pub fn proof_variant_exceeds(&self) -> bool {
        self.c3_proof > self.c3
    }
}

/// Evaluates the constants chain from its inputs.
pub fn ledger_from_inputs(inp: &LedgerInputs) -> Result<ConstantsLedger> {
    inp.validate()?;
    let n = inp.n;
    let nf = n as f64;
    let d = inp.delta;
    let r = &inp.ranges;
    let c1v = c1(r, inp.c_e, inp.beta_inf);
    let (c1o, alpha_opt) = c1_optimized(r, inp.c_e, inp.beta_inf);
    let c2 = c1v.min(0.5 * (nf.sqrt() * PI / r.c_diam.hi).powi(2));
    let geo = 2f64.powf(d) - 1.0;
    let c3 = inp.c_of_omega + inp.m_frak * (40.0 * nf.sqrt()).powf(d) / geo;
    let s = r.c_diam.hi;
    let c3_proof = inp.c_of_omega + inp.m_frak * (nf.sqrt() / s).powf(d) * ((40.0 * s).powf(d) - 1.0) / geo;
    let mu1 = inp.mu as f64 + 1.0;
    let s1 = c3 * (mu1 / c2).powf(d / 2.0);
    let a = a_omega(n, d, inp.m_frak);
    let m_omega = s1 + weyl_constant(n - 1) / 4.0 * a * (mu1 / c2).powf((d - (nf - 1.0)) / 2.0);
    let mut weyl = BTreeMap::new();
    weyl.insert(n - 1, weyl_constant(n - 1));
    weyl.insert(n, weyl_constant(n));
    Ok(ConstantsLedger {
        inputs: inp.clone(),
        n,
        delta: d,
        mu: inp.mu,
        c_e: inp.c_e,
        c1: c1v,
        c1_optimized: c1o,
        alpha_optimal: alpha_opt,
        c2,
        c3,
        c3_proof,
        s1_coefficient: s1,
        m_omega,
        m_frak: inp.m_frak,
        a_omega: a,
        c_of_omega: inp.c_of_omega,
        c_tilde: r.c_vol.hi * inp.c_of_omega,
        weyl,
        t0: c2 / (inp.eps0 * inp.eps0 * mu1),
    })
}

/// Weinberger's bound `λ₂^N(Ω) ≤ pₙ²(ωₙ/vol Ω)^{2/n}`.
pub fn weinberger_upper(vol: f64, n: usize) -> Result<f64> {
    if !(vol > 0.0) || n == 0 {
        return Err(Error::Domain(format!("need vol > 0 and n ≥ 1, got vol={vol}, n={n}")));
    }
    let pn = weinberger_root(n)?;
    Ok(pn * pn * (unit_ball_volume(n) / vol).powf(2.0 / n as f64))
}

/// First positive root `pₙ` of `J_{n/2}(x) = x J_{1+n/2}(x)`.
pub fn weinberger_root(n: usize) -> Result<f64> {
    let nu = n as f64 / 2.0;
    let f = |x: f64| bessel_j(nu, x) - x * bessel_j(nu + 1.0, x);
    let step = 0.01;
    let mut a = step;
    let mut fa = f(a);
    while a < 30.0 {
        let b = a + step;
        let fb = f(b);
        if fa * fb <= 0.0 {
            return bisect(f, a, b, 1e-14);
        }
        a = b;
        fa = fb;
    }
    Err(Error::NonConvergence { what: "Bessel root bracketing".into(), achieved: a, required: 30.0 })
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fa * fm <= 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
        if b - a < tol {
            return Ok(0.5 * (a + b));
        }
    }
    Err(Error::NonConvergence { what: "bisection".into(), achieved: b - a, required: tol })
}

/// Bessel function `J_ν(x)` of the first kind for `ν ≥ 0` by the ascending series.
///
/// Accurate to about `1e-12` for `0 ≤ x ≤ 20`.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let h = 0.5 * x;
    let mut term = h.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    let q = -h * h;
    for m in 1..300 {
        let mf = m as f64;
        term *= q / (mf * (mf + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Gamma function for positive half-integers and integers, exact by recursion;
/// other positive arguments use the Lanczos approximation.
pub fn gamma(x: f64) -> f64 {
    let twice = 2.0 * x;
    if twice.fract() == 0.0 && x > 0.0 && twice < 340.0 {
        return gamma_half(twice as usize);
    }
    lanczos_gamma(x)
}

fn lanczos_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos_gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Closed-form ledger inputs for `K(p)` or `R(p)` from the element geometry
/// formulas, with `𝔐_Ω` supplied by the caller.
pub fn closed_form_inputs(kind: DomainKind, p: f64, m_frak: f64, diam: f64) -> Result<LedgerInputs> {
    let sys = make_p_koch(p)?;
    let ranges = crate::foliation::closed_form_ranges(p)?;
    Ok(LedgerInputs {
        n: 2,
        delta: sys.delta,
        mu: 2,
        c_e: c_e_certified(p),
        ranges,
        beta_inf: 1.0,
        c_of_omega: cover_constant(kind, p),
        m_frak,
        vol: crate::ifs_geometry::area_exact(kind, p),
        diam,
        eps0: crate::foliation::j_interval(p, 1).1,
    })
}

/// Ledger inputs for the classic snowflake or a square-based snowflake `R(p)`.
///
/// The classic snowflake uses the Lapidus–Pearse tube bound for `𝔐_K`; `R(p)`
/// derives `𝔐` from its covers. Triangle-based snowflakes with `p ≠ 1/3` have
/// no certified covers and are rejected.
pub fn domain_inputs(kind: DomainKind, p: f64) -> Result<LedgerInputs> {
    match kind {
        DomainKind::TriangleK if is_classic(p) => {
            let m = crate::minkowski::frak_koch()?.certified;
            closed_form_inputs(kind, p, m, 2.0 / 3f64.sqrt())
        }
        DomainKind::TriangleK => Err(Error::Unsupported(format!("no certified cover family for K(p) at p = {p}"))),
        DomainKind::SquareR => {
            let dom = crate::ifs_geometry::build_snowflake(kind, p, 7)?;
            let mut inp = closed_form_inputs(kind, p, 1.0, dom.diameter_upper())?;
            inp.m_frak = crate::minkowski::frak_from_cover(
                inp.n,
                inp.delta,
                inp.ranges.c_vol.hi,
                inp.c_of_omega,
                inp.eps0,
                inp.vol,
            );
            Ok(inp)
        }
    }
}

/// Evaluated ledger for [`domain_inputs`].
pub fn domain_ledger(kind: DomainKind, p: f64) -> Result<ConstantsLedger> {
    ledger_from_inputs(&domain_inputs(kind, p)?)
}

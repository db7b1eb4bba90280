//! Finite-difference Laplacians on rasterised domains, a preconditioned block
//! eigensolver for the smallest eigenvalues, Richardson extrapolation, and the
//! Poincaré–Wirtinger check of covering elements.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::Boundary;
use crate::distance::SegmentQuadtree;
use crate::error::{Error, Result};
use crate::foliation::{local_polygon, local_width, CoverElement};
use crate::ifs_geometry::{hausdorff_error, PKochSystem};
use crate::point::{Aabb, Point};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Cell occupancy on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMask {
    /// Grid spacing.
    pub h: f64,
    /// Lower-left corner of cell `(0, 0)`.
    pub origin: Point,
    /// Cells along `x`.
    pub nx: usize,
    /// Cells along `y`.
    pub ny: usize,
    /// Row-major occupancy.
    pub cells: Vec<bool>,
}

impl GridMask {
    /// Occupies every cell of `bbox` whose centre satisfies `inside`.
    pub fn from_predicate(bbox: Aabb, h: f64, inside: impl Fn(Point) -> bool + Sync) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
        }
        let e = bbox.extent();
        let nx = ((e.x / h).round() as usize).max(1);
        let ny = ((e.y / h).round() as usize).max(1);
        if nx.saturating_mul(ny) > 1 << 26 {
            return Err(Error::Resource(format!("grid {nx}×{ny} exceeds the cell budget")));
        }
        let origin = bbox.min;
        let cells = (0..nx * ny)
            .into_par_iter()
            .map(|id| inside(Self::center_of(origin, h, id % nx, id / nx)))
            .collect();
        Ok(GridMask { h, origin, nx, ny, cells })
    }

    fn center_of(origin: Point, h: f64, i: usize, j: usize) -> Point {
        origin + Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    /// Centre of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> Point {
        Self::center_of(self.origin, self.h, i, j)
    }

    /// Fully occupied `a × b` rectangle; `a/h` and `b/h` are rounded to whole cells.
    pub fn rectangle(a: f64, b: f64, h: f64) -> Result<Self> {
        Self::from_predicate(Aabb::new(Point::new(0.0, 0.0), Point::new(a, b)), h, |_| true)
    }

    /// Disk of radius `radius` centred at the origin.
    pub fn disk(radius: f64, h: f64) -> Result<Self> {
        let n = (radius / h).ceil();
        let bb = Aabb::new(Point::new(-n * h, -n * h), Point::new(n * h, n * h));
        Self::from_predicate(bb, h, |c| c.norm() < radius)
    }

    /// Cells whose centre lies inside the polygon by more than `margin`.
    pub fn from_polygon(poly: &[Point], margin: f64, h: f64) -> Result<Self> {
        let tree = SegmentQuadtree::new(poly.to_vec());
        let bb = Aabb::from_points(poly);
        let pad = Point::new(h, h);
        let lo = Point::new((bb.min.x / h).floor() * h, (bb.min.y / h).floor() * h) - pad;
        let hi = Point::new((bb.max.x / h).ceil() * h, (bb.max.y / h).ceil() * h) + pad;
        Self::from_predicate(Aabb::new(lo, hi), h, |c| tree.signed_distance(c) > margin)
    }

    /// Number of occupied cells.
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    fn occupied(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny && self.cells[j as usize * self.nx + i as usize]
    }

    /// Unknown index of each cell (`usize::MAX` when empty).
    pub fn numbering(&self) -> Vec<usize> {
        let mut next = 0;
        self.cells
            .iter()
            .map(|&c| {
                if c {
                    next += 1;
                    next - 1
                } else {
                    usize::MAX
                }
            })
            .collect()
    }

    /// Centres of occupied cells in unknown order.
    pub fn centers(&self) -> Vec<Point> {
        (0..self.nx * self.ny).filter(|&id| self.cells[id]).map(|id| self.center(id % self.nx, id / self.nx)).collect()
    }

    /// 4-neighbour component label of every cell (`usize::MAX` when empty) and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.cells.len()];
        let mut count = 0;
        for start in 0..self.cells.len() {
            if !self.cells[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            let mut queue = VecDeque::from([start]);
            while let Some(id) = queue.pop_front() {
                let (i, j) = ((id % self.nx) as i64, (id / self.nx) as i64);
                for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                    if self.occupied(a, b) {
                        let nid = b as usize * self.nx + a as usize;
                        if label[nid] == usize::MAX {
                            label[nid] = count;
                            queue.push_back(nid);
                        }
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Whether the occupied cells form one 4-connected component.
    pub fn is_connected(&self) -> bool {
        self.components().1 == 1
    }

    /// The component containing the cell under `q`.
    pub fn keep_component_containing(&self, q: Point) -> Result<GridMask> {
        let i = ((q.x - self.origin.x) / self.h).floor() as i64;
        let j = ((q.y - self.origin.y) / self.h).floor() as i64;
        if !self.occupied(i, j) {
            return Err(Error::Precondition(format!("point {q:?} lies in no occupied cell")));
        }
        let (label, _) = self.components();
        let target = label[j as usize * self.nx + i as usize];
        Ok(GridMask { cells: label.iter().map(|&l| l == target).collect(), ..self.clone() })
    }

    /// The mask restricted to one component label.
    pub fn component(&self, label: &[usize], which: usize) -> GridMask {
        GridMask { cells: label.iter().map(|&l| l == which).collect(), ..self.clone() }
    }

    /// Occupied area `count · h²`.
    pub fn area(&self) -> f64 {
        self.count() as f64 * self.h * self.h
    }
}

/// Symmetric sparse operator in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    /// Number of unknowns.
    pub n: usize,
    /// Row pointers.
    pub row_ptr: Vec<usize>,
    /// Column indices.
    pub cols: Vec<usize>,
    /// Values.
    pub vals: Vec<f64>,
    /// Boundary condition.
    pub bc: Boundary,
    /// Grid spacing.
    pub h: f64,
}

/// 5-point Neumann Laplacian with reflecting closure; fails on a disconnected mask.
pub fn assemble_neumann(mask: &GridMask) -> Result<Operator> {
    if mask.count() == 0 {
        return Err(Error::Precondition("mask is empty".into()));
    }
    if !mask.is_connected() {
        return Err(Error::Precondition("Neumann assembly needs a connected mask".into()));
    }
    Ok(assemble(mask, Boundary::Neumann))
}

/// 5-point Dirichlet Laplacian with the boundary on the cell faces.
pub fn assemble_dirichlet(mask: &GridMask) -> Result<Operator> {
    if mask.count() == 0 {
        return Err(Error::Precondition("mask is empty".into()));
    }
    Ok(assemble(mask, Boundary::Dirichlet))
}

fn assemble(mask: &GridMask, bc: Boundary) -> Operator {
    let num = mask.numbering();
    let inv = 1.0 / (mask.h * mask.h);
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for id in 0..mask.cells.len() {
        if !mask.cells[id] {
            continue;
        }
        let (i, j) = ((id % mask.nx) as i64, (id / mask.nx) as i64);
        let mut diag = 0.0;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
        for (a, b) in [(i, j - 1), (i - 1, j), (i + 1, j), (i, j + 1)] {
            if mask.occupied(a, b) {
                row.push((num[b as usize * mask.nx + a as usize], -inv));
                diag += inv;
            } else if bc == Boundary::Dirichlet {
                diag += 2.0 * inv;
            }
        }
        row.push((num[id], diag));
        row.sort_by_key(|e| e.0);
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Operator { n: row_ptr.len() - 1, row_ptr, cols, vals, bc, h: mask.h }
}

impl Operator {
    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .into_par_iter()
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|e| self.vals[e] * x[self.cols[e]]).sum())
            .collect()
    }

    /// `⟨x, A x⟩ / ⟨x, x⟩`.
    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x)) / dot(x, x)
    }

    /// Entry `(r, c)`.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1]).find(|&e| self.cols[e] == c).map(|e| self.vals[e]).unwrap_or(0.0)
    }

    fn to_faer_shifted(&self, shift: f64) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.vals.len());
        for r in 0..self.n {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let v = if self.cols[e] == r { self.vals[e] + shift } else { self.vals[e] };
                t.push(Triplet::new(r, self.cols[e], v));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| Error::Degenerate(format!("sparse assembly failed: {e:?}")))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Smallest eigenpairs with residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `‖Au − λu‖/‖u‖` per eigenpair.
    pub residuals: Vec<f64>,
    /// Grid spacing.
    pub h: f64,
    /// Number of unknowns.
    pub unknowns: usize,
    /// Iterations used.
    pub iterations: usize,
    /// Unit eigenvectors, one per eigenvalue.
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

/// The `m` smallest eigenvalues of a grid operator.
///
/// For Neumann operators the constant mode is returned exactly as the first
/// pair and the iteration runs on the mean-zero complement. The block
/// iteration is LOBPCG preconditioned by a sparse Cholesky factor of `A + σI`.
pub fn smallest_eigs(op: &Operator, m: usize, tol: f64) -> Result<SpectralResult> {
    if m < 1 || m > op.n {
        return Err(Error::Precondition(format!("need 1 ≤ m ≤ {} eigenpairs, got {m}", op.n)));
    }
    let deflate = op.bc == Boundary::Neumann;
    let mut result = SpectralResult {
        eigenvalues: Vec::new(),
        residuals: Vec::new(),
        h: op.h,
        unknowns: op.n,
        iterations: 0,
        vectors: Vec::new(),
    };
    let mut want = m;
    if deflate {
        result.eigenvalues.push(0.0);
        result.residuals.push(norm(&op.apply(&vec![1.0; op.n])) / (op.n as f64).sqrt());
        result.vectors.push(vec![1.0 / (op.n as f64).sqrt(); op.n]);
        want -= 1;
    }
    if want == 0 {
        return Ok(result);
    }
    let avail = if deflate { op.n - 1 } else { op.n };
    if want > avail {
        return Err(Error::Precondition(format!("only {avail} non-constant modes exist")));
    }
    if avail <= 64 {
        return dense_fallback(op, want, deflate, result);
    }
    let block = (want + 2).min(avail);
    let (vals, vecs, res, iters) = lobpcg(op, want, block, tol, deflate)?;
    result.eigenvalues.extend(vals);
    result.residuals.extend(res);
    result.vectors.extend(vecs);
    result.iterations = iters;
    Ok(result)
}

fn dense_fallback(op: &Operator, want: usize, deflate: bool, mut result: SpectralResult) -> Result<SpectralResult> {
    let a = Mat::<f64>::from_fn(op.n, op.n, |i, j| op.get(i, j));
    let eig = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Degenerate(format!("dense eigensolver: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..op.n).map(|c| (s[c], (0..op.n).map(|r| u[(r, c)]).collect())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let skip = usize::from(deflate);
    for (lam, v) in pairs.into_iter().skip(skip).take(want) {
        let av = op.apply(&v);
        let r: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - lam * y).collect();
        result.residuals.push(norm(&r));
        result.eigenvalues.push(lam);
        result.vectors.push(v);
    }
    Ok(result)
}

type Block = Vec<Vec<f64>>;

fn orthonormalize(vs: Block, basis: &mut Block, deflate: bool) {
    for mut v in vs {
        if deflate {
            remove_mean(&mut v);
        }
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n1 = norm(&v);
        if n1 > 1e-10 * n0 {
            v.iter_mut().for_each(|x| *x /= n1);
            basis.push(v);
        }
    }
}

fn combine(basis: &Block, coeffs: &Mat<f64>, col: usize, rows: std::ops::Range<usize>) -> Vec<f64> {
    let n = basis[0].len();
    let mut out = vec![0.0; n];
    for r in rows {
        let c = coeffs[(r, col)];
        out.iter_mut().zip(&basis[r]).for_each(|(o, b)| *o += c * b);
    }
    out
}

type LobpcgOut = (Vec<f64>, Block, Vec<f64>, usize);

fn lobpcg(op: &Operator, want: usize, block: usize, tol: f64, deflate: bool) -> Result<LobpcgOut> {
    let n = op.n;
    let mut diag_mean = 0.0;
    for r in 0..n {
        diag_mean += op.get(r, r);
    }
    diag_mean /= n as f64;
    let shift = 1e-3 * diag_mean.max(1e-300);
    let llt = op
        .to_faer_shifted(shift)?
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("Cholesky factorisation failed: {e:?}")))?;
    let precond = |r: &Block| -> Block {
        let mut m = Mat::<f64>::from_fn(n, r.len(), |i, j| r[j][i]);
        llt.solve_in_place(m.as_mut());
        (0..r.len()).map(|j| (0..n).map(|i| m[(i, j)]).collect()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let init: Block = (0..block).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut x: Block = Vec::new();
    orthonormalize(precond(&init), &mut x, deflate);
    let mut p: Block = Vec::new();
    let budget = (50.0 * (n as f64).sqrt()).ceil() as usize;
    let mut lam = vec![0.0; x.len()];
    let mut res = vec![f64::INFINITY; x.len()];
    for it in 0..budget.max(10) {
        let ax: Block = x.iter().map(|v| op.apply(v)).collect();
        lam = x.iter().zip(&ax).map(|(v, a)| dot(v, a)).collect();
        let r: Block = x
            .iter()
            .zip(&ax)
            .zip(&lam)
            .map(|((v, a), &l)| a.iter().zip(v).map(|(ai, vi)| ai - l * vi).collect())
            .collect();
        res = r.iter().map(|v| norm(v)).collect();
        let converged = (0..want).all(|i| res[i] <= tol * lam[i].abs().max(f64::MIN_POSITIVE));
        if converged && it > 0 {
            let mut idx: Vec<usize> = (0..want).collect();
            idx.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            return Ok((pick(&lam), idx.iter().map(|&i| x[i].clone()).collect(), pick(&res), it));
        }
        let w = precond(&r);
        let mut basis = x.clone();
        let nx = basis.len();
        orthonormalize(w, &mut basis, deflate);
        orthonormalize(p.clone(), &mut basis, deflate);
        let k = basis.len();
        let ab: Block = basis.iter().map(|v| op.apply(v)).collect();
        let g = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (dot(&basis[i], &ab[j]) + dot(&basis[j], &ab[i])));
        let eig = g.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Degenerate(format!("Rayleigh–Ritz: {e:?}")))?;
        let s = eig.S().column_vector();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        let u = eig.U();
        let coeffs = Mat::<f64>::from_fn(k, nx, |i, j| u[(i, order[j])]);
        let new_x: Block = (0..nx).map(|c| combine(&basis, &coeffs, c, 0..k)).collect();
        p = (0..nx).map(|c| combine(&basis, &coeffs, c, nx..k)).collect();
        x = Vec::new();
        orthonormalize(new_x, &mut x, deflate);
        if x.len() < want {
            return Err(Error::Degenerate("block iteration lost rank".into()));
        }
    }
    let worst = (0..want).map(|i| res[i] / lam[i].abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    Err(Error::NonConvergence { what: "LOBPCG".into(), achieved: worst, required: tol })
}

/// Richardson extrapolation `(4λ_{h/2} − λ_h)/3` for second-order schemes.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// `λ₂` on grids `h` and `h/2` and the extrapolated value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated {
    /// Coarse spacing.
    pub h: f64,
    /// `λ₂` at `h`.
    pub coarse: f64,
    /// `λ₂` at `h/2`.
    pub fine: f64,
    /// Richardson value.
    pub extrapolated: f64,
}

/// Neumann `λ₂` on two grids produced by `mask_at`, with Richardson extrapolation.
pub fn lambda2_extrapolated(mask_at: impl Fn(f64) -> Result<GridMask>, h: f64, tol: f64) -> Result<Extrapolated> {
    let l = |hh: f64| -> Result<f64> { Ok(smallest_eigs(&assemble_neumann(&mask_at(hh)?)?, 2, tol)?.eigenvalues[1]) };
    let coarse = l(h)?;
    let fine = l(h / 2.0)?;
    Ok(Extrapolated { h, coarse, fine, extrapolated: richardson(coarse, fine) })
}

/// Eigenvalues of a possibly disconnected mask, computed per component and merged.
pub fn smallest_eigs_components(mask: &GridMask, bc: Boundary, m: usize, tol: f64) -> Result<Vec<f64>> {
    let (label, count) = mask.components();
    let mut all = Vec::new();
    for c in 0..count {
        let sub = mask.component(&label, c);
        let op = match bc {
            Boundary::Neumann => assemble_neumann(&sub)?,
            Boundary::Dirichlet => assemble_dirichlet(&sub)?,
        };
        all.extend(smallest_eigs(&op, m.min(op.n), tol)?.eigenvalues);
    }
    all.sort_by(f64::total_cmp);
    all.truncate(m);
    Ok(all)
}

/// Rasterises an element in its unrotated local frame scaled to absolute size.
///
/// The fractal top is resolved to chain level `level`; cells must clear the
/// polygon by more than its Hausdorff error, and only the component of `E` is kept.
pub fn rasterize_element(element: &CoverElement, sys: &PKochSystem, cells_across: usize, level: u32) -> Result<GridMask> {
    let s = element.placement.scale;
    let eh = element.eps_hat();
    let poly: Vec<Point> = local_polygon(sys, element.kind, eh, level)?.into_iter().map(|v| v * s).collect();
    let w = local_width(sys.p, element.kind, eh) * s;
    let h = w / cells_across as f64;
    let margin = hausdorff_error(sys.p, level) * s;
    let mask = GridMask::from_polygon(&poly, margin, h)?;
    mask.keep_component_containing(Point::new(0.5 * w, -0.5 * element.epsilon))
}

/// Result of the Poincaré check on one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    /// Constant `C` of `‖u − ū_E‖² ≤ C‖∇u‖²` from the eigenvalue lemma.
    pub bound: f64,
    /// Largest ratio over random band-limited trials.
    pub worst_trial_ratio: f64,
    /// Ratio for the first non-constant eigenvector.
    pub eigenvector_ratio: f64,
    /// Discrete `λ₂` of the element.
    pub lambda2: f64,
    /// Number of trials.
    pub trials: usize,
}

impl PoincareReport {
    /// Whether every ratio stays below the bound.
    pub fn passes(&self) -> bool {
        self.worst_trial_ratio <= self.bound && self.eigenvector_ratio <= self.bound
    }
}

/// Checks `‖u − ū_E‖² / ‖∇u‖² ≤ C` on random band-limited fields and on the
/// first non-constant eigenvector of the rasterised element.
pub fn poincare_check(element: &CoverElement, mask: &GridMask, trials: usize, seed: u64) -> Result<PoincareReport> {
    if trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    let op = assemble_neumann(mask)?;
    let centers = mask.centers();
    let in_e: Vec<bool> = centers.iter().map(|c| c.y < 0.0 && c.x > 0.0 && c.x < element.width).collect();
    if !in_e.iter().any(|&b| b) {
        return Err(Error::Precondition("resolution too coarse to resolve the base box E".into()));
    }
    let ratio = |u: &[f64]| -> f64 {
        let (s, c) = u.iter().zip(&in_e).filter(|(_, &e)| e).fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        let mean_e = s / c as f64;
        let num: f64 = u.iter().map(|v| (v - mean_e).powi(2)).sum();
        num / dot(u, &op.apply(u))
    };
    let (alpha_bound, _) = crate::constants::lemma_bound_optimized(
        element.lambda2_e,
        element.r,
        element.l,
        element.i_beta,
        element.beta_inf,
        element.beta_inf,
    );
    let bound = 1.0 / alpha_bound;
    let bb = Aabb::from_points(&centers);
    let ext = bb.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = 4;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut modes = Vec::new();
        for kx in 0..=kmax {
            for ky in 0..=kmax {
                if kx + ky == 0 {
                    continue;
                }
                let amp = (rng.random::<f64>() - 0.5) / (1.0 + (kx * kx + ky * ky) as f64);
                let phase = rng.random::<f64>() * 2.0 * PI;
                modes.push((kx as f64, ky as f64, amp, phase));
            }
        }
        let u: Vec<f64> = centers
            .iter()
            .map(|c| {
                let x = (c.x - bb.min.x) / ext.x.max(1e-300);
                let y = (c.y - bb.min.y) / ext.y.max(1e-300);
                modes.iter().map(|&(kx, ky, a, ph)| a * (PI * (kx * x + ky * y) + ph).cos()).sum()
            })
            .collect();
        worst = worst.max(ratio(&u));
    }
    let spec = smallest_eigs(&op, 2, DEFAULT_TOL)?;
    Ok(PoincareReport {
        bound,
        worst_trial_ratio: worst,
        eigenvector_ratio: ratio(&spec.vectors[1]),
        lambda2: spec.eigenvalues[1],
        trials,
    })
}

/// Writes an eigenvector as CSV rows `x,y,value`.
pub fn write_field_csv<W: Write>(w: W, mask: &GridMask, field: &[f64]) -> Result<()> {
    if field.len() != mask.count() {
        return Err(Error::Precondition("field length must match the occupied cell count".into()));
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "y", "value"])?;
    for (c, v) in mask.centers().iter().zip(field) {
        wr.serialize((c.x, c.y, v))?;
    }
    wr.flush()?;
    Ok(())
}

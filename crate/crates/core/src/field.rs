//! 2D electrostatics of a junction cross-section: finite-volume Laplace
//! solver on a graded tensor mesh, plus the screening and decay measurements
//! built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL_NM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0_nm: f64,
    pub x1_nm: f64,
    pub y0_nm: f64,
    pub y1_nm: f64,
}

impl Rect {
    pub fn new(x0_nm: f64, x1_nm: f64, y0_nm: f64, y1_nm: f64) -> Self {
        Self {
            x0_nm,
            x1_nm,
            y0_nm,
            y1_nm,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0_nm - TOL_NM
            && x <= self.x1_nm + TOL_NM
            && y >= self.y0_nm - TOL_NM
            && y <= self.y1_nm + TOL_NM
    }

    fn contains_strictly(&self, x: f64, y: f64) -> bool {
        x > self.x0_nm + TOL_NM && x < self.x1_nm - TOL_NM && y > self.y0_nm + TOL_NM && y < self.y1_nm - TOL_NM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub name: String,
    pub rect: Rect,
    pub potential_v: f64,
}

/// Later dielectrics override earlier ones where they overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dielectric {
    pub rect: Rect,
    pub eps_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    /// Zero normal field.
    Neumann,
    Dirichlet { potential_v: f64 },
}

/// Mesh grading: `fine_nm` inside `focus`, growing linearly with distance
/// from it by `growth` per cell, capped at `max_nm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub fine_nm: f64,
    pub max_nm: f64,
    pub growth: f64,
    pub focus: Rect,
    #[serde(default)]
    pub extra_lines_x_nm: Vec<f64>,
    #[serde(default)]
    pub extra_lines_y_nm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub x_range_nm: [f64; 2],
    pub y_range_nm: [f64; 2],
    pub background_eps: f64,
    pub dielectrics: Vec<Dielectric>,
    pub conductors: Vec<Conductor>,
    pub left: Boundary,
    pub right: Boundary,
    pub bottom: Boundary,
    pub top: Boundary,
    pub mesh: MeshSpec,
}

impl CrossSection {
    /// Two plates `gap_nm` apart in vacuum, bottom at 0 V and top at `v`.
    pub fn parallel_plate(gap_nm: f64, width_nm: f64, v: f64) -> Self {
        CrossSection {
            x_range_nm: [0.0, width_nm],
            y_range_nm: [0.0, gap_nm],
            background_eps: 1.0,
            dielectrics: Vec::new(),
            conductors: Vec::new(),
            left: Boundary::Neumann,
            right: Boundary::Neumann,
            bottom: Boundary::Dirichlet { potential_v: 0.0 },
            top: Boundary::Dirichlet { potential_v: v },
            mesh: MeshSpec {
                fine_nm: gap_nm / 20.0,
                max_nm: gap_nm / 5.0,
                growth: 1.2,
                focus: Rect::new(0.0, width_nm, 0.0, gap_nm),
                extra_lines_x_nm: Vec::new(),
                extra_lines_y_nm: Vec::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, x1] = self.x_range_nm;
        let [y0, y1] = self.y_range_nm;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::invalid("range_nm", "domain must have positive extent"));
        }
        let m = &self.mesh;
        if !(m.fine_nm > 0.0 && m.max_nm >= m.fine_nm && m.growth >= 1.0) {
            return Err(Error::invalid(
                "mesh",
                "need fine_nm > 0, max_nm >= fine_nm and growth >= 1",
            ));
        }
        if !(self.background_eps > 0.0) || self.dielectrics.iter().any(|d| !(d.eps_r > 0.0)) {
            return Err(Error::invalid("eps_r", "permittivities must be > 0"));
        }
        for (i, a) in self.conductors.iter().enumerate() {
            for b in &self.conductors[i + 1..] {
                let overlap = a.rect.x0_nm < b.rect.x1_nm
                    && b.rect.x0_nm < a.rect.x1_nm
                    && a.rect.y0_nm < b.rect.y1_nm
                    && b.rect.y0_nm < a.rect.y1_nm;
                if overlap {
                    return Err(Error::invalid(
                        "conductors",
                        format!("'{}' and '{}' overlap", a.name, b.name),
                    ));
                }
            }
        }
        let has_dirichlet = [self.left, self.right, self.bottom, self.top]
            .iter()
            .any(|b| matches!(b, Boundary::Dirichlet { .. }))
            || !self.conductors.is_empty();
        if !has_dirichlet {
            return Err(Error::invalid("boundaries", "need at least one fixed-potential conductor"));
        }
        Ok(())
    }

    /// Same geometry with every fixed potential multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let scale = |b: Boundary| match b {
            Boundary::Neumann => Boundary::Neumann,
            Boundary::Dirichlet { potential_v } => Boundary::Dirichlet {
                potential_v: alpha * potential_v,
            },
        };
        let mut out = self.clone();
        for c in &mut out.conductors {
            c.potential_v *= alpha;
        }
        out.left = scale(out.left);
        out.right = scale(out.right);
        out.bottom = scale(out.bottom);
        out.top = scale(out.top);
        out
    }
}

/// Dimensions of the default junction cross-section. The junction barrier
/// lies between the bottom electrode (top face at `bottom_thickness_nm`) and
/// the top electrode, which ends at x = 0; that end is the open edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JunctionCrossSection {
    pub barrier_nm: f64,
    pub bottom_thickness_nm: f64,
    pub top_thickness_nm: f64,
    /// Bottom electrode extends this far beyond the open edge.
    pub bottom_overhang_nm: f64,
    pub substrate_depth_nm: f64,
    /// Height of the gate plate above the substrate surface.
    pub gate_height_nm: f64,
    pub domain_left_nm: f64,
    pub domain_right_nm: f64,
    pub substrate_eps: f64,
    pub barrier_eps: f64,
    pub fine_nm: f64,
    pub max_cell_nm: f64,
    pub growth: f64,
}

impl Default for JunctionCrossSection {
    fn default() -> Self {
        Self {
            barrier_nm: 2.0,
            bottom_thickness_nm: 30.0,
            top_thickness_nm: 100.0,
            bottom_overhang_nm: 300.0,
            substrate_depth_nm: 1000.0,
            gate_height_nm: 1500.0,
            domain_left_nm: 1000.0,
            domain_right_nm: 2000.0,
            substrate_eps: 10.0,
            barrier_eps: 9.0,
            fine_nm: 0.125,
            max_cell_nm: 50.0,
            growth: 1.15,
        }
    }
}

impl JunctionCrossSection {
    /// y of the barrier mid-plane (nm).
    pub fn barrier_mid_nm(&self) -> f64 {
        self.bottom_thickness_nm + 0.5 * self.barrier_nm
    }

    /// Point far from all electrodes where the gate field is unscreened.
    pub fn reference_point_nm(&self) -> (f64, f64) {
        (
            0.5 * (self.bottom_overhang_nm + self.domain_right_nm),
            0.5 * self.gate_height_nm,
        )
    }

    fn model(&self, v_bottom: f64, v_top: f64, v_gate: f64) -> CrossSection {
        let b = self.bottom_thickness_nm;
        let d = self.barrier_nm;
        let left = -self.domain_left_nm;
        let right = self.domain_right_nm;
        let ov = self.bottom_overhang_nm;
        CrossSection {
            x_range_nm: [left, right],
            y_range_nm: [-self.substrate_depth_nm, self.gate_height_nm],
            background_eps: 1.0,
            dielectrics: vec![
                Dielectric {
                    rect: Rect::new(left, right, -self.substrate_depth_nm, 0.0),
                    eps_r: self.substrate_eps,
                },
                // Oxide on the whole bottom-electrode top face, barrier included.
                Dielectric {
                    rect: Rect::new(left, ov, b, b + d),
                    eps_r: self.barrier_eps,
                },
            ],
            conductors: vec![
                Conductor {
                    name: "bottom".into(),
                    rect: Rect::new(left, ov, 0.0, b),
                    potential_v: v_bottom,
                },
                Conductor {
                    name: "top".into(),
                    rect: Rect::new(left, 0.0, b + d, b + d + self.top_thickness_nm),
                    potential_v: v_top,
                },
            ],
            left: Boundary::Neumann,
            right: Boundary::Neumann,
            bottom: Boundary::Dirichlet { potential_v: 0.0 },
            top: Boundary::Dirichlet { potential_v: v_gate },
            mesh: MeshSpec {
                fine_nm: self.fine_nm,
                max_nm: self.max_cell_nm,
                growth: self.growth,
                focus: Rect::new(-10.0 * d, 20.0 * d, b - 2.0 * d, b + 3.0 * d),
                extra_lines_x_nm: Vec::new(),
                extra_lines_y_nm: vec![self.barrier_mid_nm()],
            },
        }
    }

    /// Gate plate at `v_gate`, both electrodes and the substrate back grounded.
    pub fn dc_model(&self, v_gate: f64) -> CrossSection {
        self.model(0.0, 0.0, v_gate)
    }

    /// Electrodes at ∓`barrier_v`/2, gate plate grounded.
    pub fn ac_model(&self, barrier_v: f64) -> CrossSection {
        self.model(-0.5 * barrier_v, 0.5 * barrier_v, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Target ‖b − Aφ‖ / ‖b‖.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Each level halves every mesh spacing.
    pub refine: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200_000,
            refine: 0,
        }
    }
}

/// Node potentials and field magnitudes, row-major in (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub xs_nm: Vec<f64>,
    pub ys_nm: Vec<f64>,
    pub potential_v: Vec<f64>,
    pub field_v_per_m: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn interp_index(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    if v < axis[0] - TOL_NM || v > axis[axis.len() - 1] + TOL_NM {
        return None;
    }
    let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
    let t = ((v - axis[i]) / (axis[i + 1] - axis[i])).clamp(0.0, 1.0);
    Some((i, t))
}

impl FieldMap {
    pub fn nx(&self) -> usize {
        self.xs_nm.len()
    }

    pub fn ny(&self) -> usize {
        self.ys_nm.len()
    }

    fn bilinear(&self, values: &[f64], x: f64, y: f64) -> Option<f64> {
        let (i, tx) = interp_index(&self.xs_nm, x)?;
        let (j, ty) = interp_index(&self.ys_nm, y)?;
        let nx = self.nx();
        let v = |ii: usize, jj: usize| values[jj * nx + ii];
        Some(
            (1.0 - tx) * (1.0 - ty) * v(i, j)
                + tx * (1.0 - ty) * v(i + 1, j)
                + (1.0 - tx) * ty * v(i, j + 1)
                + tx * ty * v(i + 1, j + 1),
        )
    }

    pub fn potential_at(&self, x_nm: f64, y_nm: f64) -> Option<f64> {
        self.bilinear(&self.potential_v, x_nm, y_nm)
    }

    pub fn field_at(&self, x_nm: f64, y_nm: f64) -> Option<f64> {
        self.bilinear(&self.field_v_per_m, x_nm, y_nm)
    }

    /// |E| at the nodes of the grid row nearest `y_nm` with x in `[x_from, x_to]`,
    /// as (distance from `x_from`, field).
    pub fn row_profile(&self, y_nm: f64, x_from_nm: f64, x_to_nm: f64) -> Vec<(f64, f64)> {
        let j = nearest(&self.ys_nm, y_nm);
        let nx = self.nx();
        self.xs_nm
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= x_from_nm - TOL_NM && x <= x_to_nm + TOL_NM)
            .map(|(i, &x)| (x - x_from_nm, self.field_v_per_m[j * nx + i]))
            .collect()
    }
}

fn nearest(axis: &[f64], v: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map_or(0, |(i, _)| i)
}

fn build_axis(lo: f64, hi: f64, lines: &[f64], focus: (f64, f64), spec: &MeshSpec) -> Vec<f64> {
    let mut breaks: Vec<f64> = lines
        .iter()
        .copied()
        .chain([lo, hi, focus.0, focus.1])
        .filter(|&v| v >= lo && v <= hi)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-6);

    let spacing = |x: f64| {
        let dist = (focus.0 - x).max(x - focus.1).max(0.0);
        (spec.fine_nm + (spec.growth - 1.0) * dist).min(spec.max_nm)
    };
    let mut out = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let mut steps = Vec::new();
        let mut x = a;
        while x < b - 1e-12 {
            let h = spacing(x).min(spacing((x + spacing(x)).min(b)));
            steps.push(h);
            x += h;
        }
        let total: f64 = steps.iter().sum();
        if steps.len() > 1 && total - len > 0.5 * steps[steps.len() - 1] {
            steps.pop();
        }
        let scale = len / steps.iter().sum::<f64>();
        let mut x = a;
        for (k, h) in steps.iter().enumerate() {
            x = if k + 1 == steps.len() { b } else { x + h * scale };
            out.push(x);
        }
    }
    out
}

fn refine_axis(axis: &[f64], levels: u32) -> Vec<f64> {
    let mut a = axis.to_vec();
    for _ in 0..levels {
        let mut r = Vec::with_capacity(2 * a.len());
        for w in a.windows(2) {
            r.push(w[0]);
            r.push(0.5 * (w[0] + w[1]));
        }
        r.push(a[a.len() - 1]);
        a = r;
    }
    a
}

/// Mesh axes for `model` at refinement level `refine`.
pub fn mesh_axes(model: &CrossSection, refine: u32) -> (Vec<f64>, Vec<f64>) {
    let mut lx: Vec<f64> = model.mesh.extra_lines_x_nm.clone();
    let mut ly: Vec<f64> = model.mesh.extra_lines_y_nm.clone();
    let rects = model
        .conductors
        .iter()
        .map(|c| c.rect)
        .chain(model.dielectrics.iter().map(|d| d.rect));
    for r in rects {
        lx.extend([r.x0_nm, r.x1_nm]);
        ly.extend([r.y0_nm, r.y1_nm]);
    }
    let f = model.mesh.focus;
    let xs = build_axis(
        model.x_range_nm[0],
        model.x_range_nm[1],
        &lx,
        (f.x0_nm, f.x1_nm),
        &model.mesh,
    );
    let ys = build_axis(
        model.y_range_nm[0],
        model.y_range_nm[1],
        &ly,
        (f.y0_nm, f.y1_nm),
        &model.mesh,
    );
    (refine_axis(&xs, refine), refine_axis(&ys, refine))
}

/// Solve ∇·(ε∇φ) = 0 with the model's conductors and boundaries.
///
/// Box-integration finite volumes on the mesh nodes with cell-wise
/// permittivity; conjugate gradients preconditioned by modified incomplete Cholesky.
pub fn solve_laplace(model: &CrossSection, opts: &SolverOptions) -> Result<FieldMap> {
    model.validate()?;
    let (xs, ys) = mesh_axes(model, opts.refine);
    let (nx, ny) = (xs.len(), ys.len());
    let n = nx * ny;
    let hx: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let hy: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();

    // Cell permittivity, (ny-1) × (nx-1).
    let mut eps = vec![model.background_eps; (nx - 1) * (ny - 1)];
    for j in 0..ny - 1 {
        let yc = 0.5 * (ys[j] + ys[j + 1]);
        for i in 0..nx - 1 {
            let xc = 0.5 * (xs[i] + xs[i + 1]);
            if let Some(d) = model.dielectrics.iter().rev().find(|d| d.rect.contains(xc, yc)) {
                eps[j * (nx - 1) + i] = d.eps_r;
            }
        }
    }
    let cell = |i: usize, j: usize| eps[j * (nx - 1) + i];

    // Fixed potentials.
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let sides = [
        (model.left, true, 0usize),
        (model.right, true, nx - 1),
        (model.bottom, false, 0),
        (model.top, false, ny - 1),
    ];
    for (b, vertical, idx) in sides {
        if let Boundary::Dirichlet { potential_v } = b {
            if vertical {
                for j in 0..ny {
                    fixed[j * nx + idx] = Some(potential_v);
                }
            } else {
                for i in 0..nx {
                    fixed[idx * nx + i] = Some(potential_v);
                }
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            if let Some(c) = model.conductors.iter().find(|c| c.rect.contains(xs[i], ys[j])) {
                fixed[j * nx + i] = Some(c.potential_v);
            }
        }
    }

    // Edge conductances: a_e[k] couples k and k+1, a_n[k] couples k and k+nx.
    let mut a_e = vec![0.0; n];
    let mut a_n = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                let mut s = 0.0;
                if j > 0 {
                    s += cell(i, j - 1) * hy[j - 1];
                }
                if j + 1 < ny {
                    s += cell(i, j) * hy[j];
                }
                a_e[k] = 0.5 * s / hx[i];
            }
            if j + 1 < ny {
                let mut s = 0.0;
                if i > 0 {
                    s += cell(i - 1, j) * hx[i - 1];
                }
                if i + 1 < nx {
                    s += cell(i, j) * hx[i];
                }
                a_n[k] = 0.5 * s / hy[j];
            }
        }
    }

    let free: Vec<bool> = fixed.iter().map(Option::is_none).collect();
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut phi: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for k in 0..n {
        let (i, j) = (k % nx, k / nx);
        let mut nb: [(usize, f64); 4] = [(usize::MAX, 0.0); 4];
        if i + 1 < nx {
            nb[0] = (k + 1, a_e[k]);
        }
        if i > 0 {
            nb[1] = (k - 1, a_e[k - 1]);
        }
        if j + 1 < ny {
            nb[2] = (k + nx, a_n[k]);
        }
        if j > 0 {
            nb[3] = (k - nx, a_n[k - nx]);
        }
        for (m, a) in nb {
            if m == usize::MAX {
                continue;
            }
            diag[k] += a;
            if free[k] && !free[m] {
                rhs[k] += a * phi[m];
            }
        }
    }

    // A·p over free nodes, treating fixed nodes as zero.
    let apply = |p: &[f64], out: &mut [f64]| {
        for k in 0..n {
            if !free[k] {
                out[k] = 0.0;
                continue;
            }
            let (i, j) = (k % nx, k / nx);
            let mut s = diag[k] * p[k];
            if i + 1 < nx && free[k + 1] {
                s -= a_e[k] * p[k + 1];
            }
            if i > 0 && free[k - 1] {
                s -= a_e[k - 1] * p[k - 1];
            }
            if j + 1 < ny && free[k + nx] {
                s -= a_n[k] * p[k + nx];
            }
            if j > 0 && free[k - nx] {
                s -= a_n[k - nx] * p[k - nx];
            }
            out[k] = s;
        }
    };

    // Modified incomplete Cholesky of the 5-point operator, M = (D+L) D⁻¹ (D+Lᵀ).
    let east = |k: usize| -> f64 {
        if k % nx + 1 < nx && free[k] && free[k + 1] {
            a_e[k]
        } else {
            0.0
        }
    };
    let north = |k: usize| -> f64 {
        if k + nx < n && free[k] && free[k + nx] {
            a_n[k]
        } else {
            0.0
        }
    };
    const OMEGA: f64 = 0.95;
    let mut dk = vec![1.0; n];
    for k in 0..n {
        if !free[k] {
            continue;
        }
        let mut d = diag[k];
        if k % nx > 0 {
            let (w, b) = (k - 1, east(k - 1));
            if b != 0.0 {
                d -= (b * b + OMEGA * b * north(w)) / dk[w];
            }
        }
        if k >= nx {
            let (s, c) = (k - nx, north(k - nx));
            if c != 0.0 {
                d -= (c * c + OMEGA * c * east(s)) / dk[s];
            }
        }
        dk[k] = if d > 0.0 { d } else { diag[k] };
    }
    let precondition = |r: &[f64], z: &mut [f64]| {
        for k in 0..n {
            if !free[k] {
                z[k] = 0.0;
                continue;
            }
            let mut v = r[k];
            if k % nx > 0 {
                v += east(k - 1) * z[k - 1];
            }
            if k >= nx {
                v += north(k - nx) * z[k - nx];
            }
            z[k] = v / dk[k];
        }
        for k in (0..n).rev() {
            if !free[k] {
                continue;
            }
            let mut v = 0.0;
            if k % nx + 1 < nx {
                v += east(k) * z[k + 1];
            }
            if k + nx < n {
                v += north(k) * z[k + nx];
            }
            z[k] += v / dk[k];
        }
    };

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = 0.0;
    if b_norm > 0.0 {
        let mut r = rhs.clone();
        let mut z = vec![0.0; n];
        precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        residual = 1.0;
        while iterations < opts.max_iterations {
            apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            residual = dot(&r, &r).sqrt() / b_norm;
            if residual < opts.tolerance {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        if residual >= opts.tolerance {
            return Err(Error::NonConvergence {
                iterations,
                residual,
                tolerance: opts.tolerance,
            });
        }
    }
    for k in 0..n {
        if free[k] {
            phi[k] = x[k];
        }
    }

    // |E| from non-uniform central differences; zero strictly inside conductors.
    let deriv = |vm: f64, v0: f64, vp: f64, hm: Option<f64>, hp: Option<f64>| match (hm, hp) {
        (Some(a), Some(b)) => (a * a * (vp - v0) + b * b * (v0 - vm)) / (a * b * (a + b)),
        (None, Some(b)) => (vp - v0) / b,
        (Some(a), None) => (v0 - vm) / a,
        (None, None) => 0.0,
    };
    let mut field = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if model
                .conductors
                .iter()
                .any(|c| c.rect.contains_strictly(xs[i], ys[j]))
            {
                continue;
            }
            let ex = deriv(
                if i > 0 { phi[k - 1] } else { 0.0 },
                phi[k],
                if i + 1 < nx { phi[k + 1] } else { 0.0 },
                (i > 0).then(|| hx[i - 1]),
                (i + 1 < nx).then(|| hx[i]),
            );
            let ey = deriv(
                if j > 0 { phi[k - nx] } else { 0.0 },
                phi[k],
                if j + 1 < ny { phi[k + nx] } else { 0.0 },
                (j > 0).then(|| hy[j - 1]),
                (j + 1 < ny).then(|| hy[j]),
            );
            // V/nm → V/m
            field[k] = ex.hypot(ey) * 1e9;
        }
    }

    Ok(FieldMap {
        xs_nm: xs,
        ys_nm: ys,
        potential_v: phi,
        field_v_per_m: field,
        iterations,
        residual,
    })
}

/// DC gate field where the junction should be screened, against an unscreened point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcScreening {
    /// Largest |E| on the barrier mid-plane at least one barrier thickness inside the junction.
    pub barrier_field_v_per_m: f64,
    pub reference_field_v_per_m: f64,
    pub ratio: f64,
    /// (distance from the open edge in nm, |E| / reference) along the barrier mid-plane outward.
    pub edge_profile: Vec<(f64, f64)>,
}

pub fn dc_screening(junction: &JunctionCrossSection, map: &FieldMap) -> Result<DcScreening> {
    let y = junction.barrier_mid_nm();
    let (rx, ry) = junction.reference_point_nm();
    let reference = map
        .field_at(rx, ry)
        .ok_or_else(|| Error::invalid("reference_point", "outside the domain"))?;
    if !(reference > 0.0) {
        return Err(Error::invalid("reference_point", "no field at the reference point"));
    }
    let inside = map.row_profile(y, map.xs_nm[0], -junction.barrier_nm);
    let barrier = inside.iter().map(|p| p.1).fold(0.0, f64::max);
    let edge_profile = map
        .row_profile(y, 0.0, junction.bottom_overhang_nm)
        .into_iter()
        .map(|(d, e)| (d, e / reference))
        .collect();
    Ok(DcScreening {
        barrier_field_v_per_m: barrier,
        reference_field_v_per_m: reference,
        ratio: barrier / reference,
        edge_profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub distances_nm: Vec<f64>,
    pub field_v_per_m: Vec<f64>,
    /// Plate-limit barrier field V/d.
    pub barrier_field_v_per_m: f64,
    /// Distance at which the field first drops below barrier_field / e.
    pub decay_length_nm: Option<f64>,
}

impl DecayProfile {
    /// Field at `distance_nm`, linearly interpolated.
    pub fn at(&self, distance_nm: f64) -> Option<f64> {
        let (i, t) = interp_index(&self.distances_nm, distance_nm)?;
        Some((1.0 - t) * self.field_v_per_m[i] + t * self.field_v_per_m[i + 1])
    }

    pub fn normalized(&self) -> Vec<(f64, f64)> {
        self.distances_nm
            .iter()
            .zip(&self.field_v_per_m)
            .map(|(&d, &e)| (d, e / self.barrier_field_v_per_m))
            .collect()
    }
}

/// Field along the barrier mid-plane outward from the open edge for an AC solve.
pub fn ac_decay_profile(
    junction: &JunctionCrossSection,
    map: &FieldMap,
    barrier_v: f64,
) -> DecayProfile {
    let row = map.row_profile(junction.barrier_mid_nm(), 0.0, junction.bottom_overhang_nm);
    let barrier = barrier_v.abs() / (junction.barrier_nm * 1e-9);
    let target = barrier / std::f64::consts::E;
    let mut decay = None;
    for w in row.windows(2) {
        if w[0].1 >= target && w[1].1 < target {
            // The profile is close to exponential here, so interpolate in log space.
            let t = (w[0].1.ln() - target.ln()) / (w[0].1.ln() - w[1].1.ln());
            decay = Some(w[0].0 + t * (w[1].0 - w[0].0));
            break;
        }
    }
    if decay.is_none() && row.first().is_some_and(|p| p.1 < target) {
        decay = Some(0.0);
    }
    DecayProfile {
        distances_nm: row.iter().map(|p| p.0).collect(),
        field_v_per_m: row.iter().map(|p| p.1).collect(),
        barrier_field_v_per_m: barrier,
        decay_length_nm: decay,
    }
}

/// Widths (nm) along the open-edge normal of the DC-screened band, where the
/// normalized DC field stays below `dc_threshold`, and of the AC-coupled
/// band, where the normalized AC field stays at or above `ac_threshold`.
///
/// Both profiles are (distance, normalized field) pairs ordered outward.
/// A width runs up to the first sample violating its condition; if none
/// does, it is the full profile length.
pub fn exclusion_zone_width(
    dc_profile: &[(f64, f64)],
    ac_profile: &[(f64, f64)],
    dc_threshold: f64,
    ac_threshold: f64,
) -> (f64, f64) {
    let width = |p: &[(f64, f64)], holds: &dyn Fn(f64) -> bool| {
        match p.iter().position(|&(_, e)| !holds(e)) {
            Some(0) => 0.0,
            Some(k) => p[k].0,
            None => p.last().map_or(0.0, |l| l.0),
        }
    };
    (
        width(dc_profile, &|e| e < dc_threshold),
        width(ac_profile, &|e| e >= ac_threshold),
    )
}

/// Settings of a DC + AC screening study of one junction cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    pub junction: JunctionCrossSection,
    pub solver: SolverOptions,
    pub v_gate_v: f64,
    pub barrier_v: f64,
    /// Normalized DC field below which a point counts as screened.
    pub dc_threshold: f64,
    /// Normalized AC field above which a point counts as coupled.
    pub ac_threshold: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            junction: JunctionCrossSection::default(),
            solver: SolverOptions::default(),
            v_gate_v: 1.0,
            barrier_v: 1e-3,
            dc_threshold: 0.01,
            ac_threshold: 0.01,
        }
    }
}

/// Headline numbers of one mesh level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningLevel {
    pub refine: u32,
    pub nx: usize,
    pub ny: usize,
    pub dc_iterations: usize,
    pub ac_iterations: usize,
    pub dc_ratio: f64,
    pub decay_length_nm: Option<f64>,
    pub dc_screened_width_nm: f64,
    pub ac_coupled_width_nm: f64,
}

/// Relative change between the base mesh and one refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementChange {
    pub dc_ratio: f64,
    pub decay_length: f64,
    /// Largest change of the AC field at 0, d/2, d, 2d and 4d from the open edge.
    pub ac_profile: f64,
}

impl RefinementChange {
    pub fn max(&self) -> f64 {
        self.dc_ratio.max(self.decay_length).max(self.ac_profile)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningStudy {
    pub config: ScreeningConfig,
    pub dc_map: FieldMap,
    pub ac_map: FieldMap,
    pub dc: DcScreening,
    pub ac: DecayProfile,
    pub levels: Vec<ScreeningLevel>,
    pub refinement: Option<RefinementChange>,
}

fn screening_level(cfg: &ScreeningConfig, refine: u32) -> Result<(FieldMap, FieldMap, DcScreening, DecayProfile, ScreeningLevel)> {
    let j = &cfg.junction;
    let opts = SolverOptions {
        refine,
        ..cfg.solver
    };
    let dc_map = solve_laplace(&j.dc_model(cfg.v_gate_v), &opts)?;
    let ac_map = solve_laplace(&j.ac_model(cfg.barrier_v), &opts)?;
    let dc = dc_screening(j, &dc_map)?;
    let ac = ac_decay_profile(j, &ac_map, cfg.barrier_v);
    let (dcw, acw) = exclusion_zone_width(&dc.edge_profile, &ac.normalized(), cfg.dc_threshold, cfg.ac_threshold);
    let level = ScreeningLevel {
        refine,
        nx: dc_map.nx(),
        ny: dc_map.ny(),
        dc_iterations: dc_map.iterations,
        ac_iterations: ac_map.iterations,
        dc_ratio: dc.ratio,
        decay_length_nm: ac.decay_length_nm,
        dc_screened_width_nm: dcw,
        ac_coupled_width_nm: acw,
    };
    Ok((dc_map, ac_map, dc, ac, level))
}

/// Solve the DC and AC problems on the configured mesh and, with
/// `check_refinement`, once more with every spacing halved.
pub fn screening_study(cfg: &ScreeningConfig, check_refinement: bool) -> Result<ScreeningStudy> {
    cfg.junction.dc_model(cfg.v_gate_v).validate()?;
    let (dc_map, ac_map, dc, ac, base) = screening_level(cfg, cfg.solver.refine)?;
    let mut levels = vec![base];
    let mut refinement = None;
    if check_refinement {
        let (_, _, _, ac_fine, fine) = screening_level(cfg, cfg.solver.refine + 1)?;
        let rel = |a: f64, b: f64| ((b - a) / a).abs();
        let d = cfg.junction.barrier_nm;
        let ac_profile = [0.0, 0.5 * d, d, 2.0 * d, 4.0 * d]
            .iter()
            .filter_map(|&x| Some(rel(ac.at(x)?, ac_fine.at(x)?)))
            .fold(0.0, f64::max);
        let decay_length = match (base.decay_length_nm, fine.decay_length_nm) {
            (Some(a), Some(b)) => rel(a, b),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        refinement = Some(RefinementChange {
            dc_ratio: rel(base.dc_ratio, fine.dc_ratio),
            decay_length,
            ac_profile,
        });
        levels.push(fine);
    }
    Ok(ScreeningStudy {
        config: *cfg,
        dc_map,
        ac_map,
        dc,
        ac,
        levels,
        refinement,
    })
}

/// Solver check against the analytic field V/gap between two plates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateCheck {
    pub expected_v_per_m: f64,
    pub max_relative_error: f64,
    pub iterations: usize,
}

pub fn parallel_plate_check(gap_nm: f64, v: f64, opts: &SolverOptions) -> Result<PlateCheck> {
    let map = solve_laplace(&CrossSection::parallel_plate(gap_nm, 4.0 * gap_nm, v), opts)?;
    let expected = v.abs() / (gap_nm * 1e-9);
    let nx = map.nx();
    // Boundary rows use one-sided differences; judge the interior.
    let err = (1..map.ny() - 1)
        .flat_map(|j| (0..nx).map(move |i| j * nx + i))
        .map(|k| ((map.field_v_per_m[k] - expected) / expected).abs())
        .fold(0.0, f64::max);
    Ok(PlateCheck {
        expected_v_per_m: expected,
        max_relative_error: err,
        iterations: map.iterations,
    })
}

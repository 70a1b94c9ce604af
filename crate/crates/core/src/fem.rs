//! Small linear-elastic finite-element kernel for checking tissue meshes:
//! two-node bars and constant-strain triangles in plane stress, two degrees of
//! freedom per node.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0 && self.young.is_finite()) {
            return Err(invalid("young", "must be positive"));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(invalid("poisson", "must lie in (-1, 0.5)"));
        }
        Ok(())
    }

    /// Plane-stress constitutive matrix.
    pub fn plane_stress(&self) -> Matrix3<f64> {
        let (e, nu) = (self.young, self.poisson);
        let c = e / (1.0 - nu * nu);
        Matrix3::new(c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    /// Axial bar with cross-section area.
    Bar { nodes: [usize; 2], area: f64 },
    /// Constant-strain triangle with out-of-plane thickness.
    Tri { nodes: [usize; 3], thickness: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
}

impl Mesh {
    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    /// `n` bars of total `length` along x.
    pub fn bar_chain(length: f64, n: usize, area: f64) -> Self {
        let nodes = (0..=n).map(|i| [length * i as f64 / n as f64, 0.0]).collect();
        let elements = (0..n).map(|i| Element::Bar { nodes: [i, i + 1], area }).collect();
        Self { nodes, elements }
    }

    /// Rectangle `[0, lx] × [0, ly]` split into `2·nx·ny` triangles.
    pub fn rect_plate(lx: f64, ly: f64, nx: usize, ny: usize, thickness: f64) -> Self {
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                elements.push(Element::Tri { nodes: [a, b, c], thickness });
                elements.push(Element::Tri { nodes: [a, c, d], thickness });
            }
        }
        Self { nodes, elements }
    }

    fn check_nodes(&self, index: usize, ids: &[usize]) -> Result<()> {
        if ids.iter().any(|&n| n >= self.nodes.len()) {
            return Err(invalid("elements", alloc::format!("element {index} references a missing node")));
        }
        Ok(())
    }
}

fn bar_stiffness(p: [f64; 2], q: [f64; 2], ea: f64, index: usize) -> Result<SMatrix<f64, 4, 4>> {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len = libm::hypot(dx, dy);
    if !(len > 0.0) || !(ea > 0.0) {
        return Err(Error::DegenerateElement { index });
    }
    let (c, s) = (dx / len, dy / len);
    let t = SMatrix::<f64, 1, 4>::new(-c, -s, c, s);
    Ok(t.transpose() * t * (ea / len))
}

fn tri_stiffness(p: [[f64; 2]; 3], d: &Matrix3<f64>, thickness: f64, index: usize) -> Result<SMatrix<f64, 6, 6>> {
    let [(x1, y1), (x2, y2), (x3, y3)] = p.map(|q| (q[0], q[1]));
    let two_a = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    let scale = [(x2 - x1, y2 - y1), (x3 - x2, y3 - y2), (x1 - x3, y1 - y3)]
        .iter()
        .map(|(a, b)| a * a + b * b)
        .fold(0.0, f64::max);
    if !(two_a.abs() > 1e-12 * scale) || !(thickness > 0.0) {
        return Err(Error::DegenerateElement { index });
    }
    let (b1, b2, b3) = (y2 - y3, y3 - y1, y1 - y2);
    let (c1, c2, c3) = (x3 - x2, x1 - x3, x2 - x1);
    #[rustfmt::skip]
    let b = SMatrix::<f64, 3, 6>::from_row_slice(&[
        b1, 0.0, b2, 0.0, b3, 0.0,
        0.0, c1, 0.0, c2, 0.0, c3,
        c1, b1, c2, b2, c3, b3,
    ]) / two_a;
    Ok(b.transpose() * d * b * (thickness * two_a.abs() / 2.0))
}

/// Global stiffness matrix.
pub fn assemble_stiffness(mesh: &Mesh, material: &Material) -> Result<DMatrix<f64>> {
    material.validate()?;
    let n = mesh.n_dofs();
    let mut k = DMatrix::zeros(n, n);
    let d = material.plane_stress();
    for (index, el) in mesh.elements.iter().enumerate() {
        match *el {
            Element::Bar { nodes, area } => {
                mesh.check_nodes(index, &nodes)?;
                let ke = bar_stiffness(mesh.nodes[nodes[0]], mesh.nodes[nodes[1]], material.young * area, index)?;
                scatter(&mut k, &nodes, ke.as_slice(), 4);
            }
            Element::Tri { nodes, thickness } => {
                mesh.check_nodes(index, &nodes)?;
                let ke = tri_stiffness(nodes.map(|i| mesh.nodes[i]), &d, thickness, index)?;
                scatter(&mut k, &nodes, ke.as_slice(), 6);
            }
        }
    }
    Ok(k)
}

// `ke` is column-major, size m × m.
fn scatter(k: &mut DMatrix<f64>, nodes: &[usize], ke: &[f64], m: usize) {
    let dof = |l: usize| 2 * nodes[l / 2] + l % 2;
    for c in 0..m {
        for r in 0..m {
            k[(dof(r), dof(c))] += ke[c * m + r];
        }
    }
}

/// `max|K − Kᵀ| / max|K|` (zero for an empty or zero matrix).
pub fn symmetry_defect(k: &DMatrix<f64>) -> f64 {
    let scale = k.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (k - k.transpose()).amax() / scale
}

/// Solve `K u = f` with the listed degrees of freedom held at zero.
///
/// Returns the full displacement vector (zeros at fixed dofs).
pub fn solve_displacement(k: &DMatrix<f64>, loads: &DVector<f64>, fixed: &[usize]) -> Result<DVector<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: k.ncols() });
    }
    if loads.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: loads.len() });
    }
    let mut is_fixed = vec![false; n];
    for &f in fixed {
        if f >= n {
            return Err(invalid("fixed", "dof index out of range"));
        }
        is_fixed[f] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    let m = free.len();
    let mut out = DVector::zeros(n);
    if m == 0 {
        return Ok(out);
    }
    let kr = DMatrix::from_fn(m, m, |r, c| k[(free[r], free[c])]);
    let fr = DVector::from_fn(m, |r, _| loads[free[r]]);
    let chol = kr.clone().cholesky().ok_or(Error::SingularSystem)?;
    // A positive pivot can still be round-off on a singular matrix.
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(lo > 1e-7 * hi) {
        return Err(Error::SingularSystem);
    }
    let ur = chol.solve(&fr);
    for (r, &i) in free.iter().enumerate() {
        out[i] = ur[r];
    }
    Ok(out)
}

/// Displacement of a single bar fixed at one end and pulled axially.
pub fn bar_tip_deflection(force: f64, length: f64, young: f64, area: f64) -> f64 {
    force * length / (young * area)
}

/// Summary of a mesh check.
#[derive(Debug, Clone, PartialEq)]
pub struct FemReport {
    pub n_dofs: usize,
    pub symmetry_defect: f64,
    pub max_displacement: f64,
}

/// Assemble, measure the symmetry defect and solve one load case.
pub fn check_mesh(mesh: &Mesh, material: &Material, loads: &DVector<f64>, fixed: &[usize]) -> Result<FemReport> {
    let k = assemble_stiffness(mesh, material)?;
    let u = solve_displacement(&k, loads, fixed)?;
    Ok(FemReport { n_dofs: mesh.n_dofs(), symmetry_defect: symmetry_defect(&k), max_displacement: u.amax() })
}

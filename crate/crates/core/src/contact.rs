//! Voxel-map proxy contact and the discrete energy check.
//!
//! The proxy ("god object") lives on the free side of the surface: while the
//! tool tip is in contact the proxy is the centre of the nearest free voxel,
//! otherwise it coincides with the tip.  Contact begins at the centre plane of
//! the last free voxel rather than at the voxel face, so that the spring
//! energy `½k‖p_proxy − p_end‖²` is continuous at onset for motion along a
//! voxel column.

use alloc::vec::Vec;

use bitvec::vec::BitVec;

use crate::error::{invalid, Error, Result};

pub type Vec3 = [f64; 3];

/// Dense occupancy grid; `true` marks tissue.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    occupancy: BitVec,
}

impl VoxelGrid {
    /// An all-free grid.
    pub fn new(origin: Vec3, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("spacing", "must be positive"));
        }
        if dims.contains(&0) {
            return Err(invalid("dims", "every axis needs at least one voxel"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("origin", "must be finite"));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self { origin, spacing, dims, occupancy: BitVec::repeat(false, n) })
    }

    /// A grid from a flat occupancy vector in `i`-fastest order.
    pub fn from_occupancy(origin: Vec3, spacing: f64, dims: [usize; 3], occupancy: BitVec) -> Result<Self> {
        let mut g = Self::new(origin, spacing, dims)?;
        if occupancy.len() != g.occupancy.len() {
            return Err(Error::DimensionMismatch { expected: g.occupancy.len(), got: occupancy.len() });
        }
        g.occupancy = occupancy;
        Ok(g)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn occupancy(&self) -> &BitVec {
        &self.occupancy
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    #[inline]
    pub fn linear(&self, v: [usize; 3]) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    #[inline]
    pub fn is_occupied(&self, v: [usize; 3]) -> bool {
        self.occupancy[self.linear(v)]
    }

    pub fn set(&mut self, v: [usize; 3], occupied: bool) {
        let i = self.linear(v);
        self.occupancy.set(i, occupied);
    }

    #[inline]
    pub fn center(&self, v: [usize; 3]) -> Vec3 {
        let h = self.spacing;
        [
            self.origin[0] + (v[0] as f64 + 0.5) * h,
            self.origin[1] + (v[1] as f64 + 0.5) * h,
            self.origin[2] + (v[2] as f64 + 0.5) * h,
        ]
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn voxel_of(&self, p: Vec3) -> Option<[usize; 3]> {
        let mut v = [0; 3];
        for a in 0..3 {
            let t = libm::floor((p[a] - self.origin[a]) / self.spacing);
            if !(t >= 0.0 && t < self.dims[a] as f64) {
                return None;
            }
            v[a] = t as usize;
        }
        Some(v)
    }

    /// Voxel nearest to `p` with indices clamped into the grid.
    fn clamped_voxel(&self, p: Vec3) -> [usize; 3] {
        let mut v = [0; 3];
        for a in 0..3 {
            let t = libm::floor((p[a] - self.origin[a]) / self.spacing);
            v[a] = if t.is_nan() || t < 0.0 { 0 } else { (t as usize).min(self.dims[a] - 1) };
        }
        v
    }

    pub fn count_occupied(&self) -> usize {
        self.occupancy.count_ones()
    }

    /// Occupy every voxel whose centre satisfies `inside`.
    pub fn fill(&mut self, inside: impl Fn(Vec3) -> bool) {
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    if inside(self.center([i, j, k])) {
                        self.set([i, j, k], true);
                    }
                }
            }
        }
    }

    /// Tissue below the plane `z = surface`.
    pub fn slab(origin: Vec3, spacing: f64, dims: [usize; 3], surface: f64) -> Result<Self> {
        let mut g = Self::new(origin, spacing, dims)?;
        g.fill(|c| c[2] < surface);
        Ok(g)
    }

    /// Tissue below `floor` and above `ceiling`: a free channel in between.
    pub fn channel(origin: Vec3, spacing: f64, dims: [usize; 3], floor: f64, ceiling: f64) -> Result<Self> {
        let mut g = Self::new(origin, spacing, dims)?;
        g.fill(|c| c[2] < floor || c[2] > ceiling);
        Ok(g)
    }

    pub fn sphere(origin: Vec3, spacing: f64, dims: [usize; 3], center: Vec3, radius: f64) -> Result<Self> {
        let mut g = Self::new(origin, spacing, dims)?;
        g.fill(|c| dist2(c, center) <= radius * radius);
        Ok(g)
    }

    /// Two stacked tissue layers below `surface`; returns the grid and the
    /// occupancy of the deep layer (below `interface`) for stiffness lookup.
    pub fn two_layer(
        origin: Vec3,
        spacing: f64,
        dims: [usize; 3],
        surface: f64,
        interface: f64,
    ) -> Result<(Self, BitVec)> {
        if !(interface < surface) {
            return Err(invalid("interface", "must lie below the surface"));
        }
        let g = Self::slab(origin, spacing, dims, surface)?;
        let mut deep = Self::new(origin, spacing, dims)?;
        deep.fill(|c| c[2] < interface);
        Ok((g, deep.occupancy))
    }

    fn free_boundary_side(&self, v: [usize; 3], p: Vec3) -> bool {
        let c = self.center(v);
        for a in 0..3 {
            for dir in [-1isize, 1] {
                let n = v[a] as isize + dir;
                if n < 0 || n >= self.dims[a] as isize {
                    continue;
                }
                let mut w = v;
                w[a] = n as usize;
                if self.is_occupied(w) && (p[a] - c[a]) * dir as f64 > 0.0 {
                    return true;
                }
            }
        }
        false
    }

    /// Whether the tool tip at `p` is in contact.
    pub fn in_contact(&self, p: Vec3) -> bool {
        match self.voxel_of(p) {
            Some(v) if self.is_occupied(v) => true,
            Some(v) => self.free_boundary_side(v, p),
            None => false,
        }
    }
}

#[inline]
fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
fn better(d2: f64, v: [usize; 3], best: &Option<(f64, [usize; 3])>) -> bool {
    match best {
        None => true,
        Some((bd, bv)) => d2 < *bd || (d2 == *bd && v < *bv),
    }
}

/// Exhaustive argmin over all free voxel centres (test oracle).
pub fn nearest_free_center_brute(grid: &VoxelGrid, p: Vec3) -> Result<([usize; 3], Vec3)> {
    let mut best = None;
    let [nx, ny, nz] = grid.dims;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = [i, j, k];
                if grid.is_occupied(v) {
                    continue;
                }
                let d2 = dist2(grid.center(v), p);
                if better(d2, v, &best) {
                    best = Some((d2, v));
                }
            }
        }
    }
    best.map(|(_, v)| (v, grid.center(v))).ok_or(Error::EmptyAdmissibleSet)
}

/// Nearest free voxel centre, ties broken by the lexicographically smallest
/// `(i, j, k)`.
///
/// Searches Chebyshev shells around the voxel nearest to `p`.  Every centre
/// in shell `r` is at least `r·h − ‖p − c₀‖_∞` from `p`, so the search stops
/// once that bound exceeds the best distance found.
pub fn nearest_free_center(grid: &VoxelGrid, p: Vec3) -> Result<([usize; 3], Vec3)> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(invalid("p_end", "must be finite"));
    }
    let h = grid.spacing;
    let c0 = grid.clamped_voxel(p);
    let cc = grid.center(c0);
    let off = (0..3).map(|a| (p[a] - cc[a]).abs()).fold(0.0, f64::max);
    let max_r = grid.dims.iter().copied().max().unwrap_or(0);
    let mut best: Option<(f64, [usize; 3])> = None;

    for r in 0..=max_r {
        if let Some((bd, _)) = best {
            let lb = r as f64 * h - off;
            if lb > 0.0 && lb * lb > bd {
                break;
            }
        }
        let ri = r as isize;
        let lo = |a: usize| (c0[a] as isize - ri).max(0) as usize;
        let hi = |a: usize| ((c0[a] as isize + ri) as usize).min(grid.dims[a] - 1);
        for i in lo(0)..=hi(0) {
            let on_i = (i as isize - c0[0] as isize).abs() == ri;
            for j in lo(1)..=hi(1) {
                let on_j = on_i || (j as isize - c0[1] as isize).abs() == ri;
                if on_j {
                    for k in lo(2)..=hi(2) {
                        visit(grid, [i, j, k], p, &mut best);
                    }
                } else {
                    // only the two z-faces of this column are on the shell
                    for k in [c0[2] as isize - ri, c0[2] as isize + ri] {
                        if k >= 0 && (k as usize) < grid.dims[2] && (r > 0 || k == c0[2] as isize) {
                            visit(grid, [i, j, k as usize], p, &mut best);
                        }
                        if r == 0 {
                            break;
                        }
                    }
                }
            }
        }
    }
    best.map(|(_, v)| (v, grid.center(v))).ok_or(Error::EmptyAdmissibleSet)
}

#[inline]
fn visit(grid: &VoxelGrid, v: [usize; 3], p: Vec3, best: &mut Option<(f64, [usize; 3])>) {
    if grid.is_occupied(v) {
        return;
    }
    let d2 = dist2(grid.center(v), p);
    if better(d2, v, best) {
        *best = Some((d2, v));
    }
}

/// The proxy for a tool tip at `p_end`: itself in free space, the nearest
/// free voxel centre in contact.
pub fn nearest_surface_point(grid: &VoxelGrid, p_end: Vec3) -> Result<Vec3> {
    if p_end.iter().any(|x| !x.is_finite()) {
        return Err(invalid("p_end", "must be finite"));
    }
    if grid.in_contact(p_end) {
        Ok(nearest_free_center(grid, p_end)?.1)
    } else {
        Ok(p_end)
    }
}

/// Coupling spring, damper and tool inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    pub k: f64,
    pub b: f64,
    pub tool_mass: f64,
    pub dt: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { k: 1.0e3, b: 2.0, tool_mass: 0.05, dt: 1.0e-3 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(invalid("k", "must be positive"));
        }
        if !(self.b >= 0.0) {
            return Err(invalid("b", "must be non-negative"));
        }
        if !(self.tool_mass > 0.0) {
            return Err(invalid("tool_mass", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(())
    }
}

/// `k·(p_proxy − p_end) − b·v_end`: the damper opposes motion.
pub fn contact_force(p_proxy: Vec3, p_end: Vec3, v_end: Vec3, params: &ContactParams) -> Vec3 {
    let mut f = [0.0; 3];
    for a in 0..3 {
        f[a] = params.k * (p_proxy[a] - p_end[a]) - params.b * v_end[a];
    }
    f
}

/// Total energy per tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub energy: Vec<f64>,
}

impl EnergyTrace {
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.energy.windows(2).map(|w| w[1] - w[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassivityVerdict {
    pub passive: bool,
    /// Largest single-step energy increase (negative if energy only fell).
    pub max_increment: f64,
}

/// Passive iff no step increases the energy by more than `tolerance` J.
pub fn passivity_check(trace: &EnergyTrace, tolerance: f64) -> PassivityVerdict {
    let max_increment = trace.increments().fold(f64::NEG_INFINITY, f64::max);
    let max_increment = if max_increment.is_finite() { max_increment } else { 0.0 };
    PassivityVerdict { passive: max_increment <= tolerance, max_increment }
}

/// A free-flight-and-contact run.
#[derive(Debug, Clone, PartialEq)]
pub struct BounceRun {
    pub trace: EnergyTrace,
    pub positions: Vec<Vec3>,
    pub contact_ticks: usize,
    /// Number of free → contact transitions.
    pub impacts: usize,
    /// Indices `t` of energy increments `E_{t+1} − E_t` across which the
    /// tool entered contact.  Such a step lands at some depth `d` past the
    /// onset plane and adds `½k·d²` that no force has yet acted against.
    pub onset_steps: Vec<usize>,
}

/// `½k‖p_proxy − p_end‖² + ½m‖v‖²`
pub fn contact_energy(p_proxy: Vec3, p_end: Vec3, v: Vec3, params: &ContactParams) -> f64 {
    0.5 * params.k * dist2(p_proxy, p_end) + 0.5 * params.tool_mass * dist2(v, [0.0; 3])
}

/// Launch a tool from `p0` with velocity `v0` and integrate with symplectic
/// (semi-implicit) Euler: velocity first from the force at the current
/// position, then position from the new velocity.  The proxy is refreshed once
/// per tick.  No other forces act, so the energy can only change through the
/// contact coupling and its discretisation.
pub fn simulate_bounce(grid: &VoxelGrid, params: &ContactParams, p0: Vec3, v0: Vec3, duration: f64) -> Result<BounceRun> {
    params.validate()?;
    let steps = libm::round(duration / params.dt) as usize;
    let (mut p, mut v) = (p0, v0);
    let mut trace = EnergyTrace { energy: Vec::with_capacity(steps + 1) };
    let mut positions = Vec::with_capacity(steps + 1);
    let (mut contact_ticks, mut impacts, mut was_in) = (0, 0, false);
    let mut onset_steps = Vec::new();
    for step in 0..=steps {
        let inside = grid.in_contact(p);
        let proxy = if inside { nearest_free_center(grid, p)?.1 } else { p };
        trace.energy.push(contact_energy(proxy, p, v, params));
        positions.push(p);
        if inside && !was_in && step > 0 {
            onset_steps.push(step - 1);
        }
        if step == steps {
            break;
        }
        if inside {
            contact_ticks += 1;
            if !was_in {
                impacts += 1;
            }
        }
        was_in = inside;
        let f = if inside { contact_force(proxy, p, v, params) } else { [0.0; 3] };
        for a in 0..3 {
            v[a] += params.dt * f[a] / params.tool_mass;
            p[a] += params.dt * v[a];
        }
        if p.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
    }
    Ok(BounceRun { trace, positions, contact_ticks, impacts, onset_steps })
}

//! Verifier suites behind `fem-check` and `contact-check`.

use haptolab_core::contact::{passivity_check, simulate_bounce, PassivityVerdict, Vec3, VoxelGrid};
use haptolab_core::fem::{assemble_stiffness, bar_tip_deflection, solve_displacement, symmetry_defect, Mesh};
use nalgebra::DVector;

use crate::config::{ContactSection, FemSection};
use crate::error::{Error, Result};
use crate::formats::MeshCase;

/// Energy-increment tolerance of the passivity verdict, J.
pub const PASSIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactCheck {
    pub impacts: usize,
    /// Configured stiffness and damping at the configured rate.
    pub damped: PassivityVerdict,
    /// Same launch with b = 0 at 100 Hz, expected to inject energy.
    pub undamped_slow: PassivityVerdict,
    pub initial_energy: f64,
    pub final_energy: f64,
}

/// Slab phantom and a launch that starts `drop_height` above the contact
/// onset plane (the centre of the first free voxel over the slab).
pub fn slab_scenario(c: &ContactSection) -> Result<(VoxelGrid, Vec3, Vec3)> {
    let grid = VoxelGrid::slab([0.0; 3], c.voxel, c.dims, c.surface)?;
    let (i, j) = (c.dims[0] / 2, c.dims[1] / 2);
    let k = (0..c.dims[2])
        .find(|&k| !grid.is_occupied([i, j, k]))
        .ok_or_else(|| Error::Invalid("the slab fills the whole grid".into()))?;
    let onset = grid.center([i, j, k]);
    Ok((grid, [onset[0], onset[1], onset[2] + c.drop_height], [0.0, 0.0, -c.drop_speed]))
}

pub fn contact_check(c: &ContactSection) -> Result<ContactCheck> {
    let (grid, p0, v0) = slab_scenario(c)?;
    let run = simulate_bounce(&grid, &c.params(), p0, v0, c.duration)?;
    let slow = ContactSection { b: 0.0, dt: 1e-2, ..c.clone() };
    let run_slow = simulate_bounce(&grid, &slow.params(), p0, v0, c.duration)?;
    let e = &run.trace.energy;
    Ok(ContactCheck {
        impacts: run.impacts,
        damped: passivity_check(&run.trace, PASSIVITY_TOL),
        undamped_slow: passivity_check(&run_slow.trace, PASSIVITY_TOL),
        initial_energy: e.first().copied().unwrap_or(0.0),
        final_energy: e.last().copied().unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemCheck {
    /// Per mesh: (label, dofs, symmetry defect).
    pub meshes: Vec<(String, usize, f64)>,
    pub bar_tip: f64,
    pub bar_tip_expected: f64,
}

impl FemCheck {
    pub fn max_symmetry_defect(&self) -> f64 {
        self.meshes.iter().map(|m| m.2).fold(0.0, f64::max)
    }

    pub fn bar_relative_error(&self) -> f64 {
        ((self.bar_tip - self.bar_tip_expected) / self.bar_tip_expected).abs()
    }
}

/// A bar chain along x clamped at node 0 and held transversely, pulled at
/// the tip.
pub fn bar_case(length: f64, n: usize, area: f64, load: f64) -> MeshCase {
    let mesh = Mesh::bar_chain(length, n, area);
    let mut fixed = vec![0];
    fixed.extend((0..=n).map(|i| 2 * i + 1));
    let mut loads = DVector::zeros(mesh.n_dofs());
    loads[2 * n] = load;
    MeshCase { mesh, fixed, loads }
}

/// Tip deflection of a bar chain against `FL/(EA)` and the symmetry of a
/// family of bar and plate meshes.
pub fn fem_check(f: &FemSection) -> Result<FemCheck> {
    let material = f.material();
    let case = bar_case(f.bar_length, f.bar_elements, f.bar_area, f.load);
    let k = assemble_stiffness(&case.mesh, &material)?;
    let u = solve_displacement(&k, &case.loads, &case.fixed)?;
    let mut meshes = vec![(format!("bar x{}", f.bar_elements), case.mesh.n_dofs(), symmetry_defect(&k))];
    for (nx, ny) in [(1, 1), (2, 2), (4, 3), (8, 8), (16, 5)] {
        let mesh = Mesh::rect_plate(1.0, 0.5, nx, ny, 0.01);
        let k = assemble_stiffness(&mesh, &material)?;
        meshes.push((format!("plate {nx}x{ny}"), mesh.n_dofs(), symmetry_defect(&k)));
    }
    Ok(FemCheck {
        meshes,
        bar_tip: u[2 * f.bar_elements],
        bar_tip_expected: bar_tip_deflection(f.load, f.bar_length, f.young, f.bar_area),
    })
}

//! P1 finite elements for `−Δu + u = 0` on an [`AnnularMesh`], with
//! Dirichlet data on ∂ω and Neumann data on ∂Ω.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fourier::BoundaryField;
use crate::linalg::{conjugate_gradient, CgSettings, CsrMatrix};
use crate::meshing::AnnularMesh;

/// Scalar P1 function on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    mesh: Arc<AnnularMesh>,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: Arc<AnnularMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::InvalidField(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite nodal value".into()));
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<AnnularMesh>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        Self::new(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<AnnularMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How the normal flux on ∂ω is recovered from a discrete solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxRecovery {
    /// Residual moments against the boundary hat functions, inverted with
    /// the boundary mass matrix.
    #[default]
    Variational,
    /// Area-weighted average of the adjacent element gradients.
    Direct,
}

// 3-point Gauss rule on [0, 1]
const GAUSS_NODES: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Assembled operator for one mesh; reused across every solve on it.
#[derive(Debug, Clone)]
pub struct FemSystem {
    mesh: Arc<AnnularMesh>,
    /// Stiffness plus mass on all nodes.
    operator: CsrMatrix,
    mass: CsrMatrix,
    /// Operator restricted to the nodes off ∂ω.
    reduced: CsrMatrix,
    inner_mass: CsrMatrix,
    settings: CgSettings,
}

impl FemSystem {
    pub fn new(mesh: Arc<AnnularMesh>) -> Self {
        Self::with_settings(mesh, CgSettings::default())
    }

    pub fn with_settings(mesh: Arc<AnnularMesh>, settings: CgSettings) -> Self {
        let n = mesh.node_count();
        let mut op = Vec::with_capacity(9 * mesh.triangles().len());
        let mut mass = Vec::with_capacity(9 * mesh.triangles().len());
        for tri in mesh.triangles() {
            let p = tri.map(|i| mesh.nodes()[i]);
            let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * area2;
            // gradients of the barycentric coordinates
            let grads: [[f64; 2]; 3] = std::array::from_fn(|k| {
                let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2]
            });
            for a in 0..3 {
                for b in 0..3 {
                    let k = area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                    let m = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                    op.push((tri[a], tri[b], k + m));
                    mass.push((tri[a], tri[b], m));
                }
            }
        }
        let operator = CsrMatrix::from_triplets(n, &op);
        let mass = CsrMatrix::from_triplets(n, &mass);
        let n_ang = mesh.n_angular();
        let free: Vec<usize> = (n_ang..n).collect();
        let (reduced, _) = operator.principal_submatrix(&free);

        let inner = mesh.inner_boundary();
        let mut bm = Vec::with_capacity(4 * n_ang);
        for j in 0..n_ang {
            let (a, b) = (j, (j + 1) % n_ang);
            let (pa, pb) = (mesh.nodes()[inner[a]], mesh.nodes()[inner[b]]);
            let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            bm.push((a, a, len / 3.0));
            bm.push((b, b, len / 3.0));
            bm.push((a, b, len / 6.0));
            bm.push((b, a, len / 6.0));
        }
        Self {
            inner_mass: CsrMatrix::from_triplets(n_ang, &bm),
            mesh,
            operator,
            mass,
            reduced,
            settings,
        }
    }

    pub fn mesh(&self) -> &Arc<AnnularMesh> {
        &self.mesh
    }

    pub fn operator(&self) -> &CsrMatrix {
        &self.operator
    }

    /// `∫_{∂Ω} g φ_i` for every node, by 3-point Gauss on each outer edge.
    pub fn neumann_load(&self, g: &BoundaryField) -> Vec<f64> {
        let mesh = &*self.mesh;
        let mut load = vec![0.0; mesh.node_count()];
        let outer = mesh.outer_boundary();
        let n = outer.len();
        for j in 0..n {
            let (a, b) = (outer[j], outer[(j + 1) % n]);
            let (pa, pb) = (mesh.nodes()[a], mesh.nodes()[b]);
            let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            for (s, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let x = pa[0] + s * (pb[0] - pa[0]);
                let y = pa[1] + s * (pb[1] - pa[1]);
                let gv = g.eval(y.atan2(x)) * w * len;
                load[a] += (1.0 - s) * gv;
                load[b] += s * gv;
            }
        }
        load
    }

    /// Galerkin solution with Neumann datum `g_n` on ∂Ω and the nodal
    /// interpolant of `inner` as Dirichlet datum on ∂ω.
    pub fn solve(&self, g_n: &BoundaryField, inner: &BoundaryField) -> Result<NodalField> {
        let mesh = &self.mesh;
        let n_ang = mesh.n_angular();
        let dirichlet = inner.values_on_grid(n_ang, mesh.phase());
        let load = self.neumann_load(g_n);
        let mut rhs: Vec<f64> = load[n_ang..].to_vec();
        if dirichlet.iter().any(|&v| v != 0.0) {
            for (r, i) in rhs.iter_mut().zip(n_ang..) {
                for (j, v) in self.operator.row(i) {
                    if j < n_ang {
                        *r -= v * dirichlet[j];
                    }
                }
            }
        }
        let mut x = vec![0.0; rhs.len()];
        conjugate_gradient(&self.reduced, &rhs, &mut x, self.settings)?;
        let mut values = dirichlet;
        values.extend(x);
        NodalField::new(Arc::clone(mesh), values)
    }

    /// Values at the outer nodes as a field on the mesh's angular grid.
    pub fn outer_trace(&self, u: &NodalField) -> Result<BoundaryField> {
        outer_trace(u)
    }

    /// Normal derivative ∂_ν u on ∂ω, ν pointing out of the obstacle.
    ///
    /// `g_n` must be the Neumann datum `u` was solved with.
    pub fn inner_flux(&self, u: &NodalField, g_n: &BoundaryField) -> Result<BoundaryField> {
        self.inner_flux_with(u, g_n, FluxRecovery::Variational)
    }

    pub fn inner_flux_with(
        &self,
        u: &NodalField,
        g_n: &BoundaryField,
        method: FluxRecovery,
    ) -> Result<BoundaryField> {
        let flux = match method {
            FluxRecovery::Variational => self.variational_flux(u, g_n)?,
            FluxRecovery::Direct => self.direct_flux(u),
        };
        BoundaryField::from_shifted_samples(flux, self.mesh.phase())
    }

    fn variational_flux(&self, u: &NodalField, g_n: &BoundaryField) -> Result<Vec<f64>> {
        let n_ang = self.mesh.n_angular();
        let load = self.neumann_load(g_n);
        // residual moments give ∫_{∂ω} ∂_{n_A} u φ_i with n_A the outward
        // normal of the annulus, i.e. −∂_ν u
        let moments: Vec<f64> = (0..n_ang)
            .map(|i| {
                self.operator
                    .row(i)
                    .map(|(j, v)| v * u.values()[j])
                    .sum::<f64>()
                    - load[i]
            })
            .collect();
        let mut q = vec![0.0; n_ang];
        conjugate_gradient(
            &self.inner_mass,
            &moments,
            &mut q,
            CgSettings {
                rel_tol: 1e-14,
                max_iters: Some(10 * n_ang),
            },
        )?;
        Ok(q.into_iter().map(|v| -v).collect())
    }

    fn direct_flux(&self, u: &NodalField) -> Vec<f64> {
        let mesh = &*self.mesh;
        let n_ang = mesh.n_angular();
        let mut grad = vec![[0.0; 2]; n_ang];
        let mut weight = vec![0.0; n_ang];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let g = element_gradient(mesh, tri, u.values());
            let area = mesh.triangle_area(t);
            for &i in tri {
                if i < n_ang {
                    grad[i][0] += area * g[0];
                    grad[i][1] += area * g[1];
                    weight[i] += area;
                }
            }
        }
        let nodes = mesh.nodes();
        (0..n_ang)
            .map(|j| {
                // polygon normal at the node, pointing into the annulus
                let prev = nodes[(j + n_ang - 1) % n_ang];
                let next = nodes[(j + 1) % n_ang];
                let (tx, ty) = (next[0] - prev[0], next[1] - prev[1]);
                let len = tx.hypot(ty);
                let nu = [ty / len, -tx / len];
                (grad[j][0] * nu[0] + grad[j][1] * nu[1]) / weight[j]
            })
            .collect()
    }

    /// `∫ (|∇u|² + u²)`.
    pub fn energy(&self, u: &NodalField) -> f64 {
        quadratic_form(&self.operator, u.values())
    }

    pub fn l2_norm(&self, u: &NodalField) -> f64 {
        quadratic_form(&self.mass, u.values()).sqrt()
    }

    pub fn h1_norm(&self, u: &NodalField) -> f64 {
        self.energy(u).sqrt()
    }

    /// `∫_{∂ω} a b` for nodal values on the inner polygon, with the
    /// consistent P1 mass matrix.
    pub fn inner_pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut mb = vec![0.0; b.len()];
        self.inner_mass.mul_vec(b, &mut mb);
        a.iter().zip(&mb).map(|(x, y)| x * y).sum()
    }

    /// `∫_{∂Ω} g u`.
    pub fn boundary_pairing(&self, g: &BoundaryField, u: &NodalField) -> f64 {
        self.neumann_load(g)
            .iter()
            .zip(u.values())
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn quadratic_form(a: &CsrMatrix, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    a.mul_vec(x, &mut ax);
    ax.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn element_gradient(mesh: &AnnularMesh, tri: &[usize; 3], values: &[f64]) -> [f64; 2] {
    let p = tri.map(|i| mesh.nodes()[i]);
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [0.0; 2];
    for k in 0..3 {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        g[0] += values[tri[k]] * (a[1] - b[1]) / area2;
        g[1] += values[tri[k]] * (b[0] - a[0]) / area2;
    }
    g
}

/// Solves the state problem on a fresh mesh assembly.
pub fn solve_state(
    mesh: Arc<AnnularMesh>,
    g_n: &BoundaryField,
    inner_dirichlet: &BoundaryField,
) -> Result<NodalField> {
    FemSystem::new(mesh).solve(g_n, inner_dirichlet)
}

/// Outer-boundary values reindexed to the uniform angular grid.
pub fn outer_trace(u: &NodalField) -> Result<BoundaryField> {
    let mesh = u.mesh();
    let values = mesh.outer_boundary().iter().map(|&i| u.values()[i]).collect();
    BoundaryField::from_shifted_samples(values, mesh.phase())
}

/// Variationally recovered ∂_ν u on ∂ω for a field solved with `g_n`.
pub fn inner_flux(u: &NodalField, g_n: &BoundaryField) -> Result<BoundaryField> {
    FemSystem::new(Arc::clone(u.mesh())).inner_flux(u, g_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{HoldAll, RadialShape};
    use crate::meshing::build_mesh;

    fn annulus(n_radial: usize, n_angular: usize) -> Arc<AnnularMesh> {
        let shape = RadialShape::circle(0.5).unwrap();
        Arc::new(build_mesh(&shape, &HoldAll::default(), n_radial, n_angular).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let sys = FemSystem::new(annulus(4, 16));
        let zero = BoundaryField::zeros(16).unwrap();
        let u = sys.solve(&zero, &zero).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(sys.inner_flux(&u, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn operator_is_symmetric() {
        let sys = FemSystem::new(annulus(6, 32));
        assert!(sys.operator().symmetry_defect() < 1e-14);
    }

    #[test]
    fn solution_is_linear_in_data() {
        let sys = FemSystem::new(annulus(8, 32));
        let g = BoundaryField::from_fn(32, |t| 1.0 + 0.3 * t.cos()).unwrap();
        let zero = BoundaryField::zeros(32).unwrap();
        let u = sys.solve(&g, &zero).unwrap();
        let v = sys.solve(&g.scaled(2.5), &zero).unwrap();
        let scale = u.max_abs();
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((2.5 * a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn trace_of_constant_and_coordinate_fields() {
        let mesh = annulus(4, 32);
        let c = NodalField::interpolate(Arc::clone(&mesh), |_| 0.7).unwrap();
        let t = outer_trace(&c).unwrap();
        assert!(t.samples().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let x = NodalField::interpolate(Arc::clone(&mesh), |p| p[0]).unwrap();
        let t = outer_trace(&x).unwrap();
        for (j, v) in t.samples().iter().enumerate() {
            assert!((v - t.angle(j).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn energy_identity() {
        let sys = FemSystem::new(annulus(8, 32));
        let g = BoundaryField::from_fn(32, |t| 1.0 + 0.5 * (2.0 * t).sin()).unwrap();
        let u = sys.solve(&g, &BoundaryField::zeros(32).unwrap()).unwrap();
        let lhs = sys.energy(&u);
        let rhs = sys.boundary_pairing(&g, &u);
        assert!(((lhs - rhs) / rhs).abs() < 1e-8);
    }

    #[test]
    fn nonnegative_data_gives_nonnegative_solution() {
        let sys = FemSystem::new(annulus(8, 64));
        let g = BoundaryField::constant(64, 1.0).unwrap();
        let u = sys.solve(&g, &BoundaryField::zeros(64).unwrap()).unwrap();
        assert!(u.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn recoveries_agree_to_first_order() {
        let sys = FemSystem::new(annulus(16, 64));
        let g = BoundaryField::constant(64, 1.0).unwrap();
        let u = sys.solve(&g, &BoundaryField::zeros(64).unwrap()).unwrap();
        let var = sys.inner_flux(&u, &g).unwrap();
        let dir = sys.inner_flux_with(&u, &g, FluxRecovery::Direct).unwrap();
        let scale = var.max_abs();
        for (a, b) in var.samples().iter().zip(dir.samples()) {
            assert!(a > &0.0);
            assert!((a - b).abs() < 0.1 * scale);
        }
    }
}

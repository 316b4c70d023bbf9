//! Piecewise bilinear finite element functions on a [`QuadMesh`].

use std::fmt::Write as _;

use crate::element::shape;
use crate::error::MeshError;
use crate::mesh::{NodeKind, QuadMesh};
use crate::scalar::Real;

/// Values at the conforming nodes of a mesh, node-major with `components`
/// entries per node. Hanging values are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField<T> {
    mesh_id: u64,
    components: usize,
    values: Vec<T>,
}

impl<T: Real> NodalField<T> {
    pub fn zeros(mesh: &QuadMesh, components: usize) -> Self {
        Self::constant(mesh, components, T::zero())
    }

    pub fn constant(mesh: &QuadMesh, components: usize, value: T) -> Self {
        Self { mesh_id: mesh.id(), components, values: vec![value; mesh.num_dofs() * components] }
    }

    /// Wraps raw node-major values.
    pub fn from_values(mesh: &QuadMesh, components: usize, values: Vec<T>) -> Result<Self, MeshError> {
        if values.len() != mesh.num_dofs() * components {
            return Err(MeshError::FieldMismatch { field: 0, mesh: mesh.id() });
        }
        Ok(Self { mesh_id: mesh.id(), components, values })
    }

    /// Nodal interpolant of a scalar function.
    pub fn from_fn(mesh: &QuadMesh, f: impl Fn(f64, f64) -> T) -> Self {
        let values = (0..mesh.num_dofs())
            .map(|d| {
                let (x, y) = mesh.dof_position(d);
                f(x, y)
            })
            .collect();
        Self { mesh_id: mesh.id(), components: 1, values }
    }

    /// Nodal interpolant of a 2-vector function.
    pub fn from_vector_fn(mesh: &QuadMesh, f: impl Fn(f64, f64) -> [T; 2]) -> Self {
        let mut values = Vec::with_capacity(2 * mesh.num_dofs());
        for d in 0..mesh.num_dofs() {
            let (x, y) = mesh.dof_position(d);
            values.extend(f(x, y));
        }
        Self { mesh_id: mesh.id(), components: 2, values }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, dof: usize, comp: usize) -> T {
        self.values[dof * self.components + comp]
    }

    #[inline]
    pub fn set(&mut self, dof: usize, comp: usize, v: T) {
        self.values[dof * self.components + comp] = v;
    }

    pub fn check_mesh(&self, mesh: &QuadMesh) -> Result<(), MeshError> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_dofs() * self.components {
            return Err(MeshError::FieldMismatch { field: self.mesh_id, mesh: mesh.id() });
        }
        Ok(())
    }

    /// Value at a constrained vertex.
    #[inline]
    pub fn at(&self, kind: NodeKind, comp: usize) -> T {
        match kind {
            NodeKind::Conforming { dof } => self.get(dof, comp),
            NodeKind::Hanging { parents: [p, q] } => T::lit(0.5) * (self.get(p, comp) + self.get(q, comp)),
        }
    }

    pub fn node_value(&self, mesh: &QuadMesh, node: usize, comp: usize) -> T {
        self.at(mesh.nodes()[node].kind, comp)
    }

    /// The four vertex values of a cell.
    pub fn cell_values(&self, mesh: &QuadMesh, cell: usize, comp: usize) -> [T; 4] {
        mesh.cell_constraints(cell).map(|k| self.at(k, comp))
    }

    /// Evaluates the bilinear function at `(x, y)`.
    pub fn evaluate(&self, mesh: &QuadMesh, x: f64, y: f64, comp: usize) -> Option<T> {
        let c = mesh.locate(x, y)?;
        let (x0, y0, x1, y1) = mesh.cell_bounds(c);
        let n = shape((x - x0) / (x1 - x0), (y - y0) / (y1 - y0));
        let v = self.cell_values(mesh, c, comp);
        Some((0..4).fold(T::zero(), |acc, a| acc + T::lit(n[a]) * v[a]))
    }

    /// Maps `f` over the stored nodal values (the nodal interpolant of `f ∘ self`).
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { mesh_id: self.mesh_id, components: self.components, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn min_max(&self) -> (T, T) {
        self.values.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Phase-field dump: mesh dump followed by one `node_index value` line per conforming node.
    pub fn dump(&self, mesh: &QuadMesh) -> String {
        let mut s = mesh.dump();
        for d in 0..mesh.num_dofs() {
            write!(s, "{}", mesh.dof_node(d)).unwrap();
            for c in 0..self.components {
                write!(s, " {}", self.get(d, c)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`NodalField::dump`]: returns the stored mesh and the scalar field.
    pub fn parse_dump(text: &str) -> Result<(QuadMesh, NodalField<T>), MeshError> {
        let (mesh, consumed) = QuadMesh::parse_dump(text)?;
        let mut values = vec![T::nan(); mesh.num_dofs()];
        let mut seen = 0usize;
        for (ln, line) in text.lines().enumerate().skip(consumed) {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            let err = |msg: &str| MeshError::Parse { line: ln + 1, msg: msg.into() };
            if t.len() != 2 {
                return Err(err("expected `node_index value`"));
            }
            let node: usize = t[0].parse().map_err(|_| err("bad node index"))?;
            let v: T = t[1].parse().map_err(|_| err("bad value"))?;
            match mesh.nodes().get(node).map(|n| n.kind) {
                Some(NodeKind::Conforming { dof }) => {
                    if values[dof].is_nan() {
                        seen += 1;
                    }
                    values[dof] = v;
                }
                _ => return Err(err("index is not a conforming node")),
            }
        }
        if seen != mesh.num_dofs() {
            return Err(MeshError::Parse { line: consumed + 1, msg: "missing nodal values".into() });
        }
        let field = NodalField { mesh_id: mesh.id(), components: 1, values };
        Ok((mesh, field))
    }
}

/// Interpolates `field` from `old` onto `new`, which must be a refinement of `old`.
pub fn prolongate<T: Real>(field: &NodalField<T>, old: &QuadMesh, new: &QuadMesh) -> Result<NodalField<T>, MeshError> {
    field.check_mesh(old)?;
    if old.id() == new.id() {
        return Ok(field.clone());
    }
    if !old.is_refined_by(new) {
        return Err(MeshError::NotNested(format!("mesh {} is not a refinement of mesh {}", new.id(), old.id())));
    }
    project(field, old, new)
}

/// Evaluates `field` at the conforming nodes of `target` (no nesting requirement).
pub fn project<T: Real>(field: &NodalField<T>, source: &QuadMesh, target: &QuadMesh) -> Result<NodalField<T>, MeshError> {
    field.check_mesh(source)?;
    let k = field.components();
    let mut values = Vec::with_capacity(target.num_dofs() * k);
    for d in 0..target.num_dofs() {
        let n = target.dof_node(d);
        let node = target.nodes()[n];
        // exact lookup when the vertex already exists on the source mesh
        if let Some(sn) = source.node_index(node.ix, node.iy).filter(|_| source.domain() == target.domain()) {
            for c in 0..k {
                values.push(field.node_value(source, sn, c));
            }
            continue;
        }
        let (x, y) = target.node_position(n);
        for c in 0..k {
            let v = field
                .evaluate(source, x, y, c)
                .ok_or_else(|| MeshError::NotNested(format!("node ({x}, {y}) outside the source mesh")))?;
            values.push(v);
        }
    }
    Ok(NodalField { mesh_id: target.id(), components: k, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;

    fn mesh() -> QuadMesh {
        QuadMesh::uniform(Domain::unit(), 2, 6, &[]).unwrap()
    }

    #[test]
    fn hanging_values_are_parent_averages() {
        let m = mesh().refine_cells(&[5, 6]).unwrap();
        let f = NodalField::<f64>::from_fn(&m, |x, y| (3.0 * x).sin() + y * y);
        for n in 0..m.num_nodes() {
            if let NodeKind::Hanging { parents: [p, q] } = m.nodes()[n].kind {
                assert_eq!(f.node_value(&m, n, 0), 0.5 * (f.get(p, 0) + f.get(q, 0)));
            }
        }
    }

    #[test]
    fn bilinear_inside_cell() {
        let m = mesh();
        let f = NodalField::<f64>::from_fn(&m, |x, y| x * y + 2.0 * x - y);
        let v = f.evaluate(&m, 0.3, 0.7, 0).unwrap();
        assert!((v - (0.3 * 0.7 + 0.6 - 0.7)).abs() < 1e-14);
    }

    #[test]
    fn prolongation_reproduces_bilinear_and_constant() {
        let m = mesh();
        let r = m.refine_cells(&[0, 3, 9]).unwrap();
        let c = NodalField::<f64>::constant(&m, 1, 0.37);
        assert!(prolongate(&c, &m, &r).unwrap().values().iter().all(|&v| v == 0.37));
        let f = NodalField::<f64>::from_fn(&m, |x, y| x * y);
        let p = prolongate(&f, &m, &r).unwrap();
        for d in 0..r.num_dofs() {
            let (x, y) = r.dof_position(d);
            assert!((p.get(d, 0) - x * y).abs() < 1e-15);
        }
    }

    #[test]
    fn prolongation_rejects_unrelated_meshes() {
        let a = mesh().refine_cells(&[0]).unwrap();
        let b = mesh().refine_cells(&[15]).unwrap();
        let f = NodalField::<f64>::zeros(&a, 1);
        assert!(matches!(prolongate(&f, &a, &b), Err(MeshError::NotNested(_))));
        let g = NodalField::<f64>::zeros(&b, 1);
        assert!(matches!(prolongate(&g, &a, &b), Err(MeshError::FieldMismatch { .. })));
    }
}

//! Piecewise-linear maps from the meshed disc into a Kähler model.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kahler::{AmbientPoint, KahlerModel};
use crate::linalg::{CVec, C64};
use crate::mesh::DiscMesh;

#[derive(Debug, Clone)]
pub struct MapField {
    pub mesh: Arc<DiscMesh>,
    pub model: KahlerModel,
    /// Node-major coordinates, `dim` complex numbers per node.
    pub values: Vec<C64>,
}

impl MapField {
    pub fn new(mesh: Arc<DiscMesh>, model: KahlerModel, values: Vec<C64>) -> Result<Self> {
        let dim = model.ambient_dim();
        if values.len() != dim * mesh.num_nodes() {
            return Err(Error::Domain(format!(
                "field has {} coordinates, expected {} nodes × {dim}",
                values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(MapField { mesh, model, values })
    }

    /// Samples `f` at every node; projective values are normalized but keep
    /// their phase.
    pub fn from_fn<F: Fn([f64; 2]) -> CVec>(mesh: Arc<DiscMesh>, model: KahlerModel, f: F) -> Result<Self> {
        let dim = model.ambient_dim();
        let mut values = Vec::with_capacity(dim * mesh.num_nodes());
        for x in &mesh.nodes {
            let v = f(*x);
            if v.len() != dim {
                return Err(Error::Domain("sample has the wrong dimension".into()));
            }
            values.extend(normalized(&model, v).iter());
        }
        MapField::new(mesh, model, values)
    }

    pub fn constant(mesh: Arc<DiscMesh>, model: KahlerModel, p: &AmbientPoint) -> Result<Self> {
        let values = (0..mesh.num_nodes()).flat_map(|_| p.0.iter().copied()).collect();
        MapField::new(mesh, model, values)
    }

    pub fn dim(&self) -> usize {
        self.model.ambient_dim()
    }

    pub fn node(&self, i: usize) -> &[C64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn node_vec(&self, i: usize) -> CVec {
        CVec::from_column_slice(self.node(i))
    }

    pub fn point(&self, i: usize) -> AmbientPoint {
        AmbientPoint(self.node_vec(i))
    }

    pub fn set_node(&mut self, i: usize, v: &CVec) {
        let d = self.dim();
        self.values[i * d..(i + 1) * d].copy_from_slice(v.as_slice());
    }

    /// Value at a point given by barycentric coordinates in triangle `t`
    /// (phase-aligned interpolation, normalized for projective models).
    pub fn eval_barycentric(&self, t: usize, b: &[f64; 3]) -> CVec {
        let tri = self.mesh.triangles[t];
        let base = self.node_vec(tri[0]);
        let mut v = CVec::zeros(self.dim());
        for i in 0..3 {
            let p = self.node_vec(tri[i]);
            let p = if self.model.is_projective() { crate::linalg::align_phase(&base, &p) } else { p };
            v += p * C64::new(b[i], 0.0);
        }
        normalized(&self.model, v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header = vec!["id".to_string()];
        for j in 0..d {
            header.push(format!("re{j}"));
            header.push(format!("im{j}"));
        }
        wr.write_record(&header)?;
        for i in 0..self.mesh.num_nodes() {
            let mut row = vec![i.to_string()];
            for z in self.node(i) {
                row.push(format!("{:.17e}", z.re));
                row.push(format!("{:.17e}", z.im));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mesh: Arc<DiscMesh>, model: KahlerModel, r: R) -> Result<Self> {
        let d = model.ambient_dim();
        let mut values = vec![C64::new(f64::NAN, 0.0); d * mesh.num_nodes()];
        let mut seen = vec![false; mesh.num_nodes()];
        let mut rd = csv::Reader::from_reader(r);
        for rec in rd.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Validation(format!("row has no column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Validation(format!("bad number in column {k}: {e}")))
            };
            let id: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Validation("bad node id".into()))?;
            if id >= mesh.num_nodes() {
                return Err(Error::Validation(format!("node id {id} out of range")));
            }
            for j in 0..d {
                values[id * d + j] = C64::new(parse(1 + 2 * j)?, parse(2 + 2 * j)?);
            }
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("no value for node {missing}")));
        }
        MapField::new(mesh, model, values)
    }
}

pub fn normalized(model: &KahlerModel, v: CVec) -> CVec {
    if model.is_projective() {
        let n = crate::linalg::cnorm(&v);
        v / C64::new(n, 0.0)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn csv_round_trip_is_exact() {
        let mesh = Arc::new(build_mesh(2, 0.5, 1.0).unwrap());
        let model = KahlerModel::projective(1);
        let u = MapField::from_fn(mesh.clone(), model.clone(), |x| {
            CVec::from_vec(vec![C64::new(1.0, 0.3 * x[0]), C64::new(x[1], -0.2)])
        })
        .unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let v = MapField::read_csv(mesh, model, buf.as_slice()).unwrap();
        assert_eq!(u.values, v.values);
    }

    #[test]
    fn missing_rows_are_reported() {
        let mesh = Arc::new(build_mesh(2, 0.5, 1.0).unwrap());
        let text = "id,re0,im0\n0,1.0,0.0\n";
        let err = MapField::read_csv(mesh, KahlerModel::flat(1), text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no value for node 1"));
    }
}

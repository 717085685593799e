use super::block::BlockSystem;
use super::neumann::RigidDatum;
use crate::error::Result;
use crate::linalg::dot;

/// A fluid field `v + grad g` with `v` a P2 vector field and `g` a P2 scalar.
/// Gradients of P2 scalars are not P2 vector fields, so both parts are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidField {
    pub v: Vec<f64>,
    pub g: Vec<f64>,
}

impl FluidField {
    pub fn velocity(blocks: &BlockSystem, v: Vec<f64>) -> Self {
        FluidField {
            v,
            g: vec![0.0; blocks.spaces.fluid.n_nodes()],
        }
    }

    pub fn gradient(blocks: &BlockSystem, g: Vec<f64>) -> Self {
        FluidField {
            v: vec![0.0; blocks.spaces.n_velocity()],
            g,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        FluidField {
            v: self.v.iter().zip(&o.v).map(|(a, b)| a - b).collect(),
            g: self.g.iter().zip(&o.g).map(|(a, b)| a - b).collect(),
        }
    }
}

/// L2(F) inner product of two fluid fields.
pub fn fluid_inner(blocks: &BlockSystem, a: &FluidField, b: &FluidField) -> f64 {
    let f = &blocks.forms;
    f.mass.bilinear(&a.v, &b.v)
        + dot(&a.v, &f.gradient.matvec(&b.g))
        + dot(&b.v, &f.gradient.matvec(&a.g))
        + f.scalar_stiffness.bilinear(&a.g, &b.g)
}

pub fn fluid_norm(blocks: &BlockSystem, a: &FluidField) -> f64 {
    fluid_inner(blocks, a, a).max(0.0).sqrt()
}

/// Potential of the gradient part of `f`: (grad pi, grad phi) = (f, grad phi).
pub fn gradient_potential(blocks: &BlockSystem, f: &FluidField) -> Result<Vec<f64>> {
    let forms = &blocks.forms;
    let mut load = forms.gradient.tmatvec(&f.v);
    let sg = forms.scalar_stiffness.matvec(&f.g);
    load.iter_mut().zip(&sg).for_each(|(a, b)| *a += b);
    blocks.neumann.solve(&load)
}

/// Leray projection: removes the L2-orthogonal gradient part.
pub fn leray_project(blocks: &BlockSystem, f: &FluidField) -> Result<FluidField> {
    let pi = gradient_potential(blocks, f)?;
    Ok(FluidField {
        v: f.v.clone(),
        g: f.g.iter().zip(&pi).map(|(a, b)| a - b).collect(),
    })
}

/// || grad pi_u - grad (N h' + N^ omega) || for a coupled fluid velocity `u`
/// whose interface trace is the rigid motion `datum`.
pub fn gradient_part_defect(blocks: &BlockSystem, u: &[f64], datum: RigidDatum) -> Result<f64> {
    let pi = gradient_potential(blocks, &FluidField::velocity(blocks, u.to_vec()))?;
    let a = datum.as_array();
    let d: Vec<f64> = (0..pi.len())
        .map(|i| pi[i] - (0..3).map(|k| a[k] * blocks.potentials[k][i]).sum::<f64>())
        .collect();
    Ok(blocks.forms.scalar_stiffness.bilinear(&d, &d).max(0.0).sqrt())
}

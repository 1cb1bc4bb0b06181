//! Initial data and forcing recipes: φ = (A⁰_D)⁻¹s for a smooth source s,
//! ψ smooth with zero boundary values, F(x, t) = f(x)p(t).

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::assembly::{DiscreteOperator, SobolevGrams};
use crate::domain::grid::DomainGrid;
use crate::domain::norms::{sobolev_norm, NormKind};
use crate::error::Result;
use crate::evolution::forcing::{Forcing, TimeProfile};

/// A smooth scalar shape, copied into every component with optional weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldRecipe {
    Zero,
    Constant {
        value: f64,
    },
    /// amplitude · Π_j sin(k_j π x_j / L_j); one mode is reused on every axis.
    Sine {
        modes: Vec<u32>,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// amplitude · Π_j 4x_j(L_j − x_j)/L_j².
    Bubble {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldRecipe {
    pub fn vanishes_on_boundary(&self) -> bool {
        match self {
            FieldRecipe::Zero | FieldRecipe::Bubble { .. } => true,
            FieldRecipe::Constant { value } => *value == 0.0,
            FieldRecipe::Sine { modes, .. } => !modes.is_empty() && modes.iter().all(|k| *k > 0),
        }
    }

    fn violations(&self, d: usize, what: &str) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            FieldRecipe::Sine { modes, weights, .. } => {
                if modes.len() != 1 && modes.len() != d {
                    v.push(format!("{what}: sine needs 1 or {d} modes"));
                }
                if modes.iter().any(|k| *k == 0) {
                    v.push(format!("{what}: sine modes must be positive"));
                }
                if weights.as_ref().is_some_and(|w| w.is_empty()) {
                    v.push(format!("{what}: weights must not be empty"));
                }
            }
            FieldRecipe::Bubble { weights, .. } => {
                if weights.as_ref().is_some_and(|w| w.is_empty()) {
                    v.push(format!("{what}: weights must not be empty"));
                }
            }
            _ => {}
        }
        v
    }

    fn weight(&self, c: usize) -> f64 {
        let w = match self {
            FieldRecipe::Sine { weights, .. } | FieldRecipe::Bubble { weights, .. } => weights.as_ref(),
            _ => None,
        };
        w.map_or(1.0, |w| w[c % w.len()])
    }

    pub fn value(&self, x: &[f64], lengths: &[f64]) -> f64 {
        match self {
            FieldRecipe::Zero => 0.0,
            FieldRecipe::Constant { value } => *value,
            FieldRecipe::Sine { modes, amplitude, .. } => {
                amplitude
                    * x.iter()
                        .zip(lengths)
                        .enumerate()
                        .map(|(j, (xj, l))| (modes[j.min(modes.len() - 1)] as f64 * PI * xj / l).sin())
                        .product::<f64>()
            }
            FieldRecipe::Bubble { amplitude, .. } => amplitude * x.iter().zip(lengths).map(|(xj, l)| 4.0 * xj * (l - xj) / (l * l)).product::<f64>(),
        }
    }

    /// All-node field with `nc` components.
    pub fn sample(&self, grid: &DomainGrid, nc: usize) -> DVector<f64> {
        let lengths = grid.lengths().to_vec();
        grid.sample(nc, |x| {
            let s = self.value(x, &lengths);
            (0..nc).map(|c| s * self.weight(c)).collect()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileRecipe {
    Constant { value: f64 },
    Cos { omega: f64, #[serde(default = "one")] amplitude: f64 },
    Sin { omega: f64, #[serde(default = "one")] amplitude: f64 },
}

impl ProfileRecipe {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ProfileRecipe::Constant { value } => *value,
            ProfileRecipe::Cos { omega, amplitude } => amplitude * (omega * t).cos(),
            ProfileRecipe::Sin { omega, amplitude } => amplitude * (omega * t).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub field: FieldRecipe,
    pub profile: ProfileRecipe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    /// Source s of φ = (A⁰_D)⁻¹s.
    pub phi_source: FieldRecipe,
    pub psi: FieldRecipe,
    pub forcing: Option<ForcingSpec>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            phi_source: FieldRecipe::Sine {
                modes: vec![1],
                amplitude: 10.0,
                weights: None,
            },
            psi: FieldRecipe::Sine {
                modes: vec![2],
                amplitude: 1.0,
                weights: None,
            },
            forcing: Some(ForcingSpec {
                field: FieldRecipe::Bubble {
                    amplitude: 1.0,
                    weights: None,
                },
                profile: ProfileRecipe::Cos { omega: 3.0, amplitude: 1.0 },
            }),
        }
    }
}

impl DataSpec {
    pub fn violations(&self, d: usize) -> Vec<String> {
        let mut v = self.phi_source.violations(d, "phi_source");
        v.extend(self.psi.violations(d, "psi"));
        if !self.psi.vanishes_on_boundary() {
            v.push("psi must vanish on the boundary".into());
        }
        if let Some(f) = &self.forcing {
            v.extend(f.field.violations(d, "forcing.field"));
            if !f.field.vanishes_on_boundary() {
                v.push("forcing.field must vanish on the boundary".into());
            }
        }
        v
    }

    /// Builds φ, ψ (all-node, zero boundary) and F on the grid of `effective`.
    pub fn build(&self, effective: &DiscreteOperator, t_end: f64, samples_per_unit: usize) -> Result<ProblemData> {
        let grams = &effective.grams;
        let nc = grams.nc;
        let source = grams.restrict(&self.phi_source.sample(&grams.grid, nc));
        let load = source.component_mul(&DVector::from_column_slice(&grams.mass));
        let phi = grams.embed(&effective.solve(&load)?);
        let psi = grams.embed(&grams.restrict(&self.psi.sample(&grams.grid, nc)));
        let forcing = match &self.forcing {
            None => Forcing::None,
            Some(spec) => {
                let profile = TimeProfile::sample(|t| spec.profile.value(t), t_end.max(1.0 / samples_per_unit as f64), samples_per_unit)?;
                Forcing::Separable {
                    field: grams.embed(&grams.restrict(&spec.field.sample(&grams.grid, nc))),
                    profile,
                }
            }
        };
        Ok(ProblemData { phi, psi, forcing })
    }
}

#[derive(Clone, Debug)]
pub struct ProblemData {
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub forcing: Forcing,
}

impl ProblemData {
    /// ‖φ‖_{H²} + ‖ψ‖_{H¹} + ‖F‖_{L₁((0,t);H¹)}.
    pub fn norm(&self, grams: &SobolevGrams, t: f64) -> Result<f64> {
        Ok(sobolev_norm(&self.phi, grams, NormKind::H2)?
            + sobolev_norm(&self.psi, grams, NormKind::H1)?
            + self.forcing.l1_h1_norm(grams, t)?)
    }

    pub fn is_zero(&self) -> bool {
        let f_zero = match &self.forcing {
            Forcing::None => true,
            Forcing::Separable { field, profile } => field.amax() == 0.0 || profile.values.iter().all(|v| *v == 0.0),
        };
        self.phi.amax() == 0.0 && self.psi.amax() == 0.0 && f_zero
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::assembly::assemble_effective;
    use crate::linalg::csr_matvec;
    use nalgebra::DMatrix;

    #[test]
    fn phi_solves_the_effective_problem() {
        let grid = DomainGrid::new(&[1.0], &[64]).unwrap();
        let grams = SobolevGrams::new(&grid, 1);
        let g0 = DMatrix::from_element(1, 1, 1.6);
        let eff = assemble_effective(&g0, &[DMatrix::from_element(1, 1, 1.0)], &grams).unwrap();
        let data = DataSpec::default().build(&eff, 2.0, 64).unwrap();
        // Nodal values of (A⁰)⁻¹ 10 sin(πx) are close to 10 sin(πx)/(1.6π²).
        let x = grid.node_coords(32)[0];
        assert!((data.phi[32] - 10.0 * (PI * x).sin() / (1.6 * PI * PI)).abs() < 1e-3);
        let r = csr_matvec(&eff.stiffness, &grams.restrict(&data.phi));
        assert!((r[10] - grams.mass[10] * 10.0 * (PI * grid.node_coords(11)[0]).sin()).abs() < 1e-12);
        assert_eq!(data.psi[0], 0.0);
        assert_eq!(data.psi[64], 0.0);
        let n1 = data.norm(&grams, 1.0).unwrap();
        let n2 = data.norm(&grams, 2.0).unwrap();
        assert!(n2 > n1 && n1 > 0.0);
    }

    #[test]
    fn boundary_rules() {
        let bad = DataSpec {
            psi: FieldRecipe::Constant { value: 1.0 },
            ..Default::default()
        };
        assert_eq!(bad.violations(1).len(), 1);
        assert!(DataSpec::default().violations(2).is_empty());
        let two_modes = FieldRecipe::Sine {
            modes: vec![1, 2, 3],
            amplitude: 1.0,
            weights: None,
        };
        assert!(!two_modes.violations(2, "x").is_empty());
    }

    #[test]
    fn bubble_and_sine_values() {
        let b = FieldRecipe::Bubble {
            amplitude: 2.0,
            weights: Some(vec![1.0, -1.0]),
        };
        assert!((b.value(&[0.5, 1.0], &[1.0, 2.0]) - 2.0).abs() < 1e-15);
        let grid = DomainGrid::new(&[1.0], &[4]).unwrap();
        let f = b.sample(&grid, 2);
        assert_eq!(f[4], 2.0);
        assert_eq!(f[5], -2.0);
        let s = FieldRecipe::Sine {
            modes: vec![1, 2],
            amplitude: 1.0,
            weights: None,
        };
        assert!((s.value(&[0.5, 0.25], &[1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}

//! Named scalar columns of a parameter draw, grouped into blocks. Used for
//! chain persistence and per-parameter summaries.
//!
//! Column names: `beta0_below`, `rho_above`, `lambda1`, `phi2`, `omega`,
//! `tau2_intercept_below`, `gamma_above[1999]`, `logvar_below[STATION]`, ...
//! The baseline model drops the state suffix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    zero_emission, BaselineState, EmissionParams, ModelLayout, ParameterState, TransitionParams,
};
use crate::spatial::{FieldRole, GpHyper, SpatialField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Coefficients,
    Hyper,
    Annual,
    Fields,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Coefficients, Block::Hyper, Block::Annual, Block::Fields];

    pub fn name(self) -> &'static str {
        match self {
            Block::Coefficients => "coefficients",
            Block::Hyper => "hyper",
            Block::Annual => "annual",
            Block::Fields => "fields",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub block: Block,
    pub name: String,
    pub value: f64,
}

pub trait Flatten: Sized {
    /// Columns in a fixed order that depends only on the layout.
    fn columns(&self, layout: &ModelLayout) -> Vec<Column>;

    /// Inverse of [`Flatten::columns`]; `decay` restores the GP range, which
    /// is fixed by configuration and not stored per draw.
    fn from_columns(values: &HashMap<String, f64>, layout: &ModelLayout, decay: f64) -> Result<Self>;
}

fn push(out: &mut Vec<Column>, block: Block, name: String, value: f64) {
    out.push(Column { block, name, value });
}

fn get(values: &HashMap<String, f64>, name: &str) -> Result<f64> {
    values
        .get(name)
        .copied()
        .ok_or_else(|| Error::InvalidData(format!("missing column {name}")))
}

fn emission_columns(e: &EmissionParams, sfx: &str, layout: &ModelLayout, out: &mut Vec<Column>) {
    use Block::*;
    push(out, Coefficients, format!("beta0{sfx}"), e.intercept);
    push(out, Coefficients, format!("beta1{sfx}"), e.elevation);
    push(out, Coefficients, format!("beta2{sfx}"), e.latitude);
    push(out, Coefficients, format!("rho{sfx}"), e.rho);
    push(out, Hyper, format!("tau2_intercept{sfx}"), e.intercept_field.hyper.variance);
    push(out, Hyper, format!("logvar_mean{sfx}"), e.log_variance_field.hyper.mean);
    push(out, Hyper, format!("tau2_logvar{sfx}"), e.log_variance_field.hyper.variance);
    for (k, g) in e.annual.iter().enumerate() {
        push(out, Annual, format!("gamma{sfx}[{}]", layout.first_year + k as i32), *g);
    }
    for (st, v) in layout.stations.iter().zip(&e.intercept_field.values) {
        push(out, Fields, format!("intercept{sfx}[{}]", st.id), *v);
    }
    for (st, v) in layout.stations.iter().zip(&e.log_variance_field.values) {
        push(out, Fields, format!("logvar{sfx}[{}]", st.id), *v);
    }
}

fn emission_from(
    values: &HashMap<String, f64>,
    sfx: &str,
    roles: (FieldRole, FieldRole),
    layout: &ModelLayout,
    decay: f64,
) -> Result<EmissionParams> {
    let mut e = zero_emission(roles.0, roles.1, layout.n_sites(), layout.n_years, decay);
    e.intercept = get(values, &format!("beta0{sfx}"))?;
    e.elevation = get(values, &format!("beta1{sfx}"))?;
    e.latitude = get(values, &format!("beta2{sfx}"))?;
    e.rho = get(values, &format!("rho{sfx}"))?;
    e.intercept_field.hyper.variance = get(values, &format!("tau2_intercept{sfx}"))?;
    e.log_variance_field.hyper.mean = get(values, &format!("logvar_mean{sfx}"))?;
    e.log_variance_field.hyper.variance = get(values, &format!("tau2_logvar{sfx}"))?;
    for k in 0..layout.n_years {
        e.annual[k] = get(values, &format!("gamma{sfx}[{}]", layout.first_year + k as i32))?;
    }
    for (s, st) in layout.stations.iter().enumerate() {
        e.intercept_field.values[s] = get(values, &format!("intercept{sfx}[{}]", st.id))?;
        e.log_variance_field.values[s] = get(values, &format!("logvar{sfx}[{}]", st.id))?;
    }
    Ok(e)
}

impl Flatten for ParameterState {
    fn columns(&self, layout: &ModelLayout) -> Vec<Column> {
        let mut out = Vec::new();
        emission_columns(&self.below, "_below", layout, &mut out);
        emission_columns(&self.above, "_above", layout, &mut out);
        push(&mut out, Block::Coefficients, "lambda1".into(), self.seasonal[0]);
        push(&mut out, Block::Coefficients, "lambda2".into(), self.seasonal[1]);
        for (k, c) in self.transition.coefs.iter().enumerate() {
            push(&mut out, Block::Coefficients, format!("phi{k}"), *c);
        }
        push(&mut out, Block::Coefficients, "omega".into(), self.omega);
        push(&mut out, Block::Hyper, "tau2_transition".into(), self.transition.field.hyper.variance);
        for (st, v) in layout.stations.iter().zip(&self.transition.field.values) {
            push(&mut out, Block::Fields, format!("transition[{}]", st.id), *v);
        }
        out
    }

    fn from_columns(values: &HashMap<String, f64>, layout: &ModelLayout, decay: f64) -> Result<Self> {
        let mut coefs = [0.0; 5];
        for (k, c) in coefs.iter_mut().enumerate() {
            *c = get(values, &format!("phi{k}"))?;
        }
        let field_values = layout
            .stations
            .iter()
            .map(|st| get(values, &format!("transition[{}]", st.id)))
            .collect::<Result<Vec<_>>>()?;
        let state = ParameterState {
            below: emission_from(values, "_below", (FieldRole::InterceptBelow, FieldRole::LogVarianceBelow), layout, decay)?,
            above: emission_from(values, "_above", (FieldRole::InterceptAbove, FieldRole::LogVarianceAbove), layout, decay)?,
            seasonal: [get(values, "lambda1")?, get(values, "lambda2")?],
            transition: TransitionParams {
                coefs,
                field: SpatialField {
                    role: FieldRole::Transition,
                    values: field_values,
                    hyper: GpHyper {
                        variance: get(values, "tau2_transition")?,
                        decay,
                        mean: 0.0,
                    },
                },
            },
            omega: get(values, "omega")?,
        };
        state.validate()?;
        Ok(state)
    }
}

impl Flatten for BaselineState {
    fn columns(&self, layout: &ModelLayout) -> Vec<Column> {
        let mut out = Vec::new();
        emission_columns(&self.emission, "", layout, &mut out);
        push(&mut out, Block::Coefficients, "lambda1".into(), self.seasonal[0]);
        push(&mut out, Block::Coefficients, "lambda2".into(), self.seasonal[1]);
        out
    }

    fn from_columns(values: &HashMap<String, f64>, layout: &ModelLayout, decay: f64) -> Result<Self> {
        Ok(BaselineState {
            emission: emission_from(values, "", (FieldRole::InterceptBelow, FieldRole::LogVarianceBelow), layout, decay)?,
            seasonal: [get(values, "lambda1")?, get(values, "lambda2")?],
        })
    }
}

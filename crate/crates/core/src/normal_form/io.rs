use nalgebra::DMatrix;
use serde_json::{json, Value};

use super::{resonance_structure, FitMode, LinearPart, ReducedModel};
use crate::error::{Error, Result};
use crate::forced::PolarModel;
use crate::linalg::{cmatrix_from_json, cmatrix_to_json, cvec_from_json, cvec_to_json};

fn real_rows(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn field<'a>(v: &'a Value, k: &str) -> Result<&'a Value> {
    v.get(k).ok_or_else(|| Error::Parse(format!("model: missing '{k}'")))
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value, k: &str) -> Result<T> {
    serde_json::from_value(field(v, k)?.clone()).map_err(|e| Error::Parse(format!("model '{k}': {e}")))
}

impl ReducedModel {
    /// Model file: `{Lambda, B, N, S, Ncoef, Hstar, H, polar, residuals,
    /// metadata}` with complex numbers as `[re, im]`.
    pub fn to_json(&self, polar: Option<&PolarModel>) -> Value {
        json!({
            "Lambda": cvec_to_json(&self.linear.lambda),
            "B": cmatrix_to_json(&self.linear.b),
            "N": self.order(),
            "S": self.structure.resonant,
            "Ncoef": cmatrix_to_json(&self.ncoef),
            "Hstar": cmatrix_to_json(&self.hstar),
            "H": cmatrix_to_json(&self.h),
            "polar": polar,
            "residuals": {
                "conjugacy": self.conjugacy_residual,
                "mean": self.mean_residual,
            },
            "metadata": {
                "d": self.dim(),
                "delta": self.structure.delta,
                "ordering": "graded-lex",
                "mode": self.mode,
                "iterations": self.iterations,
                "nonhyperbolic": self.nonhyperbolic,
                "jacobian": real_rows(&self.linear.jacobian),
            },
        })
    }

    pub fn from_json(v: &Value) -> Result<(ReducedModel, Option<PolarModel>)> {
        let lambda = cvec_from_json(field(v, "Lambda")?)?;
        let d = lambda.len();
        let b = cmatrix_from_json(field(v, "B")?)?;
        if b.shape() != (d, d) {
            return Err(Error::Parse("model: B has wrong shape".into()));
        }
        let meta = field(v, "metadata")?;
        let jac: Vec<Vec<f64>> = parse(meta, "jacobian")?;
        if jac.len() != d || jac.iter().any(|r| r.len() != d) {
            return Err(Error::Parse("model: jacobian has wrong shape".into()));
        }
        let jacobian = DMatrix::from_fn(d, d, |i, j| jac[i][j]);
        let b_inv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Parse("model: B is singular".into()))?;
        let linear = LinearPart {
            jacobian,
            b,
            b_inv,
            lambda,
        };
        let order: usize = parse(v, "N")?;
        let delta: f64 = parse(meta, "delta")?;
        let structure = resonance_structure(&linear, order, delta)?;
        let s: Vec<(usize, usize)> = parse(v, "S")?;
        if s != structure.resonant {
            return Err(Error::Parse("model: stored resonance set does not match Lambda and delta".into()));
        }
        let k = structure.exps.len();
        let mat = |key: &str| -> Result<_> {
            let m = cmatrix_from_json(field(v, key)?)?;
            if m.shape() != (d, k) {
                return Err(Error::Parse(format!("model: {key} has wrong shape")));
            }
            Ok(m)
        };
        let residuals = field(v, "residuals")?;
        let mode: FitMode = parse(meta, "mode")?;
        let model = ReducedModel {
            ncoef: mat("Ncoef")?,
            hstar: mat("Hstar")?,
            h: mat("H")?,
            linear,
            structure,
            conjugacy_residual: parse(residuals, "conjugacy")?,
            mean_residual: parse(residuals, "mean")?,
            iterations: parse(meta, "iterations")?,
            mode,
            nonhyperbolic: parse(meta, "nonhyperbolic")?,
        };
        let polar: Option<PolarModel> = parse(v, "polar")?;
        Ok((model, polar))
    }
}

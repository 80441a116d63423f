use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, invalid, read_to_string, write_err, Diagnostic, IoError};
use crate::factors::{feasibility_check, n_columns, FactorModel, Parameters};

pub const MODEL_FORMAT: &str = "aadtt-factor-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk wrapper: a format tag and version around the model itself.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: FactorModel,
}

pub(crate) fn parse_model(text: &str) -> Result<FactorModel, Vec<Diagnostic>> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        vec![Diagnostic::new(Some(e.line() as u64), None, format!("invalid model file: {e}"))]
    })?;
    let mut diags = Vec::new();
    if file.format != MODEL_FORMAT {
        diags.push(Diagnostic::new(None, Some("format"), format!("expected `{MODEL_FORMAT}`, found `{}`", file.format)));
    }
    if file.version != MODEL_VERSION {
        diags.push(Diagnostic::new(None, Some("version"), format!("unsupported version {}", file.version)));
    }
    let mut model = file.model;
    match &model.parameters {
        Parameters::Linear { coefficients, .. } => {
            if !model.spec.is_linear() || coefficients.len() != n_columns(model.spec) {
                diags.push(Diagnostic::new(
                    None,
                    Some("parameters"),
                    format!("{} coefficients do not fit spec {}", coefficients.len(), model.spec),
                ));
            }
        }
        Parameters::Forest(f) => {
            if model.spec.is_linear() || f.trees.is_empty() {
                diags.push(Diagnostic::new(None, Some("parameters"), format!("forest parameters do not fit spec {}", model.spec)));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    model.feasible = feasibility_check(&model);
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<FactorModel, IoError> {
    parse_model(&read_to_string(path)?).map_err(|d| invalid(path, d))
}

pub(crate) fn format_model(model: &FactorModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn write_model(path: &Path, model: &FactorModel) -> Result<(), IoError> {
    let mut w = create(path)?;
    writeln!(w, "{}", format_model(model))
        .and_then(|_| w.flush())
        .map_err(|e| write_err(path, e))
}

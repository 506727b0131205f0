use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::init_tensor;
use super::{Model, ModelError, ParameterVector};

/// Which tensors an external initialization supplied.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitReport {
    pub loaded: Vec<String>,
    /// Present under the same name with a different shape (e.g. a different
    /// input width or class count); freshly initialized.
    pub reinitialized: Vec<String>,
    /// Absent from the file; freshly initialized.
    pub missing: Vec<String>,
    /// In the file but not in the model.
    pub ignored: Vec<String>,
}

/// Initializes `model` from an externally produced parameter file. Tensors
/// that match by name and shape are copied; everything else is drawn fresh
/// from `rng`. Fails only when nothing matches by name.
pub fn load_external_init(
    path: &Path,
    model: &Model,
    rng: &mut impl Rng,
) -> Result<(ParameterVector, InitReport), ModelError> {
    let external = ParameterVector::load(path)?;
    let manifest = model.manifest();
    let mut report = InitReport::default();
    let mut values = Vec::with_capacity(model.num_params());
    for spec in &manifest {
        let found = external.manifest().iter().find(|s| s.name == spec.name);
        match found {
            Some(ext) if ext.shape == spec.shape => {
                values.extend_from_slice(external.tensor(&spec.name).expect("listed tensor"));
                report.loaded.push(spec.name.clone());
            }
            Some(_) => {
                values.extend(init_tensor(spec, rng));
                report.reinitialized.push(spec.name.clone());
            }
            None => {
                values.extend(init_tensor(spec, rng));
                report.missing.push(spec.name.clone());
            }
        }
    }
    report.ignored = external
        .manifest()
        .iter()
        .filter(|s| !manifest.iter().any(|m| m.name == s.name))
        .map(|s| s.name.clone())
        .collect();
    if report.loaded.is_empty() && report.reinitialized.is_empty() {
        return Err(ModelError::Incompatible {
            path: path.display().to_string(),
        });
    }
    for name in &report.reinitialized {
        log::info!("external init: {name} has a different shape, re-initialized");
    }
    for name in &report.missing {
        log::info!("external init: {name} not in file, initialized fresh");
    }
    Ok((ParameterVector::new(manifest, values)?, report))
}

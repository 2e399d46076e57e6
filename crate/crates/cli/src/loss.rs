//! Composite loss on a probability-tensor fixture file.

use serde::{Deserialize, Serialize};
use uvpose::metrics::{composite_loss, LossBreakdown, ProbTensor};
use uvpose::{CorrespondenceMap, LossWeights};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthClasses {
    pub id: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

/// Predicted tensors and ground-truth classes for one image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFixture {
    pub width: u32,
    pub height: u32,
    pub gt: GroundTruthClasses,
    pub mask: ProbTensor,
    pub u: ProbTensor,
    pub v: ProbTensor,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_class_weights: Option<Vec<f64>>,
}

pub fn loss(fixture: &LossFixture) -> Result<LossBreakdown> {
    let n = fixture.width as usize * fixture.height as usize;
    let g = &fixture.gt;
    if g.id.len() != n || g.u.len() != n || g.v.len() != n {
        return Err(CliError::Usage(format!(
            "ground truth must hold {n} values per channel for a {}x{} image",
            fixture.width, fixture.height
        )));
    }
    let mut map = CorrespondenceMap::empty(fixture.width, fixture.height);
    map.id.clone_from(&g.id);
    map.u.clone_from(&g.u);
    map.v.clone_from(&g.v);
    Ok(composite_loss(
        &fixture.mask,
        &fixture.u,
        &fixture.v,
        &map,
        &fixture.weights,
        fixture.mask_class_weights.as_deref(),
    )?)
}

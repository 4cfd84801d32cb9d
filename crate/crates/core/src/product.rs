//! Product Lagrangians `c1 x c2` in `C^2` with separable weight
//! `W(z1, z2) = W1(z1) + W2(z2)`; the n = 2 test vehicle.
//!
//! On a product torus the angle splits, `theta(u, v) = theta1(u) + theta2(v)`,
//! and the Maslov indices add.

use crate::ambient::AmbientSpace;
use crate::curve::ImmersedCurve;
use crate::error::MeshError;
use crate::frame::FrameData;

#[derive(Debug, Clone)]
pub struct ProductLagrangian {
    pub factor1: ImmersedCurve,
    pub factor2: ImmersedCurve,
    pub weight1: AmbientSpace,
    pub weight2: AmbientSpace,
}

#[derive(Debug)]
pub struct ProductFrame {
    pub frame1: FrameData,
    pub frame2: FrameData,
    pub maslov: i64,
}

impl ProductLagrangian {
    pub fn new(
        factor1: ImmersedCurve,
        factor2: ImmersedCurve,
        weight1: AmbientSpace,
        weight2: AmbientSpace,
    ) -> Result<Self, MeshError> {
        if weight1.n() != 1 || weight2.n() != 1 {
            return Err(MeshError::ProductFactors);
        }
        Ok(Self {
            factor1,
            factor2,
            weight1,
            weight2,
        })
    }

    pub fn frame(&self) -> Result<ProductFrame, MeshError> {
        let frame1 = FrameData::compute(&self.factor1, &self.weight1)?;
        let frame2 = FrameData::compute(&self.factor2, &self.weight2)?;
        let maslov = frame1.maslov_index()? + frame2.maslov_index()?;
        Ok(ProductFrame {
            frame1,
            frame2,
            maslov,
        })
    }
}

impl ProductFrame {
    /// Angle at the grid vertex `(j, k)`.
    pub fn theta(&self, j: usize, k: usize) -> f64 {
        self.frame1.theta[j] + self.frame2.theta[k]
    }
}

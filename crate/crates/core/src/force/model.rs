use super::features::{FeatureMatrix, Features, FEATURE_ORDER};
use crate::error::{Error, Result};
use crate::raster::Plane;

/// Linear force model `F = diag(A·X)`.
///
/// `A` is 3×6. The normal row only sees the density powers, so its last
/// three coefficients are not stored at all.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceModel {
    pub normal: [f64; 3],
    pub shear_x: [f64; 6],
    pub shear_y: [f64; 6],
    pub feature_order: usize,
    /// Raster subsampling the features were computed at.
    pub stride: usize,
    pub units: String,
}

impl Default for ForceModel {
    fn default() -> Self {
        Self::zero()
    }
}

impl ForceModel {
    pub fn zero() -> Self {
        Self {
            normal: [0.0; 3],
            shear_x: [0.0; 6],
            shear_y: [0.0; 6],
            feature_order: FEATURE_ORDER,
            stride: 2,
            units: "N".into(),
        }
    }

    pub fn matrix(&self) -> [[f64; 6]; 3] {
        let n = self.normal;
        [[n[0], n[1], n[2], 0.0, 0.0, 0.0], self.shear_x, self.shear_y]
    }

    pub fn from_matrix(a: [[f64; 6]; 3]) -> Result<Self> {
        if a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("model coefficients must be finite".into()));
        }
        if a[0][3..].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter(
                "normal row must not use shear features (a_14, a_15, a_16 = 0)".into(),
            ));
        }
        Ok(Self {
            normal: [a[0][0], a[0][1], a[0][2]],
            shear_x: a[1],
            shear_y: a[2],
            ..Self::zero()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_order != FEATURE_ORDER {
            return Err(Error::InvalidParameter(format!(
                "feature order {} unsupported, expected {FEATURE_ORDER}",
                self.feature_order
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        Self::from_matrix(self.matrix()).map(|_| ())
    }

    /// `diag(A·X)`.
    pub fn predict(&self, x: &FeatureMatrix) -> [f64; 3] {
        let a = self.matrix();
        let mut f = [0.0; 3];
        for (j, fj) in f.iter_mut().enumerate() {
            *fj = (0..6).map(|k| a[j][k] * x[k][j]).sum();
        }
        f
    }

    /// Multiplies each row of `A` by the matching factor.
    pub fn scaled(&self, factors: [f64; 3]) -> Self {
        let mut m = self.clone();
        m.normal.iter_mut().for_each(|v| *v *= factors[0]);
        m.shear_x.iter_mut().for_each(|v| *v *= factors[1]);
        m.shear_y.iter_mut().for_each(|v| *v *= factors[2]);
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForceDistribution {
    pub f_normal: Plane,
    pub f_shear_x: Plane,
    pub f_shear_y: Plane,
    /// `diag(A·X)` on the aggregate features.
    pub totals: [f64; 3],
}

/// Per-cell forces `diag(A·x(p))` and their totals.
pub fn force_distribution(model: &ForceModel, features: &Features) -> ForceDistribution {
    let pp = &features.per_point;
    let (w, h) = pp.dims();
    let cells: Vec<[f64; 3]> = pp.data().iter().map(|x| model.predict(x)).collect();
    let plane = |j: usize| Plane::from_fn(w, h, |x, y| cells[y * w + x][j]);
    ForceDistribution {
        f_normal: plane(0),
        f_shear_x: plane(1),
        f_shear_y: plane(2),
        totals: model.predict(&features.aggregate),
    }
}

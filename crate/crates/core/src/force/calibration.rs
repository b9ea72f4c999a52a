use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureMatrix;
use super::model::ForceModel;
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 20;
pub const AXIS_NAMES: [&str; 3] = ["normal", "shear_x", "shear_y"];
/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

/// One calibration observation: aggregate features and the measured force.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceSample {
    pub features: FeatureMatrix,
    pub force: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl Split {
    /// Seeded shuffle, then the first `round(fraction·n)` indices train.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = (self.train_fraction * n as f64).round() as usize;
        let test = idx.split_off(n_train.min(n));
        Ok((idx, test))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisFit {
    /// `None` when the test targets have no variance.
    pub r2: Option<f64>,
    pub adjusted_r2: Option<f64>,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub axes: [AxisFit; 3],
    pub train: usize,
    pub test: usize,
}

/// Active feature columns of row `axis`.
fn row_features(x: &FeatureMatrix, axis: usize) -> Vec<f64> {
    let k = if axis == 0 { 3 } else { 6 };
    (0..k).map(|i| x[i][axis]).collect()
}

/// Least squares for one row of `A` with column scaling and a rank check.
fn solve_row(samples: &[&ForceSample], axis: usize) -> Result<Vec<f64>> {
    let k = if axis == 0 { 3 } else { 6 };
    let m = samples.len();
    let mut a = DMatrix::<f64>::zeros(m, k);
    let b = DVector::from_iterator(m, samples.iter().map(|s| s.force[axis]));
    for (i, s) in samples.iter().enumerate() {
        for (j, v) in row_features(&s.features, axis).into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    let scale: Vec<f64> = (0..k).map(|j| a.column(j).amax()).collect();
    let deficient = |rank| Error::RankDeficient {
        row: AXIS_NAMES[axis],
        rank,
        columns: k,
    };
    if scale.contains(&0.0) {
        return Err(deficient(scale.iter().filter(|&&s| s > 0.0).count()));
    }
    for (j, &s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if rank < k {
        return Err(deficient(rank));
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InsufficientData(format!("least squares failed: {e}")))?;
    Ok((0..k).map(|j| sol[j] / scale[j]).collect())
}

fn axis_fit(model: &ForceModel, test: &[&ForceSample], axis: usize) -> AxisFit {
    let n = test.len();
    if n == 0 {
        return AxisFit {
            r2: None,
            adjusted_r2: None,
            rmse: f64::NAN,
        };
    }
    let p = if axis == 0 { 3 } else { 6 };
    let y: Vec<f64> = test.iter().map(|s| s.force[axis]).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = test
        .iter()
        .zip(&y)
        .map(|(s, yi)| (model.predict(&s.features)[axis] - yi).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - mean).powi(2)).sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    let adjusted_r2 = r2.and_then(|r2| {
        (n > p + 1).then(|| 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64)
    });
    AxisFit {
        r2,
        adjusted_r2,
        rmse: (ss_res / n as f64).sqrt(),
    }
}

/// Fits every row of `A` on the training split and scores it on the test split.
pub fn calibrate(data: &[ForceSample], split: Split) -> Result<(ForceModel, FitReport)> {
    if data.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, calibration needs at least {MIN_SAMPLES}",
            data.len()
        )));
    }
    if data
        .iter()
        .any(|s| s.features.iter().flatten().chain(&s.force).any(|v| !v.is_finite()))
    {
        return Err(Error::InsufficientData("dataset contains non-finite values".into()));
    }
    let (train_idx, test_idx) = split.indices(data.len())?;
    let train: Vec<&ForceSample> = train_idx.iter().map(|&i| &data[i]).collect();
    let test: Vec<&ForceSample> = test_idx.iter().map(|&i| &data[i]).collect();
    let mut model = ForceModel::zero();
    let n = solve_row(&train, 0)?;
    model.normal.copy_from_slice(&n);
    model.shear_x.copy_from_slice(&solve_row(&train, 1)?);
    model.shear_y.copy_from_slice(&solve_row(&train, 2)?);
    let axes = [0, 1, 2].map(|a| axis_fit(&model, &test, a));
    Ok((
        model,
        FitReport {
            axes,
            train: train.len(),
            test: test.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(n: usize, model: &ForceModel, seed: u64) -> Vec<ForceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (d, sx, sy): (f64, f64, f64) =
                    (rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let mut x = [[0.0; 3]; 6];
                for k in 0..3 {
                    x[k][0] = d.powi(k as i32 + 1);
                    x[k][1] = sx.powi(k as i32 + 1);
                    x[k][2] = x[k][1];
                    x[k + 3][1] = sy.powi(k as i32 + 1);
                    x[k + 3][2] = x[k + 3][1];
                }
                ForceSample {
                    force: model.predict(&x),
                    features: x,
                }
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = Split::default().indices(2070).unwrap();
        assert_eq!((tr.len(), te.len()), (1656, 414));
    }

    #[test]
    fn recovers_exact_model() {
        let truth = ForceModel::from_matrix([
            [1.0, -0.3, 0.05, 0.0, 0.0, 0.0],
            [0.7, 0.1, -0.2, 0.3, 0.0, 0.01],
            [0.2, 0.0, 0.1, 0.9, -0.4, 0.2],
        ])
        .unwrap();
        let data = synthetic(200, &truth, 1);
        let (m, rep) = calibrate(&data, Split::default()).unwrap();
        for (a, b) in m.matrix().iter().flatten().zip(truth.matrix().iter().flatten()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        assert!(rep.axes.iter().all(|a| a.rmse < 1e-9));
    }

    #[test]
    fn zero_forces_give_zero_model_and_undefined_r2() {
        let data = synthetic(50, &ForceModel::zero(), 2);
        let (m, rep) = calibrate(&data, Split::default()).unwrap();
        assert_eq!(m.matrix(), [[0.0; 6]; 3]);
        assert!(rep.axes.iter().all(|a| a.r2.is_none() && a.adjusted_r2.is_none()));
    }

    #[test]
    fn missing_shear_diversity_names_row() {
        let mut data = synthetic(50, &ForceModel::zero(), 3);
        for s in &mut data {
            for k in 3..6 {
                s.features[k][1] = 0.0;
                s.features[k][2] = 0.0;
            }
        }
        match calibrate(&data, Split::default()) {
            Err(Error::RankDeficient { row, .. }) => assert_eq!(row, "shear_x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples() {
        let data = synthetic(10, &ForceModel::zero(), 4);
        assert!(matches!(calibrate(&data, Split::default()), Err(Error::InsufficientData(_))));
    }
}

//! Two-component PCA by power iteration, for plotting representations.

use log::warn;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("need at least 2 dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("{points} points but {labels} labels")]
    LabelCount { points: usize, labels: usize },
    #[error("label {label} has no name among {names} class names")]
    UnknownLabel { label: usize, names: usize },
}

const MAX_ITERATIONS: usize = 100_000;
const TOLERANCE: f64 = 1e-13;
/// Eigenvalues below this fraction of the trace are treated as zero.
const RANK_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct Projection {
    /// `(x, y)` per input point.
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub mean: Vec<f64>,
    /// Unit principal directions; a zero vector when the data lacks that rank.
    pub components: [Vec<f64>; 2],
    /// Variance of the data along each component.
    pub variance: [f64; 2],
}

impl Projection {
    /// `mean + x · c₁ + y · c₂` for point `i`.
    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let [x, y] = self.points[i];
        (0..self.mean.len())
            .map(|k| self.mean[k] + x * self.components[0][k] + y * self.components[1][k])
            .collect()
    }

    /// `x,y,label_name` rows under a header.
    pub fn to_csv(&self, names: &[String]) -> Result<String, ProjectionError> {
        let mut out = String::from("x,y,label_name\n");
        for (p, &label) in self.points.iter().zip(&self.labels) {
            let name = names.get(label).ok_or(ProjectionError::UnknownLabel {
                label,
                names: names.len(),
            })?;
            out.push_str(&format!("{},{},{}\n", p[0], p[1], csv_field(name)));
        }
        Ok(out)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Dominant eigenpair of a symmetric PSD matrix.
fn power_iteration(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let d = m.len();
    // deterministic start with no exact symmetry to get stuck on
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64 + 1.0).sqrt().fract()).collect();
    normalize(&mut v);
    for _ in 0..MAX_ITERATIONS {
        let mut next = mat_vec(m, &v);
        if normalize(&mut next) == 0.0 {
            return (0.0, vec![0.0; d]);
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < TOLERANCE {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(m, &v));
    (lambda, v)
}

fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Mean-centres the rows and projects them onto the top two principal
/// components. Each component's largest-magnitude coordinate is made
/// positive. If the data has rank below 2 the missing component is zero.
pub fn project_2d(rows: &[Vec<f64>], labels: &[usize]) -> Result<Projection, ProjectionError> {
    let m = rows.len();
    if m < 3 {
        return Err(ProjectionError::TooFewPoints(m));
    }
    if labels.len() != m {
        return Err(ProjectionError::LabelCount {
            points: m,
            labels: labels.len(),
        });
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(ProjectionError::TooFewDimensions(d));
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(ProjectionError::RaggedRow {
                row,
                got: r.len(),
                expected: d,
            });
        }
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(a, x)| *a += x);
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= m as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let floor = RANK_EPS * trace.max(f64::MIN_POSITIVE);

    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut variance = [0.0; 2];
    for k in 0..2 {
        let (lambda, mut v) = power_iteration(&cov);
        if lambda <= floor {
            warn!("representations have rank {k} < 2; component {} is zero", k + 1);
            break;
        }
        fix_sign(&mut v);
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        variance[k] = lambda;
        components[k] = v;
    }
    let points = centred
        .iter()
        .map(|r| [dot(r, &components[0]), dot(r, &components[1])])
        .collect();
    Ok(Projection {
        points,
        labels: labels.to_vec(),
        mean,
        components,
        variance,
    })
}

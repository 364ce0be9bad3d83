//! Sampled trajectories, delay embedding, finite differences and the
//! normalized mean trajectory error.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Uniformly sampled observable: one row per channel, one column per instant.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: DMatrix<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::arg(format!("timestep must be positive, got {dt}")));
        }
        if values.ncols() < 2 || values.nrows() == 0 {
            return Err(Error::arg("a time series needs at least two samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("time series contains non-finite samples"));
        }
        Ok(TimeSeries { t0, dt, values })
    }

    pub fn scalar(t0: f64, dt: f64, samples: &[f64]) -> Result<Self> {
        Self::new(t0, dt, DMatrix::from_row_slice(1, samples.len(), samples))
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Reads `t,ch0,ch1,...`. The timestep is inferred from the first two rows
    /// and every later increment must agree to a relative 1e-6.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            let vals: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| {
                Error::Parse(format!("{} row {}: {e}", path.display(), line + 2))
            })?;
            if vals.len() < 2 {
                return Err(Error::Parse(format!(
                    "{} row {}: expected a time column and at least one channel",
                    path.display(),
                    line + 2
                )));
            }
            times.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        if times.len() < 2 {
            return Err(Error::Parse(format!("{}: fewer than two samples", path.display())));
        }
        let dt = times[1] - times[0];
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs() {
                return Err(Error::Parse(format!(
                    "{}: non-uniform timestep near t = {}",
                    path.display(),
                    w[0]
                )));
            }
        }
        let ch = rows[0].len();
        if rows.iter().any(|r| r.len() != ch) {
            return Err(Error::Parse(format!("{}: ragged rows", path.display())));
        }
        let values = DMatrix::from_fn(ch, rows.len(), |i, j| rows[j][i]);
        Self::new(times[0], dt, values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{other:?}")),
        })?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.channels()).map(|c| format!("ch{c}")));
        let werr = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
        w.write_record(&header).map_err(werr)?;
        for j in 0..self.len() {
            let mut rec = vec![format!("{:e}", self.time(j))];
            rec.extend(self.values.column(j).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(werr)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Delay-embedded states. For channel `ch` and lag `r`, row `ch * p + r` of
/// column `c` holds sample `c + r * shift` of that channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub p: usize,
    pub shift: usize,
    pub channels: usize,
    pub points: DMatrix<f64>,
}

impl EmbeddedTrajectory {
    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    /// Wraps already-formed state vectors (full-state measurements, `p = 1`).
    pub fn from_states(t0: f64, dt: f64, points: DMatrix<f64>) -> Self {
        EmbeddedTrajectory {
            t0,
            dt,
            p: 1,
            shift: 1,
            channels: points.nrows(),
            points,
        }
    }
}

pub fn delay_embed(series: &TimeSeries, p: usize, shift: usize) -> Result<EmbeddedTrajectory> {
    if p == 0 || shift == 0 {
        return Err(Error::arg("embedding dimension and shift must be at least 1"));
    }
    let span = (p - 1) * shift;
    if series.len() <= span {
        return Err(Error::arg(format!(
            "series of {} samples too short for p = {p}, shift = {shift}",
            series.len()
        )));
    }
    let n = series.len() - span;
    let ch = series.channels();
    let points = DMatrix::from_fn(ch * p, n, |row, c| {
        let (k, r) = (row / p, row % p);
        series.values[(k, c + r * shift)]
    });
    Ok(EmbeddedTrajectory {
        t0: series.t0,
        dt: series.dt,
        p,
        shift,
        channels: ch,
        points,
    })
}

/// Minimal delay-embedding dimension for a `d`-dimensional manifold under
/// `ell` forcing frequencies.
pub fn min_embedding_dimension(d: usize, ell: usize, periodic_sampling: bool) -> usize {
    if periodic_sampling || ell == 0 {
        2 * d + 1
    } else {
        2 * (d + ell) + 1
    }
}

/// Second-order finite differences along columns: central inside, one-sided
/// three-point stencils at both ends.
pub fn finite_diff_derivative(traj: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = traj.ncols();
    if n < 3 {
        return Err(Error::arg("finite differences need at least three samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::arg("timestep must be positive"));
    }
    let mut out = DMatrix::zeros(traj.nrows(), n);
    let h2 = 2.0 * dt;
    for i in 0..traj.nrows() {
        let x = traj.row(i);
        out[(i, 0)] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / h2;
        for j in 1..n - 1 {
            out[(i, j)] = (x[j + 1] - x[j - 1]) / h2;
        }
        out[(i, n - 1)] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / h2;
    }
    Ok(out)
}

/// Normalized mean trajectory error: mean column-wise Euclidean error divided
/// by the norm of `normalizer`.
pub fn nmte(reference: &DMatrix<f64>, reconstruction: &DMatrix<f64>, normalizer: &DVector<f64>) -> Result<f64> {
    if reference.shape() != reconstruction.shape() {
        return Err(Error::arg(format!(
            "shape mismatch {:?} vs {:?}",
            reference.shape(),
            reconstruction.shape()
        )));
    }
    let scale = normalizer.norm();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::arg("normalizer must have nonzero norm"));
    }
    if reference.ncols() == 0 {
        return Err(Error::arg("empty trajectory"));
    }
    let total: f64 = (0..reference.ncols())
        .map(|j| (reference.column(j) - reconstruction.column(j)).norm())
        .sum();
    Ok(total / reference.ncols() as f64 / scale)
}

/// The column with the largest Euclidean norm, the default NMTE normalizer.
pub fn max_norm_column(m: &DMatrix<f64>) -> DVector<f64> {
    let mut best = 0;
    let mut bn = -1.0;
    for j in 0..m.ncols() {
        let n = m.column(j).norm();
        if n > bn {
            bn = n;
            best = j;
        }
    }
    m.column(best).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_small() {
        let s = TimeSeries::scalar(0.0, 1.0, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let e = delay_embed(&s, 3, 1).unwrap();
        assert_eq!(e.points, DMatrix::from_column_slice(3, 3, &[1., 2., 3., 2., 3., 4., 3., 4., 5.]));
        let id = delay_embed(&s, 1, 1).unwrap();
        assert_eq!(id.points, s.values);
        assert!(delay_embed(&s, 6, 1).is_err());
    }

    #[test]
    fn embed_with_stride_and_channels() {
        let v = DMatrix::from_row_slice(2, 5, &[1., 2., 3., 4., 5., 10., 20., 30., 40., 50.]);
        let s = TimeSeries::new(0.0, 0.5, v).unwrap();
        let e = delay_embed(&s, 2, 2).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e.points.column(1).as_slice(), &[2., 4., 20., 40.]);
    }

    #[test]
    fn sine_embeds_on_a_plane() {
        let dt = 0.1;
        let s: Vec<f64> = (0..400).map(|i| (i as f64 * dt).sin()).collect();
        let e = delay_embed(&TimeSeries::scalar(0.0, dt, &s).unwrap(), 5, 1).unwrap();
        let mean = e.points.column_mean();
        let mut c = e.points.clone();
        for mut col in c.column_iter_mut() {
            col -= &mean;
        }
        let sv = c.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // residual distance from the best 2-plane, per point
        let off: f64 = sv[2..].iter().map(|s| s * s).sum::<f64>().sqrt() / (e.len() as f64).sqrt();
        assert!(off < 1e-4, "{off}");
    }

    #[test]
    fn embedding_dimensions() {
        assert_eq!(min_embedding_dimension(2, 0, false), 5);
        assert_eq!(min_embedding_dimension(2, 1, false), 7);
        assert_eq!(min_embedding_dimension(2, 1, true), 5);
    }

    #[test]
    fn derivative_examples() {
        let dt = 0.01;
        let ramp = DMatrix::from_fn(1, 50, |_, j| j as f64 * dt);
        let d = finite_diff_derivative(&ramp, dt).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let cst = DMatrix::from_element(2, 10, 3.5);
        assert!(finite_diff_derivative(&cst, dt).unwrap().iter().all(|v| v.abs() < 1e-12));
        let cosine = DMatrix::from_fn(1, 1000, |_, j| (j as f64 * dt).cos());
        let d = finite_diff_derivative(&cosine, dt).unwrap();
        let err = (0..1000)
            .map(|j| (d[(0, j)] + (j as f64 * dt).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        assert!(finite_diff_derivative(&DMatrix::zeros(1, 2), dt).is_err());
    }

    #[test]
    fn nmte_examples() {
        let r = DMatrix::from_fn(3, 10, |i, j| (i * j) as f64);
        let n = max_norm_column(&r);
        assert_eq!(nmte(&r, &r, &n).unwrap(), 0.0);
        let unit = DMatrix::from_fn(2, 4, |i, j| if i == j % 2 { 1.0 } else { 0.0 });
        let z = DMatrix::zeros(2, 4);
        let e = nmte(&unit, &z, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((e - 1.0).abs() < 1e-15);
        assert!(nmte(&unit, &DMatrix::zeros(2, 3), &n).is_err());
        assert!(nmte(&unit, &z, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let v = DMatrix::from_fn(2, 20, |i, j| (i as f64 + 1.0) * (j as f64 * 0.3).sin());
        let s = TimeSeries::new(1.0, 0.05, v).unwrap();
        s.save_csv(&path).unwrap();
        let back = TimeSeries::load_csv(&path).unwrap();
        assert!((back.dt - s.dt).abs() < 1e-12);
        assert_eq!(back.values, s.values);
        assert!(TimeSeries::load_csv(dir.path().join("missing.csv")).is_err());
    }
}

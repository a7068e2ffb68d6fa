use rayon::prelude::*;

use super::AnalysisError;
use crate::geometry::{Angle2D, Camera};
use crate::scattering::{Frame, Pane};

/// What every pixel is correlated against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Pixel {
        pane: Pane,
        col: usize,
        row: usize,
    },
    /// Sum over the pixels whose centres lie strictly inside the disc.
    Disc {
        pane: Pane,
        centre: Angle2D,
        radius: f64,
    },
}

impl Reference {
    /// Single-pixel reference at the pixel containing `angle`.
    pub fn at_angle(pane: Pane, angle: Angle2D, camera: &Camera) -> Result<Self, AnalysisError> {
        let (col, row) = camera.pixel_at(angle).ok_or_else(|| {
            AnalysisError::InvalidArgument(format!(
                "reference ({}, {}) μrad is off the pane",
                angle.theta_x, angle.theta_y
            ))
        })?;
        Ok(Reference::Pixel { pane, col, row })
    }

    pub fn pane(&self) -> Pane {
        match *self {
            Reference::Pixel { pane, .. } | Reference::Disc { pane, .. } => pane,
        }
    }

    pub fn angle(&self, camera: &Camera) -> Angle2D {
        match *self {
            Reference::Pixel { col, row, .. } => camera.pixel_centre(col, row),
            Reference::Disc { centre, .. } => centre,
        }
    }

    /// (col, row) of the contributing pixels, row-major order.
    pub fn pixels(&self, camera: &Camera) -> Vec<(usize, usize)> {
        match *self {
            Reference::Pixel { col, row, .. } => {
                if col < camera.width && row < camera.height {
                    vec![(col, row)]
                } else {
                    vec![]
                }
            }
            Reference::Disc { centre, radius, .. } => disc_pixels(camera, centre, radius),
        }
    }
}

pub(crate) fn disc_pixels(camera: &Camera, centre: Angle2D, radius: f64) -> Vec<(usize, usize)> {
    let r2 = radius * radius;
    let mut out = Vec::new();
    for row in 0..camera.height {
        for col in 0..camera.width {
            if (camera.pixel_centre(col, row) - centre).norm_sq() < r2 {
                out.push((col, row));
            }
        }
    }
    out
}

/// Single-pass sums for the correlation of every pixel (both panes) with a
/// reference signal. All sums are f64; for integer-valued frames they are
/// exact, so merging is order-independent bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub width: usize,
    pub height: usize,
    pub n: u64,
    /// Per pixel, Stokes pane first, then anti-Stokes.
    pub sum_i: Vec<f64>,
    pub sum_i2: Vec<f64>,
    pub sum_i_ref: Vec<f64>,
    pub sum_ref: f64,
    pub sum_ref2: f64,
    pub reference: Reference,
    pub ref_angle: Angle2D,
    ref_idx: Vec<usize>,
}

impl MomentAccumulator {
    pub fn new(camera: &Camera, reference: Reference) -> Result<Self, AnalysisError> {
        let n = camera.pixels();
        let pixels = reference.pixels(camera);
        if pixels.is_empty() {
            return Err(AnalysisError::InvalidArgument(
                "reference covers no pixels".into(),
            ));
        }
        let base = reference.pane().index() * n;
        let ref_idx = pixels
            .iter()
            .map(|&(c, r)| base + r * camera.width + c)
            .collect();
        Ok(Self {
            width: camera.width,
            height: camera.height,
            n: 0,
            sum_i: vec![0.0; 2 * n],
            sum_i2: vec![0.0; 2 * n],
            sum_i_ref: vec![0.0; 2 * n],
            sum_ref: 0.0,
            sum_ref2: 0.0,
            reference,
            ref_angle: reference.angle(camera),
            ref_idx,
        })
    }

    /// Same shape and reference, no data.
    pub fn empty_like(&self) -> Self {
        let len = self.sum_i.len();
        Self {
            n: 0,
            sum_i: vec![0.0; len],
            sum_i2: vec![0.0; len],
            sum_i_ref: vec![0.0; len],
            sum_ref: 0.0,
            sum_ref2: 0.0,
            ..self.clone()
        }
    }

    fn value(&self, frame: &Frame, idx: usize) -> f64 {
        let n = self.width * self.height;
        if idx < n {
            frame.stokes[idx] as f64
        } else {
            frame.anti_stokes[idx - n] as f64
        }
    }

    pub fn reference_value(&self, frame: &Frame) -> f64 {
        self.ref_idx.iter().map(|&i| self.value(frame, i)).sum()
    }

    pub fn accumulate(&mut self, frame: &Frame) -> Result<(), AnalysisError> {
        if frame.width != self.width || frame.height != self.height {
            return Err(AnalysisError::ShapeMismatch {
                expected: (self.width, self.height),
                found: (frame.width, frame.height),
            });
        }
        let r = self.reference_value(frame);
        let n = self.width * self.height;
        for (p, pane) in [&frame.stokes, &frame.anti_stokes].into_iter().enumerate() {
            let off = p * n;
            let s = &mut self.sum_i[off..off + n];
            let s2 = &mut self.sum_i2[off..off + n];
            let sr = &mut self.sum_i_ref[off..off + n];
            for (k, &v) in pane.iter().enumerate() {
                let v = v as f64;
                s[k] += v;
                s2[k] += v * v;
                sr[k] += v * r;
            }
        }
        self.sum_ref += r;
        self.sum_ref2 += r * r;
        self.n += 1;
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), AnalysisError> {
        if other.width != self.width || other.height != self.height {
            return Err(AnalysisError::ShapeMismatch {
                expected: (self.width, self.height),
                found: (other.width, other.height),
            });
        }
        if other.ref_idx != self.ref_idx {
            return Err(AnalysisError::InvalidArgument(
                "accumulators use different references".into(),
            ));
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), AnalysisError> {
        self.check_compatible(other)?;
        for (a, b) in self.sum_i.iter_mut().zip(&other.sum_i) {
            *a += b;
        }
        for (a, b) in self.sum_i2.iter_mut().zip(&other.sum_i2) {
            *a += b;
        }
        for (a, b) in self.sum_i_ref.iter_mut().zip(&other.sum_i_ref) {
            *a += b;
        }
        self.sum_ref += other.sum_ref;
        self.sum_ref2 += other.sum_ref2;
        self.n += other.n;
        Ok(())
    }

    /// Removes a previously merged part; exact for integer-valued frames.
    pub fn subtract(&mut self, part: &Self) -> Result<(), AnalysisError> {
        self.check_compatible(part)?;
        if part.n > self.n {
            return Err(AnalysisError::InvalidArgument(
                "cannot remove more frames than accumulated".into(),
            ));
        }
        for (a, b) in self.sum_i.iter_mut().zip(&part.sum_i) {
            *a -= b;
        }
        for (a, b) in self.sum_i2.iter_mut().zip(&part.sum_i2) {
            *a -= b;
        }
        for (a, b) in self.sum_i_ref.iter_mut().zip(&part.sum_i_ref) {
            *a -= b;
        }
        self.sum_ref -= part.sum_ref;
        self.sum_ref2 -= part.sum_ref2;
        self.n -= part.n;
        Ok(())
    }

    fn flat_index(&self, pane: Pane, col: usize, row: usize) -> usize {
        pane.index() * self.width * self.height + row * self.width + col
    }

    fn corr_flat(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let cov = n * self.sum_i_ref[k] - self.sum_i[k] * self.sum_ref;
        let vx = n * self.sum_i2[k] - self.sum_i[k] * self.sum_i[k];
        let vr = n * self.sum_ref2 - self.sum_ref * self.sum_ref;
        if vx > 0.0 && vr > 0.0 {
            cov / (vx * vr).sqrt()
        } else {
            f64::NAN
        }
    }

    /// Correlation at one pixel; NaN when undefined.
    pub fn correlation_at(&self, pane: Pane, col: usize, row: usize) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.corr_flat(self.flat_index(pane, col, row))
    }
}

/// Fills one accumulator per rayon worker and merges them.
pub fn accumulate_frames(
    proto: &MomentAccumulator,
    frames: &[Frame],
) -> Result<MomentAccumulator, AnalysisError> {
    let empty = proto.empty_like();
    let acc = frames
        .par_chunks(64)
        .map(|chunk| {
            let mut a = empty.clone();
            for f in chunk {
                a.accumulate(f)?;
            }
            Ok(a)
        })
        .try_reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )?;
    let mut out = proto.clone();
    out.merge(&acc)?;
    Ok(out)
}

/// Estimate with a delete-one-batch jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jackknife {
    pub estimate: f64,
    pub std_error: f64,
    pub batches: usize,
}

/// `stat` on the merge of all batches, with the spread of the
/// leave-one-batch-out values as the error estimate.
pub fn jackknife<F>(batches: &[MomentAccumulator], stat: F) -> Result<Jackknife, AnalysisError>
where
    F: Fn(&MomentAccumulator) -> f64,
{
    let b = batches.len();
    if b < 2 {
        return Err(AnalysisError::InsufficientData {
            needed: 2,
            found: b as u64,
        });
    }
    let mut total = batches[0].clone();
    for part in &batches[1..] {
        total.merge(part)?;
    }
    let estimate = stat(&total);
    let loo: Vec<f64> = batches
        .iter()
        .map(|part| {
            let mut t = total.clone();
            t.subtract(part)?;
            Ok(stat(&t))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let mean = loo.iter().sum::<f64>() / b as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (b as f64 - 1.0) / b as f64;
    Ok(Jackknife {
        estimate,
        std_error: var.sqrt(),
        batches: b,
    })
}

/// Plain Pearson coefficient of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        f64::NAN
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> Camera {
        Camera {
            width: w,
            height: h,
            pixel_pitch: 9e-6,
            f3: 0.5,
        }
    }

    fn frame_from(stokes: Vec<f32>, anti: Vec<f32>, w: usize, h: usize) -> Frame {
        let mut f = Frame::zeros(w, h, 0);
        f.stokes = stokes;
        f.anti_stokes = anti;
        f
    }

    #[test]
    fn hand_stack_is_perfectly_correlated() {
        // 2 pixels per pane; reference is Stokes pixel 0
        let c = cam(2, 1);
        let reference = Reference::Pixel {
            pane: Pane::Stokes,
            col: 0,
            row: 0,
        };
        let mut acc = MomentAccumulator::new(&c, reference).unwrap();
        for (a, b) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)] {
            acc.accumulate(&frame_from(vec![a, 5.0], vec![b, 7.0 - a], 2, 1))
                .unwrap();
        }
        assert_eq!(acc.n, 3);
        assert!((acc.correlation_at(Pane::Stokes, 0, 0) - 1.0).abs() < 1e-15);
        assert!((acc.correlation_at(Pane::AntiStokes, 0, 0) - 1.0).abs() < 1e-15);
        assert!((acc.correlation_at(Pane::AntiStokes, 1, 0) + 1.0).abs() < 1e-15);
        assert!(acc.correlation_at(Pane::Stokes, 1, 0).is_nan());
    }

    #[test]
    fn one_frame_is_undefined() {
        let c = cam(2, 1);
        let mut acc = MomentAccumulator::new(
            &c,
            Reference::Pixel {
                pane: Pane::Stokes,
                col: 0,
                row: 0,
            },
        )
        .unwrap();
        acc.accumulate(&frame_from(vec![1.0, 2.0], vec![3.0, 4.0], 2, 1))
            .unwrap();
        assert!(acc.correlation_at(Pane::Stokes, 0, 0).is_nan());
    }

    #[test]
    fn disc_reference_sums_pixels() {
        let c = cam(4, 4);
        let centre = c.pixel_centre(1, 1);
        let reference = Reference::Disc {
            pane: Pane::AntiStokes,
            centre,
            radius: 19.0,
        };
        assert_eq!(reference.pixels(&c).len(), 5);
        let acc = MomentAccumulator::new(&c, reference).unwrap();
        let mut f = Frame::zeros(4, 4, 0);
        f.anti_stokes
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = i as f32);
        // pixels 1, 4, 5, 6, 9
        assert_eq!(acc.reference_value(&f), 25.0);
        let empty = Reference::Disc {
            pane: Pane::Stokes,
            centre,
            radius: 0.0,
        };
        assert!(MomentAccumulator::new(&c, empty).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut acc = MomentAccumulator::new(
            &cam(2, 2),
            Reference::Pixel {
                pane: Pane::Stokes,
                col: 0,
                row: 0,
            },
        )
        .unwrap();
        assert!(matches!(
            acc.accumulate(&Frame::zeros(3, 2, 0)),
            Err(AnalysisError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn subtract_undoes_merge() {
        let c = cam(2, 1);
        let r = Reference::Pixel {
            pane: Pane::Stokes,
            col: 1,
            row: 0,
        };
        let mut a = MomentAccumulator::new(&c, r).unwrap();
        let mut b = a.clone();
        a.accumulate(&frame_from(vec![1.0, 2.0], vec![3.0, 4.0], 2, 1))
            .unwrap();
        b.accumulate(&frame_from(vec![5.0, 1.0], vec![0.0, 9.0], 2, 1))
            .unwrap();
        let orig = a.clone();
        a.merge(&b).unwrap();
        a.subtract(&b).unwrap();
        assert_eq!(a, orig);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }
}

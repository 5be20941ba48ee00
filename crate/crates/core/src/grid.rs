//! Lattice types shared by every other module: grayscale images, binary
//! labelings and per-pixel label costs.

use crate::error::{Error, Result};

/// Grayscale image with intensities normalized to `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    intensity: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, intensity: Vec<f64>) -> Result<Self> {
        check_dims(width, height, intensity.len())?;
        if let Some(v) = intensity.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            intensity,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut intensity = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                intensity.push(f(x, y));
            }
        }
        Self::new(width, height, intensity)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensity
    }

    pub fn get(&self, x: usize, y: usize) -> Result<f64> {
        index(self.width, self.height, x as i64, y as i64).map(|i| self.intensity[i])
    }

    /// Nearest-neighbor upscaling: every source pixel becomes a
    /// `factor x factor` block.
    pub fn upscale(&self, factor: usize) -> Result<ImageGrid> {
        if factor < 1 {
            return Err(Error::InvalidArgument(format!(
                "upscale factor must be >= 1, got {factor}"
            )));
        }
        let (w, h) = (self.width * factor, self.height * factor);
        let mut intensity = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = (y / factor) * self.width;
            for x in 0..w {
                intensity.push(self.intensity[row + x / factor]);
            }
        }
        Ok(ImageGrid {
            width: w,
            height: h,
            intensity,
        })
    }
}

/// Binary labeling `x_p` over a `width x height` lattice. Label 1 marks the
/// segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridLabeling {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl GridLabeling {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0)
    }

    pub fn ones(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 1)
    }

    fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        check_dims(width, height, width * height)?;
        Ok(Self {
            width,
            height,
            labels: vec![value; width * height],
        })
    }

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        if let Some(v) = labels.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("label {v} is not binary")));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, labels)
    }

    /// Rasterized disk: a pixel is inside iff its center lies within
    /// distance `radius` of `(cx, cy)`. Pixel `(x, y)` has its center at
    /// `(x, y)` in these coordinates.
    pub fn disk(width: usize, height: usize, cx: f64, cy: f64, radius: f64) -> Result<Self> {
        let r2 = radius * radius;
        Self::from_fn(width, height, |x, y| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            dx * dx + dy * dy <= r2
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: i64, y: i64) -> Result<u8> {
        index(self.width, self.height, x, y).map(|i| self.labels[i])
    }

    pub fn set(&mut self, x: i64, y: i64, value: bool) -> Result<()> {
        let i = index(self.width, self.height, x, y)?;
        self.labels[i] = value as u8;
        Ok(())
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> GridLabeling {
        GridLabeling {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|v| 1 - v).collect(),
        }
    }

    pub fn hamming(&self, other: &GridLabeling) -> Result<usize> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(self
            .labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count())
    }
}

/// Per-pixel label costs `D(0, I_p)` and `D(1, I_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    width: usize,
    height: usize,
    cost0: Vec<f64>,
    cost1: Vec<f64>,
}

impl UnaryField {
    pub fn new(width: usize, height: usize, cost0: Vec<f64>, cost1: Vec<f64>) -> Result<Self> {
        check_dims(width, height, cost0.len())?;
        check_dims(width, height, cost1.len())?;
        if cost0.iter().chain(&cost1).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("unary costs must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            cost0,
            cost1,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cost0(&self) -> &[f64] {
        &self.cost0
    }

    pub fn cost1(&self) -> &[f64] {
        &self.cost1
    }

    /// Total data cost `sum_p D(x_p, I_p)` of a labeling.
    pub fn evaluate(&self, labeling: &GridLabeling) -> Result<f64> {
        ensure_same_dims(self.dims(), labeling.dims())?;
        Ok(labeling
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &x)| if x == 1 { self.cost1[i] } else { self.cost0[i] })
            .sum())
    }

    /// Per-pixel argmin labeling; ties go to label 0.
    pub fn argmin(&self) -> GridLabeling {
        GridLabeling {
            width: self.width,
            height: self.height,
            labels: self
                .cost0
                .iter()
                .zip(&self.cost1)
                .map(|(c0, c1)| (c1 < c0) as u8)
                .collect(),
        }
    }

    /// Equalizes costs to 1 for both labels on every masked pixel.
    pub fn apply_inpainting_mask(&self, mask: &GridLabeling) -> Result<UnaryField> {
        ensure_same_dims(self.dims(), mask.dims())?;
        let mut out = self.clone();
        for (i, &m) in mask.labels().iter().enumerate() {
            if m == 1 {
                out.cost0[i] = 1.0;
                out.cost1[i] = 1.0;
            }
        }
        Ok(out)
    }
}

/// Negative-log Gaussian data term with the label-independent normalization
/// dropped: `cost_l(p) = (I_p - mean_l)^2 / (2 variance)`.
pub fn gaussian_data_term(
    img: &ImageGrid,
    mean_fg: f64,
    mean_bg: f64,
    variance: f64,
) -> Result<UnaryField> {
    if variance <= 0.0 || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "variance must be positive, got {variance}"
        )));
    }
    if !mean_fg.is_finite() || !mean_bg.is_finite() {
        return Err(Error::InvalidArgument("means must be finite".into()));
    }
    let denom = 2.0 * variance;
    let cost = |mean: f64| -> Vec<f64> {
        img.intensities()
            .iter()
            .map(|v| (v - mean) * (v - mean) / denom)
            .collect()
    };
    UnaryField::new(img.width(), img.height(), cost(mean_bg), cost(mean_fg))
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} grid needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn index(width: usize, height: usize, x: i64, y: i64) -> Result<usize> {
    if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
        return Err(Error::OutOfBounds {
            x,
            y,
            width,
            height,
        });
    }
    Ok(y as usize * width + x as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_examples() {
        let img = ImageGrid::new(2, 1, vec![0.0, 1.0]).unwrap();
        let f = gaussian_data_term(&img, 0.0, 0.6, 0.4).unwrap();
        assert_eq!(f.cost1()[0], 0.0);
        assert!((f.cost0()[0] - 0.45).abs() < 1e-15);

        let f = gaussian_data_term(&img, 0.0, 1.0, 0.4).unwrap();
        assert!((f.cost1()[1] - 1.25).abs() < 1e-15);
        assert_eq!(f.cost0()[1], 0.0);

        let f = gaussian_data_term(&img, 0.3, 0.3, 0.4).unwrap();
        assert_eq!(f.cost0(), f.cost1());
    }

    #[test]
    fn gaussian_rejects_bad_variance() {
        let img = ImageGrid::constant(2, 2, 0.5).unwrap();
        assert!(gaussian_data_term(&img, 0.0, 1.0, 0.0).is_err());
        assert!(gaussian_data_term(&img, 0.0, 1.0, -1.0).is_err());
        assert!(gaussian_data_term(&img, 0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn mask_cases() {
        let img = ImageGrid::from_fn(3, 3, |x, y| ((x + y) % 2) as f64).unwrap();
        let field = gaussian_data_term(&img, 0.0, 1.0, 0.4).unwrap();

        let empty = GridLabeling::zeros(3, 3).unwrap();
        assert_eq!(field.apply_inpainting_mask(&empty).unwrap(), field);

        let full = GridLabeling::ones(3, 3).unwrap();
        let masked = field.apply_inpainting_mask(&full).unwrap();
        assert!(masked
            .cost0()
            .iter()
            .chain(masked.cost1())
            .all(|&c| c == 1.0));

        let mut one = GridLabeling::zeros(3, 3).unwrap();
        one.set(1, 2, true).unwrap();
        let masked = field.apply_inpainting_mask(&one).unwrap();
        for i in 0..9 {
            if i == 7 {
                assert_eq!((masked.cost0()[i], masked.cost1()[i]), (1.0, 1.0));
            } else {
                assert_eq!(masked.cost0()[i].to_bits(), field.cost0()[i].to_bits());
                assert_eq!(masked.cost1()[i].to_bits(), field.cost1()[i].to_bits());
            }
        }

        let wrong = GridLabeling::zeros(2, 3).unwrap();
        assert!(matches!(
            field.apply_inpainting_mask(&wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn upscale_cases() {
        let img = ImageGrid::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        assert_eq!(img.upscale(1).unwrap(), img);
        assert!(img.upscale(0).is_err());

        let up = img.upscale(3).unwrap();
        assert_eq!(up.dims(), (6, 6));
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(up.get(x, y).unwrap(), img.get(x / 3, y / 3).unwrap());
            }
        }

        let c = ImageGrid::constant(3, 2, 0.7).unwrap().upscale(4).unwrap();
        assert_eq!(c.dims(), (12, 8));
        assert!(c.intensities().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let l = GridLabeling::zeros(3, 2).unwrap();
        assert!(l.get(2, 1).is_ok());
        assert!(matches!(l.get(3, 0), Err(Error::OutOfBounds { .. })));
        assert!(matches!(l.get(0, -1), Err(Error::OutOfBounds { .. })));
        assert!(ImageGrid::constant(0, 3, 0.0).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0, 1.5, 0.0, 0.0]).is_err());
        assert!(GridLabeling::new(1, 2, vec![0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn upscale_then_subsample_round_trips(
            w in 1usize..6, h in 1usize..6, f in 1usize..5,
            seed in proptest::collection::vec(0.0f64..=1.0, 36)
        ) {
            let img = ImageGrid::from_fn(w, h, |x, y| seed[y * 6 + x]).unwrap();
            let up = img.upscale(f).unwrap();
            let back = ImageGrid::from_fn(w, h, |x, y| up.get(x * f, y * f).unwrap()).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn cost1_monotone_in_distance(a in 0.0f64..=1.0, b in 0.0f64..=1.0, fg in 0.0f64..=1.0) {
            let img = ImageGrid::new(2, 1, vec![a, b]).unwrap();
            let f = gaussian_data_term(&img, fg, 0.5, 0.4).unwrap();
            if (a - fg).abs() <= (b - fg).abs() {
                prop_assert!(f.cost1()[0] <= f.cost1()[1]);
            }
        }

        #[test]
        fn mask_is_idempotent(bits in proptest::collection::vec(0u8..2, 16), vals in proptest::collection::vec(0.0f64..=1.0, 16)) {
            let img = ImageGrid::new(4, 4, vals).unwrap();
            let field = gaussian_data_term(&img, 0.0, 0.6, 0.4).unwrap();
            let mask = GridLabeling::new(4, 4, bits).unwrap();
            let once = field.apply_inpainting_mask(&mask).unwrap();
            let twice = once.apply_inpainting_mask(&mask).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}

//! Small numerical helpers: compensated summation, norms, fitting.

/// Neumaier-compensated accumulator. Summation order is fixed by the caller,
/// so results are reproducible run to run.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Euclidean norm of a short vector, scaled so that tiny components do not underflow.
#[inline]
pub fn euclidean_norm(components: &[f64]) -> f64 {
    match components.len() {
        0 => 0.0,
        1 => components[0].abs(),
        2 => components[0].hypot(components[1]),
        _ => {
            let scale = components.iter().fold(0.0_f64, |acc, &c| acc.max(c.abs()));
            if scale == 0.0 || !scale.is_finite() {
                return scale;
            }
            let s: f64 = components.iter().map(|&c| (c / scale) * (c / scale)).sum();
            scale * s.sqrt()
        }
    }
}

/// `x^p` with fast paths for the exponents that dominate the runs (m = 2, 3).
#[inline]
pub fn pow_fast(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else if p == 0.5 {
        x.sqrt()
    } else if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

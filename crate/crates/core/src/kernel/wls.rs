use crate::error::{Error, Result};

/// One observation for a weighted fit: centered score, outcome, kernel weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

impl WeightedPoint {
    pub fn new(x: f64, y: f64, w: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "weighted point coordinates must be finite, got ({x}, {y})"
            )));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "weights must be finite and nonnegative, got {w}"
            )));
        }
        Ok(Self { x, y, w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Kish effective sample size, (Σw)² / Σw².
    pub effective_n: f64,
    /// Set when every positively weighted point shares one x; the intercept
    /// is then the weighted mean of y and the slope is 0.
    pub degenerate: bool,
}

/// Weighted least squares for `y = intercept + slope * x`.
///
/// Uses centered sums, so the result is unchanged (to rounding) by a uniform
/// rescaling of the weights.
pub fn weighted_linear_fit(points: &[WeightedPoint]) -> Result<LinearFit> {
    let mut sw = 0.0;
    let mut sw2 = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut first_x = None;
    let mut distinct_x = false;
    for p in points.iter().filter(|p| p.w > 0.0) {
        sw += p.w;
        sw2 += p.w * p.w;
        swx += p.w * p.x;
        swy += p.w * p.y;
        match first_x {
            None => first_x = Some(p.x),
            Some(x0) if x0 != p.x => distinct_x = true,
            _ => {}
        }
    }
    if sw <= 0.0 {
        return Err(Error::EmptyFit);
    }
    let effective_n = sw * sw / sw2;
    let x_mean = swx / sw;
    let y_mean = swy / sw;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for p in points.iter().filter(|p| p.w > 0.0) {
        let dx = p.x - x_mean;
        sxx += p.w * dx * dx;
        sxy += p.w * dx * (p.y - y_mean);
    }
    if !distinct_x || sxx <= 0.0 {
        return Ok(LinearFit {
            intercept: y_mean,
            slope: 0.0,
            effective_n,
            degenerate: true,
        });
    }
    let slope = sxy / sxx;
    Ok(LinearFit {
        intercept: y_mean - slope * x_mean,
        slope,
        effective_n,
        degenerate: false,
    })
}

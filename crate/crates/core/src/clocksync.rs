//! Sensor-to-host clock mapping from one-way arrival timestamps.
//!
//! Every message carries a regular sensor time and a jittered host arrival
//! time. Transmission delay is nonnegative, so the true mapping lies on or
//! below every observed `(sensor, host)` point. The fit keeps the lower
//! convex hull of those points and picks the hull edge that minimizes the
//! total vertical excess `Σ (host − a·sensor − b)`; this is the optimum of
//! the corresponding two-variable linear program.
//!
//! Internally all coordinates are taken relative to the first pair, so
//! absolute Unix times do not cost precision.

use crate::error::{invalid, Error, Result};
use crate::geometry::Timestamp;

/// Skew magnitude beyond which a device clock is considered suspicious.
pub const SKEW_WARN_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimestampPair {
    /// Sensor clock.
    pub sensor_time: Timestamp,
    /// Host clock, at message arrival.
    pub host_time: Timestamp,
}

impl TimestampPair {
    pub fn new(sensor_secs: f64, host_secs: f64) -> Self {
        TimestampPair {
            sensor_time: Timestamp::from_secs(sensor_secs),
            host_time: Timestamp::from_secs(host_secs),
        }
    }
}

/// Linear sensor→host mapping `host ≈ skew·sensor + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    skew: f64,
    /// Anchor pair; the line is `host = anchor_host + intercept + skew·(sensor − anchor_sensor)`.
    anchor_sensor: f64,
    anchor_host: f64,
    intercept: f64,
    support_count: usize,
    mean_excess: f64,
}

impl ClockModel {
    /// Host seconds per sensor second.
    pub fn skew(&self) -> f64 {
        self.skew
    }

    /// `b` in `host = a·sensor + b`.
    pub fn offset(&self) -> f64 {
        self.anchor_host + self.intercept - self.skew * self.anchor_sensor
    }

    /// Number of input points lying on the chosen line.
    pub fn support_count(&self) -> usize {
        self.support_count
    }

    /// Mean of `host − lower_bound(sensor)` over the fitted pairs.
    pub fn mean_excess(&self) -> f64 {
        self.mean_excess
    }

    /// Lower bound on the host arrival time of a message stamped `sensor`.
    pub fn lower_bound(&self, sensor: Timestamp) -> Timestamp {
        Timestamp::from_secs(
            self.anchor_host + self.intercept + self.skew * (sensor.secs() - self.anchor_sensor),
        )
    }

    /// Jitter-free host time: lower bound plus the mean excess.
    pub fn smoothed(&self, sensor: Timestamp) -> Timestamp {
        self.lower_bound(sensor) + self.mean_excess
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if (self.skew - 1.0).abs() >= SKEW_WARN_LIMIT {
            out.push(format!(
                "clock skew {:.9} deviates from 1 by more than {SKEW_WARN_LIMIT}",
                self.skew
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct HullVertex {
    x: f64,
    y: f64,
    /// Input points strictly inside the edge ending at this vertex.
    interior: usize,
}

/// Incremental lower-hull clock fitter. Feed pairs in sensor-time order.
#[derive(Debug, Clone)]
pub struct CausalClockFitter {
    warmup: usize,
    origin: Option<(f64, f64)>,
    hull: Vec<HullVertex>,
    count: usize,
    sum_x: f64,
    sum_y: f64,
    last_sensor: f64,
}

impl CausalClockFitter {
    pub fn new(warmup: usize) -> Result<Self> {
        if warmup < 2 {
            return Err(invalid(format!("warmup must be at least 2, got {warmup}")));
        }
        Ok(CausalClockFitter {
            warmup,
            origin: None,
            hull: Vec::new(),
            count: 0,
            sum_x: 0.0,
            sum_y: 0.0,
            last_sensor: f64::NEG_INFINITY,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn hull_len(&self) -> usize {
        self.hull.len()
    }

    /// Adds a pair and returns the model to use for it.
    pub fn push(&mut self, pair: TimestampPair) -> Result<ClockModel> {
        self.insert(pair)?;
        Ok(if self.count < self.warmup {
            self.identity_model()
        } else {
            self.best_model()
        })
    }

    fn insert(&mut self, pair: TimestampPair) -> Result<()> {
        let (s, h) = (pair.sensor_time.secs(), pair.host_time.secs());
        if !s.is_finite() || !h.is_finite() {
            return Err(invalid(format!("non-finite timestamp pair ({s}, {h})")));
        }
        if s <= self.last_sensor {
            return Err(Error::Ordering {
                what: "sensor times",
                index: self.count,
            });
        }
        self.last_sensor = s;
        let (s0, h0) = *self.origin.get_or_insert((s, h));
        let (x, y) = (s - s0, h - h0);
        self.count += 1;
        self.sum_x += x;
        self.sum_y += y;

        let mut carry = 0;
        while self.hull.len() >= 2 {
            let a = self.hull[self.hull.len() - 2];
            let b = self.hull[self.hull.len() - 1];
            let (dx1, dy1) = (b.x - a.x, b.y - a.y);
            let (dx2, dy2) = (x - a.x, y - a.y);
            let cross = dx1 * dy2 - dy1 * dx2;
            let tol = 1e-12 * (dx1.abs() * dy2.abs() + dy1.abs() * dx2.abs());
            if cross > tol {
                break;
            }
            carry = if cross.abs() <= tol {
                carry + b.interior + 1
            } else {
                0
            };
            self.hull.pop();
        }
        self.hull.push(HullVertex {
            x,
            y,
            interior: carry,
        });
        Ok(())
    }

    fn identity_model(&self) -> ClockModel {
        let (s0, h0) = self.origin.unwrap_or((0.0, 0.0));
        let n = self.count.max(1) as f64;
        ClockModel {
            skew: 1.0,
            anchor_sensor: s0,
            anchor_host: h0,
            intercept: 0.0,
            support_count: 1,
            mean_excess: (self.sum_y - self.sum_x) / n,
        }
    }

    /// Best hull edge under the total-excess objective.
    pub fn best_model(&self) -> ClockModel {
        let (s0, h0) = self.origin.unwrap_or((0.0, 0.0));
        if self.hull.len() < 2 {
            return self.identity_model();
        }
        let n = self.count as f64;
        let mut best: Option<(f64, usize, f64, f64)> = None; // (objective, support, a, c)
        for w in self.hull.windows(2) {
            let (p, q) = (w[0], w[1]);
            let a = (q.y - p.y) / (q.x - p.x);
            let c = p.y - a * p.x;
            let objective = self.sum_y - a * self.sum_x - n * c;
            let support = q.interior + 2;
            let better = match best {
                None => true,
                Some((bo, bs, ba, _)) => {
                    let tol = 1e-12 * bo.abs().max(objective.abs()).max(1e-9);
                    if (objective - bo).abs() > tol {
                        objective < bo
                    } else if support != bs {
                        support > bs
                    } else {
                        (a - 1.0).abs() < (ba - 1.0).abs()
                    }
                }
            };
            if better {
                best = Some((objective, support, a, c));
            }
        }
        let (objective, support_count, skew, intercept) = best.expect("hull has an edge");
        ClockModel {
            skew,
            anchor_sensor: s0,
            anchor_host: h0,
            intercept,
            support_count,
            mean_excess: (objective / n).max(0.0),
        }
    }
}

/// Fits the lower-bound clock line to all pairs at once.
pub fn fit_clock_batch(pairs: &[TimestampPair]) -> Result<ClockModel> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            what: "clock fit",
            needed: 2,
            got: pairs.len(),
        });
    }
    let mut fitter = CausalClockFitter::new(2)?;
    for p in pairs {
        fitter.insert(*p)?;
    }
    Ok(fitter.best_model())
}

/// Streaming fit: yields each pair with the model available at its arrival.
/// Past emissions are never revised.
pub fn fit_clock_causal<I>(pairs: I, warmup: usize) -> Result<CausalFit<I::IntoIter>>
where
    I: IntoIterator<Item = TimestampPair>,
{
    Ok(CausalFit {
        inner: pairs.into_iter(),
        fitter: CausalClockFitter::new(warmup)?,
        failed: false,
    })
}

pub struct CausalFit<I> {
    inner: I,
    fitter: CausalClockFitter,
    failed: bool,
}

impl<I: Iterator<Item = TimestampPair>> Iterator for CausalFit<I> {
    type Item = Result<(TimestampPair, ClockModel)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let pair = self.inner.next()?;
        match self.fitter.push(pair) {
            Ok(m) => Some(Ok((pair, m))),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Regularized host timestamps `a·sensor + b + mean_excess`.
pub fn smooth_timestamps(pairs: &[TimestampPair], model: &ClockModel) -> Vec<Timestamp> {
    pairs.iter().map(|p| model.smoothed(p.sensor_time)).collect()
}

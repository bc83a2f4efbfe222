//! Lattice field simulation: truncated moving averages, GARCH(1,1)
//! volatility and the product field `X = Y * Z`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticeBox, Site};
use crate::rng::StreamKey;
use crate::tailmodels::{TailModel, VolModelY};

/// Moving-average coefficients `psi_u` on a finite support inside `[-t, t]^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelPsi {
    dim: usize,
    coefficients: Vec<(Site, f64)>,
    radius: i64,
}

impl KernelPsi {
    pub fn new(dim: usize, coefficients: Vec<(Site, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("kernel.dim", "must be at least 1"));
        }
        let mut coefficients: Vec<(Site, f64)> = coefficients;
        for (u, c) in &coefficients {
            if u.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: u.len(),
                });
            }
            if !c.is_finite() {
                return Err(invalid("kernel", format!("coefficient at {u:?} is not finite")));
            }
        }
        coefficients.sort_by(|a, b| a.0.cmp(&b.0));
        if coefficients.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("kernel", "duplicate offsets"));
        }
        coefficients.retain(|(_, c)| *c != 0.0);
        if coefficients.is_empty() {
            return Err(invalid("kernel", "at least one coefficient must be nonzero"));
        }
        let radius = coefficients
            .iter()
            .flat_map(|(u, _)| u.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0);
        Ok(KernelPsi {
            dim,
            coefficients,
            radius,
        })
    }

    /// `psi = delta_0`.
    pub fn identity(dim: usize) -> Self {
        KernelPsi {
            dim,
            coefficients: vec![(vec![0; dim], 1.0)],
            radius: 0,
        }
    }

    /// One-dimensional kernel with `psi_j = values[j]` for `j = 0, 1, ...`.
    pub fn causal_1d(values: &[f64]) -> Result<Self> {
        KernelPsi::new(
            1,
            values
                .iter()
                .enumerate()
                .map(|(j, &c)| (vec![j as i64], c))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Truncation radius `t`: the support lies in `[-t, t]^d`.
    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Nonzero coefficients in lexicographic offset order.
    pub fn coefficients(&self) -> &[(Site, f64)] {
        &self.coefficients
    }

    pub fn coefficient(&self, offset: &[i64]) -> f64 {
        self.coefficients
            .binary_search_by(|(u, _)| u.as_slice().cmp(offset))
            .map(|i| self.coefficients[i].1)
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        KernelPsi::new(
            self.dim,
            self.coefficients
                .iter()
                .map(|(u, c)| (u.clone(), c * factor))
                .collect(),
        )
    }
}

/// GARCH(1,1) volatility `Z_v^2 = alpha0 + Z_{v-1}^2 (alpha1 xi_{v-1}^2 + beta1)`
/// with standard Gaussian innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GarchParams {
    alpha0: f64,
    alpha1: f64,
    beta1: f64,
}

impl GarchParams {
    pub fn new(alpha0: f64, alpha1: f64, beta1: f64) -> Result<Self> {
        for (name, v) in [("alpha0", alpha0), ("alpha1", alpha1), ("beta1", beta1)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if alpha1 + beta1 >= 1.0 {
            return Err(invalid(
                "alpha1",
                format!("alpha1 + beta1 = {} must be below 1", alpha1 + beta1),
            ));
        }
        Ok(GarchParams {
            alpha0,
            alpha1,
            beta1,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// `E Z^2 = alpha0 / (1 - alpha1 - beta1)`.
    pub fn stationary_mean_sq(&self) -> f64 {
        self.alpha0 / (1.0 - self.alpha1 - self.beta1)
    }

    /// `A = alpha1 xi^2 + beta1`.
    #[inline]
    pub fn multiplier(&self, xi: f64) -> f64 {
        self.alpha1 * xi * xi + self.beta1
    }
}

/// Default number of discarded GARCH steps.
pub const DEFAULT_BURN_IN: usize = 10_000;

/// What generated a [`FieldSample`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum FieldSource {
    Noise(TailModel),
    MovingAverage { kernel: KernelPsi, tail: TailModel },
    Garch { params: GarchParams, burn_in: usize },
    Multiplier(VolModelY),
    Product { y: Box<FieldMeta>, z: Box<FieldMeta> },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldMeta {
    pub source: FieldSource,
    /// Raw stream key; together with `source` it regenerates the sample.
    pub key: u64,
    pub regime: Option<f64>,
}

/// Field values on a lattice window, row-major in lexicographic site order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    window: LatticeBox,
    values: Vec<f64>,
    meta: FieldMeta,
}

impl FieldSample {
    pub(crate) fn new(window: LatticeBox, values: Vec<f64>, meta: FieldMeta) -> Self {
        debug_assert_eq!(window.len(), values.len());
        FieldSample {
            window,
            values,
            meta,
        }
    }

    /// A field built from explicit values.
    pub fn from_values(window: LatticeBox, values: Vec<f64>) -> Result<Self> {
        if window.len() != values.len() {
            return Err(Error::WindowMismatch(format!(
                "{} values for a window of {} sites",
                values.len(),
                window.len()
            )));
        }
        Ok(FieldSample::new(
            window,
            values,
            FieldMeta {
                source: FieldSource::External,
                key: 0,
                regime: None,
            },
        ))
    }

    pub fn window(&self) -> &LatticeBox {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn get(&self, site: &[i64]) -> Option<f64> {
        self.window.index_of(site).map(|i| self.values[i])
    }

    /// Restriction to a sub-window.
    pub fn restrict(&self, sub: &LatticeBox) -> Result<FieldSample> {
        if !self.window.contains_box(sub) {
            return Err(Error::WindowMismatch(format!(
                "{sub:?} is not inside {:?}",
                self.window
            )));
        }
        let values = sub
            .sites()
            .map(|s| self.values[self.window.index_of(&s).expect("inside")])
            .collect();
        Ok(FieldSample::new(sub.clone(), values, self.meta.clone()))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// I.i.d. noise on `window`, keyed per site.
pub fn simulate_noise(tail: &TailModel, window: &LatticeBox, key: StreamKey) -> FieldSample {
    let values = window.sites().map(|s| tail.at_site(key, &s)).collect();
    FieldSample::new(
        window.clone(),
        values,
        FieldMeta {
            source: FieldSource::Noise(*tail),
            key: key.raw(),
            regime: None,
        },
    )
}

/// `Z_v = sum_u psi_u xi_{v-u}` on `window` from a noise field that covers
/// `window` padded by the kernel radius.
pub fn ma_from_noise(kernel: &KernelPsi, noise: &FieldSample, window: &LatticeBox) -> Result<Vec<f64>> {
    if window.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: window.dim(),
        });
    }
    let needed = window.expand_uniform(kernel.radius());
    if !noise.window().contains_box(&needed) {
        return Err(Error::WindowMismatch(format!(
            "noise window {:?} does not cover {:?}",
            noise.window(),
            needed
        )));
    }
    let nw = noise.window();
    let taps: Vec<(isize, f64)> = kernel
        .coefficients()
        .iter()
        .map(|(u, c)| (-nw.linear_offset(u), *c))
        .collect();
    let noise = noise.values();
    // walk the window row by row; the last axis is contiguous in both boxes
    let d = window.dim();
    let row = window.extent(d - 1);
    let mut out = Vec::with_capacity(window.len());
    if row == 0 {
        return Ok(out);
    }
    let mut row_start = window.lo().to_vec();
    let rows = window.len() / row;
    for r in 0..rows {
        if r > 0 {
            // advance the odometer over the leading axes
            let mut l = d - 1;
            while l > 0 {
                l -= 1;
                row_start[l] += 1;
                if row_start[l] < window.hi()[l] {
                    break;
                }
                row_start[l] = window.lo()[l];
            }
        }
        let base = nw.index_of(&row_start).expect("covered") as isize;
        for j in 0..row as isize {
            let p = base + j;
            let mut acc = 0.0;
            for &(off, c) in &taps {
                acc += c * noise[(p + off) as usize];
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// Truncated moving average on `window`; noise is drawn on the window padded
/// by the kernel radius, so every site has full kernel coverage.
pub fn simulate_ma(kernel: &KernelPsi, tail: &TailModel, window: &LatticeBox, key: StreamKey) -> Result<FieldSample> {
    if window.is_empty() {
        return Err(Error::Domain("window must be non-empty".into()));
    }
    let padded = window.expand_uniform(kernel.radius());
    let noise = simulate_noise(tail, &padded, key);
    let values = ma_from_noise(kernel, &noise, window)?;
    Ok(FieldSample::new(
        window.clone(),
        values,
        FieldMeta {
            source: FieldSource::MovingAverage {
                kernel: kernel.clone(),
                tail: *tail,
            },
            key: key.raw(),
            regime: None,
        },
    ))
}

/// Gaussian innovation attached to a time index.
#[inline]
pub fn garch_innovation(key: StreamKey, v: i64) -> f64 {
    StandardNormal.sample(&mut key.site(&[v]))
}

/// Squared volatility on `window` (one-dimensional), started at the
/// stationary mean `burn_in` steps before the window.
pub fn simulate_garch_sq(params: &GarchParams, window: &LatticeBox, burn_in: usize, key: StreamKey) -> Result<Vec<f64>> {
    if window.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: window.dim(),
        });
    }
    if window.is_empty() {
        return Err(Error::Domain("window must be non-empty".into()));
    }
    let (lo, hi) = (window.lo()[0], window.hi()[0]);
    let mut z2 = params.stationary_mean_sq();
    for v in lo - burn_in as i64..lo {
        z2 = params.alpha0 + z2 * params.multiplier(garch_innovation(key, v));
    }
    let mut out = Vec::with_capacity(window.len());
    for v in lo..hi {
        out.push(z2);
        z2 = params.alpha0 + z2 * params.multiplier(garch_innovation(key, v));
    }
    Ok(out)
}

/// Non-negative GARCH volatility `Z_v = sqrt(Z_v^2)` on `[0, length)`.
pub fn simulate_garch(params: &GarchParams, length: usize, burn_in: usize, key: StreamKey) -> Result<FieldSample> {
    simulate_garch_on(params, &LatticeBox::segment(length as i64), burn_in, key)
}

pub fn simulate_garch_on(params: &GarchParams, window: &LatticeBox, burn_in: usize, key: StreamKey) -> Result<FieldSample> {
    let values = simulate_garch_sq(params, window, burn_in, key)?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(FieldSample::new(
        window.clone(),
        values,
        FieldMeta {
            source: FieldSource::Garch {
                params: *params,
                burn_in,
            },
            key: key.raw(),
            regime: None,
        },
    ))
}

/// Pointwise product `X_v = Y_v Z_v`.
pub fn product_field(y: &FieldSample, z: &FieldSample) -> Result<FieldSample> {
    if y.window() != z.window() {
        return Err(Error::WindowMismatch(format!(
            "y on {:?}, z on {:?}",
            y.window(),
            z.window()
        )));
    }
    let values = y.values().iter().zip(z.values()).map(|(a, b)| a * b).collect();
    Ok(FieldSample::new(
        z.window().clone(),
        values,
        FieldMeta {
            source: FieldSource::Product {
                y: Box::new(y.meta().clone()),
                z: Box::new(z.meta().clone()),
            },
            key: z.meta().key,
            regime: y.meta().regime,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{STREAM_NOISE, STREAM_Y};
    use crate::tailmodels::{sample_y_field, YKind};

    fn key(seed: u64) -> StreamKey {
        StreamKey::new(seed, STREAM_NOISE)
    }

    #[test]
    fn identity_kernel_reproduces_the_noise() {
        let tail = TailModel::new(2.0, 0.7).unwrap();
        let w = LatticeBox::new(vec![0, 0], vec![5, 6]).unwrap();
        let z = simulate_ma(&KernelPsi::identity(2), &tail, &w, key(1)).unwrap();
        let xi = simulate_noise(&tail, &w, key(1));
        assert_eq!(z.values(), xi.values());
    }

    #[test]
    fn deterministic_convolution_with_unit_noise() {
        let k = KernelPsi::causal_1d(&[1.0, 0.5]).unwrap();
        let w = LatticeBox::new(vec![3], vec![10]).unwrap();
        let noise = FieldSample::from_values(w.expand_uniform(1), vec![1.0; 9]).unwrap();
        let z = ma_from_noise(&k, &noise, &w).unwrap();
        assert_eq!(z, vec![1.5; 7]);
        let short = FieldSample::from_values(w.clone(), vec![1.0; 7]).unwrap();
        assert!(ma_from_noise(&k, &short, &w).is_err());
    }

    #[test]
    fn convolution_matches_direct_sum_in_two_dimensions() {
        let k = KernelPsi::new(
            2,
            vec![(vec![0, 0], 1.0), (vec![0, 1], 0.5), (vec![-1, 1], -0.25)],
        )
        .unwrap();
        let tail = TailModel::new(1.5, 0.6).unwrap();
        let w = LatticeBox::new(vec![-2, 1], vec![3, 5]).unwrap();
        let z = simulate_ma(&k, &tail, &w, key(4)).unwrap();
        for (i, v) in w.sites().enumerate() {
            let direct: f64 = k
                .coefficients()
                .iter()
                .map(|(u, c)| {
                    let s: Vec<i64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
                    c * tail.at_site(key(4), &s)
                })
                .sum();
            assert!((z.values()[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn subwindow_equals_direct_simulation() {
        let k = KernelPsi::causal_1d(&[1.0, 0.5, 0.25]).unwrap();
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let big = LatticeBox::new(vec![-20], vec![40]).unwrap();
        let sub = LatticeBox::new(vec![5], vec![17]).unwrap();
        let a = simulate_ma(&k, &tail, &big, key(8)).unwrap().restrict(&sub).unwrap();
        let b = simulate_ma(&k, &tail, &sub, key(8)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelPsi::new(1, vec![(vec![0], 0.0)]).is_err());
        assert!(KernelPsi::new(1, vec![(vec![0], 1.0), (vec![0], 2.0)]).is_err());
        assert!(KernelPsi::new(2, vec![(vec![0], 1.0)]).is_err());
        let k = KernelPsi::new(2, vec![(vec![0, 3], 1.0), (vec![-2, 0], 1.0)]).unwrap();
        assert_eq!(k.radius(), 3);
        assert_eq!(k.coefficient(&[0, 3]), 1.0);
        assert_eq!(k.coefficient(&[1, 1]), 0.0);
    }

    #[test]
    fn garch_validation_and_positivity() {
        assert!(GarchParams::new(0.1, 0.5, 0.5).is_err());
        assert!(GarchParams::new(0.0, 0.1, 0.5).is_err());
        let p = GarchParams::new(0.1, 0.14, 0.6).unwrap();
        let z2 = simulate_garch_sq(&p, &LatticeBox::segment(10_000), 100, key(2)).unwrap();
        assert!(z2.iter().all(|&v| v >= p.alpha0()));
        let z = simulate_garch(&p, 100, 0, key(2)).unwrap();
        assert!(z.values().iter().all(|&v| v > 0.0));
        assert!(simulate_garch_sq(&p, &LatticeBox::new(vec![0, 0], vec![2, 2]).unwrap(), 0, key(2)).is_err());
    }

    #[test]
    fn degenerate_garch_is_nearly_constant() {
        let p = GarchParams::new(0.1, 1e-9, 1e-9).unwrap();
        let z = simulate_garch(&p, 100_000, 10, key(3)).unwrap();
        let sq: Vec<f64> = z.values().iter().map(|v| v * v).collect();
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / sq.len() as f64;
        assert!(var < 1e-12, "{var}");
        assert!((z.values()[0] - 0.1f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn product_field_scales_and_checks_windows() {
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let w = LatticeBox::segment(50);
        let z = simulate_ma(&KernelPsi::causal_1d(&[1.0, 0.5]).unwrap(), &tail, &w, key(5)).unwrap();
        let one = sample_y_field(&VolModelY::constant(1.0), &w, StreamKey::new(0, STREAM_Y)).unwrap();
        assert_eq!(product_field(&one, &z).unwrap().values(), z.values());
        let two = sample_y_field(&VolModelY::constant(2.0), &w, StreamKey::new(0, STREAM_Y)).unwrap();
        let x = product_field(&two, &z).unwrap();
        assert!(x.values().iter().zip(z.values()).all(|(a, b)| *a == 2.0 * b));

        let regime = VolModelY::new(
            YKind::Regime {
                scales: vec![2.0],
                probs: vec![1.0],
                base: Box::new(YKind::Constant { s: 1.0 }),
            },
            3.0,
        )
        .unwrap();
        let y = sample_y_field(&regime, &w, StreamKey::new(0, STREAM_Y)).unwrap();
        let x = product_field(&y, &z).unwrap();
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max(x.values()), 2.0 * max(z.values()));
        assert_eq!(x.meta().regime, Some(2.0));

        let other = sample_y_field(&VolModelY::constant(1.0), &LatticeBox::segment(49), StreamKey::new(0, STREAM_Y)).unwrap();
        assert!(matches!(product_field(&other, &z), Err(Error::WindowMismatch(_))));
    }
}

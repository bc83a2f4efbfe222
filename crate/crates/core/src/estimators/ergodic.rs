use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{positive_offsets, IndexSetGeometry};
use crate::lattice::LatticeBox;
use crate::parallel::map_indexed;
use crate::rng::{StreamKey, STREAM_NOISE};
use crate::sim::{simulate_ma, FieldSample, KernelPsi};
use crate::tailmodels::TailModel;
use crate::theory::{ma_spectral_atoms, NormingSequence};

/// Values of a field around a centre site, for local functionals of radius `r`.
pub struct LocalView<'a> {
    field: &'a FieldSample,
    center: &'a [i64],
    radius: i64,
}

impl LocalView<'_> {
    pub fn center(&self) -> &[i64] {
        self.center
    }

    /// Value at `center + offset`; the offset must lie in `[-r, r]^d`.
    pub fn at(&self, offset: &[i64]) -> f64 {
        assert!(
            offset.iter().all(|o| o.abs() <= self.radius),
            "offset outside the declared radius"
        );
        let v: Vec<i64> = self.center.iter().zip(offset).map(|(a, b)| a + b).collect();
        self.field.get(&v).expect("field covers the padded domain")
    }
}

/// `|D_n|^{-1} sum_{v in D_n} h(field around v)` for a functional `h` that
/// reads only offsets within `radius`.
pub fn ergodic_average<F>(field: &FieldSample, geom: &IndexSetGeometry, radius: i64, h: F) -> Result<f64>
where
    F: Fn(&LocalView) -> f64,
{
    if radius < 0 {
        return Err(invalid("radius", "must be non-negative"));
    }
    let needed = geom.window().expand_uniform(radius);
    if !field.window().contains_box(&needed) {
        return Err(Error::WindowMismatch(format!(
            "field must cover D_n padded by {radius}"
        )));
    }
    let mut sum = 0.0;
    for v in geom.sites() {
        let view = LocalView {
            field,
            center: &v,
            radius,
        };
        sum += h(&view);
    }
    Ok(sum / geom.size() as f64)
}

/// Both sides of `|D_n| P(max_{v in A_0^(m)} y_v Z_v > a_n x)
/// -> x^{-alpha} E(max_{v in A_0^(m)} y_v Theta_v)_+^alpha / E(Theta_0)_+^alpha`
/// for a moving-average `Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowTailCheck {
    pub a_n: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// The left side is estimated by counting, over every `v in D_n` and `reps`
/// replications, the events `max_{u in A_v^(m)} y_{u-v} Z_u > a_n x`; by
/// stationarity the mean count equals `|D_n|` times the probability.
/// `y` holds one weight per site of `B^(m)` in lexicographic order.
#[allow(clippy::too_many_arguments)]
pub fn max_window_tail_check(
    kernel: &KernelPsi,
    tail: &TailModel,
    y: &[f64],
    m: i64,
    x: f64,
    geom: &IndexSetGeometry,
    reps: u64,
    seed: u64,
) -> Result<WindowTailCheck> {
    let d = kernel.dim();
    let bm = LatticeBox::centered(d, m);
    if y.len() != bm.len() {
        return Err(Error::DimensionMismatch {
            expected: bm.len(),
            got: y.len(),
        });
    }
    if geom.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: geom.dim(),
        });
    }
    if !(x > 0.0) || reps < 2 {
        return Err(invalid("x/reps", "need x > 0 and at least two replications"));
    }
    let alpha = tail.alpha();
    let atoms = ma_spectral_atoms(kernel, m, alpha, tail.p_xi())?;
    let origin = atoms.origin();
    let mut num = 0.0;
    let mut den = 0.0;
    for a in atoms.atoms() {
        let theta0 = a.value_at(origin).max(0.0);
        den += a.weight * theta0.powf(alpha);
        let top = a
            .entries
            .iter()
            .filter(|&&(i, _)| i > origin)
            .map(|&(i, v)| y[i] * v)
            .fold(0.0f64, f64::max);
        num += a.weight * top.powf(alpha);
    }
    if den <= 0.0 {
        return Err(Error::DegenerateSpectral);
    }
    let rhs = x.powf(-alpha) * num / den;

    let a_n = NormingSequence::moving_average(kernel, alpha, tail.p_xi())?.a_n(geom.size());
    let level = a_n * x;
    let offsets: Vec<(Vec<i64>, f64)> = positive_offsets(&vec![m; d])
        .into_iter()
        .map(|o| {
            let w = y[bm.index_of(&o).expect("offset inside B^(m)")];
            (o, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let sim_window = geom.window().expand_uniform(m);
    let counts = map_indexed(reps, |r| -> Result<f64> {
        let z = simulate_ma(kernel, tail, &sim_window, StreamKey::new(seed, STREAM_NOISE).replication(r))?;
        let vals = z.values();
        let taps: Vec<(isize, f64)> = offsets
            .iter()
            .map(|(o, w)| (sim_window.linear_offset(o), *w))
            .collect();
        let mut count = 0u64;
        for v in geom.sites() {
            let base = sim_window.index_of(&v).expect("inside") as isize;
            if taps.iter().any(|&(off, w)| w * vals[(base + off) as usize] > level) {
                count += 1;
            }
        }
        Ok(count as f64)
    });
    let counts = counts.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = counts.len() as f64;
    let lhs = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - lhs).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(WindowTailCheck {
        a_n,
        lhs,
        lhs_se: (var / n).sqrt(),
        rhs,
        ratio: lhs / rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeC;

    #[test]
    fn ergodic_average_of_a_linear_field() {
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![10.0], vec![1], None).unwrap();
        let win = geom.window().expand_uniform(1);
        let vals: Vec<f64> = win.sites().map(|v| v[0] as f64).collect();
        let field = FieldSample::from_values(win, vals).unwrap();
        // h = X_{v+1} - X_{v-1} = 2 everywhere
        let avg = ergodic_average(&field, &geom, 1, |w| w.at(&[1]) - w.at(&[-1])).unwrap();
        assert_eq!(avg, 2.0);
        assert!(ergodic_average(&field, &geom, 2, |w| w.at(&[0])).is_err());
    }

    #[test]
    fn iid_window_counts_every_successor() {
        // psi = delta_0, y = 1 on B^(1): the limit is |A_0^(1)| x^{-alpha} = 1
        let geom = IndexSetGeometry::build(ShapeC::unit_box(1).unwrap(), vec![2000.0], vec![1], None).unwrap();
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let chk = max_window_tail_check(&KernelPsi::identity(1), &tail, &[1.0; 3], 1, 1.0, &geom, 2000, 4).unwrap();
        assert!((chk.rhs - 1.0).abs() < 1e-12);
        assert!((chk.lhs - 1.0).abs() < 4.0 * chk.lhs_se + 0.01, "{chk:?}");
    }
}

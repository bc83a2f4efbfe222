use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeBox;
use crate::parallel::map_indexed;
use crate::rng::StreamKey;
use crate::sim::{simulate_ma, KernelPsi};
use crate::tailmodels::TailModel;
use crate::theory::SpectralAtoms;

/// Max-norm distance within which an observed direction is assigned to an atom.
pub const ATOM_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBin {
    pub atom: usize,
    pub theoretical: f64,
    pub empirical: f64,
}

/// Empirical directions of large windows against the theoretical atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub windows: u64,
    pub kept: usize,
    pub threshold: f64,
    pub bins: Vec<SpectralBin>,
    /// Fraction of kept windows farther than [`ATOM_TOLERANCE`] from every atom.
    pub unmatched: f64,
    /// Total variation distance, counting unmatched mass fully.
    pub tv: f64,
}

fn window_values(kernel: &KernelPsi, tail: &TailModel, window: &LatticeBox, key: StreamKey, i: u64) -> Result<Vec<f64>> {
    Ok(simulate_ma(kernel, tail, window, key.replication(i))?.into_values())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Simulates `windows` independent copies of the moving average on `B^(m)`,
/// keeps those whose max-norm exceeds its empirical `quantile`, and bins their
/// directions `X / ||X||` to the nearest atom.
pub fn empirical_spectral_measure(
    kernel: &KernelPsi,
    tail: &TailModel,
    atoms: &SpectralAtoms,
    quantile: f64,
    windows: u64,
    key: StreamKey,
) -> Result<SpectralReport> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(invalid("quantile", "must lie in (0, 1)"));
    }
    if kernel.dim() != atoms.window().dim() {
        return Err(Error::DimensionMismatch {
            expected: atoms.window().dim(),
            got: kernel.dim(),
        });
    }
    let n = windows as usize;
    let kept = n - (quantile * n as f64).ceil() as usize;
    if kept == 0 {
        return Err(Error::SampleTooSmall {
            needed: (1.0 / (1.0 - quantile)).ceil() as usize,
            got: n,
        });
    }
    let window = atoms.window().clone();
    let norms = map_indexed(windows, |i| window_values(kernel, tail, &window, key, i).map(|v| max_abs(&v)));
    let norms = norms.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut sorted = norms.clone();
    let (_, &mut threshold, _) = sorted.select_nth_unstable_by(n - kept - 1, f64::total_cmp);
    let chosen: Vec<u64> = (0..windows).filter(|&i| norms[i as usize] > threshold).collect();

    let nearest = map_indexed(chosen.len() as u64, |j| {
        let v = window_values(kernel, tail, &window, key, chosen[j as usize])?;
        let norm = max_abs(&v);
        let dir: Vec<f64> = v.iter().map(|x| x / norm).collect();
        Ok(atoms.nearest(&dir).filter(|&(_, d)| d <= ATOM_TOLERANCE).map(|(a, _)| a))
    });
    let mut counts = vec![0usize; atoms.atoms().len()];
    let mut unmatched = 0usize;
    for hit in nearest {
        match hit? {
            Some(a) => counts[a] += 1,
            None => unmatched += 1,
        }
    }
    let total = chosen.len() as f64;
    let bins: Vec<SpectralBin> = atoms
        .atoms()
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(atom, (a, &c))| SpectralBin {
            atom,
            theoretical: a.weight,
            empirical: c as f64 / total,
        })
        .collect();
    let unmatched = unmatched as f64 / total;
    let tv = 0.5 * (bins.iter().map(|b| (b.empirical - b.theoretical).abs()).sum::<f64>() + unmatched);
    Ok(SpectralReport {
        windows,
        kept: chosen.len(),
        threshold,
        bins,
        unmatched,
        tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::ma_spectral_atoms;

    #[test]
    fn iid_noise_concentrates_on_unit_vectors() {
        let kernel = KernelPsi::identity(1);
        let tail = TailModel::new(2.0, 0.7).unwrap();
        let atoms = ma_spectral_atoms(&kernel, 1, 2.0, 0.7).unwrap();
        let rep = empirical_spectral_measure(&kernel, &tail, &atoms, 0.999, 1_000_000, StreamKey::new(3, 5)).unwrap();
        assert_eq!(rep.kept, 1000);
        assert!(rep.tv < 0.12, "{rep:?}");
    }

    #[test]
    fn rejects_bad_quantile() {
        let kernel = KernelPsi::identity(1);
        let tail = TailModel::new(2.0, 1.0).unwrap();
        let atoms = ma_spectral_atoms(&kernel, 0, 2.0, 1.0).unwrap();
        assert!(empirical_spectral_measure(&kernel, &tail, &atoms, 1.0, 10, StreamKey::new(0, 0)).is_err());
        assert!(empirical_spectral_measure(&kernel, &tail, &atoms, 0.99, 10, StreamKey::new(0, 0)).is_err());
    }
}

use std::ops::Range;

use num_complex::Complex64 as C64;

use super::ObservableError;

/// Sums of `ρ_ie` and `|ρ_ie|²` over one block of ions, per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSums {
    pub count: usize,
    pub sum: Vec<C64>,
    pub sum_sq: Vec<f64>,
}

impl BlockSums {
    pub fn zeros(len: usize) -> Self {
        Self {
            count: 0,
            sum: vec![C64::new(0.0, 0.0); len],
            sum_sq: vec![0.0; len],
        }
    }

    pub fn add(&mut self, samples: &[C64]) {
        for ((s, q), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(samples) {
            *s += x;
            *q += x.norm_sqr();
        }
        self.count += 1;
    }

    pub fn slice(&self, r: Range<usize>) -> Self {
        Self {
            count: self.count,
            sum: self.sum[r.clone()].to_vec(),
            sum_sq: self.sum_sq[r].to_vec(),
        }
    }
}

/// Ensemble polarization on a uniform grid.
///
/// `intensity[k] = |polarization[k]|²` holds at every sample. When built
/// from block sums the trace also carries what is needed for the
/// finite-ensemble bias correction and block jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTrace {
    t0: f64,
    dt: f64,
    polarization: Vec<C64>,
    intensity: Vec<f64>,
    blocks: Vec<BlockSums>,
}

fn intensity_of(p: &[C64]) -> Vec<f64> {
    p.iter().map(|c| c.norm_sqr()).collect()
}

/// `|S/n|² − s²/n` with `s²` the sample variance of the members.
fn debiased(sum: C64, sum_sq: f64, n: usize) -> f64 {
    let nf = n as f64;
    let p2 = (sum / nf).norm_sqr();
    if n < 2 {
        return p2;
    }
    let var = (sum_sq - nf * p2) / (nf - 1.0);
    p2 - var / nf
}

impl EchoTrace {
    pub fn new(t0: f64, dt: f64, polarization: Vec<C64>) -> Self {
        let intensity = intensity_of(&polarization);
        Self {
            t0,
            dt,
            polarization,
            intensity,
            blocks: Vec::new(),
        }
    }

    /// Trace of the mean over all blocks, summed in block order.
    pub fn from_blocks(t0: f64, dt: f64, blocks: Vec<BlockSums>) -> Result<Self, ObservableError> {
        let n: usize = blocks.iter().map(|b| b.count).sum();
        if n == 0 {
            return Err(ObservableError::Degenerate("no ions in the blocks".into()));
        }
        let len = blocks[0].sum.len();
        if blocks.iter().any(|b| b.sum.len() != len || b.sum_sq.len() != len) {
            return Err(ObservableError::GridMismatch("blocks differ in length".into()));
        }
        let mut total = vec![C64::new(0.0, 0.0); len];
        for b in &blocks {
            for (t, s) in total.iter_mut().zip(&b.sum) {
                *t += s;
            }
        }
        let polarization: Vec<C64> = total.iter().map(|s| s / n as f64).collect();
        let intensity = intensity_of(&polarization);
        Ok(Self {
            t0,
            dt,
            polarization,
            intensity,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.polarization.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarization.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn polarization(&self) -> &[C64] {
        &self.polarization
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn blocks(&self) -> &[BlockSums] {
        &self.blocks
    }

    /// Number of ions behind the trace (1 when built from a single series).
    pub fn count(&self) -> usize {
        if self.blocks.is_empty() {
            1
        } else {
            self.blocks.iter().map(|b| b.count).sum()
        }
    }

    /// Intensity with the `1/n` incoherent floor of a finite ensemble removed.
    pub fn debiased_intensity(&self) -> Vec<f64> {
        if self.blocks.is_empty() {
            return self.intensity.clone();
        }
        self.debiased_except(None)
    }

    /// Debiased intensity with block `k` left out.
    pub fn debiased_without_block(&self, k: usize) -> Vec<f64> {
        self.debiased_except(Some(k))
    }

    fn debiased_except(&self, skip: Option<usize>) -> Vec<f64> {
        let len = self.len();
        let mut sum = vec![C64::new(0.0, 0.0); len];
        let mut sq = vec![0.0; len];
        let mut n = 0;
        for (j, b) in self.blocks.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            n += b.count;
            for i in 0..len {
                sum[i] += b.sum[i];
                sq[i] += b.sum_sq[i];
            }
        }
        (0..len).map(|i| debiased(sum[i], sq[i], n)).collect()
    }

    /// Sample time of the intensity maximum.
    pub fn peak_time(&self) -> f64 {
        let k = self
            .intensity
            .iter()
            .enumerate()
            .fold(0, |best, (k, &v)| if v > self.intensity[best] { k } else { best });
        self.time(k)
    }

    /// Linear interpolation of `values` (same grid as the trace) at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let x = ((t - self.t0) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.len().saturating_sub(2));
        let f = x - k as f64;
        if self.len() == 1 {
            return values[0];
        }
        values[k] * (1.0 - f) + values[k + 1] * f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_is_modulus_squared() {
        let t = EchoTrace::new(0.0, 0.1, vec![C64::new(3.0, 4.0), C64::new(0.0, -1.0)]);
        assert_eq!(t.intensity(), &[25.0, 1.0]);
        assert_eq!(t.count(), 1);
        assert!((t.t_end() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn blocks_give_mean_and_unbiased_floor() {
        let xs = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)];
        let mut a = BlockSums::zeros(1);
        let mut b = BlockSums::zeros(1);
        a.add(&xs[..1]);
        a.add(&xs[1..2]);
        b.add(&xs[2..3]);
        b.add(&xs[3..4]);
        let t = EchoTrace::from_blocks(0.0, 1.0, vec![a, b]).unwrap();
        assert_eq!(t.polarization()[0], C64::new(0.0, 0.0));
        // zero mean: |P|² = 0, variance 4/3, debiased = −1/3
        assert!((t.debiased_intensity()[0] + 1.0 / 3.0).abs() < 1e-15);
        // leaving out the second block keeps ±1
        assert!((t.debiased_without_block(1)[0] - (0.0 - 2.0 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn identical_members_have_no_bias() {
        let x = [C64::new(0.3, -0.2)];
        let mut a = BlockSums::zeros(1);
        for _ in 0..5 {
            a.add(&x);
        }
        let t = EchoTrace::from_blocks(0.0, 1.0, vec![a]).unwrap();
        assert!((t.debiased_intensity()[0] - x[0].norm_sqr()).abs() < 1e-15);
    }
}

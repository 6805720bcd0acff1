//! Counter-based randomness.
//!
//! Instructions are a pure function of `(seed, x, j)`, so a field is lazily
//! infinite, replayable, and can be truncated or enumerated exactly.
//! [`RandomStream`] is a splitmix64 counter stream for every other draw.

use std::collections::BTreeMap;

use rand_core::RngCore;
use rand_distr::Distribution as _;

use crate::error::{Error, Result};
use crate::lattice::{Graph, SiteId};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finaliser: a bijective avalanche mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th member of the substream family named `label`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps derivation independent of std's hasher.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(mix64(seed ^ mix64(h)).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Uniform index in `0..n` from a sequence of raw words, rejecting the
/// biased top range.
#[inline]
fn reduce_uniform(n: u64, mut word: impl FnMut(u64) -> u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n + 1) % n;
    let mut k = 0;
    loop {
        let w = word(k);
        if w <= zone {
            return w % n;
        }
        k += 1;
    }
}

/// A source of sitewise jump instructions `tau^{x,j}`, `j >= 1`.
pub trait InstructionSource {
    fn instruction(&self, g: &Graph, x: SiteId, j: u64) -> Result<SiteId>;
}

impl<T: InstructionSource + ?Sized> InstructionSource for &T {
    fn instruction(&self, g: &Graph, x: SiteId, j: u64) -> Result<SiteId> {
        (**self).instruction(g, x, j)
    }
}

/// The full i.i.d. instruction field determined by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstructionField {
    pub seed: u64,
}

impl InstructionField {
    pub fn new(seed: u64) -> Self {
        InstructionField { seed }
    }

    /// Index into the canonical neighbour list of a site of degree `degree`.
    #[inline]
    pub fn choice(&self, x: SiteId, j: u64, degree: usize) -> usize {
        let base = mix64(mix64(mix64(self.seed) ^ x.0 as u64) ^ j);
        reduce_uniform(degree as u64, |k| if k == 0 { base } else { mix64(base ^ k.wrapping_mul(GOLDEN)) })
            as usize
    }
}

impl InstructionSource for InstructionField {
    #[inline]
    fn instruction(&self, g: &Graph, x: SiteId, j: u64) -> Result<SiteId> {
        let nb = g.neighbors(x)?;
        if j == 0 {
            return Err(Error::InvalidParameter("instruction index starts at 1".into()));
        }
        Ok(nb[self.choice(x, j, nb.len())])
    }
}

/// An explicit finite table of instructions. Lookups outside the table fail
/// with [`Error::Truncated`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruncatedField {
    table: BTreeMap<(SiteId, u64), SiteId>,
}

impl TruncatedField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pins `tau^{x,j} = y`. The caller is responsible for `y` being a neighbour.
    pub fn pin(mut self, x: SiteId, j: u64, y: SiteId) -> Self {
        self.table.insert((x, j), y);
        self
    }

    pub fn from_pins(pins: impl IntoIterator<Item = (SiteId, u64, SiteId)>) -> Self {
        pins.into_iter().fold(Self::new(), |f, (x, j, y)| f.pin(x, j, y))
    }

    /// The `m`-truncation of `field`: instructions `1..=m(x)` at every site.
    pub fn truncate(field: &impl InstructionSource, g: &Graph, m: &[(SiteId, u64)]) -> Result<Self> {
        let mut out = Self::new();
        for &(x, mx) in m {
            for j in 1..=mx {
                out.table.insert((x, j), field.instruction(g, x, j)?);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Probability of this table under the uniform i.i.d. law.
    pub fn weight(&self, g: &Graph) -> f64 {
        self.table.keys().map(|&(x, _)| 1.0 / g.degree(x) as f64).product()
    }

    /// Every table with domain `{(x, j) : 1 <= j <= m(x)}`, in a fixed order.
    /// There are `prod_x d_x^{m(x)}` of them.
    pub fn enumerate(g: &Graph, m: &[(SiteId, u64)]) -> Result<Vec<TruncatedField>> {
        let mut slots: Vec<(SiteId, u64, &[SiteId])> = Vec::new();
        for &(x, mx) in m {
            let nb = g.neighbors(x)?;
            slots.extend((1..=mx).map(|j| (x, j, nb)));
        }
        let mut out = vec![TruncatedField::new()];
        for (x, j, nb) in slots {
            out = out
                .into_iter()
                .flat_map(|f| nb.iter().map(move |&y| f.clone().pin(x, j, y)))
                .collect();
        }
        Ok(out)
    }
}

impl InstructionSource for TruncatedField {
    fn instruction(&self, g: &Graph, x: SiteId, j: u64) -> Result<SiteId> {
        g.neighbors(x)?;
        self.table.get(&(x, j)).copied().ok_or(Error::Truncated { site: x, index: j })
    }
}

/// Named laws accepted by [`RandomStream::sample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Poisson(f64),
    Bernoulli(f64),
    /// Supported on `{1, 2, ...}` with `P(k) = (1-q)^{k-1} q`.
    Geometric(f64),
    Uniform01,
}

/// A single-owner deterministic stream. Derive substreams for other owners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed: mix64(seed ^ GOLDEN), counter: 0 }
    }

    pub fn substream(seed: u64, label: &str, index: u64) -> Self {
        Self::new(derive_seed(seed, label, index))
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `0..n`, unbiased.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        reduce_uniform(n as u64, |_| self.next_word()) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("bernoulli p = {p}")));
        }
        Ok(self.uniform01() < p)
    }

    pub fn geometric(&mut self, q: f64) -> Result<u64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidParameter(format!("geometric q = {q}")));
        }
        if q == 1.0 {
            self.next_word();
            return Ok(1);
        }
        let u = 1.0 - self.uniform01();
        Ok(1 + (u.ln() / (1.0 - q).ln()).floor() as u64)
    }

    /// Inversion: the least `k` with `F(k) > u`. Means above 30 are split into
    /// equal parts so that `e^{-mu}` never underflows.
    pub fn poisson(&mut self, mu: f64) -> Result<u64> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("poisson mu = {mu}")));
        }
        let parts = (mu / 30.0).ceil() as u64;
        let part = mu / parts as f64;
        let mut total = 0;
        for _ in 0..parts {
            let u = self.uniform01();
            let mut k = 0u64;
            let mut p = (-part).exp();
            let mut cdf = p;
            while u >= cdf {
                k += 1;
                p *= part / k as f64;
                let next = cdf + p;
                if next == cdf {
                    break;
                }
                cdf = next;
            }
            total += k;
        }
        Ok(total)
    }

    pub fn binomial(&mut self, n: u64, p: f64) -> Result<u64> {
        let d = rand_distr::Binomial::new(n, p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(d.sample(self))
    }

    /// Successes in `draws` draws without replacement from `total` items of
    /// which `good` are successes.
    pub fn hypergeometric(&mut self, total: u64, good: u64, draws: u64) -> Result<u64> {
        match rand_distr::Hypergeometric::new(total, good, draws) {
            Ok(d) => Ok(d.sample(self)),
            // Large populations with a small mode underflow the inversion
            // start; draw one item at a time instead.
            Err(rand_distr::HyperGeoError::PopulationTooLarge) => {
                let (mut left, mut good_left, mut hits) = (total, good, 0);
                for _ in 0..draws {
                    if good_left == 0 {
                        break;
                    }
                    if (self.below(left as usize) as u64) < good_left {
                        good_left -= 1;
                        hits += 1;
                    }
                    left -= 1;
                }
                Ok(hits)
            }
            Err(e) => Err(Error::InvalidParameter(e.to_string())),
        }
    }

    pub fn sample(&mut self, dist: Distribution) -> Result<f64> {
        Ok(match dist {
            Distribution::Poisson(mu) => self.poisson(mu)? as f64,
            Distribution::Bernoulli(p) => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidParameter(format!("bernoulli p = {p}")));
                }
                self.bernoulli(p)? as u8 as f64
            }
            Distribution::Geometric(q) => self.geometric(q)? as f64,
            Distribution::Uniform01 => self.uniform01(),
        })
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper chi-square quantile by the Wilson-Hilferty approximation.
    fn chi2_critical(df: usize, z: f64) -> f64 {
        let k = df as f64;
        let c = 2.0 / (9.0 * k);
        k * (1.0 - c + z * c.sqrt()).powi(3)
    }

    /// Chi-square statistic of observed counts against expected probabilities.
    fn chi2(counts: &[u64], probs: &[f64], n: u64) -> f64 {
        counts
            .iter()
            .zip(probs)
            .map(|(&o, &p)| {
                let e = p * n as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum()
    }

    const Z_1E3: f64 = 3.090;

    #[test]
    fn instruction_is_replayable() {
        let g = Graph::torus(5, 2).unwrap();
        let f = InstructionField::new(99);
        for j in 1..50 {
            let a = f.instruction(&g, SiteId(7), j).unwrap();
            assert_eq!(a, f.instruction(&g, SiteId(7), j).unwrap());
            assert!(g.are_adjacent(SiteId(7), a));
        }
    }

    #[test]
    fn cycle_left_frequency() {
        let g = Graph::cycle(5).unwrap();
        let f = InstructionField::new(2024);
        let n = 1_000_000u64;
        let left = (1..=n).filter(|&j| f.instruction(&g, SiteId(0), j).unwrap() == SiteId(4)).count();
        assert!((left as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn instruction_uniform_on_torus_neighbours() {
        let g = Graph::torus(4, 3).unwrap();
        let f = InstructionField::new(5);
        let n = 600_000;
        let mut counts = [0u64; 6];
        for j in 1..=n {
            counts[f.choice(SiteId(3), j, 6)] += 1;
        }
        assert!(chi2(&counts, &[1.0 / 6.0; 6], n) < chi2_critical(5, Z_1E3));
        assert!(f.instruction(&g, SiteId(3), 0).is_err());
    }

    #[test]
    fn halo_has_no_instruction() {
        let g = Graph::boxed(1, 1).unwrap();
        let halo = g.sites().find(|&x| g.is_halo(x)).unwrap();
        assert_eq!(InstructionField::new(1).instruction(&g, halo, 1), Err(Error::AbsorbingSite(halo)));
    }

    #[test]
    fn pinned_field() {
        let g = Graph::cycle(3).unwrap();
        let f = TruncatedField::new().pin(SiteId(0), 1, SiteId(1));
        assert_eq!(f.instruction(&g, SiteId(0), 1).unwrap(), SiteId(1));
        assert_eq!(f.instruction(&g, SiteId(0), 2), Err(Error::Truncated { site: SiteId(0), index: 2 }));
    }

    #[test]
    fn truncation_agrees_with_field() {
        let g = Graph::cycle(6).unwrap();
        let f = InstructionField::new(11);
        let t = TruncatedField::truncate(&f, &g, &[(SiteId(2), 5), (SiteId(4), 3)]).unwrap();
        assert_eq!(t.len(), 8);
        for j in 1..=5 {
            assert_eq!(t.instruction(&g, SiteId(2), j), f.instruction(&g, SiteId(2), j));
        }
    }

    #[test]
    fn enumeration_counts_and_weights() {
        let g = Graph::path(3).unwrap();
        let m = [(SiteId(0), 2), (SiteId(1), 2), (SiteId(2), 1)];
        let all = TruncatedField::enumerate(&g, &m).unwrap();
        // Degrees 1, 2, 1.
        assert_eq!(all.len(), 4);
        let total: f64 = all.iter().map(|f| f.weight(&g)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let g = Graph::cycle(3).unwrap();
        let all = TruncatedField::enumerate(&g, &[(SiteId(0), 2), (SiteId(1), 1), (SiteId(2), 2)]).unwrap();
        assert_eq!(all.len(), 32);
        let total: f64 = all.iter().map(|f| f.weight(&g)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_degenerate() {
        let mut s = RandomStream::new(3);
        for _ in 0..100 {
            assert_eq!(s.geometric(1.0).unwrap(), 1);
        }
        assert!(s.geometric(0.0).is_err());
        assert!(s.sample(Distribution::Poisson(-1.0)).is_err());
        assert!(s.sample(Distribution::Bernoulli(0.0)).is_err());
    }

    #[test]
    fn poisson_tail_matches_rho0() {
        let mut s = RandomStream::new(17);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| s.poisson(0.8).unwrap() >= 2).count();
        let rho0 = 1.0 - 1.8 * (-0.8f64).exp();
        assert!((hits as f64 / n as f64 - rho0).abs() < 0.002);
    }

    #[test]
    fn bernoulli_mean() {
        let mut s = RandomStream::new(23);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| s.bernoulli(8.0 / 9.0).unwrap()).count();
        assert!((hits as f64 / n as f64 - 8.0 / 9.0).abs() < 0.002);
    }

    #[test]
    fn poisson_chi_square() {
        for (mu, seed) in [(0.8f64, 7u64), (3.5, 2), (45.0, 3)] {
            let mut s = RandomStream::new(seed);
            let n = 1_000_000u64;
            let kmax = (mu + 8.0 * mu.sqrt() + 10.0) as usize;
            let mut counts = vec![0u64; kmax + 1];
            for _ in 0..n {
                counts[(s.poisson(mu).unwrap() as usize).min(kmax)] += 1;
            }
            let mut probs = vec![0.0; kmax + 1];
            let mut p = (-mu).exp();
            for (k, slot) in probs.iter_mut().enumerate().take(kmax) {
                if k > 0 {
                    p *= mu / k as f64;
                }
                *slot = p;
            }
            probs[kmax] = 1.0 - probs[..kmax].iter().sum::<f64>();
            // Pool cells with small expectation into their neighbour.
            let (mut oc, mut pc) = (Vec::new(), Vec::new());
            let (mut o_acc, mut p_acc) = (0u64, 0.0);
            for (o, p) in counts.iter().zip(&probs) {
                o_acc += o;
                p_acc += p;
                if p_acc * n as f64 >= 20.0 {
                    oc.push(o_acc);
                    pc.push(p_acc);
                    o_acc = 0;
                    p_acc = 0.0;
                }
            }
            *oc.last_mut().unwrap() += o_acc;
            *pc.last_mut().unwrap() += p_acc;
            let stat = chi2(&oc, &pc, n);
            assert!(stat < chi2_critical(oc.len() - 1, Z_1E3), "mu {mu}: {stat}");
        }
    }

    #[test]
    fn geometric_chi_square() {
        let q = 0.3;
        let mut s = RandomStream::new(8);
        let n = 1_000_000u64;
        let kmax = 30;
        let mut counts = vec![0u64; kmax + 1];
        for _ in 0..n {
            let k = s.geometric(q).unwrap() as usize;
            assert!(k >= 1);
            counts[k.min(kmax)] += 1;
        }
        let mut probs: Vec<f64> = (0..=kmax).map(|k| if k == 0 { 0.0 } else { (1.0 - q).powi(k as i32 - 1) * q }).collect();
        probs[kmax] = (1.0 - q).powi(kmax as i32 - 1);
        let stat = chi2(&counts[1..], &probs[1..], n);
        assert!(stat < chi2_critical(kmax - 1, Z_1E3), "{stat}");
    }

    #[test]
    fn uniform_and_below_chi_square() {
        let mut s = RandomStream::new(31);
        let n = 1_000_000u64;
        let mut counts = [0u64; 10];
        let mut below = [0u64; 7];
        for _ in 0..n {
            counts[(s.uniform01() * 10.0) as usize] += 1;
            below[s.below(7)] += 1;
        }
        assert!(chi2(&counts, &[0.1; 10], n) < chi2_critical(9, Z_1E3));
        assert!(chi2(&below, &[1.0 / 7.0; 7], n) < chi2_critical(6, Z_1E3));
    }

    #[test]
    fn substreams_differ_and_replay() {
        let a: Vec<u64> = (0..4).map(|i| derive_seed(1, "trial", i)).collect();
        let b: Vec<u64> = (0..4).map(|i| derive_seed(1, "trial", i)).collect();
        assert_eq!(a, b);
        assert_ne!(derive_seed(1, "trial", 0), derive_seed(1, "other", 0));
        let mut s = RandomStream::substream(1, "x", 2);
        let mut t = s.clone();
        assert_eq!(s.next_u64(), t.next_u64());
        assert_eq!(s.counter(), 1);
    }
}

//! Exact linear-algebra probes and Monte Carlo statistics: Green's functions,
//! escape probabilities, the ghost-walk identity, dominance testing, the
//! geometric-sum lemmas and scaling fits.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Graph, SiteId, SiteSet};
use crate::randomness::{derive_seed, InstructionField, RandomStream};
use crate::ssm::{poisson_init, stabilize, SelectionPolicy, StabilityMode, Status};

/// Largest state space solved densely.
pub const MAX_DENSE_STATES: usize = 5000;

fn check_size(n: usize) -> Result<()> {
    if n > MAX_DENSE_STATES {
        return Err(Error::Precondition(format!("{n} states exceed the dense solver limit {MAX_DENSE_STATES}")));
    }
    Ok(())
}

/// Solves `m x = rhs` by LU and rejects the answer if its residual exceeds `tol`.
fn checked_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let x = m.clone().lu().solve(rhs).ok_or_else(|| Error::Solve("singular system".into()))?;
    let residual = (m * &x - rhs).amax();
    if !(residual <= tol) {
        return Err(Error::Solve(format!("residual {residual:e} exceeds {tol:e}")));
    }
    Ok(x)
}

/// Dense index of the sites of `z`; rejects halo sites and windows with no exit.
fn window_index(g: &Graph, z: &SiteSet) -> Result<(Vec<SiteId>, Vec<Option<usize>>)> {
    if z.universe() != g.site_count() {
        return Err(Error::InvalidParameter("window universe differs from the graph".into()));
    }
    if z.iter().any(|x| g.is_halo(x)) {
        return Err(Error::Precondition("window contains a halo site".into()));
    }
    let sites = z.to_vec();
    let has_exit = sites.iter().any(|&x| g.adjacent(x).iter().any(|&y| !z.contains(y)));
    if !sites.is_empty() && !has_exit {
        return Err(Error::Precondition("no absorbing boundary".into()));
    }
    check_size(sites.len())?;
    let mut index = vec![None; g.site_count()];
    for (i, &x) in sites.iter().enumerate() {
        index[x.index()] = Some(i);
    }
    Ok((sites, index))
}

/// `I - P` restricted to the window.
fn killed_generator(g: &Graph, sites: &[SiteId], index: &[Option<usize>]) -> DMatrix<f64> {
    let n = sites.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, &x) in sites.iter().enumerate() {
        let nb = g.adjacent(x);
        let p = 1.0 / nb.len() as f64;
        for &y in nb {
            if let Some(j) = index[y.index()] {
                m[(i, j)] -= p;
            }
        }
    }
    m
}

/// Expected visits before exiting a window, for a walk killed on leaving it.
#[derive(Debug, Clone)]
pub struct GreenTable {
    z: SiteSet,
    index: Vec<Option<usize>>,
    g: DMatrix<f64>,
}

impl GreenTable {
    pub fn window(&self) -> &SiteSet {
        &self.z
    }

    /// `G_Z(x, y)`; zero when either site lies outside `Z`.
    pub fn get(&self, x: SiteId, y: SiteId) -> f64 {
        match (self.index[x.index()], self.index[y.index()]) {
            (Some(i), Some(j)) => self.g[(i, j)],
            _ => 0.0,
        }
    }

    pub fn row_sum(&self, x: SiteId) -> f64 {
        self.index[x.index()].map_or(0.0, |i| self.g.row(i).sum())
    }

    /// `sum_{x in set} G_Z(x, y)`.
    pub fn column_mass(&self, set: impl IntoIterator<Item = SiteId>, y: SiteId) -> f64 {
        set.into_iter().map(|x| self.get(x, y)).sum()
    }
}

/// Solves `(I - P_Z) G = I` on the window `z`.
pub fn green_function(g: &Graph, z: &SiteSet) -> Result<GreenTable> {
    let (sites, index) = window_index(g, z)?;
    let n = sites.len();
    let m = killed_generator(g, &sites, &index);
    let gm = if n == 0 { DMatrix::zeros(0, 0) } else { checked_solve(&m, &DMatrix::identity(n, n), 1e-10)? };
    Ok(GreenTable { z: z.clone(), index, g: gm })
}

/// Expected exit times `E_x[tau_{Z^c}]` for every site, zero off `Z`.
pub fn exit_times(g: &Graph, z: &SiteSet) -> Result<Vec<f64>> {
    let (sites, index) = window_index(g, z)?;
    let mut out = vec![0.0; g.site_count()];
    if sites.is_empty() {
        return Ok(out);
    }
    let m = killed_generator(g, &sites, &index);
    let t = checked_solve(&m, &DMatrix::from_element(sites.len(), 1, 1.0), 1e-9)?;
    for (i, &x) in sites.iter().enumerate() {
        out[x.index()] = t[(i, 0)];
    }
    Ok(out)
}

/// `P_x(tau_y < tau_x^+)` for the simple random walk, by an exact solve of
/// the harmonic function that is 1 at `y` and 0 at `x`.
pub fn upsilon(g: &Graph, x: SiteId, y: SiteId) -> Result<f64> {
    g.check(x)?;
    g.check(y)?;
    if x == y {
        return Err(Error::InvalidParameter("upsilon needs distinct sites".into()));
    }
    if g.sites().any(|z| g.is_halo(z)) {
        return Err(Error::Precondition("upsilon needs a graph without halo".into()));
    }
    let others: Vec<SiteId> = g.sites().filter(|&z| z != x && z != y).collect();
    check_size(others.len())?;
    let mut index = vec![None; g.site_count()];
    for (i, &z) in others.iter().enumerate() {
        index[z.index()] = Some(i);
    }
    let n = others.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, 1);
    for (i, &z) in others.iter().enumerate() {
        let nb = g.adjacent(z);
        let p = 1.0 / nb.len() as f64;
        for &w in nb {
            if w == y {
                rhs[(i, 0)] += p;
            } else if let Some(j) = index[w.index()] {
                m[(i, j)] -= p;
            }
        }
    }
    let h = if n == 0 { DMatrix::zeros(0, 1) } else { checked_solve(&m, &rhs, 1e-10)? };
    let nb = g.adjacent(x);
    let value = |w: SiteId| {
        if w == y {
            1.0
        } else {
            index[w.index()].map_or(0.0, |i| h[(i, 0)])
        }
    };
    Ok(nb.iter().map(|&w| value(w)).sum::<f64>() / nb.len() as f64)
}

/// `Upsilon_1(r)`: the escape probability across distance `r` on a path of
/// `n` sites, far enough from the ends that the infimum over cycles is
/// attained. Needs `n >= 4r + 2`.
pub fn upsilon_one(r: usize, n: usize) -> Result<f64> {
    if r == 0 || n < 4 * r + 2 {
        return Err(Error::InvalidParameter(format!("upsilon_one needs r >= 1 and n >= 4r + 2, got r={r} n={n}")));
    }
    let g = Graph::path(n)?;
    let x = n / 4;
    upsilon(&g, SiteId::from(x), SiteId::from(x + r))
}

/// Closed form of `P_x(tau_y < tau_x^+)` on `cycle(n)` at distance `r`.
pub fn cycle_escape(n: usize, r: usize) -> f64 {
    1.0 / (2.0 * r as f64) + 1.0 / (2.0 * (n - r) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostReport {
    pub trials: usize,
    pub excluded: usize,
    /// Mean of particle plus ghost jumps from the origin.
    pub mean: Option<f64>,
    pub standard_error: Option<f64>,
    /// `mu * sum_x G_{B(L)}(x, o)`.
    pub exact: f64,
    /// Mean of ghost jumps alone.
    pub ghost_mean: Option<f64>,
    /// `sum_x P(eta_inf(x) = 1) G(x, o)` from the empirical occupation.
    pub ghost_exact: Option<f64>,
    /// Green mass at the origin from sites whose `r`-ball fits in the box,
    /// over the total.
    pub interior_ratio: f64,
}

/// Ghost-walk identity check on a box: after each stabilisation, every
/// occupied site launches a walk killed on leaving the box.
pub fn ghost_probe(g: &Graph, mu: f64, r: usize, trials: usize, seed: u64, cap: u64) -> Result<GhostReport> {
    let crate::lattice::GraphKind::Box { l, d } = g.kind() else {
        return Err(Error::Precondition("ghost probe needs a box".into()));
    };
    if l < 2 {
        return Err(Error::Precondition("ghost probe needs L >= 2".into()));
    }
    let o = g.site_at(&vec![0; d]).expect("origin lies in the box");
    let interior = g.interior();
    let green = green_function(g, &interior)?;
    let total_mass = green.column_mass(interior.iter(), o);
    let inner = interior.iter().filter(|&x| g.coords(x).iter().all(|&c| c.unsigned_abs() as usize + r <= l));
    let interior_ratio = green.column_mass(inner, o) / total_mass;
    let exact = mu * total_mass;

    let mut values = Vec::with_capacity(trials);
    let mut ghosts = Vec::with_capacity(trials);
    let mut occupation = vec![0u64; g.site_count()];
    let mut excluded = 0;
    for i in 0..trials as u64 {
        let mut stream = RandomStream::substream(seed, "ghost-init", i);
        let s = poisson_init(g, mu, &mut stream)?;
        let field = InstructionField::new(derive_seed(seed, "ghost-field", i));
        let out = stabilize(g, &s, &interior, &StabilityMode::Full, &field, SelectionPolicy::Lexicographic, cap)?;
        if out.status == Status::Capped {
            excluded += 1;
            continue;
        }
        let mut walk = RandomStream::substream(seed, "ghost-walk", i);
        let mut w = 0u64;
        for x in interior.iter().filter(|&x| out.state.eta(x) == 1) {
            occupation[x.index()] += 1;
            let mut z = x;
            while !g.is_halo(z) {
                w += (z == o) as u64;
                let nb = g.adjacent(z);
                z = nb[walk.below(nb.len())];
            }
        }
        values.push((out.odometer.get(o) + w) as f64);
        ghosts.push(w as f64);
    }
    let kept = values.len();
    let (mean, standard_error) = mean_and_se(&values);
    let ghost_exact = (kept > 0).then(|| {
        interior.iter().map(|x| occupation[x.index()] as f64 / kept as f64 * green.get(x, o)).sum()
    });
    Ok(GhostReport {
        trials,
        excluded,
        mean,
        standard_error,
        exact,
        ghost_mean: mean_and_se(&ghosts).0,
        ghost_exact,
        interior_ratio,
    })
}

/// Sample mean and its standard error; `None` when there are no samples.
pub fn mean_and_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    };
    (Some(mean), Some(se))
}

/// Outcome of the one-sided test of `H0: s1 dominates s2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub rejected: bool,
    /// `max_k (F1(k) - F2(k))`, never negative.
    pub max_violation: f64,
    /// `sqrt(ln(2/alpha) / (2 min(n1, n2)))`.
    pub dkw_band: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Rejects when the empirical CDF of `s1` exceeds that of `s2` by more than
/// twice the DKW band, which bounds both one-sample deviations at once.
pub fn dominance_test(s1: &[u64], s2: &[u64], alpha: f64) -> Result<DominanceVerdict> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InsufficientData("dominance test needs two non-empty samples"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
    }
    let (mut a, mut b) = (s1.to_vec(), s2.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut max_violation = 0.0f64;
    while i < n1 || j < n2 {
        let k = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n1 && a[i] == k {
            i += 1;
        }
        while j < n2 && b[j] == k {
            j += 1;
        }
        max_violation = max_violation.max(i as f64 / n1 as f64 - j as f64 / n2 as f64);
    }
    let dkw_band = ((2.0 / alpha).ln() / (2.0 * n1.min(n2) as f64)).sqrt();
    Ok(DominanceVerdict { rejected: max_violation > 2.0 * dkw_band, max_violation, dkw_band, n1, n2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    /// `ab / (1 - b + ab)`.
    pub parameter: f64,
    pub max_deviation: f64,
    /// Support length used; the truncated mass is below `1e-12`.
    pub support: usize,
    pub pass: bool,
}

/// Compares `S = 1 + sum_{n <= N} (X_n - 1)`, with `N ~ Geom(a)` and
/// `X_n ~ Geom(b)` on `{1, 2, ...}`, to `Geom(ab / (1 - b + ab))` pointwise.
///
/// The law of `S - 1` solves the renewal equation
/// `P(k) = a Y(k) + (1 - a) sum_i Y(i) P(k - i)`, `Y` being the law of `X - 1`.
pub fn geometric_composition_check(a: f64, b: f64, tol: f64) -> Result<CompositionReport> {
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidParameter(format!("composition needs a in (0,1), b in (0,1], got a={a} b={b}")));
    }
    const MAX_SUPPORT: usize = 200_000;
    let q = a * b / (1.0 - b + a * b);
    let y = |k: usize| b * (1.0 - b).powi(k as i32);
    let mut ys: Vec<f64> = Vec::new();
    let mut p: Vec<f64> = Vec::new();
    let mut mass = 0.0;
    let mut max_deviation = 0.0f64;
    let denom = 1.0 - (1.0 - a) * y(0);
    while mass < 1.0 - 1e-12 {
        let k = p.len();
        if k == MAX_SUPPORT {
            return Err(Error::InvalidParameter("composition support too long".into()));
        }
        ys.push(y(k));
        let conv: f64 = (1..=k).map(|i| ys[i] * p[k - i]).sum();
        let pk = (a * ys[k] + (1.0 - a) * conv) / denom;
        p.push(pk);
        mass += pk;
        let target = q * (1.0 - q).powi(k as i32);
        max_deviation = max_deviation.max((pk - target).abs());
    }
    Ok(CompositionReport { parameter: q, max_deviation, support: p.len(), pass: max_deviation <= tol })
}

/// How the Bernoulli variables depend on the geometric horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coupling {
    Independent,
    /// The success count on a long prefix is an antitone function of the
    /// horizon, with successes placed uniformly; the marginal law of the
    /// sequence stays i.i.d. Bernoulli.
    Antitone,
}

/// Quantile table of `Binomial(n, p)` built outward from the mode.
struct BinomialQuantile {
    lo: u64,
    cdf: Vec<f64>,
}

impl BinomialQuantile {
    fn new(n: u64, p: f64) -> Self {
        let mode = ((n + 1) as f64 * p).floor().min(n as f64) as u64;
        let ratio = |k: u64| (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        let (mut up, mut down) = (vec![1.0f64], Vec::new());
        let mut k = mode;
        while k < n && *up.last().unwrap() > 1e-300 {
            up.push(up.last().unwrap() * ratio(k));
            k += 1;
        }
        let (mut k, mut w) = (mode, 1.0f64);
        while k > 0 && w > 1e-300 {
            w /= ratio(k - 1);
            down.push(w);
            k -= 1;
        }
        let lo = mode - down.len() as u64;
        let weights: Vec<f64> = down.into_iter().rev().chain(up).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights.iter().map(|w| {
            acc += w / total;
            acc
        });
        BinomialQuantile { lo, cdf: cdf.collect() }
    }

    /// Least `k` with `F(k) >= u`.
    fn quantile(&self, u: f64) -> u64 {
        let i = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.lo + i as u64
    }
}

/// Checks that `1 + X_1 + ... + X_T`, with `T + 1 ~ Geom(eps)` and
/// `X_n ~ Bernoulli(p)`, dominates `Geom(eps / p^3)` statistically.
pub fn bernoulli_geometric_domination_check(
    p: f64,
    eps: f64,
    trials: usize,
    seed: u64,
    coupling: Coupling,
    alpha: f64,
) -> Result<DominanceVerdict> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p}")));
    }
    let floor = (-1.0 / (32.0 * p * p)).exp();
    if eps < floor {
        return Err(Error::Precondition(format!("exp(-1/(32 p^2)) = {floor:e} exceeds eps = {eps:e}")));
    }
    if eps >= p.powi(3) {
        return Err(Error::Precondition(format!("eps = {eps:e} is not below p^3 = {:e}", p.powi(3))));
    }
    if trials == 0 {
        return Err(Error::InsufficientData("bernoulli-geometric check needs trials"));
    }
    let q = eps / p.powi(3);
    // Prefix long enough to hold the horizon with probability 1 - e^{-8}.
    let prefix = (8.0 / eps).ceil() as u64;
    let table = matches!(coupling, Coupling::Antitone).then(|| BinomialQuantile::new(prefix, p));
    let mut lhs = Vec::with_capacity(trials);
    let mut rhs = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let mut s = RandomStream::substream(seed, "bernoulli-geometric", i);
        let sum = match &table {
            None => {
                let t = s.geometric(eps)? - 1;
                s.binomial(t, p)?
            }
            Some(table) => {
                // Randomised probability integral transform of T.
                let u = s.uniform01();
                let t = s.geometric(eps)? - 1;
                let below = 1.0 - (1.0 - eps).powf(t as f64);
                let v = below + u * eps * (1.0 - eps).powf(t as f64);
                let good = table.quantile(1.0 - v);
                let head = s.hypergeometric(prefix, good, t.min(prefix))?;
                let tail = if t > prefix { s.binomial(t - prefix, p)? } else { 0 };
                head + tail
            }
        };
        lhs.push(1 + sum);
        let mut r = RandomStream::substream(seed, "bernoulli-geometric-target", i);
        rhs.push(r.geometric(q)?);
    }
    dominance_test(&lhs, &rhs, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// `(D - 1) / D^3`.
    pub weak_bound: f64,
    /// `(D - 1) / (10 D^6 (D^2 + 1))`.
    pub mu_lower: f64,
    /// `D^3`.
    pub lambda: f64,
}

pub fn constants(degree: usize) -> Result<Constants> {
    if degree < 2 {
        return Err(Error::InvalidParameter(format!("degree {degree} < 2")));
    }
    let d = degree as f64;
    Ok(Constants {
        weak_bound: (d - 1.0) / d.powi(3),
        mu_lower: (d - 1.0) / (10.0 * d.powi(6) * (d * d + 1.0)),
        lambda: d.powi(3),
    })
}

/// `P(Poisson(4/5) >= 2)`.
pub fn rho0() -> f64 {
    1.0 - 1.8 * (-0.8f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

/// Least squares of `ln(time)` against `n^d`.
pub fn fit_exponential_time(ns: &[f64], times: &[f64], d: u32) -> Result<ExpFit> {
    if ns.len() != times.len() {
        return Err(Error::InvalidParameter("ns and times differ in length".into()));
    }
    if ns.len() < 3 {
        return Err(Error::InsufficientData("exponential fit needs at least 3 points"));
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("times must be positive".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.powi(d as i32)).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Solve("degenerate design: all n equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = (sse / (k - 2.0) / sxx).sqrt();
    Ok(ExpFit { slope, intercept, r2, slope_se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Metric;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn green_on_three_site_window() {
        let g = Graph::boxed(1, 1).unwrap();
        let green = green_function(&g, &g.interior()).unwrap();
        let at = |c: i32| g.site_at(&[c]).unwrap();
        assert!(close(green.get(at(0), at(0)), 2.0, 1e-10));
        assert!(close(green.get(at(1), at(0)), 1.0, 1e-10));
        assert!(close(green.get(at(-1), at(0)), 1.0, 1e-10));
        // Gambler's ruin: E_0[exit] = (L+1)^2 - 0 = 4.
        assert!(close(green.row_sum(at(0)), 4.0, 1e-10));
    }

    #[test]
    fn green_row_outside_window_is_zero() {
        let g = Graph::cycle(8).unwrap();
        let z = SiteSet::from_sites(8, [SiteId(0), SiteId(1), SiteId(2)]);
        let green = green_function(&g, &z).unwrap();
        assert!(g.sites().all(|y| green.get(SiteId(5), y) == 0.0));
        assert_eq!(green.row_sum(SiteId(5)), 0.0);
    }

    #[test]
    fn whole_torus_has_no_boundary() {
        let g = Graph::torus(4, 2).unwrap();
        let err = green_function(&g, &SiteSet::full(16)).unwrap_err();
        assert!(err.to_string().contains("no absorbing boundary"));
    }

    #[test]
    fn row_sums_match_exit_times() {
        let g = Graph::torus(6, 2).unwrap();
        let z = g.ball(SiteId(0), 2, Metric::Graph).unwrap();
        let green = green_function(&g, &z).unwrap();
        let t = exit_times(&g, &z).unwrap();
        for x in z.iter() {
            assert!(close(green.row_sum(x), t[x.index()], 1e-9 * t[x.index()]));
        }
    }

    #[test]
    fn upsilon_one_is_one_over_two_r() {
        for r in 1..=10 {
            for n in [4 * r + 2, 8 * r] {
                assert!(close(upsilon_one(r, n).unwrap(), 1.0 / (2.0 * r as f64), 1e-10), "r={r} n={n}");
            }
        }
    }

    #[test]
    fn cycle_escape_has_closed_form() {
        let g = Graph::cycle(100).unwrap();
        for r in [1, 2, 7, 50] {
            let v = upsilon(&g, SiteId(0), SiteId(r as u32)).unwrap();
            assert!(close(v, cycle_escape(100, r), 1e-10), "r={r}");
        }
        assert!(close(cycle_escape(100, 1), 0.5 + 1.0 / 198.0, 1e-15));
    }

    #[test]
    fn upsilon_rejects_equal_sites() {
        let g = Graph::cycle(5).unwrap();
        assert!(upsilon(&g, SiteId(1), SiteId(1)).is_err());
    }

    #[test]
    fn upsilon_three_dimensional_golden() {
        let g = Graph::torus(11, 3).unwrap();
        let y = g.adjacent(SiteId(0))[0];
        let v = upsilon(&g, SiteId(0), y).unwrap();
        assert!(close(v, UPSILON_3D_ADJACENT, 1e-9), "{v}");
    }

    /// Pinned from the exact solve on torus(11, 3); close to the value 1/2
    /// on the infinite lattice, where adjacent sites have resistance 1/3.
    const UPSILON_3D_ADJACENT: f64 = 0.5003759398496094;

    #[test]
    fn dominance_examples() {
        let s: Vec<u64> = (0..1000).map(|i| i % 17).collect();
        assert!(!dominance_test(&s, &s, 0.01).unwrap().rejected);
        let up: Vec<u64> = s.iter().map(|x| x + 1).collect();
        assert!(!dominance_test(&up, &s, 0.01).unwrap().rejected);
        let zeros = vec![0u64; 1000];
        let fives = vec![5u64; 1000];
        let v = dominance_test(&zeros, &fives, 0.01).unwrap();
        assert!(v.rejected);
        assert_eq!(v.max_violation, 1.0);
        assert!(matches!(dominance_test(&[], &s, 0.01), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn dkw_band_formula() {
        let v = dominance_test(&[1; 100], &[1; 400], 0.05).unwrap();
        assert!(close(v.dkw_band, ((2.0f64 / 0.05).ln() / 200.0).sqrt(), 1e-15));
    }

    #[test]
    fn composition_examples() {
        let r = geometric_composition_check(0.5, 0.5, 1e-10).unwrap();
        assert!(close(r.parameter, 1.0 / 3.0, 1e-15) && r.pass);
        let r = geometric_composition_check(0.9, 0.1, 1e-10).unwrap();
        assert!(close(r.parameter, 0.09 / 0.99, 1e-15) && r.pass);
        let r = geometric_composition_check(0.3, 1.0, 1e-12).unwrap();
        assert_eq!(r.parameter, 1.0);
        assert!(r.pass);
        assert!(geometric_composition_check(0.0, 0.5, 1e-8).is_err());
    }

    #[test]
    fn bernoulli_geometric_window() {
        assert!(matches!(
            bernoulli_geometric_domination_check(0.1, 1e-3, 10, 1, Coupling::Independent, 0.01),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            bernoulli_geometric_domination_check(0.05, 1e-5, 0, 1, Coupling::Independent, 0.01),
            Err(Error::InsufficientData(_))
        ));
        let v = bernoulli_geometric_domination_check(0.05, 1e-5, 2000, 3, Coupling::Antitone, 0.01).unwrap();
        assert!(!v.rejected, "{v:?}");
    }

    #[test]
    fn binomial_quantile_table() {
        let t = BinomialQuantile::new(10, 0.5);
        assert_eq!(t.quantile(0.0), 0);
        assert_eq!(t.quantile(0.5), 5);
        assert_eq!(t.quantile(1.0), 10);
        let t = BinomialQuantile::new(200_000, 0.05);
        let median = t.quantile(0.5);
        assert!((9990..=10010).contains(&median), "{median}");
    }

    #[test]
    fn constants_examples() {
        let c = constants(2).unwrap();
        assert_eq!((c.weak_bound, c.lambda), (0.125, 8.0));
        assert!(close(c.mu_lower, 1.0 / 3200.0, 1e-18));
        let c = constants(4).unwrap();
        assert!(close(c.weak_bound, 3.0 / 64.0, 1e-15));
        assert!(close(c.mu_lower, 3.0 / 696_320.0, 1e-18));
        assert_eq!(c.lambda, 64.0);
        assert!(constants(1).is_err());
        assert!(close(rho0(), 0.191_207, 1e-6));
    }

    #[test]
    fn fit_examples() {
        let ns = [4.0, 8.0, 12.0, 16.0];
        let times: Vec<f64> = ns.iter().map(|n: &f64| (2.0 * n).exp()).collect();
        let f = fit_exponential_time(&ns, &times, 1).unwrap();
        assert!(close(f.slope, 2.0, 1e-9) && close(f.r2, 1.0, 1e-12));
        let f = fit_exponential_time(&ns, &[7.0; 4], 1).unwrap();
        assert!(close(f.slope, 0.0, 1e-15));
        assert!(fit_exponential_time(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1).is_err());
        assert!(fit_exponential_time(&[1.0, 2.0], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn ghost_probe_empty_and_ratio() {
        let g = Graph::boxed(6, 1).unwrap();
        let r = ghost_probe(&g, 0.3, 1, 0, 1, 1_000_000).unwrap();
        assert_eq!(r.mean, None);
        assert!(r.interior_ratio > 0.1);
    }
}

//! Occupancy measures, the divergence `I_j(x; c)` and the rate function
//! `I(x) = min_{j != f(x)} inf_c I_j(x; c)`, with the alternative KL form and
//! separability diagnostics.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_regularity, BehaviorPolicy, BlockMdp, LatentModel};

/// Points of the logarithmic search grid over `c`.
pub const GRID_POINTS: usize = 64;
/// Lower end of the search grid.
pub const C_MIN: f64 = 1e-4;
/// Width at which golden-section refinement stops.
pub const C_TOL: f64 = 1e-6;
/// Tolerance of the exact zero-rate conditions.
pub const WITNESS_TOL: f64 = 1e-10;

/// `m(s, a)`: expected fraction of the first `H - 1` rounds spent in `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    m: DMatrix<f64>,
}

impl OccupancyTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.m[(s, a)]
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
    pub fn total(&self) -> f64 {
        self.m.sum()
    }
}

/// `m(s,a) = 1/(H-1) sum_{h<H} sum_{x in f^{-1}(s)} pi(a|x) P(x_h = x)`,
/// propagated exactly through the factorized kernel.
pub fn occupancy(m: &BlockMdp, pi: &BehaviorPolicy) -> Result<OccupancyTable> {
    pi.check_compatible(m)?;
    let h = m.horizon();
    if h < 2 {
        return Err(Error::InvalidArgument(format!("occupancy needs H >= 2, got {h}")));
    }
    let mut occ = DMatrix::zeros(m.n_states(), m.n_actions());
    for d in m.context_marginals(pi, h - 1) {
        for (x, &dx) in d.iter().enumerate() {
            if dx == 0.0 {
                continue;
            }
            let s = m.state_of(x);
            for a in 0..m.n_actions() {
                occ[(s, a)] += dx * pi.prob(x, a);
            }
        }
    }
    occ /= (h - 1) as f64;
    Ok(OccupancyTable { m: occ })
}

/// The model in which `x` is moved to latent state `j` with
/// `q'(x|j) = c q(x|i)`, `q'(y|j) = (1 - c q(x|i)) q(y|j)` and
/// `q'(z|i) = q(z|i) / (1 - q(x|i))`.
pub fn alternate_model(m: &BlockMdp, x: usize, j: usize, c: f64) -> Result<BlockMdp> {
    let i = check_pair(m, x, j)?;
    let qx = m.own_emission(x);
    if !(c > 0.0) || c * qx > 1.0 {
        return Err(Error::OutOfRange(format!("c = {c} gives q'(x|j) = {} outside (0, 1]", c * qx)));
    }
    if m.cluster(i).len() < 2 {
        return Err(Error::InvalidModel(format!("moving context {x} would empty latent state {i}")));
    }
    let mut decoder = m.decoder().to_vec();
    decoder[x] = j;
    let mut q = m.emission().clone();
    for &z in m.cluster(i) {
        q[(i, z)] = if z == x { 0.0 } else { m.q(i, z) / (1.0 - qx) };
    }
    for &y in m.cluster(j) {
        q[(j, y)] = (1.0 - c * qx) * m.q(j, y);
    }
    q[(j, x)] = c * qx;
    BlockMdp::from_parts_unchecked(m.latent().clone(), decoder, q, m.initial().to_vec(), m.horizon())
}

fn check_pair(m: &BlockMdp, x: usize, j: usize) -> Result<usize> {
    if x >= m.n_contexts() || j >= m.n_states() {
        return Err(Error::OutOfRange(format!("context {x} or state {j} out of range")));
    }
    let i = m.state_of(x);
    if i == j {
        return Err(Error::InvalidArgument(format!("j = {j} equals f({x})")));
    }
    Ok(i)
}

/// `w log(a / b)` with `0 log(.) = 0` and `+inf` when `a > 0 = b`.
fn wlog(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        w * (a / b).ln()
    }
}

/// `KL(p || q)` for unnormalized mass vectors of equal support type.
fn kl(p: impl Iterator<Item = (f64, f64)>) -> f64 {
    p.map(|(a, b)| wlog(a, a, b)).sum()
}

/// Which occupancy weights the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OccupancyMode {
    /// Occupancy of the alternate model, recomputed for every `(x, j, c)`.
    #[default]
    Alternate,
    /// Occupancy of the nominal model, a cheaper approximation.
    Nominal,
}

/// `(c, I_j(x; c))` pairs on a grid of scales.
pub type Profile = Vec<(f64, f64)>;

/// Minimizer of `c -> I_j(x; c)` for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEntry {
    pub context: usize,
    pub value: f64,
    pub state: usize,
    pub scale: f64,
    /// `(c, I_{state}(x; c))` on the search grid.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub entries: Vec<RateEntry>,
    /// `min_x I(x)`.
    pub aggregate: f64,
}

impl RateResult {
    pub fn is_positive(&self, tol: f64) -> bool {
        self.aggregate > tol
    }
}

/// Precomputed model data shared by all rate evaluations.
#[derive(Debug, Clone)]
pub struct RateContext<'a> {
    model: &'a BlockMdp,
    policy: &'a BehaviorPolicy,
    nominal: OccupancyTable,
    eta: f64,
    mode: OccupancyMode,
}

impl<'a> RateContext<'a> {
    pub fn new(model: &'a BlockMdp, policy: &'a BehaviorPolicy, mode: OccupancyMode) -> Result<Self> {
        let nominal = occupancy(model, policy)?;
        let eta = check_regularity(model, policy, 1.0).eta;
        Ok(Self { model, policy, nominal, eta, mode })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn nominal_occupancy(&self) -> &OccupancyTable {
        &self.nominal
    }

    /// Upper end `n / (S eta^2)` of the admissible scales.
    pub fn c_max(&self) -> f64 {
        self.model.n_contexts() as f64 / (self.model.n_states() as f64 * self.eta * self.eta)
    }

    /// Occupancy used to weight `I_j(x; c)`.
    pub fn occupancy_for(&self, x: usize, j: usize, c: f64) -> Result<OccupancyTable> {
        match self.mode {
            OccupancyMode::Nominal => Ok(self.nominal.clone()),
            OccupancyMode::Alternate => occupancy(&alternate_model(self.model, x, j, c)?, self.policy),
        }
    }

    /// `I_j(x; c)`, `+inf` outside the admissible range.
    pub fn divergence(&self, x: usize, j: usize, c: f64) -> Result<f64> {
        check_pair(self.model, x, j)?;
        if !(c > 0.0) || c > self.c_max() {
            return Ok(f64::INFINITY);
        }
        let occ = match self.occupancy_for(x, j, c) {
            Ok(o) => o,
            Err(Error::OutOfRange(_)) | Err(Error::InvalidModel(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        Ok(divergence_with(self.model, x, j, c, &occ))
    }

    /// `(c, I_j(x; c))` on the logarithmic grid.
    pub fn profile(&self, x: usize, j: usize) -> Result<Vec<(f64, f64)>> {
        log_grid(self.c_max())
            .into_iter()
            .map(|c| Ok((c, self.divergence(x, j, c)?)))
            .collect()
    }

    /// `inf_c I_j(x; c)` as `(c*, value, grid profile)`.
    pub fn minimize(&self, x: usize, j: usize) -> Result<(f64, f64, Profile)> {
        let profile = self.profile(x, j)?;
        if profile.is_empty() {
            return Ok((f64::NAN, f64::INFINITY, profile));
        }
        let k = (0..profile.len())
            .min_by(|&a, &b| profile[a].1.total_cmp(&profile[b].1).then(a.cmp(&b)))
            .unwrap_or(0);
        if !profile[k].1.is_finite() {
            return Ok((profile[k].0, f64::INFINITY, profile));
        }
        let lo = if k == 0 { C_MIN } else { profile[k - 1].0 };
        let hi = if k + 1 == profile.len() { self.c_max() } else { profile[k + 1].0 };
        let f = |c: f64| self.divergence(x, j, c);
        let (mut c, mut v) = golden_section(f, lo, hi)?;
        if profile[k].1 < v {
            (c, v) = profile[k];
        }
        Ok((c, v, profile))
    }

    /// `I(x) = min_{j != f(x)} inf_c I_j(x; c)`; ties go to the lowest `j`.
    pub fn rate(&self, x: usize) -> Result<RateEntry> {
        let i = self.model.state_of(x);
        let mut best: Option<RateEntry> = None;
        for j in (0..self.model.n_states()).filter(|&j| j != i) {
            let (c, v, profile) = self.minimize(x, j)?;
            if best.as_ref().is_none_or(|b| v < b.value) {
                best = Some(RateEntry { context: x, value: v, state: j, scale: c, profile });
            }
        }
        best.ok_or_else(|| Error::InvalidModel("rate function needs S >= 2".into()))
    }

    /// Rate of every context and `I = min_x I(x)`.
    pub fn rate_all(&self) -> Result<RateResult> {
        let entries: Vec<RateEntry> =
            (0..self.model.n_contexts()).into_par_iter().map(|x| self.rate(x)).collect::<Result<_>>()?;
        let aggregate = entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        Ok(RateResult { entries, aggregate })
    }

    /// `I~_j(x; c)` weighted by the nominal occupancy.
    pub fn itilde(&self, x: usize, j: usize, c: f64) -> Result<f64> {
        alt_divergence_itilde(self.model, x, j, c, &self.nominal)
    }
}

/// `I_j(x; c)` for a given occupancy table.
pub fn divergence_with(m: &BlockMdp, x: usize, j: usize, c: f64, occ: &OccupancyTable) -> f64 {
    let i = m.state_of(x);
    let q = m.own_emission(x);
    let n = m.n_contexts() as f64;
    let mut total = 0.0;
    for a in 0..m.n_actions() {
        for s in 0..m.n_states() {
            let w = occ.get(s, a);
            let (pj, pi) = (m.p(s, a, j), m.p(s, a, i));
            total += wlog(c * q * pj * w, c * pj, pi);
            let (pjs, pis) = (m.p(j, a, s), m.p(i, a, s));
            total += wlog(c * q * occ.get(j, a) * pjs, pjs, pis);
            let stay = 1.0 - c * q * pj;
            if stay < 0.0 {
                return f64::INFINITY;
            }
            total += wlog(stay * w, stay, 1.0 - q * pi);
        }
    }
    n * total
}

/// `n KL(p_in_Phi || p_in_Psi(c)) + c n q(x|f(x)) sum_a m(f(x),a) KL(p_out(f(x),a) || p_out(j,a))`.
pub fn alt_divergence_itilde(m: &BlockMdp, x: usize, j: usize, c: f64, occ: &OccupancyTable) -> Result<f64> {
    let i = check_pair(m, x, j)?;
    if !(c > 0.0) {
        return Ok(f64::INFINITY);
    }
    let q = m.own_emission(x);
    let n = m.n_contexts() as f64;
    let mut inward = 0.0;
    for a in 0..m.n_actions() {
        for s in 0..m.n_states() {
            let w = occ.get(s, a);
            let (pi, pj) = (m.p(s, a, i), m.p(s, a, j));
            let psi_rest = w * (1.0 - c * pj * q);
            if psi_rest < 0.0 {
                return Ok(f64::INFINITY);
            }
            inward += kl([(w * pi * q, c * w * pj * q), (w * (1.0 - pi * q), psi_rest)].into_iter());
        }
    }
    let mut outward = 0.0;
    for a in 0..m.n_actions() {
        let d = kl((0..m.n_states()).map(|s| (m.p(i, a, s), m.p(j, a, s))));
        outward += occ.get(i, a) * d;
    }
    Ok(n * inward + c * n * q * outward)
}

/// `c` values `exp(linspace(ln C_MIN, ln c_max, 64))`; empty if `c_max <= C_MIN`.
pub fn log_grid(c_max: f64) -> Vec<f64> {
    if !(c_max > C_MIN) {
        return Vec::new();
    }
    let (lo, hi) = (C_MIN.ln(), c_max.ln());
    (0..GRID_POINTS)
        .map(|k| {
            if k + 1 == GRID_POINTS {
                c_max
            } else {
                (lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).exp()
            }
        })
        .collect()
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > C_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// A latent state `j` and scale `c` with `p(f(x)|s,a) = c p(j|s,a)` and
/// `p(s|f(x),a) = p(s|j,a)` for all `(s, a)`, if one exists.
pub fn rate_zero_conditions(m: &BlockMdp, x: usize) -> Option<(usize, f64)> {
    let i = m.state_of(x);
    let (ns, na) = (m.n_states(), m.n_actions());
    'cand: for j in (0..ns).filter(|&j| j != i) {
        let reference = (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).find(|&(s, a)| m.p(s, a, j) > 0.0);
        let Some((s0, a0)) = reference else { continue };
        let c = m.p(s0, a0, i) / m.p(s0, a0, j);
        if !(c > 0.0) {
            continue;
        }
        for s in 0..ns {
            for a in 0..na {
                if (m.p(s, a, i) - c * m.p(s, a, j)).abs() > WITNESS_TOL
                    || (m.p(i, a, s) - m.p(j, a, s)).abs() > WITNESS_TOL
                {
                    continue 'cand;
                }
            }
        }
        return Some((j, c));
    }
    None
}

/// `min_{s' != s''} || b(s') - b(s'') ||_1` with
/// `b(s, a | s') = p(s'|s,a) nu(s,a) / sum p(s'|.,.) nu(.,.)`; `nu` is `S x A`.
pub fn gamma_separability(m: &BlockMdp, nu: &DMatrix<f64>) -> Result<f64> {
    let (ns, na) = (m.n_states(), m.n_actions());
    if nu.nrows() != ns || nu.ncols() != na {
        return Err(Error::DimensionMismatch(format!("nu must be {ns}x{na}")));
    }
    if nu.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("nu must have full support".into()));
    }
    let backward: Vec<Vec<f64>> = (0..ns)
        .map(|t| {
            let raw: Vec<f64> = (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| m.p(s, a, t) * nu[(s, a)]).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| if z > 0.0 { v / z } else { 0.0 }).collect()
        })
        .collect();
    let mut gap = f64::INFINITY;
    for s in 0..ns {
        for t in (s + 1)..ns {
            let d: f64 = backward[s].iter().zip(&backward[t]).map(|(a, b)| (a - b).abs()).sum();
            gap = gap.min(d);
        }
    }
    Ok(gap)
}

/// Forward and backward conditions for `x1`, `x2` under a full-support
/// `u` over contexts and actions (`n x A`).
pub fn kinematic_inseparable(m: &BlockMdp, x1: usize, x2: usize, u: &DMatrix<f64>) -> Result<bool> {
    let (n, na, ns) = (m.n_contexts(), m.n_actions(), m.n_states());
    if u.nrows() != n || u.ncols() != na {
        return Err(Error::DimensionMismatch(format!("u must be {n}x{na}")));
    }
    if u.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("u must have full support".into()));
    }
    let (s1, s2) = (m.state_of(x1), m.state_of(x2));
    for a in 0..na {
        for s in 0..ns {
            if (m.p(s1, a, s) - m.p(s2, a, s)).abs() > WITNESS_TOL {
                return Ok(false);
            }
        }
    }
    let inflow = |t: usize| -> f64 { (0..n).flat_map(|x| (0..na).map(move |a| (x, a))).map(|(x, a)| m.p(m.state_of(x), a, t) * u[(x, a)]).sum() };
    let (z1, z2) = (inflow(s1), inflow(s2));
    for s in 0..ns {
        for a in 0..na {
            if (m.p(s, a, s1) / z1 - m.p(s, a, s2) / z2).abs() > WITNESS_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Ten contexts alternating between two states (`f(x) = x mod 2`), uniform
/// emissions and initial law, `H = 10`, uniform policy over two actions,
/// `p(.|s, 0) = p1[s]` and a uniform second action.
pub fn ten_context_example(p1: [[f64; 2]; 2]) -> Result<(BlockMdp, BehaviorPolicy)> {
    let k1 = DMatrix::from_row_slice(2, 2, &[p1[0][0], p1[0][1], p1[1][0], p1[1][1]]);
    let latent = LatentModel::new(vec![k1, DMatrix::from_element(2, 2, 0.5)])?;
    let decoder: Vec<usize> = (0..10).map(|x| x % 2).collect();
    let q = DMatrix::from_fn(2, 10, |s, x| if x % 2 == s { 0.2 } else { 0.0 });
    let m = BlockMdp::new(latent, decoder, q, vec![0.1; 10], 10)?;
    Ok((m, BehaviorPolicy::uniform(10, 2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_two_cluster_instance;
    use approx::assert_relative_eq;

    /// Ten contexts, odd ids (1-based) in state 0, uniform q, pi and mu.
    fn example(p1: [[f64; 2]; 2]) -> (BlockMdp, BehaviorPolicy) {
        ten_context_example(p1).unwrap()
    }

    const MIXING: [[f64; 2]; 2] = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
    const UNIFORM: [[f64; 2]; 2] = [[0.5, 0.5], [0.5, 0.5]];

    #[test]
    fn alternate_occupancy_values() {
        let (m, pi) = example(MIXING);
        let psi = alternate_model(&m, 0, 1, 0.8).unwrap();
        let occ = occupancy(&psi, &pi).unwrap();
        assert_relative_eq!(occ.get(0, 0), 73567181.0 / 302330880.0, epsilon = 1e-12);
        assert_relative_eq!(occ.total(), 1.0, epsilon = 1e-12);
        let (m, pi) = example(UNIFORM);
        let occ = occupancy(&alternate_model(&m, 0, 1, 1.0).unwrap(), &pi).unwrap();
        assert_relative_eq!(occ.get(0, 0), 11.0 / 45.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_everything_occupancy() {
        let (m, pi) = example(UNIFORM);
        let occ = occupancy(&m, &pi).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert_relative_eq!(occ.get(s, a), 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn alternate_model_is_valid() {
        let (m, _) = example(MIXING);
        let psi = alternate_model(&m, 0, 1, 0.8).unwrap();
        assert_eq!(psi.state_of(0), 1);
        assert_relative_eq!(psi.q(1, 0), 0.16, epsilon = 1e-15);
        assert_relative_eq!(psi.q(0, 2), 0.25, epsilon = 1e-15);
        assert_relative_eq!(psi.q(1, 1), 0.84 * 0.2, epsilon = 1e-15);
        assert_relative_eq!(psi.emission().row(1).sum(), 1.0, epsilon = 1e-12);
        assert!(alternate_model(&m, 0, 0, 1.0).is_err());
        assert!(alternate_model(&m, 0, 1, 6.0).is_err());
    }

    #[test]
    fn uniform_case_zero_at_one() {
        let (m, pi) = example(UNIFORM);
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        assert_relative_eq!(ctx.c_max(), 5.0, epsilon = 1e-12);
        assert!(ctx.divergence(0, 1, 1.0).unwrap().abs() < 1e-12);
        let r = ctx.rate(0).unwrap();
        assert!(r.value.abs() <= 1e-8);
        assert!((r.scale - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn uniform_case_profile() {
        let (m, pi) = example(UNIFORM);
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        for c in [0.5, 2.0, 3.0] {
            let expect = c * f64::ln(c) + (10.0 - c) * ((10.0 - c) / 9.0).ln();
            assert_relative_eq!(ctx.divergence(0, 1, c).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixing_case_minimum() {
        let (m, pi) = example(MIXING);
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        let r = ctx.rate(0).unwrap();
        assert!((r.value - 0.2127).abs() <= 0.05 * 0.2127, "I = {}", r.value);
        assert!((r.scale - 0.8023).abs() <= 0.05, "c = {}", r.scale);
        assert!(rate_zero_conditions(&m, 0).is_none());
    }

    #[test]
    fn small_c_diverges() {
        let (m, pi) = example(MIXING);
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        assert!(ctx.divergence(0, 1, 1e-6).unwrap() > ctx.divergence(0, 1, 1.0).unwrap());
        assert_eq!(ctx.divergence(0, 1, ctx.c_max() * 1.01).unwrap(), f64::INFINITY);
        assert!(ctx.divergence(0, 0, 1.0).is_err());
    }

    #[test]
    fn eps_zero_has_zero_rate_everywhere() {
        let (m, pi) = generate_two_cluster_instance(10, 0.0, 6, 0).unwrap();
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        let all = ctx.rate_all().unwrap();
        assert!(all.aggregate.abs() < 1e-8);
        assert!(!all.is_positive(1e-6));
        assert_eq!(rate_zero_conditions(&m, 3), Some((0, 1.0)));
        assert!(alt_divergence_itilde(&m, 3, 0, 1.0, ctx.nominal_occupancy()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scaled_inflow_witness() {
        // p(0|s,a) = 2 p(1|s,a) for every (s,a) and identical out-rows.
        let k = DMatrix::from_row_slice(3, 3, &[0.4, 0.2, 0.4, 0.4, 0.2, 0.4, 0.2, 0.1, 0.7]);
        let latent = LatentModel::new(vec![k]).unwrap();
        let decoder = vec![0, 0, 1, 1, 2, 2];
        let q = DMatrix::from_fn(3, 6, |s, x| if x / 2 == s { 0.5 } else { 0.0 });
        let m = BlockMdp::new(latent, decoder, q, vec![1.0 / 6.0; 6], 5).unwrap();
        let (j, c) = rate_zero_conditions(&m, 0).unwrap();
        assert_eq!(j, 1);
        assert_relative_eq!(c, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sandwich_on_mixing_case() {
        let (m, pi) = example(MIXING);
        let ctx = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap();
        let c = 0.8;
        let (i, it) = (ctx.divergence(0, 1, c).unwrap(), ctx.itilde(0, 1, c).unwrap());
        let eta = ctx.eta();
        assert!(f64::min(f64::min(1.0, c), f64::min(1.0 / c, 1.0 / eta)) * it <= i);
        assert!(i <= f64::max(f64::max(1.0, c), f64::max(1.0 / c, eta)) * it);
    }

    #[test]
    fn nominal_mode_is_close_on_uniform_policy() {
        let (m, pi) = example(MIXING);
        let a = RateContext::new(&m, &pi, OccupancyMode::Alternate).unwrap().rate(0).unwrap();
        let b = RateContext::new(&m, &pi, OccupancyMode::Nominal).unwrap().rate(0).unwrap();
        assert!((a.value - b.value).abs() < 0.1 * a.value);
    }

    #[test]
    fn separability_diagnostics() {
        let (m0, _) = generate_two_cluster_instance(6, 0.0, 4, 0).unwrap();
        let nu = DMatrix::from_element(2, 2, 0.25);
        assert!(gamma_separability(&m0, &nu).unwrap().abs() < 1e-15);
        let (m, _) = example(MIXING);
        assert!(gamma_separability(&m, &nu).unwrap() > 0.0);
        assert!(gamma_separability(&m, &DMatrix::zeros(2, 2)).is_err());

        let u = DMatrix::from_element(6, 2, 1.0 / 12.0);
        let (m2, _) = generate_two_cluster_instance(6, 0.2, 4, 0).unwrap();
        assert!(kinematic_inseparable(&m2, 0, 2, &u).unwrap());
        assert!(!kinematic_inseparable(&m2, 0, 1, &u).unwrap());
        assert!(kinematic_inseparable(&m0, 0, 1, &u).unwrap());
    }

    #[test]
    fn log_grid_shape() {
        let g = log_grid(5.0);
        assert_eq!(g.len(), GRID_POINTS);
        assert_relative_eq!(g[0], C_MIN, epsilon = 1e-18);
        assert_eq!(*g.last().unwrap(), 5.0);
        assert!(log_grid(1e-5).is_empty());
    }
}

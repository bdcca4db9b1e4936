//! Delta-mixture witnesses for the moment bounds and a brute-force grid oracle.
//!
//! The oracle solves the moment problem `sup Pr(event)` subject to a fixed mean and
//! variance by enumerating every distribution supported on two or three points of a
//! grid. Extremal distributions of a mean/variance problem have at most three atoms,
//! so the enumeration converges to the true supremum as the grid is refined. It does
//! not use any closed-form bound and serves as the independent check for [`bounds`].
//!
//! [`bounds`]: crate::bounds

use crate::bounds::{Interval, Moments};
use crate::error::{invalid, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Masses within this distance below zero are treated as zero.
const MASS_TOL: f64 = 1e-12;

/// A finite distribution: sorted, distinct support points with probability masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    points: Vec<(f64, f64)>,
}

impl DiscreteDist {
    /// Validates and sorts `(location, mass)` pairs. Masses in `[-1e-12, 0)` are
    /// clamped to zero; zero-mass atoms are dropped.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("distribution needs at least one point"));
        }
        for (x, p) in points.iter_mut() {
            if !x.is_finite() || !p.is_finite() {
                return Err(invalid(format!("non-finite atom ({x}, {p})")));
            }
            if *p < -MASS_TOL {
                return Err(invalid(format!("negative mass {p} at {x}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        points.retain(|&(_, p)| p > 0.0);
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("support points must be distinct"));
        }
        let total: f64 = points.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|&(x, p)| p * x).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.points.iter().map(|&(x, p)| p * (x - mean) * (x - mean)).sum()
    }

    /// Total mass of the atoms satisfying `pred`.
    pub fn prob(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.points.iter().filter(|&&(x, _)| pred(x)).map(|&(_, p)| p).sum()
    }

    pub fn event_prob(&self, event: &Event) -> f64 {
        self.prob(|x| event.contains(x))
    }
}

/// Exact `(mean, variance)` of a discrete distribution. The variance may be zero.
pub fn moments_of(d: &DiscreteDist) -> (f64, f64) {
    (d.mean(), d.variance())
}

/// Event whose probability the oracle maximizes. All events use closed thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// `x ≥ η`
    Tail(f64),
    /// `x ≤ η₁ or x ≥ η₂`
    Outside(Interval),
    /// `η₁ ≤ x ≤ η₂`
    Inside(Interval),
}

impl Event {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            Event::Tail(eta) => x >= *eta,
            Event::Outside(iv) => x <= iv.lo() || x >= iv.hi(),
            Event::Inside(iv) => iv.contains(x),
        }
    }

    fn clamped(&self, lo: f64, hi: f64) -> Result<Event> {
        let c = |v: f64| v.clamp(lo, hi);
        Ok(match self {
            Event::Tail(eta) => Event::Tail(c(*eta)),
            Event::Outside(iv) => Event::Outside(clamp_interval(iv, lo, hi)?),
            Event::Inside(iv) => Event::Inside(clamp_interval(iv, lo, hi)?),
        })
    }
}

fn clamp_interval(iv: &Interval, lo: f64, hi: f64) -> Result<Interval> {
    let (a, b) = (iv.lo().clamp(lo, hi), iv.hi().clamp(lo, hi));
    if a < b {
        Interval::new(a, b)
    } else {
        Err(Error::Infeasible(format!("interval ({}, {}) collapses when clamped to the grid", iv.lo(), iv.hi())))
    }
}

/// Equally spaced candidate support points `x_min, x_min + step, …, x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub step: f64,
}

impl Grid {
    /// `[μ − 6σ, μ + 6σ]` with step `σ/100`.
    pub fn around(m: &Moments) -> Self {
        let sd = m.sd();
        Self { x_min: m.mu() - 6.0 * sd, x_max: m.mu() + 6.0 * sd, step: sd / 100.0 }
    }

    fn points(&self) -> Vec<f64> {
        let n = ((self.x_max - self.x_min) / self.step).round() as usize;
        (0..=n).map(|k| self.x_min + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub sup_prob: f64,
    pub witness: DiscreteDist,
    pub grid_step: f64,
}

/// Two-point distribution attaining the one-sided bound at `η > μ`: mass
/// `1/(1+η̃²)` at `η` and the rest at `μ − σ/η̃`.
pub fn construct_tail_extremal(m: &Moments, eta: f64) -> Result<DiscreteDist> {
    if !eta.is_finite() || eta < m.mu() {
        return Err(invalid(format!("tail extremal needs eta >= mu, got {eta}")));
    }
    let t = m.standardize(eta);
    if t <= 0.0 {
        return Err(Error::DegenerateThreshold("at eta = mu the bound 1 is approached but not attained".into()));
    }
    let upper = 1.0 / (1.0 + t * t);
    DiscreteDist::new(vec![(eta, upper), (m.destandardize(-1.0 / t), 1.0 - upper)])
}

/// Symmetric three-point spike: mass `1−ε` at the mean and `ε/2` at `μ ± σ/√ε`.
pub fn construct_spike(m: &Moments, eps: f64) -> Result<DiscreteDist> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("spike weight must be in (0, 1), got {eps}")));
    }
    let reach = 1.0 / eps.sqrt();
    DiscreteDist::new(vec![
        (m.destandardize(-reach), eps / 2.0),
        (m.mu(), 1.0 - eps),
        (m.destandardize(reach), eps / 2.0),
    ])
}

/// Two-point distribution with all of its mass outside `[η₁, η₂]`, available when
/// `η₁ < μ < η₂` and `|η̃₁|·η̃₂ < 1`.
pub fn construct_outside_extremal(m: &Moments, iv: &Interval) -> Result<DiscreteDist> {
    let (t1, t2) = (m.standardize(iv.lo()), m.standardize(iv.hi()));
    if !(t1 < 0.0 && t2 > 0.0) || -t1 * t2 >= 1.0 {
        return Err(Error::Infeasible(format!(
            "no two-point distribution avoids ({}, {}) for these moments",
            iv.lo(),
            iv.hi()
        )));
    }
    let a1 = -t1;
    let reach = a1.max(t2).max(1.0);
    // The far atom goes on the side of the threshold that set `reach`; the near atom
    // at ∓1/reach then clears the other threshold because a1·t2 < 1.
    let lambda = if a1 > t2 && a1 > 1.0 { -reach } else { reach };
    let far = if lambda == t2 {
        iv.hi()
    } else if lambda == t1 {
        iv.lo()
    } else {
        m.destandardize(lambda)
    };
    let l2 = lambda * lambda;
    DiscreteDist::new(vec![(m.destandardize(-1.0 / lambda), l2 / (l2 + 1.0)), (far, 1.0 / (l2 + 1.0))])
}

/// Candidate support of up to three grid indices and the masses solving the moment
/// equations on the standardized grid.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    prob: f64,
    idx: [usize; 3],
    mass: [f64; 3],
    atoms: usize,
}

impl Candidate {
    /// Higher probability wins; ties go to the support with the smallest locations.
    fn better_than(&self, other: &Candidate) -> bool {
        if self.prob != other.prob {
            return self.prob > other.prob;
        }
        self.idx[..self.atoms] < other.idx[..other.atoms]
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.better_than(&x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn clean(p: f64) -> Option<f64> {
    if p >= -MASS_TOL {
        Some(p.max(0.0))
    } else {
        None
    }
}

/// Exhaustive search over two- and three-point grid distributions with moments `m`.
pub fn oracle_max_event(m: &Moments, event: &Event, grid: &Grid) -> Result<OracleResult> {
    let sd = m.sd();
    if !(grid.step > 0.0) || !grid.step.is_finite() {
        return Err(invalid(format!("grid step must be positive, got {}", grid.step)));
    }
    let slack = 1e-9 * sd;
    if grid.x_min > m.mu() - 6.0 * sd + slack || grid.x_max < m.mu() + 6.0 * sd - slack {
        return Err(invalid("grid must cover [mu - 6 sd, mu + 6 sd]"));
    }
    let xs = grid.points();
    let event = event.clamped(grid.x_min, grid.x_max)?;
    let ts: Vec<f64> = xs.iter().map(|&x| m.standardize(x)).collect();
    let hit: Vec<bool> = xs.iter().map(|&x| event.contains(x)).collect();
    let first_pos = ts.partition_point(|&t| t <= 0.0);

    let best = (0..first_pos)
        .into_par_iter()
        .map(|i| best_with_lowest_atom(i, first_pos, &ts, &hit))
        .reduce(|| None, pick)
        .ok_or_else(|| Error::Infeasible("no feasible distribution on this grid".into()))?;

    let mut atoms = Vec::with_capacity(best.atoms);
    for k in 0..best.atoms {
        atoms.push((xs[best.idx[k]], best.mass[k]));
    }
    // Renormalize away the accumulated rounding of the Lagrange masses.
    let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
    for a in atoms.iter_mut() {
        a.1 /= total;
    }
    let witness = DiscreteDist::new(atoms)?;
    let sup_prob = witness.event_prob(&event);
    Ok(OracleResult { sup_prob, witness, grid_step: grid.step })
}

/// Best candidate whose smallest atom is grid index `i` (which must be at `t < 0`).
fn best_with_lowest_atom(i: usize, first_pos: usize, ts: &[f64], hit: &[bool]) -> Option<Candidate> {
    let ti = ts[i];
    let mut best: Option<Candidate> = None;
    let mut consider = |c: Candidate| {
        if best.map_or(true, |b| c.better_than(&b)) {
            best = Some(c);
        }
    };

    // Any mean-zero, unit-variance support needs an atom at or beyond -1/ti on the right.
    let reach = -1.0 / ti;
    let l_start = ts.partition_point(|&t| t < reach - 1e-9).max(first_pos);
    for l in l_start..ts.len() {
        let tl = ts[l];
        let width = tl - ti;

        // two atoms: requires ti * tl = -1
        if (1.0 + ti * tl).abs() <= 1e-9 {
            let pl = -ti / width;
            let pi = tl / width;
            let prob = f64::from(u8::from(hit[i])) * pi + f64::from(u8::from(hit[l])) * pl;
            consider(Candidate { prob, idx: [i, l, 0], mass: [pi, pl, 0.0], atoms: 2 });
        }

        // three atoms: middle index j strictly between, with -1/tl <= tj <= -1/ti
        let lo_t = -1.0 / tl;
        let j_start = ts.partition_point(|&t| t < lo_t - 1e-9).max(i + 1);
        for j in j_start..l {
            let tj = ts[j];
            if tj > reach + 1e-9 {
                break;
            }
            let Some(pi) = clean((1.0 + tj * tl) / ((ti - tj) * (ti - tl))) else { continue };
            let Some(pj) = clean((1.0 + ti * tl) / ((tj - ti) * (tj - tl))) else { continue };
            let Some(pl) = clean((1.0 + ti * tj) / ((tl - ti) * (tl - tj))) else { continue };
            let mut prob = 0.0;
            if hit[i] {
                prob += pi;
            }
            if hit[j] {
                prob += pj;
            }
            if hit[l] {
                prob += pl;
            }
            consider(Candidate { prob, idx: [i, j, l], mass: [pi, pj, pl], atoms: 3 });
        }
    }
    best
}

/// A `k`-point distribution with exactly the moments `m`, deterministic in `seed`.
///
/// `k − 2` atoms are drawn freely; the last two are placed to absorb the remaining mean
/// and second moment. Draws whose remainder is infeasible are retried.
pub fn random_moment_dist(m: &Moments, k: usize, seed: u64) -> Result<DiscreteDist> {
    const MAX_ATTEMPTS: usize = 1000;
    if k < 2 {
        return Err(invalid(format!("need at least two support points, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(atoms) = try_standard_atoms(&mut rng, k) {
            let points = atoms.into_iter().map(|(t, p)| (m.destandardize(t), p)).collect();
            if let Ok(d) = DiscreteDist::new(points) {
                if d.len() == k {
                    return Ok(d);
                }
            }
        }
    }
    Err(Error::Generation(MAX_ATTEMPTS))
}

/// Standardized atoms (mean 0, second moment 1).
fn try_standard_atoms(rng: &mut ChaCha8Rng, k: usize) -> Option<Vec<(f64, f64)>> {
    let free = k - 2;
    // Share of the mass carried by the free atoms.
    let free_share = if free == 0 { 0.0 } else { rng.random_range(0.05..0.95) };
    let raw: Vec<f64> = (0..free).map(|_| rng.random_range(0.05..1.0)).collect();
    let raw_sum: f64 = raw.iter().sum();
    let spread = rng.random_range(0.5..3.0);

    let mut atoms = Vec::with_capacity(k);
    let (mut m1, mut m2) = (0.0, 0.0);
    for w in raw {
        let p = free_share * w / raw_sum;
        let t = rng.random_range(-spread..spread);
        m1 += p * t;
        m2 += p * t * t;
        atoms.push((t, p));
    }

    // Remaining mass r must carry first moment -m1 and second moment 1 - m2.
    let r = 1.0 - free_share;
    let centre = -m1 / r;
    let within = (1.0 - m2) / r - centre * centre;
    if !(within > 1e-6) {
        return None;
    }
    let q: f64 = rng.random_range(0.02..0.98);
    let sd = within.sqrt();
    atoms.push((centre - sd * ((1.0 - q) / q).sqrt(), r * q));
    atoms.push((centre + sd * (q / (1.0 - q)).sqrt(), r * (1.0 - q)));
    Some(atoms)
}

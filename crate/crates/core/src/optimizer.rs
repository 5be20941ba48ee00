//! Minimizers for non-submodular QPB energies.
//!
//! [`lsa_tr`] is a trust-region method: each step replaces every
//! supermodular pair by its first-order expansion around the current
//! labeling, adds a Hamming penalty that keeps the step local, and solves
//! the resulting submodular problem exactly by min-cut. The penalty weight
//! is steered by the ratio of actual to predicted energy reduction.
//!
//! [`icm`] and [`brute_force`] are the baseline and the exact oracle.

use std::time::Instant;

use rayon::prelude::*;

use crate::energy::{Adjacency, PairTerm, QpbEnergy};
use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, GridLabeling};
use crate::maxflow::minimize_submodular;

/// Largest instance [`brute_force`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// Below this penalty weight the next solve drops the penalty entirely.
const MIN_TRUST_WEIGHT: f64 = 1e-9;

/// Relative decrease a move must achieve to count as an improvement.
const MIN_GAIN: f64 = 1e-12;

fn min_gain(energy: f64) -> f64 {
    MIN_GAIN * energy.abs().max(1.0)
}

/// Replaces each supermodular term `b x_p x_q` by
/// `b (x0_q x_p + x0_p x_q - x0_p x0_q)`. Exact at `anchor`.
pub fn linearize_supermodular(qpb: &QpbEnergy, anchor: &GridLabeling) -> Result<QpbEnergy> {
    ensure_same_dims(qpb.dims(), anchor.dims())?;
    let x0 = anchor.labels();
    let mut constant = qpb.constant();
    let mut linear = qpb.linear().to_vec();
    let mut pairs = Vec::with_capacity(qpb.pairs().len());
    for t in qpb.pairs() {
        if t.is_submodular() {
            pairs.push(*t);
            continue;
        }
        let (xp, xq) = (x0[t.p] as f64, x0[t.q] as f64);
        linear[t.p] += t.coeff * xq;
        linear[t.q] += t.coeff * xp;
        constant -= t.coeff * xp * xq;
    }
    Ok(QpbEnergy::from_parts(
        qpb.width(),
        qpb.height(),
        constant,
        linear,
        pairs,
    ))
}

/// Adds `weight * Hamming(x, anchor)` as unary terms.
fn with_hamming_penalty(qpb: &QpbEnergy, anchor: &GridLabeling, weight: f64) -> QpbEnergy {
    let mut constant = qpb.constant();
    let mut linear = qpb.linear().to_vec();
    for (a, &x0) in linear.iter_mut().zip(anchor.labels()) {
        if x0 == 1 {
            *a -= weight;
            constant += weight;
        } else {
            *a += weight;
        }
    }
    let pairs: Vec<PairTerm> = qpb.pairs().to_vec();
    QpbEnergy::from_parts(qpb.width(), qpb.height(), constant, linear, pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionParams {
    /// Initial Hamming-penalty weight.
    pub init: f64,
    /// Penalty multiplier after a rejected or poor step; a good step divides
    /// the penalty by its cube root.
    pub growth: f64,
    /// A rejected step with the penalty above this value ends the run.
    pub max: f64,
    /// Ratio threshold separating good steps from poor ones.
    pub tau: f64,
    pub max_iterations: usize,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        TrustRegionParams {
            init: 1.0,
            growth: 10.0,
            max: 1e6,
            tau: 0.25,
            max_iterations: 10_000,
        }
    }
}

impl TrustRegionParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.init <= 0.0 || !self.init.is_finite() {
            return bad(format!("trust-region init must be > 0, got {}", self.init));
        }
        if self.growth <= 1.0 || !self.growth.is_finite() {
            return bad(format!(
                "trust-region growth must be > 1, got {}",
                self.growth
            ));
        }
        if self.max.is_nan() || self.max < self.init {
            return bad(format!(
                "trust-region max ({}) must be >= init ({})",
                self.max, self.init
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!(
                "trust-region tau must be in (0, 1), got {}",
                self.tau
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Penalty weight used for this step (0 for methods without one).
    pub trust: f64,
    /// Current energy after the step.
    pub energy: f64,
    /// Hamming distance moved by the step; 0 when it was not taken.
    pub hamming_step: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub labeling: GridLabeling,
    pub energy: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub trace: Vec<TraceEntry>,
}

impl OptimizerReport {
    /// Trace as CSV `iteration,lambda_tr,energy,hamming_step`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,lambda_tr,energy,hamming_step\n");
        for t in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t.iteration, t.trust, t.energy, t.hamming_step
            ));
        }
        out
    }
}

/// Trust-region minimization from `init`.
pub fn lsa_tr(
    qpb: &QpbEnergy,
    init: &GridLabeling,
    params: &TrustRegionParams,
) -> Result<OptimizerReport> {
    lsa_tr_with(qpb, init, params, |_| {})
}

/// [`lsa_tr`] with a callback invoked after every step.
pub fn lsa_tr_with(
    qpb: &QpbEnergy,
    init: &GridLabeling,
    params: &TrustRegionParams,
    mut on_step: impl FnMut(&TraceEntry),
) -> Result<OptimizerReport> {
    params.validate()?;
    ensure_same_dims(qpb.dims(), init.dims())?;
    let start = Instant::now();

    let mut current = init.clone();
    let mut energy = qpb.evaluate(&current)?;
    let mut trust = params.init;
    // penalty at which the most recent step was rejected since the last accepted step
    let mut rejected_at: Option<f64> = None;
    let mut trace = Vec::new();
    let adj = Adjacency::new(qpb);

    for iteration in 1..=params.max_iterations {
        let model = linearize_supermodular(qpb, &current)?;
        let subproblem = with_hamming_penalty(&model, &current, trust);
        let (candidate, _) = minimize_submodular(&subproblem)?;
        let step = candidate.hamming(&current)?;
        let predicted = model.evaluate(&current)? - model.evaluate(&candidate)?;

        if step == 0 || predicted <= 0.0 {
            // nothing to gain inside this region; widen it unless a wider one already failed
            let entry = TraceEntry {
                iteration,
                trust,
                energy,
                hamming_step: 0,
                accepted: false,
            };
            on_step(&entry);
            trace.push(entry);
            let next = trust / params.growth;
            if trust == 0.0 || rejected_at.is_some_and(|r| next <= r) {
                match escape_step(qpb, &adj, &current, energy)? {
                    Some((labeling, e, entry_trust, step)) => {
                        accept_escape(&mut current, &mut energy, labeling, e);
                        let entry = TraceEntry {
                            iteration,
                            trust: entry_trust,
                            energy,
                            hamming_step: step,
                            accepted: true,
                        };
                        on_step(&entry);
                        trace.push(entry);
                        trust = params.init;
                        rejected_at = None;
                        continue;
                    }
                    None => break,
                }
            }
            trust = if next < MIN_TRUST_WEIGHT { 0.0 } else { next };
            continue;
        }

        let candidate_energy = qpb.evaluate(&candidate)?;
        let actual = energy - candidate_energy;
        let ratio = actual / predicted;
        let accepted = actual > min_gain(energy);
        if accepted {
            current = candidate;
            energy = candidate_energy;
            rejected_at = None;
        } else {
            rejected_at = Some(trust);
        }

        let entry = TraceEntry {
            iteration,
            trust,
            energy,
            hamming_step: if accepted { step } else { 0 },
            accepted,
        };
        on_step(&entry);
        trace.push(entry);

        if accepted && ratio >= params.tau {
            trust /= params.growth.cbrt();
            if trust < MIN_TRUST_WEIGHT {
                trust = 0.0;
            }
        } else {
            trust = trust.max(MIN_TRUST_WEIGHT) * params.growth;
            if !accepted && trust > params.max {
                match escape_step(qpb, &adj, &current, energy)? {
                    Some((labeling, e, entry_trust, step)) => {
                        accept_escape(&mut current, &mut energy, labeling, e);
                        let entry = TraceEntry {
                            iteration,
                            trust: entry_trust,
                            energy,
                            hamming_step: step,
                            accepted: true,
                        };
                        on_step(&entry);
                        trace.push(entry);
                        trust = params.init;
                        rejected_at = None;
                        continue;
                    }
                    None => break,
                }
            }
        }
    }

    Ok(OptimizerReport {
        energy: qpb.evaluate(&current)?,
        labeling: current,
        iterations: trace.len(),
        seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}

/// Last resort before stopping: the best strictly improving single flip.
/// The linear model is exact within Hamming distance one, so this is the
/// smallest trust region. Returns the new labeling, its energy, the penalty
/// to log (zero) and the step length.
fn escape_step(
    qpb: &QpbEnergy,
    adj: &Adjacency,
    current: &GridLabeling,
    energy: f64,
) -> Result<Option<(GridLabeling, f64, f64, usize)>> {
    let best_flip = (0..qpb.num_vars())
        .map(|p| (p, qpb.flip_delta(adj, current.labels(), p)))
        .filter(|&(_, d)| d < -min_gain(energy))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((p, _)) = best_flip else {
        return Ok(None);
    };
    let mut next = current.clone();
    next.labels_mut()[p] ^= 1;
    let e = qpb.evaluate(&next)?;
    Ok((e < energy - min_gain(energy)).then_some((next, e, 0.0, 1)))
}

fn accept_escape(current: &mut GridLabeling, energy: &mut f64, labeling: GridLabeling, e: f64) {
    *current = labeling;
    *energy = e;
}

/// Iterated conditional modes: raster-order single-pixel flips, each taken
/// only if it strictly lowers the energy, until a sweep changes nothing.
pub fn icm(qpb: &QpbEnergy, init: &GridLabeling) -> Result<OptimizerReport> {
    ensure_same_dims(qpb.dims(), init.dims())?;
    let start = Instant::now();
    let adj = Adjacency::new(qpb);
    let mut current = init.clone();
    let mut energy = qpb.evaluate(&current)?;
    let mut trace = Vec::new();
    loop {
        let mut changed = false;
        for p in 0..qpb.num_vars() {
            let delta = qpb.flip_delta(&adj, current.labels(), p);
            if delta < -min_gain(energy) {
                let x = current.labels_mut();
                x[p] = 1 - x[p];
                energy += delta;
                changed = true;
                trace.push(TraceEntry {
                    iteration: trace.len() + 1,
                    trust: 0.0,
                    energy,
                    hamming_step: 1,
                    accepted: true,
                });
            }
        }
        if !changed {
            break;
        }
    }
    Ok(OptimizerReport {
        energy: qpb.evaluate(&current)?,
        labeling: current,
        iterations: trace.len(),
        seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}

/// Exact minimum over all `2^n` labelings. Pixel `i` is bit `i` of the
/// enumeration counter; ties go to the smallest counter value.
pub fn brute_force(qpb: &QpbEnergy) -> Result<(GridLabeling, f64)> {
    let n = qpb.num_vars();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyVariables(n, BRUTE_FORCE_LIMIT));
    }
    let linear = qpb.linear();
    let pairs: Vec<(u32, f64)> = qpb
        .pairs()
        .iter()
        .map(|t| ((1u32 << t.p) | (1u32 << t.q), t.coeff))
        .collect();
    let eval = |mask: u32| -> f64 {
        let mut e = qpb.constant();
        for (i, a) in linear.iter().enumerate() {
            if mask >> i & 1 == 1 {
                e += a;
            }
        }
        for &(m, b) in &pairs {
            if mask & m == m {
                e += b;
            }
        }
        e
    };
    let better = |a: (f64, u32), b: (f64, u32)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let total: u64 = 1 << n;
    const CHUNK: u64 = 1 << 12;
    let (energy, mask) = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(total);
            (lo..hi)
                .map(|m| (eval(m as u32), m as u32))
                .fold((f64::INFINITY, u32::MAX), better)
        })
        .reduce(|| (f64::INFINITY, u32::MAX), better);
    let labels = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
    Ok((
        GridLabeling::new(qpb.width(), qpb.height(), labels)?,
        energy,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{assemble_energy, QpbBuilder};
    use crate::grid::{gaussian_data_term, ImageGrid, UnaryField};
    use crate::neighborhood::{NeighborhoodMode, NeighborhoodSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_qpb(rng: &mut ChaCha8Rng, w: usize, h: usize, submodular: bool) -> QpbEnergy {
        let n = w * h;
        let mut b = QpbBuilder::new(w, h);
        b.add_constant(rng.gen_range(-1.0..1.0));
        for p in 0..n {
            b.add_linear(p, rng.gen_range(-2.0..2.0)).unwrap();
        }
        for _ in 0..2 * n {
            let (p, q) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if p != q {
                let c: f64 = rng.gen_range(0.0..1.5);
                let c = if submodular || rng.gen_bool(0.5) {
                    -c
                } else {
                    c
                };
                b.add_pair(p, q, c).unwrap();
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn linearization_anchor_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let qpb = random_qpb(&mut rng, 4, 3, false);
            let x0 = GridLabeling::from_fn(4, 3, |_, _| rng.gen_bool(0.5)).unwrap();
            let lin = linearize_supermodular(&qpb, &x0).unwrap();
            assert!(lin.is_submodular());
            let (a, b) = (qpb.evaluate(&x0).unwrap(), lin.evaluate(&x0).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn linearization_at_constants() {
        let mut b = QpbBuilder::new(2, 1);
        b.add_pair(0, 1, 2.0).unwrap();
        let qpb = b.build().unwrap();

        let zeros = GridLabeling::zeros(2, 1).unwrap();
        let lin = linearize_supermodular(&qpb, &zeros).unwrap();
        assert!(lin.pairs().is_empty());
        assert_eq!(lin.linear(), &[0.0, 0.0]);
        assert_eq!(lin.constant(), 0.0);

        let ones = GridLabeling::ones(2, 1).unwrap();
        let lin = linearize_supermodular(&qpb, &ones).unwrap();
        assert_eq!(lin.linear(), &[2.0, 2.0]);
        assert_eq!(lin.constant(), -2.0);
    }

    #[test]
    fn lsa_tr_reaches_global_minimum_on_submodular_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let qpb = random_qpb(&mut rng, 4, 4, true);
            let (_, best) = minimize_submodular(&qpb).unwrap();
            let init = GridLabeling::zeros(4, 4).unwrap();
            let report = lsa_tr(&qpb, &init, &TrustRegionParams::default()).unwrap();
            assert!(report.energy <= best + 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn lsa_tr_descends_and_never_beats_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let qpb = random_qpb(&mut rng, 3, 3, false);
            let init = GridLabeling::from_fn(3, 3, |_, _| rng.gen_bool(0.5)).unwrap();
            let e0 = qpb.evaluate(&init).unwrap();
            let report = lsa_tr(&qpb, &init, &TrustRegionParams::default()).unwrap();
            let (_, best) = brute_force(&qpb).unwrap();
            assert!(report.energy <= e0);
            assert!(best <= report.energy + 1e-12);
            let accepted: Vec<f64> = report
                .trace
                .iter()
                .filter(|t| t.accepted)
                .map(|t| t.energy)
                .collect();
            for w in accepted.windows(2) {
                assert!(w[1] < w[0]);
            }
            let exact = qpb.evaluate(&report.labeling).unwrap();
            assert!((exact - report.energy).abs() <= 1e-9 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let qpb = QpbBuilder::new(1, 1).build().unwrap();
        let init = GridLabeling::zeros(1, 1).unwrap();
        for p in [
            TrustRegionParams {
                init: 0.0,
                ..Default::default()
            },
            TrustRegionParams {
                growth: 1.0,
                ..Default::default()
            },
            TrustRegionParams {
                tau: 1.0,
                ..Default::default()
            },
            TrustRegionParams {
                tau: 0.0,
                ..Default::default()
            },
            TrustRegionParams {
                max: 0.5,
                ..Default::default()
            },
        ] {
            assert!(lsa_tr(&qpb, &init, &p).is_err());
        }
    }

    #[test]
    fn icm_cases() {
        // purely unary: any start ends at the argmin
        let field = UnaryField::new(
            3,
            2,
            vec![0.0, 1.0, 0.5, 2.0, 0.0, 0.3],
            vec![1.0, 0.0, 0.6, 0.0, 2.0, 0.1],
        )
        .unwrap();
        let ns = NeighborhoodSystem::build(1, NeighborhoodMode::FullBox).unwrap();
        let qpb = assemble_energy(&field, 0.0, &ns).unwrap();
        let start = GridLabeling::ones(3, 2).unwrap();
        let r = icm(&qpb, &start).unwrap();
        assert_eq!(r.labeling, field.argmin());

        // a 1-flip-optimal start is returned unchanged
        let r2 = icm(&qpb, &r.labeling).unwrap();
        assert_eq!(r2.labeling, r.labeling);
        assert!(r2.trace.is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let qpb = random_qpb(&mut rng, 5, 5, false);
        let init = GridLabeling::from_fn(5, 5, |_, _| rng.gen_bool(0.5)).unwrap();
        let r = icm(&qpb, &init).unwrap();
        let mut prev = qpb.evaluate(&init).unwrap();
        for t in &r.trace {
            assert!(t.energy < prev);
            prev = t.energy;
        }
        // no single flip improves the result
        let adj = Adjacency::new(&qpb);
        for p in 0..25 {
            assert!(qpb.flip_delta(&adj, r.labeling.labels(), p) >= 0.0);
        }
    }

    #[test]
    fn brute_force_cases() {
        let mut b = QpbBuilder::new(1, 1);
        b.add_constant(0.5).add_linear(0, -1.0).unwrap();
        let (x, e) = brute_force(&b.build().unwrap()).unwrap();
        assert_eq!(x.labels(), &[1]);
        assert_eq!(e, -0.5);

        let big = QpbBuilder::new(5, 5).build().unwrap();
        assert!(matches!(
            brute_force(&big),
            Err(Error::TooManyVariables(25, 24))
        ));

        let img = ImageGrid::constant(4, 4, 0.5).unwrap();
        let field = gaussian_data_term(&img, 0.5, 0.5, 0.4).unwrap();
        let ns = NeighborhoodSystem::build(1, NeighborhoodMode::FullBox).unwrap();
        let qpb = assemble_energy(&field, 0.3, &ns).unwrap();
        let (_, e) = brute_force(&qpb).unwrap();
        let constant = field.cost0().iter().sum::<f64>();
        assert!((e - constant).abs() < 1e-12);
        assert_eq!(
            qpb.evaluate(&GridLabeling::zeros(4, 4).unwrap()).unwrap(),
            constant
        );
        let ones = qpb.evaluate(&GridLabeling::ones(4, 4).unwrap()).unwrap();
        assert!((ones - constant).abs() < 1e-12);

        // exact ties go to the smallest counter value
        let mut b = QpbBuilder::new(3, 1);
        b.add_linear(0, -1.0).unwrap().add_linear(2, -1.0).unwrap();
        b.add_linear(1, 0.5).unwrap();
        b.add_pair(0, 2, 1.0).unwrap();
        let (x, e) = brute_force(&b.build().unwrap()).unwrap();
        assert_eq!(e, -1.0);
        assert_eq!(x.labels(), &[1, 0, 0]);
    }

    #[test]
    fn brute_force_matches_min_cut_on_submodular() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let qpb = random_qpb(&mut rng, 3, 4, true);
            let (_, a) = brute_force(&qpb).unwrap();
            let (_, b) = minimize_submodular(&qpb).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}

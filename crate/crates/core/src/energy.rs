//! Squared-curvature energy over straight triple cliques and its exact
//! rewriting as a quadratic pseudo-boolean function.
//!
//! A clique `(a, b, c)` fires when its labels read `(0,1,0)` or `(1,0,1)`.
//! The indicator of that event equals `x_b + x_a x_c - x_a x_b - x_b x_c`,
//! so every clique contributes one linear term, two submodular pairs and
//! one supermodular pair, without auxiliary variables.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, GridLabeling, UnaryField};
use crate::neighborhood::{CliqueFamily, NeighborhoodSystem};

/// `1` iff the clique configuration is `(0,1,0)` or `(1,0,1)`.
#[inline]
pub fn delta_indicator(xa: u8, xb: u8, xc: u8) -> u8 {
    ((xa == xc) && (xa != xb)) as u8
}

/// Quadratic coefficient on an unordered pixel pair, stored with `p < q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub p: usize,
    pub q: usize,
    pub coeff: f64,
}

impl PairTerm {
    /// Negative coefficients favor equal labels and can be cut exactly.
    pub fn is_submodular(&self) -> bool {
        self.coeff <= 0.0
    }
}

/// `constant + sum_p a_p x_p + sum_{p<q} b_pq x_p x_q` over a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QpbEnergy {
    width: usize,
    height: usize,
    constant: f64,
    linear: Vec<f64>,
    pairs: Vec<PairTerm>,
}

impl QpbEnergy {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Pair terms sorted by `(p, q)`, one per pair.
    pub fn pairs(&self) -> &[PairTerm] {
        &self.pairs
    }

    pub fn is_submodular(&self) -> bool {
        self.pairs.iter().all(PairTerm::is_submodular)
    }

    pub fn supermodular_pairs(&self) -> impl Iterator<Item = &PairTerm> {
        self.pairs.iter().filter(|t| !t.is_submodular())
    }

    pub fn submodular_pairs(&self) -> impl Iterator<Item = &PairTerm> {
        self.pairs.iter().filter(|t| t.is_submodular())
    }

    pub fn evaluate(&self, labeling: &GridLabeling) -> Result<f64> {
        ensure_same_dims(self.dims(), labeling.dims())?;
        Ok(self.evaluate_labels(labeling.labels()))
    }

    /// Evaluation on a raw label slice of length `num_vars()`.
    pub fn evaluate_labels(&self, x: &[u8]) -> f64 {
        debug_assert_eq!(x.len(), self.linear.len());
        let mut e = self.constant;
        for (a, &xi) in self.linear.iter().zip(x) {
            if xi == 1 {
                e += a;
            }
        }
        for t in &self.pairs {
            if x[t.p] == 1 && x[t.q] == 1 {
                e += t.coeff;
            }
        }
        e
    }

    /// Change in energy from flipping variable `p` given neighbor lists.
    pub(crate) fn flip_delta(&self, adj: &Adjacency, x: &[u8], p: usize) -> f64 {
        let mut gain = self.linear[p];
        for &(q, b) in adj.neighbors(p) {
            if x[q] == 1 {
                gain += b;
            }
        }
        if x[p] == 1 {
            -gain
        } else {
            gain
        }
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        constant: f64,
        linear: Vec<f64>,
        pairs: Vec<PairTerm>,
    ) -> Self {
        QpbEnergy {
            width,
            height,
            constant,
            linear,
            pairs,
        }
    }
}

/// Symmetric neighbor lists over the pair terms of an energy.
#[derive(Debug, Clone)]
pub(crate) struct Adjacency {
    start: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Adjacency {
    pub(crate) fn new(energy: &QpbEnergy) -> Self {
        let n = energy.num_vars();
        let mut degree = vec![0usize; n + 1];
        for t in energy.pairs() {
            degree[t.p] += 1;
            degree[t.q] += 1;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + degree[i];
        }
        let mut fill = start.clone();
        let mut entries = vec![(0usize, 0.0f64); start[n]];
        for t in energy.pairs() {
            entries[fill[t.p]] = (t.q, t.coeff);
            fill[t.p] += 1;
            entries[fill[t.q]] = (t.p, t.coeff);
            fill[t.q] += 1;
        }
        Adjacency { start, entries }
    }

    pub(crate) fn neighbors(&self, p: usize) -> &[(usize, f64)] {
        &self.entries[self.start[p]..self.start[p + 1]]
    }
}

/// Accumulates terms; coefficients on a repeated pair are summed in
/// insertion order, which keeps assembly bit-reproducible.
#[derive(Debug, Clone)]
pub struct QpbBuilder {
    width: usize,
    height: usize,
    constant: f64,
    linear: Vec<f64>,
    pending: Vec<PairTerm>,
}

impl QpbBuilder {
    pub fn new(width: usize, height: usize) -> Self {
        QpbBuilder {
            width,
            height,
            constant: 0.0,
            linear: vec![0.0; width * height],
            pending: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_linear(&mut self, p: usize, a: f64) -> Result<&mut Self> {
        self.check_var(p)?;
        self.linear[p] += a;
        Ok(self)
    }

    pub fn add_pair(&mut self, p: usize, q: usize, b: f64) -> Result<&mut Self> {
        self.check_var(p)?;
        self.check_var(q)?;
        if p == q {
            return Err(Error::InvalidArgument(format!(
                "pair term on a single variable {p}"
            )));
        }
        let (p, q) = if p < q { (p, q) } else { (q, p) };
        self.pending.push(PairTerm { p, q, coeff: b });
        Ok(self)
    }

    pub fn add_fragment(&mut self, fragment: &CliqueFragment) -> Result<&mut Self> {
        for &(p, a) in &fragment.linear {
            self.add_linear(p, a)?;
        }
        for t in &fragment.pairs {
            self.add_pair(t.p, t.q, t.coeff)?;
        }
        Ok(self)
    }

    fn check_var(&self, p: usize) -> Result<()> {
        if p >= self.linear.len() {
            return Err(Error::InvalidArgument(format!(
                "variable {p} out of range for {} variables",
                self.linear.len()
            )));
        }
        Ok(())
    }

    pub fn build(self) -> Result<QpbEnergy> {
        let QpbBuilder {
            width,
            height,
            constant,
            linear,
            mut pending,
        } = self;
        if !constant.is_finite()
            || linear.iter().any(|a| !a.is_finite())
            || pending.iter().any(|t| !t.coeff.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        // stable: equal keys keep insertion order for the merge below
        pending.sort_by_key(|t| (t.p, t.q));
        let mut pairs: Vec<PairTerm> = Vec::with_capacity(pending.len());
        for t in pending {
            match pairs.last_mut() {
                Some(last) if last.p == t.p && last.q == t.q => last.coeff += t.coeff,
                _ => pairs.push(t),
            }
        }
        pairs.retain(|t| t.coeff != 0.0);
        Ok(QpbEnergy {
            width,
            height,
            constant,
            linear,
            pairs,
        })
    }
}

/// The pseudo-boolean form of one weighted clique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CliqueFragment {
    pub linear: Vec<(usize, f64)>,
    pub pairs: Vec<PairTerm>,
}

impl CliqueFragment {
    /// Evaluates the fragment with labels supplied by `label(pixel)`.
    pub fn evaluate(&self, label: impl Fn(usize) -> u8) -> f64 {
        let mut e = 0.0;
        for &(p, a) in &self.linear {
            if label(p) == 1 {
                e += a;
            }
        }
        for t in &self.pairs {
            if label(t.p) == 1 && label(t.q) == 1 {
                e += t.coeff;
            }
        }
        e
    }
}

/// `w * delta(x_a, x_b, x_c) = w x_b + w x_a x_c - w x_a x_b - w x_b x_c`.
pub fn decompose_clique(w: f64, a: usize, b: usize, c: usize) -> Result<CliqueFragment> {
    if a == b || b == c || a == c {
        return Err(Error::InvalidArgument(format!(
            "clique pixels must be distinct, got ({a}, {b}, {c})"
        )));
    }
    if w == 0.0 {
        return Ok(CliqueFragment::default());
    }
    let pair = |p: usize, q: usize, coeff: f64| {
        let (p, q) = if p < q { (p, q) } else { (q, p) };
        PairTerm { p, q, coeff }
    };
    Ok(CliqueFragment {
        linear: vec![(b, w)],
        pairs: vec![pair(a, c, w), pair(a, b, -w), pair(b, c, -w)],
    })
}

/// Fired-clique count of one family over a labeling.
fn fired_count(labels: &[u8], width: usize, height: usize, fam: &CliqueFamily) -> u64 {
    let (ax, ay) = (
        fam.dx.unsigned_abs() as usize,
        fam.dy.unsigned_abs() as usize,
    );
    if 2 * ax >= width || 2 * ay >= height {
        return 0;
    }
    let shift = fam.dy as isize * width as isize + fam.dx as isize;
    let mut count = 0u64;
    for y in ay..height - ay {
        let row = y * width;
        for x in ax..width - ax {
            let b = row + x;
            let a = (b as isize - shift) as usize;
            let c = (b as isize + shift) as usize;
            count += delta_indicator(labels[a], labels[b], labels[c]) as u64;
        }
    }
    count
}

/// Per-family fired counts and weighted contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyBreakdown {
    pub family: CliqueFamily,
    pub fired: u64,
    pub energy: f64,
}

pub fn curvature_breakdown(
    labeling: &GridLabeling,
    ns: &NeighborhoodSystem,
) -> Vec<FamilyBreakdown> {
    let (w, h) = labeling.dims();
    let counts: Vec<u64> = ns
        .families()
        .par_iter()
        .map(|f| fired_count(labeling.labels(), w, h, f))
        .collect();
    ns.families()
        .iter()
        .zip(counts)
        .map(|(f, fired)| FamilyBreakdown {
            family: f.clone(),
            fired,
            energy: f.weight * fired as f64,
        })
        .collect()
}

/// `E_curv(X) = sum_i sum_p w_i delta(X_{c_i(p)})` over in-bounds cliques.
pub fn curvature_energy(labeling: &GridLabeling, ns: &NeighborhoodSystem) -> f64 {
    curvature_breakdown(labeling, ns)
        .iter()
        .map(|b| b.energy)
        .sum()
}

/// Data term plus `lambda` times the curvature regularizer, as one QPB.
pub fn assemble_energy(
    field: &UnaryField,
    lambda: f64,
    ns: &NeighborhoodSystem,
) -> Result<QpbEnergy> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be a finite non-negative number, got {lambda}"
        )));
    }
    let (w, h) = field.dims();
    let mut builder = QpbBuilder::new(w, h);
    builder.add_constant(field.cost0().iter().sum());
    for (p, (c0, c1)) in field.cost0().iter().zip(field.cost1()).enumerate() {
        builder.linear[p] += c1 - c0;
    }
    if lambda > 0.0 {
        let weights: Vec<f64> = ns.families().iter().map(|f| lambda * f.weight).collect();
        for c in ns.cliques(w, h) {
            let frag = decompose_clique(weights[c.family], c.minus, c.center, c.plus)?;
            builder.add_fragment(&frag)?;
        }
    }
    builder.build()
}

/// Per-pixel curvature contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    response: Vec<f64>,
}

impl ResponseMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.response
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.response[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.response.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.response.iter().copied().fold(0.0, f64::max)
    }

    /// Raw responses as `x,y,response` CSV rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,response\n");
        for y in 0..self.height {
            for x in 0..self.width {
                out.push_str(&format!("{},{},{}\n", x, y, self.get(x, y)));
            }
        }
        out
    }
}

/// Every fired clique adds its weight to its center pixel.
pub fn response_map(labeling: &GridLabeling, ns: &NeighborhoodSystem) -> ResponseMap {
    let (w, h) = labeling.dims();
    let x = labeling.labels();
    let mut response = vec![0.0; w * h];
    for c in ns.cliques(w, h) {
        if delta_indicator(x[c.minus], x[c.center], x[c.plus]) == 1 {
            response[c.center] += ns.families()[c.family].weight;
        }
    }
    ResponseMap {
        width: w,
        height: h,
        response,
    }
}

/// Fired cliques of a single family, counted at their centers.
pub fn family_fired_mask(
    labeling: &GridLabeling,
    ns: &NeighborhoodSystem,
    family: usize,
) -> Vec<bool> {
    let (w, h) = labeling.dims();
    let x = labeling.labels();
    let mut mask = vec![false; w * h];
    for c in ns.cliques(w, h).filter(|c| c.family == family) {
        if delta_indicator(x[c.minus], x[c.center], x[c.plus]) == 1 {
            mask[c.center] = true;
        }
    }
    mask
}

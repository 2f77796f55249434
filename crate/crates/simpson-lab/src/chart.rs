//! The small semi-stable chart ring and its perfectoid tower.
//!
//! The base ring is `R+ = W<T_0..T_r, T_(r+1)^±..T_d^±> / (T_0...T_r - p^a)`:
//! coordinates 0..=r are non-invertible and tied by the one semi-stable
//! relation, coordinates r+1..=d are invertible. Monomials are kept in the
//! normal form min(j_0..j_r) = 0; clearing k copies of the relation scales
//! the coefficient by p^(a k).
//!
//! The tower ring adjoins p-power roots T_i^(1/p^m). Its W-basis consists of
//! monomials whose full exponents e_i (integer plus fractional part) satisfy
//! min(e_0..e_r) = 0 exactly: clearing a fractional multiple of the relation
//! would need p^(a m) with m fractional, which does not exist in W(n,e), so
//! products that land outside the basis fail with `UnrepresentableProduct`.
//!
//! The Galois group of the tower is recorded in delta-form: an integer vector
//! (n_0..n_d) with n_0 + ... + n_r = 0, acting on a root T_i^(num/p^lvl) by
//! the scalar zeta_(p^lvl)^(n_i num). Integer exponents are fixed.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RingOps;
use crate::ring::{Ring, RingElt};

/// Shape of the chart: d+1 coordinates, relation among the first r+1,
/// relation constant p^a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartParams {
    /// Index of the last coordinate; the chart has d+1 coordinates T_0..T_d.
    pub d: usize,
    /// The relation ties T_0..T_r; coordinates above r are invertible.
    pub r: usize,
    /// Relation constant exponent: T_0...T_r = p^a.
    pub a: u32,
}

impl ChartParams {
    pub fn new(d: usize, r: usize, a: u32) -> Result<Self> {
        if r > d {
            return Err(Error::InvalidParams(format!("r = {r} must be <= d = {d}")));
        }
        if a < 1 {
            return Err(Error::InvalidParams("relation exponent a must be >= 1".into()));
        }
        if d > 8 {
            return Err(Error::InvalidParams(format!("d = {d} exceeds the desk-scale bound 8")));
        }
        Ok(ChartParams { d, r, a })
    }

    /// Number of coordinates, d + 1.
    pub fn width(&self) -> usize {
        self.d + 1
    }

    /// Rank of the Galois group (and of the log differentials).
    pub fn gamma_rank(&self) -> usize {
        self.d
    }
}

struct ChartCtx {
    ring: Ring,
    params: ChartParams,
}

/// Shared handle to a chart; compared by ring and shape.
#[derive(Clone)]
pub struct Chart(Arc<ChartCtx>);

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.0.ring == other.0.ring && self.0.params == other.0.params
    }
}
impl Eq for Chart {}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chart(d={}, r={}, a={}, {:?})", self.0.params.d, self.0.params.r, self.0.params.a, self.0.ring)
    }
}

impl Chart {
    pub fn new(ring: Ring, params: ChartParams) -> Chart {
        Chart(Arc::new(ChartCtx { ring, params }))
    }

    pub fn ring(&self) -> &Ring {
        &self.0.ring
    }

    pub fn params(&self) -> ChartParams {
        self.0.params
    }

    pub fn width(&self) -> usize {
        self.0.params.width()
    }

    fn check_width(&self, len: usize) -> Result<()> {
        if len != self.width() {
            return Err(Error::Malformed(format!(
                "expected {} exponents, got {len}",
                self.width()
            )));
        }
        Ok(())
    }

    /// T^J with coefficient c; exponents of T_0..T_r must be nonnegative.
    /// Clears the relation on construction: common positive powers of
    /// T_0..T_r become a factor p^(a k).
    pub fn monomial(&self, exps: &[i64], c: &RingElt) -> Result<SemistableElt> {
        self.check_width(exps.len())?;
        let r = self.0.params.r;
        if exps[..=r].iter().any(|&j| j < 0) {
            return Err(Error::Malformed(
                "negative exponent on a non-invertible coordinate".into(),
            ));
        }
        let mut j = exps.to_vec();
        let m = *j[..=r].iter().min().expect("nonempty prefix");
        if m > 0 {
            for slot in &mut j[..=r] {
                *slot -= m;
            }
        }
        let scale = relation_scale(self.ring(), self.0.params.a, m);
        let mut out = SemistableElt { chart: self.clone(), terms: BTreeMap::new() };
        out.insert(j, self.ring().mul(c, &scale));
        Ok(out)
    }

    pub fn scalar(&self, c: &RingElt) -> SemistableElt {
        let mut out = SemistableElt { chart: self.clone(), terms: BTreeMap::new() };
        out.insert(vec![0; self.width()], c.clone());
        out
    }

    /// The tower monomial T^(ints + num/p^lvl) with coefficient c.
    /// Full exponents on coordinates 0..=r must be nonnegative with minimum
    /// exactly zero after clearing integer multiples of the relation.
    pub fn tower_monomial(
        &self,
        ints: &[i64],
        num: &[u64],
        lvl: u32,
        c: &RingElt,
    ) -> Result<PerfElt> {
        self.check_width(ints.len())?;
        self.check_width(num.len())?;
        let p = self.ring().p();
        let pl = p.pow(lvl);
        if num.iter().any(|&x| x >= pl) {
            return Err(Error::Malformed("fractional numerator out of range".into()));
        }
        let r = self.0.params.r;
        if ints[..=r].iter().any(|&j| j < 0) {
            return Err(Error::Malformed(
                "negative exponent on a non-invertible coordinate".into(),
            ));
        }
        let mut key = PerfKey { ints: ints.to_vec(), num: num.to_vec(), lvl };
        let carried = key.clear_relation(p, r)?;
        let scale = relation_scale(self.ring(), self.0.params.a, carried);
        let mut out = PerfElt { chart: self.clone(), terms: BTreeMap::new() };
        out.insert(key, self.ring().mul(c, &scale));
        Ok(out)
    }

    pub fn tower_from_semistable(&self, x: &SemistableElt) -> PerfElt {
        let mut out = PerfElt { chart: self.clone(), terms: BTreeMap::new() };
        for (j, c) in &x.terms {
            let key = PerfKey { ints: j.clone(), num: vec![0; self.width()], lvl: 0 };
            out.insert(key, c.clone());
        }
        out
    }

    pub fn tower_zero(&self) -> PerfElt {
        PerfElt { chart: self.clone(), terms: BTreeMap::new() }
    }
}

fn relation_scale(ring: &Ring, a: u32, k: i64) -> RingElt {
    debug_assert!(k >= 0);
    let exp = a as u64 * k as u64;
    if exp >= ring.e() as u64 {
        ring.zero()
    } else {
        ring.from_u64(ring.p().pow(exp as u32))
    }
}

impl RingOps for Chart {
    type Elt = SemistableElt;

    fn zero(&self) -> SemistableElt {
        SemistableElt { chart: self.clone(), terms: BTreeMap::new() }
    }
    fn one(&self) -> SemistableElt {
        self.scalar(&self.ring().one())
    }
    fn from_i64(&self, v: i64) -> SemistableElt {
        self.scalar(&self.ring().from_i64(v))
    }
    fn add(&self, a: &SemistableElt, b: &SemistableElt) -> SemistableElt {
        let mut out = a.clone();
        for (j, c) in &b.terms {
            out.insert(j.clone(), c.clone());
        }
        out
    }
    fn sub(&self, a: &SemistableElt, b: &SemistableElt) -> SemistableElt {
        self.add(a, &self.neg(b))
    }
    fn neg(&self, a: &SemistableElt) -> SemistableElt {
        SemistableElt {
            chart: self.clone(),
            terms: a.terms.iter().map(|(j, c)| (j.clone(), self.ring().neg(c))).collect(),
        }
    }
    fn mul(&self, a: &SemistableElt, b: &SemistableElt) -> SemistableElt {
        let ring = self.ring();
        let r = self.0.params.r;
        let mut out = self.zero();
        for (j1, c1) in &a.terms {
            for (j2, c2) in &b.terms {
                let mut j: Vec<i64> = j1.iter().zip(j2).map(|(x, y)| x + y).collect();
                let m = *j[..=r].iter().min().expect("nonempty prefix");
                debug_assert!(m >= 0);
                if m > 0 {
                    for slot in &mut j[..=r] {
                        *slot -= m;
                    }
                }
                let scale = relation_scale(ring, self.0.params.a, m);
                let c = ring.mul(&ring.mul(c1, c2), &scale);
                out.insert(j, c);
            }
        }
        out
    }
    fn is_zero(&self, a: &SemistableElt) -> bool {
        a.terms.is_empty()
    }
}

/// Element of the chart ring: finite W-combination of normal-form monomials.
#[derive(Clone, PartialEq, Eq)]
pub struct SemistableElt {
    chart: Chart,
    terms: BTreeMap<Vec<i64>, RingElt>,
}

impl SemistableElt {
    fn insert(&mut self, j: Vec<i64>, c: RingElt) {
        debug_assert_eq!(j.len(), self.chart.width());
        debug_assert_eq!(
            *j[..=self.chart.params().r].iter().min().unwrap(),
            0,
            "monomial not in normal form"
        );
        let ring = self.chart.ring().clone();
        match self.terms.entry(j) {
            std::collections::btree_map::Entry::Vacant(e) => {
                if !c.coeffs().iter().all(|&x| x == 0) {
                    e.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                let s = ring.add(e.get(), &c);
                if s.coeffs().iter().all(|&x| x == 0) {
                    e.remove();
                } else {
                    *e.into_mut() = s;
                }
            }
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[i64], &RingElt)> {
        self.terms.iter().map(|(j, c)| (j.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, j: &[i64]) -> Option<&RingElt> {
        self.terms.get(j)
    }

    /// Constant-term coefficient (exponent vector zero).
    pub fn constant_coeff(&self) -> RingElt {
        self.terms
            .get(&vec![0i64; self.chart.width()])
            .cloned()
            .unwrap_or_else(|| self.chart.ring().zero())
    }

    /// Least pi-valuation over all monomial coefficients; None when every
    /// coefficient is precision zero.
    pub fn min_coeff_val(&self) -> Option<u32> {
        let ring = self.chart.ring();
        let mut best: Option<u32> = None;
        for c in self.terms.values() {
            if let Some(v) = ring.val_pi(c) {
                best = Some(best.map_or(v, |b| b.min(v)));
            }
        }
        best
    }

    /// Multiply every coefficient by a scalar from W.
    pub fn scale(&self, s: &RingElt) -> SemistableElt {
        let ring = self.chart.ring().clone();
        let mut out = self.chart.zero();
        for (j, c) in &self.terms {
            out.insert(j.clone(), ring.mul(c, s));
        }
        out
    }

    /// Logarithmic differential d(x) as an element of R+ tensor Omega^(1,log):
    /// a monomial T^J contributes coeff * T^J * sum_i J_i dlog T_i.
    pub fn d_log(&self) -> LogDiff<SemistableElt> {
        let chart = &self.chart;
        let mut raw: Vec<SemistableElt> = vec![chart.zero(); chart.width()];
        for (j, c) in &self.terms {
            for (i, &ji) in j.iter().enumerate() {
                if ji != 0 {
                    let term = chart
                        .monomial(j, &chart.ring().mul_i64(c, ji))
                        .expect("stored monomial is valid");
                    raw[i] = chart.add(&raw[i], &term);
                }
            }
        }
        LogDiff::reduced(chart, chart.params(), raw)
    }
}

impl fmt::Debug for SemistableElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (j, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c:?})*T^{j:?}")?;
        }
        Ok(())
    }
}

/// Exponent key of a tower monomial: full exponent e_i = ints_i + num_i/p^lvl.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct PerfKey {
    ints: Vec<i64>,
    num: Vec<u64>,
    lvl: u32,
}

impl PerfKey {
    /// Reduce the level so some numerator is prime to p, and clear integer
    /// multiples of the relation from coordinates 0..=r. Returns the number
    /// of relation copies cleared. Errors when the minimum full exponent is
    /// a fractional positive value.
    fn clear_relation(&mut self, p: u64, r: usize) -> Result<i64> {
        while self.lvl > 0 && self.num.iter().all(|&x| x % p == 0) {
            for x in &mut self.num {
                *x /= p;
            }
            self.lvl -= 1;
        }
        let pl = p.pow(self.lvl) as i64;
        let scaled_min = self.ints[..=r]
            .iter()
            .zip(&self.num)
            .map(|(&i, &f)| i * pl + f as i64)
            .min()
            .expect("nonempty prefix");
        if scaled_min % pl != 0 {
            return Err(Error::UnrepresentableProduct);
        }
        let m = scaled_min / pl;
        debug_assert!(m >= 0);
        if m > 0 {
            for slot in &mut self.ints[..=r] {
                *slot -= m;
            }
        }
        Ok(m)
    }

    fn fraction_key(&self, p: u64) -> (Vec<u64>, u32) {
        let mut num = self.num.clone();
        let mut lvl = self.lvl;
        while lvl > 0 && num.iter().all(|&x| x % p == 0) {
            for x in &mut num {
                *x /= p;
            }
            lvl -= 1;
        }
        (num, lvl)
    }
}

/// Fractional part of a tower exponent vector: alpha_i = num_i / p^lvl.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerfIndex {
    pub num: Vec<u64>,
    pub lvl: u32,
}

/// Element of the perfectoid tower ring: finite W-combination of basis
/// monomials. Multiplication is partial; see the module docs.
#[derive(Clone, PartialEq, Eq)]
pub struct PerfElt {
    chart: Chart,
    terms: BTreeMap<PerfKey, RingElt>,
}

impl PerfElt {
    fn insert(&mut self, key: PerfKey, c: RingElt) {
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                if !c.coeffs().iter().all(|&x| x == 0) {
                    e.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                let s = self.chart.ring().add(e.get(), &c);
                if s.coeffs().iter().all(|&x| x == 0) {
                    e.remove();
                } else {
                    *e.into_mut() = s;
                }
            }
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add(&self, other: &PerfElt) -> PerfElt {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.insert(k.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> PerfElt {
        PerfElt {
            chart: self.chart.clone(),
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.clone(), self.chart.ring().neg(c)))
                .collect(),
        }
    }

    pub fn sub(&self, other: &PerfElt) -> PerfElt {
        self.add(&other.neg())
    }

    /// Scalar multiplication by a coefficient from W(n,e).
    pub fn scale(&self, s: &RingElt) -> PerfElt {
        let ring = self.chart.ring().clone();
        let mut out = self.chart.tower_zero();
        for (k, c) in &self.terms {
            out.insert(k.clone(), ring.mul(c, s));
        }
        out
    }

    /// Partial multiplication: errors when a term product leaves the
    /// representable basis (fractional relation clearing).
    pub fn mul(&self, other: &PerfElt) -> Result<PerfElt> {
        let ring = self.chart.ring().clone();
        let p = ring.p();
        let r = self.chart.params().r;
        let a = self.chart.params().a;
        let mut out = self.chart.tower_zero();
        for (k1, c1) in &self.terms {
            for (k2, c2) in &other.terms {
                let lvl = k1.lvl.max(k2.lvl);
                let s1 = p.pow(lvl - k1.lvl);
                let s2 = p.pow(lvl - k2.lvl);
                let pl = p.pow(lvl);
                let mut ints: Vec<i64> = k1.ints.iter().zip(&k2.ints).map(|(x, y)| x + y).collect();
                let mut num = Vec::with_capacity(ints.len());
                for (i, (&f1, &f2)) in k1.num.iter().zip(&k2.num).enumerate() {
                    let total = f1 * s1 + f2 * s2;
                    ints[i] += (total / pl) as i64;
                    num.push(total % pl);
                }
                let mut key = PerfKey { ints, num, lvl };
                let carried = key.clear_relation(p, r)?;
                let scale = relation_scale(&ring, a, carried);
                let c = ring.mul(&ring.mul(c1, c2), &scale);
                out.insert(key, c);
            }
        }
        Ok(out)
    }

    /// Apply a Galois element: each monomial is scaled by
    /// zeta_(p^lvl)^(sum_i delta_i num_i). Errors when a term's level
    /// exceeds the coefficient ring's cyclotomic level.
    pub fn gamma_act(&self, g: &GammaElement) -> Result<PerfElt> {
        let ring = self.chart.ring().clone();
        let mut out = self.chart.tower_zero();
        for (k, c) in &self.terms {
            let pl = ring.p().pow(k.lvl);
            let mut s: i64 = 0;
            for (&di, &fi) in g.delta.iter().zip(&k.num) {
                s = (s + (di.rem_euclid(pl as i64)) * (fi as i64)) % pl as i64;
            }
            let z = ring.zeta_alpha(s.rem_euclid(pl as i64) as u64, k.lvl)?;
            out.insert(k.clone(), ring.mul(c, &z));
        }
        Ok(out)
    }

    /// Split into isotypic components by fractional exponent: the sum of
    /// T^alpha * (component) over distinct alpha recovers the element.
    pub fn decompose(&self) -> Vec<(PerfIndex, SemistableElt)> {
        let p = self.chart.ring().p();
        let mut groups: BTreeMap<(Vec<u64>, u32), SemistableElt> = BTreeMap::new();
        for (k, c) in &self.terms {
            let fk = k.fraction_key(p);
            let entry = groups
                .entry(fk)
                .or_insert_with(|| RingOps::zero(&self.chart));
            let mono = self
                .chart
                .monomial(&k.ints, c)
                .expect("stored exponents are valid");
            *entry = self.chart.add(entry, &mono);
        }
        groups
            .into_iter()
            .map(|((num, lvl), elt)| (PerfIndex { num, lvl }, elt))
            .collect()
    }
}

impl fmt::Debug for PerfElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c:?})*T^({:?}+{:?}/p^{})", k.ints, k.num, k.lvl)?;
        }
        Ok(())
    }
}

/// Galois element in delta-form: (n_0..n_d) with n_0 + ... + n_r = 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaElement {
    delta: Vec<i64>,
}

impl GammaElement {
    pub fn from_delta(params: ChartParams, delta: Vec<i64>) -> Result<GammaElement> {
        if delta.len() != params.width() {
            return Err(Error::Malformed(format!(
                "expected {} delta entries, got {}",
                params.width(),
                delta.len()
            )));
        }
        let s: i64 = delta[..=params.r].iter().sum();
        if s != 0 {
            return Err(Error::Malformed(
                "delta entries on tied coordinates must sum to zero".into(),
            ));
        }
        Ok(GammaElement { delta })
    }

    /// The i-th standard generator, 1 <= i <= d: for i <= r it moves T_i
    /// against T_0, above r it moves T_i alone.
    pub fn generator(params: ChartParams, i: usize) -> Result<GammaElement> {
        if i < 1 || i > params.d {
            return Err(Error::InvalidParams(format!(
                "generator index {i} outside 1..={}",
                params.d
            )));
        }
        let mut delta = vec![0i64; params.width()];
        delta[i] = 1;
        if i <= params.r {
            delta[0] = -1;
        }
        GammaElement::from_delta(params, delta)
    }

    pub fn identity(params: ChartParams) -> GammaElement {
        GammaElement { delta: vec![0; params.width()] }
    }

    pub fn delta(&self) -> &[i64] {
        &self.delta
    }

    /// Coordinates in the generator basis: simply (delta_1..delta_d), since
    /// delta_0 is determined by the zero-sum constraint.
    pub fn gamma_coords(&self) -> Vec<i64> {
        self.delta[1..].to_vec()
    }

    pub fn from_gamma_coords(params: ChartParams, coords: &[i64]) -> Result<GammaElement> {
        if coords.len() != params.d {
            return Err(Error::Malformed(format!(
                "expected {} generator coordinates, got {}",
                params.d,
                coords.len()
            )));
        }
        let mut delta = Vec::with_capacity(params.width());
        delta.push(-coords[..params.r].iter().sum::<i64>());
        delta.extend_from_slice(coords);
        GammaElement::from_delta(params, delta)
    }

    pub fn compose(&self, other: &GammaElement) -> GammaElement {
        GammaElement {
            delta: self.delta.iter().zip(&other.delta).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inverse(&self) -> GammaElement {
        GammaElement { delta: self.delta.iter().map(|x| -x).collect() }
    }

    /// Pairing with a fractional exponent vector: sum_i delta_i alpha_i
    /// as (numerator mod p^lvl, lvl).
    pub fn pair(&self, idx: &PerfIndex, p: u64) -> (u64, u32) {
        let pl = p.pow(idx.lvl) as i64;
        let mut s: i64 = 0;
        for (&di, &fi) in self.delta.iter().zip(&idx.num) {
            s = (s + di.rem_euclid(pl) * fi as i64) % pl;
        }
        (s.rem_euclid(pl) as u64, idx.lvl)
    }
}

/// Element of (coefficient module) tensor Omega^(1,log): components along
/// dlog T_1 .. dlog T_d after eliminating dlog T_0 by the relation
/// dlog T_0 + ... + dlog T_r = 0. Slot 0 is kept (always zero) so indices
/// match coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogDiff<T> {
    comps: Vec<T>,
}

impl<T: Clone + PartialEq + fmt::Debug> LogDiff<T> {
    /// Reduce raw components (length d+1, slot i along dlog T_i) into the
    /// normal form: c_i := c_i - c_0 for 1 <= i <= r, slot 0 zeroed.
    pub fn reduced<R: RingOps<Elt = T>>(ops: &R, params: ChartParams, raw: Vec<T>) -> LogDiff<T> {
        assert_eq!(raw.len(), params.width(), "component count mismatch");
        let mut comps = Vec::with_capacity(raw.len());
        comps.push(ops.zero());
        for (i, c) in raw.iter().enumerate().skip(1) {
            if i <= params.r {
                comps.push(ops.sub(c, &raw[0]));
            } else {
                comps.push(c.clone());
            }
        }
        LogDiff { comps }
    }

    pub fn from_reduced(comps: Vec<T>) -> LogDiff<T> {
        LogDiff { comps }
    }

    pub fn comps(&self) -> &[T] {
        &self.comps
    }

    /// Component along dlog T_i for 1 <= i <= d.
    pub fn comp(&self, i: usize) -> &T {
        assert!(i >= 1, "slot 0 is eliminated by the relation");
        &self.comps[i]
    }

    pub fn add<R: RingOps<Elt = T>>(&self, ops: &R, other: &LogDiff<T>) -> LogDiff<T> {
        LogDiff {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| ops.add(a, b))
                .collect(),
        }
    }

    pub fn sub<R: RingOps<Elt = T>>(&self, ops: &R, other: &LogDiff<T>) -> LogDiff<T> {
        LogDiff {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| ops.sub(a, b))
                .collect(),
        }
    }

    pub fn scale<R: RingOps<Elt = T>>(&self, ops: &R, s: &T) -> LogDiff<T> {
        LogDiff { comps: self.comps.iter().map(|c| ops.mul(s, c)).collect() }
    }

    pub fn is_zero<R: RingOps<Elt = T>>(&self, ops: &R) -> bool {
        self.comps.iter().all(|c| ops.is_zero(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::CyclotomicParams;

    fn setup() -> Chart {
        let ring = Ring::new(CyclotomicParams::new(3, 1, 8, 2).unwrap());
        Chart::new(ring, ChartParams::new(2, 1, 1).unwrap())
    }

    #[test]
    fn relation_normalizes_products() {
        let c = setup();
        let r = c.ring().clone();
        let t0 = c.monomial(&[1, 0, 0], &r.one()).unwrap();
        let t1 = c.monomial(&[0, 1, 0], &r.one()).unwrap();
        // T_0 T_1 = p^a = 3
        let prod = c.mul(&t0, &t1);
        assert_eq!(prod, c.from_i64(3));
        // T_0^2 T_1 = 3 T_0
        let prod2 = c.mul(&prod, &t0);
        assert_eq!(prod2, t0.scale(&r.from_i64(3)));
        // T_2 is invertible: T_2 * T_2^(-1) = 1
        let t2 = c.monomial(&[0, 0, 1], &r.one()).unwrap();
        let t2i = c.monomial(&[0, 0, -1], &r.one()).unwrap();
        assert_eq!(c.mul(&t2, &t2i), c.one());
    }

    #[test]
    fn relation_scale_saturates_at_precision() {
        let c = setup();
        let r = c.ring().clone();
        // (T_0 T_1)^8 = 3^8 = 0 in W
        let t01 = c.monomial(&[1, 1, 0], &r.one()).unwrap();
        let mut acc = c.one();
        for _ in 0..8 {
            acc = c.mul(&acc, &t01);
        }
        assert!(RingOps::is_zero(&c, &acc));
    }

    #[test]
    fn monomial_validation() {
        let c = setup();
        let r = c.ring().clone();
        assert!(c.monomial(&[-1, 0, 0], &r.one()).is_err());
        assert!(c.monomial(&[0, -2, 0], &r.one()).is_err());
        assert!(c.monomial(&[0, 0, -5], &r.one()).is_ok());
        assert!(c.monomial(&[1, 0], &r.one()).is_err());
        // auto-normalization clears the relation on construction
        let m = c.monomial(&[2, 1, 0], &r.one()).unwrap();
        assert_eq!(m, c.monomial(&[1, 0, 0], &r.from_i64(3)).unwrap());
    }

    #[test]
    fn ring_laws_on_samples() {
        let c = setup();
        let r = c.ring().clone();
        let x = c.monomial(&[1, 0, 2], &r.from_i64(2)).unwrap();
        let y = c.monomial(&[0, 3, -1], &r.rho_k()).unwrap();
        let z = c.add(&c.one(), &c.monomial(&[0, 1, 0], &r.from_i64(-1)).unwrap());
        assert_eq!(c.mul(&x, &y), c.mul(&y, &x));
        assert_eq!(c.mul(&c.mul(&x, &y), &z), c.mul(&x, &c.mul(&y, &z)));
        assert_eq!(
            c.mul(&x, &c.add(&y, &z)),
            c.add(&c.mul(&x, &y), &c.mul(&x, &z))
        );
        assert!(RingOps::is_zero(&c, &c.sub(&x, &x)));
    }

    #[test]
    fn dlog_of_monomials_and_leibniz() {
        let c = setup();
        let r = c.ring().clone();
        // d(T_0^2) = 2 T_0^2 dlog T_0 = -2 T_0^2 dlog T_1 after reduction (r = 1)
        let t0sq = c.monomial(&[2, 0, 0], &r.one()).unwrap();
        let d = t0sq.d_log();
        assert!(RingOps::is_zero(&c, &d.comps()[0]));
        assert_eq!(d.comp(1), &t0sq.scale(&r.from_i64(-2)));
        assert!(RingOps::is_zero(&c, d.comp(2)));
        // Leibniz: d(xy) = x dy + y dx
        let x = c.monomial(&[1, 0, 1], &r.from_i64(2)).unwrap();
        let y = c.monomial(&[0, 2, -1], &r.from_i64(5)).unwrap();
        let lhs = c.mul(&x, &y).d_log();
        let rhs = y.d_log().scale(&c, &x).add(&c, &x.d_log().scale(&c, &y));
        assert_eq!(lhs, rhs);
        // d kills the relation: d(T_0 T_1 - p) = 0
        let rel = c.mul(
            &c.monomial(&[1, 0, 0], &r.one()).unwrap(),
            &c.monomial(&[0, 1, 0], &r.one()).unwrap(),
        );
        assert!(rel.d_log().is_zero(&c));
    }

    #[test]
    fn tower_roots_multiply_with_carry() {
        let c = setup();
        let r = c.ring().clone();
        // T_0^(1/3) * T_0^(2/3) = T_0
        let x = c.tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &r.one()).unwrap();
        let y = c.tower_monomial(&[0, 0, 0], &[2, 0, 0], 1, &r.one()).unwrap();
        let t0 = c.tower_from_semistable(&c.monomial(&[1, 0, 0], &r.one()).unwrap());
        assert_eq!(x.mul(&y).unwrap(), t0);
        // carries on an invertible coordinate: T_2^(2/3) * T_2^(2/3) = T_2^(4/3)
        let w = c.tower_monomial(&[0, 0, 0], &[0, 0, 2], 1, &r.one()).unwrap();
        let w2 = c.tower_monomial(&[0, 0, 1], &[0, 0, 1], 1, &r.one()).unwrap();
        assert_eq!(w.mul(&w).unwrap(), w2);
    }

    #[test]
    fn fractional_relation_clearing_needs_three_tied_coordinates() {
        // with r = 2 the relation can clear against mixed fractional parts:
        // (T_1^(2/3) T_2) * (T_0^(4/3) T_1^(1/3)) = p^a T_0^(1/3)
        let ring = Ring::new(CyclotomicParams::new(3, 1, 8, 2).unwrap());
        let c = Chart::new(ring.clone(), ChartParams::new(2, 2, 1).unwrap());
        let u = c.tower_monomial(&[0, 0, 1], &[0, 2, 0], 1, &ring.one()).unwrap();
        let v = c.tower_monomial(&[1, 0, 0], &[1, 1, 0], 1, &ring.one()).unwrap();
        let expect = c
            .tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &ring.from_i64(3))
            .unwrap();
        assert_eq!(u.mul(&v).unwrap(), expect);
    }

    #[test]
    fn unrepresentable_products_error() {
        let c = setup();
        let r = c.ring().clone();
        // T_0^(1/3) * T_1^(2/3): min full exponent 1/3 is fractional
        let x = c.tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &r.one()).unwrap();
        let y = c.tower_monomial(&[0, 0, 0], &[0, 2, 0], 1, &r.one()).unwrap();
        assert_eq!(x.mul(&y), Err(Error::UnrepresentableProduct));
        // construction also refuses non-basis monomials
        assert!(matches!(
            c.tower_monomial(&[0, 0, 0], &[1, 1, 0], 1, &r.one()),
            Err(Error::Malformed(_)) | Err(Error::UnrepresentableProduct)
        ));
    }

    #[test]
    fn gamma_elements_validate_and_compose() {
        let params = ChartParams::new(2, 1, 1).unwrap();
        assert!(GammaElement::from_delta(params, vec![1, 0, 0]).is_err());
        let g1 = GammaElement::generator(params, 1).unwrap();
        assert_eq!(g1.delta(), &[-1, 1, 0]);
        let g2 = GammaElement::generator(params, 2).unwrap();
        assert_eq!(g2.delta(), &[0, 0, 1]);
        let both = g1.compose(&g2);
        assert_eq!(both.gamma_coords(), vec![1, 1]);
        let back = GammaElement::from_gamma_coords(params, &[1, 1]).unwrap();
        assert_eq!(back, both);
        assert_eq!(
            g1.compose(&g1.inverse()),
            GammaElement::identity(params)
        );
    }

    #[test]
    fn gamma_action_on_tower() {
        let c = setup();
        let r = c.ring().clone();
        let params = c.params();
        let g1 = GammaElement::generator(params, 1).unwrap();
        // gamma_1 fixes integer monomials
        let t0 = c.tower_from_semistable(&c.monomial(&[1, 0, 0], &r.one()).unwrap());
        assert_eq!(t0.gamma_act(&g1).unwrap(), t0);
        // gamma_1(T_1^(1/3)) = zeta_3 T_1^(1/3)
        let x = c.tower_monomial(&[0, 0, 0], &[0, 1, 0], 1, &r.one()).unwrap();
        let gx = x.gamma_act(&g1).unwrap();
        let expect = c
            .tower_monomial(&[0, 0, 0], &[0, 1, 0], 1, &r.zeta(1).unwrap())
            .unwrap();
        assert_eq!(gx, expect);
        // gamma_1(T_0^(1/3)) = zeta_3^(-1) T_0^(1/3)
        let y = c.tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &r.one()).unwrap();
        let gy = y.gamma_act(&g1).unwrap();
        let expect = c
            .tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &r.zeta_alpha(2, 1).unwrap())
            .unwrap();
        assert_eq!(gy, expect);
        // action is a homomorphism where products exist
        let u = c.tower_monomial(&[0, 0, 0], &[1, 0, 0], 1, &r.one()).unwrap();
        let v = c.tower_monomial(&[0, 0, 0], &[2, 0, 2], 1, &r.from_i64(2)).unwrap();
        let lhs = u.mul(&v).unwrap().gamma_act(&g1).unwrap();
        let rhs = u.gamma_act(&g1).unwrap().mul(&v.gamma_act(&g1).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        // composition acts as the product of scalars
        let g11 = g1.compose(&g1);
        assert_eq!(
            x.gamma_act(&g11).unwrap(),
            x.gamma_act(&g1).unwrap().gamma_act(&g1).unwrap()
        );
    }

    #[test]
    fn gamma_action_level_bound() {
        let c = setup(); // coefficient ring has level n = 1
        let r = c.ring().clone();
        let x = c.tower_monomial(&[0, 0, 0], &[0, 1, 0], 2, &r.one()).unwrap();
        let g1 = GammaElement::generator(c.params(), 1).unwrap();
        assert!(matches!(
            x.gamma_act(&g1),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn decompose_splits_by_fractional_part() {
        let c = setup();
        let r = c.ring().clone();
        let x = c.tower_monomial(&[0, 0, 1], &[0, 1, 0], 1, &r.from_i64(4)).unwrap();
        let y = c.tower_monomial(&[0, 1, 0], &[0, 1, 0], 1, &r.from_i64(5)).unwrap();
        let z = c.tower_from_semistable(&c.from_i64(7));
        let total = x.add(&y).add(&z);
        let comps = total.decompose();
        assert_eq!(comps.len(), 2);
        // integer part: the constant 7
        assert_eq!(comps[0].0, PerfIndex { num: vec![0, 0, 0], lvl: 0 });
        assert_eq!(comps[0].1, c.from_i64(7));
        // alpha = (0, 1/3, 0) part: 4 T_2 + 5 T_1
        assert_eq!(comps[1].0, PerfIndex { num: vec![0, 1, 0], lvl: 1 });
        let expect = c.add(
            &c.monomial(&[0, 0, 1], &r.from_i64(4)).unwrap(),
            &c.monomial(&[0, 1, 0], &r.from_i64(5)).unwrap(),
        );
        assert_eq!(comps[1].1, expect);
        // pairing used by the component analysis
        let g1 = GammaElement::generator(c.params(), 1).unwrap();
        assert_eq!(g1.pair(&comps[1].0, 3), (1, 1));
    }

    #[test]
    fn logdiff_reduction() {
        let c = setup();
        let raw = vec![c.from_i64(5), c.from_i64(2), c.from_i64(9)];
        let ld = LogDiff::reduced(&c, c.params(), raw);
        // r = 1: comp_1 = 2 - 5 = -3, comp_2 = 9 unchanged
        assert!(RingOps::is_zero(&c, &ld.comps()[0]));
        assert_eq!(ld.comp(1), &c.from_i64(-3));
        assert_eq!(ld.comp(2), &c.from_i64(9));
        // e_0 + e_1 reduces to zero (r = 1)
        let rel = LogDiff::reduced(&c, c.params(), vec![c.one(), c.one(), RingOps::zero(&c)]);
        assert!(rel.is_zero(&c));
    }
}

//! On-disk instance format and deterministic instance generation.
//!
//! Instances are UTF-8 JSON carrying the chart and ring parameters plus
//! one side of the correspondence: field components (`theta`) or
//! generator actions (`gamma`, with an optional witness). Ring elements
//! travel in their raw form (coefficient array by zeta power, plus the
//! precision floor); identity is the SHA-256 digest of the canonical
//! serialization, so reports keyed by digest are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::ChartParams;
use crate::cohomology::{cocycle_rows, higgs_de_rham, FreeComplex};
use crate::error::{Error, Result};
use crate::higgs::{GammaRep, HiggsModule};
use crate::matrix::{identity, mat_add, matmul, scalar_mul, Mat};
use crate::ring::{CyclotomicParams, Ring, RingElt, RingEltRaw, TwistTag};

/// One correspondence instance as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub chart: ChartParams,
    pub ring: CyclotomicParams,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Mat<RingEltRaw>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Mat<RingEltRaw>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Mat<RingEltRaw>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<RoundTripStamp>,
}

/// Verification stamp written by the correspond subcommand: digest of
/// the source instance and the judged round-trip outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTripStamp {
    pub source_digest: String,
    pub round_trip_ok: bool,
    /// Judgment exponent: agreement was checked modulo p to this power.
    pub judged_exponent: u32,
}

pub fn mat_to_raw(m: &Mat<RingElt>) -> Mat<RingEltRaw> {
    Mat::from_fn(m.rows(), m.cols(), |i, j| m.at(i, j).to_raw())
}

pub fn mat_from_raw(ring: &Ring, m: &Mat<RingEltRaw>) -> Result<Mat<RingElt>> {
    let mut out = Mat::from_fn(m.rows(), m.cols(), |_, _| ring.zero());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let raw = m.at(i, j);
            out.set(i, j, ring.from_raw(&raw.coeffs, raw.floor)?);
        }
    }
    Ok(out)
}

fn family_from_raw(
    ring: &Ring,
    rank: usize,
    d: usize,
    mats: &[Mat<RingEltRaw>],
    what: &str,
) -> Result<Vec<Mat<RingElt>>> {
    if mats.len() != d {
        return Err(Error::Malformed(format!(
            "{what} has {} components, chart has {d} directions",
            mats.len()
        )));
    }
    let mut out = Vec::with_capacity(d);
    for m in mats {
        if m.rows() != rank || m.cols() != rank {
            return Err(Error::Malformed(format!(
                "{what} component is {}x{}, instance rank is {rank}",
                m.rows(),
                m.cols()
            )));
        }
        out.push(mat_from_raw(ring, m)?);
    }
    Ok(out)
}

impl Instance {
    pub fn ring(&self) -> Result<Ring> {
        let p = CyclotomicParams::new(self.ring.p, self.ring.n, self.ring.e, self.ring.g)?;
        Ok(Ring::new(p))
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let inst: Instance =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        ChartParams::new(inst.chart.d, inst.chart.r, inst.chart.a)?;
        if inst.theta.is_none() && inst.gamma.is_none() {
            return Err(Error::Malformed(
                "instance carries neither field components nor generator actions".into(),
            ));
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    /// SHA-256 of the compact canonical serialization, in hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instance serialization is infallible");
        hex_digest(&bytes)
    }

    /// Field-component side without a smallness certificate (shape and
    /// commutation validation only).
    pub fn to_higgs(&self, ring: &Ring) -> Result<HiggsModule> {
        let Some(theta) = &self.theta else {
            return Err(Error::Malformed("instance carries no field components".into()));
        };
        HiggsModule::new(ring, family_from_raw(ring, self.rank, self.chart.d, theta, "theta")?)
    }

    /// Field-component side with the twisted-small certificate required
    /// by the correspondence.
    pub fn to_certified_higgs(&self, ring: &Ring) -> Result<HiggsModule> {
        let Some(theta) = &self.theta else {
            return Err(Error::Malformed("instance carries no field components".into()));
        };
        HiggsModule::certified(
            ring,
            family_from_raw(ring, self.rank, self.chart.d, theta, "theta")?,
        )
    }

    pub fn to_rep(&self, ring: &Ring) -> Result<GammaRep> {
        let Some(gamma) = &self.gamma else {
            return Err(Error::Malformed("instance carries no generator actions".into()));
        };
        let a = family_from_raw(ring, self.rank, self.chart.d, gamma, "gamma")?;
        let witness = match &self.witness {
            Some(w) => Some(family_from_raw(ring, self.rank, self.chart.d, w, "witness")?),
            None => None,
        };
        GammaRep::new(ring, a, witness)
    }

    pub fn from_higgs(chart: ChartParams, params: CyclotomicParams, h: &HiggsModule) -> Instance {
        Instance {
            chart,
            ring: params,
            rank: h.rank,
            theta: Some(h.theta.iter().map(mat_to_raw).collect()),
            gamma: None,
            witness: None,
            stamp: None,
        }
    }

    pub fn from_rep(chart: ChartParams, params: CyclotomicParams, m: &GammaRep) -> Instance {
        Instance {
            chart,
            ring: params,
            rank: m.rank,
            theta: None,
            gamma: Some(m.a.iter().map(mat_to_raw).collect()),
            witness: m.witness.as_ref().map(|w| w.iter().map(mat_to_raw).collect()),
            stamp: None,
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Complex serialization: ranks, differentials, twist indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexJson {
    pub ranks: Vec<usize>,
    pub diff: Vec<Mat<RingEltRaw>>,
    #[serde(default)]
    pub twists: Vec<i32>,
}

pub fn complex_to_json(c: &FreeComplex) -> ComplexJson {
    ComplexJson {
        ranks: c.ranks().to_vec(),
        diff: c.diffs().iter().map(mat_to_raw).collect(),
        twists: c.twists().iter().map(|t| t.0).collect(),
    }
}

pub fn complex_from_json(ring: &Ring, j: &ComplexJson) -> Result<FreeComplex> {
    let mut diff = Vec::with_capacity(j.diff.len());
    for m in &j.diff {
        diff.push(mat_from_raw(ring, m)?);
    }
    let twists = if j.twists.is_empty() {
        vec![TwistTag(0); j.ranks.len()]
    } else {
        j.twists.iter().map(|&t| TwistTag(t)).collect()
    };
    FreeComplex::new(ring, j.ranks.clone(), diff, twists)
}

/// Independent generator streams per instance index under one seed.
pub fn rng_for(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn random_elt(ring: &Ring, rng: &mut impl Rng) -> RingElt {
    let m = ring.p().pow(ring.e());
    let coeffs: Vec<u64> = (0..ring.phi()).map(|_| rng.gen_range(0..m)).collect();
    ring.from_raw(&coeffs, ring.e()).expect("coefficients drawn below the modulus")
}

/// Seeded twisted-small family: polynomials in one random matrix (exact
/// commutation by construction), scaled by pi^val_floor so that every
/// series truncation in the suites stays below the precision guard.
pub fn seeded_theta(
    ring: &Ring,
    d: usize,
    rank: usize,
    val_floor: u32,
    rng: &mut impl Rng,
) -> Vec<Mat<RingElt>> {
    assert!(val_floor >= 1, "a unit-valuation family is not small");
    let b = Mat::from_fn(rank, rank, |_, _| random_elt(ring, rng));
    let scale = ring.pow(&ring.pi(), val_floor as u64);
    (0..d)
        .map(|_| {
            let mut acc = Mat::from_fn(rank, rank, |_, _| ring.zero());
            let mut pw = identity(ring, rank);
            for _ in 0..=rank {
                let c = random_elt(ring, rng);
                acc = mat_add(ring, &acc, &scalar_mul(ring, &c, &pw));
                pw = matmul(ring, &pw, &b);
            }
            scalar_mul(ring, &scale, &acc)
        })
        .collect()
}

pub fn seeded_higgs(
    ring: &Ring,
    d: usize,
    rank: usize,
    val_floor: u32,
    rng: &mut impl Rng,
) -> Result<HiggsModule> {
    HiggsModule::certified(ring, seeded_theta(ring, d, rank, val_floor, rng))
}

/// Seeded symmetric tuples for a Higgs module: random combinations of
/// the degree-1 de Rham cocycles, which are exactly the tuples with
/// theta_i(x_j) = theta_j(x_i).
pub fn seeded_omegas(
    ring: &Ring,
    h: &HiggsModule,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Mat<RingElt>>> {
    let d = h.directions();
    let rho = h.rank;
    let dr = higgs_de_rham(ring, h)?;
    let z1 = cocycle_rows(ring, &dr, 1);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = vec![ring.zero(); rho * d];
        for r in 0..z1.rows() {
            let c = random_elt(ring, rng);
            for (slot, x) in v.iter_mut().enumerate() {
                *x = ring.add(x, &ring.mul(&c, z1.at(r, slot)));
            }
        }
        out.push(Mat::from_fn(rho, d, |l, dir| v[dir * rho + l].clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mul_vec;

    fn w3182() -> Ring {
        Ring::new(CyclotomicParams::new(3, 1, 8, 2).unwrap())
    }

    fn chart_d(d: usize) -> ChartParams {
        ChartParams::new(d, 0, 1).unwrap()
    }

    #[test]
    fn instance_round_trips_through_json() {
        let r = w3182();
        let mut rng = rng_for(7, 0);
        let h = seeded_higgs(&r, 2, 2, 2, &mut rng).unwrap();
        let inst = Instance::from_higgs(chart_d(2), r.params(), &h);
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(inst.digest(), back.digest());
        let h2 = back.to_certified_higgs(&r).unwrap();
        for (a, b) in h.theta.iter().zip(&h2.theta) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_json_is_rejected_with_malformed() {
        assert!(matches!(Instance::from_json("{"), Err(Error::Malformed(_))));
        assert!(matches!(
            Instance::from_json(r#"{"chart":{"d":1,"r":0,"a":1},"ring":{"p":3,"n":1,"e":8,"g":2},"rank":1}"#),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let r = w3182();
        let mut rng = rng_for(3, 1);
        let h = seeded_higgs(&r, 1, 2, 2, &mut rng).unwrap();
        let mut inst = Instance::from_higgs(chart_d(2), r.params(), &h);
        // chart says two directions, theta has one
        assert!(matches!(inst.to_higgs(&r), Err(Error::Malformed(_))));
        inst.chart = chart_d(1);
        assert!(inst.to_higgs(&r).is_ok());
    }

    #[test]
    fn generation_is_deterministic_per_seed_and_stream() {
        let r = w3182();
        let a = seeded_theta(&r, 2, 2, 2, &mut rng_for(11, 4));
        let b = seeded_theta(&r, 2, 2, 2, &mut rng_for(11, 4));
        let c = seeded_theta(&r, 2, 2, 2, &mut rng_for(11, 5));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn seeded_families_are_certifiably_small() {
        let r = w3182();
        for idx in 0..10 {
            let mut rng = rng_for(42, idx);
            let h = seeded_higgs(&r, 2, 2, 2, &mut rng).unwrap();
            assert!(h.cert.is_some());
            for th in &h.theta {
                for i in 0..th.rows() {
                    for j in 0..th.cols() {
                        let v = r.val_pi(th.at(i, j));
                        assert!(v.is_none() || v.unwrap() >= 2);
                    }
                }
            }
        }
    }

    #[test]
    fn seeded_omegas_satisfy_the_symmetry_condition() {
        let r = w3182();
        let mut rng = rng_for(5, 2);
        let h = seeded_higgs(&r, 2, 2, 2, &mut rng).unwrap();
        let omegas = seeded_omegas(&r, &h, 5, &mut rng).unwrap();
        assert_eq!(omegas.len(), 5);
        for om in &omegas {
            let x1: Vec<RingElt> = (0..2).map(|l| om.at(l, 0).clone()).collect();
            let x2: Vec<RingElt> = (0..2).map(|l| om.at(l, 1).clone()).collect();
            let a = mul_vec(&r, &h.theta[0], &x2);
            let b = mul_vec(&r, &h.theta[1], &x1);
            for (u, v) in a.iter().zip(&b) {
                assert!(r.eq_check(u, v, r.e()).is_vanishing());
            }
        }
    }

    #[test]
    fn complex_json_round_trips_and_revalidates() {
        let r = w3182();
        let mut rng = rng_for(9, 0);
        let h = seeded_higgs(&r, 2, 2, 2, &mut rng).unwrap();
        let c = higgs_de_rham(&r, &h).unwrap();
        let j = complex_to_json(&c);
        let text = serde_json::to_string(&j).unwrap();
        let j2: ComplexJson = serde_json::from_str(&text).unwrap();
        let c2 = complex_from_json(&r, &j2).unwrap();
        assert_eq!(c.ranks(), c2.ranks());
        assert_eq!(c.twists(), c2.twists());

        // tampering with one differential entry breaks d^2 = 0 and the
        // constructor catches it
        let mut bad = j2.clone();
        let d0 = &mut bad.diff[0];
        let mut m = d0.at(0, 0).clone();
        m.coeffs[0] = (m.coeffs[0] + 1) % 3u64.pow(8);
        d0.set(0, 0, m);
        assert!(complex_from_json(&r, &bad).is_err());
    }
}

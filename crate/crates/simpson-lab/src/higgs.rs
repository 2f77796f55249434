//! Higgs modules and Γ-representations over the point chart: smallness
//! certificates, the correspondence functors in both directions, the
//! embedded module inside H⊗P, the twist equivalence, the Hitchin
//! coefficients with the small-locus test, and the unit-factor check on
//! nonzero isotypic components.
//!
//! Both sides are finite free W(n,e)-modules carrying d commuting
//! matrices. The exponential direction A_i = exp(-(zeta_p-1) rho_K theta_i)
//! always converges (the constant has valuation 2/(p-1), above the radius
//! of exp); the logarithm direction needs A_i = 1 mod (zeta_p-1) rho_K and
//! is only trusted after a nilpotence certificate on the quotient.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::howell::{howell, image, kernel, rows_subset, subquotient_profile, DegreeProfile};
use crate::matrix::{
    charpoly, identity, is_zero_mat, kron, mat_add, mat_sub, matmul, multi_indices, scalar_mul,
    zeros, Mat,
};
use crate::pd::{gamma_act_pd, pd_add, pd_monomial, pd_zero, PdConstants, PdElement};
use crate::ring::{digit_sum, Ring, RingElt, TwistTag, VanishCheck};

/// Which smallness condition a certificate witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertKind {
    /// Every non-leading characteristic coefficient of every theta_i has
    /// strictly positive valuation (residual nilpotence).
    TwistedSmall,
    /// theta_i = (zeta_p - 1) theta'_i with theta' twisted-small.
    Small,
}

/// Accepted nilpotence evidence: the minimal pi-valuation of each
/// non-leading characteristic coefficient, per direction, ascending by
/// codegree (entry k-1 belongs to the coefficient of X^(rank-k)).
/// `None` marks an exactly vanishing coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallnessCertificate {
    pub kind: CertKind,
    pub coeff_vals: Vec<Vec<Option<u32>>>,
}

/// Finite free module with commuting field components theta_1..theta_d;
/// the target of theta carries the -1 twist.
#[derive(Debug, Clone)]
pub struct HiggsModule {
    pub rank: usize,
    pub theta: Vec<Mat<RingElt>>,
    pub twist: TwistTag,
    pub cert: Option<SmallnessCertificate>,
}

impl HiggsModule {
    /// Validates shapes and pairwise commutation; no certificate yet.
    pub fn new(ring: &Ring, theta: Vec<Mat<RingElt>>) -> Result<HiggsModule> {
        let rank = check_commuting_family(ring, &theta)?;
        Ok(HiggsModule { rank, theta, twist: TwistTag(-1), cert: None })
    }

    /// `new` plus a twisted-small certificate (errors when theta fails it).
    pub fn certified(ring: &Ring, theta: Vec<Mat<RingElt>>) -> Result<HiggsModule> {
        let mut h = HiggsModule::new(ring, theta)?;
        h.cert = Some(is_top_nilpotent(ring, &h.theta)?);
        Ok(h)
    }

    pub fn directions(&self) -> usize {
        self.theta.len()
    }
}

/// Finite free module with commuting generator actions A_1..A_d and an
/// optional theta-witness satisfying A_i = exp(-(zeta_p-1) rho_K theta_i).
#[derive(Debug, Clone)]
pub struct GammaRep {
    pub rank: usize,
    pub a: Vec<Mat<RingElt>>,
    pub witness: Option<Vec<Mat<RingElt>>>,
}

impl GammaRep {
    /// Validates shapes, pairwise commutation, and (when a witness is
    /// attached) the congruence A_i = 1 mod (zeta_p-1) rho_K.
    pub fn new(
        ring: &Ring,
        a: Vec<Mat<RingElt>>,
        witness: Option<Vec<Mat<RingElt>>>,
    ) -> Result<GammaRep> {
        let rank = check_commuting_family(ring, &a)?;
        if let Some(w) = &witness {
            if w.len() != a.len() || w.iter().any(|m| m.rows() != rank || m.cols() != rank) {
                return Err(Error::Malformed("witness shape differs from the action".into()));
            }
            let c = small_unit_scale(ring);
            for (i, ai) in a.iter().enumerate() {
                let b = mat_sub(ring, ai, &identity(ring, rank));
                if mat_exact_div(ring, &b, &c).is_err() {
                    return Err(Error::NotSmall(format!(
                        "action {} is not congruent to 1 mod (zeta_p-1) rho_K",
                        i + 1
                    )));
                }
            }
        }
        Ok(GammaRep { rank, a, witness })
    }

    pub fn directions(&self) -> usize {
        self.a.len()
    }
}

/// zeta_p - 1, the level-1 cyclotomic uniformizer (distinct in meaning
/// from rho_K even though the two coincide over Q_p).
pub(crate) fn zeta_p_m1(ring: &Ring) -> RingElt {
    let z = ring.zeta(1).expect("level 1 always exists");
    ring.sub(&z, &ring.one())
}

/// (zeta_p - 1) rho_K, the scale that measures smallness on the rep side.
pub fn small_unit_scale(ring: &Ring) -> RingElt {
    ring.mul(&zeta_p_m1(ring), &ring.rho_k())
}

pub(crate) fn check_commuting_family(ring: &Ring, mats: &[Mat<RingElt>]) -> Result<usize> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidParams("at least one direction is required".into()))?;
    if first.rows() != first.cols() {
        return Err(Error::InvalidParams("field components must be square".into()));
    }
    let rank = first.rows();
    for m in mats {
        if m.rows() != rank || m.cols() != rank {
            return Err(Error::InvalidParams("field components differ in size".into()));
        }
    }
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            let ab = matmul(ring, &mats[i], &mats[j]);
            let ba = matmul(ring, &mats[j], &mats[i]);
            // judged: division-derived inputs may carry a reduced floor
            if !mat_eq_mod(ring, &ab, &ba, ring.judgment_exponent()) {
                return Err(Error::NonCommuting);
            }
        }
    }
    Ok(rank)
}

/// Entrywise equality judged mod p^k.
pub fn mat_eq_mod(ring: &Ring, a: &Mat<RingElt>, b: &Mat<RingElt>, k: u32) -> bool {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "shape mismatch");
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if !ring.eq_check(a.at(i, j), b.at(i, j), k).is_vanishing() {
                return false;
            }
        }
    }
    true
}

fn mat_exact_div(ring: &Ring, a: &Mat<RingElt>, y: &RingElt) -> Result<Mat<RingElt>> {
    let mut data = Vec::with_capacity(a.rows() * a.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            data.push(ring.exact_div(a.at(i, j), y)?);
        }
    }
    Ok(Mat::new(a.rows(), a.cols(), data))
}

/// Inverse via the characteristic polynomial: c(A) = 0 gives
/// A^-1 = -c_0^-1 (c_1 + c_2 A + ... + A^(rank-1)); errors when the
/// constant coefficient is not a unit.
pub fn mat_inv(ring: &Ring, a: &Mat<RingElt>) -> Result<Mat<RingElt>> {
    let cp = charpoly(ring, a);
    let c0 = &cp[0];
    if !ring.is_unit(c0) {
        return Err(Error::InvalidParams("matrix is not invertible".into()));
    }
    let n = a.rows();
    let mut acc = zeros(ring, n, n);
    for k in (1..cp.len()).rev() {
        acc = matmul(ring, &acc, a);
        for i in 0..n {
            let v = ring.add(acc.at(i, i), &cp[k]);
            acc.set(i, i, v);
        }
    }
    let s = ring.neg(&ring.inv_unit(c0)?);
    Ok(scalar_mul(ring, &s, &acc))
}

/// Nilpotence certificate from the characteristic-polynomial criterion:
/// every non-leading coefficient of every direction must be a non-unit.
/// This gives theta^(rank k) inside pi^k times the integral span, hence
/// convergence of every series the correspondence uses.
pub fn is_top_nilpotent(ring: &Ring, theta: &[Mat<RingElt>]) -> Result<SmallnessCertificate> {
    let rank = check_commuting_family(ring, theta)?;
    let mut coeff_vals = Vec::with_capacity(theta.len());
    for (i, th) in theta.iter().enumerate() {
        let cp = charpoly(ring, th);
        let mut vals = Vec::with_capacity(rank);
        // ascending by codegree: coefficient of X^(rank-k) for k = 1..rank
        for k in 1..=rank {
            let c = &cp[rank - k];
            let v = ring.val_pi(c);
            if v == Some(0) {
                return Err(Error::NotSmall(format!(
                    "direction {}, characteristic coefficient {} is a unit",
                    i + 1,
                    k
                )));
            }
            vals.push(v);
        }
        coeff_vals.push(vals);
    }
    Ok(SmallnessCertificate { kind: CertKind::TwistedSmall, coeff_vals })
}

/// Fallback predicate: theta_i^steps = 0 mod pi for every direction
/// (residual nilpotence tested by brute force). Default steps
/// rank * e * (p-1).
pub fn power_nilpotence(ring: &Ring, theta: &[Mat<RingElt>], steps: Option<u64>) -> bool {
    let Some(first) = theta.first() else { return false };
    let rank = first.rows() as u64;
    let n = steps.unwrap_or(rank * ring.e() as u64 * (ring.p() - 1));
    theta.iter().all(|th| {
        let pw = crate::matrix::mat_pow(ring, th, n);
        (0..pw.rows()).all(|i| (0..pw.cols()).all(|j| !ring.is_unit(pw.at(i, j))))
    })
}

/// F(scale * theta) = sum_{n>=0} (-1)^n ((zeta_p-1)^n / (n+1)!)(scale theta)^n,
/// the unit with exp(-(zeta_p-1) x) = 1 - (zeta_p-1) x F(x). The series is
/// summed until the matrix power vanishes at working precision; that the
/// powers do die is exactly residual nilpotence of scale * theta.
pub fn f_matrix(ring: &Ring, theta: &Mat<RingElt>, scale: &RingElt) -> Result<Mat<RingElt>> {
    assert_eq!(theta.rows(), theta.cols(), "field component must be square");
    let rank = theta.rows();
    let cap = ring.pi_length() as u64;
    let phi = ring.phi() as u64;
    let m = scalar_mul(ring, scale, theta);
    let mut out = identity(ring, rank);
    let mut m_pow = identity(ring, rank);
    let zeta_val: u64 = ring.p().pow(ring.level() - 1);
    for n in 1..=rank as u64 * cap + 1 {
        m_pow = matmul(ring, &m_pow, &m);
        if is_zero_mat(ring, &m_pow) {
            return Ok(out);
        }
        // the coefficient has pi-valuation p^(level-1) s_p(n) - phi val_p(n+1)
        let mut vp1 = 0u64;
        let mut t = n + 1;
        while t % ring.p() == 0 {
            vp1 += 1;
            t /= ring.p();
        }
        if (zeta_val * digit_sum(n, ring.p())).saturating_sub(phi * vp1) >= cap {
            continue;
        }
        let mut c = ring.unit_series_coeff(n)?;
        if n % 2 == 1 {
            c = ring.neg(&c);
        }
        out = mat_add(ring, &out, &scalar_mul(ring, &c, &m_pow));
    }
    Err(Error::PrecisionExhausted(
        "unit series does not terminate; scale * theta is not residually nilpotent".into(),
    ))
}

/// A_i = exp(-(zeta_p-1) rho_K theta_i), summed as
/// sum_n (-1)^n ((zeta_p-1) rho_K)^[n] theta_i^n. Term n has pi-valuation
/// at least p^(level-1)(n + s_p(n)), so the tail below working precision
/// is certified independently of theta. Stores the theta-witness.
pub fn rep_from_higgs(ring: &Ring, h: &HiggsModule) -> Result<GammaRep> {
    match &h.cert {
        Some(c) if c.kind == CertKind::TwistedSmall => {}
        _ => {
            is_top_nilpotent(ring, &h.theta)?;
        }
    }
    let cap = ring.pi_length() as u64;
    let lvl_scale: u64 = ring.p().pow(ring.level() - 1);
    let mut actions = Vec::with_capacity(h.theta.len());
    for th in &h.theta {
        let mut a = identity(ring, h.rank);
        let mut pow = identity(ring, h.rank);
        for n in 1..=cap {
            pow = matmul(ring, &pow, th);
            if is_zero_mat(ring, &pow) {
                break;
            }
            if lvl_scale * (n + digit_sum(n, ring.p())) >= cap {
                // this and every later coefficient vanish at working precision
                break;
            }
            let mut c = ring.pd_power_rho_zeta(n)?;
            if n % 2 == 1 {
                c = ring.neg(&c);
            }
            a = mat_add(ring, &a, &scalar_mul(ring, &c, &pow));
        }
        actions.push(a);
    }
    GammaRep::new(ring, actions, Some(h.theta.clone()))
}

/// theta_i = -log(A_i) / ((zeta_p-1) rho_K), computed as
/// sum_{k>=1} (-1)^k c^(k-1) U^k / k with A = 1 + cU; requires the
/// congruence A = 1 mod c. A stored witness is returned verbatim after
/// checking it against the logarithm at judgment precision (the log path
/// divides and so carries less precision than the witness).
pub fn higgs_from_rep(ring: &Ring, m: &GammaRep) -> Result<HiggsModule> {
    let c = small_unit_scale(ring);
    let cap = ring.pi_length() as u64;
    let mut logs = Vec::with_capacity(m.a.len());
    for (i, ai) in m.a.iter().enumerate() {
        let b = mat_sub(ring, ai, &identity(ring, m.rank));
        let u = mat_exact_div(ring, &b, &c).map_err(|_| {
            Error::NotSmall(format!(
                "action {} is not congruent to 1 mod (zeta_p-1) rho_K",
                i + 1
            ))
        })?;
        let mut th = zeros(ring, m.rank, m.rank);
        let mut u_pow = identity(ring, m.rank);
        let mut c_pow = ring.one();
        let mut done = false;
        for k in 1..=cap + 1 {
            u_pow = matmul(ring, &u_pow, &u);
            let t = scalar_mul(ring, &c_pow, &u_pow);
            if is_zero_mat(ring, &t) {
                done = true;
                break;
            }
            // division by k is exact: the entries carry c^(k-1)
            let t = mat_exact_div(ring, &t, &ring.from_u64(k))?;
            let t = if k % 2 == 1 { crate::matrix::mat_neg(ring, &t) } else { t };
            th = mat_add(ring, &th, &t);
            c_pow = ring.mul(&c_pow, &c);
        }
        if !done {
            return Err(Error::PrecisionExhausted("logarithm series did not terminate".into()));
        }
        logs.push(th);
    }
    let theta = match &m.witness {
        Some(w) => {
            for (wi, li) in w.iter().zip(&logs) {
                if !mat_eq_mod(ring, wi, li, ring.judgment_exponent()) {
                    return Err(Error::Malformed(
                        "stored witness disagrees with the logarithm at judgment precision".into(),
                    ));
                }
            }
            w.clone()
        }
        None => logs,
    };
    let mut h = HiggsModule::new(ring, theta)?;
    h.cert = Some(is_top_nilpotent(ring, &h.theta).map_err(|e| match e {
        Error::NotSmall(s) => Error::NotSmall(format!("logarithm quotient fails nilpotence: {s}")),
        other => other,
    })?);
    Ok(h)
}

/// The embedded copy of H inside H tensor P_(<=D): its generators, with
/// the two assertions that make it the flat-sections module.
#[derive(Debug, Clone)]
pub struct RepOnPd {
    /// Generator g_k = sum_J (-1)^|J| theta^J (h_k) Y^[J]; outer index k,
    /// inner index the H-coordinate.
    pub generators: Vec<Vec<PdElement<RingElt>>>,
    /// theta tensor id + id tensor Theta kills every generator: exactly in
    /// degrees < D, below judgment precision in the top degree.
    pub theta_flat: bool,
    /// gamma_i on the generators acts by the matrix exp(-(zeta_p-1) rho_K theta_i).
    pub gamma_induced: bool,
}

impl RepOnPd {
    pub fn pass(&self) -> bool {
        self.theta_flat && self.gamma_induced
    }
}

pub(crate) fn theta_power_table(
    ring: &Ring,
    theta: &[Mat<RingElt>],
    rank: usize,
    bound: u32,
) -> HashMap<Vec<u32>, Mat<RingElt>> {
    let d = theta.len();
    let mut table: HashMap<Vec<u32>, Mat<RingElt>> = HashMap::new();
    for j in multi_indices(d, bound) {
        let m = match j.iter().position(|&x| x > 0) {
            None => identity(ring, rank),
            Some(i) => {
                let mut prev = j.clone();
                prev[i] -= 1;
                matmul(ring, &theta[i], &table[&prev])
            }
        };
        table.insert(j, m);
    }
    table
}

/// Builds exp(-sum theta_i Y_i)(H) inside H tensor P_(<=D) and checks the
/// flatness and the induced generator action. Errors with precision
/// exhaustion when the degree-D boundary terms are not negligible.
pub fn rep_module_on_pd(ring: &Ring, h: &HiggsModule, d_bound: u32) -> Result<RepOnPd> {
    match &h.cert {
        Some(c) if c.kind == CertKind::TwistedSmall => {}
        _ => {
            is_top_nilpotent(ring, &h.theta)?;
        }
    }
    let d = h.theta.len();
    let rank = h.rank;
    let table = theta_power_table(ring, &h.theta, rank, d_bound);
    let indices = multi_indices(d, d_bound);

    let mut generators: Vec<Vec<PdElement<RingElt>>> = Vec::with_capacity(rank);
    for k in 0..rank {
        let mut coords = vec![pd_zero::<RingElt>(d, d_bound); rank];
        for j in &indices {
            let deg: u32 = j.iter().sum();
            let thj = &table[j];
            for (l, coord) in coords.iter_mut().enumerate() {
                let mut c = thj.at(l, k).clone();
                if deg % 2 == 1 {
                    c = ring.neg(&c);
                }
                *coord = pd_add(ring, coord, &pd_monomial(ring, d, d_bound, j, &c));
            }
        }
        generators.push(coords);
    }

    // Theta_H component i of g_k: theta_i g_k + d/dY_i g_k. Degrees < D
    // cancel exactly; the top degree leaves theta_i times the degree-D part.
    let mut theta_flat = true;
    for gk in &generators {
        for (i, th) in h.theta.iter().enumerate() {
            for l in 0..rank {
                let mut r = crate::pd::pd_derive(ring, &gk[l], i + 1);
                for (m, coord) in gk.iter().enumerate() {
                    r = pd_add(ring, &r, &crate::pd::pd_scale(ring, th.at(l, m), coord));
                }
                for (j, c) in r.terms() {
                    let deg: u32 = j.iter().sum();
                    if deg < d_bound {
                        theta_flat = false;
                    } else {
                        match ring.vanish_check(c, ring.judgment_exponent()) {
                            VanishCheck::Vanishes => {}
                            _ => {
                                return Err(Error::PrecisionExhausted(format!(
                                    "degree-{d_bound} boundary term is visible at judgment precision"
                                )))
                            }
                        }
                    }
                }
            }
        }
    }

    // gamma_i(g_k) must equal sum_m (A_i)_mk g_m with A from the series.
    let rep = rep_from_higgs(ring, h)?;
    let consts = PdConstants::rho_zeta(ring, d_bound)?;
    let mut gamma_induced = true;
    'outer: for i in 0..d {
        let mut delta = vec![0i64; d];
        delta[i] = 1;
        for (k, gk) in generators.iter().enumerate() {
            for l in 0..rank {
                let lhs = gamma_act_pd(ring, &gk[l], &delta, &consts);
                let mut rhs = pd_zero::<RingElt>(d, d_bound);
                for (m, gm) in generators.iter().enumerate() {
                    rhs = pd_add(ring, &rhs, &crate::pd::pd_scale(ring, rep.a[i].at(m, k), &gm[l]));
                }
                // truncation discards the t > D - |K| tail of the action
                // series, so equality is judged, not representational
                let diff = crate::pd::pd_sub(ring, &lhs, &rhs);
                for (_, c) in diff.terms() {
                    if !ring.vanish_check(c, ring.judgment_exponent()).is_vanishing() {
                        gamma_induced = false;
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(RepOnPd { generators, theta_flat, gamma_induced })
}

/// Direction of the twist equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistDirection {
    /// theta_i -> (zeta_p - 1) theta_i (twisted-small becomes small).
    Twist,
    /// theta_i -> theta_i / (zeta_p - 1), requiring exact divisibility.
    Untwist,
}

/// The twist equivalence on field components. The certificate is
/// recomputed on the side where residual nilpotence is the defining
/// condition and relabeled on the other.
pub fn twist(ring: &Ring, h: &HiggsModule, dir: TwistDirection) -> Result<HiggsModule> {
    let z = zeta_p_m1(ring);
    let theta: Vec<Mat<RingElt>> = match dir {
        TwistDirection::Twist => h.theta.iter().map(|t| scalar_mul(ring, &z, t)).collect(),
        TwistDirection::Untwist => {
            let mut out = Vec::with_capacity(h.theta.len());
            for t in &h.theta {
                out.push(mat_exact_div(ring, t, &z)?);
            }
            out
        }
    };
    let mut out = HiggsModule::new(ring, theta)?;
    out.cert = match dir {
        // the twisted module is small exactly when the input was twisted-small
        TwistDirection::Twist => {
            if is_top_nilpotent(ring, &h.theta).is_ok() {
                let coeff_vals = certificate_vals(ring, &out);
                Some(SmallnessCertificate { kind: CertKind::Small, coeff_vals })
            } else {
                None
            }
        }
        TwistDirection::Untwist => is_top_nilpotent(ring, &out.theta).ok(),
    };
    Ok(out)
}

fn certificate_vals(ring: &Ring, h: &HiggsModule) -> Vec<Vec<Option<u32>>> {
    h.theta
        .iter()
        .map(|th| {
            let cp = charpoly(ring, th);
            (1..=h.rank).map(|k| ring.val_pi(&cp[h.rank - k])).collect()
        })
        .collect()
}

/// Characteristic coefficients c_1..c_rank of every direction (c_k is the
/// coefficient of X^(rank-k), so c_1 = -trace and c_rank = +-det).
pub fn hitchin(ring: &Ring, h: &HiggsModule) -> Vec<Vec<RingElt>> {
    h.theta
        .iter()
        .map(|th| {
            let cp = charpoly(ring, th);
            (1..=h.rank).map(|k| cp[h.rank - k].clone()).collect()
        })
        .collect()
}

/// The small locus at finite level: every c_k exactly divisible by
/// (zeta_p-1)^k times the uniformizer, the tightest integral rendering of
/// a strict valuation inequality.
pub fn in_small_locus(ring: &Ring, h: &HiggsModule) -> bool {
    let z = zeta_p_m1(ring);
    for coeffs in hitchin(ring, h) {
        for (k, c) in coeffs.iter().enumerate() {
            let bound = ring.mul(&ring.pow(&z, k as u64 + 1), &ring.pi());
            if ring.exact_div(c, &bound).is_err() {
                return false;
            }
        }
    }
    true
}

/// Outcome of the unit-factor analysis of gamma_i - 1 on the alpha-isotypic
/// component M T^alpha.
#[derive(Debug, Clone)]
pub struct DecompletionReport {
    /// The direction i (1-based) whose alpha_i is nonzero and was used.
    pub direction: usize,
    /// U with gamma_i - 1 = (zeta^alpha_i - 1) U, built from the unit series.
    pub unit: Mat<RingElt>,
    /// The series route and the exact division of zeta^alpha A - 1 agree.
    pub two_path_agree: bool,
    /// U is invertible, so the component contributes nothing in degree 0.
    pub unit_invertible: bool,
    /// Kernel of gamma_i - 1 on the component (invisible at judgment
    /// precision when the analysis is sound).
    pub kernel: DegreeProfile,
    /// (zeta_p - 1) times the identity lands in the image of gamma_i - 1.
    pub cokernel_killed: bool,
}

impl DecompletionReport {
    pub fn pass(&self) -> bool {
        self.two_path_agree && self.unit_invertible && self.kernel.negligible && self.cokernel_killed
    }
}

/// On M T^alpha the generator gamma_i acts by zeta^alpha_i A_i, so
/// gamma_i - 1 = (zeta^alpha_i - 1) U with
/// U = 1 - zeta^alpha_i ((zeta_p-1)/(zeta^alpha_i-1)) rho_K theta_i F(rho_K theta_i).
/// Verifies U against the direct quotient, its invertibility, the kernel
/// profile, and that the cokernel dies under zeta_p - 1.
pub fn decompletion_component_check(
    ring: &Ring,
    h: &HiggsModule,
    alpha: &[(u64, u32)],
) -> Result<DecompletionReport> {
    if alpha.len() != h.theta.len() {
        return Err(Error::InvalidParams("alpha width differs from the direction count".into()));
    }
    let reduced_level = |&(mut num, mut lvl): &(u64, u32)| {
        while lvl > 0 && num % ring.p() == 0 {
            num /= ring.p();
            lvl -= 1;
        }
        lvl
    };
    let i = alpha
        .iter()
        .position(|a| reduced_level(a) > 0)
        .ok_or_else(|| Error::InvalidParams("alpha must have a nonzero coordinate".into()))?;
    let (num, lvl) = alpha[i];
    let z = ring.zeta_alpha(num, lvl)?;
    let zm1 = ring.sub(&z, &ring.one());
    let zeta_p = zeta_p_m1(ring);
    // the divisibility behind "killed by zeta_p - 1"
    let q = ring.exact_div(&zeta_p, &zm1)?;

    let f = f_matrix(ring, &h.theta[i], &ring.rho_k())?;
    let scale = ring.mul(&ring.mul(&z, &q), &ring.rho_k());
    let correction = scalar_mul(ring, &scale, &matmul(ring, &h.theta[i], &f));
    let unit = mat_sub(ring, &identity(ring, h.rank), &correction);

    // second path: divide zeta^alpha A - 1 entrywise
    let rep = rep_from_higgs(ring, h)?;
    let gm1 = mat_sub(ring, &scalar_mul(ring, &z, &rep.a[i]), &identity(ring, h.rank));
    let unit_direct = mat_exact_div(ring, &gm1, &zm1)?;
    let two_path_agree = mat_eq_mod(ring, &unit, &unit_direct, ring.judgment_exponent());

    let unit_invertible = rows_subset(ring, &identity(ring, h.rank), &howell(ring, &unit));

    let ker = kernel(ring, &gm1);
    let kernel_profile = subquotient_profile(ring, &ker, &zeros(ring, 0, h.rank))?;

    let killer = scalar_mul(ring, &zeta_p, &identity(ring, h.rank));
    let cokernel_killed = rows_subset(ring, &killer, &image(ring, &gm1));

    Ok(DecompletionReport {
        direction: i + 1,
        unit,
        two_path_agree,
        unit_invertible,
        kernel: kernel_profile,
        cokernel_killed,
    })
}

/// Block-diagonal direct sum of field components.
pub fn higgs_direct_sum(ring: &Ring, a: &HiggsModule, b: &HiggsModule) -> Result<HiggsModule> {
    if a.theta.len() != b.theta.len() {
        return Err(Error::InvalidParams("direction counts differ".into()));
    }
    let rank = a.rank + b.rank;
    let theta = a
        .theta
        .iter()
        .zip(&b.theta)
        .map(|(ta, tb)| {
            Mat::from_fn(rank, rank, |i, j| {
                if i < a.rank && j < a.rank {
                    ta.at(i, j).clone()
                } else if i >= a.rank && j >= a.rank {
                    tb.at(i - a.rank, j - a.rank).clone()
                } else {
                    ring.zero()
                }
            })
        })
        .collect();
    HiggsModule::new(ring, theta)
}

/// Tensor product: theta_i = theta_i tensor 1 + 1 tensor theta'_i.
pub fn higgs_tensor(ring: &Ring, a: &HiggsModule, b: &HiggsModule) -> Result<HiggsModule> {
    if a.theta.len() != b.theta.len() {
        return Err(Error::InvalidParams("direction counts differ".into()));
    }
    let ia = identity(ring, a.rank);
    let ib = identity(ring, b.rank);
    let theta = a
        .theta
        .iter()
        .zip(&b.theta)
        .map(|(ta, tb)| mat_add(ring, &kron(ring, ta, &ib), &kron(ring, &ia, tb)))
        .collect();
    HiggsModule::new(ring, theta)
}

/// Dual module: theta_i -> -theta_i^t.
pub fn higgs_dual(ring: &Ring, a: &HiggsModule) -> Result<HiggsModule> {
    let theta = a.theta.iter().map(|t| crate::matrix::mat_neg(ring, &t.transpose())).collect();
    HiggsModule::new(ring, theta)
}

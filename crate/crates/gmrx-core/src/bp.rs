//! Joint detection of two overlapping packets by Gaussian-mixture message
//! passing on the chain over the stacked channel state.
//!
//! The hidden state at time `i` is `s_i = (h_i, h'_i)` per antenna, a
//! Gauss-Markov chain (each user's AR(1) process). Conditioned on the symbol
//! pair `(x_i, x'_i)`, the observation `y_i = x_i h_i + x'_i h'_i + n_i` is a
//! linear-Gaussian measurement, so the sum-product messages along the chain
//! are Gaussian mixtures with one component per surviving hypothesis
//! history:
//!
//! * prediction multiplies means by alpha and relaxes covariances toward the
//!   stationary one (`C -> alpha^2 C + (1 - alpha^2) C_stat` per user block);
//! * the measurement update runs one conditional (Kalman) update per active
//!   symbol hypothesis, folding the hypothesis likelihood and its prior into
//!   the component weight;
//! * after every step weights are renormalized in the log domain and the
//!   mixture is pruned to the `k_max` heaviest components.
//!
//! Because the stationary chain is time-reversible, the backward messages
//! are produced by the same filter run on the reversed sequence. The
//! posterior at time `i` combines the forward prediction, the backward
//! prediction (dividing out the stationary prior counted twice), and the
//! local likelihood of each hypothesis; symbol marginals and the channel
//! posterior (moment-matched mean and covariance) fall out of the same pass.
//! With `k_max = usize::MAX` nothing is ever pruned and the procedure is
//! exact.
//!
//! Covariances stay block-diagonal across antennas throughout (antennas fade
//! independently and every measurement couples only states of one antenna),
//! so components store one 2x2 Hermitian block per antenna.

use crate::channel::{FadingParams, NoiseParams, ReceivedFrame};
use crate::error::{Error, Result};
use crate::framing::PacketSpec;
use crate::gauss::{cvec2_dot, Canon2, Herm2, C64, CVec2, ZV};
use smallvec::SmallVec;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs, bounding
/// every LLR this module emits to about +/-27.6.
pub const LLR_CLAMP_EPS: f64 = 1e-12;

/// Pairs whose weight sits this far (in nats) below the heaviest pair
/// contribute less than 1e-15 of the posterior mass each and are skipped.
const PAIR_SKIP_LOG: f64 = -34.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum User {
    A,
    B,
}

/// Prior mass over the symbol alphabet {-1, +1, 0(silent)} at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SymbolPmf {
    /// The user is not transmitting: point mass at 0.
    Silent,
    /// Pilot/preamble/known-header symbol: point mass at +/-1.
    Known(i8),
    /// Data symbol with `P(x = +1) = p_plus`.
    Soft { p_plus: f64 },
}

impl SymbolPmf {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SymbolPmf::Known(s) if s != 1 && s != -1 => {
                Err(Error::Parameter(format!("known symbol {s} not in {{-1, +1}}")))
            }
            SymbolPmf::Soft { p_plus } if !(0.0..=1.0).contains(&p_plus) => {
                Err(Error::Parameter(format!("p_plus {p_plus} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Prior log-likelihood ratio `ln P(+1)/P(-1)`, clamped; 0 when silent.
    pub fn llr(&self) -> f64 {
        match *self {
            SymbolPmf::Silent => 0.0,
            SymbolPmf::Known(s) => s as f64 * max_llr(),
            SymbolPmf::Soft { p_plus } => {
                let p = p_plus.clamp(LLR_CLAMP_EPS, 1.0 - LLR_CLAMP_EPS);
                (p / (1.0 - p)).ln()
            }
        }
    }
}

#[inline]
pub fn max_llr() -> f64 {
    ((1.0 - LLR_CLAMP_EPS) / LLR_CLAMP_EPS).ln()
}

/// Per-position symbol priors for both users over one reception window.
#[derive(Clone, Debug)]
pub struct SymbolPrior {
    pub user_a: Vec<SymbolPmf>,
    pub user_b: Vec<SymbolPmf>,
}

impl SymbolPrior {
    pub fn len(&self) -> usize {
        self.user_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_a.is_empty()
    }

    pub fn user(&self, user: User) -> &[SymbolPmf] {
        match user {
            User::A => &self.user_a,
            User::B => &self.user_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_a.len() != self.user_b.len() {
            return Err(Error::Shape(format!(
                "prior windows differ: {} vs {}",
                self.user_a.len(),
                self.user_b.len()
            )));
        }
        for pmf in self.user_a.iter().chain(self.user_b.iter()) {
            pmf.validate()?;
        }
        Ok(())
    }

    /// Install soft data priors from LLRs (`ln P(+1)/P(-1)`), e.g. decoder
    /// extrinsics. Every position must currently be a data position.
    pub fn set_soft_llrs(&mut self, user: User, positions: &[usize], llrs: &[f64]) -> Result<()> {
        if positions.len() != llrs.len() {
            return Err(Error::Shape(format!(
                "{} positions vs {} llrs",
                positions.len(),
                llrs.len()
            )));
        }
        let side = match user {
            User::A => &mut self.user_a,
            User::B => &mut self.user_b,
        };
        for (&pos, &llr) in positions.iter().zip(llrs) {
            let pmf = side
                .get_mut(pos)
                .ok_or_else(|| Error::Shape(format!("position {pos} outside window")))?;
            if !matches!(pmf, SymbolPmf::Soft { .. }) {
                return Err(Error::Parameter(format!(
                    "position {pos} is not a data position"
                )));
            }
            let p = 1.0 / (1.0 + (-llr).exp());
            *pmf = SymbolPmf::Soft { p_plus: p.clamp(LLR_CLAMP_EPS, 1.0 - LLR_CLAMP_EPS) };
        }
        Ok(())
    }
}

/// Receiver-side knowledge used to lay out priors for one reception window.
#[derive(Clone, Copy, Debug)]
pub struct PriorSpec<'a> {
    pub spec_a: &'a PacketSpec,
    pub spec_b: &'a PacketSpec,
    /// The deployment-wide preamble sequence (shared by both users).
    pub preamble: &'a [i8],
    pub window: usize,
    /// Detected/known start of the second packet; `None` = no interferer.
    pub offset: Option<usize>,
    /// Known header bits, when the mode provides them.
    pub header_a: Option<&'a [u8]>,
    pub header_b: Option<&'a [u8]>,
    /// Whether the interferer's pilot positions are treated as known +1
    /// symbols (`true`) or as unknown data (`false`).
    pub use_interferer_pilots: bool,
}

fn user_layout(
    spec: &PacketSpec,
    preamble: &[i8],
    header: Option<&[u8]>,
    start: usize,
    window: usize,
    pilots_known: bool,
    out: &mut [SymbolPmf],
) {
    let payload_start = spec.preamble_len + spec.header_len;
    for local in 0..spec.frame_len() {
        let t = start + local;
        if t >= window {
            break;
        }
        out[t] = if local < spec.preamble_len {
            SymbolPmf::Known(preamble[local])
        } else if local < payload_start {
            match header {
                Some(bits) => SymbolPmf::Known(crate::framing::map_bit(bits[local - spec.preamble_len])),
                None => SymbolPmf::Soft { p_plus: 0.5 },
            }
        } else {
            let slot = local - payload_start;
            if slot % spec.pilot_period == 0 {
                if pilots_known {
                    SymbolPmf::Known(1)
                } else {
                    SymbolPmf::Soft { p_plus: 0.5 }
                }
            } else {
                SymbolPmf::Soft { p_plus: 0.5 }
            }
        };
    }
}

/// Lay out priors for a two-packet (or single-packet) reception window.
pub fn build_priors(ps: &PriorSpec) -> Result<SymbolPrior> {
    ps.spec_a.validate()?;
    ps.spec_b.validate()?;
    if ps.preamble.len() != ps.spec_a.preamble_len || ps.preamble.len() != ps.spec_b.preamble_len {
        return Err(Error::Shape(format!(
            "preamble of {} symbols does not match specs ({} / {})",
            ps.preamble.len(),
            ps.spec_a.preamble_len,
            ps.spec_b.preamble_len
        )));
    }
    if let Some(bits) = ps.header_a {
        if bits.len() != ps.spec_a.header_len {
            return Err(Error::Shape("header_a bits do not match header_len".into()));
        }
    }
    if let Some(bits) = ps.header_b {
        if bits.len() != ps.spec_b.header_len {
            return Err(Error::Shape("header_b bits do not match header_len".into()));
        }
    }
    let mut user_a = vec![SymbolPmf::Silent; ps.window];
    let mut user_b = vec![SymbolPmf::Silent; ps.window];
    // The desired user's own pilots are always known to the receiver.
    user_layout(ps.spec_a, ps.preamble, ps.header_a, 0, ps.window, true, &mut user_a);
    if let Some(offset) = ps.offset {
        user_layout(
            ps.spec_b,
            ps.preamble,
            ps.header_b,
            offset,
            ps.window,
            ps.use_interferer_pilots,
            &mut user_b,
        );
    }
    Ok(SymbolPrior { user_a, user_b })
}

/// Fading/noise model handed to the detector.
#[derive(Clone, Copy, Debug)]
pub struct BpModel {
    pub fading_a: FadingParams,
    pub fading_b: FadingParams,
    pub noise: NoiseParams,
}

impl BpModel {
    pub fn validate(&self) -> Result<()> {
        self.fading_a.validate()?;
        self.fading_b.validate()?;
        self.noise.validate()?;
        if self.fading_a.n_r != self.fading_b.n_r {
            return Err(Error::Shape(format!(
                "antenna counts differ: {} vs {}",
                self.fading_a.n_r, self.fading_b.n_r
            )));
        }
        if self.noise.sigma_n2 <= 0.0 {
            return Err(Error::Parameter(
                "detector requires sigma_n2 > 0 (use a small value for noiseless limits)".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Public mixture representation
// ---------------------------------------------------------------------------

/// One Gaussian component of a channel-state mixture.
///
/// `mean` stacks `(h, h')` per antenna: entry `a` is the desired user's
/// coefficient at antenna `a`, entry `n_r + a` the interferer's. `cov[a]` is
/// the 2x2 Hermitian block coupling those two entries; blocks across
/// antennas are uncorrelated, so the full `2 n_r x 2 n_r` covariance is
/// block-diagonal (see [`MixtureComponent::cov_dense`]).
#[derive(Clone, Debug)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<C64>,
    pub cov: Vec<Herm2>,
}

impl MixtureComponent {
    pub fn n_r(&self) -> usize {
        self.cov.len()
    }

    /// Dense row-major `2 n_r x 2 n_r` covariance.
    pub fn cov_dense(&self) -> Vec<C64> {
        let n_r = self.n_r();
        let d = 2 * n_r;
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        for (a, b) in self.cov.iter().enumerate() {
            m[a * d + a] = C64::new(b.aa, 0.0);
            m[(n_r + a) * d + (n_r + a)] = C64::new(b.bb, 0.0);
            m[a * d + (n_r + a)] = b.ab;
            m[(n_r + a) * d + a] = b.ab.conj();
        }
        m
    }
}

/// Weighted Gaussian mixture over the stacked channel state.
#[derive(Clone, Debug, Default)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
}

/// Indices of the `k` largest weights, ties broken toward the lower index,
/// returned in ascending index order (so pruning is order-stable).
fn select_top_k(weights: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&i, &j| weights[j].partial_cmp(&weights[i]).unwrap().then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Keep the `k_max` heaviest components and renormalize. Order-stable:
/// retained components keep their relative order; exact ties keep the lower
/// index.
pub fn prune_mixture(mix: &GaussianMixture, k_max: usize) -> Result<GaussianMixture> {
    if k_max == 0 {
        return Err(Error::Parameter("k_max must be >= 1".into()));
    }
    for c in &mix.components {
        if !(c.weight >= 0.0) || !c.weight.is_finite() {
            return Err(Error::Parameter(format!("invalid component weight {}", c.weight)));
        }
    }
    let weights: Vec<f64> = mix.components.iter().map(|c| c.weight).collect();
    let keep = if weights.len() > k_max { select_top_k(&weights, k_max) } else { (0..weights.len()).collect() };
    let total: f64 = keep.iter().map(|&i| weights[i]).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateMessage {
            step: 0,
            detail: "all retained mixture weights are zero".into(),
        });
    }
    Ok(GaussianMixture {
        components: keep
            .into_iter()
            .map(|i| {
                let mut c = mix.components[i].clone();
                c.weight /= total;
                c
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Detector internals
// ---------------------------------------------------------------------------

type Blocks<T> = SmallVec<[T; 1]>;

#[derive(Clone)]
struct Comp {
    log_w: f64,
    mean: Blocks<CVec2>,
    cov: Blocks<Herm2>,
}

#[derive(Clone, Copy)]
struct Hyp {
    xa: f64,
    xb: f64,
    log_p: f64,
}

type Hyps = SmallVec<[Hyp; 4]>;

fn hyps_at(pa: SymbolPmf, pb: SymbolPmf) -> Hyps {
    let side = |pmf: SymbolPmf| -> SmallVec<[(f64, f64); 2]> {
        match pmf {
            SymbolPmf::Silent => SmallVec::from_buf_and_len([(0.0, 0.0), (0.0, 0.0)], 1),
            SymbolPmf::Known(s) => SmallVec::from_buf_and_len([(s as f64, 0.0), (0.0, 0.0)], 1),
            SymbolPmf::Soft { p_plus } => {
                let p = p_plus.clamp(LLR_CLAMP_EPS, 1.0 - LLR_CLAMP_EPS);
                SmallVec::from_buf_and_len([(1.0, p.ln()), (-1.0, (1.0 - p).ln())], 2)
            }
        }
    };
    let mut out = Hyps::new();
    for &(xa, la) in &side(pa) {
        for &(xb, lb) in &side(pb) {
            out.push(Hyp { xa, xb, log_p: la + lb });
        }
    }
    out
}

/// Log-likelihood of observing `y` under symbol pair `(xa, xb)` from a
/// Gaussian state belief, without updating it.
#[inline]
fn obs_loglik(mean: &[CVec2], cov: &[Herm2], y: &[C64], xa: f64, xb: f64, sn2: f64) -> f64 {
    let mut ll = 0.0;
    for a in 0..mean.len() {
        let s = cov[a].quad_real(xa, xb) + sn2;
        let e = y[a] - (xa * mean[a][0] + xb * mean[a][1]);
        ll += -(std::f64::consts::PI * s).ln() - e.norm_sqr() / s;
    }
    ll
}

/// Conditional (Kalman) update of a Gaussian state belief for symbol pair
/// `(xa, xb)`; silent pairs leave the belief untouched.
#[inline]
fn obs_update(mean: &mut [CVec2], cov: &mut [Herm2], y: &[C64], xa: f64, xb: f64, sn2: f64) {
    for a in 0..mean.len() {
        let s = cov[a].quad_real(xa, xb) + sn2;
        let e = y[a] - (xa * mean[a][0] + xb * mean[a][1]);
        let pu = cov[a].mul_real(xa, xb);
        let gain = e / s;
        mean[a][0] += pu[0] * gain;
        mean[a][1] += pu[1] * gain;
        cov[a] = cov[a].rank1_downdate(pu, s);
    }
}

struct Filter {
    n_r: usize,
    sn2: f64,
    alpha_a: f64,
    alpha_b: f64,
    var_a: f64,
    var_b: f64,
}

impl Filter {
    fn new(model: &BpModel) -> Filter {
        Filter {
            n_r: model.fading_a.n_r,
            sn2: model.noise.sigma_n2,
            alpha_a: model.fading_a.alpha,
            alpha_b: model.fading_b.alpha,
            var_a: model.fading_a.sigma_h2,
            var_b: model.fading_b.sigma_h2,
        }
    }

    fn stationary_block(&self) -> Herm2 {
        Herm2::diag(self.var_a, self.var_b)
    }

    fn stationary_comp(&self) -> Comp {
        Comp {
            log_w: 0.0,
            mean: (0..self.n_r).map(|_| ZV).collect(),
            cov: (0..self.n_r).map(|_| self.stationary_block()).collect(),
        }
    }

    /// AR(1) prediction, identical in both time directions by stationarity.
    fn predict(&self, comps: &mut [Comp]) {
        let ia = 1.0 - self.alpha_a * self.alpha_a;
        let ib = 1.0 - self.alpha_b * self.alpha_b;
        for c in comps {
            for a in 0..self.n_r {
                c.mean[a][0] *= self.alpha_a;
                c.mean[a][1] *= self.alpha_b;
                let p = &mut c.cov[a];
                p.aa = self.alpha_a * self.alpha_a * p.aa + ia * self.var_a;
                p.bb = self.alpha_b * self.alpha_b * p.bb + ib * self.var_b;
                p.ab *= self.alpha_a * self.alpha_b;
            }
        }
    }

    /// Measurement update: expand every component over the active hypotheses,
    /// fold likelihood and prior into weights, renormalize, prune.
    /// Returns the weight-normalization error recorded for diagnostics.
    fn update(
        &self,
        comps: &mut Vec<Comp>,
        next: &mut Vec<Comp>,
        y: &[C64],
        hyps: &Hyps,
        k_max: usize,
        step: usize,
        min_eig: &mut f64,
    ) -> Result<f64> {
        next.clear();
        for c in comps.iter() {
            for h in hyps {
                let mut nc = c.clone();
                nc.log_w += h.log_p + obs_loglik(&nc.mean, &nc.cov, y, h.xa, h.xb, self.sn2);
                obs_update(&mut nc.mean, &mut nc.cov, y, h.xa, h.xb, self.sn2);
                next.push(nc);
            }
        }
        // Log-domain renormalization.
        let max = next.iter().map(|c| c.log_w).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateMessage {
                step,
                detail: format!("all {} hypothesis weights underflowed", next.len()),
            });
        }
        let sum: f64 = next.iter().map(|c| (c.log_w - max).exp()).sum();
        let lse = max + sum.ln();
        let mut check = 0.0;
        for c in next.iter_mut() {
            c.log_w -= lse;
            check += c.log_w.exp();
        }
        let mut err = (check - 1.0).abs();

        if next.len() > k_max {
            let ws: Vec<f64> = next.iter().map(|c| c.log_w).collect();
            let keep = select_top_k(&ws, k_max);
            let mut kept: Vec<Comp> = keep.iter().map(|&i| next[i].clone()).collect();
            let kmax = kept.iter().map(|c| c.log_w).fold(f64::NEG_INFINITY, f64::max);
            let ksum: f64 = kept.iter().map(|c| (c.log_w - kmax).exp()).sum();
            let klse = kmax + ksum.ln();
            let mut kcheck = 0.0;
            for c in kept.iter_mut() {
                c.log_w -= klse;
                kcheck += c.log_w.exp();
            }
            err = err.max((kcheck - 1.0).abs());
            *next = kept;
        }
        for c in next.iter() {
            for b in &c.cov {
                *min_eig = min_eig.min(b.min_eig());
            }
        }
        std::mem::swap(comps, next);
        Ok(err)
    }
}

// ---------------------------------------------------------------------------
// Posterior
// ---------------------------------------------------------------------------

/// Marginal posterior over {-1, +1, 0} at one position.
#[derive(Clone, Copy, Debug, Default)]
pub struct SymbolMarginal {
    pub p_plus: f64,
    pub p_minus: f64,
    pub p_zero: f64,
}

impl SymbolMarginal {
    /// Hard decision; active symbols break ties toward +1.
    pub fn hard(&self) -> i8 {
        if self.p_zero > self.p_plus && self.p_zero > self.p_minus {
            0
        } else if self.p_plus >= self.p_minus {
            1
        } else {
            -1
        }
    }

    /// Posterior LLR `ln P(+1)/P(-1)`, clamped.
    pub fn llr(&self) -> f64 {
        let p = self.p_plus.clamp(LLR_CLAMP_EPS, 1.0 - LLR_CLAMP_EPS);
        let m = self.p_minus.clamp(LLR_CLAMP_EPS, 1.0 - LLR_CLAMP_EPS);
        (p / m).ln()
    }
}

/// Numerical health counters accumulated over a detector run.
#[derive(Clone, Copy, Debug, Default)]
pub struct BpDiagnostics {
    /// Largest deviation of any message's weight sum from 1.
    pub max_weight_err: f64,
    /// Smallest covariance-block eigenvalue seen in any message component.
    pub min_cov_eig: f64,
}

/// Everything the detector knows after a forward/backward sweep.
#[derive(Clone, Debug)]
pub struct DetectorPosterior {
    pub marg_a: Vec<SymbolMarginal>,
    pub marg_b: Vec<SymbolMarginal>,
    /// Row-major `time x antenna` posterior channel means `(h, h')`.
    pub channel_mean: Vec<CVec2>,
    /// Row-major `time x antenna` posterior channel covariance blocks.
    pub channel_cov: Vec<Herm2>,
    pub n_r: usize,
    pub diag: BpDiagnostics,
}

impl DetectorPosterior {
    pub fn len(&self) -> usize {
        self.marg_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marg_a.is_empty()
    }

    pub fn channel_a(&self, t: usize, antenna: usize) -> C64 {
        self.channel_mean[t * self.n_r + antenna][0]
    }

    pub fn channel_b(&self, t: usize, antenna: usize) -> C64 {
        self.channel_mean[t * self.n_r + antenna][1]
    }

    pub fn hard(&self, user: User, t: usize) -> i8 {
        match user {
            User::A => self.marg_a[t].hard(),
            User::B => self.marg_b[t].hard(),
        }
    }

    pub fn marginals(&self, user: User) -> &[SymbolMarginal] {
        match user {
            User::A => &self.marg_a,
            User::B => &self.marg_b,
        }
    }
}

/// Run the full forward/backward sweep and extract per-position posteriors.
pub fn bp_detect(
    y: &ReceivedFrame,
    priors: &SymbolPrior,
    model: &BpModel,
    k_max: usize,
) -> Result<DetectorPosterior> {
    model.validate()?;
    priors.validate()?;
    if k_max == 0 {
        return Err(Error::Parameter("k_max must be >= 1".into()));
    }
    if y.is_empty() {
        return Err(Error::Shape("empty reception window".into()));
    }
    if priors.len() != y.len() {
        return Err(Error::Shape(format!(
            "priors cover {} positions, reception has {}",
            priors.len(),
            y.len()
        )));
    }
    if y.n_r() != model.fading_a.n_r {
        return Err(Error::Shape(format!(
            "reception has {} antennas, model {}",
            y.n_r(),
            model.fading_a.n_r
        )));
    }

    let t_len = y.len();
    let n_r = y.n_r();
    let filter = Filter::new(model);
    let sn2 = filter.sn2;

    let hyp_table: Vec<Hyps> =
        (0..t_len).map(|t| hyps_at(priors.user_a[t], priors.user_b[t])).collect();
    let obs: Vec<Vec<C64>> =
        (0..t_len).map(|t| (0..n_r).map(|a| y.get(t, a)).collect()).collect();

    let mut diag = BpDiagnostics { max_weight_err: 0.0, min_cov_eig: f64::INFINITY };

    // Forward sweep, storing the predicted mixture entering each step.
    let mut fwd: Vec<Vec<Comp>> = Vec::with_capacity(t_len);
    let mut cur = vec![filter.stationary_comp()];
    let mut scratch: Vec<Comp> = Vec::new();
    for t in 0..t_len {
        fwd.push(cur.clone());
        let err = filter.update(
            &mut cur,
            &mut scratch,
            &obs[t],
            &hyp_table[t],
            k_max,
            t,
            &mut diag.min_cov_eig,
        )?;
        diag.max_weight_err = diag.max_weight_err.max(err);
        filter.predict(&mut cur);
    }

    // Backward sweep on the reversed sequence (valid by reversibility).
    let mut bwd: Vec<Vec<Comp>> = vec![Vec::new(); t_len];
    cur = vec![filter.stationary_comp()];
    for t in (0..t_len).rev() {
        bwd[t] = cur.clone();
        let err = filter.update(
            &mut cur,
            &mut scratch,
            &obs[t],
            &hyp_table[t],
            k_max,
            t,
            &mut diag.min_cov_eig,
        )?;
        diag.max_weight_err = diag.max_weight_err.max(err);
        filter.predict(&mut cur);
    }

    // Per-position combination: forward x backward / stationary, then the
    // local hypothesis likelihoods.
    let stat_canon: Blocks<Canon2> =
        (0..n_r).map(|_| Canon2::from_gaussian(ZV, &filter.stationary_block())).collect();

    let mut marg_a = vec![SymbolMarginal::default(); t_len];
    let mut marg_b = vec![SymbolMarginal::default(); t_len];
    let mut channel_mean = vec![ZV; t_len * n_r];
    let mut channel_cov = vec![Herm2::ZERO; t_len * n_r];

    struct Pair {
        log_w: f64,
        mean: Blocks<CVec2>,
        cov: Blocks<Herm2>,
    }
    let mut pairs: Vec<Pair> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();

    for t in 0..t_len {
        let fcanon: Vec<Blocks<Canon2>> = fwd[t]
            .iter()
            .map(|c| (0..n_r).map(|a| Canon2::from_gaussian(c.mean[a], &c.cov[a])).collect())
            .collect();
        let bcanon: Vec<Blocks<Canon2>> = bwd[t]
            .iter()
            .map(|c| (0..n_r).map(|a| Canon2::from_gaussian(c.mean[a], &c.cov[a])).collect())
            .collect();

        pairs.clear();
        let mut pair_max = f64::NEG_INFINITY;
        for (fi, f) in fwd[t].iter().enumerate() {
            for (bi, b) in bwd[t].iter().enumerate() {
                let mut log_w = f.log_w + b.log_w;
                let mut mean: Blocks<CVec2> = SmallVec::with_capacity(n_r);
                let mut cov: Blocks<Herm2> = SmallVec::with_capacity(n_r);
                for a in 0..n_r {
                    let canon = fcanon[fi][a].add(&bcanon[bi][a]).sub(&stat_canon[a]);
                    let pc = canon.lam.inv();
                    let m = pc.mul_vec(canon.eta);
                    log_w += canon.g + 2.0 * std::f64::consts::PI.ln() - canon.lam.det().ln()
                        + cvec2_dot(canon.eta, m).re;
                    mean.push(m);
                    cov.push(pc);
                }
                pair_max = pair_max.max(log_w);
                pairs.push(Pair { log_w, mean, cov });
            }
        }
        if !pair_max.is_finite() {
            return Err(Error::DegenerateMessage {
                step: t,
                detail: "forward/backward combination has no mass".into(),
            });
        }

        let hyps = &hyp_table[t];
        scores.clear();
        scores.resize(pairs.len() * hyps.len(), f64::NEG_INFINITY);
        let mut total_max = f64::NEG_INFINITY;
        for (pi, p) in pairs.iter().enumerate() {
            if p.log_w - pair_max < PAIR_SKIP_LOG {
                continue;
            }
            for (hi, h) in hyps.iter().enumerate() {
                let s = p.log_w
                    + h.log_p
                    + obs_loglik(&p.mean, &p.cov, &obs[t], h.xa, h.xb, sn2);
                scores[pi * hyps.len() + hi] = s;
                total_max = total_max.max(s);
            }
        }
        if !total_max.is_finite() {
            return Err(Error::DegenerateMessage {
                step: t,
                detail: "posterior extraction has no mass".into(),
            });
        }
        let mut total = 0.0;
        for &s in scores.iter() {
            if s > f64::NEG_INFINITY {
                total += (s - total_max).exp();
            }
        }
        let log_z = total_max + total.ln();

        // Symbol marginals.
        let (ma, mb) = (&mut marg_a[t], &mut marg_b[t]);
        for (hi, h) in hyps.iter().enumerate() {
            let mut mass = 0.0;
            for pi in 0..pairs.len() {
                let s = scores[pi * hyps.len() + hi];
                if s > f64::NEG_INFINITY {
                    mass += (s - log_z).exp();
                }
            }
            match h.xa as i8 {
                1 => ma.p_plus += mass,
                -1 => ma.p_minus += mass,
                _ => ma.p_zero += mass,
            }
            match h.xb as i8 {
                1 => mb.p_plus += mass,
                -1 => mb.p_minus += mass,
                _ => mb.p_zero += mass,
            }
        }

        // Channel posterior by moment matching over (pair, hypothesis).
        let mean_out = &mut channel_mean[t * n_r..(t + 1) * n_r];
        let mut second: Blocks<Herm2> = (0..n_r).map(|_| Herm2::ZERO).collect();
        for (pi, p) in pairs.iter().enumerate() {
            for (hi, h) in hyps.iter().enumerate() {
                let s = scores[pi * hyps.len() + hi];
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let w = (s - log_z).exp();
                if w < 1e-16 {
                    continue;
                }
                let mut m = p.mean.clone();
                let mut c = p.cov.clone();
                obs_update(&mut m, &mut c, &obs[t], h.xa, h.xb, sn2);
                for a in 0..n_r {
                    mean_out[a][0] += w * m[a][0];
                    mean_out[a][1] += w * m[a][1];
                    let sb = &mut second[a];
                    sb.aa += w * (c[a].aa + m[a][0].norm_sqr());
                    sb.bb += w * (c[a].bb + m[a][1].norm_sqr());
                    sb.ab += w * (c[a].ab + m[a][0] * m[a][1].conj());
                }
            }
        }
        for a in 0..n_r {
            let m = mean_out[a];
            channel_cov[t * n_r + a] = Herm2 {
                aa: second[a].aa - m[0].norm_sqr(),
                bb: second[a].bb - m[1].norm_sqr(),
                ab: second[a].ab - m[0] * m[1].conj(),
            };
        }
    }

    Ok(DetectorPosterior { marg_a, marg_b, channel_mean, channel_cov, n_r, diag })
}

/// Extrinsic LLRs (posterior minus prior) for one user at the given
/// positions, under the crate-wide clamping convention.
pub fn extrinsic_llrs(
    post: &DetectorPosterior,
    priors: &SymbolPrior,
    user: User,
    positions: &[usize],
) -> Result<Vec<f64>> {
    if priors.len() != post.len() {
        return Err(Error::Shape(format!(
            "priors cover {} positions, posterior {}",
            priors.len(),
            post.len()
        )));
    }
    let pmfs = priors.user(user);
    let margs = post.marginals(user);
    positions
        .iter()
        .map(|&p| {
            if p >= post.len() {
                return Err(Error::Shape(format!("position {p} outside window")));
            }
            Ok(margs[p].llr() - pmfs[p].llr())
        })
        .collect()
}

/// Decode a frame-length header from a single-user prefix of a reception
/// using the detector itself (no interferer hypotheses).
pub fn decode_header(
    y: &ReceivedFrame,
    spec: &PacketSpec,
    preamble: &[i8],
    model: &BpModel,
    k_max: usize,
) -> Result<usize> {
    let need = spec.preamble_len + spec.header_len;
    if y.len() < need {
        return Err(Error::Shape(format!(
            "prefix of {} symbols cannot contain the {need}-symbol preamble+header",
            y.len()
        )));
    }
    let priors = build_priors(&PriorSpec {
        spec_a: spec,
        spec_b: spec,
        preamble,
        window: y.len(),
        offset: None,
        header_a: None,
        header_b: None,
        use_interferer_pilots: true,
    })?;
    let post = bp_detect(y, &priors, model, k_max)?;
    let bits: Vec<u8> = (spec.preamble_len..need)
        .map(|t| crate::framing::demap_bit(post.marg_a[t].hard()))
        .collect();
    Ok(crate::framing::decode_header_bits(&bits))
}

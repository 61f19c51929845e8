//! Reference receivers the mixture detector is benchmarked against.
//!
//! * [`conventional_receiver`]: nearest-known-symbol channel estimate,
//!   interference-unaware LLRs. What a stock single-user receiver does when
//!   a second packet lands on top of it.
//! * [`mmse_receiver`]: Wiener (linear MMSE) interpolation of the channel
//!   from the surrounding known symbols, with the interferer's average
//!   power folded into the noise floor over the detected overlap, and
//!   interference-aware LLRs.
//! * [`genie_ml_detect`] / [`genie_llrs`]: per-symbol joint maximum
//!   likelihood with the true channel coefficients of both users. Not
//!   realizable; lower-bounds what any channel estimator can reach.
//!
//! All receivers consume the same [`SymbolPrior`] layout the detector uses,
//! so known symbols (preamble, pilots, known header bits) and silence are
//! interpreted identically across the benchmark.

use crate::bp::{SymbolPmf, SymbolPrior, User};
use crate::channel::{ChannelTrace, NoiseParams, ReceivedFrame};
use crate::error::{Error, Result};
use crate::gauss::C64;
use std::ops::Range;

/// Knobs of the Wiener estimator.
#[derive(Clone, Copy, Debug)]
pub struct MmseConfig {
    /// Known symbols used per side of the estimated position (the filter
    /// spans the `2 * window` nearest known symbols).
    pub window: usize,
    /// Average interferer power assumed over the detected overlap; 0 when
    /// no second packet was detected.
    pub sigma_i2: f64,
}

impl Default for MmseConfig {
    fn default() -> Self {
        MmseConfig { window: 2, sigma_i2: 0.0 }
    }
}

impl MmseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("mmse window must be >= 1".into()));
        }
        if !self.sigma_i2.is_finite() || self.sigma_i2 < 0.0 {
            return Err(Error::Config(format!("sigma_i2 {} must be >= 0", self.sigma_i2)));
        }
        Ok(())
    }
}

/// Channel estimates and soft outputs of a pilot-based linear receiver for
/// one user.
#[derive(Clone, Debug)]
pub struct LinearReceiverOutput {
    /// Row-major `time x antenna` estimate of the user's own coefficients;
    /// zero outside the user's packet span.
    pub channel_est: Vec<C64>,
    /// `ln P(+1)/P(-1)` per position (0 outside the packet span).
    pub llrs: Vec<f64>,
    pub n_r: usize,
}

impl LinearReceiverOutput {
    pub fn hard(&self, t: usize) -> i8 {
        if self.llrs[t] >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn estimate(&self, t: usize, antenna: usize) -> C64 {
        self.channel_est[t * self.n_r + antenna]
    }
}

/// Per-user fading statistics a linear receiver assumes.
#[derive(Clone, Copy, Debug)]
pub struct LinearModel {
    pub alpha: f64,
    pub sigma_h2: f64,
    pub sigma_n2: f64,
}

impl LinearModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma_h2 > 0.0) || !self.sigma_h2.is_finite() {
            return Err(Error::Parameter(format!("sigma_h2 {} must be > 0", self.sigma_h2)));
        }
        if !(self.sigma_n2 > 0.0) || !self.sigma_n2.is_finite() {
            return Err(Error::Parameter(format!(
                "sigma_n2 {} must be > 0 for a linear receiver",
                self.sigma_n2
            )));
        }
        Ok(())
    }
}

/// Positions with a `Known` prior, with the known symbol.
fn known_positions(pmfs: &[SymbolPmf]) -> Vec<(usize, f64)> {
    pmfs.iter()
        .enumerate()
        .filter_map(|(t, p)| match *p {
            SymbolPmf::Known(s) => Some((t, s as f64)),
            _ => None,
        })
        .collect()
}

fn effective_noise(t: usize, interference: &Range<usize>, model: &LinearModel, sigma_i2: f64) -> f64 {
    model.sigma_n2 + if interference.contains(&t) { sigma_i2 } else { 0.0 }
}

/// Solve `A x = b` for a symmetric positive-definite `A` (row-major) by
/// Cholesky. Sizes here are tiny (the Wiener window), so no pivoting.
fn spd_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    // In-place lower Cholesky.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Parameter(format!(
                "wiener normal equations are not positive definite (pivot {d})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    // Forward then backward substitution.
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Ok(())
}

/// The `2 * window` known positions nearest to `t` (ties toward the earlier
/// position), as indices into `known`, in ascending order.
fn nearest_known(known: &[(usize, f64)], t: usize, window: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..known.len()).collect();
    idx.sort_by_key(|&i| {
        let p = known[i].0;
        (p.abs_diff(t), p)
    });
    idx.truncate(2 * window);
    idx.sort_unstable();
    idx
}

fn packet_span(pmfs: &[SymbolPmf]) -> Range<usize> {
    let first = pmfs.iter().position(|p| !matches!(p, SymbolPmf::Silent));
    match first {
        Some(f) => {
            let last = pmfs.iter().rposition(|p| !matches!(p, SymbolPmf::Silent)).unwrap();
            f..last + 1
        }
        None => 0..0,
    }
}

fn check_reception(y: &ReceivedFrame, priors: &SymbolPrior) -> Result<()> {
    priors.validate()?;
    if y.len() != priors.len() {
        return Err(Error::Shape(format!(
            "priors cover {} positions, reception has {}",
            priors.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Wiener-interpolated channel estimate and interference-aware LLRs.
///
/// At each position inside the user's packet span, the estimator solves the
/// normal equations over the `2 * window` nearest known symbols with
/// autocovariance `sigma_h2 * alpha^|k|` and per-position effective noise
/// `sigma_n2 + sigma_i2 * [inside detected overlap]`; the same weights apply
/// to every antenna. LLRs assume the residual interference is Gaussian.
pub fn mmse_receiver(
    y: &ReceivedFrame,
    priors: &SymbolPrior,
    user: User,
    model: &LinearModel,
    interference: Range<usize>,
    cfg: &MmseConfig,
) -> Result<LinearReceiverOutput> {
    model.validate()?;
    cfg.validate()?;
    check_reception(y, priors)?;
    let pmfs = priors.user(user);
    let known = known_positions(pmfs);
    if known.is_empty() {
        return Err(Error::Config(
            "mmse receiver needs at least one known symbol in the window".into(),
        ));
    }
    let span = packet_span(pmfs);
    let n_r = y.n_r();
    let t_len = y.len();
    let mut channel_est = vec![C64::new(0.0, 0.0); t_len * n_r];
    let mut llrs = vec![0.0; t_len];

    let taps = (2 * cfg.window).min(known.len());
    let mut a = vec![0.0; taps * taps];
    let mut w = vec![0.0; taps];
    for t in span.clone() {
        let sel = nearest_known(&known, t, cfg.window);
        let n = sel.len();
        // Normal equations: (R + D) w = r with R the fading autocovariance
        // at the known positions and D the per-position effective noise.
        for (i, &ki) in sel.iter().enumerate() {
            let (pi, _) = known[ki];
            for (j, &kj) in sel.iter().enumerate() {
                let (pj, _) = known[kj];
                a[i * n + j] = model.sigma_h2 * model.alpha.powi(pi.abs_diff(pj) as i32);
            }
            a[i * n + i] += effective_noise(pi, &interference, model, cfg.sigma_i2);
            w[i] = model.sigma_h2 * model.alpha.powi(pi.abs_diff(t) as i32);
        }
        spd_solve(&mut a[..n * n], &mut w[..n], n)?;
        for ant in 0..n_r {
            let mut est = C64::new(0.0, 0.0);
            for (i, &ki) in sel.iter().enumerate() {
                let (p, x) = known[ki];
                // BPSK: multiplying by the known +/-1 symbol re-centers the
                // observation on the channel coefficient.
                est += w[i] * (y.get(p, ant) * x);
            }
            channel_est[t * n_r + ant] = est;
        }
        let s_eff = effective_noise(t, &interference, model, cfg.sigma_i2);
        let mut num = 0.0;
        for ant in 0..n_r {
            num += (channel_est[t * n_r + ant].conj() * y.get(t, ant)).re;
        }
        llrs[t] = 4.0 * num / s_eff;
    }
    Ok(LinearReceiverOutput { channel_est, llrs, n_r })
}

/// Nearest-known-symbol channel estimate and interference-unaware LLRs.
///
/// The estimate at a position is the re-centered observation at the single
/// nearest known symbol (ties toward the earlier one), held constant until
/// the next known symbol; LLRs assume noise only.
pub fn conventional_receiver(
    y: &ReceivedFrame,
    priors: &SymbolPrior,
    user: User,
    model: &LinearModel,
) -> Result<LinearReceiverOutput> {
    model.validate()?;
    check_reception(y, priors)?;
    let pmfs = priors.user(user);
    let known = known_positions(pmfs);
    if known.is_empty() {
        return Err(Error::Config(
            "conventional receiver needs at least one known symbol in the window".into(),
        ));
    }
    let span = packet_span(pmfs);
    let n_r = y.n_r();
    let t_len = y.len();
    let mut channel_est = vec![C64::new(0.0, 0.0); t_len * n_r];
    let mut llrs = vec![0.0; t_len];
    for t in span.clone() {
        let (p, x) = *known
            .iter()
            .min_by_key(|(p, _)| (p.abs_diff(t), *p))
            .expect("known is nonempty");
        let mut num = 0.0;
        for ant in 0..n_r {
            let est = y.get(p, ant) * x;
            channel_est[t * n_r + ant] = est;
            num += (est.conj() * y.get(t, ant)).re;
        }
        llrs[t] = 4.0 * num / model.sigma_n2;
    }
    Ok(LinearReceiverOutput { channel_est, llrs, n_r })
}

/// Joint hard decisions of the genie-aided maximum-likelihood detector.
#[derive(Clone, Debug)]
pub struct GenieMlOutput {
    pub hard_a: Vec<i8>,
    pub hard_b: Vec<i8>,
}

fn support(pmf: SymbolPmf) -> &'static [f64] {
    match pmf {
        SymbolPmf::Silent => &[0.0],
        SymbolPmf::Known(1) => &[1.0],
        SymbolPmf::Known(_) => &[-1.0],
        SymbolPmf::Soft { .. } => &[1.0, -1.0],
    }
}

fn check_genie(
    y: &ReceivedFrame,
    h_a: &ChannelTrace,
    h_b: &ChannelTrace,
    priors: &SymbolPrior,
) -> Result<()> {
    check_reception(y, priors)?;
    if h_a.len() < y.len() || h_b.len() < y.len() {
        return Err(Error::Shape(format!(
            "traces of length {}/{} do not cover the {}-symbol reception",
            h_a.len(),
            h_b.len(),
            y.len()
        )));
    }
    if h_a.n_r() != y.n_r() || h_b.n_r() != y.n_r() {
        return Err(Error::Shape("trace antenna counts do not match the reception".into()));
    }
    Ok(())
}

/// Per-symbol joint maximum likelihood with the true channels: at each
/// position the symbol pair minimizing the residual energy over the prior
/// supports wins. Ties prefer `x = +1`, then `x' = +1` (the support order).
pub fn genie_ml_detect(
    y: &ReceivedFrame,
    h_a: &ChannelTrace,
    h_b: &ChannelTrace,
    priors: &SymbolPrior,
) -> Result<GenieMlOutput> {
    check_genie(y, h_a, h_b, priors)?;
    let n_r = y.n_r();
    let t_len = y.len();
    let mut hard_a = vec![0i8; t_len];
    let mut hard_b = vec![0i8; t_len];
    for t in 0..t_len {
        let mut best = f64::INFINITY;
        for &xa in support(priors.user_a[t]) {
            for &xb in support(priors.user_b[t]) {
                let mut cost = 0.0;
                for ant in 0..n_r {
                    cost +=
                        (y.get(t, ant) - xa * h_a.get(t, ant) - xb * h_b.get(t, ant)).norm_sqr();
                }
                if cost < best {
                    best = cost;
                    hard_a[t] = xa as i8;
                    hard_b[t] = xb as i8;
                }
            }
        }
    }
    Ok(GenieMlOutput { hard_a, hard_b })
}

/// Genie soft outputs for one user: the other user is marginalized over its
/// prior with the true channel coefficients of both.
pub fn genie_llrs(
    y: &ReceivedFrame,
    h_a: &ChannelTrace,
    h_b: &ChannelTrace,
    priors: &SymbolPrior,
    user: User,
    noise: &NoiseParams,
) -> Result<Vec<f64>> {
    check_genie(y, h_a, h_b, priors)?;
    noise.validate()?;
    if !(noise.sigma_n2 > 0.0) {
        return Err(Error::Parameter("genie LLRs require sigma_n2 > 0".into()));
    }
    let n_r = y.n_r();
    let t_len = y.len();
    let mut out = vec![0.0; t_len];
    for t in 0..t_len {
        let (own_pmf, other_pmf, own_tr, other_tr) = match user {
            User::A => (priors.user_a[t], priors.user_b[t], h_a, h_b),
            User::B => (priors.user_b[t], priors.user_a[t], h_b, h_a),
        };
        if !matches!(own_pmf, SymbolPmf::Soft { .. } | SymbolPmf::Known(_)) {
            continue;
        }
        let other_weight = |x: f64| -> f64 {
            match other_pmf {
                SymbolPmf::Silent => 0.0,
                SymbolPmf::Known(_) => 0.0,
                SymbolPmf::Soft { p_plus } => {
                    let p = p_plus.clamp(crate::bp::LLR_CLAMP_EPS, 1.0 - crate::bp::LLR_CLAMP_EPS);
                    if x > 0.0 {
                        p.ln()
                    } else {
                        (1.0 - p).ln()
                    }
                }
            }
        };
        let branch = |own: f64| -> f64 {
            let mut terms: Vec<f64> = Vec::with_capacity(2);
            for &xo in support(other_pmf) {
                let mut cost = 0.0;
                for ant in 0..n_r {
                    cost += (y.get(t, ant)
                        - own * own_tr.get(t, ant)
                        - xo * other_tr.get(t, ant))
                    .norm_sqr();
                }
                terms.push(other_weight(xo) - cost / noise.sigma_n2);
            }
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        };
        out[t] = branch(1.0) - branch(-1.0);
    }
    Ok(out)
}

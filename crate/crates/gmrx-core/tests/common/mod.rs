//! Shared test utilities: a brute-force exact-inference oracle for the
//! two-packet collision model and a random instance sampler.
//!
//! The oracle enumerates every joint symbol assignment allowed by the
//! priors. Conditioned on an assignment the reception is zero-mean complex
//! Gaussian with a real covariance assembled from the AR(1) autocovariances,
//! so each assignment's evidence and channel posterior follow from one real
//! Cholesky factorization. Cost is exponential in the window length; keep
//! windows at 8 symbols or fewer.

#![allow(dead_code)]

use gmrx_core::bp::{BpModel, SymbolPmf, SymbolPrior};
use gmrx_core::channel::{gen_fading, FadingParams, NoiseParams, ReceivedFrame};
use gmrx_core::gauss::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct OraclePosterior {
    /// Per time `[P(+1), P(-1), P(0)]` for the desired user.
    pub marg_a: Vec<[f64; 3]>,
    pub marg_b: Vec<[f64; 3]>,
    /// Posterior channel means (single antenna).
    pub mean_a: Vec<C64>,
    pub mean_b: Vec<C64>,
}

pub fn symbol_index(s: i8) -> usize {
    match s {
        1 => 0,
        -1 => 1,
        _ => 2,
    }
}

fn support(pmf: &SymbolPmf) -> Vec<(i8, f64)> {
    match *pmf {
        SymbolPmf::Known(s) => vec![(s, 0.0)],
        SymbolPmf::Silent => vec![(0, 0.0)],
        SymbolPmf::Soft { p_plus } => vec![(1, p_plus.ln()), (-1, (1.0 - p_plus).ln())],
    }
}

/// In-place lower Cholesky of a real SPD matrix stored row-major.
fn cholesky(a: &mut [f64], t: usize) -> f64 {
    let mut ln_det = 0.0;
    for i in 0..t {
        for j in 0..=i {
            let mut s = a[i * t + j];
            for k in 0..j {
                s -= a[i * t + k] * a[j * t + k];
            }
            if i == j {
                assert!(s > 0.0, "covariance lost positive definiteness");
                let l = s.sqrt();
                a[i * t + i] = l;
                ln_det += 2.0 * l.ln();
            } else {
                a[i * t + j] = s / a[j * t + j];
            }
        }
    }
    ln_det
}

/// Solve `L L^T u = y` with the Cholesky factor in `a`'s lower triangle.
fn solve(a: &[f64], t: usize, y: &[C64]) -> Vec<C64> {
    let mut u = y.to_vec();
    for i in 0..t {
        for k in 0..i {
            let s = u[k];
            u[i] -= s * a[i * t + k];
        }
        u[i] /= a[i * t + i];
    }
    for i in (0..t).rev() {
        for k in (i + 1)..t {
            let s = u[k];
            u[i] -= s * a[k * t + i];
        }
        u[i] /= a[i * t + i];
    }
    u
}

/// Exact posteriors by enumeration over all admissible symbol assignments.
pub fn enumerate_posterior(
    y: &ReceivedFrame,
    priors: &SymbolPrior,
    model: &BpModel,
) -> OraclePosterior {
    assert_eq!(y.n_r(), 1, "oracle covers the single-antenna model");
    let t_len = y.len();
    assert_eq!(priors.len(), t_len);
    let opts: Vec<Vec<(i8, i8, f64)>> = (0..t_len)
        .map(|t| {
            let mut v = Vec::new();
            for &(a, lpa) in &support(&priors.user_a[t]) {
                for &(b, lpb) in &support(&priors.user_b[t]) {
                    v.push((a, b, lpa + lpb));
                }
            }
            v
        })
        .collect();
    let total: u64 = opts.iter().map(|o| o.len() as u64).product();
    assert!(total <= 1 << 21, "enumeration blowup: {total} assignments");

    let ka = autocov(model.fading_a.alpha, model.fading_a.sigma_h2, t_len);
    let kb = autocov(model.fading_b.alpha, model.fading_b.sigma_h2, t_len);
    let yv: Vec<C64> = (0..t_len).map(|t| y.get(t, 0)).collect();

    // Streaming logsumexp: accumulators hold mass relative to `log_max`.
    let mut log_max = f64::NEG_INFINITY;
    let mut mass = 0.0;
    let mut marg_a = vec![[0.0f64; 3]; t_len];
    let mut marg_b = vec![[0.0f64; 3]; t_len];
    let mut mean_a = vec![C64::new(0.0, 0.0); t_len];
    let mut mean_b = vec![C64::new(0.0, 0.0); t_len];

    let mut idx = vec![0usize; t_len];
    let mut sigma = vec![0.0f64; t_len * t_len];
    loop {
        let assign: Vec<(i8, i8)> =
            (0..t_len).map(|t| (opts[t][idx[t]].0, opts[t][idx[t]].1)).collect();
        let log_prior: f64 = (0..t_len).map(|t| opts[t][idx[t]].2).sum();

        for i in 0..t_len {
            let (ai, bi) = assign[i];
            for j in 0..=i {
                let (aj, bj) = assign[j];
                let mut v = f64::from(ai * aj) * ka[i * t_len + j]
                    + f64::from(bi * bj) * kb[i * t_len + j];
                if i == j {
                    v += model.noise.sigma_n2;
                }
                sigma[i * t_len + j] = v;
            }
        }
        let ln_det = cholesky(&mut sigma, t_len);
        let u = solve(&sigma, t_len, &yv);
        let quad: f64 = yv.iter().zip(&u).map(|(y, u)| (y.conj() * u).re).sum();
        let logw =
            log_prior - t_len as f64 * std::f64::consts::PI.ln() - ln_det - quad;

        if logw > log_max {
            let scale = if log_max.is_finite() { (log_max - logw).exp() } else { 0.0 };
            mass *= scale;
            for t in 0..t_len {
                for k in 0..3 {
                    marg_a[t][k] *= scale;
                    marg_b[t][k] *= scale;
                }
                mean_a[t] *= scale;
                mean_b[t] *= scale;
            }
            log_max = logw;
        }
        let w = (logw - log_max).exp();
        mass += w;
        for t in 0..t_len {
            let (a, b) = assign[t];
            marg_a[t][symbol_index(a)] += w;
            marg_b[t][symbol_index(b)] += w;
            // E[h_t | y, assignment] = K diag(x) inv(Sigma) y.
            let mut ea = C64::new(0.0, 0.0);
            let mut eb = C64::new(0.0, 0.0);
            for j in 0..t_len {
                let (aj, bj) = assign[j];
                ea += u[j] * (f64::from(aj) * ka[t * t_len + j]);
                eb += u[j] * (f64::from(bj) * kb[t * t_len + j]);
            }
            mean_a[t] += ea * w;
            mean_b[t] += eb * w;
        }

        // Odometer over the per-position joint supports.
        let mut pos = 0;
        loop {
            if pos == t_len {
                let norm = |m: &mut Vec<[f64; 3]>, e: &mut Vec<C64>| {
                    for t in 0..t_len {
                        for k in 0..3 {
                            m[t][k] /= mass;
                        }
                        e[t] /= mass;
                    }
                };
                norm(&mut marg_a, &mut mean_a);
                norm(&mut marg_b, &mut mean_b);
                return OraclePosterior { marg_a, marg_b, mean_a, mean_b };
            }
            idx[pos] += 1;
            if idx[pos] < opts[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn autocov(alpha: f64, sigma2: f64, t: usize) -> Vec<f64> {
    let mut k = vec![0.0; t * t];
    for i in 0..t {
        for j in 0..t {
            k[i * t + j] = sigma2 * alpha.powi((i as i32 - j as i32).abs());
        }
    }
    k
}

pub struct OracleInstance {
    pub y: ReceivedFrame,
    pub priors: SymbolPrior,
    pub model: BpModel,
}

/// A random small collision with mixed prior kinds (soft, known, silent)
/// and independently drawn channel statistics.
pub fn random_instance(seed: u64) -> OracleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = rng.gen_range(4..=8usize);
    let fading_a = FadingParams {
        alpha: rng.gen_range(0.85..0.999),
        sigma_h2: rng.gen_range(0.4..2.0),
        n_r: 1,
    };
    let fading_b = FadingParams {
        alpha: rng.gen_range(0.85..0.999),
        sigma_h2: rng.gen_range(0.2..2.0),
        n_r: 1,
    };
    let sigma_n2: f64 = rng.gen_range(0.02..0.4);

    let draw_pmf = |rng: &mut ChaCha8Rng| -> SymbolPmf {
        let roll: f64 = rng.gen();
        if roll < 0.6 {
            SymbolPmf::Soft { p_plus: rng.gen_range(0.1..0.9) }
        } else if roll < 0.85 {
            SymbolPmf::Known(if rng.gen::<bool>() { 1 } else { -1 })
        } else {
            SymbolPmf::Silent
        }
    };
    let user_a: Vec<SymbolPmf> = (0..t_len).map(|_| draw_pmf(&mut rng)).collect();
    let user_b: Vec<SymbolPmf> = (0..t_len).map(|_| draw_pmf(&mut rng)).collect();
    let draw_symbol = |pmf: &SymbolPmf, rng: &mut ChaCha8Rng| -> i8 {
        match *pmf {
            SymbolPmf::Known(s) => s,
            SymbolPmf::Silent => 0,
            SymbolPmf::Soft { p_plus } => {
                if rng.gen::<f64>() < p_plus {
                    1
                } else {
                    -1
                }
            }
        }
    };
    let xa: Vec<i8> = user_a.iter().map(|p| draw_symbol(p, &mut rng)).collect();
    let xb: Vec<i8> = user_b.iter().map(|p| draw_symbol(p, &mut rng)).collect();

    let h_a = gen_fading(&fading_a, t_len, &mut rng).unwrap();
    let h_b = gen_fading(&fading_b, t_len, &mut rng).unwrap();
    let scale = (sigma_n2 / 2.0).sqrt();
    let samples: Vec<C64> = (0..t_len)
        .map(|t| {
            let n = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * scale;
            h_a.get(t, 0) * f64::from(xa[t]) + h_b.get(t, 0) * f64::from(xb[t]) + n
        })
        .collect();

    OracleInstance {
        y: ReceivedFrame::from_samples(samples, 1).unwrap(),
        priors: SymbolPrior { user_a, user_b },
        model: BpModel { fading_a, fading_b, noise: NoiseParams { sigma_n2 } },
    }
}

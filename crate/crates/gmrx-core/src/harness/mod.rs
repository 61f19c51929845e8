//! Monte Carlo experiment harness.
//!
//! Every scenario runs paired trials: all receivers of a grid point see the
//! same payloads, fading realizations, noise, and packet offset, drawn from
//! per-purpose RNG streams keyed by `(master seed, trial, stream)`. Trials
//! therefore parallelize without changing results: the trial index alone
//! fixes the randomness, and aggregation folds in index order regardless of
//! the thread count.
//!
//! Grid points report aggregated [`Row`]s. Rate metrics carry Wilson 95%
//! intervals; a point keeps doubling its trial budget until every observed
//! metric's half-width drops below 20% of its estimate or the configured
//! trial cap is hit.

pub mod config;
pub mod report;

pub use config::{ExperimentConfig, HeaderMode, OffsetMode, Scenario};

use crate::baselines::{
    conventional_receiver, genie_llrs, genie_ml_detect, mmse_receiver, LinearModel, MmseConfig,
};
use crate::bp::{bp_detect, build_priors, decode_header, BpModel, PriorSpec, SymbolPrior, User};
use crate::channel::{
    compose_received, gen_fading, ChannelTrace, FadingParams, NoiseParams, ReceivedFrame,
};
use crate::detect::{cross_correlate, detect_second_start};
use crate::error::{Error, Result};
use crate::framing::{
    build_frame, encode_header_bits, gen_preamble, make_collision, CollisionScene, PacketSpec,
};
use crate::ldpc::{build_code, LdpcCode, Schedule};
use crate::seeds::{trial_rng, Stream};
use rand::Rng;
use rayon::prelude::*;

/// One aggregated measurement of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub receiver: String,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub metric: String,
    pub value: f64,
    /// Samples the metric averages over (symbols, positions, or trials).
    pub count: u64,
    pub trials: u64,
    pub seed: u64,
}

/// 95% two-sided normal quantile.
const Z95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial rate.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let hw = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - hw).max(0.0), (center + hw).min(1.0))
}

/// Interferer-inclusive SINR in dB for a grid point.
pub fn sinr_db(snr_db: f64, power_ratio_db: f64) -> f64 {
    -10.0 * (10f64.powf(power_ratio_db / 10.0) + 10f64.powf(-snr_db / 10.0)).log10()
}

/// A grid point of the sweep.
#[derive(Clone, Copy, Debug)]
pub struct GridPoint {
    pub snr_db: f64,
    pub power_ratio_db: f64,
}

/// Per-trial numerators and denominators of one (receiver, metric) series.
#[derive(Clone, Debug)]
pub struct Series {
    pub receiver: String,
    pub metric: String,
    pub num: Vec<f64>,
    pub den: Vec<u64>,
}

impl Series {
    pub fn total_num(&self) -> f64 {
        self.num.iter().sum()
    }

    pub fn total_den(&self) -> u64 {
        self.den.iter().sum()
    }

    pub fn value(&self) -> f64 {
        let d = self.total_den();
        if d == 0 {
            0.0
        } else {
            self.total_num() / d as f64
        }
    }
}

/// All series of one grid point, receivers in layout order.
#[derive(Clone, Debug)]
pub struct PointBatch {
    pub series: Vec<Series>,
}

impl PointBatch {
    fn merge(&mut self, other: PointBatch) {
        assert_eq!(self.series.len(), other.series.len());
        for (s, o) in self.series.iter_mut().zip(other.series) {
            s.num.extend(o.num);
            s.den.extend(o.den);
        }
    }

    pub fn trials(&self) -> u64 {
        self.series.first().map_or(0, |s| s.num.len() as u64)
    }

    pub fn get(&self, receiver: &str, metric: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.receiver == receiver && s.metric == metric)
    }
}

/// Whether a metric is a binomial rate (Wilson intervals apply).
fn is_rate_metric(metric: &str) -> bool {
    metric != "mse"
}

/// (receiver, metric) layout of a scenario's series, in emission order.
fn series_layout(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let metrics: Vec<&str> = match cfg.experiment.scenario {
        Scenario::Uncoded | Scenario::Threshold => vec!["ber"],
        Scenario::Mse => vec!["mse"],
        Scenario::DetectProb => vec!["detect_prob", "fault_prob"],
        Scenario::Coded => vec!["ber", "ber_a", "ber_b", "bler", "bler_a", "bler_b"],
    };
    let mut out = Vec::new();
    for r in cfg.active_receivers() {
        for m in &metrics {
            out.push((r.clone(), m.to_string()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Shared trial construction
// ---------------------------------------------------------------------------

struct SceneTrial {
    scene: CollisionScene,
    h_a: ChannelTrace,
    h_b: ChannelTrace,
    y_full: ReceivedFrame,
    sigma_n2: f64,
    sigma_b2: f64,
}

fn payload_bits(rng: &mut impl Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.gen_range(0..2u8)).collect()
}

fn make_trial(
    cfg: &ExperimentConfig,
    spec: &PacketSpec,
    point: GridPoint,
    trial: u64,
    bits_a: Vec<u8>,
    bits_b: Vec<u8>,
) -> Result<SceneTrial> {
    let seed = cfg.experiment.seed;
    let sigma_h2 = cfg.channel.sigma_h2;
    let sigma_n2 = sigma_h2 * 10f64.powf(-point.snr_db / 10.0);
    let sigma_b2 = sigma_h2 * 10f64.powf(point.power_ratio_db / 10.0);
    let frame_a = build_frame(spec, &bits_a, cfg.frame.preamble_seed)?;
    let frame_b = build_frame(spec, &bits_b, cfg.frame.preamble_seed)?;
    let la = frame_a.len();
    let offset = trial_rng(seed, trial, Stream::Offset).gen_range(1..la);
    let mut scene = make_collision(frame_a, frame_b, offset)?;
    scene.power_ratio_db = point.power_ratio_db;
    let window = scene.window_len();
    let fading_a = FadingParams { alpha: cfg.channel.alpha, sigma_h2, n_r: cfg.channel.n_r };
    let fading_b = FadingParams { sigma_h2: sigma_b2, ..fading_a };
    let h_a = gen_fading(&fading_a, window, &mut trial_rng(seed, trial, Stream::FadingA))?;
    let h_b = gen_fading(&fading_b, window, &mut trial_rng(seed, trial, Stream::FadingB))?;
    let y_full = compose_received(
        &scene,
        &h_a,
        &h_b,
        &NoiseParams { sigma_n2 },
        &mut trial_rng(seed, trial, Stream::Noise),
    )?;
    Ok(SceneTrial { scene, h_a, h_b, y_full, sigma_n2, sigma_b2 })
}

fn bp_model(cfg: &ExperimentConfig, st: &SceneTrial) -> BpModel {
    BpModel {
        fading_a: FadingParams {
            alpha: cfg.channel.alpha,
            sigma_h2: cfg.channel.sigma_h2,
            n_r: cfg.channel.n_r,
        },
        fading_b: FadingParams {
            alpha: cfg.channel.alpha,
            sigma_h2: st.sigma_b2,
            n_r: cfg.channel.n_r,
        },
        noise: NoiseParams { sigma_n2: st.sigma_n2 },
    }
}

fn linear_model(cfg: &ExperimentConfig, st: &SceneTrial, user: User) -> LinearModel {
    LinearModel {
        alpha: cfg.channel.alpha,
        sigma_h2: match user {
            User::A => cfg.channel.sigma_h2,
            User::B => st.sigma_b2,
        },
        sigma_n2: st.sigma_n2,
    }
}

/// The offset the receivers get to work with.
fn receiver_offset(
    cfg: &ExperimentConfig,
    st: &SceneTrial,
    y: &ReceivedFrame,
    preamble: &[i8],
) -> Result<Option<usize>> {
    match cfg.detector.offset_mode {
        OffsetMode::Genie => Ok(Some(st.scene.offset)),
        OffsetMode::Detected => {
            let profile = cross_correlate(y, preamble)?;
            detect_second_start(&profile, cfg.detector.tau)
        }
    }
}

/// Header bits the receivers get to work with (user A).
fn receiver_header_a(
    cfg: &ExperimentConfig,
    st: &SceneTrial,
    y: &ReceivedFrame,
    spec: &PacketSpec,
    preamble: &[i8],
    offset: Option<usize>,
    model: &BpModel,
) -> Result<Vec<u8>> {
    let la = st.scene.frame_a.len();
    match cfg.detector.header_mode {
        HeaderMode::Genie => Ok(encode_header_bits(la, spec.header_len)),
        HeaderMode::Decoded => {
            let need = spec.preamble_len + spec.header_len;
            let prefix = offset.unwrap_or(y.len()).max(need).min(y.len());
            let dec = decode_header(
                &y.truncated(prefix),
                spec,
                preamble,
                model,
                cfg.detector.k_max,
            )?;
            Ok(encode_header_bits(dec, spec.header_len))
        }
    }
}

/// Priors shared by the detector and the pilot-based receivers. The
/// interferer's frame length is observable from the reception duration, so
/// its header symbols are always known once the offset is.
fn trial_priors(
    cfg: &ExperimentConfig,
    st: &SceneTrial,
    spec: &PacketSpec,
    preamble: &[i8],
    window: usize,
    offset: Option<usize>,
    header_a: &[u8],
) -> Result<SymbolPrior> {
    let header_b = encode_header_bits(st.scene.frame_b.len(), spec.header_len);
    build_priors(&PriorSpec {
        spec_a: spec,
        spec_b: spec,
        preamble,
        window,
        offset,
        header_a: Some(header_a),
        header_b: offset.map(|_| header_b.as_slice()),
        use_interferer_pilots: cfg.detector.use_interferer_pilots,
    })
}

// ---------------------------------------------------------------------------
// Scenario trial bodies
// ---------------------------------------------------------------------------

/// Uncoded and MSE trials share the whole reception pipeline and differ only
/// in what they score.
fn uncoded_like_trial(
    cfg: &ExperimentConfig,
    spec: &PacketSpec,
    preamble: &[i8],
    point: GridPoint,
    trial: u64,
    score_mse: bool,
) -> Result<Vec<(f64, u64)>> {
    let seed = cfg.experiment.seed;
    let bits_a = payload_bits(&mut trial_rng(seed, trial, Stream::DataA), spec.payload_len);
    let bits_b = payload_bits(&mut trial_rng(seed, trial, Stream::DataB), spec.payload_len);
    let st = make_trial(cfg, spec, point, trial, bits_a, bits_b)?;
    let la = st.scene.frame_a.len();
    let y = st.y_full.truncated(la);
    let model = bp_model(cfg, &st);
    let offset = receiver_offset(cfg, &st, &y, preamble)?;
    let header_a = receiver_header_a(cfg, &st, &y, spec, preamble, offset, &model)?;
    let priors = trial_priors(cfg, &st, spec, preamble, la, offset, &header_a)?;
    let span = match offset {
        Some(d) if d < la => d..la,
        _ => 0..0,
    };
    let sigma_i2 = if span.is_empty() { 0.0 } else { st.sigma_b2 };

    // Scoring is against the truth regardless of what was detected.
    let overlap = st.scene.offset..la;
    let n_r = cfg.channel.n_r;
    let mut out = Vec::new();
    for receiver in cfg.active_receivers() {
        if score_mse {
            let est: Vec<crate::gauss::C64> = match receiver.as_str() {
                "bp" => {
                    let post = bp_detect(&y, &priors, &model, cfg.detector.k_max)?;
                    (0..la * n_r).map(|i| post.channel_mean[i][0]).collect()
                }
                "mmse" => {
                    let o = mmse_receiver(
                        &y,
                        &priors,
                        User::A,
                        &linear_model(cfg, &st, User::A),
                        span.clone(),
                        &MmseConfig { window: cfg.mmse.window, sigma_i2 },
                    )?;
                    o.channel_est
                }
                "conventional" => {
                    conventional_receiver(&y, &priors, User::A, &linear_model(cfg, &st, User::A))?
                        .channel_est
                }
                other => return Err(Error::Config(format!("receiver {other} cannot be scored for mse"))),
            };
            let mut sse = 0.0;
            for t in overlap.clone() {
                for ant in 0..n_r {
                    sse += (est[t * n_r + ant] - st.h_a.get(t, ant)).norm_sqr();
                }
            }
            let positions = (overlap.len() * n_r) as u64;
            out.push((sse / cfg.channel.sigma_h2, positions));
        } else {
            let positions: Vec<usize> = st
                .scene
                .frame_a
                .data_positions()
                .into_iter()
                .filter(|&p| overlap.contains(&p))
                .collect();
            let errors: u64 = match receiver.as_str() {
                "bp" => {
                    let post = bp_detect(&y, &priors, &model, cfg.detector.k_max)?;
                    positions
                        .iter()
                        .filter(|&&p| post.hard(User::A, p) != st.scene.symbol_a(p))
                        .count() as u64
                }
                "mmse" => {
                    let o = mmse_receiver(
                        &y,
                        &priors,
                        User::A,
                        &linear_model(cfg, &st, User::A),
                        span.clone(),
                        &MmseConfig { window: cfg.mmse.window, sigma_i2 },
                    )?;
                    positions.iter().filter(|&&p| o.hard(p) != st.scene.symbol_a(p)).count() as u64
                }
                "conventional" => {
                    let o = conventional_receiver(
                        &y,
                        &priors,
                        User::A,
                        &linear_model(cfg, &st, User::A),
                    )?;
                    positions.iter().filter(|&&p| o.hard(p) != st.scene.symbol_a(p)).count() as u64
                }
                "genie" => {
                    let o = genie_ml_detect(&y, &st.h_a, &st.h_b, &priors)?;
                    positions
                        .iter()
                        .filter(|&&p| o.hard_a[p] != st.scene.symbol_a(p))
                        .count() as u64
                }
                other => return Err(Error::Config(format!("unknown receiver {other}"))),
            };
            out.push((errors as f64, positions.len() as u64));
        }
    }
    Ok(out)
}

fn detect_trial(
    cfg: &ExperimentConfig,
    spec: &PacketSpec,
    preamble: &[i8],
    point: GridPoint,
    trial: u64,
) -> Result<Vec<(f64, u64)>> {
    let seed = cfg.experiment.seed;
    let bits_a = payload_bits(&mut trial_rng(seed, trial, Stream::DataA), spec.payload_len);
    let bits_b = payload_bits(&mut trial_rng(seed, trial, Stream::DataB), spec.payload_len);
    let st = make_trial(cfg, spec, point, trial, bits_a, bits_b)?;
    let y = st.y_full.truncated(st.scene.frame_a.len());
    let profile = cross_correlate(&y, preamble)?;
    let got = detect_second_start(&profile, cfg.detector.tau)?;
    let hit = got == Some(st.scene.offset);
    Ok(vec![(f64::from(hit), 1), (f64::from(!hit), 1)])
}

fn coded_trial(
    cfg: &ExperimentConfig,
    spec: &PacketSpec,
    preamble: &[i8],
    code: &LdpcCode,
    point: GridPoint,
    trial: u64,
) -> Result<Vec<(f64, u64)>> {
    let seed = cfg.experiment.seed;
    let k = code.message_len();
    let msg_a = payload_bits(&mut trial_rng(seed, trial, Stream::DataA), k);
    let msg_b = payload_bits(&mut trial_rng(seed, trial, Stream::DataB), k);
    let cw_a = code.encode(&msg_a)?;
    let cw_b = code.encode(&msg_b)?;
    let st = make_trial(cfg, spec, point, trial, cw_a, cw_b)?;
    let y = &st.y_full;
    let window = y.len();
    let model = bp_model(cfg, &st);
    let offset = receiver_offset(cfg, &st, y, preamble)?;
    let header_a = receiver_header_a(cfg, &st, y, spec, preamble, offset, &model)?;
    let priors = trial_priors(cfg, &st, spec, preamble, window, offset, &header_a)?;
    let positions_a = st.scene.frame_a.data_positions();
    let positions_b: Vec<usize> =
        st.scene.frame_b.data_positions().iter().map(|p| p + st.scene.offset).collect();
    let la = st.scene.frame_a.len();
    let span_a = match offset {
        Some(d) if d < la => d..la,
        _ => 0..0,
    };
    // From B's perspective the interferer is A, present until A ends.
    let span_b = match offset {
        Some(d) if d < la => d..la,
        _ => 0..0,
    };

    let decode_user = |llrs_window: &[f64], positions: &[usize], truth: &[u8]| -> Result<(u64, u64)> {
        let llrs: Vec<f64> = positions.iter().map(|&p| llrs_window[p]).collect();
        let dec = code.decode(&llrs, cfg.coded.decoder_iters)?;
        let msg = code.message_of(&dec.bits)?;
        let errs = msg.iter().zip(truth).filter(|(a, b)| a != b).count() as u64;
        Ok((errs, u64::from(errs > 0)))
    };

    let mut out = Vec::new();
    for receiver in cfg.active_receivers() {
        let ((ea, blk_a), (eb, blk_b)) = match receiver.as_str() {
            "bp-separate" | "bp-joint" => {
                let schedule = if receiver == "bp-separate" {
                    Schedule::SEPARATE
                } else {
                    Schedule::JOINT
                };
                let jo = crate::ldpc::joint_receive(
                    y,
                    &priors,
                    &positions_a,
                    &positions_b,
                    &model,
                    code,
                    schedule,
                    cfg.detector.k_max,
                )?;
                let ea = jo.user_a.message.iter().zip(&msg_a).filter(|(a, b)| a != b).count()
                    as u64;
                let eb = jo.user_b.message.iter().zip(&msg_b).filter(|(a, b)| a != b).count()
                    as u64;
                ((ea, u64::from(ea > 0)), (eb, u64::from(eb > 0)))
            }
            "mmse" => {
                let oa = mmse_receiver(
                    y,
                    &priors,
                    User::A,
                    &linear_model(cfg, &st, User::A),
                    span_a.clone(),
                    &MmseConfig { window: cfg.mmse.window, sigma_i2: st.sigma_b2 },
                )?;
                let ob = mmse_receiver(
                    y,
                    &priors,
                    User::B,
                    &linear_model(cfg, &st, User::B),
                    span_b.clone(),
                    &MmseConfig { window: cfg.mmse.window, sigma_i2: cfg.channel.sigma_h2 },
                )?;
                (
                    decode_user(&oa.llrs, &positions_a, &msg_a)?,
                    decode_user(&ob.llrs, &positions_b, &msg_b)?,
                )
            }
            "conventional" => {
                let oa =
                    conventional_receiver(y, &priors, User::A, &linear_model(cfg, &st, User::A))?;
                let ob =
                    conventional_receiver(y, &priors, User::B, &linear_model(cfg, &st, User::B))?;
                (
                    decode_user(&oa.llrs, &positions_a, &msg_a)?,
                    decode_user(&ob.llrs, &positions_b, &msg_b)?,
                )
            }
            "genie" => {
                let la_llrs = genie_llrs(
                    y,
                    &st.h_a,
                    &st.h_b,
                    &priors,
                    User::A,
                    &NoiseParams { sigma_n2: st.sigma_n2 },
                )?;
                let lb_llrs = genie_llrs(
                    y,
                    &st.h_a,
                    &st.h_b,
                    &priors,
                    User::B,
                    &NoiseParams { sigma_n2: st.sigma_n2 },
                )?;
                (
                    decode_user(&la_llrs, &positions_a, &msg_a)?,
                    decode_user(&lb_llrs, &positions_b, &msg_b)?,
                )
            }
            other => return Err(Error::Config(format!("unknown receiver {other}"))),
        };
        let kk = k as u64;
        out.push(((ea + eb) as f64, 2 * kk)); // ber pooled
        out.push((ea as f64, kk)); // ber_a
        out.push((eb as f64, kk)); // ber_b
        out.push(((blk_a + blk_b) as f64, 2)); // bler pooled
        out.push((blk_a as f64, 1)); // bler_a
        out.push((blk_b as f64, 1)); // bler_b
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Point and sweep drivers
// ---------------------------------------------------------------------------

/// Run `trials` paired trials of a grid point starting at `trial_start`.
/// Deterministic in `(config, point, trial range)`; independent of thread
/// count.
pub fn run_point(
    cfg: &ExperimentConfig,
    point: GridPoint,
    trial_start: u64,
    trials: u64,
) -> Result<PointBatch> {
    cfg.validate()?;
    let spec = cfg.packet_spec();
    let preamble = gen_preamble(spec.preamble_len, cfg.frame.preamble_seed);
    let code = match cfg.experiment.scenario {
        Scenario::Coded => Some(build_code(
            cfg.coded.n,
            cfg.coded.m,
            &[(2, 0.5), (3, 0.3), (8, 0.2)],
            cfg.coded.ldpc_seed,
        )?),
        _ => None,
    };
    let per_trial: Vec<Vec<(f64, u64)>> = (trial_start..trial_start + trials)
        .into_par_iter()
        .map(|trial| match cfg.experiment.scenario {
            Scenario::Uncoded | Scenario::Threshold => {
                uncoded_like_trial(cfg, &spec, &preamble, point, trial, false)
            }
            Scenario::Mse => uncoded_like_trial(cfg, &spec, &preamble, point, trial, true),
            Scenario::DetectProb => detect_trial(cfg, &spec, &preamble, point, trial),
            Scenario::Coded => {
                coded_trial(cfg, &spec, &preamble, code.as_ref().expect("code built"), point, trial)
            }
        })
        .collect::<Result<_>>()?;

    let layout = series_layout(cfg);
    let mut series: Vec<Series> = layout
        .into_iter()
        .map(|(receiver, metric)| Series {
            receiver,
            metric,
            num: Vec::with_capacity(trials as usize),
            den: Vec::with_capacity(trials as usize),
        })
        .collect();
    for row in per_trial {
        if row.len() != series.len() {
            return Err(Error::Shape(format!(
                "trial produced {} series, layout has {}",
                row.len(),
                series.len()
            )));
        }
        for (s, (n, d)) in series.iter_mut().zip(row) {
            s.num.push(n);
            s.den.push(d);
        }
    }
    Ok(PointBatch { series })
}

/// Relative half-width of a series estimate; `None` when no events were
/// observed (nothing to resolve yet).
fn relative_half_width(s: &Series) -> Option<f64> {
    let den = s.total_den();
    let num = s.total_num();
    if den == 0 || num <= 0.0 {
        return None;
    }
    let value = num / den as f64;
    if is_rate_metric(&s.metric) {
        let (lo, hi) = wilson_interval(num.round() as u64, den);
        Some((hi - lo) / 2.0 / value)
    } else {
        // Ratio-estimator standard error over paired trials.
        let mut var = 0.0;
        for (n, d) in s.num.iter().zip(&s.den) {
            let dev = n - value * *d as f64;
            var += dev * dev;
        }
        let se = var.sqrt() / den as f64;
        Some(Z95 * se / value)
    }
}

fn converged(batch: &PointBatch) -> bool {
    batch.series.iter().all(|s| match relative_half_width(s) {
        Some(rel) => rel <= 0.2,
        None => true,
    })
}

/// Run a grid point, doubling the trial budget until every observed metric
/// is resolved to 20% relative half-width or the cap is reached.
pub fn run_point_extended(cfg: &ExperimentConfig, point: GridPoint) -> Result<PointBatch> {
    let mut total = cfg.experiment.trials.min(cfg.experiment.max_trials);
    let mut batch = run_point(cfg, point, 0, total)?;
    while total < cfg.experiment.max_trials && !converged(&batch) {
        let add = total.min(cfg.experiment.max_trials - total);
        batch.merge(run_point(cfg, point, total, add)?);
        total += add;
    }
    Ok(batch)
}

fn batch_rows(cfg: &ExperimentConfig, point: GridPoint, batch: &PointBatch) -> Vec<Row> {
    batch
        .series
        .iter()
        .map(|s| Row {
            scenario: cfg.experiment.scenario.name().to_string(),
            receiver: s.receiver.clone(),
            snr_db: point.snr_db,
            sinr_db: sinr_db(point.snr_db, point.power_ratio_db),
            metric: s.metric.clone(),
            value: s.value(),
            count: s.total_den(),
            trials: batch.trials(),
            seed: cfg.experiment.seed,
        })
        .collect()
}

/// Outcome of the interferer-deficit threshold search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdOutcome {
    /// Weakest relative interferer power at which the mixture detector still
    /// beats the Wiener receiver by the configured BER ratio.
    Found { deficit_db: f64 },
    /// The ratio never reached the target anywhere in the sweep range.
    OutOfRange { max_ratio: f64 },
}

/// Sweep the interferer power deficit at the configured SNR and locate where
/// `BER(mmse) / BER(bp)` crosses the target ratio (linear interpolation
/// between grid points; the sweep is coarse by design).
pub fn find_sinr_threshold(cfg: &ExperimentConfig) -> Result<(ThresholdOutcome, Vec<Row>)> {
    if cfg.experiment.scenario != Scenario::Threshold {
        return Err(Error::Config("threshold search requires the threshold scenario".into()));
    }
    cfg.validate()?;
    let t = cfg.threshold;
    let mut rows = Vec::new();
    let mut points: Vec<(f64, f64)> = Vec::new(); // (deficit, ratio)
    let mut total_trials = 0u64;
    let steps = ((t.deficit_max_db - t.deficit_min_db) / t.step_db).round() as usize;
    for i in 0..=steps {
        let deficit = t.deficit_min_db + i as f64 * t.step_db;
        let point = GridPoint { snr_db: t.snr_db, power_ratio_db: deficit };
        let batch = run_point_extended(cfg, point)?;
        total_trials += batch.trials();
        rows.extend(batch_rows(cfg, point, &batch));
        let bp = batch.get("bp", "ber").map(Series::value).unwrap_or(0.0);
        let mmse = batch.get("mmse", "ber").map(Series::value).unwrap_or(0.0);
        let ratio = if bp > 0.0 { mmse / bp } else { f64::INFINITY };
        points.push((deficit, ratio));
    }
    let outcome = locate_crossing(&points, t.ratio);
    let (metric, value) = match outcome {
        ThresholdOutcome::Found { deficit_db } => ("threshold_db", deficit_db),
        ThresholdOutcome::OutOfRange { max_ratio } => ("max_ratio", max_ratio),
    };
    rows.push(Row {
        scenario: cfg.experiment.scenario.name().to_string(),
        receiver: "bp/mmse".to_string(),
        snr_db: t.snr_db,
        sinr_db: f64::NAN,
        metric: metric.to_string(),
        value,
        count: 0,
        trials: total_trials,
        seed: cfg.experiment.seed,
    });
    Ok((outcome, rows))
}

/// First upward crossing of `target` along ascending deficits.
fn locate_crossing(points: &[(f64, f64)], target: f64) -> ThresholdOutcome {
    let max_ratio = points.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    if let Some(&(d0, r0)) = points.first() {
        if r0 >= target {
            return ThresholdOutcome::Found { deficit_db: d0 };
        }
        let mut prev = (d0, r0);
        for &(d, r) in &points[1..] {
            if r >= target {
                let (dp, rp) = prev;
                let deficit_db = if r.is_finite() && r > rp {
                    dp + (target - rp) * (d - dp) / (r - rp)
                } else {
                    d
                };
                return ThresholdOutcome::Found { deficit_db };
            }
            prev = (d, r);
        }
    }
    ThresholdOutcome::OutOfRange { max_ratio }
}

/// Aggregated output of a full sweep.
#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<Row>,
}

/// Run the configured scenario over its grid.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.experiment.scenario == Scenario::Threshold {
        let (_, rows) = find_sinr_threshold(cfg)?;
        return Ok(SweepOutput { rows });
    }
    let mut rows = Vec::new();
    for &snr_db in &cfg.grid.snr_db {
        for &power_ratio_db in &cfg.grid.power_ratio_db {
            let point = GridPoint { snr_db, power_ratio_db };
            let batch = run_point_extended(cfg, point)?;
            rows.extend(batch_rows(cfg, point, &batch));
        }
    }
    Ok(SweepOutput { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_uncoded() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "uncoded"
seed = 3
trials = 6
max_trials = 6

[frame]
preamble_len = 8
payload_len = 60

[grid]
snr_db = [10.0]
power_ratio_db = [0.0]
"#,
        )
        .unwrap()
    }

    #[test]
    fn wilson_interval_basics() {
        let (lo, hi) = wilson_interval(0, 100);
        assert!(lo < 1e-12, "lower edge collapses to zero: {lo}");
        assert!(hi < 0.05, "zero successes still bound away from 1: {hi}");
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && 0.5 < hi);
        let (lo2, hi2) = wilson_interval(500, 1000);
        assert!(hi2 - lo2 < hi - lo, "interval shrinks with n");
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(100, 100);
        assert!(lo > 0.95 && hi == 1.0);
    }

    #[test]
    fn sinr_accounts_for_interferer_and_noise() {
        assert!((sinr_db(20.0, 0.0) - -0.043213737826426).abs() < 1e-12);
        // No interferer contribution at very negative ratios.
        assert!((sinr_db(10.0, -100.0) - 10.0).abs() < 1e-3);
    }

    #[test]
    fn uncoded_point_is_deterministic_across_thread_counts() {
        let cfg = small_uncoded();
        let point = GridPoint { snr_db: 10.0, power_ratio_db: 0.0 };
        let run = |threads: usize| -> PointBatch {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_point(&cfg, point, 0, 6).unwrap())
        };
        let a = run(1);
        let b = run(2);
        for (sa, sb) in a.series.iter().zip(&b.series) {
            assert_eq!(sa.receiver, sb.receiver);
            assert_eq!(sa.num, sb.num, "{}", sa.receiver);
            assert_eq!(sa.den, sb.den);
        }
    }

    #[test]
    fn paired_trials_share_denominators() {
        let cfg = small_uncoded();
        let batch =
            run_point(&cfg, GridPoint { snr_db: 10.0, power_ratio_db: 0.0 }, 0, 6).unwrap();
        assert_eq!(batch.trials(), 6);
        let dens: Vec<&Vec<u64>> = batch.series.iter().map(|s| &s.den).collect();
        for d in &dens[1..] {
            assert_eq!(*d, dens[0], "every receiver scores the same overlapped symbols");
        }
        for s in &batch.series {
            let v = s.value();
            assert!((0.0..=1.0).contains(&v), "{} ber {v}", s.receiver);
        }
    }

    #[test]
    fn genie_never_loses_to_conventional_on_a_batch() {
        let cfg = small_uncoded();
        let batch =
            run_point(&cfg, GridPoint { snr_db: 15.0, power_ratio_db: 0.0 }, 0, 6).unwrap();
        let genie = batch.get("genie", "ber").unwrap().value();
        let conv = batch.get("conventional", "ber").unwrap().value();
        assert!(genie <= conv, "genie {genie} vs conventional {conv}");
    }

    #[test]
    fn extension_respects_the_trial_cap() {
        let cfg = ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "detect-prob"
seed = 5
trials = 8
max_trials = 32

[frame]
preamble_len = 8
payload_len = 60

[grid]
snr_db = [20.0]
power_ratio_db = [0.0]
"#,
        )
        .unwrap();
        let batch =
            run_point_extended(&cfg, GridPoint { snr_db: 20.0, power_ratio_db: 0.0 }).unwrap();
        // Detection probability around 0.5-0.8 cannot hit a 20% half-width
        // with 8 trials, so the budget must grow, but never past the cap.
        assert!(batch.trials() > 8);
        assert!(batch.trials() <= 32);
    }

    #[test]
    fn detect_rows_cover_both_metrics() {
        let cfg = ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "detect-prob"
trials = 10
max_trials = 10

[frame]
preamble_len = 8
payload_len = 60

[grid]
snr_db = [20.0]
power_ratio_db = [0.0]
"#,
        )
        .unwrap();
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        let dp = out.rows.iter().find(|r| r.metric == "detect_prob").unwrap();
        let fp = out.rows.iter().find(|r| r.metric == "fault_prob").unwrap();
        assert!((dp.value + fp.value - 1.0).abs() < 1e-12, "fault complements exact detection");
        assert_eq!(dp.receiver, "detector");
        assert_eq!(dp.count, 10);
    }

    #[test]
    fn mse_scenario_runs_and_bp_tracks_the_channel() {
        let cfg = ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "mse"
seed = 2
trials = 5
max_trials = 5

[frame]
preamble_len = 8
payload_len = 60

[grid]
snr_db = [20.0]
power_ratio_db = [0.0]
"#,
        )
        .unwrap();
        let batch =
            run_point(&cfg, GridPoint { snr_db: 20.0, power_ratio_db: 0.0 }, 0, 5).unwrap();
        let bp = batch.get("bp", "mse").unwrap().value();
        assert!(bp > 0.0 && bp < 1.0, "normalized tracking error in (0, 1): {bp}");
        let conv = batch.get("conventional", "mse").unwrap().value();
        assert!(bp < conv, "mixture posterior {bp} should beat nearest-pilot {conv}");
    }

    #[test]
    fn coded_point_smoke() {
        let cfg = ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "coded"
seed = 4
trials = 2
max_trials = 2
receivers = ["bp-joint", "genie"]

[frame]
preamble_len = 8

[grid]
snr_db = [25.0]
power_ratio_db = [0.0]
"#,
        )
        .unwrap();
        let batch =
            run_point(&cfg, GridPoint { snr_db: 25.0, power_ratio_db: 0.0 }, 0, 2).unwrap();
        assert_eq!(batch.series.len(), 12, "2 receivers x 6 metrics");
        for s in &batch.series {
            assert!(s.value().is_finite());
            assert!(s.value() <= 0.5, "{}/{} value {}", s.receiver, s.metric, s.value());
        }
        // Message BER and BLER are consistent: zero bit errors means zero
        // block errors.
        let ber = batch.get("bp-joint", "ber").unwrap().value();
        let bler = batch.get("bp-joint", "bler").unwrap().value();
        assert!((ber == 0.0) == (bler == 0.0));
    }

    #[test]
    fn threshold_search_runs_on_a_coarse_grid() {
        let cfg = ExperimentConfig::from_toml(
            r#"
[experiment]
scenario = "threshold"
seed = 6
trials = 12
max_trials = 12

[frame]
preamble_len = 8
payload_len = 80

[threshold]
snr_db = 12.0
ratio = 1.5
deficit_min_db = -9.0
deficit_max_db = 0.0
step_db = 4.5
"#,
        )
        .unwrap();
        let (outcome, rows) = find_sinr_threshold(&cfg).unwrap();
        // Three deficit points, two receivers each, plus the outcome row.
        assert_eq!(rows.len(), 7);
        let last = rows.last().unwrap();
        match outcome {
            ThresholdOutcome::Found { deficit_db } => {
                assert_eq!(last.metric, "threshold_db");
                assert!((
                    cfg.threshold.deficit_min_db..=cfg.threshold.deficit_max_db
                )
                    .contains(&deficit_db));
            }
            ThresholdOutcome::OutOfRange { max_ratio } => {
                assert_eq!(last.metric, "max_ratio");
                assert!(max_ratio.is_finite() || max_ratio.is_infinite());
            }
        }
    }

    #[test]
    fn crossing_interpolation() {
        let pts = vec![(-10.0, 1.0), (-5.0, 2.0), (0.0, 4.0)];
        match locate_crossing(&pts, 3.0) {
            ThresholdOutcome::Found { deficit_db } => {
                assert!((deficit_db - -2.5).abs() < 1e-12, "linear between (-5,2) and (0,4)");
            }
            other => panic!("expected a crossing, got {other:?}"),
        }
        match locate_crossing(&pts, 10.0) {
            ThresholdOutcome::OutOfRange { max_ratio } => assert_eq!(max_ratio, 4.0),
            other => panic!("expected out of range, got {other:?}"),
        }
        match locate_crossing(&pts, 0.5) {
            ThresholdOutcome::Found { deficit_db } => assert_eq!(deficit_db, -10.0),
            other => panic!("expected immediate crossing, got {other:?}"),
        }
    }
}

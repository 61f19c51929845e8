//! Rate-1/2 LDPC code: progressive-edge-growth construction, systematic
//! encoding, sum-product decoding, and the detector/decoder exchange loop.
//!
//! Construction targets an edge-perspective variable degree profile (the
//! fraction of edges incident to degree-d variables) with near-regular
//! checks. Edges are placed one variable at a time; each new edge runs a
//! BFS from the variable and connects to an unreached check of least
//! degree, or, when every check is reachable, to one at maximum depth.
//! Check degrees are capped so the final distribution is exactly the
//! near-regular split implied by the edge count. A built code is rejected
//! (and reconstruction retried with a reshuffled preference order) unless
//! its parity matrix is 4-cycle-free and has full row rank over GF(2); the
//! rank also guarantees systematic encoding exists.
//!
//! The text form is line-oriented: `n m` on the first line, then one line
//! per check listing its 1-based variable indices.

use crate::bp::{bp_detect, extrinsic_llrs, BpModel, SymbolPrior, User};
use crate::channel::ReceivedFrame;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Messages inside the decoder are clamped to this magnitude.
const MSG_CLAMP: f64 = 30.0;

/// A binary LDPC code with precomputed systematic-encoding structure.
#[derive(Clone, Debug)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    /// Variable indices of each check, ascending.
    checks: Vec<Vec<u32>>,
    /// Pivot column of each RREF row.
    pivots: Vec<u32>,
    /// Non-pivot (message) columns, ascending; message bit `j` lives at
    /// codeword position `free_cols[j]`.
    free_cols: Vec<u32>,
    /// Message-bit indices XORed into each pivot (RREF row support).
    encode_rows: Vec<Vec<u32>>,
}

/// Result of a sum-product decoding attempt.
#[derive(Clone, Debug)]
pub struct DecodeOutput {
    /// Hard decisions for the full codeword (0/1).
    pub bits: Vec<u8>,
    /// Whether every parity check is satisfied by `bits`.
    pub parity_ok: bool,
    /// Iterations actually run (0 when the channel decisions already pass).
    pub iters: usize,
    /// Total (channel + all check-to-variable) LLR per codeword bit.
    pub total_llrs: Vec<f64>,
}

impl LdpcCode {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn message_len(&self) -> usize {
        self.free_cols.len()
    }

    pub fn checks(&self) -> &[Vec<u32>] {
        &self.checks
    }

    /// Systematic encode: message bits land verbatim at the non-pivot
    /// columns, parity bits fill the pivot columns.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.message_len() {
            return Err(Error::Shape(format!(
                "message of {} bits, code expects {}",
                message.len(),
                self.message_len()
            )));
        }
        if let Some(b) = message.iter().find(|&&b| b > 1) {
            return Err(Error::Parameter(format!("message bit {b} is not 0/1")));
        }
        let mut cw = vec![0u8; self.n];
        for (j, &col) in self.free_cols.iter().enumerate() {
            cw[col as usize] = message[j];
        }
        for (row, &piv) in self.encode_rows.iter().zip(&self.pivots) {
            let mut p = 0u8;
            for &j in row {
                p ^= message[j as usize];
            }
            cw[piv as usize] = p;
        }
        Ok(cw)
    }

    /// Message bits of a codeword (the non-pivot columns).
    pub fn message_of(&self, codeword: &[u8]) -> Result<Vec<u8>> {
        if codeword.len() != self.n {
            return Err(Error::Shape(format!(
                "codeword of {} bits, code expects {}",
                codeword.len(),
                self.n
            )));
        }
        Ok(self.free_cols.iter().map(|&c| codeword[c as usize]).collect())
    }

    fn parity_ok(&self, bits: &[u8]) -> bool {
        self.checks.iter().all(|chk| chk.iter().fold(0u8, |p, &v| p ^ bits[v as usize]) == 0)
    }

    /// Sum-product decoding (tanh rule, forward/backward partial products,
    /// message clamping, early stop once the hard decisions satisfy every
    /// check). LLRs follow the crate convention `ln P(bit 0)/P(bit 1)`.
    pub fn decode(&self, llrs: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        if llrs.len() != self.n {
            return Err(Error::Shape(format!(
                "{} LLRs for a length-{} code",
                llrs.len(),
                self.n
            )));
        }
        if max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        let hard = |totals: &[f64]| -> Vec<u8> {
            totals.iter().map(|&l| u8::from(l < 0.0)).collect()
        };

        let mut totals: Vec<f64> = llrs.to_vec();
        let mut bits = hard(&totals);
        if self.parity_ok(&bits) {
            return Ok(DecodeOutput { bits, parity_ok: true, iters: 0, total_llrs: totals });
        }

        // Edge storage in check-major order.
        let mut c2v: Vec<Vec<f64>> = self.checks.iter().map(|c| vec![0.0; c.len()]).collect();
        let mut fwd: Vec<f64> = Vec::new();
        let mut bwd: Vec<f64> = Vec::new();
        for iter in 1..=max_iters {
            for (ci, chk) in self.checks.iter().enumerate() {
                let d = chk.len();
                fwd.clear();
                fwd.resize(d + 1, 1.0);
                bwd.clear();
                bwd.resize(d + 1, 1.0);
                for (k, &v) in chk.iter().enumerate() {
                    // Variable-to-check message: total minus this edge.
                    let m = (totals[v as usize] - c2v[ci][k]).clamp(-MSG_CLAMP, MSG_CLAMP);
                    fwd[k + 1] = fwd[k] * (0.5 * m).tanh();
                }
                for (k, &v) in chk.iter().enumerate().rev() {
                    let m = (totals[v as usize] - c2v[ci][k]).clamp(-MSG_CLAMP, MSG_CLAMP);
                    bwd[k] = bwd[k + 1] * (0.5 * m).tanh();
                }
                for k in 0..d {
                    let prod = (fwd[k] * bwd[k + 1]).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[ci][k] = (2.0 * prod.atanh()).clamp(-MSG_CLAMP, MSG_CLAMP);
                }
            }
            totals.copy_from_slice(llrs);
            for (ci, chk) in self.checks.iter().enumerate() {
                for (k, &v) in chk.iter().enumerate() {
                    totals[v as usize] += c2v[ci][k];
                }
            }
            bits = hard(&totals);
            if self.parity_ok(&bits) {
                return Ok(DecodeOutput { bits, parity_ok: true, iters: iter, total_llrs: totals });
            }
        }
        Ok(DecodeOutput { bits, parity_ok: false, iters: max_iters, total_llrs: totals })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m);
        for chk in &self.checks {
            let line: Vec<String> = chk.iter().map(|&v| (v + 1).to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<LdpcCode> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Construction("empty code file".into()))?;
        let mut it = head.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<usize> {
            tok.ok_or_else(|| Error::Construction(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|_| Error::Construction(format!("malformed {what}")))
        };
        let n = parse(it.next(), "variable count")?;
        let m = parse(it.next(), "check count")?;
        if n == 0 || m == 0 || m >= n {
            return Err(Error::Construction(format!("implausible dimensions {n} x {m}")));
        }
        let mut checks = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Construction(format!("expected {m} check lines")))?;
            let mut chk: Vec<u32> = Vec::new();
            for tok in line.split_whitespace() {
                let v: usize = tok
                    .parse()
                    .map_err(|_| Error::Construction(format!("malformed index {tok}")))?;
                if v == 0 || v > n {
                    return Err(Error::Construction(format!(
                        "variable index {v} outside 1..={n}"
                    )));
                }
                chk.push((v - 1) as u32);
            }
            chk.sort_unstable();
            if chk.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction("duplicate variable in a check".into()));
            }
            if chk.is_empty() {
                return Err(Error::Construction("empty check".into()));
            }
            checks.push(chk);
        }
        if lines.next().is_some() {
            return Err(Error::Construction("trailing lines after the last check".into()));
        }
        LdpcCode::from_checks(n, m, checks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<LdpcCode> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LdpcCode::from_text(&text)
    }

    /// Finish construction from a parity structure: build adjacency, verify
    /// full rank, and precompute the systematic encoder.
    fn from_checks(n: usize, m: usize, checks: Vec<Vec<u32>>) -> Result<LdpcCode> {
        // Dense GF(2) RREF of H to find pivots and the encoding rows.
        let words = n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = checks
            .iter()
            .map(|chk| {
                let mut r = vec![0u64; words];
                for &v in chk {
                    r[v as usize / 64] |= 1u64 << (v as usize % 64);
                }
                r
            })
            .collect();
        let get = |r: &[u64], c: usize| (r[c / 64] >> (c % 64)) & 1 == 1;
        let mut pivots: Vec<u32> = Vec::with_capacity(m);
        let mut rank = 0;
        for col in 0..n {
            let Some(pr) = (rank..m).find(|&r| get(&rows[r], col)) else { continue };
            rows.swap(rank, pr);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && get(row, col) {
                    for w in 0..words {
                        row[w] ^= pivot_row[w];
                    }
                }
            }
            pivots.push(col as u32);
            rank += 1;
            if rank == m {
                break;
            }
        }
        if rank < m {
            return Err(Error::Construction(format!(
                "parity matrix has rank {rank} < {m}; the code is degenerate"
            )));
        }
        let pivot_set: Vec<bool> = {
            let mut s = vec![false; n];
            for &p in &pivots {
                s[p as usize] = true;
            }
            s
        };
        let free_cols: Vec<u32> =
            (0..n as u32).filter(|&c| !pivot_set[c as usize]).collect();
        let msg_index: Vec<u32> = {
            let mut ix = vec![0u32; n];
            for (j, &c) in free_cols.iter().enumerate() {
                ix[c as usize] = j as u32;
            }
            ix
        };
        let encode_rows: Vec<Vec<u32>> = rows[..m]
            .iter()
            .enumerate()
            .map(|(r, row)| {
                (0..n)
                    .filter(|&c| c != pivots[r] as usize && get(row, c))
                    .map(|c| msg_index[c])
                    .collect()
            })
            .collect();
        Ok(LdpcCode { n, m, checks, pivots, free_cols, encode_rows })
    }
}

/// True when no two checks share two variables (girth at least 6).
pub fn four_cycle_free(checks: &[Vec<u32>], n: usize) -> bool {
    let mut var_adj = vec![Vec::new(); n];
    for (ci, chk) in checks.iter().enumerate() {
        for &v in chk {
            var_adj[v as usize].push(ci as u32);
        }
    }
    let mut seen = std::collections::HashSet::new();
    for adj in &var_adj {
        for i in 0..adj.len() {
            for j in (i + 1)..adj.len() {
                if !seen.insert((adj[i], adj[j])) {
                    return false;
                }
            }
        }
    }
    true
}

/// Variable-node counts realizing an edge-perspective profile by largest
/// remainder, summing exactly to `n`.
fn node_counts(n: usize, profile: &[(usize, f64)]) -> Result<Vec<(usize, usize)>> {
    if profile.is_empty() {
        return Err(Error::Construction("empty degree profile".into()));
    }
    let mut total = 0.0;
    for &(d, f) in profile {
        if d < 2 {
            return Err(Error::Construction(format!("variable degree {d} < 2")));
        }
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Construction(format!("edge fraction {f} must be positive")));
        }
        total += f;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Construction(format!("edge fractions sum to {total}, not 1")));
    }
    let mut degs: Vec<usize> = profile.iter().map(|&(d, _)| d).collect();
    degs.sort_unstable();
    degs.dedup();
    if degs.len() != profile.len() {
        return Err(Error::Construction("duplicate degree in profile".into()));
    }
    // Edge fractions over degree give node weights.
    let weights: Vec<f64> = profile.iter().map(|&(d, f)| f / d as f64).collect();
    let wsum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| n as f64 * w / wsum).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        // Remainders within rounding noise tie toward the profile order.
        if (ra - rb).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            rb.partial_cmp(&ra).unwrap()
        }
    });
    let mut i = 0;
    while short > 0 {
        counts[order[i % order.len()]] += 1;
        short -= 1;
        i += 1;
    }
    Ok(profile.iter().map(|&(d, _)| d).zip(counts).collect())
}

/// Build an LDPC code by progressive edge growth.
///
/// `profile` holds edge-perspective fractions per variable degree. The
/// construction is deterministic given `seed`; internally it retries with a
/// reshuffled check preference until the result is 4-cycle-free with a
/// full-rank parity matrix.
pub fn build_code(n: usize, m: usize, profile: &[(usize, f64)], seed: u64) -> Result<LdpcCode> {
    if n == 0 || m == 0 || m >= n {
        return Err(Error::Construction(format!("implausible dimensions {n} x {m}")));
    }
    let counts = node_counts(n, profile)?;
    let e_total: usize = counts.iter().map(|&(d, c)| d * c).sum();
    let base = e_total / m;
    let extra = e_total - base * m; // checks allowed one extra edge
    if base < 2 {
        return Err(Error::Construction(format!(
            "average check degree {base} too small for {e_total} edges over {m} checks"
        )));
    }
    // Variable degrees in processing order (ascending degree).
    let mut var_deg: Vec<usize> = Vec::with_capacity(n);
    {
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        for (d, c) in sorted {
            var_deg.extend(std::iter::repeat(d).take(c));
        }
    }

    const ATTEMPTS: usize = 50;
    for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut pref: Vec<u32> = (0..m as u32).collect();
        pref.shuffle(&mut rng);

        let mut check_adj: Vec<Vec<u32>> = vec![Vec::new(); m];
        let mut var_adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut sixes = 0usize;
        let mut depth = vec![u32::MAX; m];
        let mut stamp = vec![0u32; m];
        let mut vstamp = vec![0u32; n];
        let mut round = 0u32;
        let mut ok = true;

        'vars: for v in 0..n {
            for _edge in 0..var_deg[v] {
                // BFS over checks reachable from v in the current graph.
                round += 1;
                let mut frontier: Vec<u32> = Vec::new();
                vstamp[v] = round;
                for &c in &var_adj[v] {
                    stamp[c as usize] = round;
                    depth[c as usize] = 1;
                    frontier.push(c);
                }
                let mut level = 1u32;
                while !frontier.is_empty() {
                    level += 1;
                    let mut next: Vec<u32> = Vec::new();
                    for &c in &frontier {
                        for &v2 in &check_adj[c as usize] {
                            if vstamp[v2 as usize] == round {
                                continue;
                            }
                            vstamp[v2 as usize] = round;
                            for &c2 in &var_adj[v2 as usize] {
                                if stamp[c2 as usize] != round {
                                    stamp[c2 as usize] = round;
                                    depth[c2 as usize] = level;
                                    next.push(c2);
                                }
                            }
                        }
                    }
                    frontier = next;
                }
                // Candidates respect the near-regular cap.
                let allowed = |c: usize, sixes: usize| -> bool {
                    let d = check_adj[c].len();
                    d < base || (d == base && sixes < extra)
                };
                let mut best: Option<(bool, u32, usize, u32)> = None; // key
                let mut chosen: Option<usize> = None;
                for c in 0..m {
                    if stamp[c] == round && depth[c] == 1 {
                        continue; // already a neighbor of v
                    }
                    if !allowed(c, sixes) {
                        continue;
                    }
                    let unreached = stamp[c] != round;
                    let d = if unreached { u32::MAX } else { depth[c] };
                    // Prefer unreached, then deeper, then lighter, then the
                    // shuffled order for determinism-with-diversity.
                    let key = (unreached, d, check_adj[c].len(), pref[c]);
                    let better = match &best {
                        None => true,
                        Some((bu, bd, bw, bp)) => {
                            (key.0, key.1, std::cmp::Reverse(key.2), std::cmp::Reverse(key.3))
                                > (*bu, *bd, std::cmp::Reverse(*bw), std::cmp::Reverse(*bp))
                        }
                    };
                    if better {
                        best = Some(key);
                        chosen = Some(c);
                    }
                }
                let Some(c) = chosen else {
                    ok = false;
                    break 'vars;
                };
                if check_adj[c].len() == base {
                    sixes += 1;
                }
                check_adj[c].push(v as u32);
                var_adj[v].push(c as u32);
            }
        }
        if !ok {
            continue;
        }
        let mut checks: Vec<Vec<u32>> = check_adj;
        for chk in &mut checks {
            chk.sort_unstable();
        }
        if !four_cycle_free(&checks, n) {
            continue;
        }
        match LdpcCode::from_checks(n, m, checks) {
            Ok(code) => return Ok(code),
            Err(_) => continue, // rank-deficient; retry with a new shuffle
        }
    }
    Err(Error::Construction(format!(
        "no 4-cycle-free full-rank code found in {ATTEMPTS} attempts"
    )))
}

// ---------------------------------------------------------------------------
// Detector/decoder exchange
// ---------------------------------------------------------------------------

/// How the total decoding effort is split across detector passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// Full forward/backward detector sweeps.
    pub detector_passes: usize,
    /// Decoder iterations per pass (per user).
    pub decoder_iters: usize,
}

impl Schedule {
    /// One detector sweep, all decoder iterations after it.
    pub const SEPARATE: Schedule = Schedule { detector_passes: 1, decoder_iters: 30 };
    /// Three detector sweeps interleaved with short decoder bursts.
    pub const JOINT: Schedule = Schedule { detector_passes: 3, decoder_iters: 10 };

    pub fn validate(&self) -> Result<()> {
        if self.detector_passes == 0 || self.decoder_iters == 0 {
            return Err(Error::Config("schedule stages must be >= 1".into()));
        }
        Ok(())
    }
}

/// Decoding outcome for one user of a joint reception.
#[derive(Clone, Debug)]
pub struct DecodedUser {
    pub codeword: Vec<u8>,
    pub message: Vec<u8>,
    pub parity_ok: bool,
}

#[derive(Clone, Debug)]
pub struct JointOutput {
    pub user_a: DecodedUser,
    pub user_b: DecodedUser,
}

/// Clip on the decoder extrinsics fed back as detector priors. Keeping the
/// priors well below the marginal LLR saturation point preserves extrinsic
/// headroom on later passes; an unclipped prior cancels against the clamped
/// posterior and starves the next decoder pass.
const FEEDBACK_CLAMP: f64 = 12.0;

/// Iterative joint reception: detector extrinsics feed both decoders, and
/// decoder extrinsics return as symbol priors for the next detector pass.
/// The loop stops early once both users satisfy parity.
///
/// `positions_a`/`positions_b` map codeword bit `k` to its window position
/// (the users' data slots, in order). `base_priors` must hold the structural
/// layout (preamble, pilots, headers, silence) with uniform data symbols.
#[allow(clippy::too_many_arguments)]
pub fn joint_receive(
    y: &ReceivedFrame,
    base_priors: &SymbolPrior,
    positions_a: &[usize],
    positions_b: &[usize],
    model: &BpModel,
    code: &LdpcCode,
    schedule: Schedule,
    k_max: usize,
) -> Result<JointOutput> {
    schedule.validate()?;
    if positions_a.len() != code.n() || positions_b.len() != code.n() {
        return Err(Error::Shape(format!(
            "{}/{} data positions for a length-{} code",
            positions_a.len(),
            positions_b.len(),
            code.n()
        )));
    }
    let mut dec_ext_a: Option<Vec<f64>> = None;
    let mut dec_ext_b: Option<Vec<f64>> = None;
    let mut last: Option<(DecodeOutput, DecodeOutput)> = None;
    for _pass in 0..schedule.detector_passes {
        let mut priors = base_priors.clone();
        if let (Some(ea), Some(eb)) = (&dec_ext_a, &dec_ext_b) {
            priors.set_soft_llrs(User::A, positions_a, ea)?;
            priors.set_soft_llrs(User::B, positions_b, eb)?;
        }
        let post = bp_detect(y, &priors, model, k_max)?;
        let det_ext_a = extrinsic_llrs(&post, &priors, User::A, positions_a)?;
        let det_ext_b = extrinsic_llrs(&post, &priors, User::B, positions_b)?;
        let dec_a = code.decode(&det_ext_a, schedule.decoder_iters)?;
        let dec_b = code.decode(&det_ext_b, schedule.decoder_iters)?;
        let feedback = |dec: &DecodeOutput, ext: &[f64]| -> Vec<f64> {
            dec.total_llrs
                .iter()
                .zip(ext)
                .map(|(t, c)| (t - c).clamp(-FEEDBACK_CLAMP, FEEDBACK_CLAMP))
                .collect()
        };
        dec_ext_a = Some(feedback(&dec_a, &det_ext_a));
        dec_ext_b = Some(feedback(&dec_b, &det_ext_b));
        let done = dec_a.parity_ok && dec_b.parity_ok;
        last = Some((dec_a, dec_b));
        if done {
            break;
        }
    }
    let (dec_a, dec_b) = last.expect("at least one pass");
    let wrap = |d: DecodeOutput| -> Result<DecodedUser> {
        let message = code.message_of(&d.bits)?;
        Ok(DecodedUser { codeword: d.bits, message, parity_ok: d.parity_ok })
    };
    Ok(JointOutput { user_a: wrap(dec_a)?, user_b: wrap(dec_b)? })
}

//! Regular LDPC codes: random construction, systematic encoding and
//! flooding sum-product decoding.
//!
//! Bit order inside a codeword is `[message | parity]`. LLRs follow
//! `L = ln P(b=0)/P(b=1)`, so a positive value favours a zero bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub const LLR_CLIP: f64 = 50.0;
const MAX_ATTEMPTS: usize = 20;

pub fn clip_llr(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_CLIP, LLR_CLIP)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    /// Variable indices of each check.
    checks: Vec<Vec<usize>>,
    /// Check-side edge ids touching each variable.
    var_edges: Vec<Vec<usize>>,
    /// Offset of each check's first edge; edges of check `c` are
    /// `check_ptr[c]..check_ptr[c + 1]`.
    check_ptr: Vec<usize>,
    edge_var: Vec<usize>,
    /// Parity bit `i` is the GF(2) dot product of `gen_rows[i]` with the
    /// packed message.
    gen_rows: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub hard: Vec<u8>,
    pub posterior: Vec<f64>,
    /// Posterior minus channel input.
    pub extrinsic: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn get_bit(row: &[u64], i: usize) -> bool {
    (row[i / 64] >> (i % 64)) & 1 == 1
}

fn set_bit(row: &mut [u64], i: usize) {
    row[i / 64] |= 1 << (i % 64);
}

fn pack(bits: &[u8]) -> Vec<u64> {
    let mut out = vec![0u64; words(bits.len())];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            set_bit(&mut out, i);
        }
    }
    out
}

/// Greedy regular construction: each column picks `wc` of the least used
/// rows, avoiding row pairs another column already occupies (a 4-cycle)
/// whenever that is still possible.
fn random_regular(n: usize, m: usize, wc: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let cap = (n * wc).div_ceil(m);
    let mut deg = vec![0usize; m];
    let mut pairs = vec![0u64; words(m * m)];
    let pair_idx = |a: usize, b: usize| if a < b { a * m + b } else { b * m + a };
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cand = Vec::with_capacity(m);
    for &col in &order {
        let mut chosen: Vec<usize> = Vec::with_capacity(wc);
        for _ in 0..wc {
            // strictest filter first, relaxing until something is left
            for level in 0..3 {
                cand.clear();
                let mut best = usize::MAX;
                for r in 0..m {
                    if chosen.contains(&r) {
                        continue;
                    }
                    if level < 2 && deg[r] >= cap {
                        continue;
                    }
                    if level == 0 && chosen.iter().any(|&c| get_bit(&pairs, pair_idx(c, r))) {
                        continue;
                    }
                    if deg[r] < best {
                        best = deg[r];
                        cand.clear();
                    }
                    if deg[r] == best {
                        cand.push(r);
                    }
                }
                if !cand.is_empty() {
                    break;
                }
            }
            let r = cand[rng.random_range(0..cand.len())];
            chosen.push(r);
        }
        for (i, &a) in chosen.iter().enumerate() {
            for &b in &chosen[i + 1..] {
                set_bit(&mut pairs, pair_idx(a, b));
            }
            deg[a] += 1;
            rows[a].push(col);
        }
    }
    for r in rows.iter_mut() {
        r.sort_unstable();
    }
    rows
}

struct Systematic {
    /// New position of each original column.
    perm: Vec<usize>,
    gen_rows: Vec<Vec<u64>>,
}

/// Reduces `H` over GF(2), taking pivots from the rightmost columns. Message
/// positions are the non-pivot columns and parity positions the pivots, both
/// in ascending column order, so a matrix whose last `m` columns are already
/// invertible keeps its column order.
fn systematic_form(n: usize, checks: &[Vec<usize>]) -> Option<Systematic> {
    let m = checks.len();
    let w = words(n);
    let mut dense: Vec<Vec<u64>> = checks
        .iter()
        .map(|row| {
            let mut d = vec![0u64; w];
            for &c in row {
                d[c / 64] ^= 1 << (c % 64);
            }
            d
        })
        .collect();
    let mut pivot_of_row = vec![usize::MAX; m];
    let mut is_pivot = vec![false; n];
    let mut rank = 0;
    for col in (0..n).rev() {
        if rank == m {
            break;
        }
        let Some(p) = (rank..m).find(|&r| get_bit(&dense[r], col)) else {
            continue;
        };
        dense.swap(rank, p);
        let pivot_row = dense[rank].clone();
        for (r, row) in dense.iter_mut().enumerate() {
            if r != rank && get_bit(row, col) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivot_of_row[rank] = col;
        is_pivot[col] = true;
        rank += 1;
    }
    if rank < m {
        return None;
    }
    let msg_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let k = msg_cols.len();
    let mut perm = vec![0usize; n];
    for (i, &c) in msg_cols.iter().enumerate() {
        perm[c] = i;
    }
    let mut rows_by_pivot: Vec<usize> = (0..m).collect();
    rows_by_pivot.sort_by_key(|&r| pivot_of_row[r]);
    let mut gen_rows = Vec::with_capacity(m);
    for (j, &r) in rows_by_pivot.iter().enumerate() {
        perm[pivot_of_row[r]] = k + j;
        let mut g = vec![0u64; words(k)];
        for (i, &c) in msg_cols.iter().enumerate() {
            if get_bit(&dense[r], c) {
                set_bit(&mut g, i);
            }
        }
        gen_rows.push(g);
    }
    Some(Systematic { perm, gen_rows })
}

impl LdpcCode {
    /// Regular code with column weight 3.
    pub fn build(n: usize, rate: f64, seed: u64) -> Result<Self> {
        Self::build_with_weight(n, rate, 3, seed)
    }

    pub fn build_with_weight(n: usize, rate: f64, column_weight: usize, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(invalid(format!("rate {rate} outside (0, 1)")));
        }
        let k_f = n as f64 * rate;
        if (k_f - k_f.round()).abs() > 1e-9 {
            return Err(invalid(format!("n * rate = {k_f} is not an integer")));
        }
        let k = k_f.round() as usize;
        let m = n - k;
        if m == 0 || k == 0 || column_weight == 0 || column_weight > m {
            return Err(invalid(format!(
                "cannot build a column-weight-{column_weight} code with n={n}, k={k}"
            )));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let checks = random_regular(n, m, column_weight, &mut rng);
            if let Ok(code) = Self::from_parity_checks(n, checks) {
                return Ok(code);
            }
        }
        Err(Error::Construction {
            attempts: MAX_ATTEMPTS,
            reason: format!("no full-rank {m}x{n} parity-check matrix"),
        })
    }

    /// Code defined by an explicit parity-check matrix (one list of column
    /// indices per row). Columns are reordered to put the message first.
    pub fn from_parity_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        for row in &checks {
            if let Some(&c) = row.iter().find(|&&c| c >= n) {
                return Err(invalid(format!("column {c} out of range for n = {n}")));
            }
        }
        let sys = systematic_form(n, &checks).ok_or_else(|| Error::Construction {
            attempts: 1,
            reason: "parity-check matrix is rank deficient".into(),
        })?;
        let m = checks.len();
        let checks: Vec<Vec<usize>> = checks
            .into_iter()
            .map(|row| {
                let mut r: Vec<usize> = row.into_iter().map(|c| sys.perm[c]).collect();
                r.sort_unstable();
                r
            })
            .collect();
        let mut check_ptr = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); n];
        check_ptr.push(0);
        for row in &checks {
            for &v in row {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        Ok(Self {
            n,
            k: n - m,
            checks,
            var_edges,
            check_ptr,
            edge_var,
            gen_rows: sys.gen_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.n - self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn column_degrees(&self) -> Vec<usize> {
        self.var_edges.iter().map(Vec::len).collect()
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.checks.iter().map(Vec::len).collect()
    }

    /// Number of column pairs sharing two or more rows.
    pub fn four_cycles(&self) -> usize {
        let mut seen = std::collections::HashMap::new();
        for row in &self.checks {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    *seen.entry((a, b)).or_insert(0usize) += 1;
                }
            }
        }
        seen.values().filter(|&&c| c > 1).count()
    }

    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        if msg.len() != self.k {
            return Err(invalid(format!(
                "message has {} bits, code expects {}",
                msg.len(),
                self.k
            )));
        }
        let packed = pack(msg);
        let mut out = Vec::with_capacity(self.n);
        out.extend(msg.iter().map(|b| b & 1));
        for g in &self.gen_rows {
            let ones: u32 = g
                .iter()
                .zip(&packed)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            out.push((ones & 1) as u8);
        }
        Ok(out)
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        bits.len() == self.n
            && self
                .checks
                .iter()
                .all(|row| row.iter().fold(0u8, |s, &v| s ^ (bits[v] & 1)) == 0)
    }

    /// Sum-product decoding with early stop once all checks hold.
    /// `max_iters = 0` returns the channel hard decisions.
    pub fn decode(&self, llr: &[f64], max_iters: usize) -> Result<DecodeOutput> {
        if llr.len() != self.n {
            return Err(invalid(format!(
                "{} LLRs for a length-{} code",
                llr.len(),
                self.n
            )));
        }
        let ch: Vec<f64> = llr.iter().map(|&x| clip_llr(x)).collect();
        let hard_of = |post: &[f64]| post.iter().map(|&x| u8::from(x < 0.0)).collect::<Vec<u8>>();
        if max_iters == 0 {
            let hard = hard_of(&ch);
            let converged = self.syndrome_ok(&hard);
            return Ok(DecodeOutput {
                hard,
                posterior: ch,
                extrinsic: vec![0.0; self.n],
                converged,
                iterations: 0,
            });
        }

        let ne = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| ch[v]).collect();
        let mut c2v = vec![0.0; ne];
        let mut post = ch.clone();
        let mut hard = hard_of(&post);
        let mut tanhs: Vec<f64> = Vec::new();
        let mut suffix: Vec<f64> = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..max_iters {
            iterations += 1;
            for c in 0..self.checks.len() {
                let (a, b) = (self.check_ptr[c], self.check_ptr[c + 1]);
                let d = b - a;
                tanhs.clear();
                tanhs.extend(v2c[a..b].iter().map(|&x| (x / 2.0).tanh()));
                suffix.clear();
                suffix.resize(d + 1, 1.0);
                for i in (0..d).rev() {
                    suffix[i] = suffix[i + 1] * tanhs[i];
                }
                let mut prefix = 1.0;
                for i in 0..d {
                    let p = (prefix * suffix[i + 1]).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[a + i] = clip_llr(2.0 * p.atanh());
                    prefix *= tanhs[i];
                }
            }
            for v in 0..self.n {
                let total = ch[v] + self.var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
                post[v] = total;
                for &e in &self.var_edges[v] {
                    v2c[e] = clip_llr(total - c2v[e]);
                }
            }
            hard = hard_of(&post);
            if self.syndrome_ok(&hard) {
                converged = true;
                break;
            }
        }
        let posterior: Vec<f64> = post.iter().map(|&x| clip_llr(x)).collect();
        let extrinsic = posterior.iter().zip(&ch).map(|(p, c)| p - c).collect();
        Ok(DecodeOutput {
            hard,
            posterior,
            extrinsic,
            converged,
            iterations,
        })
    }

    /// Sparse text form: a `# ldpc n=<n> m=<m>` header, then one
    /// `row: col col ...` line per check.
    pub fn to_text(&self) -> String {
        let mut s = format!("# ldpc n={} m={}\n", self.n, self.m());
        for (r, row) in self.checks.iter().enumerate() {
            s.push_str(&r.to_string());
            s.push(':');
            for c in row {
                s.push(' ');
                s.push_str(&c.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (n, checks) = parse_parity_text(text)?;
        Self::from_parity_checks(n, checks)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses the sparse text form without building the code.
pub fn parse_parity_text(text: &str) -> Result<(usize, Vec<Vec<usize>>)> {
    let mut dims: Option<(usize, usize)> = None;
    let mut rows: Vec<Option<Vec<usize>>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(hdr) = rest.strip_prefix("ldpc") {
                if dims.is_some() {
                    return Err(parse_err(ln, "duplicate header"));
                }
                let (mut n, mut m) = (None, None);
                for tok in hdr.split_whitespace() {
                    let (key, val) = tok
                        .split_once('=')
                        .ok_or_else(|| parse_err(ln, format!("bad header token {tok:?}")))?;
                    let v: usize = val
                        .parse()
                        .map_err(|_| parse_err(ln, format!("bad number {val:?}")))?;
                    match key {
                        "n" => n = Some(v),
                        "m" => m = Some(v),
                        _ => return Err(parse_err(ln, format!("unknown header key {key:?}"))),
                    }
                }
                let (n, m) = n
                    .zip(m)
                    .ok_or_else(|| parse_err(ln, "header needs n and m"))?;
                if m == 0 || m >= n {
                    return Err(parse_err(ln, format!("need 0 < m < n, got n={n} m={m}")));
                }
                // keep hostile headers from allocating the world
                if n > 1 << 20 {
                    return Err(parse_err(ln, "n too large"));
                }
                dims = Some((n, m));
                rows = vec![None; m];
            }
            continue;
        }
        let (n, m) = dims.ok_or_else(|| parse_err(ln, "row before header"))?;
        let (idx, cols) = line
            .split_once(':')
            .ok_or_else(|| parse_err(ln, "expected `row: cols`"))?;
        let r: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(ln, format!("bad row index {:?}", idx.trim())))?;
        if r >= m {
            return Err(parse_err(ln, format!("row {r} out of range for m = {m}")));
        }
        if rows[r].is_some() {
            return Err(parse_err(ln, format!("row {r} listed twice")));
        }
        let mut v = Vec::new();
        for tok in cols.split_whitespace() {
            let c: usize = tok
                .parse()
                .map_err(|_| parse_err(ln, format!("bad column {tok:?}")))?;
            if c >= n {
                return Err(parse_err(
                    ln,
                    format!("column {c} out of range for n = {n}"),
                ));
            }
            if v.contains(&c) {
                return Err(parse_err(ln, format!("column {c} repeated in row {r}")));
            }
            v.push(c);
        }
        rows[r] = Some(v);
    }
    let (n, _) = dims.ok_or_else(|| parse_err(0, "missing `# ldpc n=.. m=..` header"))?;
    let mut out = Vec::with_capacity(rows.len());
    for (r, row) in rows.into_iter().enumerate() {
        out.push(row.ok_or_else(|| parse_err(0, format!("row {r} missing")))?);
    }
    Ok((n, out))
}

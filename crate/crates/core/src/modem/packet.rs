//! Encoded-pilot packets.
//!
//! The message handed to the encoder is `[pilot bits | data bits]`. On the
//! wire the codeword is sent parity first, so the symbol stream of one user
//! reads `[parity | pilots | info]`. Pilot symbols are Hadamard rows scaled by
//! the bits-`00` symbol; because the code is systematic they reach the air
//! unchanged and the receiver knows them.
//!
//! Tracking blocks in LOS replace the encoded pilots by an uncoded preamble
//! placed ahead of the codeword.

use crate::error::{config, invalid, Result};
use crate::ldpc::LdpcCode;
use crate::linalg::{CMat, C64};
use crate::modem::qpsk::{hard_bits, qpsk_modulate, symbol};
use crate::scenario::{hadamard_order, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    /// Uncoded pilot symbols ahead of the codeword.
    pub preamble: usize,
    pub parity: usize,
    /// Encoded pilot symbols.
    pub pilots: usize,
    pub info: usize,
    /// Pilots and preamble come as two equal halves with negated phases.
    pub repeated: bool,
}

impl FrameLayout {
    /// Full-estimation block with `n_p` encoded pilots.
    pub fn stage1(code: &LdpcCode, n_p: usize, scenario: Scenario) -> Result<Self> {
        Self::build(code, 0, n_p, scenario == Scenario::Los)
    }

    /// Tracking block: uncoded preamble in LOS, short encoded pilots in NLOS.
    pub fn tracking(code: &LdpcCode, n_p: usize, scenario: Scenario) -> Result<Self> {
        match scenario {
            Scenario::Los => Self::build(code, n_p, 0, true),
            Scenario::Nlos => Self::build(code, 0, n_p, false),
        }
    }

    fn build(code: &LdpcCode, preamble: usize, pilots: usize, repeated: bool) -> Result<Self> {
        if !code.m().is_multiple_of(2) {
            return Err(config("parity bit count must be even"));
        }
        if 2 * pilots > code.k() || !(code.k() - 2 * pilots).is_multiple_of(2) {
            return Err(config(format!(
                "{pilots} pilot symbols do not fit a {}-bit message",
                code.k()
            )));
        }
        if repeated && (!pilots.is_multiple_of(2) || !preamble.is_multiple_of(2)) {
            return Err(config("repeated pilot segments need an even length"));
        }
        Ok(Self {
            preamble,
            parity: code.m() / 2,
            pilots,
            info: (code.k() - 2 * pilots) / 2,
            repeated,
        })
    }

    pub fn t(&self) -> usize {
        self.preamble + self.parity + self.pilots + self.info
    }

    /// Symbols carried by the codeword.
    pub fn coded_len(&self) -> usize {
        self.parity + self.pilots + self.info
    }

    pub fn parity_range(&self) -> std::ops::Range<usize> {
        self.preamble..self.preamble + self.parity
    }

    pub fn pilot_range(&self) -> std::ops::Range<usize> {
        let s = self.preamble + self.parity;
        s..s + self.pilots
    }

    pub fn info_range(&self) -> std::ops::Range<usize> {
        let s = self.preamble + self.parity + self.pilots;
        s..s + self.info
    }

    pub fn coded_range(&self) -> std::ops::Range<usize> {
        self.preamble..self.t()
    }

    pub fn data_bits(&self) -> usize {
        2 * self.info
    }

    pub fn pilot_bits(&self) -> usize {
        2 * self.pilots
    }
}

/// Sylvester Hadamard entry `(-1)^popcount(i & j)`.
pub fn hadamard_entry(i: usize, j: usize) -> f64 {
    if (i & j).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Pilot symbols of user `k` for a segment of `len` symbols. A repeated
/// segment is `[x_aux; x_aux]` with `x_aux` of length `len / 2`.
pub fn pilot_symbols(
    k: usize,
    users: usize,
    len: usize,
    repeated: bool,
    sigma_x2: f64,
) -> Result<Vec<C64>> {
    let order = hadamard_order(users);
    if k >= order {
        return Err(config(format!("user {k} exceeds Hadamard order {order}")));
    }
    let aux_len = if repeated { len / 2 } else { len };
    if aux_len % order != 0 {
        return Err(config(format!(
            "pilot segment {aux_len} is not a multiple of Hadamard order {order}"
        )));
    }
    let s_a = symbol(0, 0, sigma_x2);
    let aux: Vec<C64> = (0..aux_len)
        .map(|i| s_a * hadamard_entry(k, i % order))
        .collect();
    Ok(if repeated {
        [aux.clone(), aux].concat()
    } else {
        aux
    })
}

/// Codeword in `[message | parity]` order to wire order `[parity | message]`.
pub fn wire_from_code<T: Copy>(cw: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(cw.len());
    out.extend_from_slice(&cw[k..]);
    out.extend_from_slice(&cw[..k]);
    out
}

pub fn code_from_wire<T: Copy>(wire: &[T], k: usize) -> Vec<T> {
    let m = wire.len() - k;
    let mut out = Vec::with_capacity(wire.len());
    out.extend_from_slice(&wire[m..]);
    out.extend_from_slice(&wire[..m]);
    out
}

/// One transmitted block for all users.
#[derive(Clone, Debug)]
pub struct TxBlock {
    /// `K × T` symbols including any preamble.
    pub x: CMat,
    pub data: Vec<Vec<u8>>,
    pub codewords: Vec<Vec<u8>>,
}

#[derive(Clone, Debug)]
pub struct PacketBuilder<'a> {
    pub code: &'a LdpcCode,
    pub users: usize,
    pub sigma_x2: f64,
}

impl<'a> PacketBuilder<'a> {
    pub fn new(code: &'a LdpcCode, users: usize, sigma_x2: f64) -> Self {
        Self {
            code,
            users,
            sigma_x2,
        }
    }

    pub fn pilots(&self, k: usize, layout: &FrameLayout) -> Result<Vec<C64>> {
        pilot_symbols(k, self.users, layout.pilots, layout.repeated, self.sigma_x2)
    }

    pub fn preamble(&self, k: usize, layout: &FrameLayout) -> Result<Vec<C64>> {
        pilot_symbols(
            k,
            self.users,
            layout.preamble,
            layout.repeated,
            self.sigma_x2,
        )
    }

    /// Message-order pilot bits of user `k`.
    pub fn pilot_bits(&self, k: usize, layout: &FrameLayout) -> Result<Vec<u8>> {
        Ok(hard_bits(&self.pilots(k, layout)?))
    }

    /// Wire-order coded bits for a message.
    pub fn encode_wire(&self, msg: &[u8]) -> Result<Vec<u8>> {
        Ok(wire_from_code(&self.code.encode(msg)?, self.code.k()))
    }

    /// Symbols of user `k`: preamble followed by the
    /// modulated wire-order codeword.
    pub fn build_packet(
        &self,
        k: usize,
        data: &[u8],
        layout: &FrameLayout,
    ) -> Result<(Vec<C64>, Vec<u8>)> {
        if data.len() != layout.data_bits() {
            return Err(invalid(format!(
                "user {k}: {} data bits, layout carries {}",
                data.len(),
                layout.data_bits()
            )));
        }
        let mut msg = self.pilot_bits(k, layout)?;
        msg.extend_from_slice(data);
        let cw = self.code.encode(&msg)?;
        let mut syms = self.preamble(k, layout)?;
        syms.extend(qpsk_modulate(
            &wire_from_code(&cw, self.code.k()),
            self.sigma_x2,
        )?);
        Ok((syms, cw))
    }

    pub fn build_block(&self, data: Vec<Vec<u8>>, layout: &FrameLayout) -> Result<TxBlock> {
        if data.len() != self.users {
            return Err(invalid(format!(
                "{} data streams for {} users",
                data.len(),
                self.users
            )));
        }
        let mut x = CMat::zeros(self.users, layout.t());
        let mut codewords = Vec::with_capacity(self.users);
        for (k, d) in data.iter().enumerate() {
            let (syms, cw) = self.build_packet(k, d, layout)?;
            for (i, s) in syms.into_iter().enumerate() {
                x[(k, i)] = s;
            }
            codewords.push(cw);
        }
        Ok(TxBlock { x, data, codewords })
    }
}

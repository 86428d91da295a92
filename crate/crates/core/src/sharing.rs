//! Client-side Lagrange encryption of data blocks, per-client permutations,
//! and a modeled secure channel for the small secrets.

use std::fmt;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{EtaMultiset, FieldSpec};
use crate::inverse::{split_sub_blocks, sub_block_layout};
use crate::io::{cmat_from_row_major, cmat_row_major, read_framed, write_framed};
use crate::linalg::{real_part_checked, to_complex, CMat, Mat};
use crate::vandermonde::vandermonde_inverse;

/// Permutation of `0..γ` (σ on `1..γ`, shifted to 0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prp {
    pub perm: Vec<usize>,
    pub seed: u64,
}

/// Seeded Fisher–Yates over a ChaCha20 keystream. Not a cryptographic PRP.
pub fn generate_prp(gamma: usize, seed: u64) -> Result<Prp> {
    if gamma == 0 {
        return Err(Error::Parameter("gamma must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..gamma).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    Ok(Prp { perm, seed })
}

impl Prp {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn apply(&self, j: usize) -> usize {
        self.perm[j]
    }

    pub fn is_bijection(&self) -> bool {
        let mut s = self.perm.clone();
        s.sort_unstable();
        s.iter().enumerate().all(|(i, &v)| i == v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedBlock {
    pub client_id: usize,
    pub rows: usize,
    /// real column count of the block before sub-block padding
    pub cols: usize,
    pub sub_width: usize,
    pub gamma: usize,
    /// monomial coefficients of f(x), each rows × sub_width
    pub coeffs: Vec<CMat>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    client_id: usize,
    #[serde(rename = "N")]
    rows: usize,
    #[serde(rename = "Gamma")]
    sub_width: usize,
    gamma: usize,
    #[serde(rename = "T")]
    cols: usize,
}

impl EncryptedBlock {
    pub fn symbol_count(&self) -> usize {
        self.gamma * self.rows * self.sub_width
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = BlockHeader {
            client_id: self.client_id,
            rows: self.rows,
            sub_width: self.sub_width,
            gamma: self.gamma,
            cols: self.cols,
        };
        write_framed(&header, self.coeffs.iter().flat_map(cmat_row_major))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, vals): (BlockHeader, _) = read_framed(bytes)?;
        let per = h.rows * h.sub_width;
        if vals.len() != per * h.gamma {
            return Err(Error::Format(format!("expected {} symbols, got {}", per * h.gamma, vals.len())));
        }
        let coeffs = vals
            .chunks(per.max(1))
            .take(h.gamma)
            .map(|c| cmat_from_row_major(h.rows, h.sub_width, &c[..per]))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncryptedBlock {
            client_id: h.client_id,
            rows: h.rows,
            cols: h.cols,
            sub_width: h.sub_width,
            gamma: h.gamma,
            coeffs,
        })
    }
}

fn check_keys(gamma: usize, points: &[Complex64], eta: &EtaMultiset, prp: &Prp) -> Result<()> {
    if points.len() < gamma {
        return Err(Error::Protocol(format!("{} points for gamma={gamma}", points.len())));
    }
    if eta.values.len() != gamma || prp.len() != gamma {
        return Err(Error::Protocol(format!(
            "gamma={gamma} but eta has {} values and the permutation {} entries",
            eta.values.len(),
            prp.len()
        )));
    }
    Ok(())
}

/// `f(x) = Σ_j η_{σ(j)} A^j L_j(x)` over the first γ points, in monomial form.
pub fn encrypt_block(
    a: &Mat,
    points: &[Complex64],
    eta: &EtaMultiset,
    prp: &Prp,
    client_id: usize,
) -> Result<EncryptedBlock> {
    let gamma = prp.len();
    check_keys(gamma, points, eta, prp)?;
    let (subs, _) = split_sub_blocks(a, gamma);
    let sub_width = subs[0].ncols();
    // column j of V^{-1} holds the coefficients of L_j
    let lag = vandermonde_inverse(&points[..gamma])
        .map_err(|e| Error::Protocol(format!("interpolation points: {e}")))?;
    let blinded: Vec<CMat> = subs
        .iter()
        .enumerate()
        .map(|(j, s)| to_complex(s) * eta.values[prp.apply(j)])
        .collect();
    let coeffs = (0..gamma)
        .map(|m| {
            let mut acc = CMat::zeros(a.nrows(), sub_width);
            for (j, bj) in blinded.iter().enumerate() {
                acc += bj * lag[(m, j)];
            }
            acc
        })
        .collect();
    Ok(EncryptedBlock { client_id, rows: a.nrows(), cols: a.ncols(), sub_width, gamma, coeffs })
}

pub fn evaluate(enc: &EncryptedBlock, x: Complex64) -> CMat {
    let mut acc = CMat::zeros(enc.rows, enc.sub_width);
    for c in enc.coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Decryption without the real-valuedness check; wrong keys give garbage
/// rather than an error.
pub fn decrypt_block_complex(enc: &EncryptedBlock, prp: &Prp, eta: &EtaMultiset, points: &[Complex64]) -> Result<CMat> {
    check_keys(enc.gamma, points, eta, prp)?;
    let subs: Vec<CMat> = (0..enc.gamma)
        .map(|j| evaluate(enc, points[j]) / eta.values[prp.apply(j)])
        .collect();
    let layout = sub_block_layout(enc.cols, enc.gamma);
    let mut out = CMat::zeros(enc.rows, enc.cols);
    let mut offset = 0;
    for (sb, &real) in subs.iter().zip(&layout) {
        for c in 0..real {
            out.set_column(offset + c, &sb.column(c));
        }
        offset += real;
    }
    Ok(out)
}

/// `A^j = η_{σ(j)}^{-1} f(β_j)`, with the imaginary residue checked and dropped.
pub fn decrypt_block(enc: &EncryptedBlock, prp: &Prp, eta: &EtaMultiset, points: &[Complex64]) -> Result<Mat> {
    real_part_checked(&decrypt_block_complex(enc, prp, eta, points)?, 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Coordinator,
    Client(usize),
    Worker(usize),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Coordinator => write!(f, "coordinator"),
            Party::Client(i) => write!(f, "client{i}"),
            Party::Worker(i) => write!(f, "worker{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    FieldParameters { spec: FieldSpec, eta: EtaMultiset },
    Permutation { client_id: usize, prp: Prp },
}

impl Payload {
    /// β plus γ blinding values, or the γ permutation entries.
    pub fn symbol_count(&self) -> usize {
        match self {
            Payload::FieldParameters { eta, .. } => 1 + eta.values.len(),
            Payload::Permutation { prp, .. } => prp.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelKey(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub id: usize,
    pub sender: Party,
    pub recipient: Party,
    pub symbols: usize,
    pub bytes: usize,
    key: ChannelKey,
    payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum View<'a> {
    Plain(&'a Payload),
    Redacted,
}

impl Envelope {
    /// Contents are visible only to holders of the channel key.
    pub fn open(&self, key: Option<ChannelKey>) -> View<'_> {
        match key {
            Some(k) if k == self.key => View::Plain(&self.payload),
            _ => View::Redacted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub envelope_ids: Vec<usize>,
    pub recipients: Vec<Party>,
    pub symbols_each: usize,
    pub bytes_each: usize,
}

/// Stand-in for a public-key channel: delivers and logs, never encrypts.
#[derive(Debug, Clone)]
pub struct SecureChannel {
    key: ChannelKey,
    log: Vec<Envelope>,
}

impl SecureChannel {
    pub fn new(key: ChannelKey) -> Self {
        SecureChannel { key, log: Vec::new() }
    }

    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    pub fn deliveries_to(&self, who: Party) -> Vec<&Payload> {
        self.log.iter().filter(|e| e.recipient == who).map(|e| &e.payload).collect()
    }

    pub fn secure_broadcast(&mut self, sender: Party, recipients: &[Party], payload: Payload) -> Result<DeliveryRecord> {
        let bytes = serde_json::to_vec(&payload)?.len();
        let symbols = payload.symbol_count();
        let mut ids = Vec::with_capacity(recipients.len());
        for &r in recipients {
            let id = self.log.len();
            self.log.push(Envelope { id, sender, recipient: r, symbols, bytes, key: self.key, payload: payload.clone() });
            ids.push(id);
        }
        Ok(DeliveryRecord { envelope_ids: ids, recipients: recipients.to_vec(), symbols_each: symbols, bytes_each: bytes })
    }
}

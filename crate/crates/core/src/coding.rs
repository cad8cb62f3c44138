//! Rate-1/2, constraint-length-3 convolutional code with generators (5, 7)
//! octal, a row/column block interleaver and a soft-input Viterbi decoder.
//!
//! Generator convention: reading the octal generator in binary, the MSB taps
//! the oldest register bit `u[n-2]` and the LSB taps the current input
//! `u[n]`. Both generators are palindromes, so `5 = 1 + D^2` and
//! `7 = 1 + D + D^2`. For each input bit the encoder emits the `5` output
//! first, then the `7` output. Every block is terminated with two zero tail
//! bits, so `n` information bits become `2(n + 2)` coded bits.

use crate::constellation::LlrBlock;
use crate::error::{Error, Result};

pub const GENERATORS: [u8; 2] = [0o5, 0o7];
pub const CONSTRAINT_LENGTH: usize = 3;
pub const TAIL_BITS: usize = CONSTRAINT_LENGTH - 1;
pub const FREE_DISTANCE: usize = 5;
const STATES: usize = 1 << TAIL_BITS;

/// Output pair for `input` entering a register holding `state`
/// (`state = u[n-1] << 1 | u[n-2]`).
fn branch_output(state: usize, input: u8) -> [u8; 2] {
    // Register contents, MSB = oldest: u[n-2] u[n-1] u[n].
    let reg = ((state & 1) << 2) | ((state >> 1) << 1) | usize::from(input & 1);
    GENERATORS.map(|g| ((reg & usize::from(g)).count_ones() & 1) as u8)
}

fn next_state(state: usize, input: u8) -> usize {
    (usize::from(input & 1) << 1) | (state >> 1)
}

/// Number of coded bits produced for `n` information bits.
pub fn coded_len(n: usize) -> usize {
    2 * (n + TAIL_BITS)
}

pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(coded_len(bits.len()));
    let mut state = 0;
    for &b in bits.iter().chain(std::iter::repeat_n(&0u8, TAIL_BITS)) {
        out.extend_from_slice(&branch_output(state, b));
        state = next_state(state, b);
    }
    out
}

/// Maximum-likelihood terminated path for the branch metric
/// `sum((1 - 2c) * llr)`; returns the information bits.
pub fn viterbi_decode_soft(llrs: &[f64]) -> Result<Vec<u8>> {
    if !llrs.len().is_multiple_of(2) || llrs.len() < coded_len(0) {
        return Err(Error::size(
            "an even number of LLRs, at least 4",
            llrs.len(),
        ));
    }
    let steps = llrs.len() / 2;
    let mut metric = [f64::NEG_INFINITY; STATES];
    metric[0] = 0.0;
    // survivors[t][s] = (previous state, input bit)
    let mut survivors = vec![[(0usize, 0u8); STATES]; steps];
    for t in 0..steps {
        let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
        let mut next = [f64::NEG_INFINITY; STATES];
        let inputs: &[u8] = if t + TAIL_BITS >= steps {
            &[0]
        } else {
            &[0, 1]
        };
        for s in 0..STATES {
            if metric[s] == f64::NEG_INFINITY {
                continue;
            }
            for &b in inputs {
                let [c0, c1] = branch_output(s, b);
                let m = metric[s] + sign(c0) * l0 + sign(c1) * l1;
                let ns = next_state(s, b);
                if m > next[ns] {
                    next[ns] = m;
                    survivors[t][ns] = (s, b);
                }
            }
        }
        metric = next;
    }
    let mut state = 0;
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        let (prev, b) = survivors[t][state];
        bits[t] = b;
        state = prev;
    }
    bits.truncate(steps - TAIL_BITS);
    Ok(bits)
}

fn sign(c: u8) -> f64 {
    if c == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Block interleaver: written row by row, read column by column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterleaverSpec {
    pub rows: usize,
    pub cols: usize,
}

impl InterleaverSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param(
                "interleaver",
                "rows and columns must be positive",
            ));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Output position of input index `i`.
    pub fn position(&self, i: usize) -> usize {
        let (r, c) = (i / self.cols, i % self.cols);
        c * self.rows + r
    }

    pub fn interleave<T: Copy + Default>(&self, data: &[T]) -> Result<Vec<T>> {
        self.check(data.len())?;
        let mut out = vec![T::default(); data.len()];
        for (i, v) in data.iter().enumerate() {
            out[self.position(i)] = *v;
        }
        Ok(out)
    }

    pub fn deinterleave<T: Copy + Default>(&self, data: &[T]) -> Result<Vec<T>> {
        self.check(data.len())?;
        Ok((0..data.len()).map(|i| data[self.position(i)]).collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            Err(Error::size(
                format!("{} = {}x{}", self.len(), self.rows, self.cols),
                len,
            ))
        } else {
            Ok(())
        }
    }
}

/// Encoder plus interleaver for a fixed coded block length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bicm {
    pub interleaver: InterleaverSpec,
}

impl Bicm {
    /// `coded_block` must be a multiple of `rows` and of 2, with room for the tail.
    pub fn new(coded_block: usize, rows: usize) -> Result<Self> {
        if rows == 0
            || !coded_block.is_multiple_of(rows)
            || !coded_block.is_multiple_of(2)
            || coded_block < coded_len(1)
        {
            return Err(Error::param(
                "coded_block_bits",
                format!("{coded_block} must be an even multiple of interleaver_rows = {rows}"),
            ));
        }
        Ok(Self {
            interleaver: InterleaverSpec::new(rows, coded_block / rows)?,
        })
    }

    pub fn info_bits(&self) -> usize {
        self.interleaver.len() / 2 - TAIL_BITS
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.info_bits() {
            return Err(Error::size(
                format!("{} information bits", self.info_bits()),
                info.len(),
            ));
        }
        self.interleaver.interleave(&conv_encode(info))
    }

    pub fn decode(&self, llrs: &LlrBlock) -> Result<Vec<u8>> {
        viterbi_decode_soft(&self.interleaver.deinterleave(llrs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent shift-register model: taps listed as delays.
    fn shift_register_encode(bits: &[u8]) -> Vec<u8> {
        let taps: [&[usize]; 2] = [&[0, 2], &[0, 1, 2]];
        let mut u = bits.to_vec();
        u.extend([0, 0]);
        let at = |n: usize, d: usize| if n >= d { u[n - d] } else { 0 };
        let mut out = Vec::new();
        for n in 0..u.len() {
            for t in taps {
                out.push(t.iter().fold(0, |acc, &d| acc ^ at(n, d)));
            }
        }
        out
    }

    fn perfect_llrs(coded: &[u8]) -> Vec<f64> {
        coded
            .iter()
            .map(|&c| if c == 0 { 10.0 } else { -10.0 })
            .collect()
    }

    #[test]
    fn impulse_response_codeword() {
        assert_eq!(conv_encode(&[1]), vec![1, 1, 0, 1, 1, 1]);
        assert_eq!(shift_register_encode(&[1]), vec![1, 1, 0, 1, 1, 1]);
    }

    #[test]
    fn matches_shift_register_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [0, 1, 2, 7, 64] {
            let bits: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
            assert_eq!(conv_encode(&bits), shift_register_encode(&bits));
        }
    }

    #[test]
    fn zero_input_and_length_contract() {
        assert!(conv_encode(&[0; 20]).iter().all(|&b| b == 0));
        assert_eq!(conv_encode(&[1; 100]).len(), 204);
    }

    #[test]
    fn trellis_shape() {
        for s in 0..STATES {
            let targets: Vec<usize> = [0, 1].iter().map(|&b| next_state(s, b)).collect();
            assert_eq!(targets.len(), 2);
            assert_ne!(targets[0], targets[1]);
        }
    }

    #[test]
    fn free_distance_is_five() {
        // Minimum weight over terminated codewords of non-zero inputs.
        let mut dmin = usize::MAX;
        for x in 1u32..(1 << 10) {
            let bits: Vec<u8> = (0..10).map(|i| ((x >> i) & 1) as u8).collect();
            dmin = dmin.min(conv_encode(&bits).iter().filter(|&&b| b == 1).count());
        }
        assert_eq!(dmin, FREE_DISTANCE);
    }

    #[test]
    fn noiseless_round_trip_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for len in 1..=256 {
            let bits: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
            let llr = perfect_llrs(&conv_encode(&bits));
            assert_eq!(viterbi_decode_soft(&llr).unwrap(), bits);
        }
    }

    #[test]
    fn corrects_every_double_error_on_fifty_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let base: Vec<f64> = conv_encode(&bits)
            .iter()
            .map(|&c| if c == 0 { 1.0 } else { -1.0 })
            .collect();
        let n = base.len();
        for i in 0..n {
            let mut llr = base.clone();
            llr[i] = -llr[i];
            assert_eq!(viterbi_decode_soft(&llr).unwrap(), bits);
            for j in i + 1..n {
                let mut llr2 = llr.clone();
                llr2[j] = -llr2[j];
                assert_eq!(viterbi_decode_soft(&llr2).unwrap(), bits, "flips {i},{j}");
            }
        }
    }

    #[test]
    fn scaling_llrs_does_not_change_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let llr: Vec<f64> = (0..2 * 42).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = viterbi_decode_soft(&llr).unwrap();
        let scaled: Vec<f64> = llr.iter().map(|v| v * 7.3).collect();
        assert_eq!(viterbi_decode_soft(&scaled).unwrap(), a);
    }

    #[test]
    fn matches_exhaustive_ml_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=12 {
            for _ in 0..5 {
                let llr: Vec<f64> = (0..coded_len(n))
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect();
                let mut best = (f64::NEG_INFINITY, Vec::new());
                for x in 0u32..(1 << n) {
                    let bits: Vec<u8> = (0..n).map(|i| ((x >> i) & 1) as u8).collect();
                    let m: f64 = conv_encode(&bits)
                        .iter()
                        .zip(&llr)
                        .map(|(&c, l)| if c == 0 { *l } else { -l })
                        .sum();
                    if m > best.0 {
                        best = (m, bits);
                    }
                }
                assert_eq!(viterbi_decode_soft(&llr).unwrap(), best.1, "n={n}");
            }
        }
    }

    #[test]
    fn malformed_lengths() {
        assert!(viterbi_decode_soft(&[1.0; 5]).is_err());
        assert!(viterbi_decode_soft(&[1.0; 2]).is_err());
        assert_eq!(viterbi_decode_soft(&[1.0; 4]).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn interleaver_properties() {
        let id = InterleaverSpec::new(1, 16).unwrap();
        let data: Vec<u32> = (0..16).collect();
        assert_eq!(id.interleave(&data).unwrap(), data);
        let id = InterleaverSpec::new(16, 1).unwrap();
        assert_eq!(id.interleave(&data).unwrap(), data);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = InterleaverSpec::new(32, 64).unwrap();
        let bits: Vec<u8> = (0..2048).map(|_| rng.random_range(0..2)).collect();
        let il = spec.interleave(&bits).unwrap();
        assert_eq!(spec.deinterleave(&il).unwrap(), bits);
        assert!(spec.interleave(&bits[..100]).is_err());

        // Adjacent inputs within a row land exactly `rows` apart; across a
        // row boundary the gap is larger still.
        for i in 0..2047 {
            let gap = spec.position(i).abs_diff(spec.position(i + 1));
            assert!(gap >= 32, "{i}: {gap}");
        }
        let mut seen = vec![false; 2048];
        for i in 0..2048 {
            seen[spec.position(i)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn bicm_block_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bicm = Bicm::new(2048, 32).unwrap();
        assert_eq!(bicm.info_bits(), 1022);
        let info: Vec<u8> = (0..1022).map(|_| rng.random_range(0..2)).collect();
        let coded = bicm.encode(&info).unwrap();
        assert_eq!(bicm.decode(&perfect_llrs(&coded)).unwrap(), info);
        assert!(Bicm::new(2047, 32).is_err());
    }
}

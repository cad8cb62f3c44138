use num_complex::Complex64;
use proptest::collection::vec;
use proptest::prelude::*;
use rustfft::FftPlanner;
use vlcsim_core::aco::{freq_response_from_cir, AcoFrameConfig, AcoModem, AcoScheme};
use vlcsim_core::analysis::papr;
use vlcsim_core::channel::convolve;
use vlcsim_core::coding::{conv_encode, viterbi_decode_soft, InterleaverSpec};

fn spectrum(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn symbols(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn block() -> impl Strategy<Value = (usize, Vec<Complex64>)> {
    (0u32..6).prop_flat_map(|p| {
        let n = 1usize << p;
        (Just(n), symbols(n))
    })
}

proptest! {
    #[test]
    fn clipping_halves_every_odd_bin((n, syms) in block()) {
        let modem = AcoModem::new(AcoFrameConfig::new(n, 0, AcoScheme::Ofdm).unwrap());
        let x = modem.unclipped(&syms).unwrap();
        let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let (xu, xc) = (spectrum(&x), spectrum(&clipped));
        for k in (1..4 * n).step_by(2) {
            prop_assert!((xc[k] - 0.5 * xu[k]).norm() <= 1e-10 * (1.0 + xu[k].norm()));
        }
    }

    #[test]
    fn cyclic_prefix_absorbs_short_channels(
        syms in symbols(16),
        taps in vec(0.05f64..1.0, 1..=9),
        scfde in any::<bool>(),
    ) {
        let scheme = if scfde { AcoScheme::Scfde } else { AcoScheme::Ofdm };
        let cfg = AcoFrameConfig::new(16, 8, scheme).unwrap();
        let modem = AcoModem::new(cfg);
        let h = freq_response_from_cir(&taps, cfg.fft_size()).unwrap();
        let rx = convolve(&modem.modulate(&syms).unwrap().samples, &taps);
        let out = modem.demodulate(&rx[..cfg.frame_len()], &h).unwrap();
        for (a, b) in out.iter().zip(&syms) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn interleaver_round_trips(rows in 1usize..40, cols in 1usize..40, seed in any::<u64>()) {
        let spec = InterleaverSpec::new(rows, cols).unwrap();
        let data: Vec<u64> = (0..spec.len() as u64).map(|i| i.wrapping_mul(seed | 1)).collect();
        let mixed = spec.interleave(&data).unwrap();
        prop_assert_eq!(spec.deinterleave(&mixed).unwrap(), data);
    }

    #[test]
    fn perfect_llrs_decode_to_the_input(bits in vec(0u8..2, 1..=256), scale in 0.1f64..100.0) {
        let llrs: Vec<f64> = conv_encode(&bits).iter().map(|&c| if c == 0 { scale } else { -scale }).collect();
        prop_assert_eq!(viterbi_decode_soft(&llrs).unwrap(), bits);
    }

    #[test]
    fn papr_is_at_least_one(x in vec(-10.0f64..10.0, 1..200)) {
        prop_assume!(x.iter().any(|&v| v != 0.0));
        prop_assert!(papr(&x).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn convolution_preserves_mass(x in vec(0.0f64..1.0, 1..50), h in vec(0.0f64..1.0, 1..20)) {
        let y = convolve(&x, &h);
        prop_assert_eq!(y.len(), x.len() + h.len() - 1);
        let expected = x.iter().sum::<f64>() * h.iter().sum::<f64>();
        prop_assert!((y.iter().sum::<f64>() - expected).abs() <= 1e-9 * (1.0 + expected));
    }
}

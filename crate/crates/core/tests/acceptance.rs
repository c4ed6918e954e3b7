//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use pcsqam::channel::{apply_cd, cd_compensate, gn_link_snr, iq_impair, optimal_launch, phase_noise, ImpairmentConfig, LinkConfig};
use pcsqam::constellation::{build_qam, shaped_qam, solve_entropy, ShapedConstellation};
use pcsqam::metrics::spectral_efficiency;
use pcsqam::rxdsp::{bcjr_detect, soft_demap, BcjrOptions, PartialResponseModel};
use pcsqam::scenario::{run_scenario, simulate_awgn_air, Detector, FormatConfig, ScenarioConfig};
use pcsqam::shaping::{ccdm_decode, ccdm_encode, fec_margin, rate_budget, Composition};
use pcsqam::signal::SignalBlock;
use pcsqam::txdsp::{dac_model, DacConfig, RrcFilter};
use pcsqam::{rng_from_seed, SimRng};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut SimRng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

fn random_symbols(n: usize, order: usize, rng: &mut SimRng) -> (Vec<usize>, Vec<Complex64>, ShapedConstellation) {
    let shaped = ShapedConstellation::uniform(&build_qam(order).unwrap());
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..order)).collect();
    let x = idx.iter().map(|&i| shaped.points()[i]).collect();
    (idx, x, shaped)
}

fn random_block(n: usize, seed: u64) -> SignalBlock {
    let mut rng = rng_from_seed(seed);
    let (_, x, _) = random_symbols(n, 16, &mut rng);
    let (_, y, _) = random_symbols(n, 16, &mut rng);
    RrcFilter::default().shape(&x, &y, 130e9).unwrap()
}

fn rate_arithmetic() -> Outcome {
    let b = rate_budget(130e9, 8.44, 10, 0.137, None).map_err(|e| e.to_string())?;
    let rel = (b.net_tbps - 1.88).abs() / 1.88;
    check(
        (b.net_tbps - 1.881).abs() < 5e-4 && rel < 0.005,
        format!("net {:.4} Tb/s, {:.3}% from 1.88", b.net_tbps, 100.0 * rel),
    )
}

fn spectral_efficiency_check() -> Outcome {
    let se = spectral_efficiency(56.51, 34, 150.0).map_err(|e| e.to_string())?;
    check((se - 11.08).abs() <= 0.01, format!("{se:.4} bit/s/Hz"))
}

fn shaping() -> Outcome {
    let pairs = [(256, 7.9), (324, 8.14), (400, 8.44), (484, 8.62), (576, 8.67)];
    let mut worst: f64 = 0.0;
    for (order, h) in pairs {
        let c = build_qam(order).map_err(|e| e.to_string())?;
        let nu = solve_entropy(&c, h, 1e-9).map_err(|e| e.to_string())?;
        worst = worst.max((c.entropy_at(nu) - h).abs());
        let hi = solve_entropy(&c, 3.0, 1e-9).map_err(|e| e.to_string())?;
        let grid: Vec<f64> = (0..50).map(|k| c.entropy_at(hi * k as f64 / 49.0)).collect();
        if grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(format!("entropy not strictly decreasing for {order}QAM"));
        }
    }
    check(worst <= 1e-6, format!("five formats, max |H - target| = {worst:.2e}, 50-point grids monotone"))
}

fn compositions(levels: usize, n: usize) -> Vec<Vec<usize>> {
    if levels == 1 {
        return vec![vec![n]];
    }
    (0..=n)
        .flat_map(|first| {
            compositions(levels - 1, n - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn ccdm_roundtrip(bits: &[u8], comp: &Composition) -> Result<(), String> {
    let seq = ccdm_encode(bits, comp).map_err(|e| e.to_string())?;
    let mut counts = vec![0; comp.levels()];
    seq.iter().for_each(|&s| counts[s] += 1);
    if counts != comp.counts() {
        return Err(format!("composition violated for {:?}", comp.counts()));
    }
    if ccdm_decode(&seq, comp).map_err(|e| e.to_string())? != bits {
        return Err(format!("roundtrip failed for {:?}", comp.counts()));
    }
    Ok(())
}

fn ccdm() -> Outcome {
    let mut exhaustive = 0usize;
    for (levels, max_n) in [(2, 8), (3, 8), (4, 8), (8, 5)] {
        for n in 1..=max_n {
            for counts in compositions(levels, n) {
                let comp = Composition::new(counts);
                let k = comp.input_bits();
                for word in 0..(1u64 << k) {
                    let bits: Vec<u8> = (0..k).map(|i| ((word >> (k - 1 - i)) & 1) as u8).collect();
                    ccdm_roundtrip(&bits, &comp)?;
                    exhaustive += 1;
                }
            }
        }
    }
    let mut rng = rng_from_seed(4);
    for _ in 0..10_000 {
        let mut counts = vec![0usize; 8];
        let w: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        for _ in 0..100 {
            let mut u = rng.random::<f64>() * total;
            let level = w.iter().position(|&p| {
                u -= p;
                u < 0.0
            });
            counts[level.unwrap_or(7)] += 1;
        }
        let comp = Composition::new(counts);
        let bits: Vec<u8> = (0..comp.input_bits()).map(|_| u8::from(rng.random::<bool>())).collect();
        ccdm_roundtrip(&bits, &comp)?;
    }
    Ok(format!("{exhaustive} exhaustive words (N <= 8), 10^4 random roundtrips at N = 100"))
}

/// Exact MAP posteriors by enumerating every QPSK sequence.
fn brute_force_posteriors(z: &[Complex64], alpha: f64, sigma2: f64, shaped: &ShapedConstellation) -> Vec<f64> {
    let n = z.len();
    let order = shaped.order();
    let pts = shaped.points();
    let total = order.pow(n as u32);
    let mut logs = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let mut prev = Complex64::new(0.0, 0.0);
        let mut l = 0.0;
        for &zk in z {
            let s = c % order;
            c /= order;
            l += shaped.probs()[s].ln() - (zk - pts[s] - alpha * prev).norm_sqr() / sigma2;
            prev = pts[s];
        }
        logs.push(l);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut post = vec![0.0; n * order];
    let mut norm = 0.0;
    for (code, l) in logs.iter().enumerate() {
        let w = (l - max).exp();
        norm += w;
        let mut c = code;
        for k in 0..n {
            post[k * order + c % order] += w;
            c /= order;
        }
    }
    post.iter_mut().for_each(|p| *p /= norm);
    post
}

fn bcjr_oracle() -> Outcome {
    let mut rng = rng_from_seed(5);
    let mut worst: f64 = 0.0;
    for alpha in [0.2, 0.4] {
        for _ in 0..100 {
            let sigma2 = 0.3;
            let (_, x, shaped) = random_symbols(6, 4, &mut rng);
            let z: Vec<Complex64> = (0..6)
                .map(|k| x[k] + if k > 0 { alpha * x[k - 1] } else { Complex64::new(0.0, 0.0) } + gaussian(&mut rng, sigma2))
                .collect();
            let model = PartialResponseModel { alpha, sigma2 };
            let out = bcjr_detect(&z, &model, &shaped, BcjrOptions::default()).map_err(|e| e.to_string())?;
            let oracle = brute_force_posteriors(&z, alpha, sigma2, &shaped);
            for (a, b) in out.posteriors.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-9, format!("max posterior deviation {worst:.2e} over 200 realizations"))
}

fn bcjr_degeneracy() -> Outcome {
    let mut rng = rng_from_seed(6);
    let sigma2 = 0.05;
    let (_, x, shaped) = random_symbols(10_000, 16, &mut rng);
    let z: Vec<Complex64> = x.iter().map(|&v| v + gaussian(&mut rng, sigma2)).collect();
    let model = PartialResponseModel { alpha: 0.0, sigma2 };
    let out = bcjr_detect(&z, &model, &shaped, BcjrOptions::default()).map_err(|e| e.to_string())?;
    let reference = soft_demap(&z, &shaped, sigma2).map_err(|e| e.to_string())?;
    let worst = out
        .llrs
        .llrs()
        .iter()
        .zip(reference.llrs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-9, format!("max LLR deviation {worst:.2e} on 10^4 16QAM symbols"))
}

/// BPSK BMD rate by trapezoidal integration; QPSK carries two such bits.
fn qpsk_bmd_oracle(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    let var = 1.0 / snr;
    let sd = var.sqrt();
    let (lo, hi, steps) = (1.0 - 14.0 * sd, 1.0 + 14.0 * sd, 40_000);
    let h = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let y = lo + i as f64 * h;
        let pdf = (-(y - 1.0).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        let loss = (-2.0 * y / var).exp().ln_1p() / std::f64::consts::LN_2;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += w * pdf * loss;
    }
    2.0 * (1.0 - acc * h)
}

fn air_estimator() -> Outcome {
    let shaped = ShapedConstellation::uniform(&build_qam(4).unwrap());
    let mut detail = Vec::new();
    let mut ok = true;
    for snr in [0.0, 5.0, 10.0] {
        let mut rng = rng_from_seed(7);
        let (air, _) = simulate_awgn_air(&shaped, snr, 1_000_000, &mut rng).map_err(|e| e.to_string())?;
        let oracle = qpsk_bmd_oracle(snr);
        ok &= (air - oracle).abs() <= 0.02;
        detail.push(format!("{snr} dB: {air:.4} vs {oracle:.4}"));
    }
    check(ok, detail.join(", "))
}

fn preq_benefit() -> Outcome {
    let mut cfg = ScenarioConfig {
        seed: Some(8),
        symbols: 65_536,
        snr_db: 15.0,
        format: FormatConfig {
            order: 16,
            entropy_bits: None,
            nu: None,
        },
        ..ScenarioConfig::default()
    };
    cfg.tx.dac = Some(DacConfig {
        sample_rate: 2.0 * 130e9,
        enob: None,
        resolution_bits: 8,
        bandwidth_3db: 0.3 * 130e9,
        sinc_compensation: false,
    });
    cfg.dsp.carrier_recovery = false;
    let air = |detector| -> Result<f64, String> {
        let mut c = cfg.clone();
        c.dsp.detector = detector;
        let r = run_scenario(&c).map_err(|e| e.to_string())?;
        let rec = &r.records[0];
        rec.report
            .as_ref()
            .map(|rep| rep.air_bitwise)
            .ok_or_else(|| format!("{:?}: {:?}", rec.failed_stage, rec.error))
    };
    let memoryless = air(Detector::Memoryless)?;
    let bcjr = air(Detector::Bcjr)?;
    check(
        bcjr - memoryless >= 0.05,
        format!("PREQ+BCJR {bcjr:.4} vs memoryless {memoryless:.4} bit/symbol"),
    )
}

fn margin_ordering() -> Outcome {
    let snr_db = 21.0;
    let rs = 130e9;
    let needed = 1.6e12 / (2.0 * rs);
    let s256 = shaped_qam(256, 7.9).map_err(|e| e.to_string())?;
    let s400 = shaped_qam(400, 8.44).map_err(|e| e.to_string())?;
    let margin = |s: &ShapedConstellation, seed: u64| -> Result<(f64, f64), String> {
        let mut rng = rng_from_seed(seed);
        let (air, _) = simulate_awgn_air(s, snr_db, 50_000, &mut rng).map_err(|e| e.to_string())?;
        let to_tbps = |bits: f64| 2.0 * rs * bits / 1e12;
        let net = rate_budget(rs, s.entropy(), s.m(), 0.137, None).map_err(|e| e.to_string())?.net_tbps;
        Ok((air, fec_margin(to_tbps(air), net, s.m())))
    };
    let mut wins = 0;
    let mut min_air = f64::INFINITY;
    for seed in 0..20 {
        let (a256, m256) = margin(&s256, 100 + seed)?;
        let (a400, m400) = margin(&s400, 100 + seed)?;
        min_air = min_air.min(a256).min(a400);
        wins += usize::from(m256 > m400);
    }
    check(
        wins >= 19 && min_air >= needed,
        format!("256QAM margin larger in {wins}/20 runs at {snr_db} dB, min AIR {min_air:.3} >= {needed:.3} bit"),
    )
}

fn gn_link() -> Outcome {
    let mut detail = Vec::new();
    for spans in 1..=5 {
        let link = LinkConfig::field_61km(spans);
        let powers: Vec<f64> = (0..=1400).map(|i| i as f64 * 0.01).collect();
        let snr: Vec<f64> = powers.iter().map(|&p| gn_link_snr(&link, p).snr_db).collect();
        if snr.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] > 1e-12) {
            return Err(format!("{spans} spans: SNR curve not concave"));
        }
        let best = (0..snr.len()).fold(0, |b, i| if snr[i] > snr[b] { i } else { b });
        let opt = optimal_launch(&link).map_err(|e| e.to_string())?;
        if (powers[best] - 7.0).abs() > 0.5 || (powers[best] - opt).abs() > 0.05 {
            return Err(format!("{spans} spans: grid {:.2} dBm, analytic {opt:.3} dBm", powers[best]));
        }
        detail.push(format!("{:.2}", powers[best]));
    }
    Ok(format!("argmax over 1-5 spans at {} dBm", detail.join("/")))
}

fn linear_identities() -> Outcome {
    let b = random_block(8192, 9);
    let link = LinkConfig::field_61km(10);
    let back = cd_compensate(&apply_cd(&b, &link), &link);
    let err: f64 = b.pols.iter().zip(&back.pols).flat_map(|(p, q)| p.iter().zip(q)).map(|(a, c)| (a - c).norm_sqr()).sum();
    let evm_db = 10.0 * (err / (b.power() * b.len() as f64)).log10();
    if evm_db >= -40.0 {
        return Err(format!("CD roundtrip EVM {evm_db:.1} dB"));
    }
    let mut rng = rng_from_seed(10);
    if iq_impair(&b, &ImpairmentConfig::default()) != b || phase_noise(&b, 0.0, &mut rng).map_err(|e| e.to_string())?.0 != b {
        return Err("zero impairments changed the signal".into());
    }
    let dac = dac_model(&b, &DacConfig::ideal(b.sample_rate), &mut rng).map_err(|e| e.to_string())?;
    let worst = b.pols.iter().zip(&dac.pols).flat_map(|(p, q)| p.iter().zip(q)).map(|(a, c)| (a - c).norm()).fold(0.0, f64::max);
    check(worst <= 1e-6, format!("CD EVM {evm_db:.1} dB, zero impairments exact, ideal DAC max error {worst:.1e}"))
}

fn volterra_efficacy() -> Outcome {
    let mut cfg = ScenarioConfig {
        seed: Some(12),
        symbols: 100_000,
        frame_symbols: 2000,
        snr_db: 60.0,
        format: FormatConfig {
            order: 16,
            entropy_bits: None,
            nu: None,
        },
        ..ScenarioConfig::default()
    };
    cfg.tx.a3 = -0.05;
    cfg.dsp.volterra = true;
    cfg.dsp.mimo = false;
    cfg.dsp.carrier_recovery = false;
    cfg.dsp.symbolwise_air = false;
    let snr = |c: &ScenarioConfig| -> Result<f64, String> {
        let r = run_scenario(c).map_err(|e| e.to_string())?;
        let rec = &r.records[0];
        rec.report.as_ref().map(|rep| rep.snr_db).ok_or_else(|| format!("{:?}", rec.error))
    };
    let full = snr(&cfg)?;
    let mut lin = cfg.clone();
    lin.dsp.volterra_config = cfg.dsp.volterra_config.linear();
    let linear = snr(&lin)?;
    check(
        full - linear >= 5.0,
        format!("MSE improvement {:.2} dB (SNR {full:.2} vs {linear:.2} dB, 10^5 symbols)", full - linear),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ScenarioConfig {
        seed: Some(13),
        symbols: 8192,
        format: FormatConfig {
            order: 64,
            entropy_bits: Some(5.5),
            nu: None,
        },
        ..ScenarioConfig::default()
    };
    cfg.sweep.axis = Some(pcsqam::scenario::SweepAxis::Entropy);
    cfg.sweep.values = vec![5.0, 5.5, 5.9];
    let a = run_scenario(&cfg).map_err(|e| e.to_string())?.to_csv();
    let b = run_scenario(&cfg).map_err(|e| e.to_string())?.to_csv();
    check(a == b, format!("{} CSV bytes identical across reruns", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("rate arithmetic", rate_arithmetic),
        ("spectral efficiency", spectral_efficiency_check),
        ("shaping", shaping),
        ("CCDM", ccdm),
        ("BCJR oracle", bcjr_oracle),
        ("BCJR degeneracy", bcjr_degeneracy),
        ("AIR estimator", air_estimator),
        ("PREQ benefit", preq_benefit),
        ("margin ordering", margin_ordering),
        ("GN link", gn_link),
        ("linear-chain identities", linear_identities),
        ("Volterra efficacy", volterra_efficacy),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d} ({secs:.1} s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

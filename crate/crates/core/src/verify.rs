//! Self-contained invariant suites: analytic gradients against central
//! differences, μ-law algebra, filter and wavelet behavior on synthetic
//! signals, and the segmentation count formula.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{central_difference, GradCheck, Parameter, Tape, Tensor, Var};
use crate::dataset::{segment_count, segment_starts, segment_trial, SegmentationConfig};
use crate::dsp::{
    apply_filter, mu_law, mu_law_inverse, wavelet_denoise, DenoiseSpec, FilterSpec, SignalTrial,
    DEFAULT_MU,
};
use crate::model::{forward, init_weights, Mode, ModelConfig, ModelWeights, Positional};

pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Mulaw,
    Dsp,
    Segmentation,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradcheck" => Ok(Self::Gradcheck),
            "mulaw" => Ok(Self::Mulaw),
            "dsp" => Ok(Self::Dsp),
            "segmentation" => Ok(Self::Segmentation),
            "all" => Ok(Self::All),
            other => Err(format!(
                "unknown suite {other:?}; expected gradcheck, mulaw, dsp, segmentation or all"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: &'static str) -> Self {
        Self {
            suite,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}/{}: {}", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn run(suite: Suite) -> Vec<SuiteReport> {
    match suite {
        Suite::Gradcheck => vec![gradcheck_suite()],
        Suite::Mulaw => vec![mulaw_suite()],
        Suite::Dsp => vec![dsp_suite()],
        Suite::Segmentation => vec![segmentation_suite()],
        Suite::All => vec![
            gradcheck_suite(),
            mulaw_suite(),
            dsp_suite(),
            segmentation_suite(),
        ],
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .expect("shape matches data")
}

/// Gradient of `sum(r ⊙ f(x))` for a fixed random projection `r`, worst
/// case over five random inputs.
fn check_op(name: &str, shape: &[usize], f: impl Fn(&mut Tape<f64>, Var) -> Var) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let mut worst: Option<GradCheck> = None;
    for _ in 0..5 {
        let x = random(shape, &mut rng);
        let mut probe = Tape::new();
        let input = probe.constant(x.clone());
        let out = f(&mut probe, input);
        let r = random(probe.shape(out), &mut rng);
        let build = |tape: &mut Tape<f64>, xv: Var| {
            let out = f(tape, xv);
            let rv = tape.constant(r.clone());
            let prod = tape.mul(out, rv).expect("projection shape matches");
            tape.sum(prod)
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let loss = build(&mut tape, xv);
        let grads = tape.backward(loss).expect("scalar loss");
        let analytic = grads
            .get(xv)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; x.numel()]);
        let numeric = central_difference(
            |data| {
                let mut tape = Tape::new();
                let xv = tape.constant(Tensor::from_vec(shape, data.to_vec()).expect("shape"));
                let loss = build(&mut tape, xv);
                tape.value(loss).data()[0]
            },
            x.data(),
        );
        let check = GradCheck::new(name, &analytic, &numeric, GRAD_TOLERANCE);
        if worst.as_ref().is_none_or(|w| check.max_rel_err > w.max_rel_err) {
            worst = Some(check);
        }
    }
    worst.expect("at least one trial")
}

fn op_checks() -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = random(&[4, 3], &mut rng);
    let lhs = random(&[2, 5, 4], &mut rng);
    let rhs = random(&[2, 4, 3], &mut rng);
    let other = random(&[4, 5], &mut rng);
    let bias = random(&[3], &mut rng);
    let base = random(&[4, 2, 3], &mut rng);
    let gain = random(&[8], &mut rng);
    let shift = random(&[8], &mut rng);
    let rows = random(&[3, 8], &mut rng);
    let labels = [0usize, 5, 2, 3];
    let eps = crate::model::LN_EPS;
    let c = |t: &mut Tape<f64>, v: &Tensor<f64>| t.constant(v.clone());
    let mut out = vec![
        check_op("matmul shared rhs (lhs)", &[2, 5, 4], |t, x| {
            let r = c(t, &w);
            t.matmul(x, r).unwrap()
        }),
        check_op("matmul shared rhs (rhs)", &[4, 3], |t, x| {
            let l = c(t, &lhs);
            t.matmul(l, x).unwrap()
        }),
        check_op("batched matmul (lhs)", &[2, 5, 4], |t, x| {
            let r = c(t, &rhs);
            t.matmul(x, r).unwrap()
        }),
        check_op("batched matmul (rhs)", &[2, 4, 3], |t, x| {
            let l = c(t, &lhs);
            t.matmul(l, x).unwrap()
        }),
        check_op("add", &[4, 5], |t, x| {
            let o = c(t, &other);
            t.add(x, o).unwrap()
        }),
        check_op("add_broadcast (base)", &[4, 2, 3], |t, x| {
            let b = c(t, &bias);
            t.add_broadcast(x, b).unwrap()
        }),
        check_op("add_broadcast (bias)", &[3], |t, b| {
            let a = c(t, &base);
            t.add_broadcast(a, b).unwrap()
        }),
        check_op("mul", &[4, 5], |t, x| {
            let o = c(t, &other);
            t.mul(x, o).unwrap()
        }),
        check_op("mul (self)", &[2, 3], |t, x| t.mul(x, x).unwrap()),
        check_op("scale", &[4, 5], |t, x| t.scale(x, -2.5)),
        check_op("sum", &[4, 5], |t, x| t.sum(x)),
        check_op("mean", &[4, 5], |t, x| t.mean(x)),
        check_op("reshape", &[4, 5], |t, x| t.reshape(x, &[2, 10]).unwrap()),
        check_op("transpose", &[2, 4, 5], |t, x| t.transpose(x).unwrap()),
        check_op("concat", &[2, 3], |t, x| {
            let y = t.scale(x, 3.0);
            t.concat(&[x, y, x], 1).unwrap()
        }),
        check_op("slice", &[3, 6, 2], |t, x| t.slice(x, 1, 2, 3).unwrap()),
        check_op("expand", &[3, 2], |t, x| t.expand(x, 4).unwrap()),
        check_op("gelu", &[4, 5], |t, x| t.gelu(x)),
        check_op("dropout (fixed mask)", &[6, 7], |t, x| {
            t.dropout(x, 0.3, true, 99).unwrap()
        }),
        check_op("layer_norm (x)", &[3, 8], |t, x| {
            let (g, b) = (c(t, &gain), c(t, &shift));
            t.layer_norm(x, g, b, eps).unwrap()
        }),
        check_op("layer_norm (gain)", &[8], |t, g| {
            let (x, b) = (c(t, &rows), c(t, &shift));
            t.layer_norm(x, g, b, eps).unwrap()
        }),
        check_op("layer_norm (bias)", &[8], |t, b| {
            let (x, g) = (c(t, &rows), c(t, &gain));
            t.layer_norm(x, g, b, eps).unwrap()
        }),
        check_op("cross_entropy", &[4, 6], |t, x| t.cross_entropy(x, &labels).unwrap()),
    ];
    for axis in 0..3 {
        out.push(check_op(&format!("softmax axis {axis}"), &[2, 3, 4], move |t, x| {
            t.softmax(x, axis).unwrap()
        }));
    }
    out
}

/// Small configuration used by the full-model gradient check.
pub fn tiny_config(positional: Positional) -> ModelConfig {
    ModelConfig {
        channels: 2,
        window: 8,
        embed_dim: 8,
        num_layers: 2,
        num_heads: 2,
        encoder_hidden: 16,
        head_hidden: [8, 4],
        num_classes: 3,
        dropout_p: 0.0,
        positional,
        encoder_mlp_layers: 1,
    }
}

fn rebuild(template: &ModelWeights<f64>, flat: &[f64]) -> ModelWeights<f64> {
    let mut offset = 0;
    let params = template
        .params
        .iter()
        .map(|p| {
            let n = p.value.numel();
            let t = Tensor::from_vec(p.value.shape(), flat[offset..offset + n].to_vec())
                .expect("shape matches");
            offset += n;
            Parameter::new(p.name.clone(), t)
        })
        .collect();
    ModelWeights::from_params(template.config.clone(), params).expect("same layout")
}

/// Cross-entropy gradient of the whole model with respect to every
/// parameter, at 64-bit.
pub fn model_check(positional: Positional) -> GradCheck {
    let config = tiny_config(positional);
    let mut w: ModelWeights<f64> = init_weights(&config, 21).expect("valid config");
    // larger weights so every path contributes measurably
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in w.params.iter_mut() {
        p.value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    let x = random(&[3, config.channels, config.window], &mut rng);
    let labels = [2usize, 0, 1];
    let loss_of = |w: &ModelWeights<f64>| {
        let mut tape = Tape::new();
        let out = forward(&mut tape, w, &x, Mode::inference()).expect("valid input");
        let loss = tape.cross_entropy(out.logits, &labels).expect("valid labels");
        (tape, out.vars.all, loss)
    };
    let (tape, vars, loss) = loss_of(&w);
    let grads = tape.backward(loss).expect("scalar loss");
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|&v| grads.get(v).expect("every parameter is used").data().to_vec())
        .collect();
    let flat: Vec<f64> = w.params.iter().flat_map(|p| p.value.data().to_vec()).collect();
    let numeric = central_difference(
        |f| {
            let (tape, _, loss) = loss_of(&rebuild(&w, f));
            tape.value(loss).data()[0]
        },
        &flat,
    );
    GradCheck::new(
        format!("full model ({positional:?} positions)"),
        &analytic,
        &numeric,
        GRAD_TOLERANCE,
    )
}

pub fn gradcheck_suite() -> SuiteReport {
    let mut report = SuiteReport::new("gradcheck");
    let checks = op_checks()
        .into_iter()
        .chain([model_check(Positional::Learned), model_check(Positional::Sinusoidal)]);
    for c in checks {
        let detail = format!(
            "max rel err {:.2e} over {} elements (tol {:.0e})",
            c.max_rel_err, c.elements, c.tolerance
        );
        report.push(c.name.clone(), c.passed(), detail);
    }
    report
}

pub const MU_GRID: usize = 100_000;
pub const MU_ROUND_TRIP_TOL: f64 = 1e-9;

pub fn mulaw_suite() -> SuiteReport {
    let mut report = SuiteReport::new("mulaw");
    let mu = DEFAULT_MU;
    let grid: Vec<f64> = (0..=MU_GRID)
        .map(|i| -1.0 + 2.0 * i as f64 / MU_GRID as f64)
        .collect();
    let y: Vec<f64> = grid.iter().map(|&x| mu_law(x, mu).unwrap()).collect();
    let odd = grid
        .iter()
        .zip(&y)
        .map(|(&x, &v)| (mu_law(-x, mu).unwrap() + v).abs())
        .fold(0.0, f64::max);
    report.push("odd symmetry", odd == 0.0, format!("max |F(-x) + F(x)| = {odd:e}"));
    let monotone = y.windows(2).all(|w| w[1] > w[0]);
    report.push("strictly increasing", monotone, format!("{} grid points", grid.len()));
    let ends = [mu_law(-1.0, mu).unwrap(), mu_law(0.0, mu).unwrap(), mu_law(1.0, mu).unwrap()];
    report.push(
        "endpoints",
        ends == [-1.0, 0.0, 1.0],
        format!("F(-1), F(0), F(1) = {ends:?}"),
    );
    let round_trip = grid
        .iter()
        .zip(&y)
        .map(|(&x, &v)| (mu_law_inverse(v, mu).unwrap() - x).abs())
        .fold(0.0, f64::max);
    report.push(
        "inverse round trip",
        round_trip < MU_ROUND_TRIP_TOL,
        format!("max error {round_trip:.2e} (tol {MU_ROUND_TRIP_TOL:.0e})"),
    );
    // closed form at a point: ln(1 + 255·0.5)/ln(256)
    let half = mu_law(0.5, mu).unwrap();
    let expect = (1.0f64 + 127.5).ln() / 256f64.ln();
    report.push(
        "closed form",
        (half - expect).abs() < 1e-12,
        format!("F(0.5) = {half:.12}"),
    );
    report.push(
        "domain",
        mu_law(1.5, mu).is_err() && mu_law(0.5, 0.0).is_err(),
        "rejects |x| > 1 and μ ≤ 0",
    );
    report
}

fn sine(freq: f64, fs: f64, seconds: f64) -> SignalTrial {
    let n = (fs * seconds) as usize;
    let x = (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect();
    SignalTrial::new(x, 1, fs, "verify", 1, 0).expect("finite samples")
}

/// Steady-state gain in dB, measured on the middle half to skip edge
/// transients.
fn measured_gain_db(freq: f64, fs: f64, spec: &FilterSpec) -> f64 {
    let y = apply_filter(&sine(freq, fs, 10.0), spec).expect("valid filter");
    let s = y.samples();
    let mid = &s[s.len() / 4..3 * s.len() / 4];
    let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
    20.0 * (rms * 2f64.sqrt()).log10()
}

fn polynomial(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            2.0 + 3.0 * t - 4.0 * t * t + 1.5 * t * t * t
        })
        .collect()
}

fn rms_error(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn dsp_suite() -> SuiteReport {
    let mut report = SuiteReport::new("dsp");
    let fs = 4000.0;
    let notch = FilterSpec::notch(50.0);
    let att = measured_gain_db(50.0, fs, &notch);
    report.push("notch at 50 Hz", att <= -30.0, format!("{att:.1} dB (need ≤ -30)"));
    let pass = measured_gain_db(10.0, fs, &notch);
    report.push("notch passes 10 Hz", pass.abs() <= 1.0, format!("{pass:.3} dB (need within 1)"));

    for (name, spec, cutoff, inside, outside) in [
        ("lowpass", FilterSpec::lowpass(500.0), 500.0, 125.0, 2000.0 - 1.0),
        ("highpass", FilterSpec::highpass(20.0), 20.0, 200.0, 5.0),
    ] {
        let single = spec.clone().causal();
        let corner = measured_gain_db(cutoff, fs, &single);
        report.push(
            format!("{name} corner (single pass)"),
            (corner + 3.0).abs() <= 0.25,
            format!("{corner:.2} dB at {cutoff} Hz (Butterworth -3.01)"),
        );
        let zero_phase = measured_gain_db(cutoff, fs, &spec);
        report.push(
            format!("{name} corner (zero phase)"),
            (zero_phase - 2.0 * corner).abs() <= 0.1,
            format!("{zero_phase:.2} dB, twice the single pass"),
        );
        let band = measured_gain_db(inside, fs, &spec);
        let stop = measured_gain_db(outside, fs, &spec);
        report.push(
            format!("{name} pass and stop bands"),
            band.abs() <= 0.1 && stop <= -40.0,
            format!("{band:.3} dB at {inside} Hz, {stop:.1} dB at {outside} Hz"),
        );
    }

    let clean = polynomial(1024);
    let signal_rms = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
    let spec = DenoiseSpec::default();
    let t = SignalTrial::new(clean.clone(), 1, 1000.0, "verify", 1, 0).expect("finite");
    let kept = rms_error(wavelet_denoise(&t, &spec).expect("deep enough").samples(), &clean);
    report.push(
        "denoise keeps clean polynomial",
        kept < 0.01 * signal_rms,
        format!("rms change {:.3}% of signal", 100.0 * kept / signal_rms),
    );
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy: Vec<f64> = clean
            .iter()
            .map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = SignalTrial::new(noisy.clone(), 1, 1000.0, "verify", 1, 0).expect("finite");
        let out = wavelet_denoise(&t, &spec).expect("deep enough");
        worst_ratio = worst_ratio.max(rms_error(out.samples(), &clean) / rms_error(&noisy, &clean));
    }
    report.push(
        "denoise reduces error (20 seeds)",
        worst_ratio < 1.0,
        format!("worst after/before rms ratio {worst_ratio:.3}"),
    );
    report
}

pub const SEGMENTATION_CASES: usize = 1000;

pub fn segmentation_suite() -> SuiteReport {
    let mut report = SuiteReport::new("segmentation");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E6);
    let mut mismatches = 0;
    for _ in 0..SEGMENTATION_CASES {
        let s = rng.gen_range(1..50);
        let w = s + rng.gen_range(0..80);
        let t = rng.gen_range(0..w + 500);
        let naive: Vec<usize> = (0..=t).filter(|i| i % s == 0 && i + w <= t).collect();
        if segment_count(t, w, s) != naive.len() || segment_starts(t, w, s).ne(naive) {
            mismatches += 1;
        }
    }
    report.push(
        "count formula vs enumeration",
        mismatches == 0,
        format!("{mismatches} mismatches in {SEGMENTATION_CASES} random (T, W, S)"),
    );
    let trial = SignalTrial::new(vec![0.0; 5 * 40_000], 5, 4000.0, "verify", 1, 0).expect("finite");
    for (name, cfg, expect) in [
        ("500 ms / 250 ms on 10 s at 4 kHz", SegmentationConfig::standard(), 39),
        ("250 ms / 100 ms on 10 s at 4 kHz", SegmentationConfig::short(), 98),
    ] {
        let got = cfg
            .geometry(4000.0, 5)
            .and_then(|g| segment_trial(&trial, g))
            .map(|s| s.segments.len());
        report.push(
            name,
            matches!(got, Ok(k) if k == expect),
            format!("k = {got:?}, expected {expect}"),
        );
    }
    report
}

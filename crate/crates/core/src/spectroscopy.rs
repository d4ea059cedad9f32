//! Swap-spectroscopy simulation: T1(frequency, bias) maps over alternating
//! gate and piezo sweeps.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Defect, Ensemble, FrequencyWindow, QubitParams};
use crate::tls::{transverse_coupling_at, BiasPoint};

/// On-resonance relaxation rate (1/µs) added by a defect with coupling `g_mhz`
/// and Lorentzian half-width `linewidth_mhz`.
///
/// Weak coupling gives 2g²/γ in angular units, i.e. 4πg²/w here. The rate
/// cannot exceed the defect's own decoherence rate 2πw, so the two are combined
/// harmonically.
pub fn resonant_rate(g_mhz: f64, linewidth_mhz: f64) -> f64 {
    let weak = 4.0 * PI * g_mhz * g_mhz / linewidth_mhz;
    let ceiling = 2.0 * PI * linewidth_mhz;
    if weak == 0.0 {
        return 0.0;
    }
    weak * ceiling / (weak + ceiling)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepChannel {
    Gate,
    Piezo,
}

/// One sweep block: `channel` runs from `start_v` to `stop_v` in steps of
/// `step_v` (magnitude), the other channel is held at `fixed_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub channel: SweepChannel,
    pub start_v: f64,
    pub stop_v: f64,
    pub step_v: f64,
    pub fixed_v: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        ((self.stop_v - self.start_v).abs() / self.step_v + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn biases(&self) -> Vec<BiasPoint> {
        let dir = if self.stop_v >= self.start_v { 1.0 } else { -1.0 };
        (0..self.len())
            .map(|i| {
                let v = self.start_v + dir * self.step_v * i as f64;
                match self.channel {
                    SweepChannel::Gate => BiasPoint::new(v, self.fixed_v),
                    SweepChannel::Piezo => BiasPoint::new(self.fixed_v, v),
                }
            })
            .collect()
    }

    /// Range covered by the swept channel (V).
    pub fn span_v(&self) -> f64 {
        self.step_v * (self.len() - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start_ghz: f64,
    pub step_ghz: f64,
    pub n: usize,
}

impl FrequencyGrid {
    pub fn over(window: FrequencyWindow, step_ghz: f64) -> Self {
        let n = (window.width() / step_ghz + 1e-9).floor() as usize + 1;
        Self {
            start_ghz: window.lo_ghz,
            step_ghz,
            n,
        }
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.start_ghz + self.step_ghz * i as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.freq(i)).collect()
    }

    pub fn window(&self) -> FrequencyWindow {
        FrequencyWindow {
            lo_ghz: self.start_ghz,
            hi_ghz: self.freq(self.n.saturating_sub(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segments: Vec<Segment>,
    pub freq: FrequencyGrid,
    pub repetitions: usize,
}

/// Parameters of the default alternating protocol: piezo sweeps at a fixed
/// gate voltage, separated by gate sweeps that toggle the gate between
/// `gate_low_v` and `gate_high_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlternatingPlan {
    pub window_lo_ghz: f64,
    pub window_hi_ghz: f64,
    pub freq_step_mhz: f64,
    pub piezo_segments: usize,
    pub piezo_points: usize,
    pub piezo_step_v: f64,
    pub piezo_start_v: f64,
    pub gate_points: usize,
    pub gate_low_v: f64,
    pub gate_high_v: f64,
    pub repetitions: usize,
}

impl Default for AlternatingPlan {
    fn default() -> Self {
        Self {
            window_lo_ghz: 4.8,
            window_hi_ghz: 5.8,
            freq_step_mhz: 2.0,
            piezo_segments: 4,
            piezo_points: 20,
            piezo_step_v: 1.0,
            piezo_start_v: -40.0,
            gate_points: 10,
            gate_low_v: 0.0,
            gate_high_v: 10.0,
            repetitions: 500,
        }
    }
}

impl AlternatingPlan {
    pub fn build(&self) -> Result<SegmentPlan> {
        if self.piezo_segments == 0 || self.piezo_points < 2 || self.gate_points == 0 {
            return Err(Error::invalid(
                "plan",
                "need at least one piezo segment of >= 2 points and >= 1 gate point",
            ));
        }
        let window = FrequencyWindow::new(self.window_lo_ghz, self.window_hi_ghz)?;
        let gate_step = (self.gate_high_v - self.gate_low_v).abs() / self.gate_points as f64;
        let mut segments = Vec::new();
        let mut vp = self.piezo_start_v;
        let mut gate_high = false;
        for k in 0..self.piezo_segments {
            let vg = if gate_high { self.gate_high_v } else { self.gate_low_v };
            let stop = vp + self.piezo_step_v * (self.piezo_points - 1) as f64;
            segments.push(Segment {
                channel: SweepChannel::Piezo,
                start_v: vp,
                stop_v: stop,
                step_v: self.piezo_step_v,
                fixed_v: vg,
            });
            vp = stop;
            if k + 1 < self.piezo_segments {
                let (from, to) = if gate_high {
                    (self.gate_high_v, self.gate_low_v)
                } else {
                    (self.gate_low_v, self.gate_high_v)
                };
                let dir = if to >= from { 1.0 } else { -1.0 };
                segments.push(Segment {
                    channel: SweepChannel::Gate,
                    start_v: from + dir * gate_step,
                    stop_v: to,
                    step_v: gate_step,
                    fixed_v: vp,
                });
                gate_high = !gate_high;
                vp += self.piezo_step_v;
            }
        }
        let plan = SegmentPlan {
            segments,
            freq: FrequencyGrid::over(window, self.freq_step_mhz * 1e-3),
            repetitions: self.repetitions,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// One measured bias point in execution order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub index: usize,
    pub segment: usize,
    pub channel: SweepChannel,
    pub bias: BiasPoint,
}

impl SegmentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("segments", "plan has no segments"));
        }
        if self.freq.n < 2 || !(self.freq.step_ghz > 0.0) {
            return Err(Error::invalid("freq", "need >= 2 grid points and a positive step"));
        }
        for s in &self.segments {
            if !(s.step_v > 0.0) || !s.start_v.is_finite() || !s.stop_v.is_finite() {
                return Err(Error::invalid("segments", format!("bad segment {s:?}")));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> FrequencyWindow {
        self.freq.window()
    }

    pub fn columns(&self) -> Vec<Column> {
        let mut out = Vec::new();
        for (si, seg) in self.segments.iter().enumerate() {
            for bias in seg.biases() {
                out.push(Column {
                    index: out.len(),
                    segment: si,
                    channel: seg.channel,
                    bias,
                });
            }
        }
        out
    }

    /// Largest |V_gate| and |V_piezo| reached anywhere in the plan.
    pub fn max_bias(&self) -> BiasPoint {
        self.columns().iter().fold(BiasPoint::default(), |acc, c| {
            BiasPoint::new(
                acc.v_gate.max(c.bias.v_gate.abs()),
                acc.v_piezo.max(c.bias.v_piezo.abs()),
            )
        })
    }

    /// Index of the first column of each segment.
    pub fn segment_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.segments.len());
        let mut acc = 0;
        for s in &self.segments {
            offsets.push(acc);
            acc += s.len();
        }
        offsets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Multiplicative log-normal noise on the T1 estimate.
    LogNormal { sigma: f64 },
    /// Survival sampling after a fixed swap delay, inverted to T1.
    Binomial { delay_us: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::LogNormal { sigma: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Map {
    pub segment: usize,
    pub channel: SweepChannel,
    pub biases: Vec<BiasPoint>,
    pub freqs_ghz: Vec<f64>,
    /// Row-major `[bias][freq]` T1 estimates (µs).
    pub t1_us: Vec<f64>,
    /// Relative (log-scale) noise level of a single estimate.
    pub noise_sigma: f64,
}

impl T1Map {
    pub fn n_bias(&self) -> usize {
        self.biases.len()
    }

    pub fn n_freq(&self) -> usize {
        self.freqs_ghz.len()
    }

    pub fn row(&self, bias_index: usize) -> &[f64] {
        let n = self.n_freq();
        &self.t1_us[bias_index * n..(bias_index + 1) * n]
    }

    pub fn get(&self, bias_index: usize, freq_index: usize) -> f64 {
        self.t1_us[bias_index * self.n_freq() + freq_index]
    }
}

/// A spontaneous asymmetry shift of one defect from a given global bias index on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelegraphJump {
    pub defect_id: usize,
    pub new_eps0: f64,
    pub at_bias_index: usize,
}

/// Ensemble plus the telegraph jumps that modify it during a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timeline {
    pub ensemble: Ensemble,
    pub jumps: Vec<TelegraphJump>,
}

impl From<Ensemble> for Timeline {
    fn from(ensemble: Ensemble) -> Self {
        Timeline {
            ensemble,
            jumps: Vec::new(),
        }
    }
}

impl Timeline {
    /// ε_i of `defect` at global bias index `index`.
    pub fn eps0_at(&self, defect: &Defect, index: usize) -> f64 {
        self.jumps
            .iter()
            .filter(|j| j.defect_id == defect.id && j.at_bias_index <= index)
            .max_by_key(|j| j.at_bias_index)
            .map_or(defect.tls.eps0, |j| j.new_eps0)
    }
}

/// Record a telegraph jump of `defect_id` to `new_eps0` from `at_bias_index` onward.
pub fn inject_telegraph_jump(
    timeline: &Timeline,
    defect_id: usize,
    new_eps0: f64,
    at_bias_index: usize,
) -> Result<Timeline> {
    if !timeline.ensemble.defects.iter().any(|d| d.id == defect_id) {
        return Err(Error::UnknownDefect(defect_id));
    }
    let mut out = timeline.clone();
    out.jumps.push(TelegraphJump {
        defect_id,
        new_eps0,
        at_bias_index,
    });
    Ok(out)
}

/// Resonance frequency (GHz), Lorentzian half-width (GHz) and on-resonance rate (1/µs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_ghz: f64,
    pub half_width_ghz: f64,
    pub rate: f64,
}

fn resonance(defect: &Defect, eps0: f64, bias: BiasPoint) -> Resonance {
    let eps = eps0 + defect.arms.kappa_gate * bias.v_gate + defect.arms.kappa_piezo * bias.v_piezo;
    let mut tls = defect.tls.clone();
    tls.eps0 = eps0;
    let g = transverse_coupling_at(&tls, eps, defect.field_rms);
    Resonance {
        freq_ghz: defect.tls.delta.hypot(eps),
        half_width_ghz: defect.linewidth_mhz * 1e-3,
        rate: resonant_rate(g, defect.linewidth_mhz),
    }
}

/// Resonances of every defect at a bias point, honouring telegraph jumps.
pub fn resonances(timeline: &Timeline, bias: BiasPoint, bias_index: usize) -> Vec<Resonance> {
    timeline
        .ensemble
        .defects
        .iter()
        .map(|d| resonance(d, timeline.eps0_at(d, bias_index), bias))
        .collect()
}

fn total_rate(freq_ghz: f64, baseline: f64, res: &[Resonance]) -> f64 {
    baseline
        + res
            .iter()
            .map(|r| {
                let w2 = r.half_width_ghz * r.half_width_ghz;
                let df = freq_ghz - r.freq_ghz;
                r.rate * w2 / (df * df + w2)
            })
            .sum::<f64>()
}

/// Qubit relaxation rate (1/µs) at `freq_ghz`: baseline plus one Lorentzian per defect.
pub fn effective_relaxation(
    freq_ghz: f64,
    ensemble: &Ensemble,
    bias: BiasPoint,
    qubit: &QubitParams,
) -> f64 {
    let res: Vec<_> = ensemble
        .defects
        .iter()
        .map(|d| resonance(d, d.tls.eps0, bias))
        .collect();
    total_rate(freq_ghz, 1.0 / qubit.t1_baseline_us, &res)
}

fn column_seed(noise_seed: u64, column: usize) -> u64 {
    // splitmix64 finaliser over (seed, column)
    let mut z = noise_seed ^ (column as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noisy_t1(true_t1: f64, noise: NoiseModel, repetitions: usize, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        NoiseModel::None => true_t1,
        NoiseModel::LogNormal { sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            true_t1 * (sigma * z).exp()
        }
        NoiseModel::Binomial { delay_us } => {
            let n = repetitions.max(2) as u64;
            let p = (-delay_us / true_t1).exp().clamp(0.0, 1.0);
            let k = Binomial::new(n, p).map_or(0, |b| b.sample(rng));
            // Keep the estimate finite when every shot survives or decays.
            let frac = (k as f64).clamp(0.5, n as f64 - 0.5) / n as f64;
            -delay_us / frac.ln()
        }
    }
}

fn noise_sigma(noise: NoiseModel, repetitions: usize, qubit: &QubitParams) -> f64 {
    match noise {
        NoiseModel::None => 0.0,
        NoiseModel::LogNormal { sigma } => sigma,
        NoiseModel::Binomial { delay_us } => {
            let p = (-delay_us / qubit.t1_baseline_us).exp();
            ((1.0 - p) / (repetitions.max(2) as f64 * p)).sqrt() / p.ln().abs()
        }
    }
}

/// Simulate every segment of `plan`. Output is deterministic in
/// `(timeline, noise, noise_seed)` and assembled in plan order.
pub fn run_swap_spectroscopy(
    plan: &SegmentPlan,
    timeline: &Timeline,
    qubit: &QubitParams,
    noise: NoiseModel,
    noise_seed: u64,
) -> Result<Vec<T1Map>> {
    plan.validate()?;
    qubit.validate()?;
    let freqs = plan.freq.values();
    let baseline = 1.0 / qubit.t1_baseline_us;
    let sigma = noise_sigma(noise, plan.repetitions, qubit);
    let columns = plan.columns();

    let rows: Vec<Vec<f64>> = columns
        .par_iter()
        .map(|col| {
            let res = resonances(timeline, col.bias, col.index);
            let mut rng = ChaCha8Rng::seed_from_u64(column_seed(noise_seed, col.index));
            freqs
                .iter()
                .map(|&f| noisy_t1(1.0 / total_rate(f, baseline, &res), noise, plan.repetitions, &mut rng))
                .collect()
        })
        .collect();

    let mut maps = Vec::with_capacity(plan.segments.len());
    let mut rows = rows.into_iter();
    for (si, seg) in plan.segments.iter().enumerate() {
        let biases = seg.biases();
        let mut t1 = Vec::with_capacity(biases.len() * freqs.len());
        for _ in 0..biases.len() {
            t1.extend(rows.next().expect("column count matches plan"));
        }
        maps.push(T1Map {
            segment: si,
            channel: seg.channel,
            biases,
            freqs_ghz: freqs.clone(),
            t1_us: t1,
            noise_sigma: sigma,
        });
    }
    Ok(maps)
}

//! Forward model of a single-pixel photon-counting camera.
//!
//! For each projected pattern the detector reports the number of detected
//! photons and the sum of their times of flight. Intensities are expected
//! detected photons per pixel per dwell; depths are meters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::{fwht_in_place, hadamard_entry_positive, MaskedSensingPlan};
use crate::image::{is_power_of_two, Image};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FWHM of a Gaussian divided by its standard deviation, `2 sqrt(2 ln 2)`.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Ground-truth scene: per-pixel photon rate and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub intensity: Image,
    pub depth: Image,
}

impl Scene {
    pub fn new(intensity: Image, depth: Image) -> Result<Self> {
        intensity.check_same_side(&depth)?;
        if !is_power_of_two(intensity.side()) {
            return Err(Error::size(format!(
                "scene side {} is not a power of two",
                intensity.side()
            )));
        }
        if let Some(bad) = intensity
            .as_slice()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Config(format!(
                "scene intensity {bad} is not a finite rate >= 0"
            )));
        }
        if let Some(bad) = depth
            .as_slice()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Config(format!(
                "scene depth {bad} is not a finite distance >= 0"
            )));
        }
        Ok(Scene { intensity, depth })
    }

    pub fn side(&self) -> usize {
        self.intensity.side()
    }

    pub fn check_range_gate(&self, range_gate_m: f64) -> Result<()> {
        let deepest = self.depth.max();
        if deepest >= range_gate_m {
            return Err(Error::Config(format!(
                "scene depth {deepest} m reaches the {range_gate_m} m range gate"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Noiseless,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: SimMode,
    /// Illumination time per pattern.
    pub dwell_s: f64,
    /// Combined laser and detector timing jitter, full width at half maximum.
    pub jitter_fwhm_s: f64,
    /// TCSPC histogram bin width.
    pub bin_width_s: f64,
    pub dark_rate_hz: f64,
    pub range_gate_m: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: SimMode::Noiseless,
            dwell_s: 1e-3,
            jitter_fwhm_s: 300e-12,
            bin_width_s: 64e-12,
            dark_rate_hz: 0.0,
            range_gate_m: 7.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dwell_s", self.dwell_s),
            ("jitter_fwhm_s", self.jitter_fwhm_s),
            ("bin_width_s", self.bin_width_s),
            ("range_gate_m", self.range_gate_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0) {
            return Err(Error::Config(format!(
                "dark_rate_hz must be >= 0, got {}",
                self.dark_rate_hz
            )));
        }
        Ok(())
    }

    pub fn jitter_sigma_s(&self) -> f64 {
        self.jitter_fwhm_s / FWHM_PER_SIGMA
    }

    /// Round-trip time of flight at the far end of the range gate.
    pub fn gate_tof_s(&self) -> f64 {
        2.0 * self.range_gate_m / SPEED_OF_LIGHT
    }

    fn n_bins(&self) -> u64 {
        (self.gate_tof_s() / self.bin_width_s).ceil().max(1.0) as u64
    }

    /// Snaps a timestamp to the centre of its TCSPC bin, clamped to the gate.
    pub fn quantize_tof(&self, t: f64) -> f64 {
        let last = (self.n_bins() - 1) as f64;
        let bin = (t / self.bin_width_s).floor().clamp(0.0, last);
        (bin + 0.5) * self.bin_width_s
    }
}

/// Photon count and TOF sum for one pattern. Noiseless counts are real
/// valued; Poisson counts are whole numbers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub count: f64,
    pub tof_sum_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub stage: usize,
    pub pattern_index: usize,
    pub count: f64,
    pub tof_sum_s: f64,
}

impl MeasurementRecord {
    pub fn new(stage: usize, pattern_index: usize, m: Measurement) -> Self {
        MeasurementRecord {
            stage,
            pattern_index,
            count: m.count,
            tof_sum_s: m.tof_sum_s,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-pattern seed so that patterns can be simulated in any order.
pub fn pattern_seed(seed: u64, stage: usize, pattern_index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stage as u64) ^ pattern_index as u64)
}

fn pattern_rng(cfg: &SimConfig, pattern_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ splitmix64(pattern_seed)))
}

fn poisson_sample(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

struct PhotonTimer {
    jitter: Normal<f64>,
}

impl PhotonTimer {
    fn new(cfg: &SimConfig) -> Self {
        PhotonTimer {
            jitter: Normal::new(0.0, cfg.jitter_sigma_s()).expect("validated jitter"),
        }
    }

    fn detect(&self, rng: &mut ChaCha8Rng, cfg: &SimConfig, true_tof: f64) -> f64 {
        cfg.quantize_tof(true_tof + self.jitter.sample(rng))
    }

    fn dark_counts(&self, rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Measurement {
        let n = poisson_sample(rng, cfg.dark_rate_hz * cfg.dwell_s);
        let gate = cfg.gate_tof_s();
        let mut tof_sum = 0.0;
        for _ in 0..n {
            tof_sum += cfg.quantize_tof(rng.random_range(0.0..gate));
        }
        Measurement {
            count: n as f64,
            tof_sum_s: tof_sum,
        }
    }
}

/// Block-sums intensity and intensity-weights depth down to `side`.
pub fn downsample_scene(scene: &Scene, side: usize) -> Result<Scene> {
    let full = scene.side();
    if side == 0 || !is_power_of_two(side) || !full.is_multiple_of(side) {
        return Err(Error::size(format!(
            "cannot downsample a {full}-pixel scene to side {side}"
        )));
    }
    if side == full {
        return Ok(scene.clone());
    }
    let f = full / side;
    let mut intensity = Image::zeros(side);
    let mut depth = Image::zeros(side);
    for p in 0..side {
        for q in 0..side {
            let (mut flux, mut weighted, mut plain) = (0.0, 0.0, 0.0);
            for dp in 0..f {
                for dq in 0..f {
                    let x = scene.intensity.get(p * f + dp, q * f + dq);
                    let d = scene.depth.get(p * f + dp, q * f + dq);
                    flux += x;
                    weighted += x * d;
                    plain += d;
                }
            }
            intensity.set(p, q, flux);
            depth.set(
                p,
                q,
                if flux > 0.0 {
                    weighted / flux
                } else {
                    plain / (f * f) as f64
                },
            );
        }
    }
    Ok(Scene { intensity, depth })
}

/// Simulates a single pattern given as a dense `{0,1}` vector.
pub fn measure(
    scene: &Scene,
    pattern: &[u8],
    cfg: &SimConfig,
    pattern_seed: u64,
) -> Result<Measurement> {
    let x = scene.intensity.as_slice();
    let d = scene.depth.as_slice();
    if pattern.len() != x.len() {
        return Err(Error::size(format!(
            "pattern of length {} does not match a {}-pixel scene",
            pattern.len(),
            x.len()
        )));
    }
    let lit = pattern
        .iter()
        .enumerate()
        .filter(|(_, &h)| h != 0)
        .map(|(n, _)| n);
    match cfg.mode {
        SimMode::Noiseless => {
            let mut m = Measurement::default();
            for n in lit {
                m.count += x[n];
                m.tof_sum_s += x[n] * 2.0 * d[n] / SPEED_OF_LIGHT;
            }
            Ok(m)
        }
        SimMode::Poisson => {
            let mut rng = pattern_rng(cfg, pattern_seed);
            let timer = PhotonTimer::new(cfg);
            let mut m = Measurement::default();
            for n in lit {
                let k = poisson_sample(&mut rng, x[n]);
                let tof = 2.0 * d[n] / SPEED_OF_LIGHT;
                for _ in 0..k {
                    m.tof_sum_s += timer.detect(&mut rng, cfg, tof);
                }
                m.count += k as f64;
            }
            let dark = timer.dark_counts(&mut rng, cfg);
            m.count += dark.count;
            m.tof_sum_s += dark.tof_sum_s;
            Ok(m)
        }
    }
}

/// Acquires every pattern row of `plan`, one record per row in order.
///
/// Expected counts for all rows come from one fast transform of the marked
/// fluxes rather than `L` dense inner products. In Poisson mode the total
/// photon number of a row is drawn from its expected count and each photon
/// is then assigned to a lit pixel in proportion to that pixel's flux, which
/// is the same distribution as independent per-pixel Poisson draws.
pub fn acquire_stage(
    scene: &Scene,
    plan: &MaskedSensingPlan,
    cfg: &SimConfig,
    stage: usize,
) -> Result<Vec<MeasurementRecord>> {
    if scene.side() != plan.side() {
        return Err(Error::size(format!(
            "scene side {} does not match plan side {}",
            scene.side(),
            plan.side()
        )));
    }
    let flux = plan.gather(&scene.intensity)?;
    let tof: Vec<f64> = plan
        .marked_pixels()
        .iter()
        .map(|&n| 2.0 * scene.depth.as_slice()[n] / SPEED_OF_LIGHT)
        .collect();
    let mut expected_count = flux.clone();
    let mut expected_tof: Vec<f64> = flux
        .iter()
        .zip(tof.iter().chain(std::iter::repeat(&0.0)))
        .map(|(x, t)| x * t)
        .collect();
    fwht_in_place(&mut expected_count)?;
    fwht_in_place(&mut expected_tof)?;
    // zero-shifted row m sees (H(m)·x + Σx) / 2, and Σx is row 0
    let total = expected_count[0];
    let total_tof = expected_tof[0];
    let noiseless: Vec<Measurement> = expected_count
        .iter()
        .zip(&expected_tof)
        .map(|(&c, &t)| {
            let count = 0.5 * (c + total);
            if count <= 0.0 {
                Measurement::default()
            } else {
                Measurement {
                    count,
                    tof_sum_s: (0.5 * (t + total_tof)).max(0.0),
                }
            }
        })
        .collect();

    let measurements = match cfg.mode {
        SimMode::Noiseless => noiseless,
        SimMode::Poisson => {
            let sampler = PhotonSampler::new(&flux[..plan.n_marked()], &tof);
            let timer = PhotonTimer::new(cfg);
            noiseless
                .par_iter()
                .enumerate()
                .map(|(m, expected)| {
                    let mut rng = pattern_rng(cfg, pattern_seed(cfg.seed, stage, m));
                    let mut out = sampler.sample_row(&mut rng, cfg, &timer, m, expected.count);
                    let dark = timer.dark_counts(&mut rng, cfg);
                    out.count += dark.count;
                    out.tof_sum_s += dark.tof_sum_s;
                    out
                })
                .collect()
        }
    };
    Ok(measurements
        .into_iter()
        .enumerate()
        .map(|(m, meas)| MeasurementRecord::new(stage, m, meas))
        .collect())
}

/// Draws photon origins among the marked pixels of a plan, by column.
struct PhotonSampler<'a> {
    flux: &'a [f64],
    tof: &'a [f64],
    total: f64,
    alias: Option<WeightedAliasIndex<f64>>,
}

impl<'a> PhotonSampler<'a> {
    /// Below this acceptance rate rejection sampling is replaced by an
    /// explicit table over the lit columns.
    const MIN_ACCEPTANCE: f64 = 1.0 / 16.0;

    fn new(flux: &'a [f64], tof: &'a [f64]) -> Self {
        let total: f64 = flux.iter().sum();
        let alias = if total > 0.0 {
            WeightedAliasIndex::new(flux.to_vec()).ok()
        } else {
            None
        };
        PhotonSampler {
            flux,
            tof,
            total,
            alias,
        }
    }

    fn sample_row(
        &self,
        rng: &mut ChaCha8Rng,
        cfg: &SimConfig,
        timer: &PhotonTimer,
        row: usize,
        expected: f64,
    ) -> Measurement {
        let k = poisson_sample(rng, expected);
        let mut out = Measurement {
            count: k as f64,
            tof_sum_s: 0.0,
        };
        if k == 0 {
            return out;
        }
        let Some(alias) = &self.alias else {
            return out;
        };
        if expected / self.total >= Self::MIN_ACCEPTANCE {
            for _ in 0..k {
                let col = loop {
                    let c = alias.sample(rng);
                    if hadamard_entry_positive(row, c) {
                        break c;
                    }
                };
                out.tof_sum_s += timer.detect(rng, cfg, self.tof[col]);
            }
        } else {
            let lit: Vec<usize> = (0..self.flux.len())
                .filter(|&c| hadamard_entry_positive(row, c) && self.flux[c] > 0.0)
                .collect();
            let weights: Vec<f64> = lit.iter().map(|&c| self.flux[c]).collect();
            let Ok(table) = WeightedAliasIndex::new(weights) else {
                return out;
            };
            for _ in 0..k {
                let col = lit[table.sample(rng)];
                out.tof_sum_s += timer.detect(rng, cfg, self.tof[col]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_scene(side: usize, x: f64, d: f64) -> Scene {
        Scene::new(Image::filled(side, x), Image::filled(side, d)).unwrap()
    }

    fn poisson_cfg(seed: u64) -> SimConfig {
        SimConfig {
            mode: SimMode::Poisson,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn downsample_examples() {
        let s = uniform_scene(4, 1.5, 2.0);
        assert_eq!(downsample_scene(&s, 4).unwrap(), s);

        let s = Scene::new(
            Image::filled(2, 1.0),
            Image::from_vec(2, vec![1.0, 1.0, 3.0, 3.0]).unwrap(),
        )
        .unwrap();
        let d = downsample_scene(&s, 1).unwrap();
        assert_eq!(d.intensity.as_slice(), &[4.0]);
        assert_eq!(d.depth.as_slice(), &[2.0]);

        let s = Scene::new(
            Image::from_vec(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            Image::from_vec(2, vec![2.25, 7.0, 1.0, 4.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(downsample_scene(&s, 1).unwrap().depth.as_slice(), &[2.25]);

        let dark = uniform_scene(2, 0.0, 3.0);
        assert_eq!(downsample_scene(&dark, 1).unwrap().depth.as_slice(), &[3.0]);
        assert!(matches!(downsample_scene(&s, 3), Err(Error::Size(_))));
        assert!(matches!(downsample_scene(&s, 4), Err(Error::Size(_))));
    }

    #[test]
    fn measure_closed_forms() {
        let s = uniform_scene(2, 1.0, 1.5);
        for cfg in [SimConfig::default(), poisson_cfg(9)] {
            let m = measure(&s, &[0; 4], &cfg, 1).unwrap();
            assert_eq!((m.count, m.tof_sum_s), (0.0, 0.0));
        }
        let m = measure(&s, &[1; 4], &SimConfig::default(), 0).unwrap();
        assert_eq!(m.count, 4.0);
        assert!((m.tof_sum_s - 4.0 * 3.0 / SPEED_OF_LIGHT).abs() < 1e-24);
        assert!(matches!(
            measure(&s, &[1; 3], &SimConfig::default(), 0),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn poisson_measure_is_deterministic() {
        let s = uniform_scene(4, 3.0, 2.0);
        let cfg = poisson_cfg(11);
        let a = measure(&s, &[1; 16], &cfg, 42).unwrap();
        let b = measure(&s, &[1; 16], &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = measure(&s, &[1; 16], &cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_measure_mean_matches_noiseless() {
        let s = uniform_scene(4, 0.75, 2.0);
        let pattern: Vec<u8> = (0..16).map(|i| (i % 3 != 0) as u8).collect();
        let expected = measure(&s, &pattern, &SimConfig::default(), 0)
            .unwrap()
            .count;
        let cfg = poisson_cfg(5);
        let trials = 10_000;
        let samples: Vec<f64> = (0..trials)
            .map(|t| measure(&s, &pattern, &cfg, t).unwrap().count)
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        assert!((mean - expected).abs() <= 4.0 * (var / trials as f64).sqrt());
    }

    #[test]
    fn acquire_matches_dense_zero_shifted_oracle() {
        let s = Scene::new(
            Image::from_vec(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Image::from_vec(2, vec![1.0, 2.0, 3.0, 4.5]).unwrap(),
        )
        .unwrap();
        let plan = MaskedSensingPlan::full(2).unwrap();
        let recs = acquire_stage(&s, &plan, &SimConfig::default(), 3).unwrap();
        let h = crate::hadamard::dense_hadamard(2).unwrap();
        let x = s.intensity.as_slice();
        for (m, rec) in recs.iter().enumerate() {
            assert_eq!((rec.stage, rec.pattern_index), (3, m));
            let oracle: f64 = h[m]
                .iter()
                .zip(x)
                .map(|(&v, &xi)| if v == 1 { xi } else { 0.0 })
                .sum();
            assert!((rec.count - oracle).abs() < 1e-12);
            let dense =
                measure(&s, &plan.pattern_row(m).unwrap(), &SimConfig::default(), 0).unwrap();
            assert!((rec.tof_sum_s - dense.tof_sum_s).abs() < 1e-20);
        }
        assert_eq!(recs[0].count, 10.0);
    }

    #[test]
    fn acquire_rejects_mismatched_plan() {
        let s = uniform_scene(4, 1.0, 1.0);
        let plan = MaskedSensingPlan::full(2).unwrap();
        assert!(acquire_stage(&s, &plan, &SimConfig::default(), 0).is_err());
    }

    #[test]
    fn acquire_is_deterministic_and_schedule_independent() {
        let s = Scene::new(
            Image::from_fn(8, |p, q| 0.5 + (p * 8 + q) as f64 * 0.1),
            Image::from_fn(8, |p, _| 2.0 + p as f64 * 0.1),
        )
        .unwrap();
        let mut bits = vec![false; 64];
        for b in bits.iter_mut().step_by(3) {
            *b = true;
        }
        let plan = MaskedSensingPlan::new(8, bits).unwrap();
        let cfg = SimConfig {
            dark_rate_hz: 2000.0,
            ..poisson_cfg(77)
        };
        let a = acquire_stage(&s, &plan, &cfg, 2).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| acquire_stage(&s, &plan, &cfg, 2).unwrap());
        assert_eq!(a, b);
        for r in &a {
            assert!(r.count >= 0.0 && r.tof_sum_s >= 0.0);
            assert_eq!(r.count.fract(), 0.0);
            if r.count == 0.0 {
                assert_eq!(r.tof_sum_s, 0.0);
            }
        }
    }

    #[test]
    fn quantization_snaps_to_bin_centres() {
        let cfg = SimConfig::default();
        let w = cfg.bin_width_s;
        assert_eq!(cfg.quantize_tof(0.2 * w), 0.5 * w);
        assert_eq!(cfg.quantize_tof(-3.0 * w), 0.5 * w);
        assert!((cfg.quantize_tof(10.7 * w) - 10.5 * w).abs() < 1e-24);
        assert!(cfg.quantize_tof(1.0) < cfg.gate_tof_s() + w);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            dwell_s: 0.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            dark_rate_hz: -1.0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scene_invariants() {
        assert!(Scene::new(Image::filled(2, -1.0), Image::filled(2, 1.0)).is_err());
        assert!(Scene::new(Image::filled(2, 1.0), Image::filled(2, f64::NAN)).is_err());
        assert!(Scene::new(Image::filled(3, 1.0), Image::filled(3, 1.0)).is_err());
        let s = uniform_scene(2, 1.0, 7.5);
        assert!(s.check_range_gate(7.5).is_err());
        assert!(s.check_range_gate(8.0).is_ok());
    }
}

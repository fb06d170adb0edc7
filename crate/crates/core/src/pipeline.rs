//! Staged adaptive acquisition and reconstruction.
//!
//! Stage 0 samples the whole scene at `initial_side` with a complete
//! Hadamard set. Every later stage doubles the side: edge regions are
//! predicted from the Haar details of the previous depth map, only those
//! pixels are re-measured with a masked Hadamard set, and everything else is
//! block-replicated from the previous stage.
//!
//! Intensity and modulated images are kept in photons per *final-resolution*
//! pixel at every stage, so stage images are directly comparable with each
//! other and with the ground truth.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::{debias, iht_in_place, MaskedSensingPlan};
use crate::image::{is_power_of_two, Image};
use crate::metrics::psnr;
use crate::photon::{acquire_stage, downsample_scene, MeasurementRecord, Scene, SimConfig};
use crate::wavelet::{haar_analyze, predict_mark, upsample2, MarkPolicy, MarkVector};

/// Half the speed of light: converts round-trip time of flight to depth.
pub const DEFAULT_C_FACTOR: f64 = 1.498_962_29e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// Fixed detail threshold in meters of depth.
    Fixed { threshold_m: f64 },
    /// Explicit pattern cap for each refinement stage (stage 1 first).
    StageBudgets { budgets: Vec<usize> },
    /// End-to-end pattern count as a fraction of `final_side²`.
    CompressionRatio { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub initial_side: usize,
    pub final_side: usize,
    pub policy: ThresholdPolicy,
    /// Meters per second of round-trip TOF.
    pub c_factor: f64,
    /// Relative intensity floor for the depth division, as a fraction of the
    /// stage's maximum reconstructed intensity.
    pub epsilon_intensity: f64,
    pub sim: SimConfig,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            initial_side: 64,
            final_side: 512,
            policy: ThresholdPolicy::Fixed { threshold_m: 0.05 },
            c_factor: DEFAULT_C_FACTOR,
            epsilon_intensity: 1e-6,
            sim: SimConfig::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.initial_side, self.final_side);
        if !is_power_of_two(lo) || !is_power_of_two(hi) {
            return Err(Error::Config(format!(
                "initial_side {lo} and final_side {hi} must be powers of two"
            )));
        }
        if lo < 1 || hi < lo {
            return Err(Error::Config(format!(
                "final_side {hi} must be at least initial_side {lo}"
            )));
        }
        if !(self.c_factor.is_finite() && self.c_factor > 0.0) {
            return Err(Error::Config(format!(
                "c_factor must be > 0, got {}",
                self.c_factor
            )));
        }
        if !(self.epsilon_intensity.is_finite() && self.epsilon_intensity >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon_intensity must be >= 0, got {}",
                self.epsilon_intensity
            )));
        }
        self.sim.validate()?;
        match &self.policy {
            ThresholdPolicy::Fixed { threshold_m } if threshold_m.is_nan() => {
                Err(Error::Config("threshold_m is NaN".into()))
            }
            ThresholdPolicy::StageBudgets { budgets } if budgets.len() < self.n_stages() - 1 => {
                Err(Error::Config(format!(
                    "{} stage budgets given for {} refinement stages",
                    budgets.len(),
                    self.n_stages() - 1
                )))
            }
            ThresholdPolicy::CompressionRatio { target } => {
                if !(target.is_finite() && *target > 0.0) {
                    return Err(Error::Config(format!(
                        "compression target {target} must be > 0"
                    )));
                }
                if self.target_patterns().unwrap_or(0) < lo * lo {
                    return Err(Error::Budget(format!(
                        "target {target} cannot cover the {} patterns of the initial stage",
                        lo * lo
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Number of stages, counting the initial full-sampling stage.
    pub fn n_stages(&self) -> usize {
        (self.final_side / self.initial_side).trailing_zeros() as usize + 1
    }

    fn target_patterns(&self) -> Option<usize> {
        match self.policy {
            ThresholdPolicy::CompressionRatio { target } => {
                Some((target * (self.final_side * self.final_side) as f64).floor() as usize)
            }
            _ => None,
        }
    }

    fn area_factor(&self, side: usize) -> f64 {
        let f = (self.final_side / side) as f64;
        f * f
    }

    /// Pattern cap for refinement stage `stage` (1-based) given how many
    /// patterns earlier stages used, or `None` for the fixed threshold.
    ///
    /// Under a global ratio the remaining budget is split proportionally to
    /// `4^j` over the remaining stages; unused budget rolls forward.
    pub fn stage_budget(&self, stage: usize, patterns_used: usize) -> Option<usize> {
        match &self.policy {
            ThresholdPolicy::Fixed { .. } => None,
            ThresholdPolicy::StageBudgets { budgets } => Some(budgets[stage - 1]),
            ThresholdPolicy::CompressionRatio { .. } => {
                let remaining = self.target_patterns()?.saturating_sub(patterns_used) as u128;
                let stages_left = (self.n_stages() - stage) as u32;
                // Σ_{k=j}^{J-1} 4^k / 4^j = (4^{J-j} - 1) / 3
                let denom = 4u128.pow(stages_left) - 1;
                Some((remaining * 3 / denom) as usize)
            }
        }
    }
}

/// Source of per-stage measurement records.
pub trait MeasurementSource {
    /// Returns one record per pattern row of `plan`, ordered by pattern index.
    fn acquire(&mut self, stage: usize, plan: &MaskedSensingPlan)
        -> Result<Vec<MeasurementRecord>>;

    fn ground_truth(&self) -> Option<&Scene> {
        None
    }
}

/// Live simulation of the camera against a known scene. Every record it
/// produces is kept so the run can be written out as a log.
#[derive(Debug)]
pub struct SimulatorSource {
    scene: Scene,
    sim: SimConfig,
    coarse: BTreeMap<usize, Scene>,
    records: Vec<MeasurementRecord>,
}

impl SimulatorSource {
    pub fn new(scene: Scene, sim: SimConfig) -> Result<Self> {
        sim.validate()?;
        scene.check_range_gate(sim.range_gate_m)?;
        Ok(SimulatorSource {
            scene,
            sim,
            coarse: BTreeMap::new(),
            records: Vec::new(),
        })
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MeasurementRecord> {
        self.records
    }
}

impl MeasurementSource for SimulatorSource {
    fn acquire(
        &mut self,
        stage: usize,
        plan: &MaskedSensingPlan,
    ) -> Result<Vec<MeasurementRecord>> {
        let side = plan.side();
        if !self.coarse.contains_key(&side) {
            let scene = downsample_scene(&self.scene, side)?;
            self.coarse.insert(side, scene);
        }
        let recs = acquire_stage(&self.coarse[&side], plan, &self.sim, stage)?;
        self.records.extend_from_slice(&recs);
        Ok(recs)
    }

    fn ground_truth(&self) -> Option<&Scene> {
        Some(&self.scene)
    }
}

/// Replays records read back from a measurement log.
#[derive(Debug, Default)]
pub struct ReplaySource {
    by_stage: BTreeMap<usize, Vec<MeasurementRecord>>,
}

impl ReplaySource {
    pub fn new(records: Vec<MeasurementRecord>) -> Self {
        let mut by_stage: BTreeMap<usize, Vec<MeasurementRecord>> = BTreeMap::new();
        for rec in records {
            by_stage.entry(rec.stage).or_default().push(rec);
        }
        ReplaySource { by_stage }
    }
}

impl MeasurementSource for ReplaySource {
    fn acquire(
        &mut self,
        stage: usize,
        plan: &MaskedSensingPlan,
    ) -> Result<Vec<MeasurementRecord>> {
        let mut recs = self
            .by_stage
            .remove(&stage)
            .ok_or_else(|| Error::IncompleteLog(format!("no records for stage {stage}")))?;
        recs.sort_by_key(|r| r.pattern_index);
        if recs.len() != plan.order() || recs.iter().enumerate().any(|(m, r)| r.pattern_index != m)
        {
            return Err(Error::IncompleteLog(format!(
                "stage {stage} needs patterns 0..{} but the log holds {} records",
                plan.order(),
                recs.len()
            )));
        }
        Ok(recs)
    }
}

/// Reconstruction state carried from one stage to the next.
#[derive(Debug, Clone)]
pub struct StageState {
    pub side: usize,
    pub intensity: Image,
    pub depth: Image,
    pub modulated: Image,
    /// Pixels measured at this stage.
    pub mark: MarkVector,
    pub patterns_used: usize,
    /// Patterns projected by this stage alone.
    pub stage_patterns: usize,
    /// Time spent outside the measurement source.
    pub reconstruction_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub patterns_per_stage: Vec<usize>,
    pub total_patterns: usize,
    pub compression_ratio: f64,
    pub reconstruction_time_s: f64,
    pub psnr_intensity_db: Option<f64>,
    pub psnr_depth_db: Option<f64>,
    /// Peak used for the intensity PSNR (ground-truth maximum).
    pub intensity_peak: Option<f64>,
    /// Peak used for the depth PSNR (range gate).
    pub depth_peak_m: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub intensity: Image,
    pub depth: Image,
    pub stats: RunStats,
    pub stages: Vec<StageState>,
}

/// Demultiplexed edge images for the marked pixels of `plan`, scaled to
/// per-final-pixel units; zero off the mark.
fn demultiplex(
    plan: &MaskedSensingPlan,
    records: &[MeasurementRecord],
    cfg: &ReconConfig,
) -> Result<(Image, Image)> {
    if records.len() != plan.order() {
        return Err(Error::IncompleteLog(format!(
            "expected {} records, got {}",
            plan.order(),
            records.len()
        )));
    }
    let counts: Vec<f64> = records.iter().map(|r| r.count).collect();
    let tofs: Vec<f64> = records.iter().map(|r| r.tof_sum_s).collect();
    let mut ci = debias(&counts)?;
    let mut cq = debias(&tofs)?;
    iht_in_place(&mut ci)?;
    iht_in_place(&mut cq)?;
    let scale = 1.0 / cfg.area_factor(plan.side());
    let intensity = plan.scatter(&ci)?.map(|v| (v * scale).max(0.0));
    let modulated = plan.scatter(&cq)?.map(|v| v * scale * cfg.c_factor);
    Ok((intensity, modulated))
}

fn intensity_floor(cfg: &ReconConfig, intensity: &Image) -> f64 {
    cfg.epsilon_intensity * intensity.max().max(0.0)
}

/// Ratio depth where the intensity is usable, otherwise `fallback`.
fn ratio_depth(cfg: &ReconConfig, intensity: f64, modulated: f64, eps: f64) -> Option<f64> {
    (intensity > 0.0 && intensity >= eps)
        .then(|| (modulated / intensity).clamp(0.0, cfg.sim.range_gate_m))
}

/// Fully samples the scene at `initial_side`.
pub fn initial_stage(source: &mut dyn MeasurementSource, cfg: &ReconConfig) -> Result<StageState> {
    cfg.validate()?;
    let side = cfg.initial_side;
    let plan = MaskedSensingPlan::full(side)?;
    let records = source.acquire(0, &plan)?;
    let start = Instant::now();
    let (intensity, modulated) = demultiplex(&plan, &records, cfg)?;
    let eps = intensity_floor(cfg, &intensity);
    let depth = Image::from_vec(
        side,
        intensity
            .as_slice()
            .iter()
            .zip(modulated.as_slice())
            .map(|(&i, &q)| ratio_depth(cfg, i, q, eps).unwrap_or(0.0))
            .collect(),
    )?;
    Ok(StageState {
        side,
        intensity,
        depth,
        modulated,
        mark: MarkVector::full(side),
        patterns_used: plan.order(),
        stage_patterns: plan.order(),
        reconstruction_time: start.elapsed(),
    })
}

/// Refines `prev` to twice its side.
pub fn run_stage(
    prev: &StageState,
    source: &mut dyn MeasurementSource,
    cfg: &ReconConfig,
) -> Result<StageState> {
    if prev.side >= cfg.final_side {
        return Err(Error::Config(format!(
            "stage side {} already reached final_side {}",
            prev.side, cfg.final_side
        )));
    }
    let side = 2 * prev.side;
    let stage = (side / cfg.initial_side).trailing_zeros() as usize;
    let start = Instant::now();

    let bands = haar_analyze(&prev.depth)?;
    let policy = match cfg.stage_budget(stage, prev.patterns_used) {
        None => match cfg.policy {
            ThresholdPolicy::Fixed { threshold_m } => Some(MarkPolicy::Threshold(threshold_m)),
            _ => unreachable!("only the fixed policy has no budget"),
        },
        // each previous-resolution pixel expands to four at this stage
        Some(cap) if cap / 4 >= 1 => Some(MarkPolicy::Budget(cap / 4)),
        Some(_) => None,
    };
    let mark = match policy {
        Some(p) => predict_mark(&bands, p)?.children(),
        None => MarkVector::empty(side),
    };

    let up_intensity = upsample2(&prev.intensity);
    let up_depth = upsample2(&prev.depth);
    let up_modulated = upsample2(&prev.modulated);

    if mark.n_marked() == 0 {
        return Ok(StageState {
            side,
            intensity: up_intensity,
            depth: up_depth,
            modulated: up_modulated,
            mark,
            patterns_used: prev.patterns_used,
            stage_patterns: 0,
            reconstruction_time: start.elapsed(),
        });
    }

    let plan = MaskedSensingPlan::new(side, mark.bits().to_vec())?;
    let mut elapsed = start.elapsed();
    let records = source.acquire(stage, &plan)?;
    let start = Instant::now();
    let (edge_i, edge_q) = demultiplex(&plan, &records, cfg)?;

    let bits = mark.bits();
    let mut intensity = up_intensity;
    let mut modulated = up_modulated;
    for (n, &marked) in bits.iter().enumerate() {
        if marked {
            intensity.as_mut_slice()[n] = edge_i.as_slice()[n];
            modulated.as_mut_slice()[n] = edge_q.as_slice()[n];
        }
    }
    let eps = intensity_floor(cfg, &intensity);
    let mut depth = up_depth;
    for (n, &marked) in bits.iter().enumerate() {
        if marked {
            if let Some(d) = ratio_depth(cfg, edge_i.as_slice()[n], edge_q.as_slice()[n], eps) {
                depth.as_mut_slice()[n] = d;
            }
        }
    }
    elapsed += start.elapsed();

    Ok(StageState {
        side,
        intensity,
        depth,
        modulated,
        mark,
        patterns_used: prev.patterns_used + plan.order(),
        stage_patterns: plan.order(),
        reconstruction_time: elapsed,
    })
}

/// Runs every stage from `initial_side` up to `final_side`.
pub fn run(cfg: &ReconConfig, source: &mut dyn MeasurementSource) -> Result<RunOutput> {
    let mut stages = vec![initial_stage(source, cfg)?];
    while stages.last().expect("initial stage").side < cfg.final_side {
        let next = run_stage(stages.last().expect("initial stage"), source, cfg)?;
        stages.push(next);
    }
    let last = stages.last().expect("initial stage");
    let patterns_per_stage: Vec<usize> = stages.iter().map(|s| s.stage_patterns).collect();
    let total_patterns = last.patterns_used;
    let reconstruction_time_s = stages
        .iter()
        .map(|s| s.reconstruction_time)
        .sum::<Duration>()
        .as_secs_f64();

    let depth_peak_m = cfg.sim.range_gate_m;
    let (mut psnr_intensity_db, mut psnr_depth_db, mut intensity_peak) = (None, None, None);
    if let Some(truth) = source.ground_truth() {
        if truth.side() == cfg.final_side {
            let peak = truth.intensity.max();
            if peak > 0.0 {
                psnr_intensity_db = Some(psnr(&last.intensity, &truth.intensity, peak)?);
                intensity_peak = Some(peak);
            }
            psnr_depth_db = Some(psnr(&last.depth, &truth.depth, depth_peak_m)?);
        }
    }

    let stats = RunStats {
        patterns_per_stage,
        total_patterns,
        compression_ratio: total_patterns as f64 / (cfg.final_side * cfg.final_side) as f64,
        reconstruction_time_s,
        psnr_intensity_db,
        psnr_depth_db,
        intensity_peak,
        depth_peak_m,
    };
    Ok(RunOutput {
        intensity: last.intensity.clone(),
        depth: last.depth.clone(),
        stats,
        stages,
    })
}

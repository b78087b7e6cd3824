//! Synthetic-experiment harness: ground-truth synthesis, sensor corruption
//! with bias random walks, artificial GPS and landmark measurements,
//! initial-error sampling and the Monte-Carlo campaign runner.
//!
//! Everything is a pure function of (configuration, seed). Campaign trials
//! draw from per-trial ChaCha streams derived from the campaign seed and the
//! trial index, so results do not depend on worker scheduling.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::batch::{self, BatchProblem, GnFlavor};
use crate::error::{Error, Result};
use crate::estimators::{
    run_smoother, Belief, SmootherFlavor, SmootherProblem,
};
use crate::group::{exp_g, GroupElement, TangentVector};
use crate::models::{
    ErrorConvention, ExteroMeasurement, InteroceptiveSample, LandmarkMap, MeasurementBatch,
    NoiseSpec, propagate, landmark_predict,
};
use crate::so3;
use crate::{Mat12, Vec12};

/// Names of the four error blocks, in tangent order.
pub const STATE_NAMES: [&str; 4] = ["attitude", "position", "bias_gyro", "bias_vel"];

/// Sinusoidal body-frame rate profiles; a zero frequency holds the amplitude
/// constant on that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProfile {
    pub omega_amp: Vector3<f64>,
    pub omega_freq: Vector3<f64>,
    pub omega_phase: Vector3<f64>,
    pub vel_amp: Vector3<f64>,
    pub vel_freq: Vector3<f64>,
    pub vel_phase: Vector3<f64>,
}

impl Default for TrajectoryProfile {
    fn default() -> Self {
        TrajectoryProfile {
            omega_amp: Vector3::new(0.3, 0.3, 0.3),
            omega_freq: Vector3::new(0.9, 0.5, 0.7),
            omega_phase: Vector3::new(0.0, 1.3, 2.1),
            vel_amp: Vector3::new(0.5, 0.5, 0.5),
            vel_freq: Vector3::new(0.4, 0.8, 0.6),
            vel_phase: Vector3::new(0.5, 1.7, 0.0),
        }
    }
}

impl TrajectoryProfile {
    fn eval(amp: &Vector3<f64>, freq: &Vector3<f64>, phase: &Vector3<f64>, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            if freq[i] == 0.0 {
                amp[i]
            } else {
                amp[i] * (freq[i] * t + phase[i]).sin()
            }
        })
    }

    pub fn omega(&self, t: f64) -> Vector3<f64> {
        Self::eval(&self.omega_amp, &self.omega_freq, &self.omega_phase, t)
    }

    pub fn vel(&self, t: f64) -> Vector3<f64> {
        Self::eval(&self.vel_amp, &self.vel_freq, &self.vel_phase, t)
    }
}

/// Full scenario description: rates, landmark map, noise levels, initial
/// biases, trajectory profile and the campaign seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub intero_rate: f64,
    pub gps_rate: f64,
    pub landmark_rate: f64,
    pub landmarks: LandmarkMap,
    pub noise: NoiseSpec,
    pub beta_gyro_init: Vector3<f64>,
    pub beta_vel_init: Vector3<f64>,
    pub profile: TrajectoryProfile,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Benchmark defaults: 20 s at 100 Hz, 10 Hz GPS at 0.5 m, 15 Hz
    /// landmark frames over a 20-landmark map, bias walks at 0.005.
    pub fn benchmark_default(seed: u64) -> Self {
        ScenarioConfig {
            duration: 20.0,
            intero_rate: 100.0,
            gps_rate: 10.0,
            landmark_rate: 15.0,
            landmarks: scatter_landmarks(20, 8.0, seed ^ 0x1A5D),
            noise: NoiseSpec::isotropic(0.01, 0.01, 0.005, 0.005, 0.5, 0.1),
            beta_gyro_init: Vector3::new(0.05, 0.05, 0.05),
            beta_vel_init: Vector3::new(0.04, -0.03, 0.06),
            profile: TrajectoryProfile::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || !self.duration.is_finite() {
            return Err(Error::InvalidScenario("duration must be > 0".into()));
        }
        if self.intero_rate <= 0.0 || !self.intero_rate.is_finite() {
            return Err(Error::InvalidScenario("intero_rate must be > 0".into()));
        }
        if self.gps_rate < 0.0 || self.landmark_rate < 0.0 {
            return Err(Error::InvalidScenario("rates must be >= 0".into()));
        }
        if self.landmark_rate > 0.0 && self.landmarks.is_empty() {
            return Err(Error::InvalidScenario(
                "landmark_rate > 0 requires a non-empty landmark map".into(),
            ));
        }
        self.noise.validate()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.intero_rate
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.intero_rate).round() as usize
    }
}

/// Deterministic landmark scatter, uniform in a cube of half-width `extent`.
pub fn scatter_landmarks(count: usize, extent: f64, seed: u64) -> LandmarkMap {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let positions = (0..count)
        .map(|_| Vector3::from_fn(|_, _| (rng.random::<f64>() * 2.0 - 1.0) * extent))
        .collect();
    LandmarkMap::new(positions)
}

/// Mean and per-coordinate standard deviation of the initial error draw.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialErrorSpec {
    pub mean: Vec12,
    pub std: Vec12,
}

impl InitialErrorSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn from_block_values(
        m_phi: f64,
        m_pos: f64,
        m_bias_gyro: f64,
        m_bias_vel: f64,
        s_phi: f64,
        s_pos: f64,
        s_bias_gyro: f64,
        s_bias_vel: f64,
    ) -> Self {
        let fill = |a: f64, b: f64, c: f64, d: f64| {
            let mut v = Vec12::zeros();
            for i in 0..3 {
                v[i] = a;
                v[3 + i] = b;
                v[6 + i] = c;
                v[9 + i] = d;
            }
            v
        };
        InitialErrorSpec {
            mean: fill(m_phi, m_pos, m_bias_gyro, m_bias_vel),
            std: fill(s_phi, s_pos, s_bias_gyro, s_bias_vel),
        }
    }

    /// Low initialization error: pi/12 rad, 0.1 m, 0.005 bias blocks.
    pub fn low_error() -> Self {
        Self::from_block_values(
            std::f64::consts::PI / 12.0,
            0.1,
            0.005,
            0.005,
            std::f64::consts::PI / 36.0,
            0.1,
            0.005,
            0.005,
        )
    }

    /// High initialization error: pi/3 rad, 1 m, 0.03 bias blocks.
    pub fn high_error() -> Self {
        Self::from_block_values(
            std::f64::consts::PI / 3.0,
            1.0,
            0.03,
            0.03,
            std::f64::consts::PI / 36.0,
            0.1,
            0.005,
            0.005,
        )
    }

    /// Diagonal covariance handed to the estimators. The mean offset is
    /// deliberately not folded in: the filters are not told the
    /// initialization is biased.
    pub fn p0(&self) -> Mat12 {
        Mat12::from_fn(|i, j| if i == j { self.std[i] * self.std[i] } else { 0.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidScenario("negative initial std".into()));
        }
        Ok(())
    }
}

/// Noise-free kinematic truth: states plus the body-frame rates that
/// generated them.
#[derive(Debug, Clone)]
pub struct TruthTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GroupElement>,
    pub omega: Vec<Vector3<f64>>,
    pub vel_body: Vec<Vector3<f64>>,
}

/// Integrates the profile at the interoceptive rate from the identity pose.
pub fn synthesize_truth(config: &ScenarioConfig) -> TruthTrajectory {
    let n = config.steps();
    let dt = config.dt();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut omega = Vec::with_capacity(n);
    let mut vel_body = Vec::with_capacity(n);
    times.push(0.0);
    states.push(GroupElement::identity());
    for k in 0..n {
        let t = k as f64 * dt;
        let w = config.profile.omega(t);
        let v = config.profile.vel(t);
        let u = InteroceptiveSample {
            t,
            gyro: w,
            vel: v,
        };
        let next = propagate(states.last().unwrap(), &u, dt);
        states.push(next);
        times.push((k + 1) as f64 * dt);
        omega.push(w);
        vel_body.push(v);
    }
    TruthTrajectory {
        times,
        states,
        omega,
        vel_body,
    }
}

/// Draws from N(0, cov); a zero matrix yields a zero draw.
fn gaussian_draw(cov: &Matrix3<f64>, rng: &mut ChaCha12Rng) -> Vector3<f64> {
    if cov.amax() == 0.0 {
        return Vector3::zeros();
    }
    let chol = cov
        .cholesky()
        .expect("noise covariance must be PSD")
        .l();
    let n = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    chol * n
}

/// Corrupted interoceptive stream plus the true bias walks that produced it.
///
/// The white-noise PSDs are continuous-time: a sample held over `dt` carries
/// variance `Q / dt`, which is exactly what makes the filter's discrete
/// process noise `Q dt` consistent. Bias walks integrate increments of
/// covariance `Q_walk dt`.
pub struct CorruptedIntero {
    pub samples: Vec<InteroceptiveSample>,
    pub bias_gyro: Vec<Vector3<f64>>,
    pub bias_vel: Vec<Vector3<f64>>,
}

pub fn corrupt_interoceptive(
    truth: &TruthTrajectory,
    noise: &NoiseSpec,
    beta_gyro_init: Vector3<f64>,
    beta_vel_init: Vector3<f64>,
    rng: &mut ChaCha12Rng,
) -> CorruptedIntero {
    let n = truth.omega.len();
    let dt_nominal = if n > 0 {
        truth.times[1] - truth.times[0]
    } else {
        1.0
    };
    let walk_gyro_cov = noise.q_bias_gyro * dt_nominal;
    let walk_vel_cov = noise.q_bias_vel * dt_nominal;
    let white_gyro_cov = noise.q_gyro / dt_nominal;
    let white_vel_cov = noise.q_vel / dt_nominal;
    let mut bias_gyro = Vec::with_capacity(n + 1);
    let mut bias_vel = Vec::with_capacity(n + 1);
    bias_gyro.push(beta_gyro_init);
    bias_vel.push(beta_vel_init);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let b1 = bias_gyro[k];
        let b2 = bias_vel[k];
        samples.push(InteroceptiveSample {
            t: truth.times[k],
            gyro: truth.omega[k] - b1 - gaussian_draw(&white_gyro_cov, rng),
            vel: truth.vel_body[k] - b2 - gaussian_draw(&white_vel_cov, rng),
        });
        bias_gyro.push(b1 + gaussian_draw(&walk_gyro_cov, rng));
        bias_vel.push(b2 + gaussian_draw(&walk_vel_cov, rng));
    }
    CorruptedIntero {
        samples,
        bias_gyro,
        bias_vel,
    }
}

/// Artificial exteroceptive measurements generated from ground truth at the
/// configured rates, snapped onto the interoceptive grid.
pub fn generate_extero(
    truth: &TruthTrajectory,
    config: &ScenarioConfig,
    rng: &mut ChaCha12Rng,
) -> Result<MeasurementBatch> {
    let n = truth.omega.len();
    let dt = config.dt();
    let mut items = Vec::new();
    let snap = |t: f64| -> usize { ((t / dt).round() as usize).min(n) };
    if config.gps_rate > 0.0 {
        let count = (config.duration * config.gps_rate).floor() as usize;
        for j in 1..=count {
            let k = snap(j as f64 / config.gps_rate);
            let value = truth.states[k].position() + gaussian_draw(&config.noise.r_gps, rng);
            items.push(ExteroMeasurement::gps(truth.times[k], value));
        }
    }
    if config.landmark_rate > 0.0 {
        let count = (config.duration * config.landmark_rate).floor() as usize;
        for j in 1..=count {
            let k = snap(j as f64 / config.landmark_rate);
            for id in 0..config.landmarks.len() {
                let predicted = landmark_predict(&truth.states[k], &config.landmarks, id)?;
                let value = predicted + gaussian_draw(&config.noise.r_landmark, rng);
                items.push(ExteroMeasurement::landmark(truth.times[k], id, value));
            }
        }
    }
    MeasurementBatch::new(items)
}

/// Draws an initial belief around the true initial state using the given
/// error convention. The belief covariance is the spec's diagonal.
pub fn sample_initial_belief(
    truth0: &GroupElement,
    spec: &InitialErrorSpec,
    convention: ErrorConvention,
    rng: &mut ChaCha12Rng,
) -> Belief {
    let draw = Vec12::from_fn(|i, _| {
        spec.mean[i] + spec.std[i] * rng.sample::<f64, _>(StandardNormal)
    });
    belief_from_error(truth0, &TangentVector(draw), spec, convention)
}

/// Applies a concrete error draw through the convention's error definition.
pub fn belief_from_error(
    truth0: &GroupElement,
    draw: &TangentVector,
    spec: &InitialErrorSpec,
    convention: ErrorConvention,
) -> Belief {
    let state = match convention {
        // Left error log(X^-1 Xhat) equals the draw.
        ErrorConvention::LeftInvariant => truth0.compose(&exp_g(draw)),
        // Right error log(Xhat X^-1) equals the draw.
        ErrorConvention::RightInvariant => exp_g(draw).compose(truth0),
        // Blockwise multiplicative/additive application.
        ErrorConvention::Multiplicative => GroupElement::new(
            truth0.attitude() * so3::exp_so3(&draw.phi()),
            truth0.position() + draw.rho(),
            truth0.bias_gyro() + draw.dbeta1(),
            truth0.bias_vel() + draw.dbeta2(),
        ),
    };
    Belief::new(state, spec.p0(), convention, 0.0)
}

/// Geodesic attitude angle plus Euclidean block errors at one step.
fn block_errors(estimate: &GroupElement, truth: &GroupElement) -> [f64; 4] {
    let angle = {
        let rel = truth.attitude().transpose() * estimate.attitude();
        // Angle from the robust atan2 form; never fails, unlike the full log.
        let skew = 0.5 * (rel - rel.transpose());
        let s = so3::uncross(&skew).norm();
        let c = 0.5 * (rel.trace() - 1.0);
        s.atan2(c)
    };
    [
        angle,
        (estimate.position() - truth.position()).norm(),
        (estimate.bias_gyro() - truth.bias_gyro()).norm(),
        (estimate.bias_vel() - truth.bias_vel()).norm(),
    ]
}

/// Per-step error magnitudes for the four state blocks.
pub fn error_series(
    estimates: &[GroupElement],
    truth: &[GroupElement],
) -> Result<[Vec<f64>; 4]> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: estimates.len(),
        });
    }
    let mut series = [const { Vec::new() }; 4];
    for (e, t) in estimates.iter().zip(truth) {
        let blocks = block_errors(e, t);
        for (s, b) in series.iter_mut().zip(blocks) {
            s.push(b);
        }
    }
    Ok(series)
}

/// Root-mean-square of the per-step block errors.
pub fn rmse(estimates: &[GroupElement], truth: &[GroupElement]) -> Result<[f64; 4]> {
    let series = error_series(estimates, truth)?;
    Ok(series.map(|s| {
        let n = s.len().max(1);
        (s.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt()
    }))
}

/// The estimators a campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Irts,
    Mrts,
    Ign,
    Mgn,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Irts => "irts",
            EstimatorKind::Mrts => "mrts",
            EstimatorKind::Ign => "ign",
            EstimatorKind::Mgn => "mgn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "irts" => Some(EstimatorKind::Irts),
            "mrts" => Some(EstimatorKind::Mrts),
            "ign" => Some(EstimatorKind::Ign),
            "mgn" => Some(EstimatorKind::Mgn),
            _ => None,
        }
    }
}

/// Results of one estimator on one trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub estimator: EstimatorKind,
    /// RMSE per state block after each iteration.
    pub per_iteration: Vec<[f64; 4]>,
    /// Forward-filter RMSE of the returned pass (smoothers only).
    pub forward: Option<[f64; 4]>,
    /// Per-step error magnitudes of the final iteration.
    pub series: [Vec<f64>; 4],
}

/// One row of the aggregated campaign summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    pub state: usize,
    pub iteration: usize,
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

/// Aggregated campaign output: summary rows plus the raw per-trial values
/// they were computed from.
#[derive(Debug, Clone)]
pub struct CampaignStats {
    pub estimators: Vec<EstimatorKind>,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    /// Original trial index of each row in `raw` (failed trials are absent).
    pub trial_ids: Vec<usize>,
    /// `raw[estimator][trial][iteration][state]`.
    pub raw: Vec<Vec<Vec<[f64; 4]>>>,
    /// `forward[estimator][trial][state]`, present for smoothers.
    pub forward: Vec<Option<Vec<[f64; 4]>>>,
    pub summary: Vec<SummaryRow>,
    /// Failed trials, with the step-tagged error text. Never silently
    /// dropped: the count is part of the campaign result.
    pub failures: Vec<(usize, String)>,
}

/// Linear-interpolated percentile of a sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Everything one trial feeds to the estimators: the bias-inclusive truth,
/// the corrupted interoceptive stream and the artificial measurements.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub times: Vec<f64>,
    pub truth: Vec<GroupElement>,
    pub intero: Vec<InteroceptiveSample>,
    pub extero: MeasurementBatch,
}

/// Reproduces the sensor data of campaign trial `trial`: bias walks, sensor
/// noise and artificial measurements, all drawn from the trial's own stream.
pub fn simulate_trial_data(config: &ScenarioConfig, trial: usize) -> Result<TrialData> {
    let truth = synthesize_truth(config);
    trial_data_from_truth(config, &truth, trial)
}

fn trial_data_from_truth(
    config: &ScenarioConfig,
    truth: &TruthTrajectory,
    trial: usize,
) -> Result<TrialData> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64 + 1);
    let corrupted = corrupt_interoceptive(
        truth,
        &config.noise,
        config.beta_gyro_init,
        config.beta_vel_init,
        &mut rng,
    );
    let extero = generate_extero(truth, config, &mut rng)?;
    let truth_full: Vec<GroupElement> = truth
        .states
        .iter()
        .zip(corrupted.bias_gyro.iter().zip(&corrupted.bias_vel))
        .map(|(s, (b1, b2))| s.with_biases(*b1, *b2))
        .collect();
    Ok(TrialData {
        times: truth.times.clone(),
        truth: truth_full,
        intero: corrupted.samples,
        extero,
    })
}

fn run_trial(
    config: &ScenarioConfig,
    error_spec: &InitialErrorSpec,
    truth: &TruthTrajectory,
    estimators: &[EstimatorKind],
    iterations: usize,
    trial: usize,
) -> Result<Vec<TrialResult>> {
    let data = trial_data_from_truth(config, truth, trial)?;
    // One error draw per trial from a dedicated stream, applied through both
    // error definitions so the estimator comparison is paired.
    let mut init_rng = ChaCha12Rng::seed_from_u64(config.seed);
    init_rng.set_stream((trial as u64 + 1) | 0x8000_0000_0000_0000);
    let draw = TangentVector(Vec12::from_fn(|i, _| {
        error_spec.mean[i] + error_spec.std[i] * init_rng.sample::<f64, _>(StandardNormal)
    }));
    let truth_full = &data.truth;
    let init_left = belief_from_error(
        &truth_full[0],
        &draw,
        error_spec,
        ErrorConvention::LeftInvariant,
    );
    let init_mult = belief_from_error(
        &truth_full[0],
        &draw,
        error_spec,
        ErrorConvention::Multiplicative,
    );
    let problem = SmootherProblem {
        intero: &data.intero,
        extero: &data.extero,
        map: &config.landmarks,
        noise: &config.noise,
    };
    let mut results = Vec::with_capacity(estimators.len());
    for &kind in estimators {
        let result = match kind {
            EstimatorKind::Irts | EstimatorKind::Mrts => {
                let (flavor, init) = match kind {
                    EstimatorKind::Irts => (SmootherFlavor::Lirts, &init_left),
                    _ => (SmootherFlavor::Mrts, &init_mult),
                };
                let run = run_smoother(init, &problem, flavor, iterations)?;
                let per_iteration = run
                    .iteration_states
                    .iter()
                    .map(|states| rmse(states, truth_full))
                    .collect::<Result<Vec<_>>>()?;
                let fwd_states: Vec<GroupElement> =
                    run.forward_corr.iter().map(|b| b.state.clone()).collect();
                let forward = Some(rmse(&fwd_states, truth_full)?);
                let final_states: Vec<GroupElement> =
                    run.smoothed.iter().map(|b| b.state.clone()).collect();
                TrialResult {
                    estimator: kind,
                    per_iteration,
                    forward,
                    series: error_series(&final_states, truth_full)?,
                }
            }
            EstimatorKind::Ign | EstimatorKind::Mgn => {
                let (flavor, init) = match kind {
                    EstimatorKind::Ign => (GnFlavor::Invariant, &init_left),
                    _ => (GnFlavor::Multiplicative, &init_mult),
                };
                let batch_problem = BatchProblem {
                    prior: init,
                    intero: &data.intero,
                    extero: &data.extero,
                    map: &config.landmarks,
                    noise: &config.noise,
                };
                let solution = batch::solve(&batch_problem, flavor, iterations)?;
                let per_iteration = solution.snapshots[1..]
                    .iter()
                    .map(|states| rmse(states, truth_full))
                    .collect::<Result<Vec<_>>>()?;
                TrialResult {
                    estimator: kind,
                    per_iteration,
                    forward: None,
                    series: error_series(&solution.states, truth_full)?,
                }
            }
        };
        results.push(result);
    }
    Ok(results)
}

/// Runs `trials` independent Monte-Carlo trials in parallel and aggregates
/// mean plus 2.5 / 97.5 percentile RMSE per estimator, state block and
/// iteration. Per-trial failures are recorded and excluded from the
/// aggregates.
pub fn run_campaign(
    config: &ScenarioConfig,
    error_spec: &InitialErrorSpec,
    estimators: &[EstimatorKind],
    trials: usize,
    iterations: usize,
) -> Result<CampaignStats> {
    if trials == 0 {
        return Err(Error::InvalidScenario("trials must be >= 1".into()));
    }
    config.validate()?;
    error_spec.validate()?;
    let truth = synthesize_truth(config);
    let outcomes: Vec<(usize, Result<Vec<TrialResult>>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            (
                trial,
                run_trial(config, error_spec, &truth, estimators, iterations, trial),
            )
        })
        .collect();

    let mut trial_ids = Vec::with_capacity(trials);
    let mut raw: Vec<Vec<Vec<[f64; 4]>>> = vec![Vec::new(); estimators.len()];
    let mut forward: Vec<Option<Vec<[f64; 4]>>> = vec![None; estimators.len()];
    let mut failures = Vec::new();
    for (trial, outcome) in outcomes {
        match outcome {
            Ok(results) => {
                trial_ids.push(trial);
                for (e_idx, r) in results.into_iter().enumerate() {
                    raw[e_idx].push(r.per_iteration.clone());
                    if let Some(f) = r.forward {
                        forward[e_idx].get_or_insert_with(Vec::new).push(f);
                    }
                }
            }
            Err(e) => failures.push((trial, e.to_string())),
        }
    }
    let mut summary = Vec::new();
    for (e_idx, &estimator) in estimators.iter().enumerate() {
        for iteration in 0..iterations {
            for state in 0..4 {
                let mut values: Vec<f64> = raw[e_idx]
                    .iter()
                    .map(|trial| trial[iteration][state])
                    .collect();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
                summary.push(SummaryRow {
                    estimator,
                    state,
                    iteration,
                    mean,
                    p2_5: percentile(&values, 0.025),
                    p97_5: percentile(&values, 0.975),
                });
            }
        }
    }
    Ok(CampaignStats {
        estimators: estimators.to_vec(),
        iterations,
        trials,
        seed: config.seed,
        trial_ids,
        raw,
        forward,
        summary,
        failures,
    })
}

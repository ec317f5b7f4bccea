//! Cloud-RAN instance generation and the physical-layer quantities of the
//! network power minimization problem.
//!
//! A [`NetworkInstance`] holds one realization: `L` remote radio heads with
//! `N_l` antennas each, `K` single-antenna users, the stacked channel rows
//! `h_k ∈ C^N`, and the power model constants. Everything is stored in watts
//! and linear scale; dB only appears in [`GenConfig`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INSTANCE_FORMAT_VERSION: &str = "v1";

/// How the per-RRH fronthaul link power `P_l^c` is assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FronthaulRule {
    /// `P_l^c = offset + l` for 1-based `l`.
    Linear { offset: f64 },
    /// `P_l^c ~ Uniform[low, high]`, drawn per RRH.
    Uniform { low: f64, high: f64 },
    Constant { watts: f64 },
}

impl Default for FronthaulRule {
    fn default() -> Self {
        FronthaulRule::Linear { offset: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub num_rrh: usize,
    pub num_users: usize,
    pub antennas_per_rrh: usize,
    pub region_half_width_m: f64,
    pub min_distance_m: f64,
    pub max_tx_power_w: f64,
    pub amp_efficiency: f64,
    pub noise_dbm: f64,
    pub tsinr_db: f64,
    pub fronthaul: FronthaulRule,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub shadowing_std_db: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_rrh: 10,
            num_users: 15,
            antennas_per_rrh: 2,
            region_half_width_m: 1000.0,
            min_distance_m: 1.0,
            max_tx_power_w: 1.0,
            amp_efficiency: 0.25,
            noise_dbm: -102.0,
            tsinr_db: 0.0,
            fronthaul: FronthaulRule::default(),
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
            shadowing_std_db: 8.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_rrh == 0 {
            return bad("num_rrh must be positive");
        }
        if self.num_users == 0 {
            return bad("num_users must be positive");
        }
        if self.antennas_per_rrh == 0 {
            return bad("antennas_per_rrh must be positive");
        }
        if !(self.region_half_width_m > 0.0) {
            return bad("region_half_width_m must be positive");
        }
        if !(self.min_distance_m >= 0.0) || self.min_distance_m >= self.region_half_width_m {
            return bad("min_distance_m must be in [0, region_half_width_m)");
        }
        if !(self.max_tx_power_w > 0.0) {
            return bad("max_tx_power_w must be positive");
        }
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return bad("amp_efficiency must be in (0, 1]");
        }
        if !self.noise_dbm.is_finite() || !self.tsinr_db.is_finite() {
            return bad("noise_dbm and tsinr_db must be finite");
        }
        if !(self.shadowing_std_db >= 0.0) {
            return bad("shadowing_std_db must be non-negative");
        }
        match self.fronthaul {
            FronthaulRule::Linear { offset } if !(offset + 1.0 > 0.0) => {
                bad("linear fronthaul rule must give positive powers")
            }
            FronthaulRule::Uniform { low, high } if !(low > 0.0 && high >= low) => {
                bad("uniform fronthaul rule needs 0 < low <= high")
            }
            FronthaulRule::Constant { watts } if !(watts > 0.0) => {
                bad("constant fronthaul power must be positive")
            }
            _ => Ok(()),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One Cloud-RAN realization.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub num_rrh: usize,
    pub num_users: usize,
    pub antennas: Vec<usize>,
    /// `K` rows of length `N`; row `k` stacks `h_{1k}, …, h_{Lk}`.
    pub channels: Vec<Vec<Complex64>>,
    pub noise_vars: Vec<f64>,
    pub max_tx_power: Vec<f64>,
    pub fronthaul_power: Vec<f64>,
    pub amp_efficiency: Vec<f64>,
    pub sinr_targets: Vec<f64>,
    pub seed: u64,
    pub config: Option<GenConfig>,
}

impl NetworkInstance {
    pub fn total_antennas(&self) -> usize {
        self.antennas.iter().sum()
    }

    /// Start index of each RRH's antenna range inside a length-`N` vector.
    pub fn antenna_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_rrh);
        let mut acc = 0;
        for &n in &self.antennas {
            offsets.push(acc);
            acc += n;
        }
        offsets
    }

    pub fn antenna_range(&self, rrh: usize) -> std::ops::Range<usize> {
        let start: usize = self.antennas[..rrh].iter().sum();
        start..start + self.antennas[rrh]
    }

    /// Same realization with every SINR target set to `tsinr_db`.
    pub fn with_tsinr_db(&self, tsinr_db: f64) -> Self {
        let mut out = self.clone();
        let gamma = db_to_linear(tsinr_db);
        out.sinr_targets = vec![gamma; self.num_users];
        if let Some(cfg) = out.config.as_mut() {
            cfg.tsinr_db = tsinr_db;
        }
        out
    }

    /// `Σ_k ‖h_{lk}‖²` for each RRH `l`.
    pub fn channel_gains(&self) -> Vec<f64> {
        (0..self.num_rrh)
            .map(|l| {
                let range = self.antenna_range(l);
                self.channels
                    .iter()
                    .map(|row| row[range.clone()].iter().map(|h| h.norm_sqr()).sum::<f64>())
                    .sum()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (l, k) = (self.num_rrh, self.num_users);
        if l == 0 || k == 0 {
            return Err(Error::Config("instance needs at least one RRH and one user".into()));
        }
        for (what, len, want) in [
            ("antennas", self.antennas.len(), l),
            ("max_tx_power", self.max_tx_power.len(), l),
            ("fronthaul_power", self.fronthaul_power.len(), l),
            ("amp_efficiency", self.amp_efficiency.len(), l),
            ("noise_vars", self.noise_vars.len(), k),
            ("sinr_targets", self.sinr_targets.len(), k),
            ("channel rows", self.channels.len(), k),
        ] {
            if len != want {
                return Err(Error::dimension(what, want, len));
            }
        }
        let n = self.total_antennas();
        if let Some(row) = self.channels.iter().find(|row| row.len() != n) {
            return Err(Error::dimension("channel row", n, row.len()));
        }
        let positive = self
            .max_tx_power
            .iter()
            .chain(&self.fronthaul_power)
            .chain(&self.amp_efficiency)
            .chain(&self.noise_vars)
            .chain(&self.sinr_targets)
            .all(|&v| v > 0.0 && v.is_finite());
        if !positive || self.antennas.contains(&0) {
            return Err(Error::Config("powers, noise, efficiencies and targets must be positive".into()));
        }
        if self.amp_efficiency.iter().any(|&e| e > 1.0) {
            return Err(Error::Config("amp_efficiency must be at most 1".into()));
        }
        Ok(())
    }
}

/// Aggregate beamformer `w = [w_1; …; w_K]`, each `w_k ∈ C^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    num_antennas: usize,
    num_users: usize,
    data: Vec<Complex64>,
}

impl Beamformer {
    pub fn zeros(num_antennas: usize, num_users: usize) -> Self {
        Beamformer {
            num_antennas,
            num_users,
            data: vec![Complex64::new(0.0, 0.0); num_antennas * num_users],
        }
    }

    pub fn from_vec(num_antennas: usize, num_users: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != num_antennas * num_users {
            return Err(Error::dimension("beamformer", num_antennas * num_users, data.len()));
        }
        Ok(Beamformer {
            num_antennas,
            num_users,
            data,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn user(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.num_antennas..(k + 1) * self.num_antennas]
    }

    pub fn user_mut(&mut self, k: usize) -> &mut [Complex64] {
        let n = self.num_antennas;
        &mut self.data[k * n..(k + 1) * n]
    }

    /// `Σ_k ‖w_{lk}‖²` for the given antenna range.
    pub fn block_energy(&self, range: std::ops::Range<usize>) -> f64 {
        (0..self.num_users)
            .map(|k| self.user(k)[range.clone()].iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Zero every user's block on the given antenna range.
    pub fn clear_block(&mut self, range: std::ops::Range<usize>) {
        for k in 0..self.num_users {
            for c in &mut self.user_mut(k)[range.clone()] {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    fn check_shape(&self, instance: &NetworkInstance) -> Result<()> {
        let n = instance.total_antennas();
        if self.num_antennas != n || self.num_users != instance.num_users {
            return Err(Error::dimension(
                "beamformer",
                n * instance.num_users,
                self.num_antennas * self.num_users,
            ));
        }
        Ok(())
    }
}

fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(h, w)| h.conj() * w).sum()
}

/// `f1(a) = Σ_l a_l P_l^c`.
pub fn fronthaul_power(a: &[f64], instance: &NetworkInstance) -> Result<f64> {
    if a.len() != instance.num_rrh {
        return Err(Error::dimension("mode vector", instance.num_rrh, a.len()));
    }
    Ok(a.iter().zip(&instance.fronthaul_power).map(|(a, p)| a * p).sum())
}

/// `f2(w) = Σ_l Σ_k ‖w_{lk}‖² / η_l`.
pub fn transmit_power(w: &Beamformer, instance: &NetworkInstance) -> Result<f64> {
    w.check_shape(instance)?;
    Ok((0..instance.num_rrh)
        .map(|l| w.block_energy(instance.antenna_range(l)) / instance.amp_efficiency[l])
        .sum())
}

/// Linear-scale SINR of user `k` (0-based).
pub fn sinr(instance: &NetworkInstance, w: &Beamformer, k: usize) -> Result<f64> {
    w.check_shape(instance)?;
    if k >= instance.num_users {
        return Err(Error::Logic(format!("user index {k} out of range")));
    }
    let h = &instance.channels[k];
    let signal = inner(h, w.user(k)).norm_sqr();
    let interference: f64 = (0..instance.num_users)
        .filter(|&i| i != k)
        .map(|i| inner(h, w.user(i)).norm_sqr())
        .sum();
    Ok(signal / (interference + instance.noise_vars[k]))
}

/// True iff every SINR meets its target and every RRH respects `a_l·P_l`,
/// both up to the relative tolerance `tol`.
pub fn check_feasible(instance: &NetworkInstance, w: &Beamformer, a: &[f64], tol: f64) -> bool {
    if a.len() != instance.num_rrh || w.check_shape(instance).is_err() {
        return false;
    }
    let sinr_ok = (0..instance.num_users).all(|k| {
        sinr(instance, w, k).is_ok_and(|s| s >= instance.sinr_targets[k] * (1.0 - tol))
    });
    sinr_ok
        && (0..instance.num_rrh).all(|l| {
            w.block_energy(instance.antenna_range(l)) <= a[l] * instance.max_tx_power[l] * (1.0 + tol)
        })
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw one realization. Deterministic in `(config, seed)`.
pub fn generate_instance(config: &GenConfig, seed: u64) -> Result<NetworkInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l_count, k_count) = (config.num_rrh, config.num_users);
    let half = config.region_half_width_m;

    let point = |rng: &mut ChaCha8Rng| (rng.gen_range(-half..=half), rng.gen_range(-half..=half));
    let rrh_pos: Vec<(f64, f64)> = (0..l_count).map(|_| point(&mut rng)).collect();
    let mut user_pos = Vec::with_capacity(k_count);
    while user_pos.len() < k_count {
        let p = point(&mut rng);
        let too_close = rrh_pos
            .iter()
            .any(|r| ((r.0 - p.0).powi(2) + (r.1 - p.1).powi(2)).sqrt() < config.min_distance_m);
        if !too_close {
            user_pos.push(p);
        }
    }

    let fronthaul_power: Vec<f64> = match config.fronthaul {
        FronthaulRule::Linear { offset } => (1..=l_count).map(|l| offset + l as f64).collect(),
        FronthaulRule::Uniform { low, high } => {
            (0..l_count).map(|_| if high > low { rng.gen_range(low..=high) } else { low }).collect()
        }
        FronthaulRule::Constant { watts } => vec![watts; l_count],
    };

    let n_l = config.antennas_per_rrh;
    let mut channels = Vec::with_capacity(k_count);
    for &(ux, uy) in &user_pos {
        let mut row = Vec::with_capacity(l_count * n_l);
        for &(rx, ry) in &rrh_pos {
            let d_km = ((rx - ux).powi(2) + (ry - uy).powi(2)).sqrt() / 1000.0;
            let shadow: f64 = StandardNormal.sample(&mut rng);
            let loss_db = config.pathloss_intercept_db
                + config.pathloss_slope_db * d_km.log10()
                + config.shadowing_std_db * shadow;
            let amplitude = db_to_linear(-loss_db).sqrt();
            for _ in 0..n_l {
                row.push(complex_gaussian(&mut rng) * amplitude);
            }
        }
        channels.push(row);
    }

    let instance = NetworkInstance {
        num_rrh: l_count,
        num_users: k_count,
        antennas: vec![n_l; l_count],
        channels,
        noise_vars: vec![dbm_to_watts(config.noise_dbm); k_count],
        max_tx_power: vec![config.max_tx_power_w; l_count],
        fronthaul_power,
        amp_efficiency: vec![config.amp_efficiency; l_count],
        sinr_targets: vec![db_to_linear(config.tsinr_db); k_count],
        seed,
        config: Some(config.clone()),
    };
    instance.validate()?;
    Ok(instance)
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    version: String,
    seed: u64,
    num_rrh: usize,
    num_users: usize,
    antennas: Vec<usize>,
    channels: Vec<Vec<[f64; 2]>>,
    noise_vars: Vec<f64>,
    max_tx_power: Vec<f64>,
    fronthaul_power: Vec<f64>,
    amp_efficiency: Vec<f64>,
    sinr_targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<GenConfig>,
}

impl Serialize for NetworkInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceFile {
            version: INSTANCE_FORMAT_VERSION.to_string(),
            seed: self.seed,
            num_rrh: self.num_rrh,
            num_users: self.num_users,
            antennas: self.antennas.clone(),
            channels: self
                .channels
                .iter()
                .map(|row| row.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
            noise_vars: self.noise_vars.clone(),
            max_tx_power: self.max_tx_power.clone(),
            fronthaul_power: self.fronthaul_power.clone(),
            amp_efficiency: self.amp_efficiency.clone(),
            sinr_targets: self.sinr_targets.clone(),
            config: self.config.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = InstanceFile::deserialize(d)?;
        if file.version != INSTANCE_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "unsupported instance format version {:?}",
                file.version
            )));
        }
        let instance = NetworkInstance {
            num_rrh: file.num_rrh,
            num_users: file.num_users,
            antennas: file.antennas,
            channels: file
                .channels
                .into_iter()
                .map(|row| row.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
                .collect(),
            noise_vars: file.noise_vars,
            max_tx_power: file.max_tx_power,
            fronthaul_power: file.fronthaul_power,
            amp_efficiency: file.amp_efficiency,
            sinr_targets: file.sinr_targets,
            seed: file.seed,
            config: file.config,
        };
        instance.validate().map_err(D::Error::custom)?;
        Ok(instance)
    }
}

pub fn save_instance(instance: &NetworkInstance, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string(instance)?)?;
    Ok(())
}

pub fn load_instance(path: &std::path::Path) -> Result<NetworkInstance> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

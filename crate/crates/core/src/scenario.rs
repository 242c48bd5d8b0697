//! TOML scenario files: everything needed to reproduce a simulated run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Result, SivoError};
use crate::geometry::Pose3;
use crate::selection::{SelectionConfig, Strategy};
use crate::semantics::Taxonomy;
use crate::sim::{
    generate_trajectory, generate_world, run_sequence, DropoutSimConfig, EstimatorSettings,
    NoiseConfig, SensorSimConfig, SequenceResult, TrajectoryConfig, World, WorldConfig,
};

/// Selection parameters shared by every strategy of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSelection {
    pub strategies: Vec<Strategy>,
    pub threshold_bits: f64,
    pub mc_samples: usize,
    #[serde(default)]
    pub max_selected: Option<usize>,
}

impl ScenarioSelection {
    pub fn config_for(&self, strategy: Strategy) -> SelectionConfig {
        SelectionConfig {
            threshold_bits: self.threshold_bits,
            strategy,
            mc_samples: self.mc_samples,
            max_selected: self.max_selected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Seed for measurement, odometry and segmentation noise. The world has its own.
    pub seed: u64,
    #[serde(default = "CameraRig::kitti_00")]
    pub rig: CameraRig,
    pub world: WorldConfig,
    pub trajectory: TrajectoryConfig,
    pub noise: NoiseConfig,
    pub dropout: DropoutSimConfig,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    pub selection: ScenarioSelection,
}

/// The loop fixture shipped with the command-line tool.
pub const DEFAULT_LOOP_TOML: &str = include_str!("../../../scenarios/loop.toml");

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| SivoError::InvalidConfig(e.message().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SivoError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn default_loop() -> Self {
        Self::from_toml(DEFAULT_LOOP_TOML).expect("bundled scenario is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        self.dropout.validate()?;
        if self.selection.strategies.is_empty() {
            return Err(SivoError::InvalidConfig("at least one strategy is required".into()));
        }
        for &s in &self.selection.strategies {
            self.selection.config_for(s).validate()?;
        }
        Ok(())
    }

    pub fn build_world(&self) -> Result<World> {
        generate_world(&self.world, &Taxonomy::default())
    }

    pub fn build_trajectory(&self) -> Result<Vec<Pose3>> {
        generate_trajectory(&self.trajectory)
    }

    pub fn sensors(&self) -> SensorSimConfig {
        SensorSimConfig {
            noise: self.noise,
            dropout: self.dropout,
        }
    }

    /// Runs one strategy on a prebuilt world and trajectory.
    pub fn run(
        &self,
        world: &World,
        trajectory: &[Pose3],
        selection: &SelectionConfig,
    ) -> Result<SequenceResult> {
        run_sequence(
            world,
            trajectory,
            &self.rig,
            selection,
            &self.estimator,
            &self.sensors(),
            self.seed,
        )
    }
}

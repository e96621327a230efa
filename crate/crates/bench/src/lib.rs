//! Shared fixtures for the stage benchmarks.

use std::collections::BTreeMap;

use roomrecon::io::SceneBundle;
use roomrecon::placement::PlacementInput;
use roomrecon::synth::{make_scene, GroundTruthScene, NoiseConfig};
use roomrecon::ModelEntry;

pub struct Fixture {
    pub truth: GroundTruthScene,
    pub bundle: SceneBundle,
    pub models: BTreeMap<u32, ModelEntry>,
    /// Truth heights with the category's models as candidates.
    pub inputs: Vec<PlacementInput>,
}

pub fn fixture(seed: u64, objects: usize) -> Fixture {
    let (truth, bundle) = make_scene(seed, objects, &NoiseConfig::default()).expect("synthetic scene");
    let models = bundle.models.iter().map(|m| (m.model_id, ModelEntry::new(m.model_id, m.mesh.clone()))).collect();
    let inputs = bundle
        .instances
        .iter()
        .map(|inst| {
            let o = truth.object(inst.id).expect("instance has truth");
            PlacementInput {
                instance: inst.id,
                category: inst.category,
                mask: inst.mask.clone(),
                height: o.height,
                top_altitude: o.top_altitude,
                candidates: bundle
                    .models
                    .iter()
                    .filter(|m| m.category == Some(inst.category))
                    .map(|m| m.model_id)
                    .collect(),
                orientations: None,
            }
        })
        .collect();
    Fixture { truth, bundle, models, inputs }
}

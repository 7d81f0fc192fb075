mod common;

use tada::data::generate_toy_dataset;
use tada::datamodel::Domain;
use tada::losses::{LossWeights, Stage};
use tada::networks::{Head, TaskArch, TaskNetwork, TensorArchive};
use tada::pipeline::{train_gan, EpochLosses, EvalPoint, GanConfig, GanData, GanHooks, GanPlan, GanState};
use tada::{Error, Result};

/// Snapshots the state after `after` epochs and then aborts the run.
struct Interrupt {
    after: usize,
    snapshot: Option<Vec<u8>>,
}

impl GanHooks for Interrupt {
    fn on_epoch(&mut self, state: &GanState, _: &EpochLosses, _: Option<&EvalPoint>) -> Result<()> {
        if state.epoch < self.after {
            return Ok(());
        }
        self.snapshot = Some(state.to_archive()?.encode()?);
        Err(Error::usage("interrupted"))
    }
}

#[test]
fn resuming_from_a_snapshot_matches_an_uninterrupted_run() {
    let (garch, darch) = common::tiny_gan_archs();
    let real = generate_toy_dataset(&common::tiny_world(1), 6, Domain::Real, Head::Segmenter).unwrap();
    let synthetic = generate_toy_dataset(&common::tiny_world(2), 6, Domain::Synthetic, Head::Segmenter).unwrap();
    let real_val = generate_toy_dataset(&common::tiny_world(3), 2, Domain::Real, Head::Segmenter).unwrap();
    let expert = TaskNetwork::<f32>::new(TaskArch::segmenter(4), 0).unwrap().freeze();
    let data = GanData {
        real: &real,
        synthetic: &synthetic,
        real_val: &real_val,
        expert: &expert,
    };
    let plan = GanPlan {
        stage: Stage::C,
        weights: LossWeights {
            alpha: 0.5,
            gamma: 2.0,
            ..LossWeights::default()
        },
        epochs: 3,
        decay_epochs: 2,
        steps_per_epoch: 3,
        batch_size: 2,
        lr: 2e-4,
        eval_every: 1,
        phase: 0xC,
    };
    let cfg = GanConfig {
        pool_size: 4,
        ..GanConfig::default()
    };
    let start = GanState::new(garch, darch, &cfg, 5).unwrap();

    let mut straight = start.clone();
    train_gan(&mut straight, &plan, &data, 9, &mut ()).unwrap();

    let mut first = start;
    let mut hook = Interrupt {
        after: 1,
        snapshot: None,
    };
    assert!(train_gan(&mut first, &plan, &data, 9, &mut hook).is_err());
    let bytes = hook.snapshot.expect("snapshot after the first epoch");
    let mut resumed = GanState::from_archive(&TensorArchive::decode(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.epoch, 1);
    train_gan(&mut resumed, &plan, &data, 9, &mut ()).unwrap();

    assert_eq!(resumed.step, straight.step);
    assert_eq!(resumed.g_r2s.params(), straight.g_r2s.params());
    assert_eq!(resumed.d_s.params(), straight.d_s.params());
    let (a, b) = (resumed.best.unwrap(), straight.best.unwrap());
    assert_eq!((a.metric, a.epoch), (b.metric, b.epoch));
}

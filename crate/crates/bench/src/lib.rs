//! Inputs shared by the benchmarks.

use contra_core::flowlabel::{compensate, CompensatedFlow};
use contra_core::preprocess::{preprocess, PreprocessParams};
use contra_core::synth::{self, SynthParams};
use contra_core::{ImageSize, PointCloud};

/// Points of `cloud` widened to `f64`, the layout the clustering kernels take.
pub fn as_f64(cloud: &PointCloud) -> Vec<[f64; 3]> {
    cloud.points.iter().map(|p| p.map(f64::from)).collect()
}

/// First preprocessed frame of the synthetic sequence with its compensated
/// flow.
pub fn synth_frame() -> (PointCloud, CompensatedFlow) {
    let params = SynthParams {
        frames: 2,
        ..SynthParams::default()
    };
    let pre_params = PreprocessParams::default();
    let seq = synth::generate(&params, &pre_params, ImageSize::KITTI).expect("synthetic sequence");
    let frame = &seq.frames[0];
    let pre = preprocess(&frame.cloud, &seq.calib, ImageSize::KITTI, Some(&frame.ground), &pre_params)
        .expect("preprocessing");
    let next_to_current = seq.poses[0].inverse().compose(&seq.poses[1]);
    let flow = frame.flow.as_ref().expect("flow for the first frame");
    let comp = compensate(&pre.cloud, flow, &next_to_current, 0.1).expect("compensation");
    (pre.cloud, comp)
}

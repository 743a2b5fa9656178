use serde::{Deserialize, Serialize};

use super::SimConfig;

/// Channels that share a publish rate. `Imu` covers the body and camera IMUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelGroup {
    Clock,
    Start,
    Imu,
    Tf,
    Joints,
    CamPose,
    Odom,
    Rgb,
    Depth,
}

fn due(k: u64, physics_hz: u32, rate: u32) -> bool {
    k % (physics_hz / rate) as u64 == 0
}

/// Groups published at step `k`, in emission order.
pub fn schedule_channels(k: u64, cfg: &SimConfig) -> Vec<ChannelGroup> {
    let r = &cfg.rates;
    let hz = cfg.physics_hz;
    let mut out = Vec::with_capacity(9);
    if due(k, hz, r.clock) {
        out.push(ChannelGroup::Clock);
    }
    if k == cfg.bootstrap_steps {
        out.push(ChannelGroup::Start);
    }
    let periodic = [
        (ChannelGroup::Imu, r.imu),
        (ChannelGroup::Tf, r.tf),
        (ChannelGroup::Joints, r.joints),
        (ChannelGroup::CamPose, r.cam_pose),
        (ChannelGroup::Odom, r.odom),
        (ChannelGroup::Rgb, r.rgb),
        (ChannelGroup::Depth, r.depth),
    ];
    out.extend(periodic.into_iter().filter(|&(_, rate)| due(k, hz, rate)).map(|(g, _)| g));
    out
}

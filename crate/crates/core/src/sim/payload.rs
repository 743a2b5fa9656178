//! Record payload encodings, little-endian throughout.
//!
//! | type tag | layout |
//! |---|---|
//! | `clock` | u64 stamp_ns |
//! | `start` | u64 step index |
//! | `imu` | 6 × f64: angular velocity xyz (rad/s), specific force xyz (m/s²) |
//! | `tf` | 14 × f64: body pose then camera optical pose, each px py pz qx qy qz qw |
//! | `joints` | 12 × f64: q (x y z roll pitch yaw), qdot |
//! | `pose` | 7 × f64: px py pz qx qy qz qw |
//! | `odom` | 13 × f64: pose, world linear velocity xyz, body angular velocity xyz |
//! | `gray8` | u16 width, u16 height, width·height u8 |
//! | `depth32f` | u16 width, u16 height, width·height f32 meters (0 = invalid) |
//! | `gray8_rows` | `gray8` payload, then height × u64 per-row stamp_ns |

use nalgebra::{Point3, Vector3, Vector6};

use crate::geometry::Pose;

pub const T_CLOCK: &str = "clock";
pub const T_START: &str = "start";
pub const T_IMU: &str = "imu";
pub const T_TF: &str = "tf";
pub const T_JOINTS: &str = "joints";
pub const T_POSE: &str = "pose";
pub const T_ODOM: &str = "odom";
pub const T_GRAY8: &str = "gray8";
pub const T_DEPTH: &str = "depth32f";
pub const T_GRAY8_ROWS: &str = "gray8_rows";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed {kind} payload: {message}")]
pub struct PayloadError {
    pub kind: &'static str,
    pub message: String,
}

fn err(kind: &'static str, message: impl Into<String>) -> PayloadError {
    PayloadError {
        kind,
        message: message.into(),
    }
}

pub fn f64s(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

pub fn read_f64s(kind: &'static str, bytes: &[u8], n: usize) -> Result<Vec<f64>, PayloadError> {
    if bytes.len() != n * 8 {
        return Err(err(kind, format!("expected {} bytes, got {}", n * 8, bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn pose_values(p: &Pose) -> [f64; 7] {
    let q = p.quaternion_xyzw();
    [p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]]
}

pub fn pose_from_values(kind: &'static str, v: &[f64]) -> Result<Pose, PayloadError> {
    Pose::from_parts(Point3::new(v[0], v[1], v[2]), [v[3], v[4], v[5], v[6]]).map_err(|e| err(kind, e.to_string()))
}

pub fn encode_u64(v: u64) -> Vec<u8> {
    v.to_le_bytes().to_vec()
}

pub fn decode_u64(bytes: &[u8]) -> Result<u64, PayloadError> {
    Ok(u64::from_le_bytes(bytes.try_into().map_err(|_| err("u64", "expected 8 bytes"))?))
}

pub fn encode_imu(gyro: &Vector3<f64>, force: &Vector3<f64>) -> Vec<u8> {
    f64s(gyro.iter().chain(force.iter()).copied())
}

pub fn decode_imu(bytes: &[u8]) -> Result<(Vector3<f64>, Vector3<f64>), PayloadError> {
    let v = read_f64s(T_IMU, bytes, 6)?;
    Ok((Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])))
}

pub fn encode_pose(p: &Pose) -> Vec<u8> {
    f64s(pose_values(p))
}

pub fn decode_pose(bytes: &[u8]) -> Result<Pose, PayloadError> {
    pose_from_values(T_POSE, &read_f64s(T_POSE, bytes, 7)?)
}

pub fn encode_tf(body: &Pose, camera: &Pose) -> Vec<u8> {
    f64s(pose_values(body).into_iter().chain(pose_values(camera)))
}

pub fn encode_joints(q: &Vector6<f64>, qdot: &Vector6<f64>) -> Vec<u8> {
    f64s(q.iter().chain(qdot.iter()).copied())
}

pub fn decode_joints(bytes: &[u8]) -> Result<(Vector6<f64>, Vector6<f64>), PayloadError> {
    let v = read_f64s(T_JOINTS, bytes, 12)?;
    Ok((Vector6::from_column_slice(&v[..6]), Vector6::from_column_slice(&v[6..])))
}

pub fn encode_odom(pose: &Pose, linear: &Vector3<f64>, angular: &Vector3<f64>) -> Vec<u8> {
    f64s(pose_values(pose).into_iter().chain(linear.iter().copied()).chain(angular.iter().copied()))
}

fn image_header(kind: &'static str, width: u32, height: u32) -> Vec<u8> {
    let w = u16::try_from(width).unwrap_or_else(|_| panic!("{kind} width {width} exceeds u16"));
    let h = u16::try_from(height).unwrap_or_else(|_| panic!("{kind} height {height} exceeds u16"));
    let mut v = Vec::new();
    v.extend_from_slice(&w.to_le_bytes());
    v.extend_from_slice(&h.to_le_bytes());
    v
}

fn read_header(kind: &'static str, bytes: &[u8]) -> Result<(u32, u32), PayloadError> {
    if bytes.len() < 4 {
        return Err(err(kind, "missing image header"));
    }
    let w = u16::from_le_bytes([bytes[0], bytes[1]]) as u32;
    let h = u16::from_le_bytes([bytes[2], bytes[3]]) as u32;
    Ok((w, h))
}

/// Grayscale image with its dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let mut v = image_header(T_GRAY8, img.width, img.height);
    v.extend_from_slice(&img.data);
    v
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, PayloadError> {
    let (w, h) = read_header(T_GRAY8, bytes)?;
    let n = (w * h) as usize;
    if bytes.len() != 4 + n {
        return Err(err(T_GRAY8, format!("{w}x{h} image needs {} bytes, got {}", 4 + n, bytes.len())));
    }
    Ok(GrayImage {
        width: w,
        height: h,
        data: bytes[4..].to_vec(),
    })
}

pub fn encode_gray_rows(img: &GrayImage, row_stamps: &[u64]) -> Vec<u8> {
    let mut v = encode_gray(img);
    for s in row_stamps {
        v.extend_from_slice(&s.to_le_bytes());
    }
    v
}

pub fn decode_gray_rows(bytes: &[u8]) -> Result<(GrayImage, Vec<u64>), PayloadError> {
    let (w, h) = read_header(T_GRAY8_ROWS, bytes)?;
    let n = 4 + (w * h) as usize;
    if bytes.len() != n + 8 * h as usize {
        return Err(err(T_GRAY8_ROWS, "length does not match dimensions"));
    }
    let img = decode_gray(&bytes[..n])?;
    let stamps = bytes[n..].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((img, stamps))
}

pub fn encode_depth(img: &DepthImage) -> Vec<u8> {
    let mut v = image_header(T_DEPTH, img.width, img.height);
    for d in &img.data {
        v.extend_from_slice(&d.to_le_bytes());
    }
    v
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage, PayloadError> {
    let (w, h) = read_header(T_DEPTH, bytes)?;
    let n = (w * h) as usize;
    if bytes.len() != 4 + 4 * n {
        return Err(err(T_DEPTH, format!("{w}x{h} image needs {} bytes, got {}", 4 + 4 * n, bytes.len())));
    }
    Ok(DepthImage {
        width: w,
        height: h,
        data: bytes[4..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
    })
}

/// Human-readable CSV fields for a payload of a known type, else hex.
pub fn describe(payload_type: &str, bytes: &[u8]) -> String {
    let join = |v: Vec<f64>| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
    let decoded = match payload_type {
        T_CLOCK | T_START => decode_u64(bytes).ok().map(|v| v.to_string()),
        T_IMU => read_f64s(T_IMU, bytes, 6).ok().map(join),
        T_TF => read_f64s(T_TF, bytes, 14).ok().map(join),
        T_JOINTS => read_f64s(T_JOINTS, bytes, 12).ok().map(join),
        T_POSE => read_f64s(T_POSE, bytes, 7).ok().map(join),
        T_ODOM => read_f64s(T_ODOM, bytes, 13).ok().map(join),
        T_GRAY8 | T_GRAY8_ROWS | T_DEPTH => read_header(T_GRAY8, bytes).ok().map(|(w, h)| format!("{w}x{h}")),
        _ => None,
    };
    decoded.unwrap_or_else(|| bytes.iter().map(|b| format!("{b:02x}")).collect())
}

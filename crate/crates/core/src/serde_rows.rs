//! Serializes a `Matrix4` as four row arrays, matching how covariance
//! matrices are printed.

use nalgebra::Matrix4;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(m: &Matrix4<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
    rows.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix4<f64>, D::Error> {
    let rows = <[[f64; 4]; 4]>::deserialize(d)?;
    Ok(Matrix4::from_fn(|i, j| rows[i][j]))
}

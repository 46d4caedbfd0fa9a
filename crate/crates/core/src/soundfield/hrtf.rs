use crate::scene::{HrirPair, HrirSet};

fn mix(a: &[f64], b: &[f64], frac: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x * (1.0 - frac) + y * frac)
        .collect()
}

/// HRIR pair for an azimuth in degrees (any value; wrapped into [0, 360)).
///
/// Grid points are returned as stored. Between grid points the two nearest
/// responses are blended sample by sample, wrapping across 360/0.
pub fn hrtf_for_azimuth(set: &HrirSet, azimuth: f64) -> HrirPair {
    let mut q = azimuth.rem_euclid(360.0);
    if q >= 360.0 {
        q = 0.0;
    }
    let entries = set.entries();
    let n = entries.len();
    let idx = entries.partition_point(|(a, _)| *a <= q);
    if idx > 0 && entries[idx - 1].0 == q {
        return entries[idx - 1].1.clone();
    }
    let (lo_az, lo) = if idx == 0 {
        (entries[n - 1].0 - 360.0, &entries[n - 1].1)
    } else {
        (entries[idx - 1].0, &entries[idx - 1].1)
    };
    let (hi_az, hi) = if idx == n {
        (entries[0].0 + 360.0, &entries[0].1)
    } else {
        (entries[idx].0, &entries[idx].1)
    };
    let frac = (q - lo_az) / (hi_az - lo_az);
    HrirPair {
        left: mix(&lo.left, &hi.left, frac),
        right: mix(&lo.right, &hi.right, frac),
    }
}

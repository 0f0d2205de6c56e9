use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::windows::ClipWindow;
use crate::dataio::SensorLog;
use crate::error::{Error, Result};

/// What to do with a clip window that contains no sensor sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolPolicy {
    Error,
    /// Repeat the previous window's pooled vector.
    ForwardFill,
}

impl fmt::Display for PoolPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolPolicy::Error => "error",
            PoolPolicy::ForwardFill => "forward-fill",
        })
    }
}

impl FromStr for PoolPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(PoolPolicy::Error),
            "forward-fill" => Ok(PoolPolicy::ForwardFill),
            other => Err(Error::config(format!("unknown pool policy {other:?}"))),
        }
    }
}

/// Per-channel maximum over the samples inside `window`'s time range.
/// Fails when the window holds no sample.
pub fn pool_sensor(log: &SensorLog, window: &ClipWindow, pool_abs: bool) -> Result<Vec<f64>> {
    let lo = log.timestamps.partition_point(|&t| t < window.time_start);
    let hi = log.timestamps.partition_point(|&t| t < window.time_end);
    if lo >= hi {
        return Err(Error::validation(format!(
            "video {:?}: no sensor sample inside clip {} ([{:.4}, {:.4}) s)",
            log.video_id, window.clip_index, window.time_start, window.time_end
        )));
    }
    let mut pooled = vec![f64::NEG_INFINITY; log.channel_count()];
    for row in &log.rows[lo..hi] {
        for (p, &v) in pooled.iter_mut().zip(row) {
            let v = if pool_abs { v.abs() } else { v };
            if v > *p {
                *p = v;
            }
        }
    }
    Ok(pooled)
}

/// Pools every window, applying `policy` to windows without samples.
pub fn pool_clips(
    log: &SensorLog,
    windows: &[ClipWindow],
    policy: PoolPolicy,
    pool_abs: bool,
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(windows.len());
    for w in windows {
        match pool_sensor(log, w, pool_abs) {
            Ok(v) => out.push(v),
            Err(e) => match (policy, out.last()) {
                (PoolPolicy::ForwardFill, Some(prev)) => {
                    log::warn!(
                        "video {:?}: forward-filling sensor pool for clip {}",
                        log.video_id,
                        w.clip_index
                    );
                    out.push(prev.clone());
                }
                _ => return Err(e),
            },
        }
    }
    Ok(out)
}

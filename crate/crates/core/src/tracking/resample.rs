use super::script::{check_rate, sample_times};
use super::{ObservationFrame, TrackingError};
use crate::geom::quantize_angle;

/// Shortest signed angular step from `a` to `b`, in `(-180, 180]`.
fn shortest(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Resamples onto the grid `t0 + round(k * 1000 / rate)`. Marker sets and
/// contact flags are held from the latest input frame at or before each
/// instant; positions and rotations of records present in both neighbours
/// are interpolated linearly (rotations along the shorter arc).
pub fn resample_stream(frames: &[ObservationFrame], new_rate_hz: f64) -> Result<Vec<ObservationFrame>, TrackingError> {
    check_rate(new_rate_hz)?;
    let (Some(first), Some(last)) = (frames.first(), frames.last()) else {
        return Ok(vec![]);
    };
    if let Some(w) = frames.windows(2).find(|w| w[1].t_ms <= w[0].t_ms) {
        return Err(TrackingError::Timestamp {
            line: None,
            t_ms: w[1].t_ms,
            previous_ms: w[0].t_ms,
        });
    }
    let mut out = Vec::new();
    let mut i = 0;
    for t in sample_times(new_rate_hz, first.t_ms, last.t_ms)? {
        while i + 1 < frames.len() && frames[i + 1].t_ms <= t {
            i += 1;
        }
        let cur = &frames[i];
        let mut frame = cur.clone();
        frame.t_ms = t;
        if let Some(next) = frames.get(i + 1) {
            let f = (t - cur.t_ms) as f64 / (next.t_ms - cur.t_ms) as f64;
            if f > 0.0 {
                for m in &mut frame.markers {
                    if let Some(n) = next.marker(m.fiducial_id) {
                        m.center = m.center.lerp(n.center, f);
                        m.rotation_deg = quantize_angle(m.rotation_deg + shortest(m.rotation_deg, n.rotation_deg) * f);
                    }
                }
                for h in &mut frame.hands {
                    if let Some(n) = next.hands.iter().find(|n| n.hand_id == h.hand_id) {
                        h.fingertip = h.fingertip.lerp(n.fingertip, f);
                    }
                }
            }
        }
        out.push(frame.canonical());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::tracking::MarkerObservation;

    fn static_stream(rate: f64, dur_ms: u64) -> Vec<ObservationFrame> {
        sample_times(rate, 0, dur_ms)
            .unwrap()
            .into_iter()
            .map(|t| ObservationFrame {
                t_ms: t,
                markers: vec![MarkerObservation {
                    fiducial_id: 3,
                    center: Point::new(0.25, 0.75),
                    rotation_deg: 45.0,
                    confidence: 1.0,
                }],
                hands: vec![],
            })
            .collect()
    }

    #[test]
    fn empty_and_identity() {
        assert!(resample_stream(&[], 30.0).unwrap().is_empty());
        let s = static_stream(60.0, 1000);
        assert_eq!(resample_stream(&s, 60.0).unwrap(), s);
    }

    #[test]
    fn halving_a_static_second() {
        let s = static_stream(60.0, 999);
        let out = resample_stream(&s, 30.0).unwrap();
        // Oracle: instants round(k * 1000/30) <= 999.
        let count = (0..100u64).filter(|k| (*k as f64 * 1000.0 / 30.0).round() <= 999.0).count();
        assert_eq!(count, 30);
        assert_eq!(out.len(), count);
        assert!(out.iter().all(|f| f.markers == s[0].markers));
    }

    #[test]
    fn rotation_interpolates_across_zero() {
        let mk = |t, rot| ObservationFrame {
            t_ms: t,
            markers: vec![MarkerObservation {
                fiducial_id: 1,
                center: Point::new(0.0, 0.0),
                rotation_deg: rot,
                confidence: 1.0,
            }],
            hands: vec![],
        };
        let out = resample_stream(&[mk(0, 350.0), mk(100, 10.0)], 20.0).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].markers[0].rotation_deg, 0.0);
        assert!(resample_stream(&[mk(0, 0.0)], -1.0).is_err());
    }
}

//! Farthest point sampling and ball-query grouping over `[x, y, z]` points.

use super::NetError;

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

/// Index of the point nearest the centroid; ties go to the lowest index.
pub fn nearest_to_centroid(points: &[[f64; 3]]) -> usize {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let c = c.map(|v| v / n);
    nearest(points, &c)
}

fn nearest(points: &[[f64; 3]], c: &[f64; 3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Greedy max-min selection of `k` points starting from `start`. Ties in
/// the max-min distance are broken by the lowest index.
pub fn farthest_point_sample(
    points: &[[f64; 3]],
    k: usize,
    start: usize,
) -> Result<Vec<usize>, NetError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(NetError::Contract(format!(
            "farthest point sampling needs 1 <= k <= N, got k={k}, N={n}"
        )));
    }
    if start >= n {
        return Err(NetError::Contract(format!(
            "start index {start} out of range for {n} points"
        )));
    }
    let mut selected = Vec::with_capacity(k);
    selected.push(start);
    let mut min_d: Vec<f64> = points.iter().map(|p| dist2(p, &points[start])).collect();
    while selected.len() < k {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, &d) in min_d.iter().enumerate() {
            if d > best.0 {
                best = (d, i);
            }
        }
        let next = best.1;
        selected.push(next);
        let q = points[next];
        for (d, p) in min_d.iter_mut().zip(points) {
            let nd = dist2(p, &q);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}

/// For each center, up to `max_per_group` indices of points within the
/// closed ball of `radius`, lowest index first. A partially filled group is
/// padded by repeating its first member; an empty one is filled with the
/// point nearest the center.
pub fn ball_query(
    points: &[[f64; 3]],
    centers: &[[f64; 3]],
    radius: f64,
    max_per_group: usize,
) -> Result<Vec<Vec<usize>>, NetError> {
    if !(radius > 0.0) || max_per_group == 0 || points.is_empty() {
        return Err(NetError::Contract(format!(
            "ball query needs radius > 0, max_per_group > 0 and points (radius {radius}, max {max_per_group}, {} points)",
            points.len()
        )));
    }
    let r2 = radius * radius;
    Ok(centers
        .iter()
        .map(|c| {
            let mut group: Vec<usize> = Vec::with_capacity(max_per_group);
            for (i, p) in points.iter().enumerate() {
                if dist2(p, c) <= r2 {
                    group.push(i);
                    if group.len() == max_per_group {
                        break;
                    }
                }
            }
            let fill = group.first().copied().unwrap_or_else(|| nearest(points, c));
            group.resize(max_per_group, fill);
            group
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::dist2;

    /// O(N²k): recomputes every min-distance from scratch each round.
    pub fn fps(points: &[[f64; 3]], k: usize, start: usize) -> Vec<usize> {
        let mut sel = vec![start];
        while sel.len() < k {
            let mut best_i = 0;
            let mut best_d = -1.0;
            for i in 0..points.len() {
                let d = sel
                    .iter()
                    .map(|&s| dist2(&points[i], &points[s]))
                    .fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best_i = i;
                }
            }
            sel.push(best_i);
        }
        sel
    }

    /// Exhaustive distance table, then filter and pad.
    pub fn ball(points: &[[f64; 3]], centers: &[[f64; 3]], r: f64, m: usize) -> Vec<Vec<usize>> {
        centers
            .iter()
            .map(|c| {
                let d: Vec<f64> = points.iter().map(|p| dist2(p, c)).collect();
                let inside: Vec<usize> = (0..points.len())
                    .filter(|&i| d[i] <= r * r)
                    .take(m)
                    .collect();
                let fill = match inside.first() {
                    Some(&f) => f,
                    None => {
                        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                        d.iter().position(|&v| v == min).unwrap()
                    }
                };
                (0..m)
                    .map(|i| inside.get(i).copied().unwrap_or(fill))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_sample_is_the_start() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&pts, 1, 2).unwrap(), vec![2]);
        assert!(farthest_point_sample(&pts, 4, 0).is_err());
        assert!(farthest_point_sample(&pts, 0, 0).is_err());
    }

    #[test]
    fn collinear_tie_goes_low() {
        let pts: Vec<[f64; 3]> = (0..10).map(|x| [x as f64, 0.0, 0.0]).collect();
        assert_eq!(farthest_point_sample(&pts, 3, 0).unwrap(), vec![0, 9, 4]);
    }

    #[test]
    fn empty_ball_repeats_nearest_point() {
        let pts = [
            [5.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
            [-4.0, 0.0, 0.0],
        ];
        let g = ball_query(&pts, &[[0.0; 3]], 1.0, 4).unwrap();
        assert_eq!(g, vec![vec![1, 1, 1, 1]]);
    }

    #[test]
    fn ball_is_closed() {
        let pts = [[0.25, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let g = ball_query(&pts, &[[0.0; 3]], 0.25, 3).unwrap();
        assert_eq!(g, vec![vec![0, 1, 0]]);
    }

    #[test]
    fn centroid_start() {
        let pts = [
            [0.0, 0.0, 0.0],
            [1.5, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.9, 0.0, 0.0],
        ];
        assert_eq!(nearest_to_centroid(&pts), 3);
    }

    fn cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
        // coarse grid values make exact ties common
        prop::collection::vec(
            prop::array::uniform3((-4i32..=4).prop_map(|v| v as f64 * 0.25)),
            1..=64,
        )
    }

    proptest! {
        #[test]
        fn fps_matches_oracle(pts in cloud(), kf in 0.0f64..1.0, sf in 0.0f64..1.0) {
            let n = pts.len();
            let k = 1 + ((n - 1) as f64 * kf) as usize;
            let start = ((n - 1) as f64 * sf) as usize;
            prop_assert_eq!(farthest_point_sample(&pts, k, start).unwrap(), oracle::fps(&pts, k, start));
        }

        #[test]
        fn ball_query_matches_oracle(pts in cloud(), centers in cloud(), r in 0.05f64..1.5, m in 1usize..20) {
            prop_assert_eq!(ball_query(&pts, &centers, r, m).unwrap(), oracle::ball(&pts, &centers, r, m));
        }
    }
}

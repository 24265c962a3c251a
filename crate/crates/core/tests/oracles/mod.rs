//! Independent reference implementations used as test oracles.
//!
//! Each function is written from the definition of the quantity, without
//! reusing engine code, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use vizex_core::image::Frame;

/// A frame of uniform random colors with a few solid rectangles on top.
pub fn random_frame(rng: &mut impl rand::Rng, index: usize, w: usize, h: usize) -> Frame {
    let mut data: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
    for _ in 0..rng.random_range(0..4) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (x1, y1) = (rng.random_range(x0..w) + 1, rng.random_range(y0..h) + 1);
        let c: [u8; 3] = rng.random();
        for y in y0..y1 {
            for x in x0..x1 {
                data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
            }
        }
    }
    Frame::from_rgb(index, w, h, data)
}

fn gray(f: &Frame, x: usize, y: usize) -> f64 {
    let [r, g, b] = f.pixel(x, y);
    (299.0 * r as f64 + 587.0 * g as f64 + 114.0 * b as f64) / 1000.0
}

/// Mean luma over the rectangle, by a plain double loop.
pub fn luminosity(f: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            total += gray(f, x, y);
        }
    }
    total / (w * h) as f64
}

pub fn average_color(f: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> [f64; 3] {
    let mut total = [0u64; 3];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let p = f.pixel(x, y);
            for c in 0..3 {
                total[c] += p[c] as u64;
            }
        }
    }
    total.map(|t| t as f64 / (w * h) as f64)
}

/// Canny on a rectangle: 5-tap Gaussian blur applied along rows then
/// columns with edge replication, Sobel gradients, four-direction non-maximum
/// suppression, and 8-connected hysteresis. Written with padded buffers and
/// an angle-based direction choice.
pub fn canny(f: &Frame, x0: usize, y0: usize, w: usize, h: usize, sigma: f64, low: f64, high: f64) -> Vec<bool> {
    const R: usize = 2;
    let weights: Vec<f64> =
        (0..=2 * R).map(|i| (-((i as f64 - R as f64).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = weights.iter().sum();
    let k: Vec<f64> = weights.iter().map(|v| v / norm).collect();

    let src: Vec<Vec<f64>> = (0..h).map(|y| (0..w).map(|x| gray(f, x0 + x, y0 + y)).collect()).collect();
    let rep = |i: isize, n: usize| -> usize { i.max(0).min(n as isize - 1) as usize };

    let mut horiz = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src[y][rep(x as isize + j as isize - R as isize, w)];
            }
            horiz[y][x] = acc;
        }
    }
    let mut blur = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * horiz[rep(y as isize + j as isize - R as isize, h)][x];
            }
            blur[y][x] = acc;
        }
    }

    let b = |x: isize, y: isize| blur[rep(y, h)][rep(x, w)];
    let mut gx = vec![vec![0.0; w]; h];
    let mut gy = vec![vec![0.0; w]; h];
    let mut mag = vec![vec![0.0; w + 2]; h + 2];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let right = b(xi + 1, yi - 1) + 2.0 * b(xi + 1, yi) + b(xi + 1, yi + 1);
            let left = b(xi - 1, yi - 1) + 2.0 * b(xi - 1, yi) + b(xi - 1, yi + 1);
            let down = b(xi - 1, yi + 1) + 2.0 * b(xi, yi + 1) + b(xi + 1, yi + 1);
            let up = b(xi - 1, yi - 1) + 2.0 * b(xi, yi - 1) + b(xi + 1, yi - 1);
            gx[y][x] = right - left;
            gy[y][x] = down - up;
            mag[y + 1][x + 1] = gx[y][x].hypot(gy[y][x]);
        }
    }

    let mut thin = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let m = mag[y + 1][x + 1];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[y][x].atan2(gx[y][x]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy): (isize, isize) = if angle < 22.5 || angle > 157.5 {
                (1, 0)
            } else if angle <= 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let (px, py) = (x as isize + 1, y as isize + 1);
            let a = mag[(py + dy) as usize][(px + dx) as usize];
            let c = mag[(py - dy) as usize][(px - dx) as usize];
            if m >= a && m >= c {
                thin[y][x] = m;
            }
        }
    }

    let mut edge = vec![vec![false; w]; h];
    let mut queue = std::collections::VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if thin[y][x] > 0.0 && thin[y][x] >= high {
                edge[y][x] = true;
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                if !edge[ny][nx] && thin[ny][nx] > 0.0 && thin[ny][nx] >= low {
                    edge[ny][nx] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }
    edge.into_iter().flatten().collect()
}

/// OLS line through `(x, y)` by solving the raw normal equations
/// `[n Σx; Σx Σx²] [a b]ᵀ = [Σy Σxy]ᵀ` with Cramer's rule.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
}

/// Trailing-window aggregate recomputed for every frame.
pub fn naive_window(values: &[f64], w: usize, agg: &str) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for t in 0..values.len() {
        if t + 1 < w {
            continue;
        }
        let win: Vec<f64> = (t + 1 - w..=t).map(|i| values[i]).collect();
        let v = match agg {
            "mean" => win.iter().sum::<f64>() / w as f64,
            "min" => win.iter().cloned().fold(f64::INFINITY, f64::min),
            _ => win.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        out.push((t, v));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf(i8),
    Split { column: usize, threshold: f64, left: Box<OracleNode>, right: Box<OracleNode> },
}

/// Exhaustive CART reference: every column and every midpoint between
/// adjacent distinct values is tried by partitioning the rows from scratch.
pub fn oracle_tree(x: &[Vec<f64>], y: &[i8], max_depth: usize) -> OracleNode {
    let classes = [-1i8, 0, 1];
    let n = y.len() as f64;
    let present = classes.iter().filter(|c| y.contains(c)).count() as f64;
    let weight: Vec<f64> = classes
        .iter()
        .map(|c| {
            let k = y.iter().filter(|v| *v == c).count();
            if k == 0 { 0.0 } else { n / (present * k as f64) }
        })
        .collect();
    let rows: Vec<usize> = (0..y.len()).collect();
    grow(x, y, &rows, &weight, 0, max_depth)
}

fn counts(y: &[i8], rows: &[usize]) -> [usize; 3] {
    let mut c = [0; 3];
    for &r in rows {
        c[(y[r] + 1) as usize] += 1;
    }
    c
}

fn node_gini(c: &[usize; 3], w: &[f64]) -> (f64, f64) {
    let m: Vec<f64> = (0..3).map(|i| c[i] as f64 * w[i]).collect();
    let t = m[0] + m[1] + m[2];
    if t == 0.0 {
        return (0.0, 0.0);
    }
    (1.0 - ((m[0] / t).powi(2) + (m[1] / t).powi(2) + (m[2] / t).powi(2)), t)
}

fn grow(x: &[Vec<f64>], y: &[i8], rows: &[usize], w: &[f64], depth: usize, max_depth: usize) -> OracleNode {
    let c = counts(y, rows);
    let leaf = || {
        let votes: Vec<f64> = (0..3).map(|i| c[i] as f64 * w[i]).collect();
        let mut best = 0;
        for i in 1..3 {
            if votes[i] > votes[best] {
                best = i;
            }
        }
        OracleNode::Leaf(best as i8 - 1)
    };
    if c.iter().filter(|&&v| v > 0).count() <= 1 || depth >= max_depth {
        return leaf();
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for col in 0..x[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][col]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let thr = pair[0] + (pair[1] - pair[0]) / 2.0;
            if !(thr >= pair[0] && thr < pair[1]) {
                continue;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][col] <= thr);
            let (gl, wl) = node_gini(&counts(y, &l), w);
            let (gr, wr) = node_gini(&counts(y, &r), w);
            let imp = (wl * gl + wr * gr) / (wl + wr);
            let better = match best {
                None => true,
                Some((bi, bc, bt)) => imp < bi || (imp == bi && (col < bc || (col == bc && thr < bt))),
            };
            if better {
                best = Some((imp, col, thr));
            }
        }
    }
    let Some((_, column, threshold)) = best else { return leaf() };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][column] <= threshold);
    OracleNode::Split {
        column,
        threshold,
        left: Box::new(grow(x, y, &l, w, depth + 1, max_depth)),
        right: Box::new(grow(x, y, &r, w, depth + 1, max_depth)),
    }
}

pub fn oracle_predict(node: &OracleNode, row: &[f64]) -> i8 {
    match node {
        OracleNode::Leaf(c) => *c,
        OracleNode::Split { column, threshold, left, right } => {
            oracle_predict(if row[*column] <= *threshold { left } else { right }, row)
        }
    }
}

/// IoU of two `(x, y, w, h)` boxes from the overlap rectangle.
pub fn iou(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> f64 {
    let ix = (a.0 + a.2).min(b.0 + b.2) as i64 - a.0.max(b.0) as i64;
    let iy = (a.1 + a.3).min(b.1 + b.3) as i64 - a.1.max(b.1) as i64;
    let inter = (ix.max(0) * iy.max(0)) as f64;
    let union = (a.2 * a.3 + b.2 * b.3) as f64 - inter;
    if union == 0.0 { 0.0 } else { inter / union }
}

/// Unmatched `(gt, det)` counts under greedy matching: all pairs at or above
/// `thr` are visited by descending IoU, ties by gt then det index, and a pair
/// is taken when both boxes are still free.
pub fn unmatched_counts(gt: &[(u32, u32, u32, u32)], det: &[(u32, u32, u32, u32)], thr: f64) -> (usize, usize) {
    let mut pairs = Vec::new();
    for (i, &g) in gt.iter().enumerate() {
        for (j, &d) in det.iter().enumerate() {
            let v = iou(g, d);
            if v >= thr {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut gu, mut du) = (vec![false; gt.len()], vec![false; det.len()]);
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !gu[i] && !du[j] {
            gu[i] = true;
            du[j] = true;
            matched += 1;
        }
    }
    (gt.len() - matched, det.len() - matched)
}

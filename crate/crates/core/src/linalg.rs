//! Small dense-vector helpers. Agent blocks are short `Vec<f64>`s, so these
//! stay allocation-light and keep the floating-point evaluation order fixed.

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Componentwise mean of equal-length blocks.
pub fn block_mean(blocks: &[Vec<f64>]) -> Vec<f64> {
    let n = blocks.len();
    let dim = blocks.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; dim];
    for b in blocks {
        for (a, v) in acc.iter_mut().zip(b) {
            *a += v;
        }
    }
    if n > 0 {
        let inv = n as f64;
        for a in &mut acc {
            *a /= inv;
        }
    }
    acc
}

/// ‖v − 1 ⊗ mean(v)‖ over stacked blocks.
pub fn consensus_deviation(blocks: &[Vec<f64>]) -> f64 {
    let mean = block_mean(blocks);
    blocks
        .iter()
        .map(|b| {
            b.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

pub fn flatten(blocks: &[Vec<f64>]) -> Vec<f64> {
    blocks.iter().flatten().copied().collect()
}

/// Split a stacked vector into consecutive blocks of the given sizes.
pub fn split(stacked: &[f64], dims: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &d in dims {
        out.push(stacked[offset..offset + d].to_vec());
        offset += d;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_vanishes_for_identical_blocks() {
        let blocks = vec![vec![1.5, -2.0]; 4];
        assert_eq!(consensus_deviation(&blocks), 0.0);
        assert_eq!(block_mean(&blocks), vec![1.5, -2.0]);
    }

    #[test]
    fn split_then_flatten() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let blocks = split(&v, &[2, 1, 2]);
        assert_eq!(blocks, vec![vec![1.0, 2.0], vec![3.0], vec![4.0, 5.0]]);
        assert_eq!(flatten(&blocks), v.to_vec());
    }
}

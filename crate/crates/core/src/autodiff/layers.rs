use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Graph, Var};

/// Affine map over the last axis: `x[…×din] · weight[din×dout] + bias[dout]`.
pub fn linear(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(weight).to_vec();
    let din = *xs.last().expect("non-empty shape");
    if ws.len() != 2 || ws[0] != din || g.shape(bias) != [ws[1]] {
        return Err(AutodiffError::Dimension {
            op: "linear",
            lhs: xs,
            rhs: ws,
        });
    }
    let rows = g.value(x).len() / din;
    let flat = if xs.len() == 2 {
        x
    } else {
        g.reshape(x, &[rows, din])?
    };
    let y = g.matmul(flat, weight)?;
    let y = g.add(y, bias)?;
    if xs.len() == 2 {
        return Ok(y);
    }
    let mut out_shape = xs;
    *out_shape.last_mut().unwrap() = ws[1];
    g.reshape(y, &out_shape)
}

/// Mixes a global seed with stream identifiers into one 64-bit key
/// (splitmix64 finalizer per word).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Inverted-dropout mask: 0 with probability `ratio`, `1/(1-ratio)` otherwise.
pub fn dropout_mask(len: usize, ratio: f64, seed: u64) -> Result<Vec<f64>, AutodiffError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(AutodiffError::Config(format!(
            "dropout ratio {ratio} outside [0, 1)"
        )));
    }
    let keep = 1.0 / (1.0 - ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < ratio {
                0.0
            } else {
                keep
            }
        })
        .collect())
}

pub fn dropout(
    g: &mut Graph,
    x: Var,
    ratio: f64,
    training: bool,
    seed: u64,
) -> Result<Var, AutodiffError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(AutodiffError::Config(format!(
            "dropout ratio {ratio} outside [0, 1)"
        )));
    }
    if !training || ratio == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(g.value(x).len(), ratio, seed)?;
    g.mask(x, mask)
}

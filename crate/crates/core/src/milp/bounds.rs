use crate::error::Result;
use crate::network::ReluNetwork;
use crate::numerics::Matrix;
use crate::polytope::Polytope;

/// Pre-activation intervals of every hidden neuron and the derived big-M
/// constants.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronBounds {
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
    /// `max(hi, 0)` per neuron.
    pub m: Vec<Vec<f64>>,
    /// Largest `m` plus one.
    pub m_global: f64,
}

/// Image of the box `[lo, hi]` under `x ↦ W x + b`, by interval arithmetic.
pub fn interval_affine(w: &Matrix, b: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = b.to_vec();
    let mut out_hi = b.to_vec();
    for i in 0..w.rows() {
        for (j, &c) in w.row(i).iter().enumerate() {
            if c >= 0.0 {
                out_lo[i] += c * lo[j];
                out_hi[i] += c * hi[j];
            } else {
                out_lo[i] += c * hi[j];
                out_hi[i] += c * lo[j];
            }
        }
    }
    (out_lo, out_hi)
}

/// Interval propagation seeded by the bounding box of `x_in`.
pub fn propagate_bounds(net: &ReluNetwork, x_in: &Polytope) -> Result<NeuronBounds> {
    let bbox = x_in.bounding_box()?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = bbox.into_iter().unzip();
    Ok(propagate_box(net, &lo, &hi))
}

pub fn propagate_box(net: &ReluNetwork, lo: &[f64], hi: &[f64]) -> NeuronBounds {
    let mut cur_lo = lo.to_vec();
    let mut cur_hi = hi.to_vec();
    let mut out = NeuronBounds { lo: Vec::new(), hi: Vec::new(), m: Vec::new(), m_global: 1.0 };
    for layer in &net.layers()[..net.num_hidden()] {
        let (l, h) = interval_affine(&layer.weights, &layer.b, &cur_lo, &cur_hi);
        cur_lo = l.iter().map(|v| v.max(0.0)).collect();
        cur_hi = h.iter().map(|v| v.max(0.0)).collect();
        out.m.push(cur_hi.clone());
        out.lo.push(l);
        out.hi.push(h);
    }
    out.m_global = out.m.iter().flatten().fold(0.0f64, |a, &b| a.max(b)) + 1.0;
    out
}

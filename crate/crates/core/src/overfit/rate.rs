//! Laplace codelength of latents with closed-form derivatives.

use std::f64::consts::LN_2;

/// Laplace codelength model of one scale, with the tail constants
/// precomputed.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceCode {
    inv_b: f64,
    /// `exp(-1/(2b))`.
    half_tail: f64,
    /// `-ln(1/2 (1 - exp(-1/b)))`.
    tail_nats: f64,
    /// `d tail_nats / d ln b`.
    tail_d_logb: f64,
}

impl LaplaceCode {
    pub fn new(b: f64) -> Self {
        let inv_b = 1.0 / b;
        LaplaceCode {
            inv_b,
            half_tail: (-0.5 * inv_b).exp(),
            tail_nats: -(0.5 * (-(-inv_b).exp_m1())).ln(),
            tail_d_logb: inv_b / inv_b.exp_m1(),
        }
    }

    /// Bits of `l` integrated over `[l - 1/2, l + 1/2]`, with derivatives
    /// wrt `l` and `ln b`.
    pub fn bits(&self, l: f64) -> (f64, f64, f64) {
        let a = l.abs();
        let (nats, d_l, d_logb) = if a >= 0.5 {
            // P = 1/2 exp(-(a - 1/2)/b) (1 - exp(-1/b)), evaluated in log space.
            let excess = (a - 0.5) * self.inv_b;
            (
                excess + self.tail_nats,
                l.signum() * self.inv_b,
                self.tail_d_logb - excess,
            )
        } else {
            // P = 1 - exp(-1/(2b)) cosh(l/b).
            let q = (l * self.inv_b).exp();
            let inv_q = 1.0 / q;
            let cosh = 0.5 * (q + inv_q);
            let sinh = 0.5 * (q - inv_q);
            let p = 1.0 - self.half_tail * cosh;
            let inv_p = 1.0 / p;
            let d_l = self.half_tail * sinh * self.inv_b * inv_p;
            let d_logb = self.half_tail * (0.5 * cosh - l * sinh) * self.inv_b * inv_p;
            (-p.ln(), d_l, d_logb)
        };
        (nats / LN_2, d_l / LN_2, d_logb / LN_2)
    }
}

/// Bits of `l` under a zero-mean Laplace of scale `b`; see [`LaplaceCode`].
pub fn laplace_bits(l: f64, b: f64) -> (f64, f64, f64) {
    LaplaceCode::new(b).bits(l)
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use uvc_core::{LmiBlock, LmiProgram};

/// `min x` subject to `x − 1 ⪰ 0`.
pub fn lower_bound() -> LmiProgram {
    let mut b = LmiBlock::new("x_minus_one", 1);
    b.add_constant_single(0, 0, -1.0);
    b.add_term_single(0, 0, 0, 1.0);
    LmiProgram::new(DVector::from_vec(vec![1.0]), vec![b]).unwrap()
}

/// `P ⪰ εI`, `−(AᵀP + PA) ⪰ εI` with `A = −I`; variables `p11, p12, p22`.
pub fn lyapunov_feasibility(eps: f64) -> LmiProgram {
    let mut pos = LmiBlock::new("P", 2);
    let mut dec = LmiBlock::new("decrease", 2);
    for i in 0..2 {
        pos.add_constant_single(i, i, -eps);
        dec.add_constant_single(i, i, -eps);
    }
    for (var, r, c) in [(0, 0, 0), (2, 1, 1)] {
        pos.add_term_single(var, r, c, 1.0);
        dec.add_term_single(var, r, c, 2.0);
    }
    pos.add_term_mirrored(1, 0, 1, 1.0);
    dec.add_term_mirrored(1, 0, 1, 2.0);
    LmiProgram::new(DVector::zeros(3), vec![pos, dec]).unwrap()
}

/// `max t` subject to `D − tI ⪰ 0`.
pub fn largest_shift(d: &DMatrix<f64>) -> LmiProgram {
    let n = d.nrows();
    let mut b = LmiBlock::new("shifted", n);
    for i in 0..n {
        for j in 0..n {
            b.add_constant_single(i, j, d[(i, j)]);
        }
        b.add_term_single(0, i, i, -1.0);
    }
    LmiProgram::new(DVector::from_vec(vec![-1.0]), vec![b]).unwrap()
}

//! Fixed-size gate matrices. Two-qubit matrices act on the basis
//! `|s_a s_b⟩` with index `2 * s_a + s_b`.

use num_complex::Complex64 as C64;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

const O: C64 = C64::new(0.0, 0.0);
const L: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub const IDENTITY: Mat2 = [[L, O], [O, L]];
pub const PAULI_X: Mat2 = [[O, L], [L, O]];
pub const PAULI_Y: Mat2 = [[O, C64::new(0.0, -1.0)], [I, O]];
pub const PAULI_Z: Mat2 = [[L, O], [O, C64::new(-1.0, 0.0)]];

pub fn hadamard() -> Mat2 {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

pub fn identity4() -> Mat4 {
    let mut m = [[O; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = L;
    }
    m
}

/// CNOT with the control on the first qubit of the pair.
pub fn cnot() -> Mat4 {
    [[L, O, O, O], [O, L, O, O], [O, O, O, L], [O, O, L, O]]
}

/// CNOT with the control on the second qubit of the pair.
pub fn cnot_reversed() -> Mat4 {
    [[L, O, O, O], [O, O, O, L], [O, O, L, O], [O, L, O, O]]
}

pub fn cz() -> Mat4 {
    let mut m = identity4();
    m[3][3] = -L;
    m
}

pub fn swap() -> Mat4 {
    [[L, O, O, O], [O, O, L, O], [O, L, O, O], [O, O, O, L]]
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = [[O; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    m
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut m = [[O; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

pub fn adjoint2(a: &Mat2) -> Mat2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[O; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Largest entry of `|U†U − I|`, for square matrices given row-major.
pub fn unitarity_deviation(m: &[C64], dim: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..dim {
                acc += m[k * dim + i].conj() * m[k * dim + j];
            }
            if i == j {
                acc -= L;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

pub fn flatten2(m: &Mat2) -> Vec<C64> {
    m.iter().flatten().copied().collect()
}

pub fn flatten4(m: &Mat4) -> Vec<C64> {
    m.iter().flatten().copied().collect()
}

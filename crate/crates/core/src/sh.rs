//! Real spherical-harmonic color basis, degrees 0 through 3, using the
//! constants and sign convention of the reference Gaussian Splatting code.

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Number of coefficients per color channel for a given degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Inverse of [`coeff_count`]; `None` when `n` is not a perfect square.
pub fn degree_for_coeff_count(n: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&d| coeff_count(d) == n)
}

/// Converts a flat RGB color to the degree-0 coefficient.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

pub fn dc_to_rgb(dc: f64) -> f64 {
    SH_C0 * dc + 0.5
}

/// Basis values and their gradients with respect to the (unit) view
/// direction. Entries past `coeff_count(degree)` are zero.
pub fn basis(degree: usize, dir: [f64; 3]) -> ([f64; 16], [[f64; 3]; 16]) {
    let mut b = [0.0; 16];
    let mut g = [[0.0; 3]; 16];
    b[0] = SH_C0;
    if degree == 0 {
        return (b, g);
    }
    let [x, y, z] = dir;
    b[1] = -SH_C1 * y;
    g[1] = [0.0, -SH_C1, 0.0];
    b[2] = SH_C1 * z;
    g[2] = [0.0, 0.0, SH_C1];
    b[3] = -SH_C1 * x;
    g[3] = [-SH_C1, 0.0, 0.0];
    if degree == 1 {
        return (b, g);
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let c = SH_C2;
    b[4] = c[0] * xy;
    g[4] = [c[0] * y, c[0] * x, 0.0];
    b[5] = c[1] * yz;
    g[5] = [0.0, c[1] * z, c[1] * y];
    b[6] = c[2] * (2.0 * zz - xx - yy);
    g[6] = [-2.0 * c[2] * x, -2.0 * c[2] * y, 4.0 * c[2] * z];
    b[7] = c[3] * xz;
    g[7] = [c[3] * z, 0.0, c[3] * x];
    b[8] = c[4] * (xx - yy);
    g[8] = [2.0 * c[4] * x, -2.0 * c[4] * y, 0.0];
    if degree == 2 {
        return (b, g);
    }
    let c = SH_C3;
    b[9] = c[0] * y * (3.0 * xx - yy);
    g[9] = [6.0 * c[0] * xy, c[0] * (3.0 * xx - 3.0 * yy), 0.0];
    b[10] = c[1] * xy * z;
    g[10] = [c[1] * yz, c[1] * xz, c[1] * xy];
    b[11] = c[2] * y * (4.0 * zz - xx - yy);
    g[11] = [
        -2.0 * c[2] * xy,
        c[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * c[2] * yz,
    ];
    b[12] = c[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    g[12] = [
        -6.0 * c[3] * xz,
        -6.0 * c[3] * yz,
        c[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
    ];
    b[13] = c[4] * x * (4.0 * zz - xx - yy);
    g[13] = [
        c[4] * (4.0 * zz - 3.0 * xx - yy),
        -2.0 * c[4] * xy,
        8.0 * c[4] * xz,
    ];
    b[14] = c[5] * z * (xx - yy);
    g[14] = [2.0 * c[5] * xz, -2.0 * c[5] * yz, c[5] * (xx - yy)];
    b[15] = c[6] * x * (xx - 3.0 * yy);
    g[15] = [c[6] * (3.0 * xx - 3.0 * yy), -6.0 * c[6] * xy, 0.0];
    (b, g)
}

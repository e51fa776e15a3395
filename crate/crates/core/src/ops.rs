//! Discrete differential operators, point-spread functions, periodic
//! convolution, and the FFT-diagonalised linear solve for the quadratic
//! image subproblem.
//!
//! All operators use periodic boundary conditions, so the composite
//! operator `g3*A'A + (mu+g1)*(-Laplacian)` is diagonal in the 2D DFT
//! basis and the subproblem solve is exact in O(N log N).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::img::ImageGrid;

/// Forward difference along rows with periodic wrap:
/// `out[i,j] = u[i,(j+1) mod W] - u[i,j]`.
pub fn grad_x(u: &ImageGrid) -> ImageGrid {
    let (h, w) = u.dims();
    ImageGrid::from_fn(h, w, |i, j| u[(i, (j + 1) % w)] - u[(i, j)])
}

/// Forward difference along columns with periodic wrap.
pub fn grad_y(u: &ImageGrid) -> ImageGrid {
    let (h, w) = u.dims();
    ImageGrid::from_fn(h, w, |i, j| u[((i + 1) % h, j)] - u[(i, j)])
}

/// Exact adjoint of [`grad_x`] under the per-pixel inner product:
/// `out[i,j] = v[i,(j-1) mod W] - v[i,j]`.
pub fn grad_x_adjoint(v: &ImageGrid) -> ImageGrid {
    let (h, w) = v.dims();
    ImageGrid::from_fn(h, w, |i, j| v[(i, (j + w - 1) % w)] - v[(i, j)])
}

/// Exact adjoint of [`grad_y`].
pub fn grad_y_adjoint(v: &ImageGrid) -> ImageGrid {
    let (h, w) = v.dims();
    ImageGrid::from_fn(h, w, |i, j| v[((i + h - 1) % h, j)] - v[(i, j)])
}

/// Periodic 5-point Laplacian, equal to `-(grad_x_adjoint∘grad_x + grad_y_adjoint∘grad_y)`.
pub fn laplacian(u: &ImageGrid) -> ImageGrid {
    let (h, w) = u.dims();
    ImageGrid::from_fn(h, w, |i, j| {
        u[((i + 1) % h, j)] + u[((i + h - 1) % h, j)] + u[(i, (j + 1) % w)]
            + u[(i, (j + w - 1) % w)]
            - 4.0 * u[(i, j)]
    })
}

/// Normalised blur kernel: non-negative taps summing to 1, odd dimensions,
/// anchored at the centre tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    kheight: usize,
    kwidth: usize,
    weights: Vec<f64>,
}

impl Psf {
    /// Validates oddness, non-negativity, and sum-to-one (within 1e-12).
    pub fn new(kheight: usize, kwidth: usize, weights: Vec<f64>) -> Result<Self> {
        if kheight == 0 || kwidth == 0 || kheight % 2 == 0 || kwidth % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "kernel dimensions must be odd and positive, got {kheight}x{kwidth}"
            )));
        }
        if weights.len() != kheight * kwidth {
            return Err(Error::InvalidParameter(format!(
                "kernel weight count {} does not match {kheight}x{kwidth}",
                weights.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidParameter(
                "kernel weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "kernel weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { kheight, kwidth, weights })
    }

    fn normalized(kheight: usize, kwidth: usize, raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter("kernel has zero mass".into()));
        }
        Self::new(kheight, kwidth, raw.into_iter().map(|w| w / sum).collect())
    }

    /// The 1x1 identity kernel (no blur).
    pub fn identity() -> Self {
        Self { kheight: 1, kwidth: 1, weights: vec![1.0] }
    }

    pub fn kheight(&self) -> usize {
        self.kheight
    }

    pub fn kwidth(&self) -> usize {
        self.kwidth
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.kwidth + col]
    }

    fn anchor(&self) -> (usize, usize) {
        (self.kheight / 2, self.kwidth / 2)
    }
}

/// Linear-motion kernel: a length-`length` segment through the centre at
/// `angle_deg` degrees (counterclockwise from horizontal), anti-aliased by
/// a unit-width tent on the distance to the segment, then normalised.
pub fn make_motion_psf(length: f64, angle_deg: f64) -> Result<Psf> {
    if !(length >= 1.0) || !length.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "motion length must be at least 1, got {length}"
        )));
    }
    if !angle_deg.is_finite() {
        return Err(Error::InvalidParameter("motion angle must be finite".into()));
    }
    let half = (length - 1.0) / 2.0;
    let phi = angle_deg.rem_euclid(180.0).to_radians();
    let (ux, uy) = (phi.cos(), phi.sin());
    let ext = (half + 1.0).ceil() as i64;
    let n = (2 * ext + 1) as usize;

    // Pixel (row r, col c) sits at (x, y) = (c, -r) relative to the centre;
    // weight = max(0, 1 - distance to the closed segment [-half*u, half*u]).
    let mut raw = vec![0.0; n * n];
    for r in -ext..=ext {
        for c in -ext..=ext {
            let (px, py) = (c as f64, -(r as f64));
            let t = (px * ux + py * uy).clamp(-half, half);
            let (dx, dy) = (px - t * ux, py - t * uy);
            let dist = dx.hypot(dy);
            let wgt = (1.0 - dist).max(0.0);
            raw[((r + ext) * (2 * ext + 1) + (c + ext)) as usize] = wgt;
        }
    }

    // Trim all-zero border rows/columns in symmetric pairs (the kernel is
    // symmetric under 180-degree rotation by construction).
    let tol = 1e-12;
    let row_live = |raw: &[f64], r: usize, c0: usize, c1: usize| {
        (c0..=c1).any(|c| raw[r * n + c] >= tol)
    };
    let col_live = |raw: &[f64], c: usize, r0: usize, r1: usize| {
        (r0..=r1).any(|r| raw[r * n + c] >= tol)
    };
    let (mut r0, mut r1) = (0usize, n - 1);
    let (mut c0, mut c1) = (0usize, n - 1);
    while r1 > r0 && !row_live(&raw, r0, c0, c1) && !row_live(&raw, r1, c0, c1) {
        r0 += 1;
        r1 -= 1;
    }
    while c1 > c0 && !col_live(&raw, c0, r0, r1) && !col_live(&raw, c1, r0, r1) {
        c0 += 1;
        c1 -= 1;
    }
    let (kh, kw) = (r1 - r0 + 1, c1 - c0 + 1);
    let mut trimmed = Vec::with_capacity(kh * kw);
    for r in r0..=r1 {
        for c in c0..=c1 {
            trimmed.push(raw[r * n + c]);
        }
    }
    Psf::normalized(kh, kw, trimmed)
}

/// Isotropic Gaussian kernel on a (2*radius+1)^2 grid, sampled at integer
/// offsets and normalised to sum 1.
pub fn make_gaussian_psf(radius: u32, sigma: f64) -> Result<Psf> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let r = radius as i64;
    let n = (2 * r + 1) as usize;
    let mut raw = Vec::with_capacity(n * n);
    for y in -r..=r {
        for x in -r..=r {
            raw.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    Psf::normalized(n, n, raw)
}

fn check_kernel_fits(u: &ImageGrid, psf: &Psf) -> Result<()> {
    if psf.kheight > u.height() || psf.kwidth > u.width() {
        return Err(Error::InvalidParameter(format!(
            "kernel {}x{} larger than image {}x{}",
            psf.kheight,
            psf.kwidth,
            u.height(),
            u.width()
        )));
    }
    Ok(())
}

/// Circular convolution of `u` with `psf`, computed spatially.
pub fn convolve_periodic(u: &ImageGrid, psf: &Psf) -> Result<ImageGrid> {
    check_kernel_fits(u, psf)?;
    let (h, w) = u.dims();
    let (cy, cx) = psf.anchor();
    let mut out = ImageGrid::zeros(h, w);
    for a in 0..psf.kheight {
        for b in 0..psf.kwidth {
            let wgt = psf.weight(a, b);
            if wgt == 0.0 {
                continue;
            }
            let dy = a as isize - cy as isize;
            let dx = b as isize - cx as isize;
            for i in 0..h {
                let si = (i as isize - dy).rem_euclid(h as isize) as usize;
                for j in 0..w {
                    let sj = (j as isize - dx).rem_euclid(w as isize) as usize;
                    out[(i, j)] += wgt * u[(si, sj)];
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`convolve_periodic`] (circular correlation).
pub fn convolve_periodic_adjoint(u: &ImageGrid, psf: &Psf) -> Result<ImageGrid> {
    check_kernel_fits(u, psf)?;
    let (h, w) = u.dims();
    let (cy, cx) = psf.anchor();
    let mut out = ImageGrid::zeros(h, w);
    for a in 0..psf.kheight {
        for b in 0..psf.kwidth {
            let wgt = psf.weight(a, b);
            if wgt == 0.0 {
                continue;
            }
            let dy = a as isize - cy as isize;
            let dx = b as isize - cx as isize;
            for i in 0..h {
                let si = (i as isize + dy).rem_euclid(h as isize) as usize;
                for j in 0..w {
                    let sj = (j as isize + dx).rem_euclid(w as isize) as usize;
                    out[(i, j)] += wgt * u[(si, sj)];
                }
            }
        }
    }
    Ok(out)
}

/// Planned 2D DFT (unnormalised forward, 1/N inverse).
#[derive(Clone)]
struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        row.process(buf);
        let mut t = transpose(buf, self.height, self.width);
        col.process(&mut t);
        let back = transpose(&t, self.width, self.height);
        buf.copy_from_slice(&back);
    }

    fn forward_real(&self, data: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    fn inverse_to_real(&self, mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
        self.transform(&mut spectrum, false);
        let scale = 1.0 / (self.height * self.width) as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::default(); src.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = src[i * cols + j];
        }
    }
    out
}

/// Frequency-domain representation of the blur and the diagonalised
/// subproblem operator `g3*|A|^2 + (mu+g1)*(|gx|^2+|gy|^2)` at fixed image
/// dimensions. Immutable after construction; safe to share across threads.
#[derive(Clone)]
pub struct SpectralKernel {
    height: usize,
    width: usize,
    transfer: Vec<Complex<f64>>,
    grad_x_symbol: Vec<Complex<f64>>,
    grad_y_symbol: Vec<Complex<f64>>,
    denom: Vec<f64>,
    fft: Fft2,
}

/// Builds the spectral kernel for `psf` at the given image size and
/// penalty weights. Requires `gamma3 > 0` (otherwise the zero-frequency
/// entry of the diagonal vanishes), `gamma1 > 0`, and `mu >= 0`.
pub fn build_spectral_kernel(
    psf: &Psf,
    height: usize,
    width: usize,
    mu: f64,
    gamma1: f64,
    gamma3: f64,
) -> Result<SpectralKernel> {
    if !(gamma3 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma3 must be positive (zero frequency would vanish), got {gamma3}"
        )));
    }
    if !(gamma1 > 0.0) || !(mu >= 0.0) || !mu.is_finite() || !gamma1.is_finite() || !gamma3.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need gamma1 > 0 and mu >= 0, got gamma1={gamma1}, mu={mu}"
        )));
    }
    if psf.kheight() > height || psf.kwidth() > width {
        return Err(Error::InvalidParameter(format!(
            "kernel {}x{} larger than image {}x{}",
            psf.kheight(),
            psf.kwidth(),
            height,
            width
        )));
    }

    let fft = Fft2::new(height, width);

    // Embed the centre-anchored kernel with wrap-around so the centre tap
    // lands on index (0, 0).
    let (cy, cx) = psf.anchor();
    let mut padded = vec![0.0; height * width];
    for a in 0..psf.kheight() {
        for b in 0..psf.kwidth() {
            let i = (a as isize - cy as isize).rem_euclid(height as isize) as usize;
            let j = (b as isize - cx as isize).rem_euclid(width as isize) as usize;
            padded[i * width + j] += psf.weight(a, b);
        }
    }
    let transfer = fft.forward_real(&padded);

    let tau = std::f64::consts::TAU;
    let mut grad_x_symbol = Vec::with_capacity(height * width);
    let mut grad_y_symbol = Vec::with_capacity(height * width);
    let mut denom = Vec::with_capacity(height * width);
    for i in 0..height {
        let gy = Complex::from_polar(1.0, tau * i as f64 / height as f64) - 1.0;
        for j in 0..width {
            let gx = Complex::from_polar(1.0, tau * j as f64 / width as f64) - 1.0;
            let d = gamma3 * transfer[i * width + j].norm_sqr()
                + (mu + gamma1) * (gx.norm_sqr() + gy.norm_sqr());
            grad_x_symbol.push(gx);
            grad_y_symbol.push(gy);
            denom.push(d);
        }
    }
    debug_assert!(denom.iter().all(|&d| d > 0.0));

    Ok(SpectralKernel {
        height,
        width,
        transfer,
        grad_x_symbol,
        grad_y_symbol,
        denom,
        fft,
    })
}

impl SpectralKernel {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn denom(&self) -> &[f64] {
        &self.denom
    }

    pub fn transfer(&self) -> &[Complex<f64>] {
        &self.transfer
    }

    pub fn grad_x_symbol(&self) -> &[Complex<f64>] {
        &self.grad_x_symbol
    }

    pub fn grad_y_symbol(&self) -> &[Complex<f64>] {
        &self.grad_y_symbol
    }

    fn check_dims(&self, u: &ImageGrid) -> Result<()> {
        if u.dims() != (self.height, self.width) {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                got: u.dims(),
            });
        }
        Ok(())
    }

    fn pointwise(&self, u: &ImageGrid, f: impl Fn(Complex<f64>, usize) -> Complex<f64>) -> ImageGrid {
        let mut spectrum = self.fft.forward_real(u.data());
        for (k, c) in spectrum.iter_mut().enumerate() {
            *c = f(*c, k);
        }
        ImageGrid::from_vec_unchecked(self.height, self.width, self.fft.inverse_to_real(spectrum))
    }

    /// Applies the blur operator spectrally.
    pub fn blur(&self, u: &ImageGrid) -> Result<ImageGrid> {
        self.check_dims(u)?;
        Ok(self.pointwise(u, |c, k| c * self.transfer[k]))
    }

    /// Applies the adjoint of the blur operator spectrally.
    pub fn blur_adjoint(&self, u: &ImageGrid) -> Result<ImageGrid> {
        self.check_dims(u)?;
        Ok(self.pointwise(u, |c, k| c * self.transfer[k].conj()))
    }

    /// Applies `g3*A'A + (mu+g1)*(-Laplacian)` spectrally.
    pub fn apply_normal_operator(&self, u: &ImageGrid) -> Result<ImageGrid> {
        self.check_dims(u)?;
        Ok(self.pointwise(u, |c, k| c * self.denom[k]))
    }

    /// Solves `(g3*A'A + (mu+g1)*(-Laplacian)) u = rhs` exactly under
    /// periodic boundary conditions.
    pub fn solve(&self, rhs: &ImageGrid) -> Result<ImageGrid> {
        self.check_dims(rhs)?;
        Ok(self.pointwise(rhs, |c, k| c / self.denom[k]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageGrid {
        ImageGrid::from_fn(h, w, |_, _| rng.random_range(0.0..255.0))
    }

    fn random_psf(rng: &mut ChaCha8Rng, kh: usize, kw: usize) -> Psf {
        let raw: Vec<f64> = (0..kh * kw).map(|_| rng.random_range(0.05..1.0)).collect();
        Psf::normalized(kh, kw, raw).unwrap()
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let u = ImageGrid::constant(6, 5, 3.25);
        assert!(grad_x(&u).data().iter().all(|&v| v == 0.0));
        assert!(grad_y(&u).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_x_on_row_wraps_periodically() {
        let u = ImageGrid::new(1, 4, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(grad_x(&u).data(), &[1.0, 1.0, 1.0, -3.0]);
    }

    #[test]
    fn grad_y_on_column_wraps_periodically() {
        let u = ImageGrid::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(grad_y(&u).data(), &[1.0, 1.0, 1.0, -3.0]);
    }

    #[test]
    fn grad_sums_telescope_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_grid(&mut rng, 9, 7);
        assert!(grad_x(&u).sum().abs() < 1e-9);
        assert!(grad_y(&u).sum().abs() < 1e-9);
    }

    #[test]
    fn grad_y_is_transposed_grad_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = random_grid(&mut rng, 6, 6);
        let t = ImageGrid::from_fn(6, 6, |i, j| u[(j, i)]);
        let a = grad_y(&t);
        let b = grad_x(&u);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(a[(i, j)], b[(j, i)]);
            }
        }
    }

    #[test]
    fn gradient_adjoints_match_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let u = random_grid(&mut rng, 8, 8);
            let v = random_grid(&mut rng, 8, 8);
            let lhs = grad_x(&u).dot(&v);
            let rhs = u.dot(&grad_x_adjoint(&v));
            assert!((lhs - rhs).abs() < 1e-10, "x-adjoint: {lhs} vs {rhs}");
            let lhs = grad_y(&u).dot(&v);
            let rhs = u.dot(&grad_y_adjoint(&v));
            assert!((lhs - rhs).abs() < 1e-10, "y-adjoint: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn adjoint_of_constant_is_zero() {
        let v = ImageGrid::constant(5, 4, 2.0);
        assert!(grad_x_adjoint(&v).data().iter().all(|&x| x == 0.0));
        assert!(grad_y_adjoint(&v).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_of_gradients_is_negative_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let u = random_grid(&mut rng, 7, 9);
        let composed = grad_x_adjoint(&grad_x(&u)).zip_map(&grad_y_adjoint(&grad_y(&u)), |a, b| a + b);
        let lap = laplacian(&u);
        for k in 0..u.len() {
            assert!((composed.data()[k] + lap.data()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_is_negative_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let u = random_grid(&mut rng, 8, 8);
        let quad = u.dot(&laplacian(&u));
        let grads = grad_x(&u).norm_l2().powi(2) + grad_y(&u).norm_l2().powi(2);
        assert!((quad + grads).abs() < 1e-8 * grads.max(1.0));
    }

    #[test]
    fn motion_psf_length_one_is_identity() {
        let psf = make_motion_psf(1.0, 33.0).unwrap();
        assert_eq!((psf.kheight(), psf.kwidth()), (1, 1));
        assert!((psf.weight(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn motion_psf_horizontal_five_is_uniform() {
        let psf = make_motion_psf(5.0, 0.0).unwrap();
        assert_eq!((psf.kheight(), psf.kwidth()), (1, 5));
        for b in 0..5 {
            assert!((psf.weight(0, b) - 0.2).abs() < 1e-12, "tap {b}");
        }
    }

    #[test]
    fn motion_psf_vertical_ten_is_a_unit_sum_column() {
        let psf = make_motion_psf(10.0, 90.0).unwrap();
        assert_eq!(psf.kwidth(), 1, "vertical blur must be a single column");
        assert!(psf.kheight() >= 9);
        let sum: f64 = psf.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn motion_psf_rejects_short_lengths() {
        assert!(make_motion_psf(0.5, 0.0).is_err());
    }

    #[test]
    fn gaussian_psf_radius_zero_is_identity() {
        let psf = make_gaussian_psf(0, 2.0).unwrap();
        assert_eq!((psf.kheight(), psf.kwidth()), (1, 1));
        assert!((psf.weight(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_psf_is_symmetric() {
        let psf = make_gaussian_psf(3, 3.0).unwrap();
        let n = 7;
        for a in 0..n {
            for b in 0..n {
                let w = psf.weight(a, b);
                assert_eq!(w, psf.weight(n - 1 - a, b));
                assert_eq!(w, psf.weight(a, n - 1 - b));
                assert_eq!(w, psf.weight(b, a));
            }
        }
    }

    #[test]
    fn gaussian_psf_center_matches_direct_summation() {
        // Oracle: direct double-loop evaluation of the normalised Gaussian.
        let (radius, sigma) = (3i64, 3.0f64);
        let mut total = 0.0;
        for y in -radius..=radius {
            for x in -radius..=radius {
                total += (-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let expected_center = 1.0 / total;
        let psf = make_gaussian_psf(3, 3.0).unwrap();
        assert!((psf.weight(3, 3) - expected_center).abs() < 1e-14);
    }

    #[test]
    fn gaussian_psf_rejects_bad_sigma() {
        assert!(make_gaussian_psf(2, 0.0).is_err());
        assert!(make_gaussian_psf(2, -1.0).is_err());
        assert!(make_gaussian_psf(2, f64::NAN).is_err());
    }

    #[test]
    fn convolve_identity_psf_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let u = random_grid(&mut rng, 6, 8);
        let out = convolve_periodic(&u, &Psf::identity()).unwrap();
        assert_eq!(u, out);
    }

    #[test]
    fn convolve_preserves_constants() {
        let u = ImageGrid::constant(12, 12, 77.5);
        let psf = make_gaussian_psf(2, 1.3).unwrap();
        let out = convolve_periodic(&u, &psf).unwrap();
        for &v in out.data() {
            assert!((v - 77.5).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_rejects_oversized_kernels() {
        let u = ImageGrid::constant(4, 4, 1.0);
        let psf = make_gaussian_psf(3, 2.0).unwrap(); // 7x7 on a 4x4 image
        assert!(convolve_periodic(&u, &psf).is_err());
    }

    #[test]
    fn spectral_convolution_matches_spatial_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let u = random_grid(&mut rng, 8, 8);
            let psf = random_psf(&mut rng, 3, 3);
            let spatial = convolve_periodic(&u, &psf).unwrap();
            let kernel = build_spectral_kernel(&psf, 8, 8, 0.0, 1.0, 1.0).unwrap();
            let spectral = kernel.blur(&u).unwrap();
            for k in 0..u.len() {
                assert!(
                    (spatial.data()[k] - spectral.data()[k]).abs() < 1e-10,
                    "pixel {k}: {} vs {}",
                    spatial.data()[k],
                    spectral.data()[k]
                );
            }
        }
    }

    #[test]
    fn spectral_adjoint_matches_spatial_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let u = random_grid(&mut rng, 9, 8);
        let psf = random_psf(&mut rng, 3, 5);
        let spatial = convolve_periodic_adjoint(&u, &psf).unwrap();
        let kernel = build_spectral_kernel(&psf, 9, 8, 0.0, 1.0, 1.0).unwrap();
        let spectral = kernel.blur_adjoint(&u).unwrap();
        for k in 0..u.len() {
            assert!((spatial.data()[k] - spectral.data()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn blur_adjoint_satisfies_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let u = random_grid(&mut rng, 8, 8);
        let v = random_grid(&mut rng, 8, 8);
        let psf = random_psf(&mut rng, 3, 3);
        let lhs = convolve_periodic(&u, &psf).unwrap().dot(&v);
        let rhs = u.dot(&convolve_periodic_adjoint(&v, &psf).unwrap());
        assert!((lhs - rhs).abs() < 1e-8);
    }

    #[test]
    fn spectral_kernel_dc_term_is_gamma3_for_identity_psf() {
        let kernel = build_spectral_kernel(&Psf::identity(), 8, 8, 0.0, 1.0, 1.0).unwrap();
        assert!((kernel.denom()[0] - 1.0).abs() < 1e-12);
        assert!((kernel.transfer()[0].re - 1.0).abs() < 1e-12);
        assert!(kernel.transfer()[0].im.abs() < 1e-12);
    }

    #[test]
    fn spectral_kernel_denom_is_strictly_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let psf = random_psf(&mut rng, 3, 3);
        let gamma3 = 30.0;
        let kernel = build_spectral_kernel(&psf, 8, 8, 0.01, 0.5, gamma3).unwrap();
        let min_t = kernel
            .transfer()
            .iter()
            .map(|c| c.norm_sqr())
            .fold(f64::INFINITY, f64::min);
        for &d in kernel.denom() {
            assert!(d > 0.0);
            assert!(d >= gamma3 * min_t - 1e-12);
        }
    }

    #[test]
    fn spectral_kernel_rejects_nonpositive_gamma3() {
        assert!(build_spectral_kernel(&Psf::identity(), 8, 8, 0.0, 1.0, 0.0).is_err());
        assert!(build_spectral_kernel(&Psf::identity(), 8, 8, 0.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn normal_operator_matches_spatial_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mu, gamma1, gamma3) = (0.01, 0.5, 30.0);
        for _ in 0..3 {
            let u = random_grid(&mut rng, 8, 8);
            let psf = random_psf(&mut rng, 3, 3);
            let kernel = build_spectral_kernel(&psf, 8, 8, mu, gamma1, gamma3).unwrap();
            let spectral = kernel.apply_normal_operator(&u).unwrap();
            let ata = convolve_periodic_adjoint(&convolve_periodic(&u, &psf).unwrap(), &psf).unwrap();
            let lap = laplacian(&u);
            for k in 0..u.len() {
                let spatial = gamma3 * ata.data()[k] - (mu + gamma1) * lap.data()[k];
                assert!(
                    (spatial - spectral.data()[k]).abs() < 1e-8,
                    "pixel {k}: {spatial} vs {}",
                    spectral.data()[k]
                );
            }
        }
    }

    #[test]
    fn solve_inverts_the_normal_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let u0 = random_grid(&mut rng, 8, 8);
        let psf = random_psf(&mut rng, 3, 3);
        let kernel = build_spectral_kernel(&psf, 8, 8, 0.01, 0.5, 30.0).unwrap();
        // Apply the operator spatially, then solve spectrally.
        let ata = convolve_periodic_adjoint(&convolve_periodic(&u0, &psf).unwrap(), &psf).unwrap();
        let lap = laplacian(&u0);
        let rhs = ata.zip_map(&lap, |a, l| 30.0 * a - 0.51 * l);
        let solved = kernel.solve(&rhs).unwrap();
        for k in 0..u0.len() {
            assert!(
                (solved.data()[k] - u0.data()[k]).abs() < 1e-8,
                "pixel {k}: {} vs {}",
                solved.data()[k],
                u0.data()[k]
            );
        }
    }

    #[test]
    fn solve_constant_rhs_with_identity_psf_scales_by_gamma3() {
        let gamma3 = 2.5;
        let kernel = build_spectral_kernel(&Psf::identity(), 6, 6, 0.3, 0.7, gamma3).unwrap();
        let rhs = ImageGrid::constant(6, 6, 5.0);
        let u = kernel.solve(&rhs).unwrap();
        for &v in u.data() {
            assert!((v - 5.0 / gamma3).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_rejects_mismatched_dimensions() {
        let kernel = build_spectral_kernel(&Psf::identity(), 6, 6, 0.0, 1.0, 1.0).unwrap();
        let rhs = ImageGrid::constant(5, 6, 1.0);
        assert!(matches!(
            kernel.solve(&rhs),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fft_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let u = random_grid(&mut rng, 12, 10);
        let fft = Fft2::new(12, 10);
        let back = fft.inverse_to_real(fft.forward_real(u.data()));
        for k in 0..u.len() {
            assert!((back[k] - u.data()[k]).abs() < 1e-10);
        }
    }
}

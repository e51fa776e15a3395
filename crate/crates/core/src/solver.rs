//! Augmented Lagrangian solver for the l2-lp restoration model
//!
//!   min_u  mu/2 * ||grad u||^2  +  ||grad u||_p^p  +  lambda * sum(Au - f log Au)
//!
//! split with v = grad_x u, w = grad_y u, z = Au. Each outer iteration
//! solves the u-subproblem exactly in the DFT basis, applies the
//! p-shrinkage map to (v, w), takes the positive root of the pointwise
//! quadratic for z, and ascends the three multipliers.
//!
//! Setting `p = 1` gives the l2-l1 model; `mu = 0, p = 1` gives the TV
//! model. All three run through the same loop.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::img::ImageGrid;
use crate::ops::{
    build_spectral_kernel, convolve_periodic, grad_x, grad_x_adjoint, grad_y, grad_y_adjoint,
    Psf, SpectralKernel,
};

/// All scalar knobs of the solver.
///
/// Defaults are the working set used throughout the bundled experiments:
/// `mu = 0.01`, `gamma1 = gamma2 = 0.5`, `gamma3 = 30`, `p = 1/2`,
/// `lambda = 6`, tolerance `1e-4`, at most 250 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Quadratic smoothness weight, `mu >= 0`.
    pub mu: f64,
    /// Fidelity weight, `lambda > 0`.
    pub lambda: f64,
    /// Shrinkage exponent in (0, 1]; 1 is plain soft thresholding.
    pub p: f64,
    /// Penalty on the v-split; must equal `gamma2`.
    pub gamma1: f64,
    /// Penalty on the w-split; must equal `gamma1`.
    pub gamma2: f64,
    /// Penalty on the z-split, `gamma3 > 0`.
    pub gamma3: f64,
    /// Relative-change stopping tolerance.
    pub eps_tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Positivity clamp applied to z before any logarithm.
    pub z_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            lambda: 6.0,
            p: 0.5,
            gamma1: 0.5,
            gamma2: 0.5,
            gamma3: 30.0,
            eps_tol: 1e-4,
            max_iter: 250,
            z_floor: 1e-8,
        }
    }
}

impl SolverConfig {
    /// The l2-lp model with `p = 1/2` at the given fidelity weight.
    pub fn our_model(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    /// The l2-l1 parameterisation (`p = 1`, `mu = 0.01`).
    pub fn l2_l1(lambda: f64) -> Self {
        Self { lambda, p: 1.0, ..Self::default() }
    }

    /// The TV parameterisation (`mu = 0`, `p = 1`).
    pub fn tv(lambda: f64) -> Self {
        Self { lambda, mu: 0.0, p: 1.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        check(self.p > 0.0 && self.p <= 1.0, "p must be in (0,1]")?;
        check(self.lambda > 0.0 && self.lambda.is_finite(), "lambda must be positive")?;
        check(self.mu >= 0.0 && self.mu.is_finite(), "mu must be non-negative")?;
        check(self.gamma1 > 0.0 && self.gamma1.is_finite(), "gamma1 must be positive")?;
        check(self.gamma2 == self.gamma1, "gamma2 must equal gamma1")?;
        check(self.gamma3 > 0.0 && self.gamma3.is_finite(), "gamma3 must be positive")?;
        check(self.eps_tol > 0.0, "tolerance must be positive")?;
        check(self.max_iter >= 1, "max_iter must be at least 1")?;
        check(self.z_floor > 0.0, "z_floor must be positive")?;
        Ok(())
    }
}

/// The seven iterates plus the iteration counter.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: ImageGrid,
    pub v: ImageGrid,
    pub w: ImageGrid,
    pub z: ImageGrid,
    pub lam1: ImageGrid,
    pub lam2: ImageGrid,
    pub lam3: ImageGrid,
    pub iter: usize,
}

/// One completed outer iteration.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iter: usize,
    /// `||u_next - u_prev|| / ||u_prev||`.
    pub rel_change: f64,
    /// `||v - grad_x u||_2` after the iteration.
    pub res_v: f64,
    /// `||w - grad_y u||_2` after the iteration.
    pub res_w: f64,
    /// `||z - Au||_2` after the iteration.
    pub res_z: f64,
    /// Objective value at the unclamped iterate.
    pub energy: f64,
    /// Wall time of the iteration in milliseconds.
    pub ms: f64,
}

/// Per-iteration diagnostics of a solver run.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.ms).sum::<f64>() / 1e3
    }

    /// Writes the trace as CSV with the fixed header
    /// `iter,rel_change,res_v,res_w,res_z,energy,ms`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,rel_change,res_v,res_w,res_z,energy,ms")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter, r.rel_change, r.res_v, r.res_w, r.res_z, r.energy, r.ms
            )?;
        }
        Ok(())
    }
}

/// Warm start: `u = f`, `v/w = grad f`, `z = max(Af, z_floor)`, zero
/// multipliers. Rejects negative observations.
pub fn init_state(f: &ImageGrid, kernel: &SpectralKernel, cfg: &SolverConfig) -> Result<SolverState> {
    if f.min_value() < 0.0 {
        return Err(Error::InvalidParameter(
            "observed image must be non-negative".into(),
        ));
    }
    let (h, w) = f.dims();
    let z = kernel.blur(f)?.map(|v| v.max(cfg.z_floor));
    Ok(SolverState {
        u: f.clone(),
        v: grad_x(f),
        w: grad_y(f),
        z,
        lam1: ImageGrid::zeros(h, w),
        lam2: ImageGrid::zeros(h, w),
        lam3: ImageGrid::zeros(h, w),
        iter: 0,
    })
}

/// Exact minimiser of the quadratic u-subproblem: assembles
/// `rhs = grad_x'(g1 v - lam1) + grad_y'(g2 w - lam2) + A'(g3 z - lam3)`
/// and solves the diagonalised normal equations.
pub fn update_u(state: &SolverState, kernel: &SpectralKernel, cfg: &SolverConfig) -> Result<ImageGrid> {
    let tx = grad_x_adjoint(&state.v.zip_map(&state.lam1, |v, l| cfg.gamma1 * v - l));
    let ty = grad_y_adjoint(&state.w.zip_map(&state.lam2, |w, l| cfg.gamma2 * w - l));
    let tz = kernel.blur_adjoint(&state.z.zip_map(&state.lam3, |z, l| cfg.gamma3 * z - l))?;
    let mut rhs = tx;
    rhs = rhs.zip_map(&ty, |a, b| a + b);
    rhs = rhs.zip_map(&tz, |a, b| a + b);
    kernel.solve(&rhs)
}

/// Magnitude part of the p-shrinkage map: `max(r - gamma^(p-2) r^(p-1), 0)`.
/// Reduces to soft thresholding with threshold `1/gamma` at `p = 1`.
pub fn p_shrink(r: f64, gamma: f64, p: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    (r - gamma.powf(p - 2.0) * r.powf(p - 1.0)).max(0.0)
}

/// Joint p-shrinkage of the gradient splits: the shrunk magnitude of
/// `(grad_x u + lam1/g1, grad_y u + lam2/g2)` redistributed along the
/// original direction, with the 0/0 case mapped to zero.
pub fn update_vw(state: &SolverState, u_next: &ImageGrid, cfg: &SolverConfig) -> (ImageGrid, ImageGrid) {
    let gx = grad_x(u_next);
    let gy = grad_y(u_next);
    let (h, w) = u_next.dims();
    let mut v = ImageGrid::zeros(h, w);
    let mut wgrid = ImageGrid::zeros(h, w);
    for k in 0..h * w {
        let rx = gx.data()[k] + state.lam1.data()[k] / cfg.gamma1;
        let ry = gy.data()[k] + state.lam2.data()[k] / cfg.gamma2;
        let r = rx.hypot(ry);
        if r > 0.0 {
            let m = p_shrink(r, cfg.gamma1, cfg.p);
            v.data_mut()[k] = m * rx / r;
            wgrid.data_mut()[k] = m * ry / r;
        }
    }
    (v, wgrid)
}

/// Positive root of `z^2 - b z - (lambda/gamma3) f = 0`.
pub fn z_positive_root(b: f64, lambda: f64, gamma3: f64, f: f64) -> f64 {
    0.5 * (b + (b * b + 4.0 * lambda * f / gamma3).sqrt())
}

/// Pointwise z-update: positive root of the first-order condition of the
/// fidelity subproblem, clamped to `z_floor`. Takes the already-blurred
/// next iterate.
pub fn update_z(state: &SolverState, au_next: &ImageGrid, f: &ImageGrid, cfg: &SolverConfig) -> ImageGrid {
    let (h, w) = f.dims();
    ImageGrid::from_fn(h, w, |i, j| {
        let b = au_next[(i, j)] + state.lam3[(i, j)] / cfg.gamma3 - cfg.lambda / cfg.gamma3;
        z_positive_root(b, cfg.lambda, cfg.gamma3, f[(i, j)]).max(cfg.z_floor)
    })
}

/// Multiplier ascent:
/// `lam1 += g1 (grad_x u - v)`, `lam2 += g2 (grad_y u - w)`, `lam3 += g3 (Au - z)`.
pub fn update_multipliers(
    state: &SolverState,
    u_next: &ImageGrid,
    v_next: &ImageGrid,
    w_next: &ImageGrid,
    z_next: &ImageGrid,
    au_next: &ImageGrid,
    cfg: &SolverConfig,
) -> (ImageGrid, ImageGrid, ImageGrid) {
    let gx = grad_x(u_next);
    let gy = grad_y(u_next);
    let lam1 = ImageGrid::from_fn(state.u.height(), state.u.width(), |i, j| {
        state.lam1[(i, j)] + cfg.gamma1 * (gx[(i, j)] - v_next[(i, j)])
    });
    let lam2 = ImageGrid::from_fn(state.u.height(), state.u.width(), |i, j| {
        state.lam2[(i, j)] + cfg.gamma2 * (gy[(i, j)] - w_next[(i, j)])
    });
    let lam3 = ImageGrid::from_fn(state.u.height(), state.u.width(), |i, j| {
        state.lam3[(i, j)] + cfg.gamma3 * (au_next[(i, j)] - z_next[(i, j)])
    });
    (lam1, lam2, lam3)
}

/// Relative change between consecutive iterates: `||next - prev|| / ||prev||`.
pub fn relative_change(u_prev: &ImageGrid, u_next: &ImageGrid) -> Result<f64> {
    if u_prev.dims() != u_next.dims() {
        return Err(Error::DimensionMismatch { expected: u_prev.dims(), got: u_next.dims() });
    }
    let denom = u_prev.norm_l2();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "relative change undefined for a zero previous iterate".into(),
        ));
    }
    Ok(u_next.zip_map(u_prev, |a, b| a - b).norm_l2() / denom)
}

/// Objective value of the restoration model at `u`, blurring spatially.
pub fn energy(u: &ImageGrid, f: &ImageGrid, psf: &Psf, cfg: &SolverConfig) -> Result<f64> {
    let au = convolve_periodic(u, psf)?;
    Ok(energy_given_blurred(u, &au, f, cfg))
}

/// Objective value with `Au` already available. The blurred image is
/// clamped to `z_floor` before the logarithm.
pub fn energy_given_blurred(u: &ImageGrid, au: &ImageGrid, f: &ImageGrid, cfg: &SolverConfig) -> f64 {
    let gx = grad_x(u);
    let gy = grad_y(u);
    let mut total = 0.0;
    for k in 0..u.len() {
        let g2 = gx.data()[k] * gx.data()[k] + gy.data()[k] * gy.data()[k];
        let a = au.data()[k].max(cfg.z_floor);
        total += 0.5 * cfg.mu * g2 + g2.sqrt().powf(cfg.p)
            + cfg.lambda * (a - f.data()[k] * a.ln());
    }
    total
}

/// Full solver loop: u, (v, w), z, multipliers, repeated until the
/// relative change falls below tolerance or the iteration cap is hit.
///
/// Returns the restored image clamped to [0, 255] and the per-iteration
/// trace; trace entries are computed from the unclamped iterates.
pub fn run(f: &ImageGrid, psf: &Psf, cfg: &SolverConfig) -> Result<(ImageGrid, ConvergenceTrace)> {
    cfg.validate()?;
    let (h, w) = f.dims();
    let kernel = build_spectral_kernel(psf, h, w, cfg.mu, cfg.gamma1, cfg.gamma3)?;
    let mut state = init_state(f, &kernel, cfg)?;
    let mut trace = ConvergenceTrace::default();

    for k in 1..=cfg.max_iter {
        let started = Instant::now();

        let u_next = update_u(&state, &kernel, cfg)?;
        let (v_next, w_next) = update_vw(&state, &u_next, cfg);
        let au_next = kernel.blur(&u_next)?;
        let z_next = update_z(&state, &au_next, f, cfg);
        let (lam1, lam2, lam3) =
            update_multipliers(&state, &u_next, &v_next, &w_next, &z_next, &au_next, cfg);

        let rel_change = relative_change(&state.u, &u_next)?;
        let gx = grad_x(&u_next);
        let gy = grad_y(&u_next);
        let res_v = v_next.zip_map(&gx, |a, b| a - b).norm_l2();
        let res_w = w_next.zip_map(&gy, |a, b| a - b).norm_l2();
        let res_z = z_next.zip_map(&au_next, |a, b| a - b).norm_l2();
        let energy = energy_given_blurred(&u_next, &au_next, f, cfg);

        let finite = u_next.is_all_finite()
            && rel_change.is_finite()
            && res_v.is_finite()
            && res_w.is_finite()
            && res_z.is_finite()
            && energy.is_finite();
        if !finite {
            return Err(Error::NonFinite { iteration: k });
        }

        state = SolverState {
            u: u_next,
            v: v_next,
            w: w_next,
            z: z_next,
            lam1,
            lam2,
            lam3,
            iter: k,
        };
        trace.records.push(TraceRecord {
            iter: k,
            rel_change,
            res_v,
            res_w,
            res_z,
            energy,
            ms: started.elapsed().as_secs_f64() * 1e3,
        });

        if rel_change <= cfg.eps_tol {
            break;
        }
    }

    Ok((state.u.clamped(0.0, 255.0), trace))
}

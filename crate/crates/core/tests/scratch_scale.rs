use lprestore::degrade::{add_poisson_noise};
use lprestore::img::make_synthetic;
use lprestore::metrics::{psnr, ssim};
use lprestore::ops::Psf;
use lprestore::solver::{run, SolverConfig};

#[test]
fn scale_hypothesis() {
    let clean = make_synthetic(128).unwrap();
    let noisy = add_poisson_noise(&clean, 255.0, 42).unwrap();

    // normalized to [0,1]
    let f01 = noisy.map(|v| v / 255.0);
    let cfg = SolverConfig { max_iter: 2000, ..SolverConfig::our_model(6.0) };
    let (u01, trace) = run(&f01, &Psf::identity(), &cfg).unwrap();
    let u = u01.map(|v| v * 255.0);
    let first = &trace.records[0];
    let last = trace.last().unwrap();
    println!(
        "[0,1] scale: iters={} rel={:.3e} rv {:.4}->{:.4} ({:.2}%) rw {:.4}->{:.4} rz {:.5}->{:.5} PSNR={:.2} SSIM={:.4}",
        trace.iterations(),
        last.rel_change,
        first.res_v,
        last.res_v,
        100.0 * last.res_v / first.res_v,
        first.res_w,
        last.res_w,
        first.res_z,
        last.res_z,
        psnr(&u, &clean).unwrap(),
        ssim(&u.clamped(0.0, 255.0), &clean).unwrap()
    );
}

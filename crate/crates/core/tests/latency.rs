// Timing checks live in their own binary so no other test competes for the CPU.

use inqmad::bench::scaling_sweep;

#[test]
fn latency_grows_roughly_quadratically_in_dimension() {
    let reports = scaling_sweep(&[1000, 2000], 1, 150, 3, 0).unwrap();
    let ratio = reports[1].1.median_ns / reports[0].1.median_ns;
    assert!((2.5..=6.0).contains(&ratio), "latency ratio {ratio}");
}

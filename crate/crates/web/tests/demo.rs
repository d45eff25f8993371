use nccz_web::{decay_curve, kernel_surgery, stopping_picture};

#[test]
fn stopping_picture_is_consistent() {
    let p = stopping_picture(6, 2, 3, 2.0).unwrap();
    assert_eq!(p.kept.len(), 7);
    assert_eq!(p.density.len(), 64);
    assert!(p.kept[0].iter().all(|&r| (r - 2.0).abs() < 1e-9));
    // kept and stopped ranks add up to the previous kept rank
    for n in 1..=6 {
        for (c, (&q, &s)) in p.kept[n].iter().zip(&p.stopped[n]).enumerate() {
            assert!((q + s - p.kept[n - 1][c / 2]).abs() < 1e-9);
        }
    }
    assert!(p.trace_q_perp <= p.trace_bound + 1e-8);
    assert!(stopping_picture(0, 1, 1, 2.0).is_err());
    assert!(stopping_picture(4, 1, 1, 0.5).is_err());
}

#[test]
fn decay_curve_decreases() {
    let c = decay_curve(7, 1, 2.0).unwrap();
    assert_eq!(c.s, (1..7).collect::<Vec<_>>());
    let slope = c.slope.expect("at least two shifts with stopping");
    assert!(slope < 0.0, "slope {slope}");
    assert!(decay_curve(12, 1, 2.0).is_err());
}

#[test]
fn correction_restores_cancellation() {
    let r = kernel_surgery(6, 2, 1).unwrap();
    let scale = r.max_abs_k.max(1e-300);
    assert!(r.corrected_row_sum.iter().all(|v| v.abs() <= 1e-8 * scale));
    assert!(r.raw_row_sum.iter().any(|v| v.abs() > 1e-6 * scale));
    assert!(r.max_abs_k <= r.bound);
    assert!(kernel_surgery(6, 7, 0).is_err());
}

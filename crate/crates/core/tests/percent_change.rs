use multifair::evaluation::percent_change;

/// `(old, new, reported change)`, each rounded to `step` (the change to 1).
type Row = (f64, f64, f64);

/// The range of relative changes consistent with `old` and `new` being
/// rounded to the nearest `step`.
fn change_range(old: f64, new: f64, step: f64) -> (f64, f64) {
    let h = step / 2.0;
    (percent_change(old + h, new - h), percent_change(old - h, new + h))
}

fn consistent(rows: &[Row], step: f64) {
    for &(old, new, reported) in rows {
        let (lo, hi) = change_range(old, new, step);
        assert!(
            lo <= reported + 0.5 && reported - 0.5 <= hi,
            "{old} -> {new}: {reported} outside [{lo:.2}, {hi:.2}]"
        );
    }
}

#[test]
fn rounded_percentages_bracket_reported_changes() {
    let percents: [Row; 16] = [
        (88.0, 88.0, -1.0),
        (36.0, 34.0, -7.0),
        (74.0, 71.0, -4.0),
        (67.0, 63.0, -6.0),
        (78.0, 73.0, -7.0),
        (78.0, 73.0, -7.0),
        (93.0, 91.0, -2.0),
        (92.0, 89.0, -3.0),
        (88.0, 83.0, -6.0),
        (36.0, 33.0, -8.0),
        (74.0, 61.0, -18.0),
        (67.0, 52.0, -22.0),
        (78.0, 41.0, -47.0),
        (78.0, 42.0, -46.0),
        (93.0, 82.0, -12.0),
        (92.0, 78.0, -15.0),
    ];
    consistent(&percents, 1.0);
    let disparities: [Row; 4] = [
        (0.11, 0.01, -95.0),
        (0.07, 0.16, 124.0),
        (0.05, 0.07, 45.0),
        (0.04, 0.05, 33.0),
    ];
    consistent(&disparities, 0.01);
}

#[test]
fn changes_from_rounded_inputs_can_differ_from_reported_ones() {
    // Recomputed from the rounded endpoints 36 -> 34 gives about -5.6, so a
    // reported -7 must come from the unrounded values.
    let naive = percent_change(36.0, 34.0);
    assert!((naive + 5.555_555).abs() < 1e-4);
    assert_eq!(naive.round(), -6.0);
    let (lo, hi) = change_range(36.0, 34.0, 1.0);
    assert!(lo < -7.0 && -7.0 < hi);
}

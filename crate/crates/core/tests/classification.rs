mod common;

#[test]
fn noiseless_separated_ensemble_is_classified_perfectly() {
    for gate_lever in [3e-3, 5e-3, -4e-3] {
        let cmp = common::separated_comparison(8, gate_lever);
        assert_eq!(cmp.junction.truth_total, 4);
        assert_eq!(cmp.surface.truth_total, 4);
        for s in [cmp.junction, cmp.surface] {
            assert_eq!(s.precision(), 1.0, "{cmp:?}");
            assert_eq!(s.recall(), 1.0, "{cmp:?}");
        }
        assert_eq!(cmp.unmatched_traces, 0);
    }
}

#[test]
fn dead_counts_grow_with_segment_width() {
    let widths = [0.5, 1.0, 2.0, 3.0];
    for seed in [7, 11] {
        let fractions: Vec<f64> = widths.iter().map(|&w| common::dead_fraction(w, 3.0, seed)).collect();
        eprintln!("seed {seed}: dead fraction by piezo step {widths:?}: {fractions:?}");
        for pair in fractions.windows(2) {
            assert!(pair[1] >= pair[0], "{widths:?} -> {fractions:?}");
        }
        assert!(fractions[widths.len() - 1] > fractions[0]);
    }
}

//! Invariants checked over randomized inputs.

use imputability::data::{self, correlation_matrix, standardize, CsvOptions, Schema};
use imputability::evaluate::{evaluate, imputation_r2};
use imputability::impute::{self, ForestConfig, ImputeOptions, MethodSpec, PmmConfig, PpcaConfig};
use imputability::imputability::{predict_imputability, Calibration};
use imputability::missingness::{self, cell_probability, MissingnessSpec};
use imputability::pca::{self, NipalsConfig, PcaModel};
use imputability::seed;
use imputability::select::{entropy, information_gain};
use imputability::synth::{self, ColumnKind, Factor, LatentColumn, LatentSpec};
use imputability::{Column, DataMatrix, Role};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::RngExt;
use rand_distr::StandardNormal;

/// Correlated Gaussian columns with an optional random mask. Every row and
/// column keeps at least two observed cells.
fn random_matrix(seed_value: u64, n: usize, p: usize, rate: f64) -> DataMatrix {
    let mut rng = seed::rng(seed_value);
    let w = DMatrix::from_fn(p, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let z = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = z * w.transpose();
    x.iter_mut().for_each(|v| *v = 3.0 * *v + 0.5 * rng.sample::<f64, _>(StandardNormal) + 10.0);
    let mut obs = vec![vec![true; n]; p];
    for i in 0..n {
        for col in obs.iter_mut() {
            col[i] = rng.random::<f64>() >= rate;
        }
        while (0..p).filter(|&j| obs[j][i]).count() < 2.min(p) {
            obs[rng.random_range(0..p)][i] = true;
        }
    }
    for col in obs.iter_mut() {
        while col.iter().filter(|&&o| o).count() < 3 {
            col[rng.random_range(0..n)] = true;
        }
    }
    let cols = (0..p)
        .map(|j| Column::with_mask(format!("v{j}"), Role::Feature, x.column(j).iter().copied().collect(), obs[j].clone()))
        .collect();
    DataMatrix::new(cols).unwrap()
}

fn values(m: &DataMatrix, j: usize) -> Vec<f64> {
    m.columns()[j].values().to_vec()
}

fn masks(m: &DataMatrix) -> Vec<Vec<bool>> {
    m.columns().iter().map(|c| c.observed().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn standardization_is_idempotent_and_keeps_mask(s in any::<u64>(), n in 8usize..60, p in 2usize..6, rate in 0.0f64..0.4) {
        let m = random_matrix(s, n, p, rate);
        let once = standardize(&m).unwrap();
        let twice = standardize(&once).unwrap();
        prop_assert_eq!(masks(&once), masks(&m));
        for j in 0..p {
            for (a, b) in values(&once, j).iter().zip(values(&twice, j)) {
                if !a.is_nan() {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn correlation_survives_standardization(s in any::<u64>(), n in 8usize..60, p in 2usize..6) {
        let m = random_matrix(s, n, p, 0.0);
        let a = correlation_matrix(&m).unwrap();
        let b = correlation_matrix(&standardize(&m).unwrap()).unwrap();
        prop_assert!((a - b).amax() < 1e-10);
    }

    #[test]
    fn standardizer_inverts(s in any::<u64>(), n in 8usize..40, p in 2usize..5, rate in 0.0f64..0.4) {
        let m = random_matrix(s, n, p, rate);
        let scaler = data::Standardizer::fit(&m).unwrap();
        let back = scaler.invert(&scaler.apply(&m));
        for j in 0..p {
            for (i, (a, b)) in values(&m, j).iter().zip(values(&back, j)).enumerate() {
                if m.columns()[j].observed()[i] {
                    prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_keeps_values_and_mask(s in any::<u64>(), n in 1usize..30, p in 2usize..5, rate in 0.0f64..0.5) {
        let m = random_matrix(s, n.max(3), p, rate);
        let opts = CsvOptions::default();
        let mut buf = Vec::new();
        data::write_csv(&m, &mut buf, &opts).unwrap();
        let back = data::read_csv(buf.as_slice(), &Schema::of(&m), &opts).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn gain_is_bounded_and_label_free(
        xs in prop::collection::vec(-400i32..400, 10..80),
        classes in prop::collection::vec(0u8..4, 80),
        shift in -100i32..100,
        bins in 1usize..7,
    ) {
        let n = xs.len();
        let f: Vec<f64> = xs.iter().map(|&v| f64::from(v) / 4.0).collect();
        let c: Vec<f64> = classes[..n].iter().map(|&v| f64::from(v)).collect();
        let feature = Column::new("f", Role::Feature, f.clone());
        let class = Column::new("c", Role::Class, c.clone());
        let g = information_gain(&feature, &class, bins).unwrap().gain;
        let labels: Vec<u8> = classes[..n].to_vec();
        let h = entropy(&labels).unwrap();
        prop_assert!((0.0..=h + 1e-12).contains(&g));

        let shifted = Column::new("f", Role::Feature, f.iter().map(|v| v + f64::from(shift)).collect());
        prop_assert!((information_gain(&shifted, &class, bins).unwrap().gain - g).abs() < 1e-12);

        // Any bijection on class labels.
        let relabeled = Column::new("c", Role::Class, c.iter().map(|v| [7.0, -2.0, 0.5, 3.0][*v as usize]).collect());
        prop_assert!((information_gain(&feature, &relabeled, bins).unwrap().gain - g).abs() < 1e-12);
    }

    #[test]
    fn masking_probability_is_clamped_and_decreasing(base in 0.0f64..1.0, slope in 0.0f64..2.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let mut spec = MissingnessSpec::new("d", 0);
        spec.base_rate = base;
        spec.slope = slope;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (pl, ph) = (cell_probability(&spec, lo), cell_probability(&spec, hi));
        prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
        prop_assert!(pl >= ph);
    }

    #[test]
    fn mask_depends_only_on_driver(s in any::<u64>(), n in 20usize..100) {
        let m = random_matrix(s, n, 4, 0.0);
        let mut cols: Vec<Column> = m.columns().to_vec();
        cols[0] = Column::new("driver", Role::Driver, values(&m, 0));
        cols[1] = Column::new("class", Role::Class, values(&m, 1));
        let a = DataMatrix::new(cols.clone()).unwrap();
        // Same driver, different target values.
        cols[2] = Column::new("v2", Role::Feature, values(&m, 2).iter().map(|v| -v * 3.0).collect());
        cols[3] = Column::new("v3", Role::Feature, values(&m, 3).iter().rev().copied().collect());
        let b = DataMatrix::new(cols).unwrap();
        let spec = MissingnessSpec::new("driver", s);
        let (ma, mb) = (missingness::inject(&a, &spec).unwrap(), missingness::inject(&b, &spec).unwrap());
        prop_assert_eq!(masks(&ma.data), masks(&mb.data));
        prop_assert!(ma.data.columns()[0].is_complete() && ma.data.columns()[1].is_complete());
    }

    #[test]
    fn reflecting_a_column_keeps_absolute_loadings(s in any::<u64>(), n in 30usize..80, p in 3usize..6, flip in 0usize..6) {
        let flip = flip % p;
        let m = random_matrix(s, n, p, 0.0);
        let reflected = m.with_column_replaced(flip, values(&m, flip).iter().map(|v| -v).collect(), vec![true; n]).unwrap();
        let (a, b) = (pca::pca_correlation(&m).unwrap(), pca::pca_correlation(&reflected).unwrap());
        // Only well-separated components have stable directions.
        let k = (0..p - 1).take_while(|&c| a.explained[c] - a.explained[c + 1] > 1e-3).count().min(2);
        for c in 0..k {
            let expected: Vec<f64> = (0..p).map(|j| if j == flip { -a.loadings[(j, c)] } else { a.loadings[(j, c)] }).collect();
            let got: Vec<f64> = (0..p).map(|j| b.loadings[(j, c)]).collect();
            // The orientation rule may flip the whole component when the reflected
            // column carries its largest loading.
            let same = expected.iter().zip(&got).all(|(e, g)| (e - g).abs() < 1e-8);
            let negated = expected.iter().zip(&got).all(|(e, g)| (e + g).abs() < 1e-8);
            prop_assert!(same || negated);
            for j in 0..p {
                prop_assert!((a.loadings[(j, c)].abs() - b.loadings[(j, c)].abs()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_scores(s in any::<u64>(), n in 20usize..60, p in 3usize..6) {
        let m = random_matrix(s, n, p, 0.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(n / 3);
        // PC1 is only identifiable, and power iteration only fast, with a clear gap.
        let eig = pca::pca_correlation(&m).unwrap();
        prop_assume!(eig.explained[1] < 0.8 * eig.explained[0]);
        let permuted = m.take_rows(&order).unwrap();
        let z = standardize(&m).unwrap();
        let zp = standardize(&permuted).unwrap();
        let cfg = NipalsConfig::with_k(1);
        let (a, b) = (pca::nipals(&z, &cfg).unwrap(), pca::nipals(&zp, &cfg).unwrap());
        for j in 0..p {
            prop_assert!((a.loadings[(j, 0)] - b.loadings[(j, 0)]).abs() < 1e-7);
        }
        for (pos, &i) in order.iter().enumerate() {
            prop_assert!((a.scores[(i, 0)] - b.scores[(pos, 0)]).abs() < 1e-6);
        }
    }

    #[test]
    fn deflation_always_removes_variance(s in any::<u64>(), n in 20usize..60, p in 3usize..6, rate in 0.0f64..0.3) {
        let m = standardize(&random_matrix(s, n, p, rate)).unwrap();
        let model = match pca::nipals(&m, &NipalsConfig { k: 3, tol: 1e-9, max_iter: 5000 }) {
            Ok(model) => model,
            // Near-tied eigenvalues can stall the iteration; that must be reported, never returned.
            Err(imputability::Error::NonConvergence { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(model.explained.iter().all(|&e| e > 0.0));
        prop_assert!(model.explained.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn imputers_keep_observed_cells_and_fill_the_rest(s in any::<u64>(), n in 20usize..50, p in 3usize..5, rate in 0.05f64..0.4) {
        let m = random_matrix(s, n, p, rate);
        let specs = [
            MethodSpec::Mean,
            MethodSpec::Median,
            MethodSpec::Pmm(PmmConfig { m: 2, cycles: 2, ..PmmConfig::default() }),
            MethodSpec::Ppca(PpcaConfig { k: 1, ..PpcaConfig::default() }),
            MethodSpec::Nipals { k: Some(1) },
        ];
        for spec in &specs {
            let run = || impute::impute(&m, spec, &ImputeOptions::default(), s);
            let Ok(out) = run() else {
                // EM or NIPALS may stop early on tiny samples; that is an error, never bad output.
                continue;
            };
            prop_assert!(out.completed.is_complete(), "{} left gaps", spec);
            for (j, c) in m.columns().iter().enumerate() {
                for i in 0..n {
                    if c.observed()[i] {
                        prop_assert_eq!(c.values()[i], out.completed.columns()[j].values()[i]);
                    }
                }
            }
            prop_assert_eq!(&run().unwrap().completed, &out.completed);
        }
    }

    #[test]
    fn pmm_draws_only_observed_values(s in any::<u64>(), n in 15usize..50, p in 2usize..5, rate in 0.05f64..0.5) {
        let m = random_matrix(s, n, p, rate);
        let cfg = PmmConfig { m: 2, cycles: 2, ..PmmConfig::default() };
        for done in impute::pmm_imputations(&m, &cfg, &ImputeOptions::default(), s).unwrap() {
            for (j, c) in m.columns().iter().enumerate() {
                let donors = c.observed_values();
                for i in (0..n).filter(|&i| !c.observed()[i]) {
                    let v = done.columns()[j].values()[i];
                    prop_assert!(donors.contains(&v));
                }
            }
        }
    }

    #[test]
    fn r2_ignores_affine_maps_of_imputed_values(
        truth in prop::collection::vec(-50.0f64..50.0, 5..40),
        noise in prop::collection::vec(-5.0f64..5.0, 40),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -100.0f64..100.0,
    ) {
        let imputed: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e).collect();
        let mapped: Vec<f64> = imputed.iter().map(|v| a * v + b).collect();
        let (r, rm) = (imputation_r2(&imputed, &truth).unwrap(), imputation_r2(&mapped, &truth).unwrap());
        prop_assert!((r - rm).abs() < 1e-9);
    }

    #[test]
    fn evaluation_is_scale_free_and_reads_only_masked_cells(s in any::<u64>(), n in 30usize..80, scale in 0.01f64..100.0) {
        let truth = random_matrix(s, n, 3, 0.0);
        let masked_m = {
            let mut m = truth.clone();
            let mut rng = seed::rng(s ^ 1);
            for j in 0..3 {
                let obs: Vec<bool> = (0..n).map(|i| i < 3 || rng.random::<f64>() > 0.4).collect();
                m = m.with_column_replaced(j, values(&truth, j), obs).unwrap();
            }
            m
        };
        let done = impute::impute(&masked_m, &MethodSpec::Pmm(PmmConfig { m: 2, cycles: 2, ..PmmConfig::default() }), &ImputeOptions::default(), s).unwrap();
        let base = evaluate(&done.completed, &truth, &masked_m, "pmm", 0).unwrap();

        // Rescaling a feature everywhere leaves per-feature and pooled R² alone.
        let rescale = |m: &DataMatrix| {
            let obs = m.columns()[0].observed().to_vec();
            m.with_column_replaced(0, values(m, 0).iter().map(|v| v * scale + 3.0).collect(), obs).unwrap()
        };
        let scaled = evaluate(&rescale(&done.completed), &rescale(&truth), &rescale(&masked_m), "pmm", 0).unwrap();
        prop_assert!((scaled.overall - base.overall).abs() < 1e-9);
        for (x, y) in base.per_feature.iter().zip(&scaled.per_feature) {
            prop_assert!((x.r2 - y.r2).abs() < 1e-9);
        }

        // Ground truth at observed cells is never a test point.
        let mut tampered = truth.clone();
        for j in 0..3 {
            let obs = masked_m.columns()[j].observed();
            let v: Vec<f64> = values(&truth, j).iter().enumerate().map(|(i, &x)| if obs[i] { x + 1000.0 } else { x }).collect();
            tampered = tampered.with_column_replaced(j, v, vec![true; n]).unwrap();
        }
        let t = evaluate(&done.completed, &tampered, &masked_m, "pmm", 0).unwrap();
        for (x, y) in base.per_feature.iter().zip(&t.per_feature) {
            prop_assert_eq!(x.r2, y.r2);
            prop_assert_eq!(x.cells, y.cells);
        }
    }

    #[test]
    fn predictions_are_sign_free_rank_stable_and_clamped(
        loads in prop::collection::vec(-1.0f64..1.0, 3..10),
        signs in prop::collection::vec(any::<bool>(), 10),
        slope in -20.0f64..20.0,
        intercept in -5.0f64..5.0,
        up in 0.01f64..10.0,
        up_c in -1.0f64..1.0,
    ) {
        let names: Vec<String> = (0..loads.len()).map(|j| format!("f{j}")).collect();
        let model = |ls: &[f64]| PcaModel {
            method: pca::PcaMethod::Nipals,
            variables: names.clone(),
            loadings: DMatrix::from_column_slice(ls.len(), 1, ls),
            scores: DMatrix::zeros(0, 1),
            explained: vec![],
            iterations: vec![],
        };
        let flipped: Vec<f64> = loads.iter().zip(&signs).map(|(l, &s)| if s { -l } else { *l }).collect();
        let cal = Calibration { slope, intercept };
        let a = predict_imputability(&model(&loads), &names, Some(cal)).unwrap();
        let b = predict_imputability(&model(&flipped), &names, Some(cal)).unwrap();
        prop_assert_eq!(&a.features, &b.features);
        for f in &a.features {
            let r = f.predicted_r2.unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }
        let increasing = Calibration { slope: up, intercept: up_c };
        let c = predict_imputability(&model(&loads), &names, Some(increasing)).unwrap();
        let none = predict_imputability(&model(&loads), &names, None).unwrap();
        let ranks = |r: &imputability::imputability::ImputabilityReport| r.features.iter().map(|f| f.rank).collect::<Vec<_>>();
        prop_assert_eq!(ranks(&c), ranks(&none));
    }

    #[test]
    fn derived_seeds_are_stable_and_label_sensitive(master in any::<u64>(), r in 0usize..100) {
        prop_assert_eq!(seed::derive_seed(master, "impute", r, "pmm"), seed::derive_seed(master, "impute", r, "pmm"));
        prop_assert_ne!(seed::derive_seed(master, "impute", r, "pmm"), seed::derive_seed(master, "impute", r, "ppca"));
        prop_assert_ne!(seed::derive_seed(master, "impute", r, "pmm"), seed::derive_seed(master, "impute", r + 1, "pmm"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn missforest_keeps_observed_cells(s in any::<u64>(), rate in 0.1f64..0.4) {
        let m = random_matrix(s, 40, 3, rate);
        let spec = MethodSpec::MissForest(ForestConfig { n_trees: 10, max_rounds: 3, ..ForestConfig::default() });
        let out = impute::impute(&m, &spec, &ImputeOptions::default(), s).unwrap();
        prop_assert!(out.completed.is_complete());
        for (j, c) in m.columns().iter().enumerate() {
            for i in (0..40).filter(|&i| c.observed()[i]) {
                prop_assert_eq!(c.values()[i], out.completed.columns()[j].values()[i]);
            }
        }
        prop_assert_eq!(impute::impute(&m, &spec, &ImputeOptions::default(), s).unwrap().completed, out.completed);
    }
}

fn random_spec(seed_value: u64, n_rows: usize) -> LatentSpec {
    let mut rng = seed::rng(seed_value);
    let factors = vec![
        Factor { name: "a".into(), sd: 1.0 },
        Factor { name: "b".into(), sd: 0.7 },
    ];
    let columns = (0..5)
        .map(|j| LatentColumn {
            name: format!("x{j}"),
            role: Role::Feature,
            loadings: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            noise_sd: rng.random_range(0.2..1.0),
            offset: rng.random_range(-5.0..5.0),
            scale: rng.random_range(0.5..3.0),
            kind: ColumnKind::Continuous,
        })
        .collect();
    LatentSpec { n_rows, seed: seed_value, factors, columns }
}

#[test]
fn sample_correlation_tracks_implied_correlation() {
    for s in 0..5 {
        let spec = random_spec(s, 10_000);
        let m = synth::generate(&spec).unwrap();
        let r = correlation_matrix(&m).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let want = spec.implied_correlation(a, b);
                assert!((r[(a, b)] - want).abs() < 0.05, "spec {s}: r[{a},{b}] = {} vs {want}", r[(a, b)]);
            }
        }
    }
}

#[test]
fn cohort_analog_is_bit_reproducible() {
    let spec = synth::default_cohort_analog();
    let a = synth::generate(&spec).unwrap();
    assert_eq!(a, synth::generate(&spec).unwrap());
    // Frozen first row; a change here means the generator's stream changed.
    let row: Vec<f64> = a.columns().iter().map(|c| c.values()[0]).collect();
    let frozen: [f64; 12] = FROZEN_FIRST_ROW;
    for (got, want) in row.iter().zip(frozen) {
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{row:?}");
    }
}

const FROZEN_FIRST_ROW: [f64; 12] = [
    2.0,
    0.0,
    59.96212025041007,
    1.1044796798930128,
    1.2480279923045021,
    10.423012513524876,
    1.8896752293917944,
    28.59048941054023,
    1.4100144327191062,
    0.7954760187799556,
    1.9317162394229943,
    29.60505557801432,
];

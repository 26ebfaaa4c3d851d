use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ris_icedd::analysis::{remod_error_stats, ALPHA_POINTS};
use ris_icedd::channel::{check_unit_modulus, equivalent_from_cascaded};
use ris_icedd::estimator::{posterior_cov, split_partitions};
use ris_icedd::harness::{aggregate, derive_seed, inject_burst_at, ResultRow, ResultTable};
use ris_icedd::ldpc::{parse_parity_text, LdpcCode};
use ris_icedd::linalg::{gaussian_matrix, kron_vec, CMat, C64};
use ris_icedd::modem::lambda::build_lambda;
use ris_icedd::modem::packet::{code_from_wire, wire_from_code};
use ris_icedd::modem::qpsk::{hard_bits, qpsk_modulate, qpsk_soft_demod};
use ris_icedd::ris::phase_project;

fn code() -> &'static LdpcCode {
    use std::sync::OnceLock;
    static CODE: OnceLock<LdpcCode> = OnceLock::new();
    CODE.get_or_init(|| LdpcCode::build(128, 0.5, 7).unwrap())
}

fn bits(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn remod_pmf_is_consistent(ber in 0.0f64..=1.0) {
        let s = remod_error_stats(ber).unwrap();
        prop_assert!((s.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: C64 = s.pmf.iter().zip(ALPHA_POINTS).map(|(p, a)| a * *p).sum();
        prop_assert!((mean - C64::new(s.mean, 0.0)).norm() < 1e-12);
        let var: f64 = s.pmf.iter().zip(ALPHA_POINTS).map(|(p, a)| p * (a - mean).norm_sqr()).sum();
        prop_assert!((var - s.var).abs() < 1e-12);
    }

    #[test]
    fn ldpc_roundtrip(msg in bits(64)) {
        let c = code();
        let cw = c.encode(&msg).unwrap();
        prop_assert!(c.syndrome_ok(&cw));
        prop_assert_eq!(&cw[..c.k()], &msg[..]);
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        let out = c.decode(&llr, 20).unwrap();
        prop_assert!(out.converged);
        prop_assert_eq!(out.hard, cw);
    }

    #[test]
    fn ldpc_corrects_a_few_flips(msg in bits(64), flips in prop::collection::btree_set(0usize..128, 1..3)) {
        let c = code();
        let cw = c.encode(&msg).unwrap();
        let llr: Vec<f64> = cw.iter().enumerate().map(|(i, &b)| {
            let s = if b == 0 { 3.0 } else { -3.0 };
            if flips.contains(&i) { -s * 0.3 } else { s }
        }).collect();
        let out = c.decode(&llr, 50).unwrap();
        prop_assert_eq!(out.hard, cw);
    }

    #[test]
    fn wire_order_roundtrip(cw in bits(128), k in 0usize..=128) {
        let w = wire_from_code(&cw, k);
        prop_assert_eq!(&w[128 - k..], &cw[..k]);
        prop_assert_eq!(code_from_wire(&w, k), cw);
    }

    #[test]
    fn lambda_columns_are_kronecker(seed in any::<u64>(), k in 1usize..4, l_e in 1usize..6, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, k, n, 1.0);
        let p = gaussian_matrix(&mut rng, l_e, n, 1.0);
        let lam = build_lambda(&x, &p).unwrap();
        prop_assert_eq!(lam.shape(), (k * l_e, n));
        for i in 0..n {
            let xs: Vec<C64> = x.column(i).iter().cloned().collect();
            let ps: Vec<C64> = p.column(i).iter().cloned().collect();
            prop_assert_eq!(lam.column(i).into_owned(), kron_vec(&xs, &ps));
        }
    }

    #[test]
    fn projected_phases_have_unit_modulus(re in prop::collection::vec(-5.0f64..5.0, 1..32), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi: Vec<C64> = re.iter().map(|&r| C64::new(r, 0.0) + gaussian_matrix(&mut rng, 1, 1, 1.0)[(0, 0)]).collect();
        let p = phase_project(&phi);
        prop_assert!(check_unit_modulus(&p).is_ok());
        for (a, b) in phi.iter().zip(&p) {
            if a.norm() > 0.0 {
                prop_assert!((a.arg() - b.arg()).abs() < 1e-9 || ((a.arg() - b.arg()).abs() - 2.0 * std::f64::consts::PI).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn partitions_separate_exactly(seed in any::<u64>(), m in 1usize..6, h in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = gaussian_matrix(&mut rng, m, h, 1.0);
        let r = gaussian_matrix(&mut rng, m, h, 1.0);
        let mut y = CMat::zeros(m, 2 * h);
        y.columns_mut(0, h).copy_from(&(&d + &r));
        y.columns_mut(h, h).copy_from(&(&d - &r));
        let p = split_partitions(&y).unwrap();
        prop_assert!((p.direct - d).norm() < 1e-12);
        prop_assert!((p.reflected - r).norm() < 1e-12);
    }

    #[test]
    fn posterior_cov_is_psd_and_below_prior(seed in any::<u64>(), n in 1usize..6, t in 1usize..10, noise in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gaussian_matrix(&mut rng, n, t, 1.0);
        let prior: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { 0.5 + i as f64 }).collect();
        let c = posterior_cov(&s, &prior, noise).unwrap();
        prop_assert!((&c - c.adjoint()).norm() < 1e-9);
        let eig = c.clone().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e > -1e-9));
        for i in 0..n {
            prop_assert!(c[(i, i)].re <= prior[i] + 1e-9);
        }
        prop_assert!(c.row(0).norm() < 1e-12);
    }

    #[test]
    fn equivalent_channel_is_linear_in_phases(seed in any::<u64>(), m in 1usize..5, k in 1usize..4, l_e in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = gaussian_matrix(&mut rng, m, k, 1.0);
        let z = gaussian_matrix(&mut rng, m, k * l_e, 1.0);
        let phi: Vec<C64> = gaussian_matrix(&mut rng, l_e, 1, 1.0).iter().cloned().collect();
        let hbar = equivalent_from_cascaded(&h, &z, &phi);
        for u in 0..k {
            let zk = z.columns(u * l_e, l_e);
            let col = h.column(u) + zk * CMat::from_column_slice(l_e, 1, &phi);
            prop_assert!((hbar.column(u) - col).norm() < 1e-12);
        }
    }

    #[test]
    fn qpsk_noiseless_demod_recovers_bits(b in bits(64), sx2 in 0.1f64..100.0) {
        let s = qpsk_modulate(&b, sx2).unwrap();
        prop_assert!(s.iter().all(|x| (x.norm_sqr() - sx2).abs() < 1e-9 * sx2));
        prop_assert_eq!(hard_bits(&s), b.clone());
        let llr = qpsk_soft_demod(&s, 1.0, sx2).unwrap();
        let dec: Vec<u8> = llr.iter().map(|&l| u8::from(l < 0.0)).collect();
        prop_assert_eq!(dec, b);
    }

    #[test]
    fn burst_flips_exactly_its_span(b in bits(100), len in 0usize..40, off in 0usize..60) {
        let out = inject_burst_at(&b, len, off).unwrap();
        for (i, (x, y)) in b.iter().zip(&out).enumerate() {
            prop_assert_eq!(x != y, (off..off + len).contains(&i));
        }
        prop_assert!(inject_burst_at(&b, len, 101 - len).is_err());
    }

    #[test]
    fn seeds_separate_streams(master in any::<u64>(), a in 0u64..8, b in 0u64..8) {
        prop_assert_eq!(derive_seed(master, a, b), derive_seed(master, a, b));
        prop_assert_ne!(derive_seed(master, a, b), derive_seed(master, a + 8, b));
        prop_assert_ne!(derive_seed(master, a, b), derive_seed(master, a, b + 8));
    }

    #[test]
    fn results_csv_roundtrip_and_aggregate(vals in prop::collection::vec((0usize..3, 0usize..4, 0.0f64..2.0, prop::option::of(0.0f64..2.0)), 1..40)) {
        let rows: Vec<ResultRow> = vals.iter().enumerate().map(|(i, &(beta, p, nmse, d))| ResultRow {
            experiment_id: "x".into(),
            p_t_dbm: 10.0 * p as f64,
            block: 0,
            beta,
            trial: i,
            trial_seed: i as u64,
            nmse_direct: d,
            nmse_cascaded: nmse,
            ber: 0.0,
            fer: 0.0,
        }).collect();
        let table = ResultTable::new(rows.clone());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = ResultTable::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(&back.rows, &table.rows);
        let summary = aggregate(&rows);
        prop_assert_eq!(summary.iter().map(|s| s.trials).sum::<usize>(), rows.len());
        for s in &summary {
            let group: Vec<f64> = rows.iter().filter(|r| r.beta == s.beta && r.p_t_dbm == s.p_t_dbm).map(|r| r.nmse_cascaded).collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            prop_assert!((s.nmse_cascaded_mean - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn parity_text_roundtrip() {
    let c = code();
    let text = c.to_text();
    let (n, checks) = parse_parity_text(&text).unwrap();
    assert_eq!(n, c.n());
    assert_eq!(checks, c.checks());
    assert_eq!(&LdpcCode::from_text(&text).unwrap(), c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parsers_reject_garbage_without_panicking(text in "\\PC{0,200}") {
        let _ = ris_icedd::harness::parse_experiment(&text);
        let _ = parse_parity_text(&text);
        let _ = LdpcCode::from_text(&text);
        let _ = ResultTable::read_csv(text.as_bytes());
    }

    #[test]
    fn parity_text_with_structure(rows in prop::collection::vec(prop::collection::vec(0usize..12, 0..5), 0..6), n in 0usize..12) {
        let mut text = format!("# ldpc n={n} m={}\n", rows.len());
        for (r, row) in rows.iter().enumerate() {
            text.push_str(&format!("{r}: {}\n", row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")));
        }
        if let Ok(code) = LdpcCode::from_text(&text) {
            let cw = code.encode(&vec![1u8; code.k()]).unwrap();
            prop_assert!(code.syndrome_ok(&cw));
        }
    }
}

/// Replays the checked-in fuzz seeds through the same entry points.
#[test]
fn fuzz_corpus_replays() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for (target, f) in [
        (
            "config_parse",
            (|t: &str| drop(ris_icedd::harness::parse_experiment(t))) as fn(&str),
        ),
        ("parity_check_import", |t| drop(LdpcCode::from_text(t))),
        ("result_table_csv", |t| {
            drop(ResultTable::read_csv(t.as_bytes()))
        }),
    ] {
        for e in std::fs::read_dir(root.join(target)).unwrap() {
            f(&std::fs::read_to_string(e.unwrap().path()).unwrap());
            seen += 1;
        }
    }
    assert!(seen >= 10);
}

use ema_market::calibration::{calibrate, cv_statistics, ingest, ingest_path, CalibrationOptions, SellerRecord};
use ema_market::Error;
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn records() -> impl Strategy<Value = Vec<SellerRecord>> {
    prop::collection::vec((prop::collection::vec(1.0f64..200.0, 1..4), 0u64..5_000), 3..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(k, (prices, monthly_volume))| SellerRecord { seller_id: format!("s{k}"), prices, monthly_volume })
            .collect()
    })
}

fn to_csv(recs: &[SellerRecord]) -> String {
    let mut s = String::from("seller_id,price,volume\n");
    for r in recs {
        // first variant carries the volume, the rest carry none
        for (j, p) in r.prices.iter().enumerate() {
            let v = if j == 0 { r.monthly_volume } else { 0 };
            s.push_str(&format!("{},{p},{v}\n", r.seller_id));
        }
    }
    s
}

#[test]
fn fixture_cv_values() {
    let recs = ingest_path(fixture("cv_five_sellers.csv")).unwrap();
    let mut rdr = csv::Reader::from_path(fixture("cv_five_sellers_expected.csv")).unwrap();
    let hdr = rdr.headers().unwrap().clone();
    let col = |name: &str| hdr.iter().position(|h| h == name).unwrap();
    let mut rows = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let threshold: u64 = row[col("volume_threshold")].parse().unwrap();
        let cv = cv_statistics(&recs, threshold).unwrap();
        assert_eq!(cv.n_active, row[col("n_active")].parse::<usize>().unwrap());
        assert!((cv.cv_prices - row[col("cv_prices")].parse::<f64>().unwrap()).abs() <= 1e-12);
        assert!((cv.cv_shares - row[col("cv_shares")].parse::<f64>().unwrap()).abs() <= 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 2);
}

#[test]
fn rejects_bad_input() {
    let cases = [
        ("", 1),
        ("seller_id,price,volume\n", 1),
        ("id,price,volume\na,1,1\n", 1),
        ("seller_id,price,volume\na,1,1\nb,-2,1\n", 3),
        ("seller_id,price,volume\na,1,1\nb,x,1\n", 3),
        ("seller_id,price,volume\na,1,1.5\n", 2),
        ("seller_id,price,volume\n,1,1\n", 2),
    ];
    for (input, want) in cases {
        match ingest(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{input:?}"),
            other => panic!("{input:?} gave {other:?}"),
        }
    }
}

#[test]
fn too_few_active_sellers() {
    let recs = ingest("seller_id,price,volume\na,10,50\nb,20,3\n".as_bytes()).unwrap();
    assert!(matches!(cv_statistics(&recs, 10), Err(Error::Precondition(_))));
    assert!(matches!(calibrate(&recs, &CalibrationOptions::default()), Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(recs in records()) {
        let back = ingest(to_csv(&recs).as_bytes()).unwrap();
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn qualities_recover_prices(recs in records()) {
        let opts = CalibrationOptions { volume_threshold: 0, rho: Some(1e-4), t: 1.0, ..Default::default() };
        prop_assume!(recs.iter().filter(|r| r.monthly_volume > 0).count() >= 2);
        let m = calibrate(&recs, &opts).unwrap();
        let g = m.params.gamma;
        for (alpha, price) in m.quality.alphas().iter().zip(&m.mean_prices) {
            let back = (alpha / m.quality_constant).powf(1.0 / g);
            prop_assert!((back - price).abs() <= 1e-9 * price);
        }
        prop_assert!(m.mean_prices.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn filtering_is_idempotent(recs in records(), threshold in 0u64..500) {
        let opts = CalibrationOptions { volume_threshold: threshold, rho: Some(1e-4), t: 1.0, ..Default::default() };
        let Ok(m) = calibrate(&recs, &opts) else { return Ok(()) };
        let kept = m.filtered_records(&recs);
        let again = calibrate(&kept, &opts).unwrap();
        prop_assert_eq!(&again.included_ids, &m.included_ids);
        prop_assert_eq!(&again.quality, &m.quality);
        prop_assert_eq!(again.excluded_mass, 0.0);
        prop_assert_eq!(again.filtered_records(&kept), kept);
    }

    #[test]
    fn cv_is_scale_free(recs in records(), c in 0.01f64..100.0, k in 1u64..50) {
        let Ok(base) = cv_statistics(&recs, 0) else { return Ok(()) };
        let scaled: Vec<SellerRecord> = recs
            .iter()
            .map(|r| SellerRecord {
                seller_id: r.seller_id.clone(),
                prices: r.prices.iter().map(|p| p * c).collect(),
                monthly_volume: r.monthly_volume * k,
            })
            .collect();
        let s = cv_statistics(&scaled, 0).unwrap();
        prop_assert_eq!(s.n_active, base.n_active);
        prop_assert!((s.cv_prices - base.cv_prices).abs() <= 1e-10 * base.cv_prices.max(1.0));
        prop_assert!((s.cv_shares - base.cv_shares).abs() <= 1e-10 * base.cv_shares.max(1.0));
    }
}

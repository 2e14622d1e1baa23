//! Reference-instance builders for the golden prompt layouts, shared by the
//! golden tests and the acceptance suite.

use chrono::NaiveDate;
use nextloc::ingest::Visit;
use nextloc::instances::PredictionInstance;
use nextloc::prompts::{Exemplar, StayRow};

pub fn golden(name: &str) -> String {
    let path = format!(
        "{}/tests/fixtures/goldens/{name}",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(path).unwrap()
}

pub fn at(day: u32, hour: u32, minute: u32, id: &str) -> Visit {
    // April 2012: the 1st is a Sunday.
    Visit::new(
        NaiveDate::from_ymd_opt(2012, 4, day)
            .unwrap()
            .and_hms_opt(hour, minute, 0)
            .unwrap(),
        id,
    )
}

pub fn assert_chronological(visits: &[Visit]) {
    for w in visits.windows(2) {
        assert!(w[0].local_time <= w[1].local_time, "visits out of order");
    }
}

pub fn stay(hour_label: &str, day: &str, id: &str) -> StayRow {
    StayRow {
        hour_label: hour_label.into(),
        day_of_week: day.into(),
        location_id: id.into(),
    }
}

/// The worked example's fifteen historical stays (Sunday 6 PM .. Monday 5 PM).
pub fn reference_historical() -> Vec<Visit> {
    let v = vec![
        at(1, 18, 0, "42ec1480f964a5209e261fe3"),  // 6 PM Sunday
        at(2, 13, 0, "4d48864b551db1f722e9a330"),  // 1 PM Monday
        at(4, 13, 0, "4d48864b551db1f722e9a330"),  // 1 PM Wednesday
        at(4, 16, 0, "4cdf0650ffcf37041bd71682"),  // 4 PM Wednesday
        at(4, 17, 0, "4b705cd2f964a52052152de3"),  // 5 PM Wednesday
        at(4, 17, 10, "4d531225f1b4a09039dee672"), // 5 PM Wednesday
        at(4, 17, 20, "4ada106af964a520ed1d21e3"), // 5 PM Wednesday
        at(4, 18, 0, "4c176109f693b7139f0f5f54"),  // 6 PM Wednesday
        at(6, 2, 0, "4c498ca56f1420a1c019c155"),   // 2 AM Friday
        at(7, 1, 0, "4b7c698af964a520bc912fe3"),   // 1 AM Saturday
        at(7, 14, 0, "41102700f964a520d60b1fe3"),  // 2 PM Saturday
        at(7, 20, 0, "4be5dfe9910020a13ea2d314"),  // 8 PM Saturday
        at(7, 20, 10, "4a43c0aef964a520c6a61fe3"), // 8 PM Saturday
        at(8, 16, 0, "41102700f964a520d60b1fe3"),  // 4 PM Sunday
        at(9, 17, 0, "4ba7ef65f964a520fabf39e3"),  // 5 PM Monday
    ];
    assert_chronological(&v);
    v
}

pub fn reference_contextual() -> Vec<Visit> {
    let v = vec![
        at(11, 17, 0, "4531059cf964a520683b1fe3"), // 5 PM Wednesday
        at(11, 18, 0, "50a430bfe4b0f010d751e3a5"), // 6 PM Wednesday
        at(11, 19, 0, "4a871b30f964a5209a0220e3"), // 7 PM Wednesday
        at(12, 15, 0, "4b8f50d9f964a520365133e3"), // 3 PM Thursday
        at(12, 23, 0, "4e7bb781887742fc66380d56"), // 11 PM Thursday
        at(13, 19, 0, "4b7ecc2cf964a520420030e3"), // 7 PM Friday
    ];
    assert_chronological(&v);
    v
}

pub fn reference_instance() -> PredictionInstance {
    PredictionInstance {
        instance_id: "golden0".into(),
        user_id: "u_golden".into(),
        historical: reference_historical(),
        contextual: reference_contextual(),
        target: at(13, 21, 0, "ffffffffffffffffffffffff"),
    }
}

/// One-shot worked example and its query instance.
pub fn one_shot_parts() -> (Exemplar, PredictionInstance) {
    let fmt = nextloc::ingest::TimeFormat::HourOnly;
    let exemplar = Exemplar {
        historical: reference_historical()
            .iter()
            .map(|v| StayRow::from_visit(v, fmt))
            .collect(),
        contextual: reference_contextual()
            .iter()
            .map(|v| StayRow::from_visit(v, fmt))
            .collect(),
        prediction: vec![
            "4b80bafef964a520ee8830e3".into(),
            "4b558306f964a5201be627e3".into(),
            "4b7e3467f964a520fde52fe3".into(),
            "4c182e2c6a21c9b6f2bbc897".into(),
            "4dff7dd51495f702193690bf".into(),
        ],
        reason: Some(
            "User has repeatedly visited places in the evening and at night, especially on weekdays. The most recent context stays are also at nighttime."
                .into(),
        ),
    };
    let query = PredictionInstance {
        instance_id: "golden1".into(),
        user_id: "u_golden".into(),
        historical: reference_historical(),
        contextual: vec![
            at(20, 3, 0, "44166f04f964a52003311fe3"),  // 3 AM Friday
            at(20, 23, 0, "4b55f1eef964a52002f827e3"), // 11 PM Friday
            at(21, 19, 0, "4c537ec4fd2ea5936ffe8328"), // 7 PM Saturday
        ],
        target: at(21, 21, 0, "ffffffffffffffffffffffff"),
    };
    (exemplar, query)
}

/// Few-shot worked examples and their query instance.
pub fn few_shot_parts() -> (Vec<Exemplar>, PredictionInstance) {
    let example1 = Exemplar {
        historical: vec![
            stay("10:49 PM", "Sunday", "4b80bafef964a520ee8830e3"),
            stay("03:16 AM", "Monday", "4c182e2c6a21c9b6f2bbc897"),
            stay("08:57 AM", "Monday", "4b8ef710f964a5209c4133e3"),
            stay("02:46 PM", "Monday", "4b80bafef964a520ee8830e3"),
            stay("03:13 PM", "Wednesday", "4b80bafef964a520ee8830e3"),
            stay("02:10 AM", "Thursday", "4bb365f54019a593e6d937b8"),
            stay("11:29 PM", "Sunday", "4b80bafef964a520ee8830e3"),
            stay("12:32 AM", "Monday", "4bb365f54019a593e6d937b8"),
            stay("12:59 AM", "Monday", "4b7e3467f964a520fde52fe3"),
            stay("02:22 PM", "Thursday", "4b5d54a2f964a5200e5a29e3"),
            stay("01:40 PM", "Friday", "4cdbe66e22bd721e4302f847"),
            stay("02:03 PM", "Saturday", "4e13debbe4cd473c968b5afc"),
            stay("12:17 AM", "Friday", "4bf5d425004ed13aa27541a0"),
            stay("11:04 AM", "Friday", "4c2c8fd677cfe21e2029b6f1"),
            stay("08:58 AM", "Thursday", "4b7e3467f964a520fde52fe3"),
            stay("07:26 AM", "Friday", "4dff7dd51495f702193690bf"),
            stay("07:32 AM", "Friday", "4bb365f54019a593e6d937b8"),
            stay("07:33 AM", "Friday", "4b7e3467f964a520fde52fe3"),
            stay("12:19 AM", "Tuesday", "4bf5d425004ed13aa27541a0"),
        ],
        contextual: vec![
            stay("12:09 AM", "Wednesday", "4dff7dd51495f702193690bf"),
            stay("10:44 AM", "Wednesday", "4b8da54ef964a5202e0633e3"),
            stay("11:04 AM", "Wednesday", "4dff7dd51495f702193690bf"),
            stay("11:12 AM", "Wednesday", "4b7e3467f964a520fde52fe3"),
            stay("02:24 PM", "Wednesday", "4b22e836f964a520185024e3"),
        ],
        prediction: vec![
            "4b80bafef964a520ee8830e3".into(),
            "4b558306f964a5201be627e3".into(),
            "4b7e3467f964a520fde52fe3".into(),
            "4c182e2c6a21c9b6f2bbc897".into(),
            "4dff7dd51495f702193690bf".into(),
        ],
        reason: None,
    };
    let example2 = Exemplar {
        historical: vec![
            stay("03:47 AM", "Monday", "4b7e3467f964a520fde52fe3"),
            stay("10:45 PM", "Tuesday", "4b80bafef964a520ee8830e3"),
            stay("11:39 PM", "Tuesday", "4dff7dd51495f702193690bf"),
            stay("11:45 PM", "Tuesday", "4bb365f54019a593e6d937b8"),
            stay("03:01 PM", "Thursday", "4b22e836f964a520185024e3"),
        ],
        contextual: example1.contextual.clone(),
        prediction: vec![
            "4b6ba709f964a52059142ce3".into(),
            "4c182e2c6a21c9b6f2bbc897".into(),
            "4b8ef710f964a5209c4133e3".into(),
            "4bea89ca415e20a1af16e5bb".into(),
            "4dff7dd51495f702193690bf".into(),
        ],
        reason: None,
    };

    let historical = vec![
        at(3, 9, 0, "50e8ed15e4b07ff4593e1bf4"),   // 9 AM Tuesday
        at(4, 10, 0, "4dd2d4bc81dcfc9dcdc2124f"),  // 10 AM Wednesday
        at(4, 10, 5, "4df8089a1f6e448ec28e6fe0"),  // 10 AM Wednesday
        at(4, 12, 0, "4d22782eb69c6dcbf7be8295"),  // 12 PM Wednesday
        at(4, 12, 5, "4da61b1ea86ecc5168c8828c"),  // 12 PM Wednesday
        at(4, 14, 0, "4bf804ee8d30d13a1feaff17"),  // 2 PM Wednesday
        at(5, 8, 0, "4bae676cf964a520c6ad3be3"),   // 8 AM Thursday
        at(5, 9, 0, "4eba3331722edc0eaf1762bb"),   // 9 AM Thursday
        at(6, 4, 0, "4bd1af9b41b9ef3bca54fce5"),   // 4 AM Friday
        at(6, 5, 0, "4b5d272ef964a520c15429e3"),   // 5 AM Friday
        at(9, 7, 0, "4c7f04be7fd4ef3b108394a1"),   // 7 AM Monday
        at(10, 0, 0, "4d9fa1d483f0b1f7ea8c9ec7"),  // 0 AM Tuesday
        at(10, 1, 0, "4c4b52ce9e6dbe9acbd4e10b"),  // 1 AM Tuesday
        at(10, 8, 0, "4c7f04be7fd4ef3b108394a1"),  // 8 AM Tuesday
        at(10, 12, 0, "4b06d110f964a520c3f022e3"), // 12 PM Tuesday
    ];
    let contextual = vec![
        at(14, 19, 0, "510c9f9de4b0ec5cc005fc87"), // 7 PM Saturday
        at(14, 20, 0, "4bae0e67f964a520487f3be3"), // 8 PM Saturday
        at(14, 20, 5, "4be9e20e6295c9b61acb8508"), // 8 PM Saturday
        at(14, 21, 0, "4d1fdddf5c4ca1cdb4a49c3d"), // 9 PM Saturday
        at(15, 0, 0, "4cc744c0a32bb1f75758a7a8"),  // 0 AM Sunday
        at(15, 0, 5, "4abd30e1f964a520ed8820e3"),  // 0 AM Sunday
        at(15, 2, 0, "4b60b7e5f964a520b7f529e3"),  // 2 AM Sunday
        at(15, 4, 0, "4bea19226295c9b6b61e8608"),  // 4 AM Sunday
        at(15, 5, 0, "4cc184d3f82ebfb75c417091"),  // 5 AM Sunday
        at(16, 18, 0, "4eba3331722edc0eaf1762bb"), // 6 PM Monday
        at(17, 2, 0, "4c65b90018b676b084a0ad0e"),  // 2 AM Tuesday
        at(17, 4, 0, "501b374ce4b06c31c5001715"),  // 4 AM Tuesday
        at(17, 6, 0, "4cfeed7c202e224bc2a7ab2a"),  // 6 AM Tuesday
        at(17, 8, 0, "4c7f04be7fd4ef3b108394a1"),  // 8 AM Tuesday
        at(17, 9, 0, "4b0737c3f964a520e4f922e3"),  // 9 AM Tuesday
        at(17, 10, 0, "4dd3fa5e6365c27b0dbeec7d"), // 10 AM Tuesday
        at(17, 11, 0, "4a257482f964a520557e1fe3"), // 11 AM Tuesday
        at(17, 12, 0, "4cd78a30a42b236ad848fb08"), // 12 PM Tuesday
    ];
    assert_chronological(&historical);
    assert_chronological(&contextual);
    let query = PredictionInstance {
        instance_id: "golden2".into(),
        user_id: "u_golden".into(),
        historical,
        contextual,
        target: at(17, 14, 0, "ffffffffffffffffffffffff"),
    };
    (vec![example1, example2], query)
}

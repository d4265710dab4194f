//! Decibel and power-unit conversions.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_887_9).abs() < 1e-15);
        assert!((linear_to_db(1e-10) + 100.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn db_round_trip(x in 1e-30f64..1e30) {
            let back = db_to_linear(linear_to_db(x));
            prop_assert!(((back - x) / x).abs() < 1e-12);
        }
    }
}

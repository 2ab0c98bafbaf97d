use std::collections::{BTreeMap, HashMap};

use aeroflow_core::store::EventKind;
use aeroflow_core::timeutil::{day_start, weekday_index, BUCKETS_PER_DAY, BUCKET_SECONDS};
use aeroflow_core::traffic_gen::{generate_day, Scenario, WEATHER_PER_DAY};
use chrono::{Days, NaiveDate};

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Over 30 days, the entries generated in each (sector, hour of day) stay
/// within 3σ of the Poisson expectation implied by the demand profile and
/// the generated wind.
#[test]
fn hourly_counts_follow_the_demand_profile() {
    let scn = Scenario::reference();
    let mut observed: BTreeMap<(String, usize), f64> = BTreeMap::new();
    let mut expected: BTreeMap<(String, usize), f64> = BTreeMap::new();
    let first = date(2024, 1, 8);
    for offset in 0..30 {
        let d = first.checked_add_days(Days::new(offset)).unwrap();
        let day = generate_day(&scn, d).unwrap();
        let t0 = day_start(d);
        let dow = weekday_index(d) as usize;
        for e in day.events.iter().filter(|e| e.kind == EventKind::SectorEntry) {
            let hour = ((e.timestamp - t0) / 3600) as usize;
            *observed.entry((e.resource_id.clone(), hour)).or_default() += 1.0;
        }
        for s in &scn.sectors {
            let wx: Vec<_> = day.weather.iter().filter(|o| o.obs.station == s.station).collect();
            for b in 0..BUCKETS_PER_DAY {
                let bucket = t0 + b as i64 * BUCKET_SECONDS;
                let wind = wx
                    .iter()
                    .rev()
                    .find(|o| o.ts <= bucket)
                    .map_or(0.0, |o| f64::from(o.obs.wind_speed_kt));
                let hour = (bucket - t0) as f64 / 3600.0;
                let lambda = s.rate(hour, dow, wind) * BUCKET_SECONDS as f64 / 3600.0;
                *expected.entry((s.id.clone(), b / 4)).or_default() += lambda;
            }
        }
    }
    // 480 cells are tested at once, so a few may legitimately fall past 3σ
    // (about 1.3 expected); bound that count and the extreme instead.
    let zs: Vec<(String, usize, f64)> = expected
        .iter()
        .map(|((s, h), e)| {
            let obs = observed.get(&(s.clone(), *h)).copied().unwrap_or(0.0);
            (s.clone(), *h, (obs - e) / e.sqrt().max(1.0))
        })
        .collect();
    let n = zs.len() as f64;
    let mean = zs.iter().map(|z| z.2).sum::<f64>() / n;
    let var = zs.iter().map(|z| (z.2 - mean).powi(2)).sum::<f64>() / n;
    let beyond = zs.iter().filter(|z| z.2.abs() > 3.0).count();
    assert!(mean.abs() < 0.2, "mean z {mean}");
    assert!((0.8..1.2).contains(&var), "z variance {var}");
    assert!(beyond as f64 <= 0.01 * n, "{beyond} of {n} cells beyond 3σ");
    for (s, h, z) in &zs {
        assert!(z.abs() < 4.5, "{s} hour {h}: z = {z:.2}");
    }
}

#[test]
fn output_is_deterministic_and_well_formed() {
    let scn = Scenario::reference();
    let d = date(2024, 6, 3);
    let a = generate_day(&scn, d).unwrap();
    let b = generate_day(&scn, d).unwrap();
    let lines = |day: &aeroflow_core::traffic_gen::GeneratedDay| -> Vec<String> {
        day.events.iter().map(|e| e.to_json_line()).collect()
    };
    assert_eq!(lines(&a), lines(&b));
    assert_eq!(a.weather.len(), WEATHER_PER_DAY * scn.stations.len());
    assert!(a.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));

    // Every exit follows an entry of the same flight in the same sector.
    let mut inside: HashMap<(&str, &str), bool> = HashMap::new();
    for e in &a.events {
        let k = (e.flight_id.as_str(), e.resource_id.as_str());
        match e.kind {
            EventKind::SectorEntry => assert!(!inside.insert(k, true).unwrap_or(false)),
            EventKind::SectorExit => assert_eq!(inside.insert(k, false), Some(true), "{e:?}"),
            _ => {}
        }
    }
    let ambiguous = a.events.iter().filter(|e| e.ambiguity_group.is_some()).count();
    assert!(ambiguous > 0);
    for e in a.events.iter().filter(|e| e.ambiguity_group.is_some()) {
        let n = e.candidate_count();
        assert!((2..=3).contains(&n));
        assert_eq!(e.timestamp_in(0), e.timestamp);
    }
}

#[test]
fn no_ambiguity_and_idle_sectors() {
    let mut scn = Scenario::reference();
    scn.ambiguity_rate = 0.0;
    scn.sectors[0].base_rate = 0.0;
    let idle = scn.sectors[0].id.clone();
    let day = generate_day(&scn, date(2024, 6, 4)).unwrap();
    assert!(day.events.iter().all(|e| e.ambiguity_group.is_none()));
    assert!(day.events.iter().all(|e| e.resource_id != idle));
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut scn = Scenario::reference();
    scn.ambiguity_rate = 0.2;
    assert!(generate_day(&scn, date(2024, 6, 4)).is_err());
    let mut scn = Scenario::reference();
    scn.sectors[1].base_rate = -1.0;
    assert!(generate_day(&scn, date(2024, 6, 4)).is_err());
    let scn = Scenario::from_toml(&Scenario::reference().to_toml()).unwrap();
    assert_eq!(scn, Scenario::reference());
}

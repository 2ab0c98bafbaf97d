use aeroflow_core::metar::{emit_canonical, parse_metar, parse_metar_bytes, WindDirection};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    raw: String,
    station: String,
    day: u8,
    hour: u8,
    minute: u8,
    wind_speed_kt: u16,
    wind_variable: bool,
    wind_dir_deg: u16,
    gust_kt: Option<u16>,
    visibility_m: u32,
    temp_c: i16,
    dewpoint_c: i16,
    pressure_hpa: f64,
}

fn golden() -> Vec<Golden> {
    serde_json::from_str(include_str!("data/metar_golden.json")).unwrap()
}

#[test]
fn golden_corpus_decodes() {
    let cases = golden();
    let lines: Vec<&str> = include_str!("data/metar_golden.txt").lines().collect();
    assert_eq!(cases.len(), lines.len());
    for (g, line) in cases.iter().zip(lines) {
        assert_eq!(g.raw, line);
        let o = parse_metar(&g.raw).unwrap_or_else(|e| panic!("{}: {e}", g.raw));
        assert_eq!(o.station, g.station, "{}", g.raw);
        assert_eq!((o.time.day, o.time.hour, o.time.minute), (g.day, g.hour, g.minute), "{}", g.raw);
        assert_eq!(o.wind_speed_kt, g.wind_speed_kt, "{}", g.raw);
        assert_eq!(o.is_variable_wind(), g.wind_variable, "{}", g.raw);
        assert_eq!(o.wind_dir_deg(), g.wind_dir_deg, "{}", g.raw);
        assert_eq!(o.gust_kt, g.gust_kt, "{}", g.raw);
        assert_eq!(o.visibility_m, g.visibility_m, "{}", g.raw);
        assert_eq!((o.temp_c, o.dewpoint_c), (g.temp_c, g.dewpoint_c), "{}", g.raw);
        // Expected pressures are recorded to six decimals.
        assert!((o.pressure_hpa() - g.pressure_hpa).abs() < 5e-7, "{}", g.raw);
    }
}

#[test]
fn golden_corpus_round_trips() {
    for g in golden() {
        let o = parse_metar(&g.raw).unwrap();
        let again = parse_metar(&emit_canonical(&o)).unwrap();
        assert_eq!(o, again, "{}", g.raw);
    }
}

fn arb_report() -> impl Strategy<Value = String> {
    (
        "[A-Z]{4}",
        1u8..=31,
        0u8..24,
        0u8..60,
        prop_oneof![Just(None), (0u16..36).prop_map(|d| Some(d * 10))],
        0u16..60,
        proptest::option::of(0u16..30),
        prop_oneof![Just("9999".to_string()), (0u32..10).prop_map(|v| format!("{:04}", v * 500)), Just("CAVOK".to_string())],
        -30i16..40,
        0i16..20,
        prop_oneof![(950u16..1050).prop_map(|q| format!("Q{q:04}")), (2800u16..3100).prop_map(|a| format!("A{a}"))],
    )
        .prop_map(|(st, d, h, m, dir, spd, gust, vis, t, spread, p)| {
            let dir = dir.map_or("VRB".to_string(), |d| format!("{d:03}"));
            let gust = gust.map_or(String::new(), |g| format!("G{:02}", spd + g + 1));
            let tf = |v: i16| if v < 0 { format!("M{:02}", -v) } else { format!("{v:02}") };
            format!("{st} {d:02}{h:02}{m:02}Z {dir}{spd:02}{gust}KT {vis} {}/{} {p}", tf(t), tf(t - spread))
        })
}

proptest! {
    #[test]
    fn canonical_round_trip(raw in arb_report()) {
        let o = parse_metar(&raw).unwrap();
        let text = emit_canonical(&o);
        let again = parse_metar(&text).unwrap();
        prop_assert_eq!(&o, &again);
        prop_assert_eq!(emit_canonical(&again), text);
        if let WindDirection::Degrees(d) = o.wind_dir {
            prop_assert!(d < 360);
        }
    }
}

/// Random bytes, truncations and token shuffles must never panic.
#[test]
fn fuzz_never_panics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let seeds: Vec<Vec<u8>> = golden().into_iter().map(|g| g.raw.into_bytes()).collect();
    let mut accepted = 0usize;
    for i in 0..100_000 {
        let input: Vec<u8> = match i % 4 {
            0 => (0..rng.random_range(0..80)).map(|_| rng.random()).collect(),
            1 => {
                let s = &seeds[rng.random_range(0..seeds.len())];
                s[..rng.random_range(0..=s.len())].to_vec()
            }
            2 => {
                let mut s = seeds[rng.random_range(0..seeds.len())].clone();
                for _ in 0..rng.random_range(1..4) {
                    let j = rng.random_range(0..s.len());
                    s[j] = b" 0123456789/MKTQAGVRBZSC"[rng.random_range(0..24)];
                }
                s
            }
            _ => {
                let s = String::from_utf8(seeds[rng.random_range(0..seeds.len())].clone()).unwrap();
                let mut toks: Vec<&str> = s.split(' ').collect();
                let a = rng.random_range(0..toks.len());
                let b = rng.random_range(0..toks.len());
                toks.swap(a, b);
                toks.join(" ").into_bytes()
            }
        };
        if let Ok(o) = parse_metar_bytes(&input) {
            accepted += 1;
            assert!(o.humidity_pct.is_finite());
            parse_metar(&emit_canonical(&o)).expect("accepted report re-parses");
        }
    }
    assert!(accepted > 0);
}

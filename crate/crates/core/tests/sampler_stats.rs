//! Distributional checks on the seeded sampler.

use std::collections::BTreeSet;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use rla_core::math::{Layout, S4Params, TwoContestConfig};
use rla_core::model::CardStyleTable;
use rla_core::sampler::{assign_numbers, with_replacement_draws, Seed};
use rla_core::studio;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{}:{}:{}", i / 10_000 + 1, (i / 100) % 100 + 1, i % 100 + 1)).collect()
}

#[test]
fn numbers_are_uniform() {
    let cards = ids(10_000);
    let a = assign_numbers(&Seed::new("271828").unwrap(), cards.iter().map(String::as_str)).unwrap();
    let mut u: Vec<f64> = cards.iter().map(|c| a.number(c).unwrap()).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov-Smirnov statistic
    assert!(d < 1.628 / n.sqrt(), "D = {d}");
}

#[test]
fn numbers_ignore_card_order() {
    let cards = ids(1000);
    let a = assign_numbers(&Seed::new("1618").unwrap(), cards.iter().map(String::as_str)).unwrap();
    let n = cards.len() as f64;
    // Spearman: card index against rank of its number
    let d2: f64 = cards
        .iter()
        .enumerate()
        .map(|(i, c)| (i as f64 - a.rank(c).unwrap() as f64).powi(2))
        .sum();
    let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    assert!(rho.abs() < 0.1, "rho = {rho}");
}

#[test]
fn draws_with_replacement_are_uniform() {
    let cards = ids(10);
    let mut csd = CardStyleTable::default();
    for c in &cards {
        csd.insert(c.clone(), BTreeSet::from(["K".to_string()]));
    }
    let draws = with_replacement_draws(&Seed::new("314159").unwrap(), &csd, "K", 100_000);
    assert_eq!(draws.len(), 100_000);
    let expected = 10_000.0;
    let stat: f64 = cards
        .iter()
        .map(|c| {
            let o = draws.iter().filter(|d| *d == c).count() as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn same_card_union_averages_122() {
    let config = TwoContestConfig::new(0.1, 0.1, 0.1, 1, Layout::SameCard);
    let s = studio::simulate_retrievals(&config, &S4Params::default(), 1000, 1000, 1).unwrap();
    assert!((s.mean_with - 122.0).abs() <= 0.03 * 122.0, "{}", s.mean_with);
    assert_eq!(s.mean_without, 721.0);
}

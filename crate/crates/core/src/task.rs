//! Synthetic digit-addition tasks: `n` "images" per query, supervised only
//! by the sum of their digits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Label, QueryRecord};
use crate::npp::NppInput;

pub const NUM_DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputKind {
    /// One-hot digit plus Gaussian noise with the given standard deviation.
    Features { noise: f64 },
    /// The digit itself as a discrete bin, replaced by a random digit with
    /// the given probability.
    Bins { flip: f64 },
}

impl Default for InputKind {
    fn default() -> Self {
        InputKind::Features { noise: 0.3 }
    }
}

/// `sumN` program over instances `i1..in`.
pub fn sum_program(n: usize) -> String {
    assert!(n >= 1, "need at least one digit");
    let mut s = String::new();
    for i in 1..=n {
        s.push_str(&format!("img(i{i}).\n"));
    }
    s.push_str("npp(digit(X),[0,1,2,3,4,5,6,7,8,9]) :- img(X).\n");
    let vars: Vec<String> = (1..=n).map(|i| format!("I{i}")).collect();
    let mut body: Vec<String> = vars.iter().enumerate().map(|(i, v)| format!("digit(+{v},-N{})", i + 1)).collect();
    body.extend(vars.windows(2).map(|w| format!("{} < {}", w[0], w[1])));
    let total: Vec<String> = (1..=n).map(|i| format!("N{i}")).collect();
    body.push(format!("S = {}", total.join(" + ")));
    s.push_str(&format!("sum{n}({},S) :- {}.\n", vars.join(","), body.join(", ")));
    s
}

pub fn sum_query(n: usize, total: i64) -> String {
    let inst: Vec<String> = (1..=n).map(|i| format!("i{i}")).collect();
    format!(":- not sum{n}({},{total}).", inst.join(","))
}

/// `count` labelled queries, deterministic in `seed`.
pub fn gen_sum(n: usize, count: usize, seed: u64, input: InputKind) -> Vec<QueryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|q| {
            let digits: Vec<usize> = (0..n).map(|_| rng.gen_range(0..NUM_DIGITS)).collect();
            let mut data = BTreeMap::new();
            let mut labels = BTreeMap::new();
            for (i, &d) in digits.iter().enumerate() {
                let key = format!("i{}", i + 1);
                data.insert(key.clone(), encode(d, input, &mut rng));
                labels.insert(key, Label::Int(d as i64));
            }
            QueryRecord {
                id: format!("q{q}"),
                constraint: sum_query(n, digits.iter().sum::<usize>() as i64),
                data,
                labels: Some(labels),
            }
        })
        .collect()
}

fn encode(digit: usize, input: InputKind, rng: &mut ChaCha8Rng) -> NppInput {
    match input {
        InputKind::Features { noise } => {
            let normal = Normal::new(0.0, noise).expect("noise must be finite and non-negative");
            NppInput::Features(
                (0..NUM_DIGITS)
                    .map(|j| (j == digit) as u8 as f64 + normal.sample(rng))
                    .collect(),
            )
        }
        InputKind::Bins { flip } => {
            let bin = if rng.gen_bool(flip) { rng.gen_range(0..NUM_DIGITS) } else { digit };
            NppInput::Bin(bin)
        }
    }
}

/// Shuffled split: the first `train_frac` of the records train, the rest test.
pub fn split(mut records: Vec<QueryRecord>, train_frac: f64, seed: u64) -> (Vec<QueryRecord>, Vec<QueryRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let cut = ((records.len() as f64) * train_frac).round() as usize;
    let test = records.split_off(cut.min(records.len()));
    (records, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::ground;
    use crate::lang::parse_program;

    #[test]
    fn program_shape() {
        let p = sum_program(2);
        assert!(p.contains("sum2(I1,I2,S) :- digit(+I1,-N1), digit(+I2,-N2), I1 < I2, S = N1 + N2."));
        let gp = ground(&parse_program(&p).unwrap(), None).unwrap();
        assert_eq!(gp.rules().len(), 100);
        assert_eq!(gp.num_choice_atoms(), 20);
        assert_eq!(sum_query(3, 12), ":- not sum3(i1,i2,i3,12).");
    }

    #[test]
    fn deterministic_and_consistent() {
        let a = gen_sum(2, 50, 7, InputKind::default());
        assert_eq!(a, gen_sum(2, 50, 7, InputKind::default()));
        assert_ne!(a, gen_sum(2, 50, 8, InputKind::default()));
        for r in &a {
            let l = r.labels.as_ref().unwrap();
            let s: i64 = l.values().map(|v| if let Label::Int(i) = v { *i } else { 0 }).sum();
            assert_eq!(r.constraint, sum_query(2, s));
        }
        let (train, test) = split(a, 0.8, 1);
        assert_eq!((train.len(), test.len()), (40, 10));
    }

    #[test]
    fn top_sum_needs_all_nines() {
        let nines = Label::Int(9);
        for r in gen_sum(3, 5000, 2, InputKind::Bins { flip: 0.0 }) {
            let all_nine = r.labels.as_ref().unwrap().values().all(|l| *l == nines);
            assert_eq!(r.constraint == sum_query(3, 27), all_nine);
        }
    }
}

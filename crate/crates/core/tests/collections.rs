mod common;

use std::collections::{BTreeMap, HashMap};

use bspmr::collections::{append, block_range, sum, DistHashMap, DistVector};
use bspmr::transport::{run_in_process, Backend};
use bspmr::{partition, Engine, EngineConfig, WorkerId};
use common::{mix, run_cluster};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scatter_gather_round_trip(data in prop::collection::vec(any::<u64>(), 0..200), size in 1usize..5) {
        let out = run_in_process(size, |mut h| {
            let input = if h.rank() == 0 { data.clone() } else { Vec::new() };
            let v = DistVector::scatter(&mut h, WorkerId(0), input).unwrap();
            assert_eq!(v.global_len(), data.len());
            assert_eq!(v.local().len(), block_range(data.len(), size, h.rank()).len());
            v.gather(&mut h, WorkerId(0)).unwrap()
        }).unwrap();
        prop_assert_eq!(&out[0], &data);
    }

    #[test]
    fn block_sizes_differ_by_at_most_one(len in 0usize..1000, size in 1usize..17) {
        let sizes: Vec<usize> = (0..size).map(|w| block_range(len, size, w).len()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), len);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn from_local_assigns_global_offsets() {
    let out = run_in_process(3, |mut h| {
        let local: Vec<u32> = (0..h.rank() as u32 + 1).collect();
        let v = DistVector::from_local(&mut h, local).unwrap();
        (v.offset(), v.global_len())
    })
    .unwrap();
    assert_eq!(out, vec![(0, 6), (1, 6), (3, 6)]);
}

#[test]
fn random_emits_match_sequential_fold() {
    for backend in [Backend::InProcess, Backend::Tcp] {
        for size in [1, 3] {
            let out = run_cluster(backend, size, |mut h| {
                let mut m = DistHashMap::new(&h, Some(sum::<u64>()));
                for i in 0..2000u64 {
                    let x = mix(i * 31 + h.rank() as u64);
                    m.emit(x % 97, x % 1000);
                }
                m.sync(&mut h).unwrap();
                assert!(m.is_placed());
                m.gather(&mut h, WorkerId(0)).unwrap()
            });
            let mut expected = BTreeMap::new();
            for r in 0..size as u64 {
                for i in 0..2000u64 {
                    let x = mix(i * 31 + r);
                    *expected.entry(x % 97).or_insert(0) += x % 1000;
                }
            }
            assert_eq!(out[0], expected, "{backend:?} size {size}");
        }
    }
}

#[test]
fn append_combiner_conserves_values() {
    let out = run_in_process(4, |mut h| {
        let mut m = DistHashMap::new(&h, Some(append::<u32>()));
        for i in 0..500u32 {
            m.emit(format!("k{}", i % 13), vec![h.rank() as u32 * 1000 + i]);
        }
        m.sync(&mut h).unwrap();
        m.gather(&mut h, WorkerId(0)).unwrap()
    })
    .unwrap();
    let mut all: Vec<u32> = out[0].values().flatten().copied().collect();
    all.sort_unstable();
    let mut expected: Vec<u32> = (0..4).flat_map(|r| (0..500).map(move |i| r * 1000 + i)).collect();
    expected.sort_unstable();
    assert_eq!(all, expected);
}

#[test]
fn get_agrees_with_gather() {
    let out = run_in_process(3, |mut h| {
        let mut m = DistHashMap::new(&h, Some(sum::<u64>()));
        if h.rank() == 1 {
            for k in 0..50u32 {
                m.emit(k, u64::from(k) * 2);
            }
        }
        m.sync(&mut h).unwrap();
        let all = m.gather(&mut h, WorkerId(2)).unwrap();
        let mut looked = BTreeMap::new();
        for k in 0..60u32 {
            if let Some(v) = m.get(&mut h, &k).unwrap() {
                looked.insert(k, v);
            }
        }
        (all, looked, m.global_len(&mut h).unwrap())
    })
    .unwrap();
    assert_eq!(out[2].0, out[0].1);
    assert!(out.iter().all(|o| o.1 == out[0].1 && o.2 == 50));
}

#[test]
fn rebalance_moves_misplaced_keys() {
    let out = run_in_process(4, |mut h| {
        // every worker starts out holding keys it does not own
        let shard: HashMap<String, u64> = (0..40).map(|i| (format!("w{}-{i}", h.rank()), i as u64)).collect();
        let mut m = DistHashMap::from_shard(&h, shard, Some(sum::<u64>()));
        let moved = m.rebalance(&mut h).unwrap();
        let placed = m.shard().keys().all(|k| partition(k, 4) == WorkerId(h.rank()));
        (moved, placed, m.gather(&mut h, WorkerId(0)).unwrap())
    })
    .unwrap();
    assert!(out.iter().all(|o| o.1));
    assert!(out.iter().map(|o| o.0).sum::<usize>() > 0);
    let expected: BTreeMap<String, u64> =
        (0..4).flat_map(|r| (0..40).map(move |i| (format!("w{r}-{i}"), i as u64))).collect();
    assert_eq!(out[0].2, expected);
}

#[test]
fn grouped_map_is_sorted_and_owned() {
    let out = run_in_process(3, |mut h| {
        let src = DistVector::from_fn(&h, 300, |i| i as u64);
        let mut e = Engine::new(EngineConfig::with_threads(2)).unwrap();
        let g = e
            .map_group(&mut h, &src, |x: &u64, out| {
                out.emit(format!("g{}", mix(*x) % 17), *x);
                Ok(())
            })
            .unwrap();
        let owned = g.groups().iter().all(|(k, _)| partition(k, 3) == WorkerId(h.rank()));
        (g.is_strictly_sorted(), owned, g.local_pair_count())
    })
    .unwrap();
    assert!(out.iter().all(|o| o.0 && o.1));
    assert_eq!(out.iter().map(|o| o.2).sum::<usize>(), 300);
}

//! Stable natural merge sort used to group shuffled pairs by key.

use std::cmp::Ordering;

/// Sorts `items` stably: elements comparing equal keep their input order.
///
/// The input is cut into maximal non-decreasing runs, which are merged
/// pairwise, left to right, until one run remains. Shuffle input arrives as
/// a concatenation of per-source buckets, so runs are often long.
pub fn merge_sort_by<T, F>(items: Vec<T>, mut cmp: F) -> Vec<T>
where
    F: FnMut(&T, &T) -> Ordering,
{
    let mut runs: Vec<Vec<T>> = Vec::new();
    let mut run: Vec<T> = Vec::new();
    for item in items {
        if let Some(last) = run.last() {
            if cmp(&item, last) == Ordering::Less {
                runs.push(std::mem::take(&mut run));
            }
        }
        run.push(item);
    }
    if !run.is_empty() {
        runs.push(run);
    }

    while runs.len() > 1 {
        let mut next = Vec::with_capacity(runs.len().div_ceil(2));
        let mut it = runs.into_iter();
        while let Some(left) = it.next() {
            match it.next() {
                Some(right) => next.push(merge(left, right, &mut cmp)),
                None => next.push(left),
            }
        }
        runs = next;
    }
    runs.pop().unwrap_or_default()
}

fn merge<T, F>(left: Vec<T>, right: Vec<T>, cmp: &mut F) -> Vec<T>
where
    F: FnMut(&T, &T) -> Ordering,
{
    let mut out = Vec::with_capacity(left.len() + right.len());
    let mut left = left.into_iter().peekable();
    let mut right = right.into_iter().peekable();
    loop {
        let take_right = match (left.peek(), right.peek()) {
            // ties go left, which is what makes the sort stable
            (Some(l), Some(r)) => cmp(r, l) == Ordering::Less,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (None, None) => break,
        };
        let next = if take_right { right.next() } else { left.next() };
        out.push(next.expect("peeked"));
    }
    out
}

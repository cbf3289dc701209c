//! Parallel Lloyd's K-means.
//!
//! Each iteration the driver (rank 0) broadcasts the current centroids, the
//! mapper assigns every point to its nearest centroid (squared Euclidean
//! distance, ties to the lowest index) and emits a one-point partial sum,
//! partial sums are reduced per centroid, and the driver divides sum by
//! count. A centroid whose cluster came back empty keeps its position.
//! Iteration stops once no centroid moved farther than `tol`, or after
//! `max_iters` iterations.

use std::sync::Arc;

use crate::codec::{self, Codec};
use crate::collections::{Combiner, DistVector};
use crate::engine::{Emitter, Engine, JobMode, TaskError};
use crate::error::{Error, Result};
use crate::partition::WorkerId;
use crate::transport::ClusterHandle;

pub type Point = Vec<f64>;

const DRIVER: WorkerId = WorkerId(0);

/// Partial sum of the points assigned to one centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidAccumulator {
    pub sum: Vec<f64>,
    pub count: u64,
}

impl CentroidAccumulator {
    pub fn zero(dim: usize) -> Self {
        CentroidAccumulator { sum: vec![0.0; dim], count: 0 }
    }

    pub fn from_point(p: &[f64]) -> Self {
        CentroidAccumulator { sum: p.to_vec(), count: 1 }
    }

    pub fn merge(&mut self, other: &CentroidAccumulator) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<Point> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

impl Codec for CentroidAccumulator {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.count.encode_to(out);
        self.sum.encode_to(out);
    }

    fn decode_exact(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::MalformedFrame("accumulator shorter than its count".into()));
        }
        Ok(CentroidAccumulator { count: u64::decode_exact(&bytes[..8])?, sum: Vec::decode_exact(&bytes[8..])? })
    }
}

pub fn accumulator_combiner() -> Combiner<CentroidAccumulator> {
    Arc::new(|acc: &mut CentroidAccumulator, other: CentroidAccumulator| acc.merge(&other))
}

#[derive(Debug, Clone, PartialEq)]
pub enum KMeansInit {
    /// The points with serial keys `0..k`.
    FirstK,
    Explicit(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub init: KMeansInit,
    pub max_iters: usize,
    pub tol: f64,
    pub mode: JobMode,
}

impl KMeansParams {
    pub fn new(k: usize) -> Self {
        KMeansParams { k, init: KMeansInit::FirstK, max_iters: 100, tol: 1e-6, mode: JobMode::Eager }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansState {
    pub centroids: Vec<Point>,
    pub iteration: usize,
    /// Largest centroid displacement in the last iteration; infinite before the first.
    pub shift: f64,
}

impl KMeansState {
    fn encode(&self, done: bool) -> Vec<u8> {
        let mut out = vec![u8::from(done)];
        (self.iteration as u64).encode_to(&mut out);
        self.shift.encode_to(&mut out);
        self.centroids.encode_to(&mut out);
        out
    }

    fn decode(bytes: &[u8]) -> Result<(Self, bool)> {
        if bytes.len() < 17 {
            return Err(Error::MalformedFrame("k-means state too short".into()));
        }
        let state = KMeansState {
            iteration: u64::decode_exact(&bytes[1..9])? as usize,
            shift: f64::decode_exact(&bytes[9..17])?,
            centroids: Vec::decode_exact(&bytes[17..])?,
        };
        Ok((state, bytes[0] == 1))
    }
}

/// The state after every iteration; `trajectory[0]` is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub trajectory: Vec<KMeansState>,
}

impl KMeansRun {
    pub fn final_state(&self) -> &KMeansState {
        self.trajectory.last().expect("trajectory holds the initial state")
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
pub fn nearest(centroids: &[Point], p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn check_points(points: &[Point]) -> Result<Option<usize>> {
    let dim = points.first().map(Vec::len);
    for (i, p) in points.iter().enumerate() {
        if Some(p.len()) != dim {
            return Err(Error::Input(format!("point {i} has dimension {}, expected {}", p.len(), dim.unwrap_or(0))));
        }
        if let Some(c) = p.iter().find(|c| !c.is_finite()) {
            return Err(Error::Input(format!("point {i} has non-finite coordinate {c}")));
        }
    }
    if dim == Some(0) {
        return Err(Error::Input("points need at least one coordinate".into()));
    }
    Ok(dim)
}

/// Validates the point set collectively and returns the shared dimension.
fn validate(h: &mut ClusterHandle, points: &DistVector<Point>, params: &KMeansParams) -> Result<usize> {
    if params.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::Config(format!("tolerance {} must be non-negative", params.tol)));
    }
    if points.global_len() < params.k {
        return Err(Error::Config(format!("k = {} exceeds the {} available points", params.k, points.global_len())));
    }
    let local = check_points(points.local());
    let local = h.agree(local)?;
    let dims = h.all_gather((local.unwrap_or(0) as u64).to_le_bytes().to_vec())?;
    let dims: Vec<u64> = dims.iter().map(|b| u64::decode_exact(b)).collect::<Result<_>>()?;
    let mut present = dims.into_iter().filter(|&d| d > 0);
    let dim = present.next().expect("at least k >= 1 points exist") as usize;
    if present.any(|d| d as usize != dim) {
        return Err(Error::Input("workers hold points of different dimensions".into()));
    }
    if let KMeansInit::Explicit(init) = &params.init {
        if init.len() != params.k {
            return Err(Error::Config(format!("{} initial centroids for k = {}", init.len(), params.k)));
        }
        if init.iter().any(|c| c.len() != dim || c.iter().any(|x| !x.is_finite())) {
            return Err(Error::Input("initial centroids must be finite and match the point dimension".into()));
        }
    }
    Ok(dim)
}

fn initial_centroids(h: &mut ClusterHandle, points: &DistVector<Point>, params: &KMeansParams) -> Result<Vec<Point>> {
    match &params.init {
        KMeansInit::Explicit(c) => Ok(c.clone()),
        KMeansInit::FirstK => {
            let mine: Vec<Point> =
                points.iter_keyed().take_while(|(key, _)| *key < params.k).map(|(_, p)| p.clone()).collect();
            let mut bytes = Vec::new();
            codec::encode_seq(&mine, &mut bytes);
            let parts = h.gather(DRIVER, bytes)?;
            let mut first = Vec::new();
            for part in parts {
                first.extend(Vec::<Point>::decode_exact(&part)?);
            }
            let shared = h.broadcast(DRIVER, first.to_bytes())?;
            Vec::decode_exact(&shared)
        }
    }
}

/// Runs K-means to convergence; every worker returns the same trajectory.
pub fn kmeans(
    h: &mut ClusterHandle,
    engine: &mut Engine,
    points: &DistVector<Point>,
    params: &KMeansParams,
) -> Result<KMeansRun> {
    let dim = validate(h, points, params)?;
    let mut driver_state =
        KMeansState { centroids: initial_centroids(h, points, params)?, iteration: 0, shift: f64::INFINITY };
    let mut done = params.max_iters == 0;
    let mut trajectory = Vec::new();

    loop {
        let (state, finished) = KMeansState::decode(&h.broadcast(DRIVER, driver_state.encode(done))?)?;
        let centroids = state.centroids.clone();
        trajectory.push(state);
        if finished {
            break;
        }

        let assign = |p: &Point, out: &mut Emitter<'_, u32, CentroidAccumulator>| -> Result<(), TaskError> {
            out.emit(nearest(&centroids, p) as u32, CentroidAccumulator::from_point(p));
            Ok(())
        };
        let sums = match params.mode {
            JobMode::Eager => engine.map_reduce_eager(h, points, assign, accumulator_combiner())?,
            JobMode::Delayed => engine.map_reduce_delayed(h, points, assign, |_, partials| {
                let mut acc = CentroidAccumulator::zero(dim);
                for p in partials {
                    acc.merge(p);
                }
                Ok(acc)
            })?,
        };
        let sums = sums.gather(h, DRIVER)?;

        if h.rank() == DRIVER.0 {
            let previous = &driver_state.centroids;
            let next: Vec<Point> = (0..params.k)
                .map(|j| {
                    sums.get(&(j as u32)).and_then(CentroidAccumulator::mean).unwrap_or_else(|| previous[j].clone())
                })
                .collect();
            let shift = next.iter().zip(previous).map(|(a, b)| squared_distance(a, b).sqrt()).fold(0.0, f64::max);
            driver_state = KMeansState { centroids: next, iteration: driver_state.iteration + 1, shift };
            done = shift <= params.tol || driver_state.iteration >= params.max_iters;
        }
    }
    Ok(KMeansRun { trajectory })
}

/// Within-cluster sum of squares of `points` against `centroids`, summed in
/// rank order; every worker gets the same value.
pub fn wcss(h: &mut ClusterHandle, points: &DistVector<Point>, centroids: &[Point]) -> Result<f64> {
    let local: f64 = points.local().iter().map(|p| squared_distance(&centroids[nearest(centroids, p)], p)).sum();
    let parts = h.all_gather(local.to_bytes())?;
    parts.iter().map(|b| f64::decode_exact(b)).sum()
}

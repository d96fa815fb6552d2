//! Grid binning of pickup/dropoff records into an empirical chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{normalize_counts, EmpiricalChain};
use crate::dense::{DenseMatrix, ProbVector};
use crate::error::{Error, Result};

/// One trip, coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub pickup_lon: f64,
    pub pickup_lat: f64,
    pub dropoff_lon: f64,
    pub dropoff_lat: f64,
}

impl TripRecord {
    pub fn new(pickup_lon: f64, pickup_lat: f64, dropoff_lon: f64, dropoff_lat: f64) -> Result<Self> {
        let r = Self {
            pickup_lon,
            pickup_lat,
            dropoff_lon,
            dropoff_lat,
        };
        if [pickup_lon, pickup_lat, dropoff_lon, dropoff_lat]
            .iter()
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidInput("trip coordinates must be finite".into()));
        }
        Ok(r)
    }
}

/// Half-open longitude/latitude window `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BoundingBox {
    fn validate(&self) -> Result<()> {
        let ok = [self.lon_min, self.lon_max, self.lat_min, self.lat_max]
            .iter()
            .all(|c| c.is_finite())
            && self.lon_min < self.lon_max
            && self.lat_min < self.lat_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degenerate bounding box {self:?}")))
        }
    }

    fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon < self.lon_max && lat >= self.lat_min && lat < self.lat_max
    }
}

/// Grid coordinates of a retained state plus its cell-center location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: i64,
    pub y: i64,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedTrips {
    pub chain: EmpiricalChain,
    /// state index → cell
    pub cells: Vec<GridCell>,
    /// records that fell inside the bounding box
    pub records_used: usize,
}

/// Snaps trips to a `cell`-degree grid and builds the pickup→dropoff chain.
///
/// A coordinate on a cell boundary belongs to the cell with the larger index.
/// States are the grid cells seen as pickup or dropoff whose pickup frequency is
/// at least `min_freq`; dropoffs landing outside the retained set are moved to
/// the nearest retained cell (squared grid distance, lowest state index on ties).
pub fn bin_trip_records(
    records: &[TripRecord],
    cell: f64,
    bbox: BoundingBox,
    min_freq: f64,
) -> Result<BinnedTrips> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::InvalidInput(format!("cell size must be positive, got {cell}")));
    }
    bbox.validate()?;
    if !(0.0..1.0).contains(&min_freq) {
        return Err(Error::InvalidInput(format!("min_freq must lie in [0, 1), got {min_freq}")));
    }
    let snap = |lon: f64, lat: f64| -> (i64, i64) {
        (
            ((lon - bbox.lon_min) / cell).floor() as i64,
            ((lat - bbox.lat_min) / cell).floor() as i64,
        )
    };

    let inside: Vec<((i64, i64), (i64, i64))> = records
        .iter()
        .filter(|r| {
            bbox.contains(r.pickup_lon, r.pickup_lat) && bbox.contains(r.dropoff_lon, r.dropoff_lat)
        })
        .map(|r| (snap(r.pickup_lon, r.pickup_lat), snap(r.dropoff_lon, r.dropoff_lat)))
        .collect();
    if inside.is_empty() {
        return Err(Error::EmptyData("no trip records inside the bounding box".into()));
    }

    let mut pickups: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    for &(p, q) in &inside {
        *pickups.entry(p).or_default() += 1;
        seen.insert(p);
        seen.insert(q);
    }
    let total = inside.len() as f64;
    let retained: Vec<(i64, i64)> = seen
        .into_iter()
        .filter(|c| pickups.get(c).copied().unwrap_or(0) as f64 / total >= min_freq)
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyData(format!(
            "no grid cell reaches pickup frequency {min_freq}"
        )));
    }
    let index: BTreeMap<(i64, i64), usize> =
        retained.iter().enumerate().map(|(k, &c)| (c, k)).collect();

    let mut remap: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut nearest = |c: (i64, i64)| -> usize {
        if let Some(&k) = index.get(&c) {
            return k;
        }
        *remap.entry(c).or_insert_with(|| {
            let mut best = (i64::MAX, 0usize);
            for (k, r) in retained.iter().enumerate() {
                let dist = (r.0 - c.0).pow(2) + (r.1 - c.1).pow(2);
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            best.1
        })
    };

    let d = retained.len();
    let mut counts = DenseMatrix::zeros(d, d);
    let mut from = vec![0.0; d];
    for &(p, q) in &inside {
        let Some(&i) = index.get(&p) else { continue };
        let j = nearest(q);
        counts[(i, j)] += 1.0;
        from[i] += 1.0;
    }
    normalize_counts(&mut counts);
    let xi = ProbVector::from_weights(from)?;
    let chain = EmpiricalChain::new(counts, xi)?;
    let cells = retained
        .iter()
        .map(|&(x, y)| GridCell {
            x,
            y,
            lon: bbox.lon_min + (x as f64 + 0.5) * cell,
            lat: bbox.lat_min + (y as f64 + 0.5) * cell,
        })
        .collect();
    Ok(BinnedTrips {
        chain,
        cells,
        records_used: inside.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOX: BoundingBox = BoundingBox {
        lon_min: 0.0,
        lon_max: 1.0,
        lat_min: 0.0,
        lat_max: 1.0,
    };

    fn trip(a: (f64, f64), b: (f64, f64)) -> TripRecord {
        TripRecord::new(a.0, a.1, b.0, b.1).unwrap()
    }

    #[test]
    fn all_trips_a_to_b() {
        let a = (0.05, 0.05);
        let b = (0.55, 0.05);
        let recs = vec![trip(a, b); 4];
        let out = bin_trip_records(&recs, 0.1, BOX, 0.0).unwrap();
        assert_eq!(out.cells.len(), 2);
        assert_eq!(out.chain.p_hat().row(0), &[0.0, 1.0]);
        // B never departs: uniform fallback row, zero weight
        assert_eq!(out.chain.p_hat().row(1), &[0.5, 0.5]);
        assert_eq!(out.chain.xi_hat().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn outside_records_dropped() {
        let recs = vec![trip((1.5, 0.5), (0.5, 0.5))];
        assert!(matches!(
            bin_trip_records(&recs, 0.1, BOX, 0.0),
            Err(Error::EmptyData(_))
        ));
        let recs = vec![trip((1.5, 0.5), (0.5, 0.5)), trip((0.5, 0.5), (0.5, 0.5))];
        let out = bin_trip_records(&recs, 0.1, BOX, 0.0).unwrap();
        assert_eq!(out.records_used, 1);
    }

    #[test]
    fn boundary_goes_to_larger_index() {
        let recs = vec![trip((0.25, 0.0), (0.25, 0.0))];
        let out = bin_trip_records(&recs, 0.25, BOX, 0.0).unwrap();
        assert_eq!((out.cells[0].x, out.cells[0].y), (1, 0));
    }

    #[test]
    fn three_cell_hand_counted() {
        // cells A=(0,0), B=(1,0), C=(2,0) at 0.1° spacing
        let a = (0.05, 0.05);
        let b = (0.15, 0.05);
        let c = (0.25, 0.05);
        let mut recs = Vec::new();
        recs.extend(vec![trip(a, b); 3]);
        recs.extend(vec![trip(a, c); 1]);
        recs.extend(vec![trip(b, a); 2]);
        recs.extend(vec![trip(b, b); 2]);
        recs.extend(vec![trip(c, a); 2]);
        let out = bin_trip_records(&recs, 0.1, BOX, 0.0).unwrap();
        let p = out.chain.p_hat();
        assert_eq!(p.row(0), &[0.0, 0.75, 0.25]);
        assert_eq!(p.row(1), &[0.5, 0.5, 0.0]);
        assert_eq!(p.row(2), &[1.0, 0.0, 0.0]);
        assert_eq!(out.chain.xi_hat().as_slice(), &[0.4, 0.4, 0.2]);
    }

    #[test]
    fn low_frequency_dropoffs_are_remapped() {
        let a = (0.05, 0.05);
        let b = (0.15, 0.05);
        let far = (0.95, 0.95);
        let mut recs = vec![trip(a, b); 10];
        recs.push(trip(b, a));
        recs.push(trip(b, (0.25, 0.05))); // rare dropoff cell next to b
        recs.push(trip(far, a));
        let out = bin_trip_records(&recs, 0.1, BOX, 0.1).unwrap();
        // far has pickup frequency 1/13 < 0.1 and is discarded with its trip
        assert_eq!(out.cells.len(), 2);
        assert_eq!(out.chain.p_hat().row(1), &[0.5, 0.5]);
        for s in out.chain.p_hat().row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

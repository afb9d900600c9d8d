use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::error::{invalid, Result};
use crate::matrix::{squared_euclidean, Matrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
    Single,
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "ward",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgglomerativeConfig {
    pub k: usize,
    pub linkage: Linkage,
    /// The condensed distance matrix needs `n(n−1)/2` floats; refuse larger inputs.
    pub max_rows: usize,
}

impl Default for AgglomerativeConfig {
    fn default() -> Self {
        Self {
            k: 3,
            linkage: Linkage::Ward,
            max_rows: 20_000,
        }
    }
}

/// One dendrogram step. Clusters are named by their smallest member row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Linkage height (Euclidean units; Ward uses the usual merge-cost distance).
    pub distance: f64,
    /// Size of the merged cluster.
    pub size: usize,
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

fn nearest(d: &Condensed, active: &[bool], i: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, _) in active.iter().enumerate().filter(|&(j, &a)| a && j != i) {
        let v = d.get(i, j);
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

/// Bottom-up clustering with Lance–Williams updates, cut at `k` clusters.
///
/// Equal linkage distances resolve to the lexicographically smallest pair of
/// cluster names; the merged cluster keeps the smaller name.
pub fn agglomerative(x: &Matrix, config: &AgglomerativeConfig) -> Result<ClusterAssignment> {
    let n = x.rows();
    let k = config.k;
    if k == 0 || k > n {
        return Err(invalid(format!("agglomerative k = {k} must be in 1..={n}")));
    }
    if n > config.max_rows {
        return Err(invalid(format!(
            "agglomerative clustering on {n} rows exceeds max_rows = {}",
            config.max_rows
        )));
    }
    if !x.all_finite() {
        return Err(invalid("agglomerative input contains missing values"));
    }
    let ward = config.linkage == Linkage::Ward;
    let mut d = Condensed {
        n,
        d: Vec::with_capacity(n * n.saturating_sub(1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let s = squared_euclidean(x.row(i), x.row(j));
            d.d.push(if ward { s } else { s.sqrt() });
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut nn: Vec<(usize, f64)> = (0..n).map(|i| nearest(&d, &active, i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut labels = if k == n { Some(compact(&owner)) } else { None };

    for step in 0..n.saturating_sub(1) {
        let mut a = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            // first i with the minimal nearest distance gives the smallest pair
            if active[i] && nn[i].0 != usize::MAX && nn[i].1 < best {
                best = nn[i].1;
                a = i;
            }
        }
        let b = nn[a].0;
        let (a, b) = (a.min(b), a.max(b));
        let dab = d.get(a, b);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let (dac, dbc) = (d.get(a, c), d.get(b, c));
            let nc = size[c] as f64;
            let v = match config.linkage {
                Linkage::Ward => ((na + nc) * dac + (nb + nc) * dbc - nc * dab) / (na + nb + nc),
                Linkage::Average => (na * dac + nb * dbc) / (na + nb),
                Linkage::Complete => dac.max(dbc),
                Linkage::Single => dac.min(dbc),
            };
            d.set(a, c, v);
        }
        active[b] = false;
        size[a] += size[b];
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        merges.push(Merge {
            left: a,
            right: b,
            // Ward heights are kept squared internally
            distance: if ward { dab.max(0.0).sqrt() } else { dab },
            size: size[a],
        });
        for c in 0..n {
            if !active[c] || c == a {
                continue;
            }
            if nn[c].0 == a || nn[c].0 == b {
                nn[c] = nearest(&d, &active, c);
            } else {
                let v = d.get(a, c);
                if v < nn[c].1 || (v == nn[c].1 && a < nn[c].0) {
                    nn[c] = (a, v);
                }
            }
        }
        nn[a] = nearest(&d, &active, a);
        if step + 1 == n - k {
            labels = Some(compact(&owner));
        }
    }
    Ok(ClusterAssignment {
        labels: labels.expect("cut level reached"),
        k,
        inertia: None,
        centroids: None,
        dendrogram: Some(merges),
    })
}

/// Renumbers cluster names 0.. in order of their smallest member.
fn compact(owner: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    owner
        .iter()
        .map(|o| {
            let next = map.len();
            *map.entry(*o).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Linkage; 4] = [Linkage::Ward, Linkage::Average, Linkage::Complete, Linkage::Single];

    fn run(x: &Matrix, k: usize, linkage: Linkage) -> Vec<usize> {
        agglomerative(
            x,
            &AgglomerativeConfig {
                k,
                linkage,
                ..Default::default()
            },
        )
        .unwrap()
        .labels
    }

    #[test]
    fn two_far_pairs() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [50.0, 50.0], [50.0, 51.0]]).unwrap();
        for l in ALL {
            assert_eq!(run(&x, 2, l), vec![0, 0, 1, 1]);
            assert_eq!(run(&x, 1, l), vec![0; 4]);
            assert_eq!(run(&x, 4, l), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn equidistant_chain_single() {
        // every gap ties; the smallest pair always merges first, so the
        // chain grows from the left and the last point is split off
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        assert_eq!(run(&x, 2, Linkage::Single), vec![0, 0, 0, 0, 0, 1]);
        let a = agglomerative(
            &x,
            &AgglomerativeConfig {
                k: 1,
                linkage: Linkage::Single,
                ..Default::default()
            },
        )
        .unwrap();
        let pairs: Vec<(usize, usize)> = a.dendrogram.unwrap().iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
    }

    #[test]
    fn uneven_chain_single() {
        // gaps 1, 3, 1, 2, 1: the widest gap is between 1 and 4
        let x = Matrix::from_rows(&[[0.0], [1.0], [4.0], [5.0], [7.0], [8.0]]).unwrap();
        assert_eq!(run(&x, 2, Linkage::Single), vec![0, 0, 1, 1, 1, 1]);
        assert_eq!(run(&x, 3, Linkage::Single), vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn ward_heights() {
        // two points at distance 2: Ward height equals the Euclidean distance
        let x = Matrix::from_rows(&[[0.0], [2.0], [10.0]]).unwrap();
        let a = agglomerative(
            &x,
            &AgglomerativeConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let m = a.dendrogram.unwrap();
        assert!((m[0].distance - 2.0).abs() < 1e-12);
        // merging {0,2} (centroid 1) with {10}: sqrt(2 * 2*1/3 * 81)
        assert!((m[1].distance - (2.0 * 2.0 / 3.0 * 81.0f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_k_and_large_input() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(agglomerative(
            &x,
            &AgglomerativeConfig {
                k: 3,
                ..Default::default()
            }
        )
        .is_err());
        assert!(agglomerative(
            &x,
            &AgglomerativeConfig {
                k: 1,
                max_rows: 1,
                ..Default::default()
            }
        )
        .is_err());
    }
}

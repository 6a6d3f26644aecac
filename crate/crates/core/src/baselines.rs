//! Convoy and closed-swarm miners over time-aligned trajectory snapshots.
//!
//! Both patterns run on trajectories resampled to a uniform lattice: a
//! convoy is a group of at least `m` objects density-connected within
//! distance `e` for at least `k` consecutive snapshots, while a closed
//! swarm allows the `k` snapshots to be non-consecutive and is maximal in
//! both its object set and its timestamp set.
//!
//! Snapshot clustering is independent per timestamp; the convoy candidate
//! scan and the swarm search run single-threaded over the precomputed
//! snapshot clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cluster::{dbscan, Metric};
use crate::geo::{interpolate_uniform, GeoError, Timestamp, Trajectory};

/// Positions of every object present at one lattice timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: Timestamp,
    pub positions: BTreeMap<String, (f64, f64)>,
}

/// Objects density-connected through `span` consecutive snapshots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Convoy {
    pub objects: Vec<String>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

/// Objects co-clustered at `timestamps`, possibly non-consecutive; closed
/// in both directions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Swarm {
    pub objects: Vec<String>,
    pub timestamps: Vec<Timestamp>,
}

/// Interpolate every trajectory to the step lattice and bucket positions
/// by timestamp. The lattice is anchored at each trajectory's own first
/// timestamp, so input data should share a common phase (the synthetic
/// generator emits starts on the lattice); one snapshot is emitted for
/// every grid point between the global extremes, empty or not.
pub fn build_snapshots(trajectories: &[Trajectory], step: Timestamp) -> Result<Vec<Snapshot>, GeoError> {
    let mut by_t: BTreeMap<Timestamp, BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    for tr in trajectories {
        let resampled = interpolate_uniform(tr, step)?;
        for p in &resampled.points {
            by_t.entry(p.t).or_default().insert(tr.id.clone(), (p.x, p.y));
        }
    }
    let Some((&t_min, _)) = by_t.iter().next() else {
        return Ok(Vec::new());
    };
    let (&t_max, _) = by_t.iter().next_back().unwrap();
    let mut out = Vec::new();
    let mut t = t_min;
    while t <= t_max {
        out.push(Snapshot { t, positions: by_t.remove(&t).unwrap_or_default() });
        t += step;
    }
    Ok(out)
}

/// Object clusters of one snapshot: DBSCAN with `eps = e`, `min_pts = m`
/// over the positions. Returns sorted member-id lists in cluster-id order.
pub fn snapshot_clusters(snapshot: &Snapshot, e: f64, m: usize) -> Vec<Vec<String>> {
    assert!(e > 0.0, "distance threshold must be positive");
    assert!(m >= 1, "minimum group size must be at least 1");
    let ids: Vec<&String> = snapshot.positions.keys().collect();
    let points: Vec<Vec<f64>> =
        snapshot.positions.values().map(|&(x, y)| vec![x, y]).collect();
    let labels = dbscan(&points, e, m, Metric::Euclidean);
    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            clusters.entry(*c).or_default().push(ids[i].clone());
        }
    }
    clusters.into_values().collect()
}

/// Object-index clusters per snapshot, against a fixed id table.
fn clusters_by_index(
    snapshots: &[Snapshot],
    ids: &[String],
    e: f64,
    m: usize,
) -> Vec<Vec<BTreeSet<usize>>> {
    let index_of: BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    snapshots
        .iter()
        .map(|snap| {
            snapshot_clusters(snap, e, m)
                .into_iter()
                .map(|members| members.iter().map(|id| index_of[id.as_str()]).collect())
                .collect()
        })
        .collect()
}

fn sorted_ids(ids: &[String]) -> Vec<String> {
    let mut v = ids.to_vec();
    v.sort();
    v
}

fn all_object_ids(snapshots: &[Snapshot]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for s in snapshots {
        set.extend(s.positions.keys().cloned());
    }
    set.into_iter().collect()
}

/// Candidate-intersection convoy mining.
///
/// At every snapshot each carried candidate is intersected with each
/// current cluster; candidates that stop extending and lasted at least `k`
/// snapshots are emitted. Candidates dominated by a superset candidate
/// with an equal-or-earlier start are pruned, which keeps the carried set
/// small and cannot lose maximal convoys (the dominating candidate covers
/// them until death). The final list keeps only maximal convoys: no
/// emitted convoy is a subset of another over a containing span.
pub fn mine_convoys(snapshots: &[Snapshot], k: usize, m: usize, e: f64) -> Vec<Convoy> {
    assert!(k >= 1, "k must be at least 1");
    let ids = all_object_ids(snapshots);
    let per_snapshot = clusters_by_index(snapshots, &ids, e, m);

    #[derive(Clone)]
    struct Candidate {
        objects: BTreeSet<usize>,
        start: usize,
    }

    let mut alive: Vec<Candidate> = Vec::new();
    let mut emitted: Vec<(BTreeSet<usize>, usize, usize)> = Vec::new();

    for (i, clusters) in per_snapshot.iter().enumerate() {
        let mut next: Vec<Candidate> = Vec::new();
        for cluster in clusters {
            for cand in &alive {
                let inter: BTreeSet<usize> =
                    cand.objects.intersection(cluster).copied().collect();
                if inter.len() >= m {
                    next.push(Candidate { objects: inter, start: cand.start });
                }
            }
            next.push(Candidate { objects: cluster.clone(), start: i });
        }
        // Deduplicate and prune dominated candidates.
        next.sort_by(|a, b| a.start.cmp(&b.start).then(b.objects.len().cmp(&a.objects.len())));
        let mut kept: Vec<Candidate> = Vec::new();
        for cand in next {
            let dominated = kept.iter().any(|other| {
                other.start <= cand.start && other.objects.is_superset(&cand.objects)
            });
            if !dominated {
                kept.push(cand);
            }
        }
        // Emit candidates that did not survive into this snapshot.
        for cand in &alive {
            let survived = kept
                .iter()
                .any(|c| c.start <= cand.start && c.objects.is_superset(&cand.objects));
            if !survived && i - cand.start >= k {
                emitted.push((cand.objects.clone(), cand.start, i - 1));
            }
        }
        alive = kept;
    }
    let last = per_snapshot.len();
    for cand in &alive {
        if last - cand.start >= k {
            emitted.push((cand.objects.clone(), cand.start, last - 1));
        }
    }

    finalize_convoys(emitted, snapshots, &ids)
}

fn finalize_convoys(
    mut emitted: Vec<(BTreeSet<usize>, usize, usize)>,
    snapshots: &[Snapshot],
    ids: &[String],
) -> Vec<Convoy> {
    emitted.sort();
    emitted.dedup();
    let maximal: Vec<bool> = emitted
        .iter()
        .map(|(objs, s, en)| {
            !emitted.iter().any(|(o2, s2, e2)| {
                (o2, s2, e2) != (objs, s, en)
                    && o2.is_superset(objs)
                    && s2 <= s
                    && e2 >= en
            })
        })
        .collect();
    let mut out: Vec<Convoy> = emitted
        .into_iter()
        .zip(maximal)
        .filter_map(|((objs, s, en), keep)| {
            keep.then(|| Convoy {
                objects: sorted_ids(&objs.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>()),
                t_start: snapshots[s].t,
                t_end: snapshots[en].t,
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Closed-swarm mining by depth-first growth over the object lattice.
///
/// The timestamp support of an object set shrinks monotonically as the set
/// grows, so any candidate whose support falls below `k` is pruned with
/// its entire subtree. A set is emitted when no further object keeps the
/// support unchanged (object-closed); its support is maximal by
/// construction (timestamp-closed).
pub fn mine_swarms(snapshots: &[Snapshot], k: usize, m: usize, e: f64) -> Vec<Swarm> {
    assert!(k >= 1, "k must be at least 1");
    let ids = all_object_ids(snapshots);
    let per_snapshot = clusters_by_index(snapshots, &ids, e, m);
    let n = ids.len();

    // cluster_of[t][obj] = cluster index at snapshot t, if clustered.
    let cluster_of: Vec<BTreeMap<usize, usize>> = per_snapshot
        .iter()
        .map(|clusters| {
            let mut map = BTreeMap::new();
            for (ci, members) in clusters.iter().enumerate() {
                for &o in members {
                    map.insert(o, ci);
                }
            }
            map
        })
        .collect();

    let support_of = |objects: &BTreeSet<usize>, within: &[usize]| -> Vec<usize> {
        within
            .iter()
            .copied()
            .filter(|&t| {
                let mut iter = objects.iter();
                let Some(&first) = iter.next() else { return false };
                let Some(&c) = cluster_of[t].get(&first) else { return false };
                iter.all(|o| cluster_of[t].get(o) == Some(&c))
            })
            .collect()
    };

    let all_t: Vec<usize> = (0..per_snapshot.len()).collect();
    let mut results: Vec<Swarm> = Vec::new();

    fn dfs(
        objects: &mut BTreeSet<usize>,
        support: &[usize],
        n: usize,
        k: usize,
        m: usize,
        ids: &[String],
        snapshots: &[Snapshot],
        support_of: &dyn Fn(&BTreeSet<usize>, &[usize]) -> Vec<usize>,
        results: &mut Vec<Swarm>,
    ) {
        if support.len() < k {
            return;
        }
        let max_obj = *objects.iter().next_back().unwrap();
        if objects.len() >= m {
            // Object-closedness over every absent object.
            let mut closed = true;
            for o in 0..n {
                if objects.contains(&o) {
                    continue;
                }
                objects.insert(o);
                let sup = support_of(objects, support);
                objects.remove(&o);
                // Anti-monotone by construction; an equal-size support
                // means an extension with the same timestamps exists.
                debug_assert!(sup.len() <= support.len());
                if sup.len() == support.len() {
                    closed = false;
                    break;
                }
            }
            if closed {
                results.push(Swarm {
                    objects: objects.iter().map(|&i| ids[i].clone()).collect(),
                    timestamps: support.iter().map(|&t| snapshots[t].t).collect(),
                });
            }
        }
        for o in max_obj + 1..n {
            objects.insert(o);
            let sup = support_of(objects, support);
            dfs(objects, &sup, n, k, m, ids, snapshots, support_of, results);
            objects.remove(&o);
        }
    }

    for start in 0..n {
        let mut objects = BTreeSet::from([start]);
        let sup = support_of(&objects, &all_t);
        dfs(&mut objects, &sup, n, k, m, &ids, snapshots, &support_of, &mut results);
    }
    results.sort();
    results
}

/// Pattern summary for comparison tables: emitted pattern count plus the
/// objects that appear in none of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompanionReport {
    pub n_clusters: usize,
    pub n_single_trajectories: usize,
}

pub fn companion_report(patterns: &[Vec<String>], all_ids: &[String]) -> CompanionReport {
    let covered: BTreeSet<&str> =
        patterns.iter().flatten().map(String::as_str).collect();
    CompanionReport {
        n_clusters: patterns.len(),
        n_single_trajectories: all_ids.iter().filter(|id| !covered.contains(id.as_str())).count(),
    }
}

/// Post-hoc verifier: the convoy's objects are jointly inside one cluster
/// at every covered snapshot.
pub fn convoy_holds(snapshots: &[Snapshot], convoy: &Convoy, e: f64, m: usize) -> bool {
    let span: Vec<&Snapshot> = snapshots
        .iter()
        .filter(|s| s.t >= convoy.t_start && s.t <= convoy.t_end)
        .collect();
    if span.is_empty() {
        return false;
    }
    span.iter().all(|snap| {
        snapshot_clusters(snap, e, m).iter().any(|cluster| {
            convoy.objects.iter().all(|o| cluster.contains(o))
        })
    })
}

/// Post-hoc verifier: no object extends the swarm without losing
/// timestamps, and no timestamp extends its support.
pub fn swarm_is_closed(snapshots: &[Snapshot], swarm: &Swarm, e: f64, m: usize) -> bool {
    let ids = all_object_ids(snapshots);
    let co_clustered = |objects: &[&String], snap: &Snapshot| -> bool {
        snapshot_clusters(snap, e, m)
            .iter()
            .any(|cluster| objects.iter().all(|o| cluster.contains(o)))
    };
    let members: Vec<&String> = swarm.objects.iter().collect();
    // Timestamp closure: the recorded support is exactly the set of
    // snapshots where the members co-cluster.
    let support: Vec<Timestamp> = snapshots
        .iter()
        .filter(|s| co_clustered(&members, s))
        .map(|s| s.t)
        .collect();
    if support != swarm.timestamps {
        return false;
    }
    // Object closure.
    for extra in ids.iter().filter(|id| !swarm.objects.contains(id)) {
        let mut extended = members.clone();
        extended.push(extra);
        let extended_support: Vec<Timestamp> = snapshots
            .iter()
            .filter(|s| co_clustered(&extended, s))
            .map(|s| s.t)
            .collect();
        if extended_support == swarm.timestamps {
            return false;
        }
    }
    true
}

/// `pattern_id,kind,member_ids,ts_from,ts_to_or_count` CSV; members joined
/// with `;`.
pub fn write_patterns_csv(
    path: &Path,
    convoys: &[Convoy],
    swarms: &[Swarm],
) -> Result<(), GeoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "pattern_id,kind,member_ids,ts_from,ts_to_or_count")?;
    let mut id = 0;
    for c in convoys {
        writeln!(w, "{id},convoy,{},{},{}", c.objects.join(";"), c.t_start, c.t_end)?;
        id += 1;
    }
    for s in swarms {
        writeln!(
            w,
            "{id},swarm,{},{},{}",
            s.objects.join(";"),
            s.timestamps.first().copied().unwrap_or_default(),
            s.timestamps.len()
        )?;
        id += 1;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::RawPoint;

    /// Build snapshots directly from per-timestamp position tables.
    fn snaps(rows: &[(Timestamp, &[(&str, f64, f64)])]) -> Vec<Snapshot> {
        rows.iter()
            .map(|&(t, objs)| Snapshot {
                t,
                positions: objs
                    .iter()
                    .map(|&(id, x, y)| (id.to_string(), (x, y)))
                    .collect(),
            })
            .collect()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn snapshot_clustering_matches_distance_semantics() {
        let s = snaps(&[(0, &[("a", 0.0, 0.0), ("b", 1.0, 0.0)])]);
        assert_eq!(snapshot_clusters(&s[0], 3.0, 2), vec![names(&["a", "b"])]);
        let far = snaps(&[(0, &[("a", 0.0, 0.0), ("b", 10.0, 0.0)])]);
        assert!(snapshot_clusters(&far[0], 3.0, 2).is_empty());
    }

    #[test]
    fn snapshot_clustering_matches_connectivity_oracle() {
        // Five objects: a chain a-b-c within reach plus an isolated pair.
        let s = snaps(&[(
            0,
            &[
                ("a", 0.0, 0.0),
                ("b", 2.0, 0.0),
                ("c", 4.0, 0.0),
                ("d", 50.0, 0.0),
                ("e", 51.0, 0.0),
            ],
        )]);
        let got = snapshot_clusters(&s[0], 2.5, 2);
        // Brute-force density connectivity at eps = 2.5, m = 2: every one of
        // a, b, c has a neighbor within eps so all are core; the chain is one
        // component. d-e likewise.
        assert_eq!(got, vec![names(&["a", "b", "c"]), names(&["d", "e"])]);
    }

    fn lockstep(n_snapshots: usize) -> Vec<Snapshot> {
        (0..n_snapshots)
            .map(|i| Snapshot {
                t: (i as Timestamp) * 10,
                positions: [
                    ("a".to_string(), (i as f64, 0.0)),
                    ("b".to_string(), (i as f64 + 1.0, 0.0)),
                    ("z".to_string(), (i as f64, 500.0)),
                ]
                .into_iter()
                .collect(),
            })
            .collect()
    }

    #[test]
    fn lockstep_pair_yields_exactly_one_convoy() {
        let s = lockstep(20);
        let convoys = mine_convoys(&s, 18, 2, 3.0);
        assert_eq!(convoys.len(), 1);
        assert_eq!(convoys[0].objects, names(&["a", "b"]));
        assert_eq!((convoys[0].t_start, convoys[0].t_end), (0, 190));
        assert!(convoy_holds(&s, &convoys[0], 3.0, 2));
    }

    #[test]
    fn distant_objects_yield_no_convoys() {
        let s = snaps(&[
            (0, &[("a", 0.0, 0.0), ("b", 100.0, 0.0)]),
            (10, &[("a", 0.0, 0.0), ("b", 100.0, 0.0)]),
        ]);
        assert!(mine_convoys(&s, 2, 2, 3.0).is_empty());
    }

    #[test]
    fn span_below_k_yields_no_convoy() {
        let s = lockstep(17);
        assert!(mine_convoys(&s, 18, 2, 3.0).is_empty());
    }

    #[test]
    fn scattered_support_is_a_swarm_but_not_a_convoy() {
        // Objects together at 18 non-consecutive snapshots out of 36.
        let mut rows = Vec::new();
        for i in 0..36 {
            let t = (i as Timestamp) * 10;
            if i % 2 == 0 {
                rows.push(Snapshot {
                    t,
                    positions: [
                        ("a".to_string(), (0.0, 0.0)),
                        ("b".to_string(), (1.0, 0.0)),
                    ]
                    .into_iter()
                    .collect(),
                });
            } else {
                rows.push(Snapshot {
                    t,
                    positions: [
                        ("a".to_string(), (0.0, 0.0)),
                        ("b".to_string(), (200.0, 0.0)),
                    ]
                    .into_iter()
                    .collect(),
                });
            }
        }
        let swarms = mine_swarms(&rows, 18, 2, 3.0);
        assert_eq!(swarms.len(), 1);
        assert_eq!(swarms[0].objects, names(&["a", "b"]));
        assert_eq!(swarms[0].timestamps.len(), 18);
        assert!(swarm_is_closed(&rows, &swarms[0], 3.0, 2));
        assert!(mine_convoys(&rows, 18, 2, 3.0).is_empty());
    }

    #[test]
    fn always_together_triple_is_one_closed_swarm() {
        let rows: Vec<Snapshot> = (0..5)
            .map(|i| Snapshot {
                t: i * 10,
                positions: [
                    ("a".to_string(), (0.0, 0.0)),
                    ("b".to_string(), (1.0, 0.0)),
                    ("c".to_string(), (0.5, 0.5)),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        let swarms = mine_swarms(&rows, 3, 2, 3.0);
        assert_eq!(swarms.len(), 1, "subsets share the support and are not closed: {swarms:?}");
        assert_eq!(swarms[0].objects, names(&["a", "b", "c"]));
    }

    /// Exhaustive closed-swarm enumeration over all object subsets.
    fn swarm_oracle(snapshots: &[Snapshot], k: usize, m: usize, e: f64) -> Vec<Swarm> {
        let ids = all_object_ids(snapshots);
        let n = ids.len();
        let clusters: Vec<Vec<Vec<String>>> =
            snapshots.iter().map(|s| snapshot_clusters(s, e, m)).collect();
        let support = |mask: u32| -> Vec<usize> {
            (0..snapshots.len())
                .filter(|&t| {
                    clusters[t].iter().any(|c| {
                        (0..n).all(|o| mask & (1 << o) == 0 || c.contains(&ids[o]))
                    })
                })
                .collect()
        };
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) {
            if (mask.count_ones() as usize) < m {
                continue;
            }
            let sup = support(mask);
            if sup.len() < k {
                continue;
            }
            let closed = (0..n).all(|o| {
                mask & (1 << o) != 0 || support(mask | (1 << o)).len() < sup.len()
            });
            if closed {
                out.push(Swarm {
                    objects: (0..n)
                        .filter(|o| mask & (1 << o) != 0)
                        .map(|o| ids[o].clone())
                        .collect(),
                    timestamps: sup.iter().map(|&t| snapshots[t].t).collect(),
                });
            }
        }
        out.sort();
        out
    }

    /// Exhaustive maximal-convoy enumeration over subsets and spans.
    fn convoy_oracle(snapshots: &[Snapshot], k: usize, m: usize, e: f64) -> Vec<Convoy> {
        let ids = all_object_ids(snapshots);
        let n = ids.len();
        let clusters: Vec<Vec<Vec<String>>> =
            snapshots.iter().map(|s| snapshot_clusters(s, e, m)).collect();
        let together_at = |mask: u32, t: usize| -> bool {
            clusters[t]
                .iter()
                .any(|c| (0..n).all(|o| mask & (1 << o) == 0 || c.contains(&ids[o])))
        };
        let mut valid: Vec<(u32, usize, usize)> = Vec::new();
        for mask in 1u32..(1 << n) {
            if (mask.count_ones() as usize) < m {
                continue;
            }
            for s in 0..snapshots.len() {
                for en in s..snapshots.len() {
                    if en - s + 1 < k {
                        continue;
                    }
                    if (s..=en).all(|t| together_at(mask, t)) {
                        valid.push((mask, s, en));
                    }
                }
            }
        }
        let maximal: Vec<(u32, usize, usize)> = valid
            .iter()
            .copied()
            .filter(|&(mask, s, en)| {
                !valid.iter().any(|&(m2, s2, e2)| {
                    (m2, s2, e2) != (mask, s, en)
                        && m2 & mask == mask
                        && s2 <= s
                        && e2 >= en
                })
            })
            .collect();
        let mut out: Vec<Convoy> = maximal
            .into_iter()
            .map(|(mask, s, en)| Convoy {
                objects: (0..n)
                    .filter(|o| mask & (1 << o) != 0)
                    .map(|o| ids[o].clone())
                    .collect(),
                t_start: snapshots[s].t,
                t_end: snapshots[en].t,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn random_instance(seed: u64, n_objects: usize, n_snapshots: usize) -> Vec<Snapshot> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n_snapshots)
            .map(|i| Snapshot {
                t: (i as Timestamp) * 10,
                positions: (0..n_objects)
                    .map(|o| {
                        // Clumpy layout so clusters actually form.
                        let clump = (rnd() * 3.0).floor() * 30.0;
                        (format!("o{o}"), (clump + rnd() * 3.0, rnd() * 3.0))
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn miners_match_exhaustive_oracles_on_random_instances() {
        for seed in 0..6u64 {
            let snapshots = random_instance(seed, 5, 9);
            let (k, m, e) = (3, 2, 3.0);
            let swarms = mine_swarms(&snapshots, k, m, e);
            assert_eq!(swarms, swarm_oracle(&snapshots, k, m, e), "swarms differ at seed {seed}");
            let convoys = mine_convoys(&snapshots, k, m, e);
            assert_eq!(convoys, convoy_oracle(&snapshots, k, m, e), "convoys differ at seed {seed}");
            // Every emitted pattern passes its verifier.
            for c in &convoys {
                assert!(convoy_holds(&snapshots, c, e, m));
            }
            for s in &swarms {
                assert!(swarm_is_closed(&snapshots, s, e, m));
            }
            // Semantic containment: each convoy is dominated by some swarm.
            for c in &convoys {
                let span: Vec<Timestamp> = snapshots
                    .iter()
                    .map(|s| s.t)
                    .filter(|&t| t >= c.t_start && t <= c.t_end)
                    .collect();
                assert!(
                    swarms.iter().any(|s| {
                        c.objects.iter().all(|o| s.objects.contains(o))
                            && span.iter().all(|t| s.timestamps.contains(t))
                    }),
                    "convoy {c:?} not covered by any swarm"
                );
            }
        }
    }

    #[test]
    fn report_counts_clusters_and_singles() {
        let all = names(&["a", "b", "c", "d", "e"]);
        let empty = companion_report(&[], &all);
        assert_eq!(empty, CompanionReport { n_clusters: 0, n_single_trajectories: 5 });
        let one = companion_report(&[names(&["a", "b"])], &all);
        assert_eq!(one, CompanionReport { n_clusters: 1, n_single_trajectories: 3 });
    }

    #[test]
    fn snapshots_from_trajectories_use_the_lattice() {
        let trajs = vec![
            Trajectory {
                id: "a".into(),
                points: vec![
                    RawPoint { t: 0, x: 0.0, y: 0.0 },
                    RawPoint { t: 20, x: 20.0, y: 0.0 },
                ],
            },
            Trajectory {
                id: "b".into(),
                points: vec![
                    RawPoint { t: 10, x: 1.0, y: 0.0 },
                    RawPoint { t: 30, x: 1.0, y: 20.0 },
                ],
            },
        ];
        let snaps = build_snapshots(&trajs, 10).unwrap();
        assert_eq!(snaps.len(), 4);
        assert_eq!(snaps[0].positions.len(), 1);
        assert_eq!(snaps[1].positions.len(), 2);
        assert_eq!(snaps[1].positions["a"], (10.0, 0.0));
        assert_eq!(snaps[3].positions.len(), 1, "a has ended by t=30");
    }
}

use proptest::prelude::*;

use parkauction::network::{EdgePos, GridSpec, JunctionId, RoadNetwork};

fn grid(rows: usize, cols: usize) -> RoadNetwork {
    RoadNetwork::build_grid(&GridSpec {
        rows,
        cols,
        ..GridSpec::default()
    })
    .unwrap()
}

/// Shortest junction-to-junction distances by exhaustive enumeration of
/// simple paths.
fn enumerate_paths(net: &RoadNetwork) -> Vec<Vec<f64>> {
    let n = net.junctions().len();
    let mut best = vec![vec![f64::INFINITY; n]; n];
    fn walk(net: &RoadNetwork, src: usize, at: usize, len: f64, seen: &mut Vec<bool>, best: &mut [Vec<f64>]) {
        if len < best[src][at] {
            best[src][at] = len;
        }
        for &e in net.out_edges(JunctionId(at as u32)) {
            let to = net.edge(e).to.0 as usize;
            if !seen[to] {
                seen[to] = true;
                walk(net, src, to, len + net.edge(e).length, seen, best);
                seen[to] = false;
            }
        }
    }
    for s in 0..n {
        let mut seen = vec![false; n];
        seen[s] = true;
        walk(net, s, s, 0.0, &mut seen, &mut best);
    }
    best
}

#[test]
fn junction_distances_match_path_enumeration() {
    let net = grid(3, 3);
    let oracle = enumerate_paths(&net);
    for a in 0..9 {
        for b in 0..9 {
            let d = net.junction_distance(JunctionId(a), JunctionId(b)).unwrap();
            assert_eq!(d, oracle[a as usize][b as usize], "{a} -> {b}");
        }
    }
}

#[test]
fn corner_to_inner_junction() {
    let net = grid(6, 6);
    let a = net.junction_at(0, 0).unwrap();
    let b = net.junction_at(2, 1).unwrap();
    assert_eq!(net.junction_distance(a, b).unwrap(), 300.0);
}

fn pos(net: &RoadNetwork) -> impl Strategy<Value = EdgePos> {
    let edges = net.edges().len() as u32;
    (0..edges, 0.0f64..=100.0).prop_map(|(e, o)| EdgePos::new(parkauction::network::EdgeId(e), o))
}

proptest! {
    #[test]
    fn drive_distance_is_a_quasi_metric(
        (a, b, c) in {
            let net = grid(4, 5);
            (pos(&net), pos(&net), pos(&net))
        }
    ) {
        let net = grid(4, 5);
        let ab = net.drive_distance(a, b).unwrap();
        let bc = net.drive_distance(b, c).unwrap();
        let ac = net.drive_distance(a, c).unwrap();
        prop_assert_eq!(net.drive_distance(a, a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!(ac <= ab + bc + 1e-9);
        // Driving never beats the straight line.
        let xy = |p: EdgePos| {
            let e = net.edge(p.edge);
            let (f, t) = (net.junction(e.from), net.junction(e.to));
            let r = p.offset / e.length;
            (f.x + (t.x - f.x) * r, f.y + (t.y - f.y) * r)
        };
        let (pa, pb) = (xy(a), xy(b));
        prop_assert!(ab + 1e-9 >= ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt());
    }

    #[test]
    fn routes_realise_the_distance((a, b) in { let net = grid(3, 4); (pos(&net), pos(&net)) }) {
        let net = grid(3, 4);
        let route = net.route(a, b).unwrap();
        prop_assert_eq!(route.first().copied(), Some(a.edge));
        prop_assert_eq!(route.last().copied(), Some(b.edge));
        for w in route.windows(2) {
            prop_assert_eq!(net.edge(w[0]).to, net.edge(w[1]).from);
        }
        let len: f64 = if route.len() == 1 {
            b.offset - a.offset
        } else {
            net.edge(a.edge).length - a.offset
                + route[1..route.len() - 1].iter().map(|&e| net.edge(e).length).sum::<f64>()
                + b.offset
        };
        prop_assert!((len - net.drive_distance(a, b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn junction_distance_is_manhattan(r1 in 0usize..6, c1 in 0usize..6, r2 in 0usize..6, c2 in 0usize..6) {
        let net = grid(6, 6);
        let d = net
            .junction_distance(net.junction_at(r1, c1).unwrap(), net.junction_at(r2, c2).unwrap())
            .unwrap();
        prop_assert_eq!(d, 100.0 * (r1.abs_diff(r2) + c1.abs_diff(c2)) as f64);
    }
}

#[test]
fn capacity_and_zone_partition() {
    for rows in 2..=8 {
        for cols in 2..=8 {
            let net = grid(rows, cols);
            assert_eq!(net.areas().len(), net.edges().len());
            assert_eq!(net.total_spaces(), net.edges().len() * 15);
            for e in net.edges() {
                let p = net.zone_price(e.id);
                assert!(p == 0.5 || p == 1.0);
            }
        }
    }
}

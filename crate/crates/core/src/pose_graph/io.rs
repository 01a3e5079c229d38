//! Text formats: SE(3)-quaternion graph files and TUM trajectories.
//!
//! Graph files carry two record types,
//!
//! ```text
//! VERTEX_SE3:QUAT id x y z qx qy qz qw
//! EDGE_SE3:QUAT from to x y z qx qy qz qw i11 i12 .. i16 i22 .. i66
//! ```
//!
//! and `#` comments. Node metadata and edge kinds that the plain format
//! cannot express are written as `#@` comment records, which other readers
//! skip:
//!
//! ```text
//! #@NODE id robot submap timestamp
//! #@EDGE from to kind
//! ```
//!
//! Without `#@EDGE` an edge between consecutive ids is read as odometry and
//! anything else as a loop closure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EdgeKind, Information, NodeId, PoseEdge, PoseGraph, PoseNode, Stamped, Trajectory};
use crate::error::{Error, Result};
use crate::se3::Pose;

const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
const EDGE_TAG: &str = "EDGE_SE3:QUAT";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64s(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("invalid number `{t}`")))
        })
        .collect()
}

fn parse_id(token: &str, line: usize) -> Result<NodeId> {
    token
        .parse::<NodeId>()
        .map_err(|_| parse_err(line, format!("invalid id `{token}`")))
}

fn pose_from(values: &[f64], line: usize) -> Result<Pose> {
    Pose::from_parts(
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5], values[6]],
    )
    .map_err(|e| parse_err(line, e.to_string()))
}

fn write_pose(out: &mut String, p: &Pose) {
    let q = p.rotation.coords; // [x, y, z, w]
    let t = p.translation;
    let _ = write!(out, "{} {} {} {} {} {} {}", t.x, t.y, t.z, q.x, q.y, q.z, q.w);
}

/// Parses graph text.
pub fn read_g2o(text: &str) -> Result<PoseGraph> {
    struct Meta {
        robot: u32,
        submap: u32,
        timestamp: f64,
    }
    let mut vertices: Vec<(NodeId, Pose, usize)> = Vec::new();
    let mut edges: Vec<(PoseEdge, usize)> = Vec::new();
    let mut node_meta: BTreeMap<NodeId, Meta> = BTreeMap::new();
    let mut edge_kinds: BTreeMap<(NodeId, NodeId), EdgeKind> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix("#@") {
            let tok: Vec<&str> = meta.split_whitespace().collect();
            match tok.first().copied() {
                Some("NODE") if tok.len() == 5 => {
                    let id = parse_id(tok[1], lineno)?;
                    let robot = tok[2]
                        .parse()
                        .map_err(|_| parse_err(lineno, "invalid robot id"))?;
                    let submap = tok[3]
                        .parse()
                        .map_err(|_| parse_err(lineno, "invalid submap id"))?;
                    let timestamp = parse_f64s(&tok[4..5], lineno)?[0];
                    node_meta.insert(
                        id,
                        Meta {
                            robot,
                            submap,
                            timestamp,
                        },
                    );
                }
                Some("EDGE") if tok.len() == 4 => {
                    let from = parse_id(tok[1], lineno)?;
                    let to = parse_id(tok[2], lineno)?;
                    let kind = EdgeKind::parse(tok[3])
                        .ok_or_else(|| parse_err(lineno, format!("unknown edge kind `{}`", tok[3])))?;
                    edge_kinds.insert((from, to), kind);
                }
                _ => return Err(parse_err(lineno, "malformed metadata record")),
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok[0] {
            VERTEX_TAG => {
                if tok.len() != 9 {
                    return Err(parse_err(
                        lineno,
                        format!("vertex needs 8 fields, found {}", tok.len() - 1),
                    ));
                }
                let id = parse_id(tok[1], lineno)?;
                let v = parse_f64s(&tok[2..9], lineno)?;
                vertices.push((id, pose_from(&v, lineno)?, lineno));
            }
            EDGE_TAG => {
                if tok.len() != 31 {
                    return Err(parse_err(
                        lineno,
                        format!("edge needs 30 fields, found {}", tok.len() - 1),
                    ));
                }
                let from = parse_id(tok[1], lineno)?;
                let to = parse_id(tok[2], lineno)?;
                let v = parse_f64s(&tok[3..31], lineno)?;
                let measurement = pose_from(&v[..7], lineno)?;
                let mut info = Information::zeros();
                let mut k = 7;
                for r in 0..6 {
                    for c in r..6 {
                        info[(r, c)] = v[k];
                        info[(c, r)] = v[k];
                        k += 1;
                    }
                }
                edges.push((
                    PoseEdge::new(from, to, EdgeKind::Odometry, measurement, info),
                    lineno,
                ));
            }
            other => return Err(parse_err(lineno, format!("unknown record `{other}`"))),
        }
    }

    let mut graph = PoseGraph::new();
    for (id, pose, lineno) in vertices {
        let (robot, submap, timestamp) = node_meta
            .get(&id)
            .map(|m| (m.robot, m.submap, m.timestamp))
            .unwrap_or((0, 0, id as f64));
        if graph.nodes.contains_key(&id) {
            return Err(parse_err(lineno, format!("duplicate vertex id {id}")));
        }
        graph
            .nodes
            .insert(id, PoseNode::new(id, robot, submap, timestamp, pose));
    }
    for (mut edge, _) in edges {
        edge.kind = match edge_kinds.get(&(edge.from_id, edge.to_id)) {
            Some(k) => *k,
            None if edge.to_id == edge.from_id + 1 => EdgeKind::Odometry,
            None => EdgeKind::LoopClosure,
        };
        graph.edges.push(edge);
    }
    graph.validate()?;
    Ok(graph)
}

/// Serializes a graph. Numbers use the shortest round-tripping decimal form.
pub fn write_g2o(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for n in graph.nodes.values() {
        let _ = writeln!(
            out,
            "#@NODE {} {} {} {}",
            n.node_id, n.robot_id, n.submap_id, n.timestamp
        );
        let _ = write!(out, "{VERTEX_TAG} {} ", n.node_id);
        write_pose(&mut out, &n.pose);
        out.push('\n');
    }
    for e in &graph.edges {
        let _ = writeln!(out, "#@EDGE {} {} {}", e.from_id, e.to_id, e.kind.as_str());
        let _ = write!(out, "{EDGE_TAG} {} {} ", e.from_id, e.to_id);
        write_pose(&mut out, &e.measurement);
        for r in 0..6 {
            for c in r..6 {
                let _ = write!(out, " {}", e.information[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

pub fn load_g2o(path: impl AsRef<Path>) -> Result<PoseGraph> {
    read_g2o(&fs::read_to_string(path)?)
}

pub fn save_g2o(graph: &PoseGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_g2o(graph))?;
    Ok(())
}

/// Parses `timestamp x y z qx qy qz qw` lines.
pub fn read_tum(text: &str) -> Result<Trajectory> {
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 8 {
            return Err(parse_err(
                lineno,
                format!("expected 8 fields, found {}", tok.len()),
            ));
        }
        let v = parse_f64s(&tok, lineno)?;
        samples.push(Stamped::new(v[0], pose_from(&v[1..], lineno)?));
    }
    Trajectory::new(samples)
}

pub fn write_tum(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for s in trajectory.samples() {
        let _ = write!(out, "{} ", s.t);
        write_pose(&mut out, &s.pose);
        out.push('\n');
    }
    out
}

pub fn load_tum(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_tum(&fs::read_to_string(path)?)
}

pub fn save_tum(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_tum(trajectory))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose_graph::default_odometry_information;
    use nalgebra::{UnitQuaternion, Vector3};
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_empty_graph() {
        let g = read_g2o("").unwrap();
        assert!(g.is_empty() && g.edges.is_empty());
        let g = read_g2o("# only a comment\n\n").unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn two_vertices_one_edge_round_trip_exactly() {
        let text = "\
VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1
VERTEX_SE3:QUAT 1 1.5 -0.25 0.125 0 0 0.6 0.8
EDGE_SE3:QUAT 0 1 1.5 -0.25 0.125 0 0 0.6 0.8 100 0 0 0 0 0 100 0 0 0 0 100 0 0 0 400 0 0 400 0 400
";
        let g = read_g2o(text).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::Odometry);
        assert_eq!(g.edges[0].information, default_odometry_information());
        let again = read_g2o(&write_g2o(&g)).unwrap();
        assert_eq!(g, again);
        assert_eq!(write_g2o(&g), write_g2o(&again));
    }

    #[test]
    fn unknown_vertex_is_named() {
        let text = "\
VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1
EDGE_SE3:QUAT 0 42 1 0 0 0 0 0 1 1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1
";
        let err = read_g2o(text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("42")), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 1 0 0 zero 0 0 0 1\n";
        match read_g2o(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match read_g2o("VERTEX_SE3:QUAT 0 0 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_kinds_and_metadata_survive() {
        let mut g = PoseGraph::new();
        for i in 0..3u64 {
            g.insert_node(PoseNode::new(
                i + 10,
                2,
                i as u32 / 2,
                0.1 * i as f64,
                Pose::from_translation(i as f64, 0.0, 0.0),
            ))
            .unwrap();
        }
        g.edges.push(PoseEdge::new(
            10,
            12,
            EdgeKind::Correction,
            Pose::from_translation(2.0, 0.0, 0.0),
            default_odometry_information() * 0.5,
        ));
        let back = read_g2o(&write_g2o(&g)).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn tum_single_identity_line() {
        let t = read_tum("0.0 0 0 0 0 0 0 1\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.samples()[0].t, 0.0);
        assert!(t.samples()[0].pose.max_abs_diff(&Pose::identity()) < 1e-15);
    }

    #[test]
    fn tum_out_of_order_rejected() {
        let text = "1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n";
        assert!(matches!(read_tum(text), Err(Error::Validation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn tum_round_trip(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            let samples: Vec<Stamped> = (0..100)
                .map(|_| {
                    t += rng.random_range(0.01..1.0);
                    let axis = Vector3::new(rng.random::<f64>(), rng.random(), rng.random());
                    Stamped::new(
                        t,
                        Pose::new(
                            UnitQuaternion::from_scaled_axis(axis),
                            Vector3::new(rng.random_range(-100.0..100.0), rng.random(), rng.random()),
                        ),
                    )
                })
                .collect();
            let traj = Trajectory::new(samples).unwrap();
            let back = read_tum(&write_tum(&traj)).unwrap();
            prop_assert_eq!(back.len(), traj.len());
            for (a, b) in traj.samples().iter().zip(back.samples()) {
                prop_assert!((a.t - b.t).abs() < 1e-9);
                prop_assert!(a.pose.max_abs_diff(&b.pose) < 1e-9);
            }
        }
    }
}

//! Fixtures shared by the benchmarks.

use rbbm::bayes_net::sample_dataset;
use rbbm::{Dataset, NetParams, Pose, Scan, ScanGeometry, SegmentMap};

/// Occluder-heavy beam network with a 10 m range.
pub fn network() -> NetParams {
    NetParams::new(0.8, 0.15, 0.2, 0.02, 10.0).expect("valid network")
}

pub fn dataset(rows: usize) -> Dataset {
    sample_dataset(&[5.0], &network(), rows, 17).expect("valid dataset")
}

/// 4 m room with a box in the middle, 8 m sensor range.
pub fn room_with_box() -> SegmentMap {
    let mut map = SegmentMap::rectangle(8.0, 0.0, 0.0, 4.0, 4.0).expect("valid room");
    map.add_rectangle(1.8, 1.8, 2.2, 2.2).expect("valid box");
    map
}

/// Noise-free scan of `beams` rays over a half circle from the room's left side.
pub fn scan(beams: usize) -> (SegmentMap, Pose, Scan) {
    let map = room_with_box();
    let pose = Pose::new(1.0, 2.0, 0.0);
    let geometry = ScanGeometry::uniform(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, beams)
        .expect("valid geometry");
    let z = rbbm::simulate_ideal_scan(&map, &pose, &geometry);
    (map, pose, Scan::new(z, geometry).expect("valid scan"))
}

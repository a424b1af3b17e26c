//! The 15-joint articulated figure (PoseTrack-style naming).

/// Joint order used everywhere: coordinates, heatmap channels, reports.
pub const JOINT_NAMES: [&str; 15] = [
    "nose",
    "head_bottom",
    "head_top",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub const NUM_JOINTS: usize = JOINT_NAMES.len();

pub const NOSE: usize = 0;
pub const HEAD_BOTTOM: usize = 1;
pub const HEAD_TOP: usize = 2;
pub const LEFT_SHOULDER: usize = 3;
pub const RIGHT_SHOULDER: usize = 4;
pub const LEFT_ELBOW: usize = 5;
pub const RIGHT_ELBOW: usize = 6;
pub const LEFT_WRIST: usize = 7;
pub const RIGHT_WRIST: usize = 8;
pub const LEFT_HIP: usize = 9;
pub const RIGHT_HIP: usize = 10;
pub const LEFT_KNEE: usize = 11;
pub const RIGHT_KNEE: usize = 12;
pub const LEFT_ANKLE: usize = 13;
pub const RIGHT_ANKLE: usize = 14;

/// Bone list forming a tree rooted at the neck.
pub const BONES: [(usize, usize); 14] = [
    (HEAD_BOTTOM, NOSE),
    (NOSE, HEAD_TOP),
    (HEAD_BOTTOM, LEFT_SHOULDER),
    (HEAD_BOTTOM, RIGHT_SHOULDER),
    (LEFT_SHOULDER, LEFT_ELBOW),
    (LEFT_ELBOW, LEFT_WRIST),
    (RIGHT_SHOULDER, RIGHT_ELBOW),
    (RIGHT_ELBOW, RIGHT_WRIST),
    (HEAD_BOTTOM, LEFT_HIP),
    (HEAD_BOTTOM, RIGHT_HIP),
    (LEFT_HIP, LEFT_KNEE),
    (LEFT_KNEE, LEFT_ANKLE),
    (RIGHT_HIP, RIGHT_KNEE),
    (RIGHT_KNEE, RIGHT_ANKLE),
];

/// Left/right joint swap applied on horizontal flips. An involution; joints
/// on the body midline map to themselves.
pub const FLIP_PAIRS: [(usize, usize); 6] = [
    (LEFT_SHOULDER, RIGHT_SHOULDER),
    (LEFT_ELBOW, RIGHT_ELBOW),
    (LEFT_WRIST, RIGHT_WRIST),
    (LEFT_HIP, RIGHT_HIP),
    (LEFT_KNEE, RIGHT_KNEE),
    (LEFT_ANKLE, RIGHT_ANKLE),
];

/// Index the flip sends each joint to.
pub fn flip_index(k: usize) -> usize {
    for &(a, b) in &FLIP_PAIRS {
        if k == a {
            return b;
        }
        if k == b {
            return a;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bone_graph_is_a_tree() {
        // 15 nodes, 14 edges, connected, no repeated edge
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &BONES {
            assert!(a < NUM_JOINTS && b < NUM_JOINTS);
            let key = (a.min(b), a.max(b));
            assert!(seen.insert(key), "duplicate bone {key:?}");
        }
        // connectivity via union-find
        let mut parent: Vec<usize> = (0..NUM_JOINTS).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        for &(a, b) in &BONES {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            assert_ne!(ra, rb, "bone ({a},{b}) closes a cycle");
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        for k in 0..NUM_JOINTS {
            assert_eq!(find(&mut parent, k), root, "joint {k} disconnected");
        }
    }

    #[test]
    fn flip_pairing_is_an_involution() {
        for k in 0..NUM_JOINTS {
            assert_eq!(flip_index(flip_index(k)), k);
        }
        assert_eq!(flip_index(NOSE), NOSE);
        assert_eq!(flip_index(LEFT_WRIST), RIGHT_WRIST);
    }
}

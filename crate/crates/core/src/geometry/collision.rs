use nalgebra::Vector3;

use super::hand::{bone_endpoints, Skeleton};

/// Closest distance between segments `p0-p1` and `q0-q1`.
pub fn segment_distance(p0: &Vector3<f64>, p1: &Vector3<f64>, q0: &Vector3<f64>, q1: &Vector3<f64>) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    const EPS: f64 = 1e-12;

    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let c1 = p0 + d1 * s;
    let c2 = q0 + d2 * t;
    (c1 - c2).norm()
}

/// True iff two bone capsules that share no joint overlap.
pub fn self_intersects(skeleton: &Skeleton) -> bool {
    let bones = bone_endpoints();
    let caps = &skeleton.capsules;
    for i in 0..caps.len() {
        for j in i + 1..caps.len() {
            let (a0, a1) = bones[i];
            let (b0, b1) = bones[j];
            if a0 == b0 || a0 == b1 || a1 == b0 || a1 == b1 {
                continue;
            }
            let d = segment_distance(&caps[i].a, &caps[i].b, &caps[j].a, &caps[j].b);
            if d < caps[i].radius + caps[j].radius {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hand::{forward_kinematics, HandPose, HandShape, GLOBAL_DOF, POSE_DOF};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute_distance(
        p0: &Vector3<f64>,
        p1: &Vector3<f64>,
        q0: &Vector3<f64>,
        q1: &Vector3<f64>,
        samples: usize,
    ) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..samples {
            let s = i as f64 / (samples - 1) as f64;
            let a = p0 + (p1 - p0) * s;
            for j in 0..samples {
                let t = j as f64 / (samples - 1) as f64;
                let b = q0 + (q1 - q0) * t;
                best = best.min((a - b).norm());
            }
        }
        best
    }

    fn brute_self_intersects(skel: &Skeleton) -> bool {
        let bones = bone_endpoints();
        let caps = &skel.capsules;
        for i in 0..caps.len() {
            for j in i + 1..caps.len() {
                let (a0, a1) = bones[i];
                let (b0, b1) = bones[j];
                if [a0, a1].iter().any(|k| *k == b0 || *k == b1) {
                    continue;
                }
                let d = brute_distance(&caps[i].a, &caps[i].b, &caps[j].a, &caps[j].b, 100);
                if d < caps[i].radius + caps[j].radius {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn parallel_and_crossing_segments() {
        let z = Vector3::zeros();
        let x = Vector3::x();
        let d = segment_distance(&z, &x, &Vector3::new(0.0, 2.0, 0.0), &Vector3::new(1.0, 2.0, 0.0));
        assert!((d - 2.0).abs() < 1e-12);
        let d = segment_distance(
            &Vector3::new(-1.0, 0.0, 0.0),
            &x,
            &Vector3::new(0.0, -1.0, 3.0),
            &Vector3::new(0.0, 1.0, 3.0),
        );
        assert!((d - 3.0).abs() < 1e-12);
        // degenerate point segments
        assert!((segment_distance(&z, &z, &x, &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rest_pose_is_clear() {
        let shape = HandShape::default();
        let skel = forward_kinematics(&HandPose::default(), &shape).unwrap();
        assert!(!self_intersects(&skel));
    }

    #[test]
    fn coincident_fingertips_intersect() {
        let shape = HandShape::default();
        let mut skel = forward_kinematics(&HandPose::default(), &shape).unwrap();
        // index tip onto the middle tip: their distal capsules now touch
        let target = skel.keypoints[12];
        skel.keypoints[8] = target;
        skel.capsules[7].b = target;
        assert!(self_intersects(&skel));
    }

    #[test]
    fn matches_point_sampling_oracle_on_random_poses() {
        let shape = HandShape::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..60 {
            let mut pose = HandPose::default();
            pose.theta[2] = 400.0;
            for i in GLOBAL_DOF..POSE_DOF {
                let [lo, hi] = shape.limit(i).unwrap();
                pose.theta[i] = rng.random_range(lo..=hi);
            }
            let skel = forward_kinematics(&pose, &shape).unwrap();
            let fast = self_intersects(&skel);
            // sampled distance overestimates; only compare away from the contact boundary
            let slow = brute_self_intersects(&skel);
            if fast != slow {
                // sampling can miss contacts shallower than the sample spacing
                assert!(fast && !slow, "oracle found a contact the analytic test missed");
            }
            hits += usize::from(fast);
        }
        assert!(hits > 0, "random poses should produce some self-contact");
    }

    proptest! {
        #[test]
        fn segment_distance_matches_sampling(
            c in proptest::array::uniform12(-50.0f64..50.0)
        ) {
            let p0 = Vector3::new(c[0], c[1], c[2]);
            let p1 = Vector3::new(c[3], c[4], c[5]);
            let q0 = Vector3::new(c[6], c[7], c[8]);
            let q1 = Vector3::new(c[9], c[10], c[11]);
            let fast = segment_distance(&p0, &p1, &q0, &q1);
            let slow = brute_distance(&p0, &p1, &q0, &q1, 100);
            let spacing = ((p1 - p0).norm() + (q1 - q0).norm()) / 99.0;
            prop_assert!(fast <= slow + 1e-9);
            prop_assert!(slow - fast <= spacing + 1e-9);
        }

        #[test]
        fn invariant_under_rigid_motion(
            unit in proptest::array::uniform26(0.0f64..1.0),
            rot in proptest::array::uniform3(-3.0f64..3.0),
            shift in proptest::array::uniform3(-300.0f64..300.0),
        ) {
            let shape = HandShape::default();
            let mut pose = HandPose::default();
            for i in GLOBAL_DOF..POSE_DOF {
                let [lo, hi] = shape.limit(i).unwrap();
                pose.theta[i] = lo + unit[i] * (hi - lo);
            }
            let a = forward_kinematics(&pose, &shape).unwrap();
            pose.theta[..3].copy_from_slice(&shift);
            pose.theta[3..6].copy_from_slice(&rot);
            let b = forward_kinematics(&pose, &shape).unwrap();
            prop_assert_eq!(self_intersects(&a), self_intersects(&b));
            // symmetric in capsule order
            let mut rev = b.clone();
            rev.capsules.reverse();
            let fwd = self_intersects(&b);
            let mut any = false;
            let bones = bone_endpoints();
            let n = rev.capsules.len();
            for i in 0..n {
                for j in 0..n {
                    if i == j { continue; }
                    let (bi, bj) = (bones[n - 1 - i], bones[n - 1 - j]);
                    if [bi.0, bi.1].iter().any(|k| *k == bj.0 || *k == bj.1) { continue; }
                    let (ci, cj) = (&rev.capsules[i], &rev.capsules[j]);
                    if segment_distance(&ci.a, &ci.b, &cj.a, &cj.b) < ci.radius + cj.radius {
                        any = true;
                    }
                }
            }
            prop_assert_eq!(fwd, any);
        }
    }
}

//! Clutched hand-to-target mapping.
//!
//! While the clutch button is held the target follows the hand relative to
//! the anchors recorded at the last button transition; while released the
//! target stays at its anchor with zero velocity.

use crate::geometry::{Aabb, MotionState, Pose, Twist};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Which operator hand / effector a channel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hand::Left => "left",
            Hand::Right => "right",
        })
    }
}

impl std::str::FromStr for Hand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Hand::Left),
            "right" => Ok(Hand::Right),
            other => Err(format!("unknown hand {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutchState {
    pub engaged: bool,
    pub hand_anchor: Pose,
    pub target_anchor: Pose,
}

impl ClutchState {
    pub fn released(hand_anchor: Pose, target_anchor: Pose) -> Self {
        Self {
            engaged: false,
            hand_anchor,
            target_anchor,
        }
    }
}

/// One step of the mapping.
///
/// `current_target` is the target pose in effect just before this sample;
/// it becomes the new target anchor when `button` differs from the state.
/// On the transition sample the emitted pose is exactly that anchor and the
/// emitted twist is zero, so the target never jumps.
pub fn clutch_update(
    state: &ClutchState,
    hand: &MotionState,
    button: bool,
    current_target: &Pose,
) -> (ClutchState, MotionState) {
    if button != state.engaged {
        let next = ClutchState {
            engaged: button,
            hand_anchor: hand.pose,
            target_anchor: *current_target,
        };
        return (next, MotionState::at_rest(*current_target));
    }
    if !state.engaged {
        return (*state, MotionState::at_rest(state.target_anchor));
    }
    let ha = &state.hand_anchor;
    let ta = &state.target_anchor;
    let pose = Pose::from_parts(
        ta.position + (hand.pose.position - ha.position),
        ta.rotation * (ha.rotation.inverse() * hand.pose.rotation),
    );
    (*state, MotionState::new(pose, hand.twist))
}

/// Per-hand clutch channel: holds the latest hand sample and the emitted
/// target between ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutchChannel {
    state: Option<ClutchState>,
    target: MotionState,
    latest: Option<(MotionState, bool)>,
    clamp: Option<Aabb>,
}

impl ClutchChannel {
    /// Channel whose target starts at `home`. The hand anchor is taken from
    /// the first hand sample received.
    pub fn new(home: Pose) -> Self {
        Self {
            state: None,
            target: MotionState::at_rest(home),
            latest: None,
            clamp: None,
        }
    }

    /// Clamp emitted target positions into `workspace`.
    pub fn with_clamp(mut self, workspace: Option<Aabb>) -> Self {
        self.clamp = workspace;
        self
    }

    pub fn set_input(&mut self, hand: MotionState, button: bool) {
        self.latest = Some((hand, button));
    }

    /// Drop the clutch, keeping the last hand pose. The target freezes on the
    /// next [`update`](Self::update).
    pub fn release(&mut self) {
        if let Some((_, button)) = self.latest.as_mut() {
            *button = false;
        }
    }

    pub fn engaged(&self) -> bool {
        self.state.map(|s| s.engaged).unwrap_or(false)
    }

    pub fn state(&self) -> Option<&ClutchState> {
        self.state.as_ref()
    }

    pub fn target(&self) -> &MotionState {
        &self.target
    }

    /// Advance the mapping with the most recent hand sample.
    pub fn update(&mut self) -> MotionState {
        let Some((hand, button)) = self.latest else {
            return self.target;
        };
        let state = self
            .state
            .unwrap_or_else(|| ClutchState::released(hand.pose, self.target.pose));
        let (next, mut target) = clutch_update(&state, &hand, button, &self.target.pose);
        if let Some(ws) = &self.clamp {
            let clamped = ws.clamp(&target.pose.position);
            for i in 0..3 {
                if clamped[i] != target.pose.position[i] {
                    target.twist.linear[i] = 0.0;
                }
            }
            target.pose.position = clamped;
        }
        self.state = Some(next);
        self.target = target;
        target
    }
}

impl Default for ClutchChannel {
    fn default() -> Self {
        Self::new(Pose::identity())
    }
}

/// Zero-twist helper for callers that only have poses.
pub fn still(pose: Pose) -> MotionState {
    MotionState::new(pose, Twist::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp, geodesic_angle, yaw, Rotation, Vec3};
    use proptest::prelude::*;

    fn moving(p: Vec3, r: Rotation, v: Vec3) -> MotionState {
        MotionState::new(
            Pose::from_parts(p, r),
            Twist {
                linear: v,
                angular: Vec3::new(0.0, 0.0, 0.3),
            },
        )
    }

    #[test]
    fn released_target_ignores_hand() {
        let anchor = Pose::from_parts(Vec3::new(0.5, 0.2, 0.3), yaw(0.3));
        let s = ClutchState::released(Pose::identity(), anchor);
        for k in 0..20 {
            let h = moving(Vec3::new(k as f64, -2.0, 0.1 * k as f64), yaw(k as f64), Vec3::new(1.0, 2.0, 3.0));
            let (s2, t) = clutch_update(&s, &h, false, &anchor);
            assert_eq!(s2, s);
            assert_eq!(t.pose, anchor);
            assert_eq!(t.twist, Twist::zero());
        }
    }

    #[test]
    fn identity_anchors_follow_hand() {
        let s = ClutchState {
            engaged: true,
            hand_anchor: Pose::identity(),
            target_anchor: Pose::identity(),
        };
        let h = still(Pose::from_translation(Vec3::new(0.0, 0.0, 0.2)));
        let (_, t) = clutch_update(&s, &h, true, &Pose::identity());
        assert_eq!(t.pose.position, Vec3::new(0.0, 0.0, 0.2));
        let h = still(Pose::from_parts(Vec3::zeros(), yaw(0.7)));
        let (_, t) = clutch_update(&s, &h, true, &Pose::identity());
        assert!(geodesic_angle(&t.pose.rotation, &yaw(0.7)) < 1e-15);
    }

    #[test]
    fn press_sample_emits_zero_twist_then_hand_twist() {
        let mut ch = ClutchChannel::new(Pose::from_translation(Vec3::new(0.5, 0.3, 0.2)));
        let h = moving(Vec3::new(1.0, 1.0, 1.0), Rotation::identity(), Vec3::new(0.1, 0.0, 0.0));
        ch.set_input(h, true);
        let t0 = ch.update();
        assert_eq!(t0.twist, Twist::zero());
        assert_eq!(t0.pose.position, Vec3::new(0.5, 0.3, 0.2));
        let t1 = ch.update();
        assert_eq!(t1.twist, h.twist);
    }

    /// Replays press / move / release / reposition / press / move and checks
    /// the net target displacement is the sum of the engaged moves.
    #[test]
    fn ratcheting_sums_engaged_moves() {
        let home = Pose::from_translation(Vec3::new(0.4, 0.0, 0.3));
        let mut ch = ClutchChannel::new(home);
        let d1 = Vec3::new(0.1, -0.05, 0.02);
        let d2 = Vec3::new(-0.03, 0.2, 0.07);
        let mut hand = Vec3::new(1.0, 2.0, 3.0);
        let feed = |ch: &mut ClutchChannel, p: Vec3, b: bool| {
            ch.set_input(still(Pose::from_translation(p)), b);
            ch.update()
        };
        feed(&mut ch, hand, true);
        for k in 1..=10 {
            feed(&mut ch, hand + d1 * (k as f64 / 10.0), true);
        }
        hand += d1;
        feed(&mut ch, hand, false);
        // Reposition the hand while released.
        for k in 1..=10 {
            let t = feed(&mut ch, hand + Vec3::new(-0.5, 0.3, 0.9) * (k as f64 / 10.0), false);
            assert!((t.pose.position - (home.position + d1)).norm() < 1e-15);
        }
        hand += Vec3::new(-0.5, 0.3, 0.9);
        feed(&mut ch, hand, true);
        let mut last = MotionState::default();
        for k in 1..=10 {
            last = feed(&mut ch, hand + d2 * (k as f64 / 10.0), true);
        }
        assert!((last.pose.position - (home.position + d1 + d2)).norm() < 1e-14);
    }

    #[test]
    fn first_sample_anchors_hand_without_moving_target() {
        let home = Pose::from_parts(Vec3::new(0.5, 0.3, 0.25), exp(&Vec3::new(1.57, 0.0, 0.0)));
        let mut ch = ClutchChannel::new(home);
        ch.set_input(still(Pose::from_translation(Vec3::new(9.0, 9.0, 9.0))), false);
        assert_eq!(ch.update().pose, home);
        assert_eq!(ch.state().unwrap().hand_anchor.position, Vec3::new(9.0, 9.0, 9.0));
    }

    #[test]
    fn release_freezes_target() {
        let mut ch = ClutchChannel::new(Pose::identity());
        ch.set_input(still(Pose::identity()), true);
        ch.update();
        ch.set_input(still(Pose::from_translation(Vec3::new(0.1, 0.0, 0.0))), true);
        let before = ch.update();
        ch.release();
        let at = ch.update();
        assert_eq!(at.pose, before.pose);
        assert_eq!(at.twist, Twist::zero());
        assert!(!ch.engaged());
    }

    #[test]
    fn clamp_limits_target_and_zeroes_clamped_velocity() {
        let ws = Aabb::new(Vec3::new(-0.1, -0.1, -0.1), Vec3::new(0.1, 0.1, 0.1));
        let mut ch = ClutchChannel::new(Pose::identity()).with_clamp(Some(ws));
        ch.set_input(still(Pose::identity()), true);
        ch.update();
        ch.set_input(moving(Vec3::new(0.5, 0.05, 0.0), Rotation::identity(), Vec3::new(1.0, 1.0, 0.0)), true);
        let t = ch.update();
        assert_eq!(t.pose.position, Vec3::new(0.1, 0.05, 0.0));
        assert_eq!(t.twist.linear, Vec3::new(0.0, 1.0, 0.0));
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform3(-2.0f64..2.0))
            .prop_map(|(p, r)| Pose::from_parts(Vec3::from(p), exp(&Vec3::from(r))))
    }

    proptest! {
        #[test]
        fn target_is_continuous_across_transitions(
            steps in prop::collection::vec((arb_pose(), any::<bool>()), 1..60)
        ) {
            let mut ch = ClutchChannel::new(Pose::from_translation(Vec3::new(0.5, 0.0, 0.3)));
            let mut prev = *ch.target();
            let mut prev_button = None;
            for (pose, button) in steps {
                ch.set_input(still(pose), button);
                let t = ch.update();
                if prev_button.map_or(button, |b: bool| b != button) {
                    prop_assert_eq!(t.pose, prev.pose);
                }
                if !button {
                    prop_assert_eq!(t.pose, prev.pose);
                    prop_assert_eq!(t.twist, Twist::zero());
                }
                prev = t;
                prev_button = Some(button);
            }
        }

        #[test]
        fn engaged_relative_rotation_matches_hand(
            anchors in (arb_pose(), arb_pose()),
            hands in prop::collection::vec(arb_pose(), 1..20),
        ) {
            let (ha, ta) = anchors;
            let s = ClutchState { engaged: true, hand_anchor: ha, target_anchor: ta };
            for h in hands {
                let (_, t) = clutch_update(&s, &still(h), true, &ta);
                let rel_t = ta.rotation.inverse() * t.pose.rotation;
                let rel_h = ha.rotation.inverse() * h.rotation;
                prop_assert!(geodesic_angle(&rel_t, &rel_h) < 1e-12);
                prop_assert!(((t.pose.position - ta.position) - (h.position - ha.position)).norm() < 1e-12);
            }
        }
    }
}

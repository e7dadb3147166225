//! Cover and Cover Heavy: pick blocks and place them to cover designated
//! target regions on a 1-D table axis. The heavy variant marks some blocks
//! red (too heavy to pick) and includes unreachable goals in the test
//! distribution.

use super::{GenParams, GeneratedTask};
use crate::domain::{Fact, FeatureState, GroundSkill, ObjectRef, Simulator, Task};
use crate::abstraction::GroundAtom;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const BLOCK_X: usize = 0;
const BLOCK_W: usize = 1;
const ROBOT_FINGERS: usize = 0;
const TARGET_X: usize = 0;
const TARGET_W: usize = 1;

pub struct CoverSim;

fn robot_of(state: &FeatureState) -> Option<ObjectRef> {
    state.objects_of_type("robot").into_iter().next()
}

fn covers_interval(state: &FeatureState, block: &ObjectRef, target: &ObjectRef) -> bool {
    let bx = state.feature(block, BLOCK_X).unwrap_or(f64::NAN);
    let bw = state.feature(block, BLOCK_W).unwrap_or(f64::NAN);
    let tx = state.feature(target, TARGET_X).unwrap_or(f64::NAN);
    let tw = state.feature(target, TARGET_W).unwrap_or(f64::NAN);
    bx - bw / 2.0 >= tx - tw / 2.0 && bx + bw / 2.0 <= tx + tw / 2.0
}

impl Simulator for CoverSim {
    fn step(&self, state: &FeatureState, skill: &GroundSkill) -> Option<FeatureState> {
        let robot = robot_of(state)?;
        match skill.name.as_str() {
            "Pick" => {
                let block = skill.args.first()?.clone();
                if state.feature(&robot, ROBOT_FINGERS)? <= 0.5 {
                    return None; // gripper already closed
                }
                if state
                    .scene
                    .holds(&Fact::new("color_red", vec![block.clone()]))
                {
                    return None; // too heavy
                }
                let mut next = state.clone();
                next.set_feature(&robot, ROBOT_FINGERS, 0.0);
                next.scene
                    .insert(Fact::new("held", vec![robot.clone(), block.clone()]));
                // Lifting a block uncovers whatever it covered.
                let stale: Vec<Fact> = next
                    .scene
                    .facts
                    .iter()
                    .filter(|f| f.relation == "covers" && f.args.first() == Some(&block))
                    .cloned()
                    .collect();
                for f in stale {
                    next.scene.remove(&f);
                }
                Some(next)
            }
            "Place" => {
                let block = skill.args.first()?.clone();
                let target = skill.args.get(1)?.clone();
                let held = Fact::new("held", vec![robot.clone(), block.clone()]);
                if !state.scene.holds(&held) {
                    return None;
                }
                let mut next = state.clone();
                next.scene.remove(&held);
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                let tx = next.feature(&target, TARGET_X)?;
                next.set_feature(&block, BLOCK_X, tx);
                for t in next.objects_of_type("target") {
                    if covers_interval(&next, &block, &t) {
                        next.scene.insert(Fact::new("covers", vec![block.clone(), t]));
                    }
                }
                Some(next)
            }
            _ => None,
        }
    }
}

pub fn sample_task(params: &GenParams, seed: u64, test: bool) -> GeneratedTask {
    let (nb, nt, heavy, impossible_rate) = match params {
        GenParams::Cover {
            train_blocks,
            train_targets,
            test_blocks,
            test_targets,
            heavy,
            impossible_rate,
        } => {
            if test {
                (*test_blocks, *test_targets, *heavy, *impossible_rate)
            } else {
                (*train_blocks, *train_targets, *heavy, 0.0)
            }
        }
        _ => unreachable!("cover sampler called with foreign params"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot = ObjectRef::new("robot", "robot", 0);
    let blocks: Vec<ObjectRef> = (0..nb)
        .map(|i| ObjectRef::new("block", "block", 1 + i as u32))
        .collect();
    let targets: Vec<ObjectRef> = (0..nt)
        .map(|i| ObjectRef::new("target", "target", 1 + (nb + i) as u32))
        .collect();

    let mut init = FeatureState::new();
    init.features.insert(robot.clone(), vec![1.0]);
    for (i, b) in blocks.iter().enumerate() {
        let width = rng.gen_range(0.03..0.06);
        let x = 0.01 + 0.03 * i as f64 + rng.gen_range(-0.005..0.005);
        init.features.insert(b.clone(), vec![x, width]);
    }
    for (i, t) in targets.iter().enumerate() {
        let width = rng.gen_range(0.08..0.12);
        let x = 0.30 + 0.25 * i as f64 + rng.gen_range(-0.01..0.01);
        init.features.insert(t.clone(), vec![x, width]);
    }

    // Goal: one or two covers pairs over distinct blocks and targets.
    let n_goals = if test {
        if rng.gen_bool(0.6) {
            2
        } else {
            1
        }
    } else if rng.gen_bool(0.5) {
        2
    } else {
        1
    };
    let n_goals = n_goals.min(nb).min(nt);
    let mut goal_blocks = blocks.clone();
    goal_blocks.shuffle(&mut rng);
    let mut goal_targets = targets.clone();
    goal_targets.shuffle(&mut rng);
    let mut goal = BTreeSet::new();
    for i in 0..n_goals {
        goal.insert(GroundAtom::new(
            "Covers",
            vec![goal_blocks[i].clone(), goal_targets[i].clone()],
        ));
    }

    let mut unreachable = false;
    if heavy {
        // Every block gets a color; goal blocks stay green unless the task
        // is drawn impossible, in which case one goal block turns red.
        let impossible = test && rng.gen_bool(impossible_rate);
        for (i, b) in blocks.iter().enumerate() {
            let is_goal = goal_blocks[..n_goals].contains(b);
            let red = if is_goal {
                impossible && blocks[i] == goal_blocks[0]
            } else {
                rng.gen_bool(0.5)
            };
            let color = if red { "color_red" } else { "color_green" };
            init.scene.insert(Fact::new(color, vec![b.clone()]));
        }
        unreachable = impossible;
    }

    let mut objects: BTreeSet<ObjectRef> = blocks.iter().cloned().collect();
    objects.insert(robot);
    objects.extend(targets.iter().cloned());
    GeneratedTask {
        task: Task {
            objects,
            init,
            goal,
        },
        unreachable,
    }
}

//! Blocks: build towers to a specified configuration with Pick, Stack, and
//! PutOnTable skills.

use super::{mix_seed, GenParams, GeneratedTask};
use crate::abstraction::GroundAtom;
use crate::domain::{Fact, FeatureState, GroundSkill, ObjectRef, Simulator, Task};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const ROBOT_FINGERS: usize = 0;

pub struct BlocksSim;

fn robot_of(state: &FeatureState) -> Option<ObjectRef> {
    state.objects_of_type("robot").into_iter().next()
}

fn held_block(state: &FeatureState, robot: &ObjectRef) -> Option<ObjectRef> {
    state
        .scene
        .facts
        .iter()
        .find(|f| f.relation == "held" && f.args.first() == Some(robot))
        .map(|f| f.args[1].clone())
}

fn is_clear(state: &FeatureState, block: &ObjectRef) -> bool {
    !state
        .scene
        .facts
        .iter()
        .any(|f| f.relation == "on" && f.args.get(1) == Some(block))
}

impl Simulator for BlocksSim {
    fn step(&self, state: &FeatureState, skill: &GroundSkill) -> Option<FeatureState> {
        let robot = robot_of(state)?;
        let fingers = state.feature(&robot, ROBOT_FINGERS)?;
        match skill.name.as_str() {
            "Pick" => {
                let block = skill.args.get(1)?.clone();
                if fingers < 0.5 || !is_clear(state, &block) {
                    return None;
                }
                let mut next = state.clone();
                let support: Vec<Fact> = next
                    .scene
                    .facts
                    .iter()
                    .filter(|f| {
                        (f.relation == "on" && f.args.first() == Some(&block))
                            || (f.relation == "on_table" && f.args.first() == Some(&block))
                    })
                    .cloned()
                    .collect();
                if support.is_empty() {
                    return None; // nothing to pick it from
                }
                for f in support {
                    next.scene.remove(&f);
                }
                next.scene
                    .insert(Fact::new("held", vec![robot.clone(), block]));
                next.set_feature(&robot, ROBOT_FINGERS, 0.0);
                Some(next)
            }
            "Stack" => {
                let onto = skill.args.get(1)?.clone();
                let held = held_block(state, &robot)?;
                if fingers > 0.5 || held == onto || !is_clear(state, &onto) {
                    return None;
                }
                let mut next = state.clone();
                next.scene
                    .remove(&Fact::new("held", vec![robot.clone(), held.clone()]));
                next.scene.insert(Fact::new("on", vec![held, onto]));
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                Some(next)
            }
            "PutOnTable" => {
                let held = held_block(state, &robot)?;
                let mut next = state.clone();
                next.scene
                    .remove(&Fact::new("held", vec![robot.clone(), held.clone()]));
                next.scene.insert(Fact::new("on_table", vec![held]));
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                Some(next)
            }
            _ => None,
        }
    }
}

/// Random tower configuration: a partition of the shuffled blocks into
/// bottom-up towers.
fn random_towers(blocks: &[ObjectRef], rng: &mut ChaCha8Rng) -> Vec<Vec<ObjectRef>> {
    let mut shuffled = blocks.to_vec();
    shuffled.shuffle(rng);
    let mut towers: Vec<Vec<ObjectRef>> = Vec::new();
    for b in shuffled {
        if towers.is_empty() || rng.gen_bool(0.4) {
            towers.push(vec![b]);
        } else {
            let i = rng.gen_range(0..towers.len());
            towers[i].push(b);
        }
    }
    towers
}

fn tower_on_atoms(towers: &[Vec<ObjectRef>]) -> BTreeSet<GroundAtom> {
    let mut atoms = BTreeSet::new();
    for tower in towers {
        for pair in tower.windows(2) {
            atoms.insert(GroundAtom::new(
                "On",
                vec![pair[1].clone(), pair[0].clone()],
            ));
        }
    }
    atoms
}

pub fn sample_task(params: &GenParams, seed: u64, test: bool) -> GeneratedTask {
    let counts = match params {
        GenParams::Blocks {
            train_blocks,
            test_blocks,
        } => {
            if test {
                test_blocks
            } else {
                train_blocks
            }
        }
        _ => unreachable!("blocks sampler called with foreign params"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = counts[rng.gen_range(0..counts.len())];
    let robot = ObjectRef::new("robot", "robot", 0);
    let blocks: Vec<ObjectRef> = (0..n)
        .map(|i| ObjectRef::new("block", "block", 1 + i as u32))
        .collect();

    let init_towers = random_towers(&blocks, &mut rng);
    let mut init = FeatureState::new();
    init.features.insert(robot.clone(), vec![1.0]);
    for b in &blocks {
        init.features.insert(b.clone(), vec![]);
    }
    for tower in &init_towers {
        init.scene
            .insert(Fact::new("on_table", vec![tower[0].clone()]));
        for pair in tower.windows(2) {
            init.scene
                .insert(Fact::new("on", vec![pair[1].clone(), pair[0].clone()]));
        }
    }
    let init_on: BTreeSet<GroundAtom> = tower_on_atoms(&init_towers);

    // Goal: a different random configuration spelled out as complete
    // towers — On chains anchored by OnTable at the base. When the drawn
    // configuration is all singletons, the goal asks to spread the
    // currently stacked blocks onto the table.
    let mut goal = BTreeSet::new();
    for attempt in 0..64u64 {
        let mut sub = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xb10c, attempt));
        let towers = random_towers(&blocks, &mut sub);
        let atoms = tower_on_atoms(&towers);
        let mut candidate = atoms.clone();
        if atoms.is_empty() {
            for b in &blocks {
                if !init.scene.holds(&Fact::new("on_table", vec![b.clone()])) {
                    candidate.insert(GroundAtom::new("OnTable", vec![b.clone()]));
                }
            }
            if candidate.is_empty() {
                continue; // everything already flat; draw again
            }
        } else {
            if atoms.iter().all(|a| init_on.contains(a)) {
                continue;
            }
            for tower in &towers {
                if tower.len() > 1 {
                    candidate.insert(GroundAtom::new("OnTable", vec![tower[0].clone()]));
                }
            }
        }
        goal = candidate;
        break;
    }
    if goal.is_empty() {
        // Degenerate fallback: stack the two lowest-numbered blocks.
        goal.insert(GroundAtom::new(
            "On",
            vec![blocks[1].clone(), blocks[0].clone()],
        ));
        goal.insert(GroundAtom::new("OnTable", vec![blocks[0].clone()]));
    }

    let mut objects: BTreeSet<ObjectRef> = blocks.iter().cloned().collect();
    objects.insert(robot);
    GeneratedTask {
        task: Task {
            objects,
            init,
            goal,
        },
        unreachable: false,
    }
}

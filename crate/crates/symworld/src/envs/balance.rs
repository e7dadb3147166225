//! Balance: two plates each carry a tower of blocks; pressing the button
//! turns the machine on exactly when both plates carry equally many
//! blocks.

use super::{GenParams, GeneratedTask};
use crate::abstraction::GroundAtom;
use crate::domain::{Fact, FeatureState, GroundSkill, ObjectRef, Simulator, Task};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const ROBOT_FINGERS: usize = 0;

pub struct BalanceSim;

fn held_block(state: &FeatureState) -> Option<ObjectRef> {
    state
        .scene
        .facts
        .iter()
        .find(|f| f.relation == "held")
        .map(|f| f.args[0].clone())
}

/// Recomputes the derived scene flags `clear` and `clear_plate` from the
/// support relations: held or covered blocks are not clear; a plate is
/// clear when no block sits directly on it.
fn refresh_flags(state: &mut FeatureState) {
    let stale: Vec<Fact> = state
        .scene
        .facts
        .iter()
        .filter(|f| f.relation == "clear" || f.relation == "clear_plate")
        .cloned()
        .collect();
    for f in stale {
        state.scene.remove(&f);
    }
    let held = held_block(state);
    for b in state.objects_of_type("block") {
        let covered = state
            .scene
            .facts
            .iter()
            .any(|f| f.relation == "directly_on" && f.args.get(1) == Some(&b));
        if !covered && held.as_ref() != Some(&b) {
            state.scene.insert(Fact::new("clear", vec![b]));
        }
    }
    for p in state.objects_of_type("plate") {
        let occupied = state
            .scene
            .facts
            .iter()
            .any(|f| f.relation == "directly_on_plate" && f.args.get(1) == Some(&p));
        if !occupied {
            state.scene.insert(Fact::new("clear_plate", vec![p]));
        }
    }
}

/// Blocks transitively supported by a plate.
fn plate_count(state: &FeatureState, plate: &ObjectRef) -> usize {
    let mut supported: BTreeSet<ObjectRef> = state
        .scene
        .facts
        .iter()
        .filter(|f| f.relation == "directly_on_plate" && f.args.get(1) == Some(plate))
        .map(|f| f.args[0].clone())
        .collect();
    loop {
        let next: BTreeSet<ObjectRef> = state
            .scene
            .facts
            .iter()
            .filter(|f| {
                f.relation == "directly_on"
                    && f.args.get(1).map(|u| supported.contains(u)).unwrap_or(false)
            })
            .map(|f| f.args[0].clone())
            .collect();
        let before = supported.len();
        supported.extend(next);
        if supported.len() == before {
            return supported.len();
        }
    }
}

impl Simulator for BalanceSim {
    fn step(&self, state: &FeatureState, skill: &GroundSkill) -> Option<FeatureState> {
        let robot = state.objects_of_type("robot").into_iter().next()?;
        let fingers = state.feature(&robot, ROBOT_FINGERS)?;
        match skill.name.as_str() {
            "Pick" => {
                let block = skill.args.get(1)?.clone();
                if fingers <= 0.5 || !state.scene.holds(&Fact::new("clear", vec![block.clone()])) {
                    return None;
                }
                let mut next = state.clone();
                let support: Vec<Fact> = next
                    .scene
                    .facts
                    .iter()
                    .filter(|f| {
                        (f.relation == "directly_on" || f.relation == "directly_on_plate")
                            && f.args.first() == Some(&block)
                    })
                    .cloned()
                    .collect();
                for f in support {
                    next.scene.remove(&f);
                }
                next.scene.insert(Fact::new("held", vec![block]));
                next.set_feature(&robot, ROBOT_FINGERS, 0.0);
                refresh_flags(&mut next);
                Some(next)
            }
            "Stack" => {
                let onto = skill.args.get(1)?.clone();
                let held = held_block(state)?;
                if fingers > 0.5
                    || held == onto
                    || !state.scene.holds(&Fact::new("clear", vec![onto.clone()]))
                {
                    return None;
                }
                let mut next = state.clone();
                next.scene.remove(&Fact::new("held", vec![held.clone()]));
                next.scene
                    .insert(Fact::new("directly_on", vec![held, onto]));
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                refresh_flags(&mut next);
                Some(next)
            }
            "PutOnPlate" => {
                let plate = skill.args.get(1)?.clone();
                let held = held_block(state)?;
                if !state
                    .scene
                    .holds(&Fact::new("clear_plate", vec![plate.clone()]))
                {
                    return None;
                }
                let mut next = state.clone();
                next.scene.remove(&Fact::new("held", vec![held.clone()]));
                next.scene
                    .insert(Fact::new("directly_on_plate", vec![held, plate]));
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                refresh_flags(&mut next);
                Some(next)
            }
            "TurnMachineOn" => {
                let p1 = skill.args.get(1)?.clone();
                let p2 = skill.args.get(2)?.clone();
                if p1 == p2 {
                    return None;
                }
                let mut next = state.clone();
                if plate_count(state, &p1) == plate_count(state, &p2) {
                    for m in next.objects_of_type("machine") {
                        next.scene.insert(Fact::new("machine_on", vec![m]));
                    }
                }
                Some(next)
            }
            _ => None,
        }
    }
}

pub fn sample_task(params: &GenParams, seed: u64, test: bool) -> GeneratedTask {
    let counts = match params {
        GenParams::Balance {
            train_blocks,
            test_blocks,
        } => {
            if test {
                test_blocks
            } else {
                train_blocks
            }
        }
        _ => unreachable!("balance sampler called with foreign params"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = counts[rng.gen_range(0..counts.len())];
    let robot = ObjectRef::new("robot", "robot", 0);
    let machine = ObjectRef::new("machine", "machine", 1);
    let plates = [
        ObjectRef::new("plate", "plate", 2),
        ObjectRef::new("plate", "plate", 3),
    ];
    let blocks: Vec<ObjectRef> = (0..n)
        .map(|i| ObjectRef::new("block", "block", 4 + i as u32))
        .collect();

    // Uneven split so the task is never trivially balanced.
    let splits: Vec<(usize, usize)> = (0..=n)
        .filter(|&a| a != n - a)
        .map(|a| (a, n - a))
        .collect();
    let (left, _right) = splits[rng.gen_range(0..splits.len())];
    let mut shuffled = blocks.clone();
    shuffled.shuffle(&mut rng);

    let mut init = FeatureState::new();
    init.features.insert(robot.clone(), vec![1.0]);
    init.features.insert(machine.clone(), vec![]);
    for p in &plates {
        init.features.insert(p.clone(), vec![]);
    }
    for b in &blocks {
        init.features.insert(b.clone(), vec![]);
    }
    for (plate_idx, tower) in [&shuffled[..left], &shuffled[left..]].iter().enumerate() {
        if let Some(base) = tower.first() {
            init.scene.insert(Fact::new(
                "directly_on_plate",
                vec![base.clone(), plates[plate_idx].clone()],
            ));
            for pair in tower.windows(2) {
                init.scene.insert(Fact::new(
                    "directly_on",
                    vec![pair[1].clone(), pair[0].clone()],
                ));
            }
        }
    }
    refresh_flags(&mut init);

    let goal = [GroundAtom::new("MachineOn", vec![machine.clone()])].into();
    let mut objects: BTreeSet<ObjectRef> = blocks.iter().cloned().collect();
    objects.insert(robot);
    objects.insert(machine);
    objects.extend(plates.iter().cloned());
    GeneratedTask {
        task: Task {
            objects,
            init,
            goal,
        },
        unreachable: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Environment, ExecutionResult, SkillSpec};

    fn env() -> Environment {
        Environment::new(
            Box::new(BalanceSim),
            vec![
                SkillSpec::new("Pick", &["robot", "block"]),
                SkillSpec::new("Stack", &["robot", "block"]),
                SkillSpec::new("PutOnPlate", &["robot", "plate"]),
                SkillSpec::new("TurnMachineOn", &["robot", "plate", "plate"]),
            ],
        )
    }

    fn task() -> Task {
        // Two blocks stacked on plate-2; plate-3 empty.
        sample_task(
            &GenParams::Balance {
                train_blocks: vec![2],
                test_blocks: vec![4],
            },
            3,
            false,
        )
        .task
    }

    #[test]
    fn press_activates_only_when_balanced() {
        let task = task();
        let mut env = env();
        env.reset(&task);
        let r = ObjectRef::new("robot", "robot", 0);
        let p1 = ObjectRef::new("plate", "plate", 2);
        let p2 = ObjectRef::new("plate", "plate", 3);
        let press = GroundSkill {
            name: "TurnMachineOn".into(),
            args: vec![r.clone(), p1.clone(), p2.clone()],
        };
        // 2-0 split: press succeeds but the machine stays off.
        match env.execute(&press).unwrap() {
            ExecutionResult::Success(s) => {
                assert!(!s.scene.facts.iter().any(|f| f.relation == "machine_on"));
            }
            ExecutionResult::Failure => panic!("pressing the button always succeeds"),
        }
        // Move the top block to the empty plate: 1-1.
        let top: Vec<ObjectRef> = env
            .state()
            .unwrap()
            .scene
            .facts
            .iter()
            .filter(|f| f.relation == "clear")
            .map(|f| f.args[0].clone())
            .collect();
        assert_eq!(top.len(), 1);
        // Find the empty plate.
        let empty: ObjectRef = env
            .state()
            .unwrap()
            .scene
            .facts
            .iter()
            .find(|f| f.relation == "clear_plate")
            .map(|f| f.args[0].clone())
            .unwrap();
        env.execute(&GroundSkill {
            name: "Pick".into(),
            args: vec![r.clone(), top[0].clone()],
        })
        .unwrap();
        env.execute(&GroundSkill {
            name: "PutOnPlate".into(),
            args: vec![r.clone(), empty],
        })
        .unwrap();
        match env.execute(&press).unwrap() {
            ExecutionResult::Success(s) => {
                assert!(s.scene.facts.iter().any(|f| f.relation == "machine_on"));
            }
            ExecutionResult::Failure => panic!("press must succeed"),
        }
    }

    #[test]
    fn activation_matches_brute_force_count_on_random_states() {
        let params = GenParams::Balance {
            train_blocks: vec![2, 4],
            test_blocks: vec![4, 6],
        };
        for seed in 0..20 {
            let gt = sample_task(&params, seed, true);
            let state = &gt.task.init;
            let p1 = ObjectRef::new("plate", "plate", 2);
            let p2 = ObjectRef::new("plate", "plate", 3);
            // Brute force: count blocks per plate by chasing supports.
            let brute = |plate: &ObjectRef| -> usize {
                gt.task
                    .objects
                    .iter()
                    .filter(|o| &*o.type_name == "block")
                    .filter(|b| {
                        let mut cur = (*b).clone();
                        loop {
                            let support = state.scene.facts.iter().find(|f| {
                                (f.relation == "directly_on"
                                    || f.relation == "directly_on_plate")
                                    && f.args.first() == Some(&cur)
                            });
                            match support {
                                Some(f) if f.relation == "directly_on_plate" => {
                                    return &f.args[1] == plate
                                }
                                Some(f) => cur = f.args[1].clone(),
                                None => return false,
                            }
                        }
                    })
                    .count()
            };
            assert_eq!(plate_count(state, &p1), brute(&p1), "seed {seed}");
            assert_eq!(plate_count(state, &p2), brute(&p2), "seed {seed}");
            // Generated tasks never start balanced.
            assert_ne!(plate_count(state, &p1), plate_count(state, &p2));
        }
    }

    #[test]
    fn put_on_occupied_plate_fails() {
        let task = task();
        let mut env = env();
        env.reset(&task);
        let r = ObjectRef::new("robot", "robot", 0);
        let top: ObjectRef = env
            .state()
            .unwrap()
            .scene
            .facts
            .iter()
            .find(|f| f.relation == "clear")
            .map(|f| f.args[0].clone())
            .unwrap();
        let occupied: ObjectRef = env
            .state()
            .unwrap()
            .scene
            .facts
            .iter()
            .find(|f| f.relation == "directly_on_plate")
            .map(|f| f.args[1].clone())
            .unwrap();
        env.execute(&GroundSkill {
            name: "Pick".into(),
            args: vec![r.clone(), top],
        })
        .unwrap();
        assert_eq!(
            env.execute(&GroundSkill {
                name: "PutOnPlate".into(),
                args: vec![r, occupied],
            })
            .unwrap(),
            ExecutionResult::Failure
        );
    }
}

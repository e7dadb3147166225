//! Coffee: twist the jug upright, pick it, place it in the machine, turn
//! the machine on to fill it, then pour into each cup. Held-jug facts are
//! occluded, exercising context-conditioned perception.

use super::{GenParams, GeneratedTask};
use crate::abstraction::GroundAtom;
use crate::domain::{Fact, FeatureState, GroundSkill, ObjectRef, Simulator, Task};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const JUG_ROT: usize = 0;
const ROBOT_FINGERS: usize = 0;
const TILTED_ROT: f64 = 0.6;

pub struct CoffeeSim;

fn held_jug(state: &FeatureState, robot: &ObjectRef) -> Option<ObjectRef> {
    state
        .scene
        .facts
        .iter()
        .find(|f| f.relation == "held" && f.args.first() == Some(robot))
        .map(|f| f.args[1].clone())
}

impl Simulator for CoffeeSim {
    fn step(&self, state: &FeatureState, skill: &GroundSkill) -> Option<FeatureState> {
        let robot = state.objects_of_type("robot").into_iter().next()?;
        let fingers = state.feature(&robot, ROBOT_FINGERS)?;
        match skill.name.as_str() {
            "Twist" => {
                let jug = skill.args.get(1)?.clone();
                if fingers <= 0.5 {
                    return None; // needs a free gripper
                }
                let mut next = state.clone();
                next.set_feature(&jug, JUG_ROT, 0.0);
                Some(next)
            }
            "PickJug" => {
                let jug = skill.args.get(1)?.clone();
                if fingers <= 0.5 || state.feature(&jug, JUG_ROT)?.abs() > 0.1 {
                    return None;
                }
                let mut next = state.clone();
                next.set_feature(&robot, ROBOT_FINGERS, 0.0);
                // The arm occludes the grasp: the fact is true but not
                // directly observable.
                next.scene
                    .insert_occluded(Fact::new("held", vec![robot.clone(), jug]));
                Some(next)
            }
            "PlaceJugInMachine" => {
                let jug = skill.args.get(1)?.clone();
                let machine = skill.args.get(2)?.clone();
                let held = Fact::new("held", vec![robot.clone(), jug.clone()]);
                if !state.scene.holds(&held) {
                    return None;
                }
                let mut next = state.clone();
                next.scene.remove(&held);
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                next.scene
                    .insert(Fact::new("in_machine", vec![jug, machine]));
                Some(next)
            }
            "TurnMachineOn" => {
                let machine = skill.args.get(1)?.clone();
                let jug = state
                    .scene
                    .facts
                    .iter()
                    .find(|f| f.relation == "in_machine" && f.args.get(1) == Some(&machine))
                    .map(|f| f.args[0].clone())?;
                let mut next = state.clone();
                next.scene.insert(Fact::new("jug_filled", vec![jug]));
                Some(next)
            }
            "Pour" => {
                let jug = skill.args.get(1)?.clone();
                let cup = skill.args.get(2)?.clone();
                let held = Fact::new("held", vec![robot.clone(), jug.clone()]);
                let filled = Fact::new("jug_filled", vec![jug.clone()]);
                if !state.scene.holds(&held) || !state.scene.holds(&filled) {
                    return None;
                }
                let mut next = state.clone();
                next.scene.insert(Fact::new("cup_filled", vec![cup]));
                next.scene.remove(&filled);
                next.scene.remove(&held);
                next.set_feature(&robot, ROBOT_FINGERS, 1.0);
                // Pouring leaves the jug tilted on the table, away from
                // the machine bay.
                next.set_feature(&jug, JUG_ROT, TILTED_ROT);
                let stale: Vec<Fact> = next
                    .scene
                    .facts
                    .iter()
                    .filter(|f| f.relation == "in_machine" && f.args.first() == Some(&jug))
                    .cloned()
                    .collect();
                for f in stale {
                    next.scene.remove(&f);
                }
                Some(next)
            }
            _ => None,
        }
    }
}

pub fn sample_task(params: &GenParams, seed: u64, test: bool) -> GeneratedTask {
    let cup_counts = match params {
        GenParams::Coffee {
            train_cups,
            test_cups,
        } => {
            if test {
                test_cups
            } else {
                train_cups
            }
        }
        _ => unreachable!("coffee sampler called with foreign params"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cups = cup_counts[rng.gen_range(0..cup_counts.len())];
    let robot = ObjectRef::new("robot", "robot", 0);
    let jug = ObjectRef::new("jug", "jug", 1);
    let machine = ObjectRef::new("machine", "coffee_machine", 2);
    let cups: Vec<ObjectRef> = (0..n_cups)
        .map(|i| ObjectRef::new("cup", "cup", 3 + i as u32))
        .collect();

    let mut init = FeatureState::new();
    init.features.insert(robot.clone(), vec![1.0]);
    let rot = if rng.gen_bool(0.5) { TILTED_ROT } else { 0.0 };
    init.features.insert(jug.clone(), vec![rot]);
    init.features.insert(machine.clone(), vec![]);
    for c in &cups {
        init.features.insert(c.clone(), vec![]);
    }

    let goal: BTreeSet<GroundAtom> = cups
        .iter()
        .map(|c| GroundAtom::new("CupFilled", vec![c.clone()]))
        .collect();

    let mut objects: BTreeSet<ObjectRef> = cups.iter().cloned().collect();
    objects.insert(robot);
    objects.insert(jug);
    objects.insert(machine);
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
            Box::new(CoffeeSim),
            vec![
                SkillSpec::new("Twist", &["robot", "jug"]),
                SkillSpec::new("PickJug", &["robot", "jug"]),
                SkillSpec::new(
                    "PlaceJugInMachine",
                    &["robot", "jug", "coffee_machine"],
                ),
                SkillSpec::new("TurnMachineOn", &["robot", "coffee_machine"]),
                SkillSpec::new("Pour", &["robot", "jug", "cup"]),
            ],
        )
    }

    fn tilted_task() -> Task {
        let robot = ObjectRef::new("robot", "robot", 0);
        let jug = ObjectRef::new("jug", "jug", 1);
        let machine = ObjectRef::new("machine", "coffee_machine", 2);
        let cup = ObjectRef::new("cup", "cup", 3);
        let mut init = FeatureState::new();
        init.features.insert(robot.clone(), vec![1.0]);
        init.features.insert(jug.clone(), vec![TILTED_ROT]);
        init.features.insert(machine.clone(), vec![]);
        init.features.insert(cup.clone(), vec![]);
        let goal = [GroundAtom::new("CupFilled", vec![cup.clone()])].into();
        Task {
            objects: [robot, jug, machine, cup].into(),
            init,
            goal,
        }
    }

    #[test]
    fn full_brewing_sequence_fills_the_cup() {
        let task = tilted_task();
        let mut env = env();
        env.reset(&task);
        let r = ObjectRef::new("robot", "robot", 0);
        let j = ObjectRef::new("jug", "jug", 1);
        let m = ObjectRef::new("machine", "coffee_machine", 2);
        let c = ObjectRef::new("cup", "cup", 3);
        let run = |env: &mut Environment, name: &str, args: Vec<ObjectRef>| {
            match env
                .execute(&GroundSkill {
                    name: name.into(),
                    args,
                })
                .unwrap()
            {
                ExecutionResult::Success(s) => s,
                ExecutionResult::Failure => panic!("{name} failed"),
            }
        };
        // Cannot pick a tilted jug.
        assert_eq!(
            env.execute(&GroundSkill {
                name: "PickJug".into(),
                args: vec![r.clone(), j.clone()],
            })
            .unwrap(),
            ExecutionResult::Failure
        );
        run(&mut env, "Twist", vec![r.clone(), j.clone()]);
        let s = run(&mut env, "PickJug", vec![r.clone(), j.clone()]);
        let held = Fact::new("held", vec![r.clone(), j.clone()]);
        assert!(s.scene.holds(&held));
        assert!(s.scene.is_occluded(&held));
        run(
            &mut env,
            "PlaceJugInMachine",
            vec![r.clone(), j.clone(), m.clone()],
        );
        // Pour with an empty jug fails (the jug is not even held).
        assert_eq!(
            env.execute(&GroundSkill {
                name: "Pour".into(),
                args: vec![r.clone(), j.clone(), c.clone()],
            })
            .unwrap(),
            ExecutionResult::Failure
        );
        run(&mut env, "TurnMachineOn", vec![r.clone(), m.clone()]);
        let s = run(&mut env, "PickJug", vec![r.clone(), j.clone()]);
        // Picking from the machine bay does not clear the bay fact.
        assert!(s
            .scene
            .holds(&Fact::new("in_machine", vec![j.clone(), m.clone()])));
        let s = run(&mut env, "Pour", vec![r.clone(), j.clone(), c.clone()]);
        assert!(s.scene.holds(&Fact::new("cup_filled", vec![c])));
        assert!(!s.scene.holds(&Fact::new("jug_filled", vec![j.clone()])));
        assert!(!s.scene.holds(&Fact::new("in_machine", vec![j, m])));
    }

    #[test]
    fn machine_needs_a_jug() {
        let task = tilted_task();
        let mut env = env();
        env.reset(&task);
        let r = ObjectRef::new("robot", "robot", 0);
        let m = ObjectRef::new("machine", "coffee_machine", 2);
        assert_eq!(
            env.execute(&GroundSkill {
                name: "TurnMachineOn".into(),
                args: vec![r, m],
            })
            .unwrap(),
            ExecutionResult::Failure
        );
    }
}

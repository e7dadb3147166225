// temporary probe
use symworld::envs::make_domain;
use symworld::learner::TransitionDataset;
use symworld::online::*;
use symworld::domain::Task;
use std::time::Instant;

fn main() {
    let (domain, mut env, generator) = make_domain("blocks", 0).unwrap();
    let perceiver = domain.perceiver(0.0, 0);
    let cfg = OnlineConfig { n_abstract: domain.n_abstract, ..Default::default() };
    let test_tasks = generator.test_tasks(1000, 50);
    let t0 = Instant::now();
    let tasks: Vec<Task> = generator.train_tasks(0).into_iter().map(|t| t.task).collect();
    let result = run_online(
        &mut env, &tasks,
        domain.initial_psi(), domain.initial_operators.clone(),
        TransitionDataset::default(), &domain, &perceiver, &cfg,
        &ProposerMode::Scripted,
    );
    println!("learning took {:?}", t0.elapsed());
    for r in &result.trace {
        println!("iter {} rho={:.2} nu={} psi={} cand={} ops={} proposed={}",
            r.iteration, r.solve_rate, r.failed_plans, r.psi_size, r.candidate_count,
            r.operator_count, r.proposed);
    }
    println!("psi_best: {:?}", result.psi_best.exposed);
    println!("ops: {}", result.ops_best.len());
    // exact-match check against oracle ops
    let mut matched = 0;
    for oracle_op in &domain.oracle_operators {
        if result.ops_best.iter().any(|op| op.isomorphic(oracle_op)) { matched += 1; }
    }
    println!("oracle ops matched: {}/{}", matched, domain.oracle_operators.len());
    let eval = evaluate(&result.psi_best, &result.ops_best, &mut env, &test_tasks, &perceiver, &domain, &cfg);
    println!("LEARNED eval solve_rate={} plans_mean={}", eval.solve_rate, eval.plans_used_mean);
}

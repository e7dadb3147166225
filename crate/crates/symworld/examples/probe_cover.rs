// temporary probe
use symworld::envs::make_domain;
use symworld::learner::TransitionDataset;
use symworld::online::*;
use symworld::domain::Task;

fn main() {
    let (domain, mut env, generator) = make_domain("cover", 0).unwrap();
    let perceiver = domain.perceiver(0.0, 0);
    let tasks: Vec<Task> = generator.train_tasks(0).into_iter().map(|t| t.task).collect();
    let cfg = OnlineConfig { n_abstract: domain.n_abstract, ..Default::default() };
    let result = run_online(
        &mut env, &tasks,
        domain.initial_psi(), domain.initial_operators.clone(),
        TransitionDataset::default(), &domain, &perceiver, &cfg,
        &ProposerMode::Scripted,
    );
    for r in &result.trace {
        println!("iter {} rho={:.2} nu={} psi={} cand={} ops={} proposed={} [{}ms]",
            r.iteration, r.solve_rate, r.failed_plans, r.psi_size, r.candidate_count,
            r.operator_count, r.proposed, r.wall_time_ms);
    }
    println!("best rho={} nu={}", result.solve_rate_best, result.failed_plans_best);
    println!("psi_best: {:?}", result.psi_best.exposed);
    for op in &result.ops_best {
        print!("{}", symworld::listing::format_operator(op));
    }
    let test_tasks = generator.test_tasks(1000, 50);
    let eval = evaluate(&result.psi_best, &result.ops_best, &mut env, &test_tasks, &perceiver, &domain, &cfg);
    println!("eval solve_rate={} plans_used_mean={}", eval.solve_rate, eval.plans_used_mean);
}

//! Desk-scale learning smoke tests (criteria 7 and 8).
//!
//! One long test, because criterion 8 continues training the learner that
//! criterion 7 produced. Phase one trains the default desk configuration
//! solo on the bundled oval and checks that evaluation progress improves at
//! least 3x over the epoch-10 policy and that the agent laps cleanly in at
//! least 8 of 10 evaluation episodes. Phase two adds an opponent-count
//! curriculum for another 1000 epochs, selects a checkpoint under the
//! collision ceiling, and requires the selected policy to beat its starting
//! grid slot in at least half of 50 races against derated opponents.

use super::*;
use raceline::eval::{
    run_eval_episode_observed, select_checkpoint, EpisodeResult, SelectionRule,
};

/// Drive `epochs` epochs of the channel harness with one fresh worker
/// thread per seed, continuing whatever state `learner` and `buffer`
/// already hold.
fn run_phase(
    learner: &mut Learner<f32>,
    buffer: &mut ReplayBuffer,
    track: &Arc<TrackDef>,
    race: &RaceConfig,
    opponent_counts: &[usize],
    seeds: &[u64],
    epochs: u64,
    hash: u64,
) {
    let mut links: Vec<Box<dyn Link>> = Vec::new();
    let mut joins = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let (trainer_end, mut worker_end) = channel_pair();
        links.push(Box::new(trainer_end));
        let mut wcfg = worker_cfg(i as u32, seed, hash, race.clone(), 1);
        wcfg.opponent_counts = opponent_counts.to_vec();
        let wtrack = track.clone();
        joins.push(std::thread::spawn(move || {
            run_worker(wtrack, spec(), &wcfg, &mut worker_end).unwrap()
        }));
    }
    run_trainer(
        learner,
        buffer,
        &mut links,
        &trainer_cfg(epochs, 1, hash),
        &mut |_| {},
    )
    .unwrap();
    for j in joins {
        j.join().unwrap();
    }
}

/// Deterministic evaluation episode returning the agent's final track
/// progress (meters) and whether it completed every lap with the
/// three-tire off-track clock still at zero.
fn eval_progress(
    actor: &ActorNet<f32>,
    track: &Arc<TrackDef>,
    race: &RaceConfig,
    seed: u64,
) -> (f64, bool) {
    let mut progress = 0.0;
    let mut off_clock = 0.0;
    let r = run_eval_episode_observed(
        actor,
        track.clone(),
        &spec(),
        race,
        seed,
        "smoke",
        &mut |env, _, _| {
            progress = env.progress(0);
            off_clock = env.car_state(0).off_track_clock;
        },
    )
    .unwrap();
    (progress, r.finished && off_clock == 0.0)
}

#[test]
fn c07_c08_desk_learning_smoke() {
    let t0 = Instant::now();
    let cfg = RunConfig::default();
    let track = Arc::new(cfg.load_track().unwrap());
    let hash = cfg.config_hash();
    let train_race = cfg.train_race_config();
    let eval_solo = RaceConfig {
        n_opponents: 0,
        ..cfg.eval_race_config()
    };
    let seeds: Vec<u64> = (0..2).map(|i| cfg.worker_seed(i)).collect();

    let mut learner = Learner::<f32>::new(cfg.learner_config());
    let mut buffer = ReplayBuffer::new(cfg.learner.replay_capacity);

    // ----- criterion 7: solo desk run, <= 500 epochs total -----
    run_phase(
        &mut learner, &mut buffer, &track, &train_race, &[], &seeds, 10, hash,
    );
    let epoch10_actor = learner.actor.clone();
    let late_seeds: Vec<u64> = seeds.iter().map(|s| s.wrapping_add(0x10)).collect();
    run_phase(
        &mut learner, &mut buffer, &track, &train_race, &[], &late_seeds, 490, hash,
    );

    let mut base_sum = 0.0;
    let mut final_sum = 0.0;
    let mut clean = 0;
    for k in 0..10u64 {
        let seed = cfg.eval.seed_base + k;
        let (p, _) = eval_progress(&epoch10_actor, &track, &eval_solo, seed);
        base_sum += p;
        let (p, clean_lap) = eval_progress(&learner.actor, &track, &eval_solo, seed);
        final_sum += p;
        clean += clean_lap as usize;
    }
    let base_mean = base_sum / 10.0;
    let final_mean = final_sum / 10.0;
    println!(
        "c07: epoch-10 mean progress {base_mean:.2} m, trained {final_mean:.2} m, \
         clean laps {clean}/10, elapsed {:.0}s",
        t0.elapsed().as_secs_f64()
    );
    assert!(
        final_mean >= 3.0 * base_mean,
        "trained progress {final_mean:.2} m is not 3x the epoch-10 baseline {base_mean:.2} m"
    );
    assert!(
        clean >= 8,
        "clean full laps {clean}/10 < 8 (lap finished with off-track clock at zero)"
    );

    // ----- criterion 8: opponent curriculum, +1000 epochs -----
    let comp_race = RaceConfig {
        n_opponents: 3,
        ..train_race.clone()
    };
    let curriculum = [0usize, 1, 2, 3];
    let eval_comp = RaceConfig {
        n_opponents: 3,
        opponent_derate: 0.8,
        start_mode: StartMode::BackOfGrid,
        ..cfg.eval_race_config()
    };
    let grid_slot = eval_comp.n_opponents + 1;

    let mut snapshots: Vec<(String, ActorNet<f32>)> = Vec::new();
    for chunk in 0..5u64 {
        let chunk_seeds: Vec<u64> = seeds
            .iter()
            .map(|s| s.wrapping_add(0x100 + chunk))
            .collect();
        run_phase(
            &mut learner, &mut buffer, &track, &comp_race, &curriculum, &chunk_seeds, 200,
            hash,
        );
        snapshots.push((format!("epoch_{:06}", learner.epoch), learner.actor.clone()));
    }

    // Selection pass: a handful of scored episodes per snapshot, then the
    // collision-ceiling rule picks the candidate.
    let mut results: Vec<EpisodeResult> = Vec::new();
    for (name, actor) in &snapshots {
        for k in 0..6u64 {
            let mut r = run_eval_episode_observed(
                actor,
                track.clone(),
                &spec(),
                &eval_comp,
                cfg.eval.seed_base + 50 + k,
                name,
                &mut |_, _, _| {},
            )
            .unwrap();
            r.checkpoint = name.clone();
            results.push(r);
        }
    }
    let rule = SelectionRule {
        collision_time_ceiling_s: cfg.eval.collision_ceiling_s,
    };
    let sel = select_checkpoint(&results, &rule).unwrap();
    let selected = &snapshots
        .iter()
        .find(|(n, _)| *n == sel.checkpoint)
        .unwrap()
        .1;
    println!(
        "c08: selected {} (margin {:.2} m, collisions {:.2} s, fallback {})",
        sel.checkpoint, sel.mean_winning_margin_m, sel.mean_collision_time_s, sel.fallback
    );

    let mut improved = 0;
    for k in 0..50u64 {
        let r = run_eval_episode_observed(
            selected,
            track.clone(),
            &spec(),
            &eval_comp,
            cfg.eval.seed_base + 100 + k,
            "selected",
            &mut |_, _, _| {},
        )
        .unwrap();
        improved += (r.final_place < grid_slot) as usize;
    }
    println!(
        "c08: improved over grid slot {grid_slot} in {improved}/50 episodes, \
         elapsed {:.0}s",
        t0.elapsed().as_secs_f64()
    );
    assert!(
        improved * 2 >= 50,
        "selected checkpoint beat its grid slot in only {improved}/50 episodes"
    );
}

//! Decision makers that drive an [`Env`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent;
use crate::error::Result;
use crate::sim::Env;
use crate::warehouse::NodeId;

/// Something that chooses a joint action for the uncommitted agents.
pub trait Controller {
    /// Called after every [`Env::reset`].
    fn begin_episode(&mut self, env: &Env, seed: u64) -> Result<()>;

    /// One entry per agent; committed agents must get `None`.
    fn act(&mut self, env: &Env) -> Result<Vec<Option<NodeId>>>;

    fn name(&self) -> &str;
}

/// Uniform choice among each agent's legal targets.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Controller for RandomPolicy {
    fn begin_episode(&mut self, _env: &Env, seed: u64) -> Result<()> {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a11);
        Ok(())
    }

    fn act(&mut self, env: &Env) -> Result<Vec<Option<NodeId>>> {
        let g = &env.warehouse().graph;
        let s = env.state();
        let mut actions = vec![None; env.num_agents()];
        for i in env.uncommitted() {
            let legal: Vec<NodeId> = agent::mask_for(g, s, i).legal().collect();
            if !legal.is_empty() {
                actions[i] = Some(legal[self.rng.random_range(0..legal.len())]);
            }
        }
        Ok(actions)
    }

    fn name(&self) -> &str {
        "random"
    }
}

/// Runs one episode to completion and returns the final metrics.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    seed: u64,
) -> Result<crate::sim::MetricsReport> {
    env.reset(seed);
    controller.begin_episode(env, seed)?;
    while !env.is_done() {
        let actions = controller.act(env)?;
        env.advance(&actions)?;
    }
    env.episode_metrics()
}

#!/usr/bin/env python3
"""Training the phase-competition Q-network with DQN.

The network embeds each movement's (queue, green) pair with shared
weights, pools movements into phase representations, scores every ordered
phase pair with a shared competition layer, and sums each phase's scores
into its Q-value.  The trainer interleaves epsilon-greedy rollouts with
one TD update per decision (frozen target copy, clipped gradients).

Shortened horizon here so the demo runs in ~15s; drop the overrides for a
full-scale run.
"""

import numpy as np

import signalshift as ss

config = ss.IntersectionConfig(horizon=900.0, drain=300.0)

# one skewed scenario: 90% of demand on phase 1's movements (1 and 5)
volumes = np.array([3, 81, 3, 3, 3, 81, 3, 3])
flow = ss.sample_arrivals(volumes, config.horizon, seed=11, label="skewed")
print(f"scenario: {len(flow)} vehicles, 90% on movements 2 and 6 (phase 1)\n")

hyper = ss.DqnHyper(episodes=40, seed=0)
print(f"training {hyper.episodes} episodes "
      f"(gamma={hyper.gamma}, lr={hyper.lr}, batch={hyper.batch_size}, "
      f"eps {hyper.epsilon_start}->{hyper.epsilon_end})...")
result = ss.train_dqn(config, [flow], hyper)
losses = [row.loss for row in result.log]
tenth = len(losses) // 10
print(f"{result.updates} updates in {result.wall_time_s:.1f}s; "
      f"TD loss first 10%: {np.mean(losses[:tenth]):.2f}  "
      f"last 10%: {np.mean(losses[-tenth:]):.2f}\n")

for name, policy in [
    ("fixed_time  ", ss.FixedTimePolicy(config)),
    ("max_pressure", ss.MaxPressurePolicy(config)),
    ("trained dqn ", ss.GreedyPolicy(result.params, config)),
]:
    episode = ss.run_episode(config, flow, policy, seed=0)
    print(f"  {name}  avg travel {episode.avg_travel_time:7.1f}s   "
          f"residual {episode.residual_count}")

ss.save_params(result.params, "dqn_checkpoint.txt")
print("\ncheckpoint saved to dqn_checkpoint.txt (bit-exact round trip)")

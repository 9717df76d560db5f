"""Attack a 32-16-16-3 tanh MLP from seeded source/target pairs with the
identity projection and record validity and MSE checkpoints."""
from dataclasses import asdict, dataclass

import numpy as np
from _common import parse_config, write_csv, write_json

from attacklab.attack import AttackConfig, run_attack
from attacklab.projections import identity_projection
from attacklab.scenarios import make_pairs, mlp_victim


@dataclass
class Config:
    out: str = "results/mlp"
    pairs: int = 20
    budget: int = 5000
    theta: float = 1e-3
    victim_seed: int = 0
    pair_seed: int = 1


def main(cfg: Config) -> int:
    oracle, truth, _ = mlp_victim(seed=cfg.victim_seed)
    pairs = make_pairs(truth, 32, cfg.pairs, seed=cfg.pair_seed)
    checkpoints = [250, 500, 1000, 2500, 5000]
    rows, valid, total = [], 0, 0
    for i, p in enumerate(pairs):
        tr = run_attack(oracle, identity_projection, p.x_src, p.x_tgt,
                        AttackConfig(budget=cfg.budget, theta=cfg.theta, seed=i, keep_points=True))
        valid += sum(truth.value(x) >= 0 for x in tr.points)
        total += len(tr.points)
        rows.append([i] + [tr.mse_at(q) for q in checkpoints] + [tr.final_mse])
    finals = np.array([r[-1] for r in rows])
    write_csv(f"{cfg.out}/mse_checkpoints.csv", ["pair"] + [f"mse@{q}" for q in checkpoints] + ["final"], rows)
    summary = {"config": asdict(cfg), "validity": [valid, total],
               "converged": int(np.sum(finals < 1e-4)), "median_final_mse": float(np.median(finals))}
    write_json(f"{cfg.out}/summary.json", summary)
    print(summary)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(parse_config(Config, __doc__)))

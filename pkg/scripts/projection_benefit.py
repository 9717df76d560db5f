"""Identity versus orthonormal (n=64) projection on a 1024-dim victim whose
gradients live near a 64-dim subspace.  Paired seeds, median MSE curves and a
one-sided sign test on the final MSE."""
from dataclasses import asdict, dataclass

import numpy as np
from _common import parse_config, write_csv, write_json
from scipy.stats import binomtest

from attacklab.attack import AttackConfig, run_attack
from attacklab.projections import identity_projection, orthonormal_projection
from attacklab.scenarios import make_pairs, subspace_mlp_victim


@dataclass
class Config:
    out: str = "results/projection"
    m: int = 1024
    n: int = 64
    pairs: int = 20
    budget: int = 20_000
    gap: float = 1.0
    victim_seed: int = 0
    pair_seed: int = 2


def main(cfg: Config) -> int:
    oracle, truth, _, Q = subspace_mlp_victim(m=cfg.m, k=cfg.n, seed=cfg.victim_seed)
    pairs = make_pairs(truth, cfg.m, cfg.pairs, seed=cfg.pair_seed, gap=cfg.gap,
                       src_distance=(4.0, 8.0), src_push=0.01)
    grid = np.linspace(0, cfg.budget, 41)[1:].astype(int)
    curves = {"identity": [], "orthonormal": []}
    factories = {"identity": identity_projection,
                 "orthonormal": lambda xb: orthonormal_projection(Q, xb)}
    for i, p in enumerate(pairs):
        for name, fac in factories.items():
            tr = run_attack(oracle, fac, p.x_src, p.x_tgt, AttackConfig(budget=cfg.budget, seed=i))
            curves[name].append([tr.mse_at(q) for q in grid])
        print(f"pair {i}: identity {curves['identity'][-1][-1]:.4e}  orthonormal {curves['orthonormal'][-1][-1]:.4e}")
    med = {k: np.median(np.array(v), axis=0) for k, v in curves.items()}
    write_csv(f"{cfg.out}/median_mse_curve.csv", ["queries", "identity", "orthonormal"],
              [(q, a, b) for q, a, b in zip(grid, med["identity"], med["orthonormal"])])
    fi = np.array([c[-1] for c in curves["identity"]])
    fo = np.array([c[-1] for c in curves["orthonormal"]])
    wins = int(np.sum(fo < fi))
    summary = {"config": asdict(cfg), "median_final_identity": float(np.median(fi)),
               "median_final_orthonormal": float(np.median(fo)), "floor_mse": cfg.gap ** 2 / cfg.m,
               "wins": wins, "sign_test_p": binomtest(wins, len(fi), alternative="greater").pvalue}
    write_json(f"{cfg.out}/summary.json", summary)
    print(summary)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(parse_config(Config, __doc__)))

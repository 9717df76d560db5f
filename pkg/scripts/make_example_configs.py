"""Write example victim / projection spec files for the command line tool."""
from dataclasses import dataclass

import numpy as np
from _common import parse_config, write_json

from attacklab.numerics import make_rng, sample_orthonormal_frame
from attacklab.scenarios import mlp_victim


@dataclass
class Config:
    out: str = "configs"
    seed: int = 0


def main(cfg: Config) -> int:
    write_json(f"{cfg.out}/linear2d.json", {"kind": "linear", "w": [1.0, 0.0], "b": [0.0, 0.0]})
    _, _, layers = mlp_victim(seed=cfg.seed)
    write_json(f"{cfg.out}/mlp32.json", {"kind": "mlp", "activation": "tanh", "y_ben": 0, "y_mal": 1,
                                         "layers": [{"w": W, "b": c} for W, c in layers]})
    W = sample_orthonormal_frame(32, 8, make_rng(cfg.seed))
    write_json(f"{cfg.out}/orthonormal32x8.json", {"kind": "orthonormal", "W": W})
    write_json(f"{cfg.out}/pairs2d.json", [{"x_src": [0.002, 3.0], "x_tgt": [-1e-6, 0.0]}])
    write_json(f"{cfg.out}/profile.json", {"L_f": 1.0, "l_f": 1.0, "beta_f": 0.0, "L_S": 1.0, "beta_S": 1.0,
                                           "delta": 0.05, "n": 16, "B": 16, "proj_align": 0.7,
                                           "grad_norm": 1.0})
    print(f"wrote example configs to {cfg.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(parse_config(Config, __doc__)))

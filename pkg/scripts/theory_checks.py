"""Closed-form and Monte Carlo checks of the cosine guarantees.

Writes one JSON report per check plus CSV tables for the B sweep and the
omega-proxy scatter into ``--out``.
"""
from dataclasses import asdict, dataclass

from _common import parse_config, write_csv, write_json

from attacklab import theory


@dataclass
class Config:
    out: str = "results/theory"
    seed: int = 0
    sandwich_trials: int = 2000
    qc_trials: int = 200
    corr_trials: int = 500


def main(cfg: Config) -> int:
    reports = {
        "cn": theory.verify_lemma4(200),
        **{f"lemma1_n{n}": theory.verify_lemma1(n, 100_000, rng=cfg.seed + n) for n in (2, 3, 16, 64)},
        "sandwich_linear": theory.verify_theorem1_sandwich("linear", cfg.sandwich_trials, cfg.seed),
        "sandwich_q01": theory.verify_theorem1_sandwich("quadratic", cfg.sandwich_trials, cfg.seed + 1,
                                                        omega_ratio=0.1),
        "sandwich_q03": theory.verify_theorem1_sandwich("quadratic", cfg.sandwich_trials, cfg.seed + 2,
                                                        omega_ratio=0.3),
        "qcfit": theory.fit_query_complexity(trials=cfg.qc_trials, rng=cfg.seed),
        "omegacorr": theory.omega_correlation_sweep(trials=cfg.corr_trials, rng=cfg.seed),
    }
    for name, rep in reports.items():
        rep["config"] = asdict(cfg)
        write_json(f"{cfg.out}/{name}.json", rep)
        print(f"{name:16s} {'pass' if rep['pass'] else 'FAIL'}  {rep['statistic']}")
    write_csv(f"{cfg.out}/cosine_vs_B.csv", ["B", "mean_cos", "stderr"],
              [(r["B"], r["mean_cos"], r["stderr"]) for r in reports["qcfit"]["table"]])
    write_csv(f"{cfg.out}/omega_proxy_scatter.csv", ["beta_S", "omega_proxy", "cos"],
              [(r["beta_S"], r["omega_proxy"], r["cos"]) for r in reports["omegacorr"]["rows"]])
    return 0 if all(r["pass"] for r in reports.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main(parse_config(Config, __doc__)))

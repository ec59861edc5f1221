#!/usr/bin/env python3
"""Run all four desk-scale studies and drop their tables under results/.

Thin wrapper over the library; equivalent CLI invocations are printed as it
goes. Expect roughly half an hour at the default desk scale.
"""

import argparse
import json
import time
from pathlib import Path

from exoticlab.bs_surface import MASK_SNP19
from exoticlab.dataset import FeatureLayout, generate_training_set
from exoticlab.experiments import (
    ControlledConfig,
    ModelRiskConfig,
    ParityConfig,
    controlled_experiment,
    make_pseudo_days,
    model_risk_experiment,
    parity_experiment,
    records_to_csv,
    sample_surface_panel,
    scatter_data,
    sensitivity_table,
    sensitivity_table_to_csv,
    train_parity_nets,
)
from exoticlab.market_models import SamplerConfig
from exoticlab.mca_calibration import CalibrationBudget
from exoticlab.neural_net import TrainConfig, train
from exoticlab.pricing_mc import McConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--scenarios", type=int, default=50)
    ap.add_argument("--training-rows", type=int, default=4000)
    ap.add_argument("--days", type=int, default=100)
    args = ap.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    print(f"# controlled study (barrier), seed {args.seed}")
    cfg = ControlledConfig(
        exotic_kind="knock_out_call",
        n_scenarios=args.scenarios,
        n_training_rows=args.training_rows,
        master_seed=args.seed,
        budget=CalibrationBudget(seed=args.seed),
        train=TrainConfig(seed=args.seed),
    )
    result = controlled_experiment(cfg)
    (out / "controlled_barrier_records.csv").write_text(records_to_csv(result.records))
    (out / "controlled_barrier_summary.json").write_text(
        json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    (out / "controlled_barrier_scatter.dat").write_text(scatter_data(result.records))
    fit = result.fit_pct
    print(f"  Y = {fit.intercept:.4f} + {fit.slope:.4f} X  (t = {fit.t_intercept:.2f}, {fit.t_slope:.2f})")

    print("# sensitivity table from the controlled study's surrogate family")
    ts = generate_training_set(
        "heston", "knock_out_call", args.training_rows, SamplerConfig(seed=args.seed),
        McConfig(num_paths=10_000, steps_per_year=120, seed=args.seed),
        seed=args.seed + 1,
    )
    fitted = train(ts.features, ts.targets, TrainConfig(seed=args.seed))
    from exoticlab.bs_surface import MASK_FULL

    layout = FeatureLayout.build("knock_out_call", MASK_FULL)
    panel = sample_surface_panel(200, "knock_out_call", SamplerConfig(seed=args.seed),
                                 args.seed + 2)
    table = sensitivity_table(fitted.net, fitted.normalizer, layout, panel, MASK_FULL)
    (out / "sensitivity_barrier.csv").write_text(sensitivity_table_to_csv(table))

    print(f"# parity study on {args.days} pseudo-days")
    pcfg = ParityConfig(n_training_rows=args.training_rows, master_seed=args.seed,
                        budget=CalibrationBudget(seed=args.seed),
                        train=TrainConfig(seed=args.seed))
    nets = train_parity_nets(pcfg)
    days = make_pseudo_days(args.days, SamplerConfig(seed=args.seed), args.seed)
    parity = parity_experiment(days, nets, pcfg)
    (out / "parity_summary.json").write_text(
        json.dumps(parity.summary(), indent=2, sort_keys=True) + "\n")
    print(f"  full-sample MAE: calibration {parity.mca_mae_full:.4f} vs surrogate {parity.vfa_mae_full:.4f}")

    print("# model-risk study (asian), two surrogate families")
    mcfg = ModelRiskConfig(exotic_kind="asian_call", master_seed=args.seed,
                           budget=CalibrationBudget(seed=args.seed),
                           train=TrainConfig(seed=args.seed))
    risk_days = make_pseudo_days(min(args.days, 25), SamplerConfig(seed=args.seed),
                                 args.seed + 3)
    risk = model_risk_experiment(risk_days, mcfg)
    (out / "modelrisk_asian_summary.json").write_text(
        json.dumps(risk.summary(), indent=2, sort_keys=True) + "\n")
    print(f"  mean diff {risk.mean_diff:.4f}, sd {risk.std_diff:.4f} (% of spot)")

    print(f"done in {time.time() - t0:.0f}s -> {out}/")


if __name__ == "__main__":
    main()

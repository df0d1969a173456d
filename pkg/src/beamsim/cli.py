"""Command-line entry points: validate-config, train-expert, run, sweep."""

import argparse
import sys

import yaml

from . import harness, macsim
from .errors import BeamsimError, ConfigurationError


def _add_overrides(p):
    p.add_argument("--policy", choices=macsim.POLICIES, help="override cfg policy")
    p.add_argument("--seeds", help="comma-separated run seeds, e.g. 1,2,3")
    p.add_argument("--load", help="comma-separated offered loads in Mbps")
    p.add_argument("--mobility", choices=harness.MOBILITY_MODELS)
    p.add_argument("--ttis", type=int, help="override tti_count")
    p.add_argument("--bundle", help="path to a trained expert bundle")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory for CSV artifacts")


def _apply_overrides(cfg, args):
    if getattr(args, "policy", None):
        cfg.policy = args.policy
    if getattr(args, "seeds", None):
        try:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            raise ConfigurationError(f"seeds: not integers: {args.seeds!r}") from None
    if getattr(args, "load", None):
        try:
            cfg.offered_loads_mbps = [float(s) for s in args.load.split(",") if s]
        except ValueError:
            raise ConfigurationError(f"load: not numbers: {args.load!r}") from None
    if getattr(args, "mobility", None):
        cfg.mobility_model = args.mobility
    if getattr(args, "ttis", None):
        cfg.tti_count = args.ttis
    if getattr(args, "bundle", None):
        cfg.bundle_path = args.bundle
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def build_parser():
    p = argparse.ArgumentParser(prog="beamsim",
                                description="mm-Wave NOMA association/beam-count simulator")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate-config", help="check a config document")
    v.add_argument("config")

    t = sub.add_parser("train-expert", help="offline expert training, writes a bundle")
    t.add_argument("config")
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", default="expert_bundle.json")

    r = sub.add_parser("run", help="run one policy over the configured seeds and loads")
    r.add_argument("config")
    _add_overrides(r)

    s = sub.add_parser("sweep", help="run all four policies")
    s.add_argument("config")
    _add_overrides(s)

    d = sub.add_parser("init-config", help="write the default config document")
    d.add_argument("--out", default="beamsim.yaml")
    return p


def cmd_validate(args):
    cfg = harness.load_config(args.config)
    # tql without a bundle is still a valid *document*; full validation
    # happens at run time when the policy actually needs the bundle.
    if cfg.policy != "tql" or cfg.bundle_path:
        cfg.validate()
    print(f"config ok: policy={cfg.policy} seeds={len(cfg.seeds)} "
          f"loads={cfg.offered_loads_mbps} ttis={cfg.tti_count}")
    return 0


def cmd_train_expert(args):
    cfg = harness.load_config(args.config)
    bundle, log = harness.train_expert(cfg, seed=args.seed, out_path=args.out)
    state = "converged" if bundle.converged else "NOT converged (budget exhausted)"
    print(f"expert training {state} after {len(log.rows)} TTIs; bundle -> {args.out}")
    return 0


def cmd_run(args):
    cfg = _apply_overrides(harness.load_config(args.config), args)
    agg = harness.run_experiment(cfg)
    for row in agg.per_load:
        print(f"{cfg.policy} load={row.load_mbps:g} Mbps: "
              f"rate={row.sum_rate_mbps_mean:.3f}±{row.sum_rate_mbps_ci95:.3f} Mbps "
              f"loss={row.loss_pct_mean:.2f}±{row.loss_pct_ci95:.2f} %")
    print(f"artifacts in {cfg.out_dir}")
    return 0


def cmd_sweep(args):
    base = _apply_overrides(harness.load_config(args.config), args)
    bundle = None
    for policy in macsim.POLICIES:
        cfg = harness.load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        cfg.policy = policy
        if policy == "tql":
            if not cfg.bundle_path:
                raise ConfigurationError(
                    "bundle_path: sweep includes tql and needs a trained bundle"
                )
        agg = harness.run_experiment(cfg)
        top = agg.per_load[-1]
        print(f"{policy}: rate@{top.load_mbps:g}Mbps = "
              f"{top.sum_rate_mbps_mean:.3f}±{top.sum_rate_mbps_ci95:.3f} Mbps")
    print(f"artifacts in {base.out_dir}")
    return 0


def cmd_init_config(args):
    with open(args.out, "w") as f:
        yaml.safe_dump(harness.default_config_dict(), f, sort_keys=False)
    print(f"wrote {args.out}")
    return 0


COMMANDS = {
    "validate-config": cmd_validate,
    "train-expert": cmd_train_expert,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "init-config": cmd_init_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BeamsimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

import os
import sys
import time
import logging
import argparse
import traceback

from helpers.init import init
from helpers.config_utils import ConfigError, load_config, resolve_config, write_resolved_config
from helpers.checkpoint_utils import load_checkpoint
from helpers.dp_utils import run_battery, write_reports
from helpers.sweep_utils import sweep
from helpers.training_utils import evaluate, final_window_mean, run_training
from helpers.matrix_game_utils import describe_game
from helpers.quantile_utils import NEUTRAL, RiskInterval
from helpers.messages.intro import print_intro
from helpers.messages.outro import print_outro

from constants.colors import RED, RESET, YELLOW, GREEN, MAGENTA
from constants.app_data import DP_REPORT_FILE, RESOLVED_CONFIG_FILE


def parse_arguments(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description="Risk-based optimistic exploration lab: train, sweep, verify, evaluate")
    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser("train", help="Train one run per seed from an experiment file")
    train.add_argument("--config", required=True, help="Path to the YAML experiment file")
    train.add_argument("--seed", type=int, default=None, help="Run only this seed")
    train.add_argument("--out", default=None, help="Output folder (overrides output_dir)")
    train.add_argument("--full-length", action="store_true", help="Use the full Predator & Prey training length")

    sweep_parser = subparsers.add_parser("sweep", help="Run every sweep policy for every seed and aggregate")
    sweep_parser.add_argument("--config", required=True, help="Path to the YAML experiment file")
    sweep_parser.add_argument("--out", default=None, help="Output folder (overrides output_dir)")
    sweep_parser.add_argument("--jobs", type=int, default=1, help="Worker processes")
    sweep_parser.add_argument("--full-length", action="store_true", help="Use the full Predator & Prey training length")

    verify = subparsers.add_parser("verify-dp", help="Run the distributional DP property battery")
    verify.add_argument("--seed", type=int, default=0, help="Battery seed")
    verify.add_argument("--trials", type=int, default=200, help="Random table pairs per MDP")
    verify.add_argument("--out", required=True, help="Folder for the report")

    evaluate_parser = subparsers.add_parser("eval", help="Greedy evaluation of a saved checkpoint")
    evaluate_parser.add_argument("--checkpoint", required=True, help="Checkpoint file written by train")
    evaluate_parser.add_argument("--episodes", type=int, default=10, help="Evaluation episodes")
    evaluate_parser.add_argument("--seed", type=int, default=0, help="Evaluation seed")
    return parser.parse_args(argv)


def _load(args):
    cfg = load_config(args.config, full_length=args.full_length)
    if args.out:
        cfg = cfg.with_overrides(output_dir=args.out)
    return cfg


def _game_summary(cfg):
    """Optimum and marginal-greedy play of a matrix game, empty for other environments."""
    if cfg.env.kind != "matrix":
        return {}
    game = cfg.env.matrix
    best, greedy = describe_game(game)
    return {
        "game optimum": f"{game.payoff[best]:g} at {best}",
        "marginal-greedy play": f"{greedy} pays {game.payoff[greedy]:g}",
    }


def command_train(args):
    cfg = _load(args)
    if args.seed is not None:
        cfg = cfg.with_overrides(seeds=(args.seed,))
    init(cfg.output_dir)
    print_intro("train", cfg.output_dir)
    write_resolved_config(cfg, os.path.join(cfg.output_dir, RESOLVED_CONFIG_FILE))

    summary = _game_summary(cfg)
    for seed in cfg.seeds:
        print(f"{MAGENTA}Training seed {seed} ({cfg.policy.kind}, {cfg.total_steps} steps)...{RESET}")
        rows = run_training(cfg, seed)
        summary[f"seed {seed} final return"] = f"{final_window_mean(rows, cfg.total_steps):.3f}"
        summary[f"seed {seed} episodes"] = len(rows)
    return cfg.output_dir, summary, True


def command_sweep(args):
    cfg = _load(args)
    init(cfg.output_dir)
    print_intro("sweep", cfg.output_dir)
    write_resolved_config(cfg, os.path.join(cfg.output_dir, RESOLVED_CONFIG_FILE))

    runs, _ = sweep(cfg, cfg.output_dir, jobs=args.jobs)
    summary = _game_summary(cfg)
    for policy, group in runs.groupby("policy", sort=False):
        ok = group[group["status"] == "ok"]
        summary[f"{policy} final return"] = f"{ok['final_return'].mean():.3f} over {len(ok)}/{len(group)} runs"
    return cfg.output_dir, summary, bool((runs["status"] == "ok").all())


def command_verify_dp(args):
    init(args.out)
    print_intro("verify-dp", args.out)
    reports = run_battery(seed=args.seed, trials=args.trials)
    write_reports(reports, os.path.join(args.out, DP_REPORT_FILE))

    failed = [r for r in reports if not r.passed]
    for report in failed:
        logging.error(f"Check {report.check} failed for mdp seed {report.mdp_seed}")
        print(f"{RED}✗ {report.check} failed (mdp seed {report.mdp_seed}){RESET}")
    if not failed:
        print(f"{GREEN}All {len(reports)} checks passed{RESET}")
    summary = {"checks": len(reports), "failed": len(failed)}
    return args.out, summary, not failed


def command_eval(args):
    out_dir = os.path.dirname(os.path.abspath(args.checkpoint))
    init(out_dir)
    print_intro("eval", out_dir)
    header, tables = load_checkpoint(args.checkpoint)
    cfg = resolve_config(header["config"])
    final = RiskInterval(*header["final_interval"])

    mean, sd = evaluate(tables, cfg.env, args.episodes, final, args.seed)
    neutral_mean, neutral_sd = evaluate(tables, cfg.env, args.episodes, NEUTRAL, args.seed)
    summary = {
        f"return at [{final.alpha:g}, {final.beta:g}]": f"{mean:.3f} +/- {sd:.3f}",
        "return at [0, 1]": f"{neutral_mean:.3f} +/- {neutral_sd:.3f}",
    }
    return out_dir, summary, True


COMMANDS = {
    "train": command_train,
    "sweep": command_sweep,
    "verify-dp": command_verify_dp,
    "eval": command_eval,
}


def main(argv=None):
    """
    Run one subcommand.

    Returns:
        int: Process exit code; 1 on errors or failed checks
    """
    args = parse_arguments(argv)
    start = time.time()
    try:
        output_dir, summary, ok = COMMANDS[args.command](args)

    except KeyboardInterrupt:
        print(f"\n{YELLOW}Process interrupted by user. Exiting...{RESET}")
        return 0

    except ConfigError as e:
        logging.error(f"Invalid config: {str(e)}")
        print(f"\n{RED}Invalid config: {str(e)}{RESET}")
        return 1

    except Exception as e:
        logging.error(f"{args.command} failed: {str(e)}")
        logging.error(traceback.format_exc())
        print(f"\n{RED}{args.command} failed: {str(e)}{RESET}")
        print("See log for details.")
        return 1

    elapsed = int(time.time() - start)
    print_outro(output_dir, summary, elapsed // 3600, (elapsed % 3600) // 60, elapsed % 60, ok=ok)
    return 0 if ok else 1


if __name__ == '__main__':
    sys.exit(main())

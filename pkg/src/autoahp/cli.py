"""Command-line entry point.

Subcommands map to pipeline stages, with JSON artifacts persisted between
them so every stage is independently rerunnable and inspectable:

    build         corpus -> dendrogram.json + hierarchy.json (+ embedded corpus)
    weigh         hierarchy -> weights.json (full audit)
    rank          weights -> scores.json + result.json + report.md
    run           build + weigh + rank
    eval          run a benchmark scenario and emit metrics.json/.csv
    gen-scenario  materialize a synthetic planted-topic scenario

Exit codes: 0 success, 2 configuration/usage, 3 corpus, 4 cluster,
5 hierarchy, 6 weights, 7 inference, 8 eval, 9 provider transport,
10 artifact validation, 1 unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import evalharness, pipeline
from .agents.base import ProviderConfig, make_provider
from .errors import (
    AhpError,
    ArtifactError,
    ClusterError,
    ConfigError,
    CorpusError,
    EvalError,
    HierarchyError,
    InferenceError,
    ProviderError,
    WeightsError,
)
from .hierarchy import DEFAULT_TAU
from .weights import DEFAULT_PANEL

log = logging.getLogger(__name__)

EXIT_CODES = [
    (ConfigError, 2),
    (CorpusError, 3),
    (ClusterError, 4),
    (HierarchyError, 5),
    (WeightsError, 6),
    (InferenceError, 7),
    (EvalError, 8),
    (ProviderError, 9),
    (ArtifactError, 10),
]


@dataclass
class RunConfig:
    """Effective configuration for pipeline commands.

    Precedence: command-line flags > config file > defaults.
    """

    goal: str = ""
    corpus: str = ""
    alternatives: str = ""
    k_max: int | None = None
    d_max: int | None = None
    tau: float = DEFAULT_TAU
    panel: list[str] = field(default_factory=lambda: list(DEFAULT_PANEL))
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    seed: int = 0
    out: str = "out"
    samples: int = 1
    min_paragraph_chars: int = 40
    report_prose: bool = False

    @classmethod
    def load(cls, args: argparse.Namespace) -> "RunConfig":
        config = cls()
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file missing: {path}")
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
            provider_data = data.pop("provider", None)
            if provider_data is not None:
                config.provider = ProviderConfig.from_dict(provider_data)
            known = set(cls.__dataclass_fields__)
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            for key, value in data.items():
                setattr(config, key, value)

        for key in (
            "goal",
            "corpus",
            "alternatives",
            "k_max",
            "d_max",
            "tau",
            "seed",
            "out",
            "samples",
        ):
            value = getattr(args, key.replace("-", "_"), None)
            if value is not None:
                setattr(config, key, value)
        if getattr(args, "provider", None):
            config.provider.kind = args.provider
        if getattr(args, "endpoint", None):
            config.provider.endpoint = args.endpoint
        if getattr(args, "model", None):
            config.provider.model = args.model
        if getattr(args, "panel_size", None):
            size = args.panel_size
            if size < 1:
                raise ConfigError("panel size must be >= 1")
            base = list(config.panel) or list(DEFAULT_PANEL)
            config.panel = [base[i % len(base)] + (f" #{i // len(base) + 1}" if i >= len(base) else "") for i in range(size)]
        config.provider.seed = config.seed
        return config

    def settings(self) -> pipeline.PipelineSettings:
        return pipeline.PipelineSettings(
            goal=self.goal,
            corpus_path=self.corpus,
            alternatives_path=self.alternatives,
            k_max=self.k_max,
            d_max=self.d_max,
            tau=self.tau,
            panel=list(self.panel),
            seed=self.seed,
            min_paragraph_chars=self.min_paragraph_chars,
            samples=self.samples,
            out_dir=self.out,
            report_prose=self.report_prose,
        )


def _require(config: RunConfig, *names: str) -> None:
    for name in names:
        if not getattr(config, name):
            raise ConfigError(f"missing required setting: {name}")


def _print_tree(hierarchy) -> None:
    for criterion_id in sorted(
        hierarchy.criteria, key=lambda c: (c.count("."), c)
    ):
        criterion = hierarchy.criteria[criterion_id]
        indent = "  " * criterion.depth
        print(f"{indent}{criterion.id}  {criterion.label}")


def cmd_build(args: argparse.Namespace) -> int:
    config = RunConfig.load(args)
    _require(config, "goal", "corpus")
    provider = make_provider(config.provider)
    outcome = pipeline.stage_build(config.settings(), provider)
    print(
        f"built hierarchy: {len(outcome.hierarchy.criteria)} criteria, "
        f"depth {outcome.hierarchy.depth()}, budget "
        f"(k_max={outcome.budget.k_max}, d_max={outcome.budget.d_max}, "
        f"{outcome.budget.source})"
    )
    _print_tree(outcome.hierarchy)
    print(f"artifacts written to {config.out}/")
    return 0


def cmd_weigh(args: argparse.Namespace) -> int:
    config = RunConfig.load(args)
    _require(config, "out")
    provider = make_provider(config.provider)
    build = pipeline.load_build_outcome(config.out)
    _, audits = pipeline.stage_weigh(config.settings(), provider, build)
    for node_id, audit in sorted(audits.items()):
        print(
            f"node {node_id}: consensus CR {audit.cr_before.cr:.4f} "
            f"-> snapped CR {audit.cr_snapped.cr:.4f} "
            f"({'optimized' if audit.optimized else 'eigenvector'})"
        )
    print(f"weights written to {config.out}/weights.json")
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    config = RunConfig.load(args)
    _require(config, "alternatives", "out")
    provider = make_provider(config.provider)
    build = pipeline.load_build_outcome(config.out)
    out = Path(config.out)
    weights = pipeline.load_weights(out / pipeline.ARTIFACTS["weights"])
    audits = pipeline.load_audits(out / pipeline.ARTIFACTS["weights"])
    _, result, _ = pipeline.stage_rank(
        config.settings(), provider, build, weights, audits
    )
    for rank, (alt_id, utility) in enumerate(result.ranked, start=1):
        print(f"{rank:3d}. {alt_id}  {utility:.4f}")
    print(f"artifacts written to {config.out}/")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig.load(args)
    _require(config, "goal", "corpus", "alternatives")
    provider = make_provider(config.provider)
    outcome = pipeline.run_pipeline(config.settings(), provider)
    print(
        f"pipeline complete: {len(outcome.hierarchy.criteria)} criteria, "
        f"{len(outcome.result.ranked)} alternatives ranked"
    )
    for rank, (alt_id, utility) in enumerate(outcome.result.ranked[:5], start=1):
        print(f"{rank:3d}. {alt_id}  {utility:.4f}")
    print(f"artifacts written to {config.out}/")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig.load(args)
    scenario = evalharness.Scenario.load(args.scenario)
    provider = make_provider(config.provider)
    bundle = evalharness.run_scenario(
        scenario, provider, repeats=args.repeats, out_dir=config.out
    )
    aggregate = bundle["aggregate"]
    print(
        f"eval complete over {bundle['repeats']} run(s): "
        f"NDCG@5 {aggregate['ndcg_at_5']:.4f}, "
        f"NDCG@10 {aggregate['ndcg_at_10']:.4f}, "
        f"post-optimization pass rate {aggregate['post_pass_rate']:.2f}"
    )
    print(f"metrics written to {config.out}/metrics.json and metrics.csv")
    return 0


def cmd_gen_scenario(args: argparse.Namespace) -> int:
    scenario = evalharness.generate_synthetic_scenario(
        out_dir=args.out,
        topics=args.topics,
        paragraphs_per_topic=args.paragraphs,
        n_alternatives=args.alternatives_count,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
        k_max=args.k_max if args.k_max is not None else 5,
        d_max=args.d_max if args.d_max is not None else 2,
        tau=args.tau if args.tau is not None else 0.2,
    )
    print(f"scenario written to {args.out}/scenario.json (goal: {scenario.goal})")
    return 0


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    parser.add_argument("--out", default=None, help="artifact output directory")
    parser.add_argument(
        "--provider", choices=("mock", "http"), default=None, help="provider kind"
    )
    parser.add_argument("--endpoint", default=None, help="http provider base URL")
    parser.add_argument("--model", default=None, help="http provider model name")
    parser.add_argument("--k-max", dest="k_max", type=int, default=None)
    parser.add_argument("--d-max", dest="d_max", type=int, default=None)
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument(
        "--panel-size", dest="panel_size", type=int, default=None,
        help="number of elicitation personas",
    )
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autoahp",
        description="Build and evaluate AHP decision models from document corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="corpus -> dendrogram + hierarchy")
    p_build.add_argument("--goal", default=None)
    p_build.add_argument("--corpus", default=None)
    _add_common_flags(p_build)
    p_build.set_defaults(handler=cmd_build)

    p_weigh = sub.add_parser("weigh", help="hierarchy -> weights (with audit)")
    _add_common_flags(p_weigh)
    p_weigh.set_defaults(handler=cmd_weigh)

    p_rank = sub.add_parser("rank", help="weights -> scores, result, report")
    p_rank.add_argument("--alternatives", default=None)
    p_rank.add_argument("--samples", type=int, default=None)
    _add_common_flags(p_rank)
    p_rank.set_defaults(handler=cmd_rank)

    p_run = sub.add_parser("run", help="full pipeline: build + weigh + rank")
    p_run.add_argument("--goal", default=None)
    p_run.add_argument("--corpus", default=None)
    p_run.add_argument("--alternatives", default=None)
    p_run.add_argument("--samples", type=int, default=None)
    _add_common_flags(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_eval = sub.add_parser("eval", help="run a benchmark scenario")
    p_eval.add_argument("--scenario", required=True, help="scenario.json path")
    p_eval.add_argument("--repeats", type=int, default=1)
    _add_common_flags(p_eval)
    p_eval.set_defaults(handler=cmd_eval)

    p_gen = sub.add_parser("gen-scenario", help="materialize a synthetic scenario")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--topics", type=int, default=5)
    p_gen.add_argument("--paragraphs", type=int, default=6)
    p_gen.add_argument(
        "--alternatives-count", dest="alternatives_count", type=int, default=20
    )
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--k-max", dest="k_max", type=int, default=None)
    p_gen.add_argument("--d-max", dest="d_max", type=int, default=None)
    p_gen.add_argument("--tau", type=float, default=None)
    p_gen.add_argument("-v", "--verbose", action="store_true")
    p_gen.set_defaults(handler=cmd_gen_scenario)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except AhpError as exc:
        code = 1
        for error_type, error_code in EXIT_CODES:
            if isinstance(exc, error_type):
                code = error_code
                break
        print(f"error[{exc.stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"error[internal] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``gradsem {run,church,rsa,synth-human}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .calibrate import CalibrationError
from .church.evaluator import EvalError
from .church.inference import WorldModel, rejection_query, summarize
from .church.lexer import LexError
from .church.sexpr import ParseError
from .harness import (
    RunAborted,
    RunConfig,
    ValidationError,
    bundled_manifest_path,
    emit_results,
    load_human_csv,
    load_manifest,
    run_experiment,
    synthesize_human,
    write_human_csv,
)
from .rsa import RSAConfig, RSAError, pragmatic_listener
from .scorer.backends import BackendConfig, BackendError, MockParams, RetryPolicy
from .stats import StatisticsError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_STATISTICS = 4

log = logging.getLogger("gradsem")


def _add_run(sub):
    p = sub.add_parser("run", help="run one experiment end to end")
    p.add_argument("--experiment", choices=["e1", "e2"], required=True)
    p.add_argument("--manifest", help="manifest JSON (default: bundled manifest)")
    p.add_argument("--human", required=True, help="CSV with participant_id,stimulus_id,estimate")
    p.add_argument("--backend", choices=["mock", "http"], default="mock")
    p.add_argument("--backend-config", help="JSON file with BackendConfig fields")
    p.add_argument("--endpoint")
    p.add_argument("--model-name")
    p.add_argument("--auth-env", help="environment variable holding the bearer token")
    p.add_argument("--max-inflight", type=int)
    p.add_argument("--fixtures", help="directory of replay fixtures")
    p.add_argument("--run-log", help="append-only JSONL log of backend requests")
    p.add_argument("--offline", action="store_true", help="replay fixtures only; fail on a miss")
    p.add_argument("--mock-width", type=float)
    p.add_argument("--mock-noise", type=float)
    p.add_argument("--mock-seed", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permutations", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.add_argument("--loocv-pooling", choices=["per_experiment", "per_panel"],
                   default="per_experiment")
    p.add_argument("--permutation-mode", choices=["both_shuffled", "model_only"],
                   default="both_shuffled")
    p.add_argument("--p-estimator", choices=["strict", "add_one"], default="strict")
    p.add_argument("--stimulus-workers", type=int, default=1)


def _backend_config(args) -> BackendConfig:
    data = {}
    if args.backend_config:
        data = json.loads(Path(args.backend_config).read_text("utf-8"))
    data["kind"] = "mock" if args.backend == "mock" else "http_completions"
    overrides = {"endpoint": args.endpoint, "model_name": args.model_name, "auth": args.auth_env,
                 "max_inflight": args.max_inflight, "fixture_dir": args.fixtures,
                 "run_log": args.run_log}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.offline:
        data["offline"] = True
    if data["kind"] == "mock":
        mock = dict(data.get("mock_params") or {})
        for key, value in (("width", args.mock_width), ("noise", args.mock_noise),
                           ("seed", args.mock_seed)):
            if value is not None:
                mock[key] = value
        data["mock_params"] = mock
    elif "model_name" not in data:
        data["model_name"] = "unknown"
    return BackendConfig.from_dict(data)


def cmd_run(args) -> int:
    manifest = load_manifest(args.manifest or bundled_manifest_path(args.experiment))
    if manifest.experiment.lower() != args.experiment:
        raise ValidationError(f"manifest is for {manifest.experiment}, not {args.experiment}")
    human = load_human_csv(args.human, manifest)
    config = RunConfig(backend=_backend_config(args), n_permutations=args.permutations,
                       seed=args.seed, output_dir=args.out, loocv_pooling=args.loocv_pooling,
                       permutation_mode=args.permutation_mode, p_value_estimator=args.p_estimator,
                       stimulus_workers=args.stimulus_workers)
    try:
        output = run_experiment(manifest, human, config)
    except RunAborted as exc:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_record.json").write_text(
            json.dumps(exc.record, indent=1, sort_keys=True, default=str) + "\n", "utf-8")
        raise
    paths = emit_results(output.rows, config, output.record, output.thetas)
    n_sig = sum(r.significant for r in output.rows)
    print(f"{manifest.experiment}: {len(output.rows)} stimuli, {n_sig} significant "
          f"(p_fdr < {config.significance_level})")
    print(f"table: {paths['table']}  sha256={paths['table_sha256']}")
    print(f"record: {paths['record']}")
    return EXIT_OK


def _load_model(name: str) -> WorldModel:
    if name.upper() in ("E1", "E2"):
        return WorldModel.bundled(name)
    return WorldModel.from_file(name)


def cmd_church_run(args) -> int:
    model = _load_model(args.model)
    samples = rejection_query(model, args.condition or [], args.query, args.samples, args.seed,
                              workers=args.workers)
    summary = {"model": model.name, "model_sha256": model.source_hash,
               "conditions": args.condition or [], "query": args.query, **summarize(samples)}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_rsa(args) -> int:
    config = RSAConfig.from_file(args.config) if args.config else RSAConfig()
    _, marginal = pragmatic_listener(args.utterance, config)
    print("theta\tprobability")
    for theta, p in zip(marginal.support, marginal.probs):
        print(f"{theta:g}\t{p:.10f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    manifest = load_manifest(args.manifest or bundled_manifest_path(args.experiment))
    rows = synthesize_human(manifest, args.participants, args.seed, args.spread)
    write_human_csv(rows, args.out)
    print(f"wrote {len(rows)} responses to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradsem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)

    church = sub.add_parser("church", help="Church interpreter")
    church_sub = church.add_subparsers(dest="church_command", required=True)
    cr = church_sub.add_parser("run", help="rejection query against a world model")
    cr.add_argument("--model", required=True, help=".church file, or e1 / e2 for bundled models")
    cr.add_argument("--condition", action="append", help="condition expression (repeatable)")
    cr.add_argument("--query", required=True)
    cr.add_argument("--samples", type=int, default=10_000)
    cr.add_argument("--seed", type=int, default=0)
    cr.add_argument("--workers", type=int, default=1)

    rsa = sub.add_parser("rsa", help="pragmatic-listener threshold posterior")
    rsa.add_argument("--utterance", default="strong")
    rsa.add_argument("--config", help="RSA config JSON")

    synth = sub.add_parser("synth-human", help="write synthetic human responses")
    synth.add_argument("--experiment", choices=["e1", "e2"], required=True)
    synth.add_argument("--manifest")
    synth.add_argument("--participants", type=int, default=30)
    synth.add_argument("--spread", type=float, default=12.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "rsa": cmd_rsa, "synth-human": cmd_synth,
               "church": cmd_church_run}[args.command]
    try:
        return handler(args)
    except (BackendError, RunAborted) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (StatisticsError, CalibrationError, RSAError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STATISTICS
    except (ValidationError, LexError, ParseError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

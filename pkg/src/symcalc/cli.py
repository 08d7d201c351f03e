"""Command line entry point.

Subcommands take a JSON config file plus a --seed override:

    symcalc dataset build  --config ds.json   [--seed N]
    symcalc train decoder  --config train.json [--seed N]
    symcalc train switch   --config train.json [--seed N]
    symcalc bench run      --config bench.json [--seed N]
    symcalc generate       --config gen.json   [--seed N]

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

from . import datagen, harness
from .controller import ToyEncoder, ToyEncoderConfig
from .errors import ConfigError, SymcalcError
from .network import PRIMITIVES, build_complete, primitive
from .training import TrainConfig, train_decoder, train_switch


def _load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    return config[key]


def _build_spec(net_cfg: dict):
    names = net_cfg.get("primitives", list(PRIMITIVES))
    return build_complete([primitive(n) for n in names],
                          n_inputs=net_cfg.get("n_inputs", 2),
                          n_layers=net_cfg.get("n_layers", 1))


def _provider(config: dict) -> ToyEncoder:
    return ToyEncoder(ToyEncoderConfig(**config.get("provider", {})))


def cmd_dataset_build(config: dict, seed: int | None):
    seed = seed if seed is not None else config.get("seed", 0)
    kind = _require(config, "kind")
    out = Path(_require(config, "out"))
    n = config.get("n", 1000)
    if kind == "decoder":
        examples = datagen.sample_decoder_dataset(
            n, seed, answer_prefix=config.get("answer_prefix", False))
        records = [ex.record() for ex in examples]
    elif kind == "switch":
        streams = datagen.sample_switch_dataset(n, seed)
        records = [st.record() for st in streams]
    elif kind in datagen.BENCH_KINDS:
        items = datagen.build_benchmark(kind, config.get("digits"), n, seed)
        records = [it.record() for it in items]
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    out.parent.mkdir(parents=True, exist_ok=True)
    datagen.write_records(out, records, {"kind": kind, "seed": seed, "n": n})
    print(f"wrote {len(records)} records to {out}")


def _train_config(config: dict, seed: int | None) -> TrainConfig:
    params = dict(config.get("train", {}))
    if seed is not None:
        params["seed"] = seed
    return TrainConfig(**params)


def cmd_train_decoder(config: dict, seed: int | None):
    tc = _train_config(config, seed)
    spec = _build_spec(config.get("net", {}))
    provider = _provider(config)
    stages = []
    for stage in config.get("stages", [{"answer_prefix": True, "n_examples": 2000, "steps": 200},
                                       {"answer_prefix": False, "n_examples": 4000, "steps": 800}]):
        if "data" in stage:
            _, records = datagen.read_records(stage["data"])
            examples = datagen.examples_from_records(records)
        else:
            examples = datagen.sample_decoder_dataset(
                stage.get("n_examples", 2000), tc.seed + len(stages),
                answer_prefix=stage.get("answer_prefix", False))
        stages.append((examples, stage.get("steps", 500)))
    out_dir = Path(_require(config, "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    params, _ = train_decoder(tc, provider, spec, stages,
                              intermediate=config.get("intermediate", 64),
                              log_path=out_dir / "decoder_metrics.jsonl")
    harness.save_checkpoint(out_dir, spec, decoder=params,
                            config={"provider": config.get("provider", {})})
    print(f"saved decoder checkpoint to {out_dir}")


def cmd_train_switch(config: dict, seed: int | None):
    tc = _train_config(config, seed)
    out_dir = Path(_require(config, "out_dir"))
    spec, _, decoder, _, run_cfg = harness.load_checkpoint(out_dir)
    if decoder is None:
        raise ConfigError(f"{out_dir} has no trained decoder; train the decoder first")
    provider = _provider(config if "provider" in config else run_cfg)
    streams = datagen.sample_switch_dataset(config.get("n_streams", 400), tc.seed)
    params, _ = train_switch(tc, provider, streams,
                             intermediate=config.get("intermediate", 64),
                             log_path=out_dir / "switch_metrics.jsonl")
    harness.save_checkpoint(out_dir, spec, decoder=decoder, switch=params,
                            config=run_cfg)
    print(f"saved switch checkpoint to {out_dir}")


def cmd_bench_run(config: dict, seed: int | None):
    kwargs = {k: v for k, v in config.items() if k not in ("out_dir",)}
    if "tasks" in kwargs:
        kwargs["tasks"] = tuple(kwargs["tasks"])
    if seed is not None:
        kwargs["seed"] = seed
    bench_config = harness.BenchConfig(**kwargs)
    out_dir = config.get("out_dir")
    report = harness.run_benchmark(bench_config, out_dir=out_dir)
    print(report.table(), end="")
    if out_dir:
        print(f"report written to {out_dir}")


def cmd_generate(config: dict, seed: int | None):
    checkpoint = _require(config, "checkpoint_dir")
    prompt = _require(config, "prompt")
    spec, _, decoder, switch, run_cfg = harness.load_checkpoint(checkpoint)
    if decoder is None or switch is None:
        raise ConfigError("generation requires a checkpoint with decoder and switch")
    provider = ToyEncoder(ToyEncoderConfig(**run_cfg.get("provider", {})))
    response, trace = harness.generate_with_switch(
        provider, decoder, switch, spec, prompt,
        max_tokens=config.get("max_tokens", 64),
        script=config.get("script", [""]),
        rng_seed=seed if seed is not None else config.get("seed", 0),
    )
    print(json.dumps({
        "prompt": prompt,
        "response": response,
        "trace": [vars(s) for s in trace.steps],
    }, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symcalc")
    sub = parser.add_subparsers(dest="command", required=True)

    dataset = sub.add_parser("dataset", help="dataset utilities")
    dataset_sub = dataset.add_subparsers(dest="subcommand", required=True)
    build = dataset_sub.add_parser("build", help="generate a dataset file")
    _add_common(build)

    train = sub.add_parser("train", help="training runs")
    train_sub = train.add_subparsers(dest="subcommand", required=True)
    _add_common(train_sub.add_parser("decoder", help="train the weight decoder"))
    _add_common(train_sub.add_parser("switch", help="train the routing switch"))

    bench = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench.add_subparsers(dest="subcommand", required=True)
    _add_common(bench_sub.add_parser("run", help="run a benchmark suite"))

    _add_common(sub.add_parser("generate", help="switched generation for one prompt"))
    return parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="path to a JSON config file")
    p.add_argument("--seed", type=int, default=None, help="seed override")


_DISPATCH = {
    ("dataset", "build"): cmd_dataset_build,
    ("train", "decoder"): cmd_train_decoder,
    ("train", "switch"): cmd_train_switch,
    ("bench", "run"): cmd_bench_run,
    ("generate", None): cmd_generate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    key = (args.command, getattr(args, "subcommand", None))
    try:
        config = _load_config(args.config)
        _DISPATCH[key](config, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (SymcalcError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

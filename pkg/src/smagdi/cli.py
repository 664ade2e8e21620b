"""``smagdi debate|distill|infer|eval|compare``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import agents, debate, distill, harness, scot
from .backends import HttpBackend, MockBackend
from .batching import featurize
from .config import load_config
from .data import SplitSpec, load_dataset, split
from .debate import AgentWeights, DebateConfig, calibrate, run_debate
from .embeddings import HashingEmbedder, SentenceTransformerEmbedder
from .gcn import GCNParams, save_gcn
from .graph import build_graph, read_graphs, write_graphs
from .losses import LossCoefficients
from .student import LMConfig, StudentUnit, load_student, save_student

logger = logging.getLogger("smagdi")


def _dump_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _override(cfg: dict, section: str, **values) -> None:
    for key, value in values.items():
        if value is not None:
            cfg[section][key] = value


def _records(args, cfg):
    records = load_dataset(args.dataset, args.dataset_path)
    spec = SplitSpec(cfg["data"]["train_fraction"], args.seed)
    if args.split == "all":
        chosen = records
        if cfg["data"]["subset_size"]:
            order = np.random.default_rng(args.seed).permutation(len(records))
            chosen = [records[i] for i in order[: cfg["data"]["subset_size"]]]
    else:
        train, test = split(records, spec)
        chosen = train if args.split == "train" else test
        if args.split == "train" and cfg["data"]["subset_size"]:
            chosen = chosen[: cfg["data"]["subset_size"]]
    if args.limit:
        chosen = chosen[: args.limit]
    logger.info("using %d %s records from %s", len(chosen), args.split, args.dataset_path)
    return chosen


def _backend(cfg):
    b = cfg["backend"]
    if b["kind"] == "mock":
        return MockBackend.from_file(b["script"]) if b["script"] else MockBackend()
    if b["kind"] == "http":
        return HttpBackend(b["url"], timeout=b["timeout"], retries=b["retries"])
    raise SystemExit(f"unknown backend {b['kind']!r}")


def _debate_config(cfg) -> DebateConfig:
    d = cfg["debate"]
    return DebateConfig(d["max_rounds"], d["base_temperature"], d["temperature_increment"], d["epsilon"],
                        d["calibration_size"], d["max_tokens"])


def _weights(args, cfg, backend, records, dconf):
    if getattr(args, "weights_in", None):
        return AgentWeights.from_dict(json.loads(Path(args.weights_in).read_text()))
    return calibrate(agents.DEFAULT_ROSTER, backend, records[: dconf.calibration_size], dconf)


def cmd_debate(args, cfg) -> int:
    _override(cfg, "backend", kind=args.backend, script=args.mock_script, url=args.backend_url)
    _override(cfg, "graph", embed_dim=args.embed_dim, pe_dim=args.pe_dim, embedder=args.embedder)
    records = _records(args, cfg)
    backend = _backend(cfg)
    dconf = _debate_config(cfg)
    weights = _weights(args, cfg, backend, records, dconf)
    if args.weights_out:
        _dump_json(weights.to_dict(), args.weights_out)

    g = cfg["graph"]
    embedder = None
    if args.graphs_out:
        embedder = (SentenceTransformerEmbedder() if g["embedder"] == "sentence-transformer"
                    else HashingEmbedder(g["embed_dim"]))
    graphs = []
    with Path(args.transcripts_out).open("w", encoding="utf-8") as fh:
        for q in records:
            transcript = run_debate(q, agents.DEFAULT_ROSTER, backend, weights, dconf)
            fh.write(json.dumps(transcript.to_dict()) + "\n")
            if embedder is not None:
                graphs.append(featurize(build_graph(transcript, weights), embedder, g["pe_dim"]))
    if args.graphs_out:
        write_graphs(graphs, args.graphs_out)
    logger.info("debated %d questions", len(records))
    return 0


def cmd_distill(args, cfg) -> int:
    torch.use_deterministic_algorithms(True)
    _override(cfg, "backend", kind=args.backend, script=args.mock_script, url=args.backend_url)
    _override(cfg, "distill", learning_rate=args.lr, epochs=args.epochs, coefficients=args.coefficients,
              batch_size=args.batch_size, early_stopping_patience=args.patience)
    d = cfg["distill"]
    graphs = read_graphs(args.graphs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(args.seed)
    student = StudentUnit(LMConfig(d["d_model"], d["n_layers"], d["n_heads"], d["d_ff"], d["max_len"]),
                          d["proj_dim"], args.seed)
    in_dim = len(graphs[0].nodes[0].semantic_embedding) + len(graphs[0].nodes[0].positional_encoding)
    gcn = GCNParams(in_dim, cfg["gcn"]["hidden_dim"], cfg["gcn"]["num_layers"])
    tconf = distill.TrainConfig(
        learning_rate=d["learning_rate"], epochs=d["epochs"], early_stopping_patience=d["early_stopping_patience"],
        batch_size=d["batch_size"], checkpoint_dir=out / "checkpoints", seed=args.seed, val_fraction=d["val_fraction"],
    )
    result = distill.train(graphs, student, gcn, LossCoefficients.parse(d["coefficients"]), tconf,
                           backend=_backend(cfg))
    save_student(result.student, out / "student.pt")
    save_gcn(result.gcn, out / "gcn.pt")
    distill.write_history(result.history, out / "history.json")
    logger.info("initial total %.4f, final total %.4f", result.history["initial"]["total"],
                result.history["train"][-1]["total"])
    return 0


def cmd_infer(args, cfg) -> int:
    _override(cfg, "scot", max_depth=args.max_depth, temperature=args.temperature, max_tokens=args.max_tokens)
    path = Path(args.checkpoint)
    student = load_student(path / "student.pt" if path.is_dir() else path)
    student.eval()
    s = cfg["scot"]
    sconf = scot.ScotConfig(s["max_depth"], s["temperature"], s["max_tokens"])
    traces = [scot.infer(student, q, sconf) for q in _records(args, cfg)]
    scot.write_traces(traces, args.traces_out)
    return 0


def cmd_eval(args, cfg) -> int:
    records = load_dataset(args.dataset, args.dataset_path)
    traces = scot.read_traces(args.traces)
    report = harness.metrics_report({t.question_id: t.final_answer for t in traces}, records)
    _dump_json(report, args.metrics_out)
    return 0


def cmd_compare(args, cfg) -> int:
    _override(cfg, "backend", kind=args.backend, script=args.mock_script, url=args.backend_url)
    records = _records(args, cfg)
    backend = _backend(cfg)
    dconf = _debate_config(cfg)
    weights = _weights(args, cfg, backend, records, dconf)
    report = harness.compare_mas_sas(records, agents.DEFAULT_ROSTER, backend, weights, dconf)
    _dump_json(report, args.report_out)
    return 0


def _dataset_args(p, default_split):
    p.add_argument("--dataset", choices=["strategyqa", "mmlu"], required=True)
    p.add_argument("--dataset-path", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default=default_split)
    p.add_argument("--limit", type=int, default=None, help="use only the first N selected records")


def _backend_args(p):
    p.add_argument("--backend", choices=["mock", "http"], default=None)
    p.add_argument("--mock-script", default=None, help="JSON file of scripted mock responses")
    p.add_argument("--backend-url", default=None, help="defaults to $SMAGDI_BACKEND_URL")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smagdi", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("debate", parents=[common], help="calibrate agents and run debates")
    _dataset_args(p, "train")
    _backend_args(p)
    p.add_argument("--weights-in", default=None, help="skip calibration and use these weights")
    p.add_argument("--weights-out", default=None)
    p.add_argument("--transcripts-out", required=True)
    p.add_argument("--graphs-out", default=None, help="also write featurized interaction graphs (JSONL)")
    p.add_argument("--embedder", choices=["hashing", "sentence-transformer"], default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--pe-dim", type=int, default=None)
    p.set_defaults(func=cmd_debate)

    p = sub.add_parser("distill", parents=[common], help="train the student on interaction graphs")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--coefficients", default=None, help="alpha,beta,gamma,delta")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    _backend_args(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("infer", parents=[common], help="zero-shot Socratic inference")
    p.add_argument("--checkpoint", required=True, help="student.pt or the distill output directory")
    _dataset_args(p, "test")
    p.add_argument("--traces-out", required=True)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="exact-match accuracy of inference traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--dataset", choices=["strategyqa", "mmlu"], required=True)
    p.add_argument("--dataset-path", required=True)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="multi-agent debate vs single agent")
    _dataset_args(p, "test")
    _backend_args(p)
    p.add_argument("--weights-in", default=None)
    p.add_argument("--report-out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    cfg = load_config(args.config)
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())

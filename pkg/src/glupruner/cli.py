"""Command-line interface: calibrate, prune, inspect, report.

All subcommands print a JSON report (schema "glupruner/1") to stdout unless
--out redirects it; `prune` writes the pruned safetensors file to --out and
prints its report. The `report` subcommand can additionally write a CSV table
and matplotlib figures via --report-dir.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import batches_from_tensor_file, calibrate_mlp, synthetic_batches
from .errors import ConfigError, GluPrunerError
from .glu import GluVariant, MlpWeights
from .importance import (
    dass_down_scores,
    dass_gate_up_scores,
    magnitude_scores,
    wanda_scores,
)
from .masking import GroupAxis, SparsitySpec
from .pipeline import (
    PruneConfig,
    dependency_report,
    eval_reconstruction,
    masks_sparsity_summary,
    prune_mlp,
)
from .tensor_store import Tensor2D, TensorFile, load_tensor_file, save_tensor_file

SCHEMA = "glupruner/1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_synthetic(text: str) -> dict:
    out = {"tokens": None, "dim": None, "outliers": 0, "scale": 1.0}
    for part in text.split(","):
        if "=" not in part:
            raise ConfigError(f"bad --synthetic item {part!r}; expected key=value")
        key, val = part.split("=", 1)
        key = key.strip()
        if key not in out:
            raise ConfigError(f"unknown --synthetic key {key!r}")
        out[key] = float(val) if key == "scale" else int(val)
    if not out["tokens"]:
        raise ConfigError("--synthetic requires tokens=N")
    return out


def _parse_nm(text: str) -> tuple[int, int]:
    try:
        n_s, m_s = text.split(":")
        return int(n_s), int(m_s)
    except ValueError as exc:
        raise ConfigError(f"bad --nm value {text!r}; expected N:M") from exc


def _spec_from_args(args) -> SparsitySpec:
    if (args.sparsity is None) == (args.nm is None):
        raise ConfigError("specify exactly one of --sparsity or --nm")
    if args.nm is not None:
        n, m = _parse_nm(args.nm)
        return SparsitySpec.nm(n, m, GroupAxis.PER_ROW)
    return SparsitySpec.unstructured(args.sparsity, GroupAxis.PER_ROW)


def _threads() -> int:
    raw = os.environ.get("GLUPRUNER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"GLUPRUNER_THREADS={raw!r} is not an integer") from exc


def _load_manifest(path) -> list[dict]:
    with open(path) as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, list):
        raise ConfigError("manifest must be a JSON list of {gate, up, down} objects")
    for entry in manifest:
        if not all(k in entry for k in ("gate", "up", "down")):
            raise ConfigError(f"manifest entry missing gate/up/down: {entry}")
    return manifest


def _triplets(args, weights: TensorFile) -> list[dict]:
    if args.manifest:
        return _load_manifest(args.manifest)
    return [{"gate": "gate", "up": "up", "down": "down"}]


def _mlp_from_entry(weights: TensorFile, entry: dict, variant: GluVariant) -> MlpWeights:
    try:
        return MlpWeights(
            gate=weights.entries[entry["gate"]],
            up=weights.entries[entry["up"]],
            down=weights.entries[entry["down"]],
            variant=variant,
        )
    except KeyError as exc:
        raise ConfigError(f"weights file has no tensor named {exc.args[0]!r}") from exc


def _calib_batches(args, d_hidden: int) -> list[Tensor2D]:
    if (args.calib is None) == (args.synthetic is None):
        raise ConfigError("specify exactly one of --calib or --synthetic")
    if args.calib:
        batches = batches_from_tensor_file(load_tensor_file(args.calib))
        if not batches:
            raise ConfigError(f"{args.calib}: no calibration tensors named 'x.<k>'")
        return batches
    syn = _parse_synthetic(args.synthetic)
    dim = syn["dim"] or d_hidden
    return list(
        synthetic_batches(
            tokens=syn["tokens"],
            dim=dim,
            outliers=syn["outliers"],
            scale=syn["scale"],
            seed=args.seed,
        )
    )


def _emit(report: dict, out_path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n")
    else:
        print(text)


def _add_common(p: argparse.ArgumentParser, spec_flags: bool = True) -> None:
    p.add_argument("--weights", required=True, help="safetensors file with weights")
    p.add_argument("--calib", help="safetensors file with batches named x.<k>")
    p.add_argument(
        "--synthetic",
        metavar="tokens=N,dim=D,outliers=K,scale=S",
        help="generate seeded Gaussian calibration batches instead of --calib",
    )
    p.add_argument(
        "--variant",
        choices=["swiglu", "geglu", "reglu"],
        default="swiglu",
    )
    p.add_argument("--manifest", help="JSON list of {gate, up, down} tensor names")
    p.add_argument("--seed", type=int, default=0)
    if spec_flags:
        p.add_argument("--metric", choices=["magnitude", "wanda", "dass"], default="dass")
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--sparsity", type=float, help="unstructured ratio in [0,1)")
        p.add_argument("--nm", help="semi-structured pattern N:M, e.g. 2:4")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glupruner", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_cal = sub.add_parser("calibrate", help="collect activation norms")
    _add_common(p_cal, spec_flags=False)
    p_cal.add_argument("--out", help="safetensors file for the norm vectors")

    p_prune = sub.add_parser("prune", help="prune MLP triplet(s)")
    _add_common(p_prune)
    p_prune.add_argument("--out", required=True, help="pruned safetensors path")

    p_inspect = sub.add_parser("inspect", help="dump importance score matrices")
    _add_common(p_inspect)
    p_inspect.add_argument("--dump-scores", help="safetensors path for score tensors")
    p_inspect.add_argument("--out", help="JSON report path (default stdout)")

    p_report = sub.add_parser("report", help="reconstruction-error sweeps")
    _add_common(p_report)
    p_report.add_argument(
        "--sweep-alpha", help="comma-separated alpha values, e.g. 0.25,0.5,0.75,1.0"
    )
    p_report.add_argument(
        "--sweep-sparsity", help="comma-separated unstructured ratios, e.g. 0.4,0.5,0.6"
    )
    p_report.add_argument("--out", help="JSON report path (default stdout)")
    p_report.add_argument(
        "--report-dir", help="directory for report.csv and matplotlib figures"
    )
    return parser


def _cmd_calibrate(args) -> int:
    weights = load_tensor_file(args.weights)
    variant = GluVariant.parse(args.variant)
    triplets = _triplets(args, weights)
    norms_out = TensorFile(entries={}, metadata={"schema": SCHEMA})
    layers = []

    def one(entry):
        w = _mlp_from_entry(weights, entry, variant)
        stats = calibrate_mlp(w, _calib_batches(args, w.d_hidden))
        return entry, stats

    results = _map_layers(one, triplets)
    for entry, stats in results:
        base = entry["gate"]
        norms_out.entries[f"{base}.input_norms"] = Tensor2D(
            stats.input_norms.astype(np.float32)[np.newaxis, :]
        )
        norms_out.entries[f"{base}.intermediate_norms"] = Tensor2D(
            stats.intermediate_norms.astype(np.float32)[np.newaxis, :]
        )
        layers.append(
            {
                "gate": entry["gate"],
                "token_count": stats.token_count,
                "input_norm_max": float(stats.input_norms.max()),
                "intermediate_norm_max": float(stats.intermediate_norms.max()),
            }
        )
    if args.out:
        save_tensor_file(norms_out, args.out)
    _emit({"schema": SCHEMA, "command": "calibrate", "layers": layers}, None)
    return 0


def _map_layers(fn, triplets):
    workers = _threads()
    if workers == 1 or len(triplets) == 1:
        return [fn(t) for t in triplets]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, triplets))


def _prune_one(args, weights, entry, cfg):
    w = _mlp_from_entry(weights, entry, cfg.variant)
    stats = calibrate_mlp(w, _calib_batches(args, w.d_hidden))
    masks, pruned = prune_mlp(w, stats, cfg)
    report = dependency_report(masks)
    return entry, w, stats, masks, pruned, report


def _cmd_prune(args) -> int:
    weights = load_tensor_file(args.weights)
    cfg = PruneConfig(
        variant=GluVariant.parse(args.variant),
        spec=_spec_from_args(args),
        metric=args.metric,
        alpha=args.alpha,
        seed=args.seed,
    )
    triplets = _triplets(args, weights)
    out_tf = TensorFile(entries={}, metadata={"schema": SCHEMA, "metric": args.metric})
    layers = []
    results = _map_layers(
        lambda entry: _prune_one(args, weights, entry, cfg), triplets
    )
    for entry, w, stats, masks, pruned, dep in results:
        out_tf.entries[entry["gate"]] = pruned.gate
        out_tf.entries[entry["up"]] = pruned.up
        out_tf.entries[entry["down"]] = pruned.down
        # masks exported in stored-weight orientation, 0/1 valued
        out_tf.entries[entry["gate"] + ".mask"] = Tensor2D(
            masks.gate.keep.T.astype(np.float32)
        )
        out_tf.entries[entry["up"] + ".mask"] = Tensor2D(
            masks.up.keep.T.astype(np.float32)
        )
        out_tf.entries[entry["down"] + ".mask"] = Tensor2D(
            masks.down.keep.T.astype(np.float32)
        )
        layers.append(
            {
                "gate": entry["gate"],
                "sparsity": masks_sparsity_summary(masks),
                "token_count": stats.token_count,
                "gate_down_correlation": dep.gate_down_correlation,
                "up_down_correlation": dep.up_down_correlation,
            }
        )
    save_tensor_file(out_tf, args.out)
    _emit(
        {
            "schema": SCHEMA,
            "command": "prune",
            "metric": args.metric,
            "alpha": args.alpha,
            "out": str(args.out),
            "layers": layers,
        },
        None,
    )
    return 0


def _cmd_inspect(args) -> int:
    weights = load_tensor_file(args.weights)
    variant = GluVariant.parse(args.variant)
    triplets = _triplets(args, weights)
    dump = TensorFile(entries={}, metadata={"schema": SCHEMA, "metric": args.metric})
    layers = []
    for entry in triplets:
        w = _mlp_from_entry(weights, entry, variant)
        stats = calibrate_mlp(w, _calib_batches(args, w.d_hidden))
        gate_t, up_t, down_t = w.gate.transpose(), w.up.transpose(), w.down.transpose()
        if args.metric == "dass":
            scores = {
                entry["gate"]: dass_gate_up_scores(
                    gate_t, stats.intermediate_norms, args.alpha
                ),
                entry["up"]: dass_gate_up_scores(
                    up_t, stats.intermediate_norms, args.alpha
                ),
                entry["down"]: dass_down_scores(down_t, stats.intermediate_norms),
            }
        elif args.metric == "wanda":
            scores = {
                entry["gate"]: wanda_scores(gate_t, stats.input_norms),
                entry["up"]: wanda_scores(up_t, stats.input_norms),
                entry["down"]: wanda_scores(down_t, stats.intermediate_norms),
            }
        else:
            scores = {
                entry["gate"]: magnitude_scores(gate_t),
                entry["up"]: magnitude_scores(up_t),
                entry["down"]: magnitude_scores(down_t),
            }
        summary = {}
        for name, imp in scores.items():
            dump.entries[name + ".score"] = imp.scores
            summary[name] = {
                "min": float(imp.scores.data.min()),
                "max": float(imp.scores.data.max()),
                "mean": float(imp.scores.data.mean()),
            }
        layers.append({"gate": entry["gate"], "scores": summary})
    if args.dump_scores:
        save_tensor_file(dump, args.dump_scores)
    _emit(
        {"schema": SCHEMA, "command": "inspect", "metric": args.metric, "layers": layers},
        args.out,
    )
    return 0


def _report_rows(args, weights, triplets) -> list[dict]:
    variant = GluVariant.parse(args.variant)
    alphas = (
        [float(a) for a in args.sweep_alpha.split(",")]
        if args.sweep_alpha
        else [args.alpha]
    )
    if args.sweep_sparsity:
        specs = [
            (s, SparsitySpec.unstructured(float(s), GroupAxis.PER_ROW))
            for s in args.sweep_sparsity.split(",")
        ]
    else:
        base = _spec_from_args(args)
        label = args.nm if args.nm else str(args.sparsity)
        specs = [(label, base)]
    rows = []
    for entry in triplets:
        w = _mlp_from_entry(weights, entry, variant)
        batches = _calib_batches(args, w.d_hidden)
        stats = calibrate_mlp(w, batches)
        for s_label, spec in specs:
            for alpha in alphas:
                cfg = PruneConfig(
                    variant=variant,
                    spec=spec,
                    metric=args.metric,
                    alpha=alpha,
                    seed=args.seed,
                )
                masks, pruned = prune_mlp(w, stats, cfg)
                ev = eval_reconstruction(w, pruned, batches)
                dep = dependency_report(masks)
                rows.append(
                    {
                        "layer": entry["gate"],
                        "metric": args.metric,
                        "alpha": alpha,
                        "sparsity_spec": str(s_label),
                        "relative_error": ev.relative_error,
                        "frobenius_error": ev.frobenius_error,
                        "gate_sparsity": ev.gate_sparsity,
                        "up_sparsity": ev.up_sparsity,
                        "down_sparsity": ev.down_sparsity,
                        "gate_down_correlation": dep.gate_down_correlation,
                        "up_down_correlation": dep.up_down_correlation,
                    }
                )
    return rows


def _write_report_artifacts(rows: list[dict], report_dir) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    written.append(str(csv_path))

    alphas = sorted({r["alpha"] for r in rows})
    if len(alphas) > 1:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for layer in sorted({r["layer"] for r in rows}):
            pts = [r for r in rows if r["layer"] == layer]
            pts.sort(key=lambda r: r["alpha"])
            ax.plot(
                [r["alpha"] for r in pts],
                [r["relative_error"] for r in pts],
                marker="o",
                label=layer,
            )
        ax.set_xlabel("alpha")
        ax.set_ylabel("relative reconstruction error")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig_path = out / "error_vs_alpha.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(str(fig_path))

    sweeps = sorted({r["sparsity_spec"] for r in rows})
    if len(sweeps) > 1:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for layer in sorted({r["layer"] for r in rows}):
            pts = [r for r in rows if r["layer"] == layer]
            pts.sort(key=lambda r: float(r["sparsity_spec"]))
            ax.plot(
                [float(r["sparsity_spec"]) for r in pts],
                [r["relative_error"] for r in pts],
                marker="s",
                label=layer,
            )
        ax.set_xlabel("sparsity ratio")
        ax.set_ylabel("relative reconstruction error")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig_path = out / "error_vs_sparsity.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(str(fig_path))
    return written


def _cmd_report(args) -> int:
    weights = load_tensor_file(args.weights)
    triplets = _triplets(args, weights)
    rows = _report_rows(args, weights, triplets)
    artifacts = []
    if args.report_dir:
        artifacts = _write_report_artifacts(rows, args.report_dir)
    _emit(
        {
            "schema": SCHEMA,
            "command": "report",
            "metric": args.metric,
            "rows": rows,
            "artifacts": artifacts,
        },
        args.out,
    )
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "prune": _cmd_prune,
    "inspect": _cmd_inspect,
    "report": _cmd_report,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"glupruner: error: {exc}", file=sys.stderr)
        return 1
    except GluPrunerError as exc:
        print(f"glupruner: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"glupruner: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

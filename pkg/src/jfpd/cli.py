"""Command-line harness: pretrain | adapt | ablate-alpha | diagnose.

Every run resolves a flat key=value config (defaults <- config file <- CLI
flags), writes its outputs plus a manifest that echoes the merged config,
and is bit-reproducible: replaying a manifest regenerates every output file
byte-identically (timestamps live only in the manifest itself).

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from .adapt import AdaptConfig, adapt, lemma_suppression_report
from .data import (
    DomainDataset,
    ShiftSpec,
    gen_gaussian_domains,
    gen_two_moons_rotated,
    load_idx,
    standardize,
)
from .model import (
    Dims,
    TrainConfig,
    init,
    load_checkpoint,
    pretrain_source,
    save_checkpoint,
)
from .objective import JfpdConfig, mean_jfpd_diagnostic
from .report import (
    emit_csv,
    emit_svg_line,
    emit_svg_scatter,
    write_manifest,
)
from .rng import Rng


class UsageError(Exception):
    """Bad invocation: wrong flags, unresolvable dataset, empty grids."""


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _bool(s):
    if isinstance(s, bool):
        return s
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise UsageError(f"expected a boolean, got {s!r}")


_COMMON_SCHEMA = {
    "seed": (int, 0),
    "gen": (str, "gaussian"),  # gaussian | moons | idx
    "idx_images": (str, ""),
    "idx_labels": (str, ""),
    "n_classes": (int, 2),
    "dim": (int, 2),
    "n_per_class": (int, 150),
    "rotation_deg": (float, 60.0),
    "translation": (float, 0.0),
    "scale": (float, 1.0),
    "noise_sigma": (float, 0.3),
    "cluster_sigma": (float, 0.75),
    "mean_radius": (float, 2.0),
    "ring2_amp": (float, 1.4),
    "moons_n": (int, 300),
    "standardize": (_bool, True),
    "hidden": (str, "128,64"),
    "feature_dim": (int, 32),
    "pre_epochs": (int, 50),
    "pre_batch": (int, 64),
    "pre_lr": (float, 0.1),
    "pre_schedule": (str, "constant"),
    "pre_restart": (int, 0),  # 0 means one full cycle
}

_ADAPT_SCHEMA = {
    "checkpoint": (str, ""),
    "epochs": (int, 30),
    "batch_size": (int, 64),
    "lr": (float, 0.05),
    "schedule": (str, "cosine"),
    "restart": (int, 0),
    "proto_k": (int, 32),
    "alpha": (float, 0.5),
    "mode": (str, "jfpd"),
    "no_trust": (_bool, False),
}

_SCHEMAS = {
    "pretrain": dict(_COMMON_SCHEMA),
    "adapt": {**_COMMON_SCHEMA, **_ADAPT_SCHEMA},
    "ablate-alpha": {**_COMMON_SCHEMA, **_ADAPT_SCHEMA, "alphas": (str, "0,0.5,1"), "seeds": (str, "0,1,2")},
    "diagnose": {
        **_COMMON_SCHEMA,
        **_ADAPT_SCHEMA,
        "shifts": (str, "0,30,60,90,120,150"),
        "mode": (str, "standard"),
    },
}


def _parse_config_file(path):
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _merge_config(command, file_values, flag_values):
    schema = _SCHEMAS[command]
    merged = {k: default for k, (_, default) in schema.items()}
    for source_name, values in (("config", file_values), ("flag", flag_values)):
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in schema:
                raise UsageError(f"unknown {source_name} key {key!r} for {command}")
            conv = schema[key][0]
            try:
                merged[key] = conv(raw)
            except UsageError:
                raise
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from exc
    return merged


def _int_list(raw, what):
    try:
        return [int(v) for v in str(raw).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad {what} list: {raw!r}") from exc


def _float_list(raw, what):
    try:
        return [float(v) for v in str(raw).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad {what} list: {raw!r}") from exc


# ---------------------------------------------------------------------------
# shared run pieces
# ---------------------------------------------------------------------------

def _build_datasets(cfg, rotation_override=None):
    rotation = cfg["rotation_deg"] if rotation_override is None else rotation_override
    if cfg["gen"] == "gaussian":
        shift = ShiftSpec(
            rotation_deg=rotation,
            translation=cfg["translation"],
            scale=cfg["scale"],
            noise_sigma=cfg["noise_sigma"],
        )
        source, target = gen_gaussian_domains(
            cfg["n_classes"],
            cfg["dim"],
            cfg["n_per_class"],
            shift,
            cfg["seed"],
            cluster_sigma=cfg["cluster_sigma"],
            mean_radius=cfg["mean_radius"],
            ring2_amp=cfg["ring2_amp"],
        )
    elif cfg["gen"] == "moons":
        source, target = gen_two_moons_rotated(
            cfg["moons_n"], rotation, cfg["noise_sigma"], cfg["seed"]
        )
    elif cfg["gen"] == "idx":
        if not cfg["idx_images"] or not cfg["idx_labels"]:
            raise UsageError("gen=idx needs --idx-images and --idx-labels")
        for path in (cfg["idx_images"], cfg["idx_labels"]):
            if not os.path.isfile(path):
                raise UsageError(f"missing dataset file: {path}")
        source = load_idx(cfg["idx_images"], cfg["idx_labels"], "source")
        target = DomainDataset(source.x.copy(), source.y.copy(), "target", dict(source.meta))
    else:
        raise UsageError(f"unknown generator {cfg['gen']!r} (gaussian|moons|idx)")
    if cfg["standardize"]:
        source, target, _ = standardize(source, target)
    return source, target


def _dims_for(cfg, source):
    hidden = tuple(_int_list(cfg["hidden"], "hidden"))
    n_classes = source.meta.get("n_classes") or int(source.y.max()) + 1
    return Dims(source.dim, hidden, cfg["feature_dim"], n_classes)


def _pretrain(cfg, source):
    train_cfg = TrainConfig(
        epochs=cfg["pre_epochs"],
        batch_size=cfg["pre_batch"],
        lr=cfg["pre_lr"],
        schedule=cfg["pre_schedule"],
        restart_period=cfg["pre_restart"] or None,
        seed=cfg["seed"],
    )
    params = init(cfg["seed"], _dims_for(cfg, source))
    return pretrain_source(params, source, train_cfg)


def _adapt_config(cfg, seed=None, alpha=None, mode=None, use_trust=None):
    return AdaptConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        schedule=cfg["schedule"],
        restart_period=cfg["restart"] or None,
        seed=cfg["seed"] if seed is None else seed,
        proto_k=cfg["proto_k"],
        jfpd=JfpdConfig(alpha=cfg["alpha"] if alpha is None else alpha),
        mode=cfg["mode"] if mode is None else mode,
        use_trust=(not cfg["no_trust"]) if use_trust is None else use_trust,
    )


def _now():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _finish(out_dir, command, cfg, outputs, started, extra=None):
    manifest = os.path.join(out_dir, "manifest.txt")
    write_manifest(
        manifest,
        command,
        cfg,
        cfg["seed"],
        [int(v) for v in Rng(cfg["seed"]).u64(8)],
        outputs,
        started,
        _now(),
        extra=extra,
    )
    return manifest


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_pretrain(cfg, out_dir):
    started = _now()
    source, _ = _build_datasets(cfg)
    params, log = _pretrain(cfg, source)
    ckpt = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(params, ckpt)
    log_csv = os.path.join(out_dir, "pretrain_log.csv")
    emit_csv(
        ["epoch", "lr", "loss", "source_acc"],
        [[e.epoch, e.lr, e.loss, e.accuracy] for e in log],
        log_csv,
    )
    final_acc = log[-1].accuracy if log else float("nan")
    _finish(
        out_dir,
        "pretrain",
        cfg,
        ["model.ckpt", "pretrain_log.csv"],
        started,
        extra={"final_source_acc": final_acc},
    )
    print(f"pretrain: {len(log)} epochs, final source accuracy {final_acc:.4f}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_adapt(cfg, out_dir):
    started = _now()
    if not cfg["checkpoint"]:
        raise UsageError("adapt needs --checkpoint from a pretrain run")
    if not os.path.isfile(cfg["checkpoint"]):
        raise UsageError(f"missing checkpoint: {cfg['checkpoint']}")
    params = load_checkpoint(cfg["checkpoint"])
    source, target = _build_datasets(cfg)
    if params.dims.input_dim != source.dim:
        raise ValueError(
            f"checkpoint input dim {params.dims.input_dim} != dataset dim {source.dim}"
        )
    adapt_cfg = _adapt_config(cfg)

    if not adapt_cfg.use_trust:
        ok, total = lemma_suppression_report(params, source, target, adapt_cfg)
        print(f"lemma-check: trust-weighted <= unweighted for {ok}/{total} samples")

    adapted, trace = adapt(params, source, target, adapt_cfg)
    ckpt = os.path.join(out_dir, "adapted.ckpt")
    save_checkpoint(adapted, ckpt)
    trace_csv = os.path.join(out_dir, "trace.csv")
    from .adapt import TRACE_COLUMNS

    emit_csv(list(TRACE_COLUMNS), trace.rows(), trace_csv)
    final_acc = trace.records[-1].target_acc if trace.records else float("nan")
    _finish(
        out_dir,
        "adapt",
        cfg,
        ["adapted.ckpt", "trace.csv"],
        started,
        extra={"final_target_acc": final_acc},
    )
    print(
        f"adapt[{adapt_cfg.mode}]: {len(trace)} epochs, "
        f"final target accuracy {final_acc:.4f}"
    )
    print(f"outputs in {out_dir}")
    return 0


def cmd_ablate_alpha(cfg, out_dir):
    started = _now()
    alphas = _float_list(cfg["alphas"], "alpha")
    seeds = _int_list(cfg["seeds"], "seed")
    if not alphas:
        raise UsageError("empty alpha grid")
    if not seeds:
        raise UsageError("empty seed list")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise UsageError(f"alpha {a} outside [0, 1]")

    rows = []
    by_alpha = {a: [] for a in alphas}
    for seed in seeds:
        run_cfg = dict(cfg, seed=seed)
        source, target = _build_datasets(run_cfg)
        params, _ = _pretrain(run_cfg, source)
        for alpha in alphas:
            adapted, trace = adapt(
                params, source, target, _adapt_config(run_cfg, seed=seed, alpha=alpha, mode="jfpd")
            )
            acc = trace.records[-1].target_acc
            gap = trace.records[-1].mean_jfpd
            rows.append([alpha, seed, acc, gap])
            by_alpha[alpha].append(acc)

    csv_path = os.path.join(out_dir, "ablate_alpha.csv")
    emit_csv(["alpha", "seed", "target_acc", "mean_jfpd"], rows, csv_path)
    medians = [(a, float(np.median(by_alpha[a]))) for a in alphas]
    svg_path = os.path.join(out_dir, "ablate_alpha.svg")
    emit_svg_line(medians, "alpha", "median target accuracy", svg_path)
    _finish(out_dir, "ablate-alpha", cfg, ["ablate_alpha.csv", "ablate_alpha.svg"], started)
    for a, med in medians:
        print(f"alpha={a:g}: median target accuracy {med:.4f}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_diagnose(cfg, out_dir):
    started = _now()
    shifts = _float_list(cfg["shifts"], "shift")
    if len(shifts) < 3:
        raise UsageError(f"need at least 3 shift levels for a correlation, got {len(shifts)}")
    if cfg["gen"] == "idx":
        raise UsageError("diagnose needs a parametric generator with a shift axis")

    source0, _ = _build_datasets(cfg, rotation_override=shifts[0])
    params, _ = _pretrain(cfg, source0)

    rows = []
    for shift in shifts:
        source, target = _build_datasets(cfg, rotation_override=shift)
        adapted, trace = adapt(params, source, target, _adapt_config(cfg))
        err = 1.0 - trace.records[-1].target_acc
        gap = mean_jfpd_diagnostic(
            adapted, source, target.without_labels(), None, JfpdConfig(alpha=cfg["alpha"])
        )
        rows.append([shift, gap, err])
        print(f"shift={shift:g}: mean_jfpd={gap:.5f} target_error={err:.4f}")

    gaps = np.array([r[1] for r in rows])
    errs = np.array([r[2] for r in rows])
    if gaps.std() == 0.0 or errs.std() == 0.0:
        pearson = float("nan")
        print("warning: degenerate sweep (zero variance), Pearson r undefined")
    else:
        pearson = float(np.corrcoef(gaps, errs)[0, 1])

    csv_path = os.path.join(out_dir, "diagnose.csv")
    emit_csv(["shift", "mean_jfpd", "target_error"], rows, csv_path)
    svg_path = os.path.join(out_dir, "diagnose.svg")
    emit_svg_scatter(
        [(r[1], r[2]) for r in rows], "mean JFPD", "target error", svg_path
    )
    _finish(
        out_dir,
        "diagnose",
        cfg,
        ["diagnose.csv", "diagnose.svg"],
        started,
        extra={"pearson_r": pearson},
    )
    print(f"Pearson r(mean JFPD, target error) = {pearson:.4f}")
    print(f"outputs in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", dest="seed")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--gen", dest="gen", choices=["gaussian", "moons", "idx"])
    p.add_argument("--idx-images", dest="idx_images")
    p.add_argument("--idx-labels", dest="idx_labels")
    p.add_argument("--n-per-class", dest="n_per_class")
    p.add_argument("--rotation", dest="rotation_deg")
    p.add_argument("--noise", dest="noise_sigma")


def _add_adapt_flags(p):
    p.add_argument("--checkpoint", dest="checkpoint")
    p.add_argument("--mode", dest="mode", choices=["jfpd", "fgpd", "pgfd", "standard"])
    p.add_argument("--alpha", dest="alpha")
    p.add_argument("--no-trust", dest="no_trust", action="store_const", const="true")
    p.add_argument("--epochs", dest="epochs")
    p.add_argument("--lr", dest="lr")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--proto-k", dest="proto_k")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="jfpd",
        description="Trust-aware joint feature-prediction discrepancy toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="source pretraining")
    _add_common_flags(p)
    p.add_argument("--epochs", dest="pre_epochs")
    p.add_argument("--lr", dest="pre_lr")
    p.add_argument("--batch-size", dest="pre_batch")

    p = sub.add_parser("adapt", help="trust-aware target adaptation")
    _add_common_flags(p)
    _add_adapt_flags(p)

    p = sub.add_parser("ablate-alpha", help="alpha sensitivity sweep")
    _add_common_flags(p)
    _add_adapt_flags(p)
    p.add_argument("--alphas", dest="alphas")
    p.add_argument("--seeds", dest="seeds")

    p = sub.add_parser("diagnose", help="gap-vs-error sweep over shift levels")
    _add_common_flags(p)
    _add_adapt_flags(p)
    p.add_argument("--shifts", dest="shifts")

    return parser


_RUNNERS = {
    "pretrain": cmd_pretrain,
    "adapt": cmd_adapt,
    "ablate-alpha": cmd_ablate_alpha,
    "diagnose": cmd_diagnose,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        file_values = _parse_config_file(args.config) if args.config else {}
        flag_values = {
            k: v
            for k, v in vars(args).items()
            if k not in ("command", "config", "out_dir") and v is not None
        }
        cfg = _merge_config(command, file_values, flag_values)
        out_dir = args.out_dir or os.path.join(
            os.environ.get("JFPD_OUT_DIR", "runs"), command
        )
        os.makedirs(out_dir, exist_ok=True)
        return _RUNNERS[command](cfg, out_dir)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def replay_manifest(manifest_path, out_dir):
    """Re-run the command recorded in a manifest, writing to out_dir.

    The manifest's merged config is replayed verbatim through a temp config
    file, so the rerun produces byte-identical output files.
    """
    from .report import read_manifest

    m = read_manifest(manifest_path)
    lines = [f"{k[4:]}={v}" for k, v in m.items() if k.startswith("cfg.")]
    fd, tmp = tempfile.mkstemp(suffix=".cfg")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        rc = main([m["command"], "--config", tmp, "--out-dir", out_dir])
    finally:
        os.unlink(tmp)
    if rc != 0:
        raise RuntimeError(f"replay of {manifest_path} failed with exit code {rc}")
    return out_dir


if __name__ == "__main__":
    sys.exit(main())

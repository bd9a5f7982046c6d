"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 numeric failure or
divergence (and failed gradient checks), 3 file I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .. import losses as L
from ..errors import FormatError, NumericError, SeglossError, ValidationError
from ..field import GridShape, ProbField, onehot_encode
from ..synth import generate_volume
from ..trainer import PixelModel, train
from . import config as C
from .gradcheck import check_closed_form, check_loss
from .sweep import SweepConfig, export_grid, run_sweep, sweep_config
from .tensorio import read_tensor, write_tensor

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _load_fields(pred_path, ref_path):
    pred = read_tensor(pred_path)
    ref = read_tensor(ref_path)
    if pred.ndim < 2:
        raise ValidationError(f"prediction must have a trailing class axis, got shape {pred.shape}")
    classes = pred.shape[-1]
    grid = pred.shape[:-1]
    if ref.shape == pred.shape:
        labels = np.argmax(ref, axis=-1)
        if not np.array_equal(np.eye(classes)[labels], ref):
            raise ValidationError("one-hot reference must hold exactly one 1 per element")
    elif ref.shape == grid:
        labels = ref
    else:
        raise ValidationError(
            f"shape mismatch: prediction {tuple(pred.shape)} vs reference {tuple(ref.shape)}")
    shape = GridShape(grid) if len(grid) in (2, 3) else int(np.prod(grid))
    p = ProbField(shape, pred.reshape(-1, classes))
    r = onehot_encode(np.asarray(labels).ravel(), classes, shape)
    return p, r


def cmd_loss_eval(args):
    cfg = L.LossConfig(epsilon=args.epsilon, lam=args.lam,
                       wce_weight_source=args.wce_weight_source, volume_floor=args.volume_floor)
    p, r = _load_fields(args.pred, args.ref)
    out = L.get_loss(args.loss)(p, r, cfg)
    print(json.dumps({
        "loss": L.canonical_loss_name(args.loss),
        "value": out.value,
        "grad_norm": float(np.linalg.norm(out.grad)),
        "elements": p.n,
        "classes": p.classes,
    }))
    return EXIT_OK


def cmd_gradcheck(args):
    names = sorted(L.LOSSES) if args.loss == "all" else [args.loss]
    ok = True
    for name in names:
        res = check_loss(name, seeds=args.seeds, tol=args.tol, h=args.h)
        ok &= res.passed
        print(f"{'PASS' if res.passed else 'FAIL'} {res.loss}: {res.cases} cases, "
              f"max relative error {res.max_rel_error:.3e} (tol {res.tol:g})")
    if args.loss in ("all", "gdl", "gdl_v", "gdl_uniform"):
        exact, fd = check_closed_form(seeds=args.seeds, h=args.h)
        passed = exact < 1e-10 and fd < args.tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} gdl closed form: vs analytic {exact:.3e}, "
              f"vs finite differences {fd:.3e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth_gen(args):
    cfg = C.synth_setup(C.read_config(args.config))
    vol = generate_volume(cfg)
    stacked = np.stack([vol.features, vol.label_grid()])
    write_tensor(args.out, stacked)
    print(json.dumps({"dims": list(cfg.dims), "fg_fraction": float(vol.label_grid().mean()),
                      "out": args.out}))
    return EXIT_OK


def cmd_train(args):
    data_cfg, tcfg, model_opts = C.train_setup(C.read_config(args.config))
    vol = generate_volume(data_cfg)
    model = PixelModel.init(tcfg.seed, ndim=len(data_cfg.dims), **model_opts)
    trace = train(model, vol, tcfg)
    try:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace.to_csv())
    except OSError as exc:
        raise OSError(f"cannot write trace to {args.trace}: {exc.strerror}") from exc
    summary = {"loss": tcfg.loss, "iterations": len(trace.iterations),
               "diverged_at": trace.diverged_at}
    if trace.diverged:
        summary["message"] = trace.message
        print(json.dumps(summary))
        return EXIT_NUMERIC
    if len(trace.batch_dsc) >= 200:
        from ..metrics import trace_stats
        st = trace_stats(trace.batch_dsc, 200)
        summary.update(median_dsc=st.median, iqr_dsc=st.iqr)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_sweep(args):
    cfg = sweep_config(C.read_config(args.config)) if args.config else SweepConfig()
    if args.workers:
        cfg = SweepConfig(**{**{k: getattr(cfg, k) for k in SweepConfig.__dataclass_fields__},
                             "workers": args.workers})
    grid = run_sweep(cfg)
    export_grid(grid, args.out)
    diverged = sum(r.diverged for r in grid.records)
    print(json.dumps({"records": len(grid), "diverged": diverged, "out": args.out}))
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="segloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    loss = sub.add_parser("loss", help="evaluate a loss on tensor files")
    loss_sub = loss.add_subparsers(dest="action", parser_class=_Parser)
    loss_sub.required = True
    ev = loss_sub.add_parser("eval")
    ev.add_argument("--loss", required=True)
    ev.add_argument("--pred", required=True, help="SEGT tensor (..., L) of probabilities")
    ev.add_argument("--ref", required=True, help="SEGT tensor of labels or one-hot (..., L)")
    ev.add_argument("--epsilon", type=float, default=L.LossConfig.epsilon)
    ev.add_argument("--lambda", dest="lam", type=float, default=L.LossConfig.lam)
    ev.add_argument("--wce-weight-source", default=L.PREDICTION_SUM,
                    choices=[L.PREDICTION_SUM, L.REFERENCE_SUM])
    ev.add_argument("--volume-floor", type=float, default=L.LossConfig.volume_floor)
    ev.set_defaults(func=cmd_loss_eval)

    gc = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    gc.add_argument("--loss", default="all")
    gc.add_argument("--seeds", type=int, default=20)
    gc.add_argument("--tol", type=float, default=1e-5)
    gc.add_argument("--h", type=float, default=1e-6)
    gc.set_defaults(func=cmd_gradcheck)

    syn = sub.add_parser("synth", help="synthetic data")
    syn_sub = syn.add_subparsers(dest="action", parser_class=_Parser)
    syn_sub.required = True
    gen = syn_sub.add_parser("gen")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_synth_gen)

    tr = sub.add_parser("train", help="train the per-voxel model on synthetic data")
    tr.add_argument("--config", required=True)
    tr.add_argument("--trace", required=True)
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="learning rate x patch size x loss sweep")
    sw.add_argument("--config")
    sw.add_argument("--out", required=True)
    sw.add_argument("--workers", type=int)
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gradcheck" and args.loss != "all":
            L.get_loss(args.loss)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SeglossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

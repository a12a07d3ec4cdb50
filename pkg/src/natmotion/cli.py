"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import checkpoint as ck
from . import data as dt
from . import evaluate as ev
from . import model as md
from . import posenc as pe
from . import training as tr
from .errors import DataError, NumericError
from .skeleton import EULER_ORDERS, GRAPH_TYPES

LAB_GIVEN = 50
LAB_HORIZON = 25


@click.group()
def cli():
    """Non-autoregressive human motion prediction toolkit."""


@cli.command("gen-synthetic")
@click.option("--out", "out_dir", required=True, help="Output dataset directory.")
@click.option("--classes", default=3, show_default=True, type=int)
@click.option("--joints", default=8, show_default=True, type=int)
@click.option("--seqs-per-class", default=60, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def gen_synthetic(out_dir, classes, joints, seqs_per_class, seed):
    """Generate a labeled synthetic motion dataset."""
    spec = dt.SyntheticSpec(class_count=classes, joints=joints,
                            sequences_per_class=seqs_per_class, seed=seed)
    seqs = dt.generate_synthetic(spec)
    dt.save_dataset(out_dir, seqs)
    click.echo(f"wrote {len(seqs)} sequences ({classes} classes) to {out_dir}")


def _load_labeled(data_dir):
    seqs = dt.load_dataset(data_dir)
    trees = {s.tree.parents for s in seqs}
    if len(trees) != 1:
        raise DataError(f"dataset mixes {len(trees)} different kinematic trees")
    return seqs


@cli.command()
@click.option("--data", "data_dir", required=True, help="Dataset directory.")
@click.option("--out", "out_path", required=True, help="Checkpoint path.")
@click.option("--iters", default=600, show_default=True, type=int)
@click.option("--batch", default=60, show_default=True, type=int)
@click.option("--lr", default=0.001, show_default=True, type=float)
@click.option("--decay", default=0.9995, show_default=True, type=float)
@click.option("--clip", default=0.1, show_default=True, type=float)
@click.option("--lambda-pnlty", default=0.01, show_default=True, type=float)
@click.option("--lambda-cls", default=0.01, show_default=True, type=float)
@click.option("--alpha", default=10.0, show_default=True, type=float)
@click.option("--beta", default=500.0, show_default=True, type=float)
@click.option("--ks", default=9, show_default=True, type=int)
@click.option("--graph", default="bidirectional", show_default=True,
              type=click.Choice(GRAPH_TYPES))
@click.option("--n", "given", default=50, show_default=True, type=int,
              help="Given (observed) frames per window.")
@click.option("--m", "horizon", default=10, show_default=True, type=int,
              help="Predicted frames per window.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--log", "log_path", default=None, help="Loss CSV path.")
@click.option("--model", "model_kind", default="nat", show_default=True,
              type=click.Choice(("nat", "ar")),
              help="Train the frame-parallel model or the sequential baseline.")
def train(data_dir, out_path, iters, batch, lr, decay, clip, lambda_pnlty,
          lambda_cls, alpha, beta, ks, graph, given, horizon, seed, log_path,
          model_kind):
    """Train a model on a dataset directory."""
    seqs = _load_labeled(data_dir)
    label_map = dt.action_index_map(seqs)
    cfg = md.ModelConfig(
        tree=seqs[0].tree,
        class_count=max(2, len(label_map)),
        ks_encoder=ks,
        graph_type=graph,
        graph_seed=seed,
        posenc=pe.PosEncConfig(alpha=alpha, beta=beta),
    )
    tcfg = tr.TrainConfig(
        iterations=iters, batch=batch, base_lr=lr, decay=decay, clip=clip,
        lambda_pnlty=lambda_pnlty, lambda_cls=lambda_cls, seed=seed,
        given=given, horizon=horizon,
    )
    params, records = tr.train(seqs, cfg, tcfg, log_path=log_path,
                               model_kind=model_kind)
    ck.save_checkpoint(out_path, params, cfg, model_kind=model_kind,
                       extra={"iterations": iters, "seed": seed,
                              "given": given, "horizon": horizon})
    last = records[-1]
    click.echo(
        f"trained {model_kind} for {len(records)} iterations "
        f"(final total {last.total:.6f}); saved {out_path}"
    )


@cli.command()
@click.option("--ckpt", "ckpt_path", required=True)
@click.option("--input", "input_path", required=True, help="Sequence file.")
@click.option("--m", "horizon", default=10, show_default=True, type=int)
@click.option("--out", "out_path", required=True)
def predict(ckpt_path, input_path, horizon, out_path):
    """Predict future frames for one sequence file."""
    params, cfg, manifest = ck.load_checkpoint(ckpt_path)
    if manifest["model"] != "nat":
        raise DataError("predict needs a nat checkpoint")
    seq = dt.load_sequence(input_path)
    if seq.tree.parents != cfg.tree.parents:
        raise DataError(
            f"sequence tree {seq.tree.parents} does not match the checkpoint"
        )
    pred, probs = md.nat_predict(seq.frames[None], params, cfg, horizon)
    doc = {
        "schema": dt.SCHEMA,
        "action": seq.action,
        "fps": seq.fps,
        "joints": seq.tree.joint_count,
        "parents": list(seq.tree.parents),
        "repr": "quat",
        "frames": pred[0].tolist(),
        "probs": probs[0].tolist(),
    }
    Path(out_path).write_text(json.dumps(doc))
    click.echo(f"predicted {horizon} frames; saved {out_path}")


@cli.command("eval")
@click.option("--ckpt", "ckpt_path", required=True)
@click.option("--data", "data_dir", required=True)
@click.option("--horizons", default="80,160,320,400,560,1000", show_default=True)
@click.option("--euler", default="zyx", show_default=True,
              type=click.Choice(EULER_ORDERS))
@click.option("--out", "out_path", required=True)
def eval_cmd(ckpt_path, data_dir, horizons, euler, out_path):
    """Evaluate a checkpoint on a dataset and write a JSON report."""
    params, cfg, manifest = ck.load_checkpoint(ckpt_path)
    if manifest["model"] != "nat":
        raise DataError("eval needs a nat checkpoint")
    seqs = _load_labeled(data_dir)
    try:
        ms = tuple(int(h) for h in horizons.split(","))
    except ValueError as exc:
        raise click.UsageError(f"bad --horizons value {horizons!r}") from exc
    report = ev.evaluate_model(
        params, cfg, seqs, horizons=ms, euler_order=euler,
        given=manifest["extra"].get("given", 50),
        checkpoint_hash=ck.checkpoint_sha256(ckpt_path),
    )
    ev.save_report(out_path, report)
    shown = ", ".join(f"{k}ms={v:.4f}" for k, v in report.horizons.items())
    click.echo(f"errors: {shown}; o1={report.acc_o1:.3f} o2={report.acc_o2:.3f}")
    click.echo(f"saved {out_path}")


@cli.command()
@click.option("--alpha", default=10.0, show_default=True, type=float)
@click.option("--beta", default=500.0, show_default=True, type=float)
@click.option("--dmodel", default=256, show_default=True, type=int)
@click.option("--len", "length", default=10, show_default=True, type=int)
@click.option("--out", "out_path", required=True)
def posenc(alpha, beta, dmodel, length, out_path):
    """Write the positional-embedding table for frames 1..len as CSV."""
    cfg = pe.PosEncConfig(d_model=dmodel, alpha=alpha, beta=beta)
    table = pe.embedding_table(cfg, length)
    lines = ["t," + ",".join(f"dim{i}" for i in range(dmodel))]
    for t in range(1, length + 1):
        cells = ",".join(repr(float(v)) for v in table[t - 1])
        lines.append(f"{t},{cells}")
    Path(out_path).write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {length} x {dmodel} table to {out_path}")


@cli.group()
def lab():
    """Instrumented experiments."""


@lab.command("error-accum")
@click.option("--nat", "nat_path", required=True, help="Trained nat checkpoint.")
@click.option("--ar", "ar_path", required=True, help="Trained ar checkpoint.")
@click.option("--data", "data_dir", required=True)
@click.option("--delta", default=0.05, show_default=True, type=float)
@click.option("--out", "out_path", required=True)
def error_accum(nat_path, ar_path, data_dir, delta, out_path):
    """Compare how a first-frame perturbation spreads through each decoder."""
    nat_params, nat_cfg, nat_manifest = ck.load_checkpoint(nat_path)
    if nat_manifest["model"] != "nat":
        raise DataError(f"--nat checkpoint {nat_path} is not a nat model")
    ar_params, ar_cfg, ar_manifest = ck.load_checkpoint(ar_path)
    if ar_manifest["model"] != "ar":
        raise DataError(f"--ar checkpoint {ar_path} is not an ar model")
    seqs = _load_labeled(data_dir)
    spec = dt.WindowSpec(given=LAB_GIVEN, horizon=LAB_HORIZON, stride=5)
    xs = [w[0] for s in seqs for w in dt.make_windows(s, spec)]
    if not xs:
        raise DataError(
            f"no windows: sequences shorter than {LAB_GIVEN + LAB_HORIZON} frames"
        )
    curves = ev.error_accumulation(nat_params, nat_cfg, ar_params, ar_cfg,
                                   np.stack(xs), delta, m=LAB_HORIZON)
    ev.write_curves_csv(out_path, curves)
    click.echo(
        f"deviation frame1 nat={curves.nat[0]:.6f} ar={curves.ar[0]:.6f}; "
        f"frame{LAB_HORIZON} nat={curves.nat[-1]:.6f} ar={curves.ar[-1]:.6f}"
    )
    click.echo(f"saved {out_path}")


def main(argv=None):
    """Entry point mapping exceptions onto the exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(3)
    sys.exit(0)

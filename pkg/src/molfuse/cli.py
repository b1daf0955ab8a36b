"""Command-line client.

Every command is a thin wrapper that posts one request to the service. By
default the service runs in-process (no daemon needed); point --server at
a running instance to go over the network instead. Errors print a single
JSON line on stderr and exit with status 1.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx

from .manifest import load_manifest
from .service import create_app


def _post(server: str | None, path: str, payload: dict) -> dict:
    try:
        if server:
            resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
        else:
            async def go():
                transport = httpx.ASGITransport(app=create_app())
                async with httpx.AsyncClient(transport=transport,
                                             base_url="http://molfuse",
                                             timeout=None) as client:
                    return await client.post(path, json=payload)

            resp = asyncio.run(go())
    except Exception as exc:  # transport failures and unhandled app errors
        _fail({"error": type(exc).__name__, "detail": str(exc)})
    if resp.status_code != 200:
        try:
            body = resp.json()
        except ValueError:
            body = {"error": f"http_{resp.status_code}", "detail": resp.text}
        _fail(body)
    return resp.json()


def _fail(body: dict) -> None:
    sys.stderr.write(json.dumps(body, sort_keys=True) + "\n")
    sys.exit(1)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx, server):
    """Multimodal relational pretraining and fusion for molecules."""
    ctx.obj = server


@main.command()
@click.option("--smiles", required=True)
@click.option("--permissive", is_flag=True, default=False,
              help="Accept elements outside the organic subset.")
@click.pass_obj
def parse(server, smiles, permissive):
    """Parse a SMILES string and print the atom/bond summary as JSON."""
    _emit(_post(server, "/parse", {"smiles": smiles, "permissive": permissive}))


@main.command()
@click.option("--smiles", "smiles_list", multiple=True, help="Repeatable.")
@click.option("--in", "molecules_csv", type=click.Path(), default=None,
              help="Molecule CSV (id,smiles,...).")
@click.option("--radius", default=2, show_default=True)
@click.option("--width", default=2048, show_default=True)
@click.option("--permissive", is_flag=True, default=False)
@click.pass_obj
def fingerprint(server, smiles_list, molecules_csv, radius, width, permissive):
    """Print hex fingerprints as CSV (id,hex,set_count)."""
    payload = {
        "smiles": list(smiles_list) or None,
        "molecules_csv": molecules_csv,
        "radius": radius,
        "width": width,
        "permissive": permissive,
    }
    resp = _post(server, "/fingerprint", payload)
    sys.stdout.write("id,hex,set_count\n")
    for entry in resp["fingerprints"]:
        sys.stdout.write(f"{entry['id']},{entry['hex']},{entry['set_count']}\n")


@main.command()
@click.option("--in", "molecules_csv", type=click.Path(), required=True)
@click.option("--modality", required=True)
@click.option("--embeddings", "embeddings_csv", type=click.Path(), default=None)
@click.option("--peaks", "peaks_jsonl", type=click.Path(), default=None)
@click.option("--out", "out_csv", type=click.Path(), default=None)
@click.option("--exclude-self-pairs", is_flag=True, default=False)
@click.option("--tau1", default=1e-5, show_default=True)
@click.option("--tau2", default=10.0, show_default=True)
@click.pass_obj
def similarity(server, molecules_csv, modality, embeddings_csv, peaks_jsonl,
               out_csv, exclude_self_pairs, tau1, tau2):
    """Emit the row-stochastic target similarity matrix for one modality."""
    resp = _post(server, "/similarity", {
        "molecules_csv": molecules_csv,
        "modality": modality,
        "embeddings_csv": embeddings_csv,
        "peaks_jsonl": peaks_jsonl,
        "out_csv": out_csv,
        "include_self_pairs": not exclude_self_pairs,
        "tau1": tau1,
        "tau2": tau2,
    })
    if out_csv:
        _emit({k: resp[k] for k in ("modality", "level", "n", "out_csv",
                                    "max_row_sum_error")})
    elif resp["matrix"] is not None:
        from .data import format_float

        sys.stdout.write("id," + ",".join(resp["ids"]) + "\n")
        for name, row in zip(resp["ids"], resp["matrix"]):
            sys.stdout.write(name + "," + ",".join(format_float(v) for v in row) + "\n")
    else:
        _fail({"error": "OutputRequired",
               "detail": f"{resp['n']} instances exceed inline output; pass --out"})


@main.command()
@click.option("--in", "molecules_csv", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--embeddings", "embeddings", multiple=True, metavar="MODALITY=CSV",
              help="Repeatable modality=path pairs.")
@click.option("--peaks", "peaks_jsonl", type=click.Path(), default=None)
@click.option("--modalities", default=None, help="Comma list; overrides config.")
@click.option("--early/--no-early", "include_early", default=False,
              help="Also train the early-fused encoder.")
@click.option("--seed", type=int, default=None)
@click.option("--from-manifest", "manifest_path", type=click.Path(), default=None,
              help="Re-run the exact request recorded in a manifest.")
@click.pass_obj
def pretrain(server, molecules_csv, out_dir, config_path, embeddings, peaks_jsonl,
             modalities, include_early, seed, manifest_path):
    """Pretrain one encoder replica per modality against its targets."""
    if manifest_path:
        payload = load_manifest(manifest_path)["config"]["request"]
    else:
        if not molecules_csv or not out_dir:
            _fail({"error": "UsageError", "detail": "--in and --out-dir are required"})
        payload = {
            "molecules_csv": molecules_csv,
            "out_dir": out_dir,
            "config_path": config_path,
            "embeddings_csv": dict(e.split("=", 1) for e in embeddings),
            "peaks_jsonl": peaks_jsonl,
            "modalities": modalities.split(",") if modalities else None,
            "include_early": include_early,
            "seed": seed,
        }
    _emit(_post(server, "/pretrain", payload))


@main.command()
@click.option("--in", "molecules_csv", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["none", "unimodal", "early",
                                           "intermediate", "late"]), default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--checkpoints", "checkpoint_dir", type=click.Path(), default=None)
@click.option("--modality", default=None, help="Modality for unimodal mode.")
@click.option("--modalities", default=None, help="Comma list for fusion modes.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--from-manifest", "manifest_path", type=click.Path(), default=None)
@click.pass_obj
def finetune(server, molecules_csv, mode, out_dir, checkpoint_dir, modality,
             modalities, config_path, seed, manifest_path):
    """Fine-tune on a labeled dataset under one fusion mode."""
    if manifest_path:
        payload = load_manifest(manifest_path)["config"]["request"]
    else:
        if not molecules_csv or not mode or not out_dir:
            _fail({"error": "UsageError",
                   "detail": "--in, --mode and --out-dir are required"})
        payload = {
            "molecules_csv": molecules_csv,
            "mode": mode,
            "out_dir": out_dir,
            "checkpoint_dir": checkpoint_dir,
            "modality": modality,
            "modalities": modalities.split(",") if modalities else None,
            "config_path": config_path,
            "seed": seed,
        }
    _emit(_post(server, "/finetune", payload))


@main.command()
@click.option("--pred", "predictions_csv", type=click.Path(), required=True)
@click.option("--labels", "labels_csv", type=click.Path(), required=True)
@click.option("--metric", type=click.Choice(["roc_auc", "rmse", "pearson"]),
              required=True)
@click.pass_obj
def evaluate(server, predictions_csv, labels_csv, metric):
    """Recompute a metric from a predictions file against labels."""
    _emit(_post(server, "/evaluate", {
        "predictions_csv": predictions_csv,
        "labels_csv": labels_csv,
        "metric": metric,
    }))


@main.command()
@click.option("--in", "molecules_csv", type=click.Path(), required=True)
@click.option("--embeddings", "embeddings", multiple=True, metavar="MODALITY=CSV")
@click.option("--peaks", "peaks_jsonl", type=click.Path(), default=None)
@click.option("--no-fingerprint", "skip_fp", is_flag=True, default=False)
@click.option("--ridge-lambda", default=1e-6, show_default=True)
@click.option("--gain-threshold", default=0.15, show_default=True)
@click.option("--out", "out_csv", type=click.Path(), default=None)
@click.pass_obj
def sensitivity(server, molecules_csv, embeddings, peaks_jsonl, skip_fp,
                ridge_lambda, gain_threshold, out_csv):
    """Per-modality relevance probe and fusion-strategy recommendation."""
    _emit(_post(server, "/sensitivity", {
        "molecules_csv": molecules_csv,
        "embeddings_csv": dict(e.split("=", 1) for e in embeddings),
        "peaks_jsonl": peaks_jsonl,
        "include_fingerprint": not skip_fp,
        "ridge_lambda": ridge_lambda,
        "gain_threshold": gain_threshold,
        "out_csv": out_csv,
    }))


@main.command("fuse-report")
@click.option("--in", "molecules_csv", type=click.Path(), required=True)
@click.option("--model", "model_checkpoint", type=click.Path(), required=True,
              help="Path stem of a late-mode fine-tuned model checkpoint.")
@click.option("--out", "out_csv", type=click.Path(), default=None)
@click.pass_obj
def fuse_report(server, molecules_csv, model_checkpoint, out_csv):
    """Late-fusion contribution report: id, modality, w, p, w*p."""
    _emit(_post(server, "/fuse-report", {
        "molecules_csv": molecules_csv,
        "model_checkpoint": model_checkpoint,
        "out_csv": out_csv,
    }))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

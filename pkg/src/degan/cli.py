"""``degan`` command line: one executable, one subcommand per pipeline stage.

Exit codes: 0 success, 1 training/numeric failure or failed self-check,
2 bad input (invalid argument, configuration error, missing file),
3 checksum mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, persist
from .config import RunConfig
from .errors import ConfigurationError, DeganError, FormatError, InvalidArgument, TrainingError
from .numcore import presets
from .numcore.rng import Rng

log = logging.getLogger("degan")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CHECKSUM = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INPUT):
        super().__init__(msg)
        self.code = code


# -- shared helpers -----------------------------------------------------------


def _value_range(cfg: RunConfig) -> tuple:
    rng = cfg.dataset.range
    if rng == "auto":
        head = presets.OUTPUT_ACTIVATION.get(cfg.model.preset, "sigmoid")
        return (0.0, 1.0) if head == "sigmoid" else (-1.0, 1.0)
    try:
        lo, hi = (float(v) for v in rng.split(","))
    except ValueError:
        raise ConfigurationError(f"dataset.range must be 'auto' or 'lo,hi', got {rng!r}") from None
    return lo, hi


def load_dataset(name: str, path, subset=None, split="train", seed=0) -> data.Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset path not found: {path}")
    if name == "mnist":
        return data.load_mnist(path, subset, split, seed)
    if name == "cifar10":
        return data.load_cifar10(path, subset, seed)
    if name == "degt":
        ds = data.load_image_dir(path)
        return data.take_subset(ds, subset, seed) if subset else ds
    raise ConfigurationError(f"unknown dataset {name!r}; expected mnist, cifar10 or degt")


def config_dataset(cfg: RunConfig) -> data.Dataset:
    d = cfg.dataset
    ds = load_dataset(d.name, d.path, d.subset, d.split, cfg.train.seed)
    target = _value_range(cfg)
    return ds if tuple(ds.value_range) == target else ds.to_range(target)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    t, o, d = cfg.train, cfg.output, cfg.dataset
    for key, block in (("seed", t), ("epochs", t), ("run_dir", o), ("subset", d)):
        val = getattr(args, key, None)
        if val is not None:
            setattr(block, key, val)
    return cfg


def _prepare_run_dir(cfg: RunConfig) -> Path:
    run = Path(cfg.output.run_dir)
    (run / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run / "samples").mkdir(exist_ok=True)
    cfg.save(run / "config.json")
    versions = {"degan": __version__, "numpy": np.__version__, "python": platform.python_version()}
    (run / "versions.json").write_text(json.dumps(versions, indent=2) + "\n")
    return run


def _write_grid(path, images, value_range):
    data.write_pnm(path, data.image_grid(images), value_range)


def _load_checkpoint(path, expect):
    if path is None:
        raise ConfigurationError(f"a {expect} checkpoint is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return persist.load_model(path, expect)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- data ---------------------------------------------------------------------


def cmd_data(args) -> int:
    if args.action == "inspect":
        ds = load_dataset(args.dataset, args.path, args.subset, args.split)
        print(ds.describe())
        return EXIT_OK
    dest = Path(args.dest)
    if args.url:
        targets = [(args.url, dest, args.sha256, args.md5)]
    else:
        base = args.mirror or data.MNIST_MIRROR
        targets = [(base + fn, dest / fn, None, md5) for fn, md5 in data.MNIST_SOURCES.items()]
    for url, path, sha, md5 in targets:
        try:
            data.fetch(url, path, sha256=sha, md5=md5)
        except data.ChecksumMismatch as e:
            raise CliError(str(e), EXIT_CHECKSUM) from e
        except OSError as e:
            raise CliError(f"download of {url} failed: {e}", EXIT_FAIL) from e
        print(f"ok {path}")
    return EXIT_OK


# -- training -----------------------------------------------------------------


def cmd_train_vae(args) -> int:
    from .vae import build_vae, reconstruct, train_vae

    cfg = _load_config(args)
    t, m = cfg.train, cfg.model
    ds = config_dataset(cfg)
    run = _prepare_run_dir(cfg)
    rng = Rng(t.seed)
    vae = build_vae(m.preset, m.latent_dim, m.width_mult, rng.child("vae-init"),
                    m.layers.get("encoder") and _spec(m.layers["encoder"]),
                    m.layers.get("decoder") and _spec(m.layers["decoder"]))

    def on_epoch(epoch):
        persist.save_model(run / "checkpoints" / f"vae_epoch{epoch + 1}.degc", vae)

    hist = train_vae(ds.images, vae, rng.child("vae-train"), t.vae_epochs, t.vae_batch_size, t.vae_lr,
                     t.vae_optimizer, t.kl_weight, on_epoch)
    _write_rows(run / "vae_losses.csv", ("step", "loss", "kl", "recon"),
                ([h["step"], repr(h["loss"]), repr(h["kl"]), repr(h["recon"])] for h in hist))
    persist.save_model(run / "vae.degc", vae)
    n = min(cfg.output.sample_grid, len(ds))
    x = ds.images[:n]
    _write_grid(run / "samples" / "vae_inputs.pgm", x, ds.value_range)
    _write_grid(run / "samples" / "vae_reconstructions.pgm", reconstruct(vae, x), ds.value_range)
    print(f"trained VAE for {len(hist)} steps; final loss {hist[-1]['loss']:.4f}; checkpoint {run / 'vae.degc'}")
    return EXIT_OK


def _spec(d):
    from .numcore.nn import NetworkSpec

    return NetworkSpec.from_dict(d)


def _noise_kind(name: str) -> str:
    return name.replace("-", "_")


def cmd_train_gan(args) -> int:
    from .adversarial import GanHyperparams, build_gan, generate, train_degan
    from .noisebridge import noise_source

    cfg = _load_config(args)
    t, m = cfg.train, cfg.model
    if args.noise is not None:
        t.noise = _noise_kind(args.noise)
    vae = None
    if t.noise == "decoder_encoder":
        if args.vae is None:
            raise ConfigurationError("decoder-encoder noise needs a trained VAE (--vae CHECKPOINT)")
        vae = _load_checkpoint(args.vae, "vae")
    ds = config_dataset(cfg)
    run = _prepare_run_dir(cfg)
    if vae is not None:
        shutil.copyfile(args.vae, run / "vae.degc")
    rng = Rng(t.seed)
    gan = build_gan(m.preset, m.latent_dim, m.width_mult, rng.child("gan-init"), m.probe_layer,
                    m.layers.get("generator") and _spec(m.layers["generator"]),
                    m.layers.get("discriminator") and _spec(m.layers["discriminator"]))
    source = noise_source(t.noise, rng.child("noise"), vae, m.latent_dim, t.noise_mode)
    hp = GanHyperparams(t.lr, t.batch_size, t.lambda1, t.lambda2, t.epochs, t.optimizer, t.beta1, t.momentum)

    def on_epoch(epoch, model):
        grid_src = noise_source(t.noise, rng.child("grid"), vae, m.latent_dim, t.noise_mode)
        _write_grid(run / "samples" / f"epoch{epoch + 1}.pgm", generate(model, grid_src, cfg.output.sample_grid),
                    ds.value_range)

    try:
        hist = train_degan(ds.images, gan, source, hp, rng.child("train"), run, on_epoch)
    except TrainingError as e:
        raise CliError(f"{e} (last checkpoint: {e.checkpoint})", EXIT_FAIL) from e
    persist.save_model(run / "gan.degc", gan)
    out_src = noise_source(t.noise, rng.child("generated"), vae, m.latent_dim, t.noise_mode)
    data.save_image_dir(run / "generated", generate(gan, out_src, args.generate))
    last = hist[-1]
    print(f"trained GAN ({t.noise} noise) for {len(hist)} steps; final d_loss {last['d_loss']:.4f} "
          f"g_loss {last['g_loss']:.4f}; run directory {run}")
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    from .metrics import train_classifier

    train = load_dataset(args.dataset, args.path, args.subset, "train", args.seed)
    test = load_dataset(args.dataset, args.path, args.test_subset, "test", args.seed) \
        if args.dataset == "mnist" else None
    clf = train_classifier(train, test, Rng(args.seed), epochs=args.epochs)
    persist.save_model(args.out, clf)
    acc = "n/a" if clf.test_accuracy is None else f"{clf.test_accuracy:.4f}"
    print(f"classifier saved to {args.out}; test accuracy {acc}")
    return EXIT_OK


# -- idim -----------------------------------------------------------------------


def _idim_points(args) -> np.ndarray:
    src = args.input
    if src.startswith("synth:"):
        # synth:KIND[:intrinsic[:ambient]], e.g. synth:line:1:3 or synth:gaussian_d:5:50
        parts = src.split(":")[1:]
        kind = parts[0]
        intrinsic = int(parts[1]) if len(parts) > 1 else None
        ambient = int(parts[2]) if len(parts) > 2 else max(3, (intrinsic or 1) + 1)
        return data.synth_manifold(kind, args.sample or 2000, ambient, intrinsic, rng=Rng(args.seed))
    path = Path(src)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if path.suffix == ".csv":
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        pts = load_dataset(args.dataset, path).images
    pts = pts.reshape(len(pts), -1)
    if args.sample and args.sample < len(pts):
        pts = pts[Rng(args.seed).permutation(len(pts))[:args.sample]]
    return pts


def cmd_idim(args) -> int:
    from .idim import estimate_idim, recommend_noise_dim

    pts = _idim_points(args)
    curve = estimate_idim(pts, args.k_min, args.k_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curve.write_csv(out / "idim_curve.csv")
    dim, text = recommend_noise_dim(curve)
    summary = curve.summary() | {"recommended_noise_dim": dim, "rationale": text}
    _write_json(out / "idim_summary.json", summary)
    print(f"M_final = {curve.M_final:.3f} over n={curve.n_points} points in R^{curve.ambient_dim}")
    print(text)
    for w in curve.warnings:
        print(f"warning: {w}")
    return EXIT_OK


# -- eval -----------------------------------------------------------------------


def _reference(args):
    return load_dataset(args.ref_dataset, args.reference, args.ref_subset, args.ref_split)


def cmd_eval(args) -> int:
    from .metrics import bucket_by_class, quality_score, rdd

    clf = _load_checkpoint(args.classifier, "classifier")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.action == "quality":
        imgs = _generated(args).images
        rep = quality_score(clf, imgs)
        _write_json(out / "quality.json", rep.to_dict())
        _write_rows(out / "quality.csv", ("class", "quality"), sorted(rep.per_class.items()))
        print(f"{rep.mode}: {rep.overall:.4f} over {rep.count} images")
    elif args.action == "diversity":
        imgs = _generated(args).images
        ref = _reference(args)
        if ref.labels is None:
            raise InvalidArgument("diversity needs a labeled reference dataset")
        rep = rdd(bucket_by_class(imgs, clf.predict(imgs)), bucket_by_class(ref.images, ref.labels))
        _write_json(out / "diversity.json", rep.to_dict())
        _write_rows(out / "diversity.csv", *_split_rows(rep.rows()))
        print(f"average rdd: {rep.average_rdd:.4f}" + (f" (missing classes {rep.missing})" if rep.missing else ""))
    else:
        rows = sweep(Path(args.run), clf, args.n, args.seed)
        _write_rows(out / "convergence.csv", ("epoch", "accuracy"), ((e, repr(a)) for e, a in rows))
        for e, a in rows:
            print(f"epoch {e}: {a:.4f}")
    return EXIT_OK


def _split_rows(rows):
    rows = list(rows)
    return rows[0], rows[1:]


def _generated(args):
    if args.generated is None:
        raise ConfigurationError("--generated DIR is required")
    path = Path(args.generated)
    if not path.exists():
        raise FileNotFoundError(f"generated-image directory not found: {path}")
    return data.load_image_dir(path)


def sweep(run: Path, clf, n=500, seed=0) -> list:
    """Recognizability of ``n`` samples from every epoch checkpoint in ``run``."""
    from .adversarial import generate
    from .metrics import quality_score
    from .noisebridge import noise_source

    cfg_path = run / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"not a run directory (no config.json): {run}")
    cfg = RunConfig.load(cfg_path)
    ckpts = sorted(run.glob("checkpoints/gan_epoch*.degc"), key=lambda p: int(p.stem[len("gan_epoch"):]))
    if not ckpts:
        raise FileNotFoundError(f"no GAN epoch checkpoints under {run / 'checkpoints'}")
    vae = persist.load_model(run / "vae.degc", "vae") if cfg.train.noise == "decoder_encoder" else None
    rows = []
    for ck in ckpts:
        gan = persist.load_model(ck, "gan")
        src = noise_source(cfg.train.noise, Rng(seed).child("sweep"), vae, gan.latent_dim, cfg.train.noise_mode)
        rows.append((int(ck.stem[len("gan_epoch"):]), quality_score(clf, generate(gan, src, n)).overall))
    return rows


# -- viz-noise ------------------------------------------------------------------


def cmd_viz_noise(args) -> int:
    from .metrics import pca_embed
    from .noisebridge import anisotropy, covariance_eigenvalues, shape_noise

    vae = _load_checkpoint(args.vae, "vae")
    if args.n < 2:
        raise InvalidArgument(f"--n must be at least 2, got {args.n}")
    rng = Rng(args.seed)
    z = rng.child("raw").normal((args.n, vae.latent_dim))
    z_shaped = shape_noise(vae, z)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for tag, vecs in (("raw", z), ("shaped", z_shaped)):
        emb = pca_embed(vecs)
        _write_rows(out / f"noise_{tag}.csv", ("x", "y", "provenance"),
                    ([repr(float(x)), repr(float(y)), tag] for x, y in emb.embedding))
        ev = covariance_eigenvalues(vecs)
        summary[tag] = {"eigenvalues": ev.tolist(), "anisotropy": anisotropy(vecs),
                        "explained_2d": emb.explained}
    _write_json(out / "noise_eigen.json", summary)
    print(f"anisotropy raw {summary['raw']['anisotropy']:.3g}, shaped {summary['shaped']['anisotropy']:.3g}")
    return EXIT_OK


# -- gradcheck ------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    cases = gradcheck.corrupted(args.corrupt) if args.corrupt else None
    results = gradcheck.run_suite(args.instances, args.seed, cases=cases)
    print(gradcheck.format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"all {len(results)} ops pass")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degan", description="Decoder-encoder GAN toolkit")
    p.add_argument("--version", action="version", version=f"degan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("data", help="fetch or inspect datasets")
    d.add_argument("action", choices=("fetch", "inspect"))
    d.add_argument("--dataset", default="mnist", choices=("mnist", "cifar10", "degt"))
    d.add_argument("--path", default="data/mnist", help="dataset directory (inspect)")
    d.add_argument("--split", default="train", choices=("train", "test"))
    d.add_argument("--subset", type=int)
    d.add_argument("--dest", default="data/mnist", help="download target (fetch)")
    d.add_argument("--url", help="fetch a single file instead of the MNIST set")
    d.add_argument("--mirror", help="base URL for the MNIST files")
    d.add_argument("--sha256")
    d.add_argument("--md5")
    d.set_defaults(func=cmd_data)

    def run_flags(q):
        q.add_argument("--config", help="RunConfig JSON; defaults apply to missing keys")
        q.add_argument("--seed", type=int)
        q.add_argument("--epochs", type=int)
        q.add_argument("--subset", type=int)
        q.add_argument("--run-dir", dest="run_dir")

    v = sub.add_parser("train-vae", help="pre-train the VAE used for noise shaping")
    run_flags(v)
    v.set_defaults(func=cmd_train_vae)

    g = sub.add_parser("train-gan", help="train the GAN with gaussian or decoder-encoder noise")
    run_flags(g)
    g.add_argument("--noise", choices=("gaussian", "decoder-encoder", "decoder_encoder"))
    g.add_argument("--vae", help="VAE checkpoint (required for decoder-encoder noise)")
    g.add_argument("--generate", type=int, default=500, help="images written to run_dir/generated")
    g.set_defaults(func=cmd_train_gan)

    c = sub.add_parser("train-classifier", help="train the CNN used by the quality metrics")
    c.add_argument("--dataset", default="mnist", choices=("mnist", "cifar10"))
    c.add_argument("--path", default="data/mnist")
    c.add_argument("--subset", type=int)
    c.add_argument("--test-subset", type=int, dest="test_subset")
    c.add_argument("--epochs", type=int, default=12)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="runs/classifier.degc")
    c.set_defaults(func=cmd_train_classifier)

    i = sub.add_parser("idim", help="estimate intrinsic dimension")
    i.add_argument("--input", required=True,
                   help="dataset directory, CSV of points, or synth:KIND[:d[:ambient]]")
    i.add_argument("--dataset", default="mnist", choices=("mnist", "cifar10", "degt"))
    i.add_argument("--k-min", type=int, default=5, dest="k_min")
    i.add_argument("--k-max", type=int, default=30, dest="k_max")
    i.add_argument("--sample", type=int)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", default="runs/idim")
    i.set_defaults(func=cmd_idim)

    e = sub.add_parser("eval", help="quality, diversity or per-epoch sweep")
    e.add_argument("action", choices=("quality", "diversity", "sweep"))
    e.add_argument("--classifier", required=True)
    e.add_argument("--generated", help="directory of .degt images")
    e.add_argument("--reference", default="data/mnist")
    e.add_argument("--ref-dataset", default="mnist", dest="ref_dataset")
    e.add_argument("--ref-split", default="test", dest="ref_split")
    e.add_argument("--ref-subset", type=int, dest="ref_subset")
    e.add_argument("--run", help="run directory (sweep)")
    e.add_argument("--n", type=int, default=500)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(func=cmd_eval)

    z = sub.add_parser("viz-noise", help="PCA embeddings of raw and shaped noise")
    z.add_argument("--vae", required=True)
    z.add_argument("--n", type=int, default=1000)
    z.add_argument("--seed", type=int, default=0)
    z.add_argument("--out", default="runs/viz-noise")
    z.set_defaults(func=cmd_viz_noise)

    k = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    k.add_argument("--instances", type=int, default=10)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--corrupt", help=argparse.SUPPRESS)
    k.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "eval" and args.action == "sweep" and not args.run:
        print("error: eval sweep needs --run", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidArgument, FormatError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except DeganError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

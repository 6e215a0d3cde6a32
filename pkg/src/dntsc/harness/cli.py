"""Command line entry point: train, encode, decode, simulate, eval, plot, synth.

Every command takes ``--config FILE`` (flat key = value) plus ``--set
key=value`` overrides and writes ``manifest.json`` into its output directory.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .. import __version__
from ..channel import ChannelSpec
from ..exceptions import ConfigurationError, DNTSCError
from ..jscc import DEFAULT_BANDWIDTHS
from ..models import DistributedCodec, NTSCCSystem, NTSCSystem, SystemOptions
from ..quant_coding import Bitstream
from ..training import TrainConfig, train, write_log
from ..transforms import TransformConfig
from . import config as cfgmod
from .data import DatasetSpec, load_stereo, preprocess, stack_pairs, synth_pairs
from .evaluate import evaluate_sweep, param_count, plot, points_csv, points_json, read_points


def transform_config(cfg):
    base = {"micro": TransformConfig.micro, "desk": TransformConfig.desk, "full": TransformConfig.full}
    if cfg["preset"] not in base:
        raise ConfigurationError(f"preset must be one of {sorted(base)}")
    d = base[cfg["preset"]](seed=cfg["seed"]).to_dict()
    for key, field in (("channels", "channels_per_stage"), ("blocks", "blocks_per_stage"), ("heads", "heads_per_stage")):
        if cfg[key]:
            d[field] = list(cfg[key])
    for key in ("hyper_channels", "loc_width"):
        if cfg[key]:
            d[key] = cfg[key]
    d["window_size"], d["shift_size"] = cfg["window_size"], cfg["shift_size"]
    return TransformConfig.from_dict(d)


def system_options(cfg):
    return SystemOptions(kind=cfg["pipeline"], K=cfg["K"], joint_hyper=cfg["joint_hyper"], side_info=cfg["side_info"],
                         bandwidths=cfg["bandwidths"] or DEFAULT_BANDWIDTHS, eta=cfg["eta"],
                         jscc_width=cfg["jscc_width"], jscc_heads=cfg["jscc_heads"], power=cfg["power"],
                         tied_init=cfg["tied_init"])


def train_config(cfg):
    return TrainConfig(pipeline=cfg["pipeline"], epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       lr_init=cfg["lr_init"], lr_final=cfg["lr_final"], seed=cfg["seed"], snr_db=cfg["snr_db"],
                       weight=cfg["weight"], eta=cfg["eta"], distortion_kind=cfg["distortion"],
                       steps_per_epoch=cfg["steps_per_epoch"], checkpoint_every=cfg["checkpoint_every"],
                       grad_clip=cfg["grad_clip"], prior_lr_scale=cfg["prior_lr_scale"])


def channel_spec(cfg):
    return ChannelSpec(snr_db=cfg["snr_db"], power=cfg["power"], seed=cfg["seed"], snr_db_user2=cfg["snr_db_user2"])


def build_model(cfg):
    cls = NTSCSystem if cfg["pipeline"] == "ntsc" else NTSCCSystem
    return cls(transform_config(cfg), system_options(cfg))


def dataset(cfg, split):
    """Pairs of the requested split as two (n, 3, H, W) float32 tensors."""
    if cfg["data"] == "synth":
        n = {"train": cfg["synth_train"], "val": cfg["synth_val"], "test": cfg["synth_test"]}[split]
        offset = {"train": 0, "val": 1, "test": 2}[split]
        return stack_pairs(synth_pairs(n, (cfg["synth_height"], cfg["synth_width"]), cfg["homography_range"],
                                       cfg["noise_level"], seed=cfg["seed"] * 3 + offset))
    if cfg["data"] == "dir":
        if not cfg["data_root"]:
            raise ConfigurationError("data = dir needs data_root")
        return stack_pairs(load_stereo(DatasetSpec(cfg["data_root"], cfg["recipe"], split, shuffle_seed=-1)))
    raise ConfigurationError("data must be 'synth' or 'dir'")


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg, outputs, extra=None):
    out = Path(out)
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfgmod.to_json(cfg),
        "seeds": {"seed": cfg["seed"], "channel_user1": ChannelSpec(seed=cfg["seed"]).stream_seed(1),
                  "channel_user2": ChannelSpec(seed=cfg["seed"]).stream_seed(2)},
        "outputs": {Path(p).name: _digest(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _save_png(x, path):
    arr = np.clip(np.round(x.detach().double().numpy().transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG", optimize=False)


def _load_png(path, recipe):
    with Image.open(path) as img:
        x = preprocess(img, recipe)
    return torch.as_tensor(x.transpose(2, 0, 1), dtype=torch.float32)[None].contiguous()


# -- commands --------------------------------------------------------------

def cmd_synth(args, cfg):
    out = Path(args.out)
    (out / "left").mkdir(parents=True, exist_ok=True)
    (out / "right").mkdir(parents=True, exist_ok=True)
    files, homographies = [], {}
    for p in synth_pairs(args.n or cfg["synth_test"], (cfg["synth_height"], cfg["synth_width"]),
                         cfg["homography_range"], cfg["noise_level"], seed=cfg["seed"]):
        for side, x in (("left", p.x1), ("right", p.x2)):
            path = out / side / f"{p.name}.png"
            _save_png(torch.as_tensor(x.transpose(2, 0, 1)), path)
            files.append(path)
        homographies[p.name] = p.homography.tolist()
    hpath = out / "homographies.json"
    hpath.write_text(json.dumps(homographies, indent=1, sort_keys=True) + "\n")
    write_manifest(out, "synth", cfg, files + [hpath])


def cmd_train(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    tc = train_config(cfg)
    result = train(tc, model, dataset(cfg, "train"), dataset(cfg, "val"), out_dir=out, resume=args.resume)
    final = out / "model.dntx"
    model.save(final, {"train": tc.to_dict()})
    log = out / "metrics.csv"
    write_log(result.log, log)
    write_manifest(out, "train", cfg, [final, log], {"param_count": param_count(model)})


def _load(args):
    return DistributedCodec.load(args.checkpoint)


def cmd_encode(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _load(args)
    if not isinstance(model, NTSCSystem):
        raise ConfigurationError("encode needs a bitstream (ntsc) checkpoint")
    x1, x2 = _load_png(args.left, args.recipe), _load_png(args.right, args.recipe)
    b1, b2, acct = model.compress(x1, x2)
    paths = [out / "user1.dntc", out / "user2.dntc", out / "accounting.json"]
    paths[0].write_bytes(b1.tobytes())
    paths[1].write_bytes(b2.tobytes())
    paths[2].write_text(json.dumps(acct, indent=1, sort_keys=True) + "\n")
    write_manifest(out, "encode", cfg, paths)


def cmd_decode(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _load(args)
    src = Path(args.input)
    s1 = Bitstream.frombytes((src / "user1.dntc").read_bytes())
    s2 = Bitstream.frombytes((src / "user2.dntc").read_bytes())
    h1, h2 = model.decompress(s1, s2)
    paths = [out / "user1.png", out / "user2.png"]
    _save_png(h1[0], paths[0])
    _save_png(h2[0], paths[1])
    write_manifest(out, "decode", cfg, paths)


def cmd_simulate(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = _load(args)
    if not isinstance(model, NTSCCSystem):
        raise ConfigurationError("simulate needs a JSCC (ntscc) checkpoint")
    spec = channel_spec(cfg)
    x1, x2 = _load_png(args.left, args.recipe), _load_png(args.right, args.recipe)
    h1, h2, rates, tx, _ = model.simulate(x1, x2, spec)
    paths = [out / "user1.png", out / "user2.png"]
    _save_png(h1[0], paths[0])
    _save_png(h2[0], paths[1])
    sim = {"snr_db": spec.snr_db, "snr_db_user2": spec.snr_db_user2, "channel_seed": spec.seed,
           "users": {str(u): {"k_self": list(tx[u - 1][0].k_self), "k_peer_est": list(tx[u - 1][0].k_peer_est),
                              "n": rates[0][f"n{u}"], "r": rates[0][f"r{u}"]} for u in (1, 2)},
           "hyper_joint_bits": rates[0]["hyper_joint_bits"]}
    spath = out / "simulation.json"
    spath.write_text(json.dumps(sim, indent=1, sort_keys=True) + "\n")
    write_manifest(out, "simulate", cfg, paths + [spath], {"simulation": sim})


def cmd_eval(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snr = cfg["snr_db"] if cfg["pipeline"] == "ntscc" else None
    points = evaluate_sweep(args.checkpoints, dataset(cfg, "test"), seed=cfg["seed"], snr_db=snr, label=args.label)
    paths = [out / "rd.csv", out / "rd.json"]
    points_csv(points, paths[0])
    points_json(points, paths[1])
    write_manifest(out, "eval", cfg, paths)


def cmd_plot(args, cfg):
    points = [p for path in args.csv for p in read_points(path)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot(points, out, title=args.title)
    write_manifest(out.parent, "plot", cfg, [out])


COMMANDS = {"train": cmd_train, "encode": cmd_encode, "decode": cmd_decode, "simulate": cmd_simulate,
            "eval": cmd_eval, "plot": cmd_plot, "synth": cmd_synth}


def build_parser():
    parser = argparse.ArgumentParser(prog="dntsc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", required=True, help="output directory (file for plot)")
        return p

    p = add("train", "train a system and write checkpoints, metrics.csv and a manifest")
    p.add_argument("--resume", help="checkpoint to continue from")
    for name, help_ in (("encode", "encode a stereo pair into two bitstreams"),
                        ("simulate", "send a stereo pair over the simulated AWGN channels")):
        p = add(name, help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--left", required=True)
        p.add_argument("--right", required=True)
        p.add_argument("--recipe", default="none", choices=("kitti", "cityscapes", "none"))
    p = add("decode", "decode a pair of bitstreams written by encode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="directory holding user1.dntc and user2.dntc")
    p = add("eval", "RD points of one or more checkpoints on the test split")
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--label", default=None)
    p = add("plot", "plot RD CSV files")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--title", default="")
    p = add("synth", "write a synthetic stereo dataset as PNG files")
    p.add_argument("--n", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    torch.use_deterministic_algorithms(True)
    try:
        cfg = cfgmod.resolve(args.config, args.set)
        COMMANDS[args.command](args, cfg)
    except DNTSCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

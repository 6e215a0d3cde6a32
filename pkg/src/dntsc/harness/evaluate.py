"""Rate-distortion evaluation, deterministic plots and parameter counts."""

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..channel import ChannelSpec
from ..exceptions import CheckpointError, IngestionError
from .metrics import ms_ssim, psnr


@dataclass(frozen=True)
class RDPoint:
    """One rate-distortion measurement averaged over a test split.

    ``rate`` is the model-accounted bpp on the bitstream path and the
    channel-use rate r on the JSCC path; ``actual_bpp`` is the achieved
    bitstream size (NaN on the JSCC path).
    """

    label: str
    pipeline: str
    user: str
    rate: float
    accounting_bpp: float
    actual_bpp: float
    psnr_db: float
    ms_ssim: float
    snr_db: float
    seed: int
    n_images: int


def _pair_metrics(x, x_hat):
    return psnr(x, x_hat), float(ms_ssim(x[None].double(), x_hat[None].double())[0])


def evaluate(model, pairs, label="", seed=0, snr_db=None):
    """RD points (user 1, user 2, mean) of ``model`` on pairs of (n, 3, H, W) tensors.

    Images are processed one pair at a time and reduced in index order, so
    results do not depend on batching.
    """
    x1s, x2s = pairs
    if len(x1s) == 0:
        raise IngestionError("empty test set", [])
    jscc = hasattr(model, "simulate")
    spec = ChannelSpec(snr_db=snr_db if snr_db is not None else 10.0, seed=seed) if jscc else None
    model.eval()
    per_user = {1: [], 2: []}
    for i in range(len(x1s)):
        x1, x2 = x1s[i:i + 1], x2s[i:i + 1]
        if jscc:
            spec_i = ChannelSpec(spec.snr_db, spec.power, seed * 1_000_003 + i, spec.snr_db_user2)
            h1, h2, rates, _, _ = model.simulate(x1, x2, spec_i)
            rows = {u: (rates[0][f"r{u}"], float("nan"), float("nan")) for u in (1, 2)}
        else:
            b1, b2, acct = model.compress(x1, x2)
            h1, h2 = model.decompress(b1, b2)
            rows = {u: (acct[f"accounting_bpp{u}"], acct[f"accounting_bpp{u}"], acct[f"actual_bpp{u}"]) for u in (1, 2)}
        for u, x, xh in ((1, x1, h1), (2, x2, h2)):
            p, m = _pair_metrics(x[0], xh[0])
            per_user[u].append(rows[u] + (p, m))
    pipeline = "ntscc" if jscc else "ntsc"
    snr = float(spec.snr_db) if jscc else float("nan")
    points = []
    for user, data in (("1", per_user[1]), ("2", per_user[2]), ("mean", per_user[1] + per_user[2])):
        a = np.asarray(data, dtype=np.float64).mean(0)
        points.append(RDPoint(label, pipeline, user, float(a[0]), float(a[1]), float(a[2]), float(a[3]),
                              float(a[4]), snr, int(seed), len(x1s)))
    return points


def evaluate_sweep(checkpoints, pairs, seed=0, snr_db=None, label=None):
    """Evaluate every checkpoint of a sweep; a missing file fails with its sweep point named.

    Points are labelled ``label`` (one curve) or, when omitted, by checkpoint stem.
    """
    from ..models import DistributedCodec

    points = []
    for i, path in enumerate(checkpoints):
        if not Path(path).exists():
            raise CheckpointError(f"sweep point {i}: checkpoint {path} not found")
        model = DistributedCodec.load(path)
        points.extend(evaluate(model, pairs, label=label or Path(path).stem, seed=seed, snr_db=snr_db))
    return points


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def points_csv(points, path=None):
    names = [f.name for f in fields(RDPoint)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for p in points:
        w.writerow([_fmt(getattr(p, n)) for n in names])
    if path is not None:
        Path(path).write_text(buf.getvalue())
    return buf.getvalue()


def points_json(points, path=None):
    text = json.dumps([asdict(p) for p in points], indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_points(path):
    types = {f.name: f.type for f in fields(RDPoint)}
    conv = {"float": float, "int": int, "str": str, float: float, int: int, str: str}
    with open(path, newline="") as fh:
        return [RDPoint(**{k: conv[types[k]](v) for k, v in row.items()}) for row in csv.DictReader(fh)]


def plot(points, path, metric="psnr_db", title=""):
    """RD figure (one line per label, mean user) written reproducibly to PNG/SVG/PDF."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "dntsc", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
        series = {}
        for p in points:
            if p.user == "mean":
                series.setdefault(p.label, []).append(p)
        for key in sorted(series):
            pts = sorted(series[key], key=lambda p: p.rate)
            ax.plot([p.rate for p in pts], [getattr(p, metric) for p in pts], marker="o", label=key)
        rate_kind = "r (channel uses / dim)" if points and points[0].pipeline == "ntscc" else "bpp"
        ax.set_xlabel(rate_kind)
        ax.set_ylabel("PSNR (dB)" if metric == "psnr_db" else metric)
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if series:
            ax.legend()
        fmt = path.suffix.lstrip(".").lower() or "png"
        meta = {"png": {"Software": None}, "svg": {"Date": None, "Creator": None},
                "pdf": {"CreationDate": None, "ModDate": None, "Producer": None, "Creator": None}}.get(fmt, {})
        fig.savefig(path, format=fmt, metadata=meta)
        plt.close(fig)
    return path


def param_count(model):
    """Parameter counts per top-level module plus the total (FLOPs are not counted)."""
    table = {name: sum(p.numel() for p in child.parameters()) for name, child in model.named_children()}
    table["total"] = sum(p.numel() for p in model.parameters())
    return table


def match_rate_at_psnr(points_a, points_b, tol_db=0.1):
    """Percent bpp saving of curve ``a`` over curve ``b`` at each point of ``a``.

    Curve ``b`` is interpolated linearly in (PSNR, log bpp). A point is
    reported as None when its PSNR lies more than ``tol_db`` outside ``b``'s
    PSNR range.
    """
    b = sorted(points_b, key=lambda p: p.psnr_db)
    bp = np.array([p.psnr_db for p in b])
    br = np.log(np.array([p.rate for p in b]))
    out = []
    for p in points_a:
        if p.psnr_db < bp[0] - tol_db or p.psnr_db > bp[-1] + tol_db:
            out.append(None)
            continue
        if len(b) == 1:
            ref = br[0]
        else:
            q = float(np.clip(p.psnr_db, bp[0], bp[-1]))
            ref = float(np.interp(q, bp, br))
            if p.psnr_db != q:
                j = (0, 1) if p.psnr_db < bp[0] else (-2, -1)
                slope = (br[j[1]] - br[j[0]]) / max(bp[j[1]] - bp[j[0]], 1e-12)
                ref += slope * (p.psnr_db - q)
        out.append(100.0 * (1.0 - p.rate / float(np.exp(ref))))
    return out

"""scikit-learn style wrappers around the two pipelines.

``X`` is an array of stereo pairs shaped (n, 2, H, W, 3) with values in
[0, 1] and H, W divisible by 16.
"""

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._rounding import round_half_away
from ._validation import check_pairs
from .channel import ChannelSpec
from .exceptions import ShapeError
from .harness.evaluate import evaluate
from .harness.metrics import psnr
from .jscc import DEFAULT_BANDWIDTHS
from .models import NTSCCSystem, NTSCSystem, SystemOptions
from .quant_coding import Bitstream
from .training import TrainConfig, train
from .transforms import TransformConfig

_PRESETS = {"micro": TransformConfig.micro, "desk": TransformConfig.desk, "full": TransformConfig.full}


def _tensors(X):
    X = check_pairs(X)
    t = torch.as_tensor(X.transpose(0, 1, 4, 2, 3), dtype=torch.float32)
    return t[:, 0].contiguous(), t[:, 1].contiguous()


def _images(x):
    return x.detach().double().numpy().transpose(0, 2, 3, 1)


class _PairCodec(BaseEstimator, TransformerMixin):
    _kind = "ntsc"

    def _options(self):
        raise NotImplementedError

    def _train_config(self):
        return TrainConfig(pipeline=self._kind, epochs=self.epochs, batch_size=self.batch_size, lr_init=self.lr_init,
                           lr_final=self.lr_final, seed=self.random_state, weight=self.weight,
                           distortion_kind=self.distortion, **self._extra_train())

    def _extra_train(self):
        return {}

    def fit(self, X, y=None):
        X = check_pairs(X)
        x1, x2 = _tensors(X)
        cfg = _PRESETS[self.preset](seed=self.random_state)
        cls = NTSCSystem if self._kind == "ntsc" else NTSCCSystem
        self.model_ = cls(cfg, self._options())
        self.history_ = train(self._train_config(), self.model_, (x1, x2)).log
        self.image_shape_ = tuple(X.shape[2:])
        return self

    def _check_shape(self, X):
        X = check_pairs(X)
        if tuple(X.shape[2:]) != self.image_shape_:
            raise ShapeError(f"expected pairs of {self.image_shape_}, got {tuple(X.shape[2:])}")
        return X

    def predict(self, X):
        """Reconstructions (n, 2, H, W, 3)."""
        return self.inverse_transform(self.transform(X))

    def score(self, X, y=None):
        """Mean PSNR in dB over both users."""
        X = self._check_shape(X)
        R = self.predict(X)
        return float(np.mean([psnr(X[i, u], R[i, u]) for i in range(len(X)) for u in (0, 1)]))

    def rd_points(self, X, label=""):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, _tensors(self._check_shape(X)), label=label, seed=self.random_state,
                        **self._eval_kwargs())

    def _eval_kwargs(self):
        return {}


class DistributedNTSC(_PairCodec):
    """Two-user learned codec with separate source/channel coding.

    ``transform`` returns an object array (n, 2) of serialized bitstreams;
    ``inverse_transform`` decodes them jointly.
    """

    _kind = "ntsc"

    def __init__(self, preset="desk", K=1, joint_hyper=True, side_info=True, weight=64.0, distortion="mse",
                 epochs=10, batch_size=2, lr_init=1e-4, lr_final=1e-6, random_state=0):
        self.preset = preset
        self.K = K
        self.joint_hyper = joint_hyper
        self.side_info = side_info
        self.weight = weight
        self.distortion = distortion
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.lr_final = lr_final
        self.random_state = random_state

    def _options(self):
        return SystemOptions("ntsc", self.K, self.joint_hyper, self.side_info)

    def transform(self, X):
        check_is_fitted(self, "model_")
        x1, x2 = _tensors(self._check_shape(X))
        out = np.empty((len(x1), 2), dtype=object)
        self.accounting_ = []
        for i in range(len(x1)):
            b1, b2, acct = self.model_.compress(x1[i:i + 1], x2[i:i + 1])
            out[i, 0], out[i, 1] = b1.tobytes(), b2.tobytes()
            self.accounting_.append(acct)
        return out

    def inverse_transform(self, codes):
        check_is_fitted(self, "model_")
        rows = []
        for b1, b2 in np.asarray(codes, dtype=object).reshape(-1, 2):
            h1, h2 = self.model_.decompress(Bitstream.frombytes(b1), Bitstream.frombytes(b2))
            rows.append(np.stack([_images(h1)[0], _images(h2)[0]]))
        return np.stack(rows)


class DistributedNTSCC(_PairCodec):
    """Two-user deep JSCC over AWGN links.

    ``transform`` returns the noisy received latents, as reconstructed
    images cannot be separated from the channel realization;
    ``inverse_transform`` maps them to images.
    """

    _kind = "ntscc"

    def __init__(self, preset="desk", K=1, side_info=True, snr_db=10.0, eta=1.0, bandwidths=DEFAULT_BANDWIDTHS,
                 weight=64.0, distortion="mse", epochs=10, batch_size=2, lr_init=1e-4, lr_final=1e-6,
                 random_state=0):
        self.preset = preset
        self.K = K
        self.side_info = side_info
        self.snr_db = snr_db
        self.eta = eta
        self.bandwidths = bandwidths
        self.weight = weight
        self.distortion = distortion
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.lr_final = lr_final
        self.random_state = random_state

    def _options(self):
        return SystemOptions("ntscc", self.K, True, self.side_info, tuple(self.bandwidths), self.eta)

    def _extra_train(self):
        return {"snr_db": self.snr_db, "eta": self.eta}

    def _eval_kwargs(self):
        return {"snr_db": self.snr_db}

    @torch.no_grad()
    def transform(self, X):
        check_is_fitted(self, "model_")
        x1, x2 = _tensors(self._check_shape(X))
        m = self.model_
        spec = ChannelSpec(self.snr_db, seed=self.random_state)
        y1, y2 = m.analysis(x1, 1), m.analysis(x2, 2)
        zb1, zb2 = round_half_away(m.hyper_analysis(y1, 1)), round_half_away(m.hyper_analysis(y2, 2))
        y1h, y2h, tx, _, _ = m.transmit(y1, y2, zb1, zb2, spec, (spec.generator(1), spec.generator(2)))
        self.plans_ = tx
        return np.stack([y1h.numpy(), y2h.numpy()], 1)

    @torch.no_grad()
    def inverse_transform(self, latents):
        check_is_fitted(self, "model_")
        lat = torch.as_tensor(np.asarray(latents), dtype=torch.float32)
        h1, h2, _ = self.model_.reconstruct(lat[:, 0], lat[:, 1])
        return np.stack([_images(h1), _images(h2)], 1)
